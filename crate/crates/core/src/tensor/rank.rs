use itertools::Itertools;

use super::{Matrix, KRUSKAL_ROW_CAP};
use crate::error::{Error, Result};
use crate::linalg;

fn check_finite(m: &Matrix) -> Result<()> {
    if m.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntries);
    }
    Ok(())
}

/// Number of singular values above `tol * sigma_1 * max(rows, cols)`.
pub fn numerical_rank(m: &Matrix, tol: f64) -> Result<usize> {
    check_finite(m)?;
    let sigma = linalg::singular_values(m);
    let s1 = sigma.first().copied().unwrap_or(0.0);
    if s1 == 0.0 {
        return Ok(0);
    }
    let thresh = tol * s1 * m.rows().max(m.cols()) as f64;
    Ok(sigma.iter().filter(|&&s| s > thresh).count())
}

/// Kruskal rank with the default row cap.
pub fn kruskal_rank(m: &Matrix, tol: f64) -> Result<usize> {
    kruskal_rank_capped(m, tol, KRUSKAL_ROW_CAP)
}

/// Largest `I` such that every set of `I` rows is linearly independent,
/// found by enumerating row subsets of increasing size.
pub fn kruskal_rank_capped(m: &Matrix, tol: f64, cap: usize) -> Result<usize> {
    check_finite(m)?;
    let n = m.rows();
    if n > cap {
        return Err(Error::TooManyRows { rows: n, cap });
    }
    // all rows independent implies every subset is
    if numerical_rank(m, tol)? == n {
        return Ok(n);
    }
    for size in 1..=n {
        for subset in (0..n).combinations(size) {
            if numerical_rank(&m.select_rows(&subset), tol)? < size {
                return Ok(size - 1);
            }
        }
    }
    Ok(n)
}

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// `r x |values|` matrix with entry `(i, j) = values[j]^i`.
pub fn vandermonde_witness(r: usize, values: &[f64]) -> Result<Matrix> {
    if values.is_empty() || r == 0 {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DuplicateValues);
    }
    for (a, b) in values.iter().tuple_combinations() {
        if a == b {
            return Err(Error::DuplicateValues);
        }
    }
    let mut m = Matrix::zeros(r, values.len());
    for (j, &v) in values.iter().enumerate() {
        let mut x = 1.0;
        for i in 0..r {
            m.set(i, j, x);
            x *= v;
        }
    }
    Ok(m)
}
