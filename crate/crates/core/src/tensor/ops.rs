use super::{check_entry_count, digits_of, Matrix, StochasticMatrix, Tensor3, TensorP, Tripartition, ENTRY_CAP, ROW_SUM_TOL};
use crate::error::{Error, Result};

/// Row-wise tensor (Khatri-Rao) product. Row `i` of the result is the
/// flattened outer product of the `i`-th rows of the factors, with the last
/// factor's column index varying fastest.
pub fn khatri_rao<M: AsRef<Matrix>>(factors: &[M]) -> Result<Matrix> {
    let first = factors.first().ok_or(Error::EmptyInput)?.as_ref();
    let r = first.rows();
    for f in factors {
        if f.as_ref().rows() != r {
            return Err(Error::MismatchedRows(r, f.as_ref().rows()));
        }
    }
    let col_dims: Vec<usize> = factors.iter().map(|f| f.as_ref().cols()).collect();
    let cols = check_entry_count(&col_dims, ENTRY_CAP)?;
    check_entry_count(&[r, cols], ENTRY_CAP)?;

    let mut data = Vec::with_capacity(r * cols);
    let mut acc: Vec<f64> = Vec::with_capacity(cols);
    let mut next: Vec<f64> = Vec::with_capacity(cols);
    for i in 0..r {
        acc.clear();
        acc.extend_from_slice(first.row(i));
        for f in &factors[1..] {
            let row = f.as_ref().row(i);
            next.clear();
            for &a in &acc {
                next.extend(row.iter().map(|&b| a * b));
            }
            std::mem::swap(&mut acc, &mut next);
        }
        data.extend_from_slice(&acc);
    }
    Matrix::new(r, cols, data)
}

/// Kronecker product.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let (ra, ca, rb, cb) = (a.rows(), a.cols(), b.rows(), b.cols());
    check_entry_count(&[ra, rb, ca, cb], ENTRY_CAP)?;
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let x = a.get(i, j);
            for k in 0..rb {
                for l in 0..cb {
                    out.set(i * rb + k, j * cb + l, x * b.get(k, l));
                }
            }
        }
    }
    Ok(out)
}

/// `[M1, M2, M3]`: entry `(u, v, w)` is `sum_i M1(i,u) M2(i,v) M3(i,w)`.
pub fn triple_product(m1: &Matrix, m2: &Matrix, m3: &Matrix) -> Result<Tensor3> {
    let r = m1.rows();
    for m in [m2, m3] {
        if m.rows() != r {
            return Err(Error::MismatchedRows(r, m.rows()));
        }
    }
    let dims = [m1.cols(), m2.cols(), m3.cols()];
    check_entry_count(&dims, ENTRY_CAP)?;
    let mut t = Tensor3::zeros(dims);
    for i in 0..r {
        let (a, b, c) = (m1.row(i), m2.row(i), m3.row(i));
        for (u, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (v, &y) in b.iter().enumerate() {
                let xy = x * y;
                if xy == 0.0 {
                    continue;
                }
                for (w, &z) in c.iter().enumerate() {
                    *t.get_mut(u, v, w) += xy * z;
                }
            }
        }
    }
    Ok(t)
}

/// Inverts [`khatri_rao`] on stochastic factors by summing each row over
/// all composite columns sharing a digit.
pub fn unclump(a: &Matrix, col_dims: &[usize]) -> Result<Vec<StochasticMatrix>> {
    if col_dims.is_empty() {
        return Err(Error::EmptyInput);
    }
    if col_dims.iter().product::<usize>() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "column dims {col_dims:?} do not multiply to {}",
            a.cols()
        )));
    }
    let mut factors: Vec<Matrix> = col_dims.iter().map(|&d| Matrix::zeros(a.rows(), d)).collect();
    for c in 0..a.cols() {
        let digits = digits_of(c, col_dims);
        for i in 0..a.rows() {
            let x = a.get(i, c);
            for (f, &d) in factors.iter_mut().zip(&digits) {
                let cur = f.get(i, d);
                f.set(i, d, cur + x);
            }
        }
    }
    let rebuilt = khatri_rao(&factors)?;
    let residual = rebuilt.max_abs_diff(a);
    if residual > ROW_SUM_TOL {
        return Err(Error::NotKhatriRao(residual));
    }
    factors
        .into_iter()
        .map(|f| StochasticMatrix::new(f).map_err(|_| Error::NotKhatriRao(residual)))
        .collect()
}

/// Regroups the axes of a p-way table into three composite axes.
pub fn clump_tensor(t: &TensorP, tri: &Tripartition) -> Result<Tensor3> {
    let dims = t.dims();
    let tri = Tripartition::new(tri.blocks.clone(), dims.len())?;
    let cd = tri.clumped_dims(dims);
    let mut out = Tensor3::zeros(cd);
    let block_dims: Vec<Vec<usize>> = tri.blocks.iter().map(|b| b.iter().map(|&j| dims[j]).collect()).collect();
    for (flat, &x) in t.data().iter().enumerate() {
        let digits = digits_of(flat, dims);
        let mut idx = [0usize; 3];
        for (k, block) in tri.blocks.iter().enumerate() {
            idx[k] = block.iter().zip(&block_dims[k]).fold(0, |acc, (&j, &d)| acc * d + digits[j]);
        }
        *out.get_mut(idx[0], idx[1], idx[2]) = x;
    }
    Ok(out)
}
