//! Discrete hidden Markov models embedded in a three-variable latent-class
//! model: the hidden state `Z_k` in the middle of a window of `2k + 1`
//! observations separates the `k` past observations, the `k` future ones
//! and `X_k` itself.
//!
//! Column order of the past block `B1` follows the recursion
//! `B1 = A'(B (x)row B1')`: the digit of `X_{k-1}` is most significant and
//! `X_0` varies fastest. The future block `B2` has `X_{k+1}` most
//! significant and `X_{2k}` fastest.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::latent_class::{Certificate, CertificateMode};
use crate::linalg;
use crate::recovery::{best_permutation, decompose3, Alignment, DecomposeOptions};
use crate::sample;
use crate::tensor::{
    check_entry_count, khatri_rao, kruskal_rank, max_abs_diff, numerical_rank, triple_product, Matrix,
    ProbabilityVector, StochasticMatrix, Tensor3, ENTRY_CAP, RANK_TOL, ROW_SUM_TOL,
};

/// Gap below which a second eigenvalue counts as another unit eigenvalue.
const UNIT_EIGEN_GAP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HiddenMarkovModel {
    /// Transition matrix, `a[i][j] = P(Z_{n+1} = j | Z_n = i)`.
    pub a: StochasticMatrix,
    /// Emission matrix, `b[i][l] = P(X_n = l | Z_n = i)`.
    pub b: StochasticMatrix,
    /// Stationary initial distribution.
    pub pi: ProbabilityVector,
}

impl HiddenMarkovModel {
    /// Builds the model with `pi` set to the unique stationary distribution of `a`.
    pub fn new(a: StochasticMatrix, b: StochasticMatrix) -> Result<Self> {
        let pi = stationary_distribution(&a)?;
        Self::with_stationary(a, b, pi)
    }

    /// Builds the model with an explicit stationary `pi` (needed when `a`
    /// has several stationary laws, e.g. the identity).
    pub fn with_stationary(a: StochasticMatrix, b: StochasticMatrix, pi: ProbabilityVector) -> Result<Self> {
        let r = a.rows();
        if a.cols() != r || b.rows() != r || pi.len() != r {
            return Err(Error::InvalidModel("transition, emission and pi sizes disagree".into()));
        }
        if b.cols() < 2 {
            return Err(Error::InvalidModel("need at least 2 observed states".into()));
        }
        check_stationary(&a, &pi)?;
        Ok(Self { a, b, pi })
    }

    pub fn r(&self) -> usize {
        self.a.rows()
    }

    pub fn kappa(&self) -> usize {
        self.b.cols()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, r: usize, kappa: usize) -> Self {
        loop {
            let a = sample::stochastic_matrix(rng, r, r);
            let b = sample::stochastic_matrix(rng, r, kappa);
            if let Ok(hmm) = Self::new(a, b) {
                return hmm;
            }
        }
    }
}

fn check_stationary(a: &Matrix, pi: &[f64]) -> Result<()> {
    let r = a.rows();
    for j in 0..r {
        let s: f64 = (0..r).map(|i| pi[i] * a.get(i, j)).sum();
        if (s - pi[j]).abs() > ROW_SUM_TOL {
            return Err(Error::NotStationary);
        }
    }
    Ok(())
}

/// The probability vector `pi` with `pi A = pi`, required to be unique.
pub fn stationary_distribution(a: &StochasticMatrix) -> Result<ProbabilityVector> {
    let r = a.rows();
    if a.cols() != r {
        return Err(Error::DimensionMismatch("transition matrix must be square".into()));
    }
    let eig = linalg::to_dm(a).schur().complex_eigenvalues();
    let unit = eig.iter().filter(|z| (z.re - 1.0).hypot(z.im) <= UNIT_EIGEN_GAP).count();
    if unit != 1 {
        return Err(Error::NonUniqueStationary);
    }
    let mut shifted = a.transpose();
    for i in 0..r {
        shifted.set(i, i, shifted.get(i, i) - 1.0);
    }
    let v = linalg::smallest_right_singular_vector(&shifted);
    let s: f64 = v.iter().sum();
    let pi: Vec<f64> = v.iter().map(|x| x / s).collect();
    if pi.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidModel("stationary distribution has empty states".into()));
    }
    ProbabilityVector::new(pi)
}

/// Transition matrix of the reversed chain, `A'(i, j) = pi_j A(j, i) / pi_i`.
pub fn time_reversal(a: &Matrix, pi: &[f64]) -> Result<StochasticMatrix> {
    let r = a.rows();
    if a.cols() != r || pi.len() != r || pi.iter().any(|&p| p <= 0.0) {
        return Err(Error::NotStationary);
    }
    check_stationary(a, pi)?;
    let mut out = Matrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            out.set(i, j, pi[j] * a.get(j, i) / pi[i]);
        }
    }
    StochasticMatrix::new(out)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Smallest `k >= 1` with `C(k + kappa - 1, kappa - 1) >= r`; the window
/// then spans `2k + 1` consecutive observations.
pub fn min_window(r: usize, kappa: usize) -> usize {
    assert!(r >= 1 && kappa >= 2);
    let mut k = 1;
    while binomial(k + kappa - 1, kappa - 1) < r as u128 {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalBlocks {
    pub k: usize,
    /// `P(X_0..X_{k-1} | Z_k)`, `r x kappa^k`.
    pub b1: StochasticMatrix,
    /// `P(X_{k+1}..X_{2k} | Z_k)`, `r x kappa^k`.
    pub b2: StochasticMatrix,
    /// Reversed-chain transition matrix.
    pub a_rev: StochasticMatrix,
}

fn nest(step: &Matrix, b: &Matrix, k: usize) -> Result<Matrix> {
    let mut acc = step.matmul(b)?;
    for _ in 1..k {
        acc = step.matmul(&khatri_rao(&[b, &acc])?)?;
    }
    Ok(acc)
}

pub fn conditional_blocks(hmm: &HiddenMarkovModel, k: usize) -> Result<ConditionalBlocks> {
    if k == 0 {
        return Err(Error::InvalidModel("window half-length must be at least 1".into()));
    }
    let width = (hmm.kappa() as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if width.saturating_mul(hmm.r() as u128) > ENTRY_CAP as u128 {
        return Err(Error::TooLarge { entries: width.saturating_mul(hmm.r() as u128), cap: ENTRY_CAP });
    }
    let a_rev = time_reversal(&hmm.a, &hmm.pi)?;
    let b1 = StochasticMatrix::new(nest(&a_rev, &hmm.b, k)?)?;
    let b2 = StochasticMatrix::new(nest(&hmm.a, &hmm.b, k)?)?;
    Ok(ConditionalBlocks { k, b1, b2, a_rev })
}

/// Exact-matrix certificate: holds when both blocks have full row rank `r`
/// and `B` has Kruskal rank at least 2.
pub fn hmm_certificate(hmm: &HiddenMarkovModel, k: usize, tol: f64) -> Result<Certificate> {
    let blocks = conditional_blocks(hmm, k)?;
    let r = hmm.r();
    let ranks = [kruskal_rank(&blocks.b1, tol)?, kruskal_rank(&blocks.b2, tol)?, kruskal_rank(&hmm.b, tol)?];
    let mut cert = Certificate::from_ranks(r, ranks, CertificateMode::ExactMatrix);
    cert.holds = numerical_rank(&blocks.b1, tol)? == r && numerical_rank(&blocks.b2, tol)? == r && ranks[2] >= 2;
    Ok(cert)
}

/// Joint law of (past block, future block, `X_k`).
pub fn window_tensor(hmm: &HiddenMarkovModel, k: usize) -> Result<Tensor3> {
    let blocks = conditional_blocks(hmm, k)?;
    check_entry_count(&[blocks.b1.cols(), blocks.b2.cols(), hmm.kappa()], ENTRY_CAP)?;
    triple_product(&blocks.b1.scale_rows(&hmm.pi), &blocks.b2, &hmm.b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HmmRecovery {
    pub model: HiddenMarkovModel,
    /// Max-abs difference between the input and the recovered model's window tensor.
    pub residual: f64,
    pub retries_used: usize,
}

/// Recovers `(A, B, pi)` up to relabeling of hidden states from an exact
/// window tensor.
pub fn recover_hmm(t: &Tensor3, r: usize, kappa: usize, k: usize, opts: &DecomposeOptions) -> Result<HmmRecovery> {
    let width = (kappa as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if k == 0 || t.dims() != [width as usize, width as usize, kappa] {
        return Err(Error::DimensionMismatch(format!(
            "tensor dims {:?} do not match a window with kappa = {kappa}, k = {k}",
            t.dims()
        )));
    }
    let rec = decompose3(t, r, opts)?;
    let [_, pb2, pb] = &rec.factors;

    // drop the fastest digit (X_{2k}) of the future block
    let inner = width as usize / kappa;
    let mut m = Matrix::zeros(r, inner);
    for i in 0..r {
        for c in 0..pb2.cols() {
            let j = c / kappa;
            m.set(i, j, m.get(i, j) + pb2.get(i, c));
        }
    }
    let g = khatri_rao(&[pb.as_matrix(), &m])?;
    let rank = numerical_rank(&g, RANK_TOL)?;
    if rank < r {
        return Err(Error::IllConditioned { found: rank, expected: r });
    }
    let a = linalg::lstsq_right(&g, pb2, RANK_TOL)?;
    let solve_residual = max_abs_diff(a.matmul(&g)?.data(), pb2.data());
    let row_err = a.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    if solve_residual > opts.tol || row_err > opts.tol {
        return Err(Error::ResidualExceeded { residual: solve_residual.max(row_err), tol: opts.tol });
    }
    let a = StochasticMatrix::normalized(a, opts.tol)?;
    let model = HiddenMarkovModel::with_stationary(a, pb.clone(), rec.pi.clone())?;
    let residual = t.max_abs_diff(&window_tensor(&model, k)?);
    if residual > opts.tol {
        return Err(Error::ResidualExceeded { residual, tol: opts.tol });
    }
    Ok(HmmRecovery { model, residual, retries_used: rec.retries_used })
}

/// Hidden-state relabeling minimizing the max-abs difference over
/// `pi`, `B` and `A` (rows and columns permuted together).
pub fn align_hmm(recovered: &HiddenMarkovModel, reference: &HiddenMarkovModel) -> Result<Alignment> {
    if recovered.r() != reference.r() || recovered.kappa() != reference.kappa() {
        return Err(Error::DimensionMismatch("models differ in shape".into()));
    }
    let r = reference.r();
    Ok(best_permutation(r, |perm| {
        let mut err: f64 = 0.0;
        for k in 0..r {
            let i = perm[k];
            err = err.max((recovered.pi[i] - reference.pi[k]).abs());
            err = err.max(max_abs_diff(recovered.b.row(i), reference.b.row(k)));
            for l in 0..r {
                err = err.max((recovered.a.get(i, perm[l]) - reference.a.get(k, l)).abs());
            }
        }
        err
    }))
}
