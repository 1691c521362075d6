//! Parameter recovery from exact three-way probability tensors.
//!
//! [`decompose3`] runs Jennrich-style simultaneous diagonalization: two
//! random mixtures of the frontal slices share the first-mode factor as
//! eigenvectors, the rest follows from one linear solve. It needs the first
//! two factors to have full row rank `r` and the third to have Kruskal rank
//! at least 2; outside that region it reports an error instead of guessing.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_class::{joint_distribution, LatentClassModel};
use crate::linalg;
use crate::sample::trial_seed;
use crate::tensor::{
    clump_tensor, max_abs_diff, numerical_rank, triple_product, unclump, Matrix, ProbabilityVector, StochasticMatrix,
    Tensor3, TensorP, Tripartition, RANK_TOL, ROW_SUM_TOL,
};

/// Eigenvalue ratios closer than this (relative to their magnitude) count as colliding.
const SPECTRAL_GAP_TOL: f64 = 1e-6;
/// Largest `r` aligned by exhaustive permutation search.
pub const EXHAUSTIVE_ALIGN_MAX_R: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeOptions {
    pub seed: u64,
    pub tol: f64,
    pub max_retries: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self { seed: 0, tol: 1e-8, max_retries: 20 }
    }
}

impl DecomposeOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveredFactors {
    pub pi: ProbabilityVector,
    pub factors: [StochasticMatrix; 3],
    /// Max-abs difference between the input and the rebuilt tensor.
    pub residual: f64,
    pub retries_used: usize,
}

impl RecoveredFactors {
    pub fn rebuild(&self) -> Result<Tensor3> {
        triple_product(&self.factors[0].scale_rows(&self.pi), &self.factors[1], &self.factors[2])
    }

    /// Relabels classes: new class `k` is old class `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pi = ProbabilityVector::new(perm.iter().map(|&k| self.pi[k]).collect())?;
        let f = |m: &StochasticMatrix| StochasticMatrix::new(m.select_rows(perm));
        Ok(Self {
            pi,
            factors: [f(&self.factors[0])?, f(&self.factors[1])?, f(&self.factors[2])?],
            residual: self.residual,
            retries_used: self.retries_used,
        })
    }
}

/// Class labelling that best matches a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `permutation[k]` is the recovered class matched to reference class `k`.
    pub permutation: Vec<usize>,
    pub max_abs_error: f64,
}

/// Exhaustive search over all permutations of `0..r` minimizing `cost`.
pub fn best_permutation(r: usize, cost: impl Fn(&[usize]) -> f64) -> Alignment {
    let mut best = Alignment { permutation: (0..r).collect(), max_abs_error: f64::INFINITY };
    for perm in (0..r).permutations(r) {
        let c = cost(&perm);
        if c < best.max_abs_error {
            best = Alignment { permutation: perm, max_abs_error: c };
        }
    }
    best
}

/// Aligns per-class parameter profiles (all parameters of a class laid out
/// as one vector). Exhaustive for `r <= 8`, greedy closest-pair otherwise.
pub fn align_profiles(recovered: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Alignment> {
    let r = reference.len();
    if recovered.len() != r || recovered.iter().zip(reference).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::DimensionMismatch("profiles differ in shape".into()));
    }
    let dist: Vec<Vec<f64>> =
        reference.iter().map(|b| recovered.iter().map(|a| max_abs_diff(a, b)).collect()).collect();
    if r <= EXHAUSTIVE_ALIGN_MAX_R {
        return Ok(best_permutation(r, |perm| perm.iter().enumerate().map(|(k, &i)| dist[k][i]).fold(0.0, f64::max)));
    }
    let mut pairs: Vec<(usize, usize)> = (0..r).cartesian_product(0..r).collect();
    pairs.sort_by(|&(k1, i1), &(k2, i2)| dist[k1][i1].total_cmp(&dist[k2][i2]));
    let mut perm = vec![usize::MAX; r];
    let mut used = vec![false; r];
    for (k, i) in pairs {
        if perm[k] == usize::MAX && !used[i] {
            perm[k] = i;
            used[i] = true;
        }
    }
    let err = perm.iter().enumerate().map(|(k, &i)| dist[k][i]).fold(0.0, f64::max);
    Ok(Alignment { permutation: perm, max_abs_error: err })
}

fn factor_profiles(pi: &[f64], factors: &[&Matrix]) -> Vec<Vec<f64>> {
    (0..pi.len())
        .map(|i| {
            let mut v = vec![pi[i]];
            for f in factors {
                v.extend_from_slice(f.row(i));
            }
            v
        })
        .collect()
}

/// Finds the label permutation minimizing the max-abs parameter difference
/// between recovered factors and a reference `(pi, factors)`.
pub fn align_permutation(recovered: &RecoveredFactors, ref_pi: &[f64], ref_factors: &[&Matrix; 3]) -> Result<Alignment> {
    for (a, b) in recovered.factors.iter().zip(ref_factors) {
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(Error::DimensionMismatch("factor shapes differ".into()));
        }
    }
    let rec: Vec<&Matrix> = recovered.factors.iter().map(|f| f.as_matrix()).collect();
    align_profiles(&factor_profiles(&recovered.pi, &rec), &factor_profiles(ref_pi, ref_factors))
}

/// Aligns a recovered latent-class model with a reference model.
pub fn align_models(recovered: &LatentClassModel, reference: &LatentClassModel) -> Result<Alignment> {
    if recovered.r() != reference.r() || recovered.kappas() != reference.kappas() {
        return Err(Error::DimensionMismatch("models differ in shape".into()));
    }
    let a: Vec<&Matrix> = recovered.emissions().iter().map(|m| m.as_matrix()).collect();
    let b: Vec<&Matrix> = reference.emissions().iter().map(|m| m.as_matrix()).collect();
    align_profiles(&factor_profiles(recovered.pi(), &a), &factor_profiles(reference.pi(), &b))
}

/// Orders classes by descending weight, ties broken by the first factor's rows.
pub fn canonicalize(rec: &RecoveredFactors) -> Result<RecoveredFactors> {
    let mut order: Vec<usize> = (0..rec.pi.len()).collect();
    order.sort_by(|&a, &b| {
        rec.pi[b].total_cmp(&rec.pi[a]).then_with(|| {
            let (ra, rb) = (rec.factors[0].row(a), rec.factors[0].row(b));
            ra.iter().zip(rb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    rec.permuted(&order)
}

/// Recovers `(pi, M1, M2, M3)` from `T = [diag(pi) M1, M2, M3]`.
pub fn decompose3(t: &Tensor3, r: usize, opts: &DecomposeOptions) -> Result<RecoveredFactors> {
    let [k1, k2, k3] = t.dims();
    if r == 0 {
        return Err(Error::PreconditionUnmet("r must be positive".into()));
    }
    if k1 < r || k2 < r {
        return Err(Error::PreconditionUnmet(format!("first two modes have sizes ({k1}, {k2}) below r = {r}")));
    }
    if !t.is_distribution(ROW_SUM_TOL) {
        return Err(Error::PreconditionUnmet("input is not a probability tensor".into()));
    }

    let pair = t.contract_third(&vec![1.0; k3]);
    let rank = numerical_rank(&pair, RANK_TOL)?;
    if rank < r {
        return Err(Error::RankDeficient { found: rank, expected: r });
    }
    let u = linalg::leading_left_vectors(&pair, r);
    let v = linalg::leading_left_vectors(&pair.transpose(), r);
    let project = |m: &Matrix| u.transpose() * linalg::to_dm(m) * &v;

    for attempt in 0..=opts.max_retries {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(opts.seed, attempt as u64));
        let a: Vec<f64> = (0..k3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k3).map(|_| rng.gen_range(0.5..1.5)).collect();
        let ta = project(&t.contract_third(&a));
        let tb = project(&t.contract_third(&b));
        let Some(tb_inv) = tb.try_inverse() else { continue };
        let w: DMatrix<f64> = ta * tb_inv;
        let Some(mut evals) = linalg::real_eigenvalues(&w) else { continue };
        evals.sort_by(f64::total_cmp);
        let scale = evals.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        if evals.windows(2).any(|p| (p[1] - p[0]) <= SPECTRAL_GAP_TOL * scale) {
            continue;
        }
        let mut m1 = Matrix::zeros(r, k1);
        let mut ok = true;
        for (i, &lambda) in evals.iter().enumerate() {
            let x = nalgebra::DVector::from_vec(linalg::eigenvector(&w, lambda));
            let col = &u * x;
            let s: f64 = col.iter().sum();
            if s.abs() <= f64::EPSILON * col.iter().map(|c| c.abs()).sum::<f64>().max(1.0) {
                ok = false;
                break;
            }
            for (j, c) in col.iter().enumerate() {
                m1.set(i, j, c / s);
            }
        }
        if !ok {
            continue;
        }
        return finish(t, r, m1, attempt, opts.tol);
    }
    Err(Error::DegenerateSpectrum(opts.max_retries + 1))
}

/// Given the first-mode factor, solves for the weighted rank-1 slices of the
/// remaining two modes and splits them into `pi`, `M2`, `M3`.
fn finish(t: &Tensor3, r: usize, m1: Matrix, attempt: usize, tol: f64) -> Result<RecoveredFactors> {
    let [_, k2, k3] = t.dims();
    let m1 = StochasticMatrix::normalized(m1, tol)?;
    let slices = linalg::lstsq(&m1.transpose(), &t.unfold_first(), RANK_TOL)?;
    let mut pi = vec![0.0; r];
    let mut m2 = Matrix::zeros(r, k2);
    let mut m3 = Matrix::zeros(r, k3);
    for i in 0..r {
        let row = slices.row(i);
        let w: f64 = row.iter().sum();
        if w < -tol {
            return Err(Error::NegativeWeights(w));
        }
        if w <= tol {
            return Err(Error::PreconditionUnmet(format!("class {} has vanishing weight", i + 1)));
        }
        pi[i] = w;
        for vi in 0..k2 {
            for wi in 0..k3 {
                let x = row[vi * k3 + wi] / w;
                m2.set(i, vi, m2.get(i, vi) + x);
                m3.set(i, wi, m3.get(i, wi) + x);
            }
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    let rec = RecoveredFactors {
        pi: ProbabilityVector::new(pi)?,
        factors: [m1, StochasticMatrix::normalized(m2, tol)?, StochasticMatrix::normalized(m3, tol)?],
        residual: 0.0,
        retries_used: attempt,
    };
    let residual = t.max_abs_diff(&rec.rebuild()?);
    if residual > tol {
        return Err(Error::ResidualExceeded { residual, tol });
    }
    Ok(RecoveredFactors { residual, ..rec })
}

/// A latent-class model recovered from its joint table.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassRecovery {
    pub model: LatentClassModel,
    /// Max-abs difference between the input table and the recovered model's joint.
    pub residual: f64,
    pub retries_used: usize,
}

/// Clumps the `p` variables by `tri`, decomposes the three-way table and
/// splits each clumped factor back into per-variable emission matrices.
pub fn recover_latent_class(
    t: &TensorP,
    r: usize,
    tri: &Tripartition,
    opts: &DecomposeOptions,
) -> Result<LatentClassRecovery> {
    let kappas = t.dims().to_vec();
    let tri = Tripartition::new(tri.blocks.clone(), kappas.len())?;
    let cd = tri.clumped_dims(&kappas);
    if cd[0] < r || cd[1] < r {
        return Err(Error::PreconditionUnmet(format!(
            "clumped dims ({}, {}) of the first two blocks must be at least r = {r}",
            cd[0], cd[1]
        )));
    }
    let clumped = clump_tensor(t, &tri)?;
    let rec = decompose3(&clumped, r, opts)?;
    let mut emissions: Vec<Option<StochasticMatrix>> = vec![None; kappas.len()];
    for (block, factor) in tri.blocks.iter().zip(&rec.factors) {
        let dims: Vec<usize> = block.iter().map(|&j| kappas[j]).collect();
        for (&j, m) in block.iter().zip(unclump(factor, &dims)?) {
            emissions[j] = Some(m);
        }
    }
    let model = LatentClassModel::new(rec.pi.clone(), emissions.into_iter().map(|m| m.expect("covered")).collect())?;
    let residual = max_abs_diff(joint_distribution(&model)?.data(), t.data());
    if residual > opts.tol {
        return Err(Error::ResidualExceeded { residual, tol: opts.tol });
    }
    Ok(LatentClassRecovery { model, residual, retries_used: rec.retries_used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use crate::tensor::Tripartition;

    fn example_model() -> (Vec<f64>, [Matrix; 3]) {
        (
            vec![0.4, 0.6],
            [
                Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap(),
                Matrix::from_rows(&[[0.7, 0.3], [0.3, 0.7]]).unwrap(),
                Matrix::from_rows(&[[0.6, 0.4], [0.1, 0.9]]).unwrap(),
            ],
        )
    }

    fn build(pi: &[f64], f: &[Matrix; 3]) -> Tensor3 {
        triple_product(&f[0].scale_rows(pi), &f[1], &f[2]).unwrap()
    }

    #[test]
    fn rank_one_tensor() {
        let f = [
            Matrix::from_rows(&[[0.2, 0.8]]).unwrap(),
            Matrix::from_rows(&[[0.5, 0.5]]).unwrap(),
            Matrix::from_rows(&[[0.1, 0.3, 0.6]]).unwrap(),
        ];
        let rec = decompose3(&build(&[1.0], &f), 1, &DecomposeOptions::default()).unwrap();
        assert_eq!(&rec.pi[..], &[1.0]);
        for (a, b) in rec.factors.iter().zip(&f) {
            assert!(a.max_abs_diff(b) < 1e-14);
        }
    }

    #[test]
    fn two_class_round_trip() {
        let (pi, f) = example_model();
        let rec = decompose3(&build(&pi, &f), 2, &DecomposeOptions::default()).unwrap();
        let al = align_permutation(&rec, &pi, &[&f[0], &f[1], &f[2]]).unwrap();
        assert!(al.max_abs_error <= 1e-9, "{}", al.max_abs_error);
        assert!(rec.residual <= 1e-12);
    }

    #[test]
    fn reported_residual_matches_independent_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = sample::latent_class(&mut rng, 3, &[4, 4, 3]);
        let e = model.emissions();
        let t = triple_product(&e[0].scale_rows(model.pi()), &e[1], &e[2]).unwrap();
        let rec = decompose3(&t, 3, &DecomposeOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for u in 0..4 {
            for v in 0..4 {
                for w in 0..3 {
                    let mut s = 0.0;
                    for i in 0..3 {
                        s += rec.pi[i] * rec.factors[0].get(i, u) * rec.factors[1].get(i, v) * rec.factors[2].get(i, w);
                    }
                    worst = worst.max((s - t.get(u, v, w)).abs());
                }
            }
        }
        assert!((worst - rec.residual).abs() <= 1e-12);
    }

    #[test]
    fn duplicated_third_factor_rows_are_reported() {
        let (pi, mut f) = example_model();
        f[2] = Matrix::from_rows(&[[0.6, 0.4], [0.6, 0.4]]).unwrap();
        let res = decompose3(&build(&pi, &f), 2, &DecomposeOptions::default());
        assert!(
            matches!(res, Err(Error::DegenerateSpectrum(_)) | Err(Error::ResidualExceeded { .. })),
            "{res:?}"
        );
    }

    #[test]
    fn rank_deficient_and_small_modes() {
        let (pi, mut f) = example_model();
        f[0] = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert!(matches!(
            decompose3(&build(&pi, &f), 2, &DecomposeOptions::default()),
            Err(Error::RankDeficient { found: 1, expected: 2 })
        ));
        let (pi, f) = example_model();
        assert!(matches!(decompose3(&build(&pi, &f), 3, &DecomposeOptions::default()), Err(Error::PreconditionUnmet(_))));
    }

    #[test]
    fn seed_independence_up_to_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for r in 2..=4 {
            let model = sample::latent_class(&mut rng, r, &[r + 1, r, 3]);
            let e = model.emissions();
            let t = triple_product(&e[0].scale_rows(model.pi()), &e[1], &e[2]).unwrap();
            let a = decompose3(&t, r, &DecomposeOptions::with_seed(1)).unwrap();
            let b = decompose3(&t, r, &DecomposeOptions::with_seed(2)).unwrap();
            let al = align_permutation(&a, &b.pi, &[&b.factors[0], &b.factors[1], &b.factors[2]]).unwrap();
            assert!(al.max_abs_error <= 1e-8);
            let (ca, cb) = (canonicalize(&a).unwrap(), canonicalize(&b).unwrap());
            assert!(max_abs_diff(&ca.pi, &cb.pi) <= 1e-8);
            for (x, y) in ca.factors.iter().zip(&cb.factors) {
                assert!(x.max_abs_diff(y) <= 1e-8);
            }
        }
    }

    #[test]
    fn alignment_examples() {
        let (pi, f) = example_model();
        let rec = RecoveredFactors {
            pi: ProbabilityVector::new(pi.clone()).unwrap(),
            factors: f.clone().map(|m| StochasticMatrix::new(m).unwrap()),
            residual: 0.0,
            retries_used: 0,
        };
        let refs = [&f[0], &f[1], &f[2]];
        let al = align_permutation(&rec, &pi, &refs).unwrap();
        assert_eq!(al.permutation, vec![0, 1]);
        assert_eq!(al.max_abs_error, 0.0);

        let swapped = rec.permuted(&[1, 0]).unwrap();
        let al = align_permutation(&swapped, &pi, &refs).unwrap();
        assert_eq!(al.permutation, vec![1, 0]);
        assert_eq!(al.max_abs_error, 0.0);

        let noisy: Vec<Matrix> = f
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let mut m = m.clone();
                for i in 0..2 {
                    let d = if (i + k) % 2 == 0 { 1e-6 } else { -1e-6 };
                    m.set(i, 0, m.get(i, 0) + d);
                    m.set(i, 1, m.get(i, 1) - d);
                }
                m
            })
            .collect();
        let npi = [pi[0] + 1e-6, pi[1] - 1e-6];
        let al = align_permutation(&swapped, &npi, &[&noisy[0], &noisy[1], &noisy[2]]).unwrap();
        assert_eq!(al.permutation, vec![1, 0]);
        assert!(al.max_abs_error <= 3e-6);

        let small = [Matrix::identity(2), Matrix::identity(2), Matrix::identity(3)];
        assert!(matches!(
            align_permutation(&rec, &pi, &[&small[0], &small[1], &small[2]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn greedy_alignment_for_many_classes() {
        let r = 10;
        let reference: Vec<Vec<f64>> = (0..r).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let perm: Vec<usize> = (0..r).map(|i| (i * 3) % r).collect();
        let recovered: Vec<Vec<f64>> = (0..r).map(|i| reference[perm.iter().position(|&p| p == i).unwrap()].clone()).collect();
        let al = align_profiles(&recovered, &reference).unwrap();
        assert_eq!(al.max_abs_error, 0.0);
        for k in 0..r {
            assert_eq!(recovered[al.permutation[k]], reference[k]);
        }
    }

    #[test]
    fn latent_class_recovery_five_variables() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = sample::latent_class(&mut rng, 2, &[2; 5]);
        let t = joint_distribution(&model).unwrap();
        let tri = Tripartition::new([vec![0, 1], vec![2, 3], vec![4]], 5).unwrap();
        let rec = recover_latent_class(&t, 2, &tri, &DecomposeOptions::default()).unwrap();
        let al = align_models(&rec.model, &model).unwrap();
        assert!(al.max_abs_error <= 1e-8, "{}", al.max_abs_error);
    }

    #[test]
    fn latent_class_recovery_single_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = sample::latent_class(&mut rng, 1, &[2, 3, 2, 4]);
        let t = joint_distribution(&model).unwrap();
        let tri = Tripartition::new([vec![0], vec![1, 2], vec![3]], 4).unwrap();
        let rec = recover_latent_class(&t, 1, &tri, &DecomposeOptions::default()).unwrap();
        for (a, b) in rec.model.emissions().iter().zip(model.emissions()) {
            assert!(a.max_abs_diff(b) <= 1e-14);
        }
    }

    #[test]
    fn goodman_dimensions_never_meet_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = sample::latent_class(&mut rng, 3, &[2; 4]);
        let t = joint_distribution(&model).unwrap();
        let mut tried = 0;
        for assign in (0..4).map(|_| 0..3usize).multi_cartesian_product() {
            let mut blocks: [Vec<usize>; 3] = Default::default();
            for (j, &b) in assign.iter().enumerate() {
                blocks[b].push(j);
            }
            let Ok(tri) = Tripartition::new(blocks, 4) else { continue };
            tried += 1;
            assert!(matches!(
                recover_latent_class(&t, 3, &tri, &DecomposeOptions::default()),
                Err(Error::PreconditionUnmet(_))
            ));
        }
        assert_eq!(tried, 36);
    }
}
