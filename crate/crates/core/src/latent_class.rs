//! The r-class, p-feature latent-class model and its identifiability
//! certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    check_entry_count, khatri_rao, kruskal_rank, ProbabilityVector, StochasticMatrix, TensorP, Tripartition,
    ENTRY_CAP,
};

/// Mixing weights at or below this are rejected.
pub const MIN_WEIGHT: f64 = 1e-12;
/// Largest `p` for which tripartitions are enumerated exhaustively.
pub const EXHAUSTIVE_SEARCH_MAX_P: usize = 12;

/// Mixture of `r` product distributions over `p` finite variables.
///
/// Row `i` of `emissions[j]` is the law of variable `j` given class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassModel {
    pi: ProbabilityVector,
    emissions: Vec<StochasticMatrix>,
}

impl LatentClassModel {
    pub fn new(pi: ProbabilityVector, emissions: Vec<StochasticMatrix>) -> Result<Self> {
        if emissions.is_empty() {
            return Err(Error::InvalidModel("model needs at least one variable".into()));
        }
        if let Some(w) = pi.iter().find(|&&w| w <= MIN_WEIGHT) {
            return Err(Error::InvalidModel(format!("mixing weight {w:e} is not positive")));
        }
        for (j, m) in emissions.iter().enumerate() {
            if m.rows() != pi.len() {
                return Err(Error::InvalidModel(format!(
                    "emission matrix {} has {} rows, expected {}",
                    j + 1,
                    m.rows(),
                    pi.len()
                )));
            }
            if m.cols() < 2 {
                return Err(Error::InvalidModel(format!("variable {} has fewer than 2 states", j + 1)));
            }
        }
        Ok(Self { pi, emissions })
    }

    pub fn r(&self) -> usize {
        self.pi.len()
    }

    pub fn p(&self) -> usize {
        self.emissions.len()
    }

    pub fn kappas(&self) -> Vec<usize> {
        self.emissions.iter().map(|m| m.cols()).collect()
    }

    pub fn pi(&self) -> &ProbabilityVector {
        &self.pi
    }

    pub fn emissions(&self) -> &[StochasticMatrix] {
        &self.emissions
    }

    /// Relabels classes: new class `k` is old class `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pi = ProbabilityVector::new(perm.iter().map(|&k| self.pi[k]).collect())?;
        let emissions =
            self.emissions.iter().map(|m| StochasticMatrix::new(m.select_rows(perm))).collect::<Result<_>>()?;
        Self::new(pi, emissions)
    }

    /// The three-variable model obtained by clumping each block of `tri`.
    pub fn clumped(&self, tri: &Tripartition) -> Result<Self> {
        let tri = Tripartition::new(tri.blocks.clone(), self.p())?;
        let emissions = tri
            .blocks
            .iter()
            .map(|b| {
                let fs: Vec<&StochasticMatrix> = b.iter().map(|&j| &self.emissions[j]).collect();
                StochasticMatrix::new(khatri_rao(&fs)?)
            })
            .collect::<Result<_>>()?;
        Self::new(self.pi.clone(), emissions)
    }
}

/// How a certificate's Kruskal ranks were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateMode {
    /// Ranks computed from concrete parameter matrices.
    ExactMatrix,
    /// Ranks `min(r, dim)` that hold for generic parameters.
    GenericDimension,
}

/// Outcome of checking Kruskal's condition `I1 + I2 + I3 >= 2r + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub holds: bool,
    pub kruskal_ranks: [usize; 3],
    pub threshold: usize,
    pub witness: Option<Tripartition>,
    pub mode: CertificateMode,
    /// False when a heuristic search found no witness; the answer is then unknown.
    pub exhaustive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    NotCertified,
    Unknown,
}

impl Certificate {
    pub fn from_ranks(r: usize, kruskal_ranks: [usize; 3], mode: CertificateMode) -> Self {
        let threshold = 2 * r + 2;
        Self {
            holds: kruskal_ranks.iter().sum::<usize>() >= threshold,
            kruskal_ranks,
            threshold,
            witness: None,
            mode,
            exhaustive: true,
        }
    }

    pub fn rank_sum(&self) -> usize {
        self.kruskal_ranks.iter().sum()
    }

    pub fn verdict(&self) -> Verdict {
        match (self.holds, self.exhaustive) {
            (true, _) => Verdict::Certified,
            (false, true) => Verdict::NotCertified,
            (false, false) => Verdict::Unknown,
        }
    }
}

/// Joint law: entry `(l1..lp)` is `sum_i pi_i prod_j M_j(i, l_j)`.
pub fn joint_distribution(model: &LatentClassModel) -> Result<TensorP> {
    joint_distribution_capped(model, ENTRY_CAP)
}

pub fn joint_distribution_capped(model: &LatentClassModel, cap: usize) -> Result<TensorP> {
    let kappas = model.kappas();
    check_entry_count(&kappas, cap)?;
    let rows = khatri_rao(model.emissions())?;
    let mut data = vec![0.0; rows.cols()];
    for (i, &w) in model.pi().iter().enumerate() {
        for (d, &x) in data.iter_mut().zip(rows.row(i)) {
            *d += w * x;
        }
    }
    TensorP::new(kappas, data)
}

/// Exact-matrix certificate for a three-variable model.
pub fn kruskal_certificate(model: &LatentClassModel, tol: f64) -> Result<Certificate> {
    if model.p() != 3 {
        return Err(Error::NotThreeVariables(model.p()));
    }
    let mut ranks = [0; 3];
    for (slot, m) in ranks.iter_mut().zip(model.emissions()) {
        *slot = kruskal_rank(m, tol)?;
    }
    Ok(Certificate::from_ranks(model.r(), ranks, CertificateMode::ExactMatrix))
}

fn clumped_dims_u128(blocks: &[Vec<usize>; 3], kappas: &[usize]) -> [u128; 3] {
    let prod = |b: &Vec<usize>| b.iter().fold(1u128, |acc, &j| acc.saturating_mul(kappas[j] as u128));
    [prod(&blocks[0]), prod(&blocks[1]), prod(&blocks[2])]
}

fn generic_ranks(r: usize, dims: [u128; 3]) -> [usize; 3] {
    dims.map(|d| d.min(r as u128) as usize)
}

/// Restricted-growth strings with exactly three blocks, in lexicographic order.
fn for_each_tripartition(p: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(pos: usize, max_used: usize, a: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        let p = a.len();
        if pos == p {
            if max_used == 2 {
                visit(a);
            }
            return;
        }
        // remaining slots must still be able to open the missing blocks
        let missing = 2 - max_used.min(2);
        if p - pos < missing {
            return;
        }
        for b in 0..=(max_used + 1).min(2) {
            a[pos] = b;
            rec(pos + 1, max_used.max(b), a, visit);
        }
    }
    if p < 3 {
        return;
    }
    let mut a = vec![0; p];
    // the first variable always opens block 0
    rec(1, 0, &mut a, &mut visit);
}

fn blocks_of(assign: &[usize]) -> [Vec<usize>; 3] {
    let mut blocks: [Vec<usize>; 3] = Default::default();
    for (j, &b) in assign.iter().enumerate() {
        blocks[b].push(j);
    }
    blocks
}

/// Searches for a tripartition whose generic clumped Kruskal ranks
/// `min(r, kappa_hat_i)` satisfy Kruskal's condition.
///
/// For `p <= 12` every tripartition is enumerated and the first maximizer
/// is reported. Larger `p` falls back to a balanced-product greedy split,
/// and a failure there is reported as inconclusive (`exhaustive == false`).
pub fn tripartition_search(r: usize, kappas: &[usize]) -> Result<Certificate> {
    let p = kappas.len();
    if p < 3 {
        return Err(Error::TooFewVariables(p));
    }
    if r == 0 || kappas.iter().any(|&k| k < 2) {
        return Err(Error::InvalidModel("need r >= 1 and every kappa >= 2".into()));
    }
    let (blocks, exhaustive) = if p <= EXHAUSTIVE_SEARCH_MAX_P {
        let mut best: Option<(usize, [Vec<usize>; 3])> = None;
        for_each_tripartition(p, |assign| {
            let blocks = blocks_of(assign);
            let s: usize = generic_ranks(r, clumped_dims_u128(&blocks, kappas)).iter().sum();
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, blocks));
            }
        });
        (best.expect("p >= 3 has a tripartition").1, true)
    } else {
        (balanced_split(kappas), false)
    };
    let ranks = generic_ranks(r, clumped_dims_u128(&blocks, kappas));
    let mut cert = Certificate::from_ranks(r, ranks, CertificateMode::GenericDimension);
    cert.witness = Some(Tripartition::new(blocks, p)?);
    cert.exhaustive = exhaustive || cert.holds;
    Ok(cert)
}

/// Greedy split: variables in decreasing state count go to the block with
/// the smallest current log-product.
fn balanced_split(kappas: &[usize]) -> [Vec<usize>; 3] {
    let mut order: Vec<usize> = (0..kappas.len()).collect();
    order.sort_by(|&a, &b| kappas[b].cmp(&kappas[a]).then(a.cmp(&b)));
    let mut blocks: [Vec<usize>; 3] = Default::default();
    let mut logs = [0.0f64; 3];
    for j in order {
        let k = (0..3).min_by(|&a, &b| logs[a].total_cmp(&logs[b])).unwrap();
        blocks[k].push(j);
        logs[k] += (kappas[j] as f64).ln();
    }
    blocks
}

/// Number of variables `2 ceil(log_kappa r) + 1` that suffices for generic
/// identifiability when every variable has `kappa` states.
pub fn min_variables_bound(r: usize, kappa: usize) -> usize {
    assert!(r >= 1 && kappa >= 2);
    let mut c = 0;
    let mut pow = 1usize;
    while pow < r {
        pow = pow.saturating_mul(kappa);
        c += 1;
    }
    2 * c + 1
}

/// `(L, K)`: the number of free parameters `(r - 1) + r sum(kappa_i - 1)`
/// and the number of cells `prod kappa_i` of the joint table.
pub fn param_dimension(r: usize, kappas: &[usize]) -> (usize, u128) {
    let free = (r - 1) + r * kappas.iter().map(|k| k - 1).sum::<usize>();
    let cells = kappas.iter().fold(1u128, |acc, &k| acc.saturating_mul(k as u128));
    (free, cells)
}
