//! Random graph mixtures: every node draws a hidden state from `pi`, and
//! edges appear independently with probability `p[state_k][state_l]`.
//!
//! Node assignments index rows in mixed radix with node 1 most significant.
//! Subgraphs of `K_m` index columns as bitmasks over the lexicographic edge
//! list `(1,2), (1,3), ..., (m-1,m)`, edge `(1,2)` being the least
//! significant bit.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_class::{Certificate, CertificateMode};
use crate::sample;
use crate::tensor::{check_entry_count, digits_of, numerical_rank, Matrix, ProbabilityVector, ENTRY_CAP};

/// Relative tolerance for matching entries of the node-state prior.
pub const PRIOR_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphMixtureModel {
    pub pi: ProbabilityVector,
    /// Symmetric connection probabilities.
    pub p: Matrix,
}

impl GraphMixtureModel {
    pub fn new(pi: ProbabilityVector, p: Matrix) -> Result<Self> {
        let r = pi.len();
        if p.rows() != r || p.cols() != r {
            return Err(Error::InvalidModel(format!("connection matrix must be {r}x{r}")));
        }
        for i in 0..r {
            for j in 0..r {
                let x = p.get(i, j);
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::InvalidModel(format!("connection probability {x} outside [0, 1]")));
                }
                if x != p.get(j, i) {
                    return Err(Error::InvalidModel("connection matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self { pi, p })
    }

    /// Two-state model from `pi` and `(p11, p12, p22)`.
    pub fn two_state(pi: [f64; 2], p11: f64, p12: f64, p22: f64) -> Result<Self> {
        Self::new(ProbabilityVector::new(pi.to_vec())?, Matrix::from_rows(&[[p11, p12], [p12, p22]])?)
    }

    pub fn r(&self) -> usize {
        self.pi.len()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, r: usize) -> Self {
        let pi = sample::probability_vector(rng, r);
        let mut p = Matrix::zeros(r, r);
        for i in 0..r {
            for j in i..r {
                let x = rng.gen::<f64>();
                p.set(i, j, x);
                p.set(j, i, x);
            }
        }
        Self { pi, p }
    }
}

/// Edges of `K_m` in lexicographic order, 0-based.
pub fn edge_list(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|k| (k + 1..m).map(move |l| (k, l))).collect()
}

/// Prior of the joint node state: entry for assignment `I` is `prod_k pi_{i_k}`.
pub fn node_state_prior(pi: &[f64], n: usize) -> Result<Vec<f64>> {
    let r = pi.len();
    check_entry_count(&vec![r; n], ENTRY_CAP)?;
    let mut v = vec![1.0];
    for _ in 0..n {
        v = v.iter().flat_map(|&x| pi.iter().map(move |&w| x * w)).collect();
    }
    Ok(v)
}

/// `r^m x 2^C(m,2)` matrix of subgraph probabilities of `K_m` given node states.
pub fn conditional_graph_matrix(model: &GraphMixtureModel, m: usize) -> Result<Matrix> {
    let r = model.r();
    let edges = edge_list(m);
    if edges.len() >= usize::BITS as usize {
        return Err(Error::TooLarge { entries: u128::MAX, cap: ENTRY_CAP });
    }
    let mut dims = vec![r; m];
    dims.push(1 << edges.len());
    check_entry_count(&dims, ENTRY_CAP)?;
    let rows = r.pow(m as u32);
    let cols = 1usize << edges.len();
    let mut out = Matrix::zeros(rows, cols);
    for row in 0..rows {
        let states = digits_of(row, &vec![r; m]);
        let probs: Vec<f64> = edges.iter().map(|&(k, l)| model.p.get(states[k], states[l])).collect();
        for mask in 0..cols {
            let x = probs
                .iter()
                .enumerate()
                .map(|(e, &pe)| if mask >> e & 1 == 1 { pe } else { 1.0 - pe })
                .product();
            out.set(row, mask, x);
        }
    }
    Ok(out)
}

/// Three partitions of the `m x m` node grid: rows, columns and wrapped
/// diagonals. Node `(i, j)` has label `i * m + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFamily {
    pub m: usize,
    pub families: [Vec<Vec<usize>>; 3],
}

impl PartitionFamily {
    pub fn n(&self) -> usize {
        self.m * self.m
    }

    /// Edges of the union of complete graphs on the sets of family `f`.
    pub fn edges(&self, f: usize) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for set in &self.families[f] {
            for (a, &x) in set.iter().enumerate() {
                for &y in &set[a + 1..] {
                    out.insert((x.min(y), x.max(y)));
                }
            }
        }
        out
    }

    pub fn is_partition(&self, f: usize) -> bool {
        let mut seen = vec![false; self.n()];
        for set in &self.families[f] {
            for &x in set {
                if x >= seen.len() || seen[x] {
                    return false;
                }
                seen[x] = true;
            }
        }
        seen.iter().all(|&s| s)
    }

    /// True when every family partitions the nodes and the three implied
    /// subgraphs share no edge.
    pub fn edge_disjoint(&self) -> bool {
        if !(0..3).all(|f| self.is_partition(f)) {
            return false;
        }
        let e: Vec<BTreeSet<(usize, usize)>> = (0..3).map(|f| self.edges(f)).collect();
        e[0].is_disjoint(&e[1]) && e[0].is_disjoint(&e[2]) && e[1].is_disjoint(&e[2])
    }
}

pub fn lattice_partitions(m: usize) -> PartitionFamily {
    assert!(m >= 2, "lattice needs m >= 2");
    let label = |i: usize, j: usize| i * m + j;
    let rows = (0..m).map(|j| (0..m).map(|i| label(j, i)).collect()).collect();
    let cols = (0..m).map(|j| (0..m).map(|i| label(i, j)).collect()).collect();
    let diags = (0..m).map(|j| (0..m).map(|i| label(i, (i + j) % m)).collect()).collect();
    PartitionFamily { m, families: [rows, cols, diags] }
}

/// Certificate for the `n = m^2` node model. The conditional matrix of each
/// grid subgraph is the `m`-fold Kronecker power of
/// [`conditional_graph_matrix`], so its rank is `rank(A)^m` and it is never
/// materialized.
pub fn graph_certificate(model: &GraphMixtureModel, m: usize, tol: f64) -> Result<Certificate> {
    let r = model.r();
    let n = m * m;
    let classes = r.checked_pow(n as u32).ok_or(Error::TooLarge { entries: u128::MAX, cap: ENTRY_CAP })?;
    let disjoint = lattice_partitions(m).edge_disjoint();
    let a = conditional_graph_matrix(model, m)?;
    let rank = numerical_rank(&a, tol)?;
    let block_rank = rank.checked_pow(m as u32).unwrap_or(usize::MAX).min(classes);
    let mut cert = Certificate::from_ranks(classes, [block_rank; 3], CertificateMode::ExactMatrix);
    cert.holds = disjoint && rank == r.pow(m as u32) && classes >= 2;
    Ok(cert)
}

/// Probability of edge `(k, l)` given node states `assignment`.
pub fn single_edge_marginal(model: &GraphMixtureModel, assignment: &[usize], edge: (usize, usize)) -> Result<f64> {
    let (k, l) = edge;
    if k == l || k >= assignment.len() || l >= assignment.len() {
        return Err(Error::BadEdge(k, l));
    }
    let (a, b) = (assignment[k], assignment[l]);
    if a >= model.r() || b >= model.r() {
        return Err(Error::InvalidModel("node state out of range".into()));
    }
    Ok(model.p.get(a, b))
}

/// Which route [`extract_parameters`] took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionBranch {
    /// `pi1 != pi2`: extreme prior entries locate the uniform rows.
    DistinctWeights,
    /// `pi1 == pi2`: the uniform rows are found from the set of edge values.
    EqualWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphParameters {
    pub pi: [f64; 2],
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
    pub branch: ExtractionBranch,
}

impl GraphParameters {
    /// Max-abs difference to a reference, minimized over the label swap.
    pub fn error_up_to_swap(&self, pi: [f64; 2], p11: f64, p12: f64, p22: f64) -> f64 {
        let direct = [(self.pi[0] - pi[0]), (self.pi[1] - pi[1]), (self.p11 - p11), (self.p12 - p12), (self.p22 - p22)];
        let swapped = [(self.pi[0] - pi[1]), (self.pi[1] - pi[0]), (self.p11 - p22), (self.p12 - p12), (self.p22 - p11)];
        let m = |v: [f64; 5]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        m(direct).min(m(swapped))
    }
}

fn push_distinct(values: &mut Vec<f64>, x: f64, tol: f64) {
    if !values.iter().any(|v| (v - x).abs() <= tol) {
        values.push(x);
    }
}

/// Reads `(pi, p11, p12, p22)` of a two-state model from the prior vector of
/// the `n` node states, listed in an unknown order, and an oracle giving the
/// single-edge probability for `(row, edge)` in that same order.
pub fn extract_parameters(
    v_perm: &[f64],
    row_oracle: impl Fn(usize, (usize, usize)) -> f64,
    n: usize,
    tol: f64,
) -> Result<GraphParameters> {
    if n < 2 {
        return Err(Error::InvalidModel("need at least two nodes".into()));
    }
    if v_perm.len() != 1usize.checked_shl(n as u32).unwrap_or(0) {
        return Err(Error::DimensionMismatch(format!("prior has {} entries, expected 2^{n}", v_perm.len())));
    }
    let edges = edge_list(n);
    let (imin, vmin) = v_perm.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let (imax, vmax) = v_perm.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    if vmin <= 0.0 {
        return Err(Error::InconsistentOracle("prior has non-positive entries".into()));
    }

    let uniform_value = |row: usize| -> Result<f64> {
        let x = row_oracle(row, edges[0]);
        for &e in &edges[1..] {
            if (row_oracle(row, e) - x).abs() > tol {
                return Err(Error::InconsistentOracle(format!("row {row} should have a single edge value")));
            }
        }
        Ok(x)
    };
    let check_distinct = |p11: f64, p12: f64, p22: f64| -> Result<()> {
        let mut vals = Vec::new();
        for x in [p11, p12, p22] {
            push_distinct(&mut vals, x, tol);
        }
        if vals.len() < 3 {
            return Err(Error::NotDistinct(vals.len()));
        }
        Ok(())
    };

    if vmax - vmin > PRIOR_MATCH_TOL * vmax {
        let pi1 = vmin.powf(1.0 / n as f64);
        let pi2 = vmax.powf(1.0 / n as f64);
        if (pi1 + pi2 - 1.0).abs() > PRIOR_MATCH_TOL.max(tol) {
            return Err(Error::InconsistentOracle(format!("extreme prior entries give pi = ({pi1}, {pi2})")));
        }
        let p11 = uniform_value(imin)?;
        let p22 = uniform_value(imax)?;
        let target = pi1.powi(n as i32 - 1) * pi2;
        let deviant = v_perm
            .iter()
            .position(|&x| (x - target).abs() <= PRIOR_MATCH_TOL * target)
            .ok_or_else(|| Error::InconsistentOracle("no row with exactly one node in state 2".into()))?;
        let mut vals = Vec::new();
        for &e in &edges {
            push_distinct(&mut vals, row_oracle(deviant, e), tol);
        }
        let others: Vec<f64> = vals.iter().copied().filter(|v| (v - p11).abs() > tol).collect();
        let p12 = match others.as_slice() {
            [x] => *x,
            [] => return Err(Error::NotDistinct(1)),
            _ => return Err(Error::InconsistentOracle("deviant row shows more than two edge values".into())),
        };
        if n > 2 && vals.len() != 2 {
            return Err(Error::NotDistinct(vals.len()));
        }
        check_distinct(p11, p12, p22)?;
        return Ok(GraphParameters { pi: [pi1, pi2], p11, p12, p22, branch: ExtractionBranch::DistinctWeights });
    }

    // equal weights: marginalize every row to its single-edge values
    let mut all = Vec::new();
    let mut uniform = Vec::new();
    for row in 0..v_perm.len() {
        let first = row_oracle(row, edges[0]);
        push_distinct(&mut all, first, tol);
        let mut is_uniform = true;
        for &e in &edges[1..] {
            let x = row_oracle(row, e);
            push_distinct(&mut all, x, tol);
            if (x - first).abs() > tol {
                is_uniform = false;
                if all.len() >= 3 {
                    break;
                }
            }
        }
        if is_uniform {
            push_distinct(&mut uniform, first, tol);
        }
    }
    match all.len() {
        0..=2 => return Err(Error::NotDistinct(all.len())),
        3 => {}
        k => return Err(Error::InconsistentOracle(format!("{k} distinct edge probabilities"))),
    }
    if uniform.len() != 2 {
        return Err(Error::InconsistentOracle(format!("{} distinct uniform-row values, expected 2", uniform.len())));
    }
    let (p11, p22) = (uniform[0], uniform[1]);
    let p12 = *all.iter().find(|&&x| (x - p11).abs() > tol && (x - p22).abs() > tol).expect("three distinct values");
    check_distinct(p11, p12, p22)?;
    let w = vmin.powf(1.0 / n as f64);
    Ok(GraphParameters { pi: [w, w], p11, p12, p22, branch: ExtractionBranch::EqualWeights })
}
