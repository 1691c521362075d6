//! Mixtures of products of continuous distributions on blocks `R^b`,
//! discretized by cut points into latent-class models.
//!
//! Components are piecewise-linear (multilinear for `b > 1`) CDF tables.
//! Cuts on each coordinate split it into half-open intervals
//! `(-inf, u_1], (u_1, u_2], ..., (u_last, inf)`; for blocks, bins are
//! products of intervals indexed in mixed radix with the first coordinate
//! most significant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::recovery::{best_permutation, decompose3, DecomposeOptions};
use crate::sample;
use crate::tensor::{
    digits_of, flat_index, numerical_rank, triple_product, Matrix, ProbabilityVector, StochasticMatrix, Tensor3,
    NEG_TOL, RANK_TOL, ROW_SUM_TOL,
};

/// Max-abs distance under which binned rows of two runs count as the same class.
pub const CHAIN_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum KnotsRepr {
    Line(Vec<f64>),
    Grid(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CdfRepr {
    knots: KnotsRepr,
    values: Vec<f64>,
}

/// CDF on `R^b` interpolated multilinearly from its values on a knot grid.
/// Outside the grid each coordinate is clamped to the nearest knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CdfRepr", into = "CdfRepr")]
pub struct CdfComponent {
    knots: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl TryFrom<CdfRepr> for CdfComponent {
    type Error = Error;

    fn try_from(r: CdfRepr) -> Result<Self> {
        let knots = match r.knots {
            KnotsRepr::Line(k) => vec![k],
            KnotsRepr::Grid(k) => k,
        };
        Self::new(knots, r.values)
    }
}

impl From<CdfComponent> for CdfRepr {
    fn from(c: CdfComponent) -> Self {
        let knots = if c.knots.len() == 1 { KnotsRepr::Line(c.knots[0].clone()) } else { KnotsRepr::Grid(c.knots) };
        CdfRepr { knots, values: c.values }
    }
}

impl CdfComponent {
    /// `values` is flattened over the knot grid, first coordinate most significant.
    pub fn new(knots: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::EmptyInput);
        }
        for k in &knots {
            if k.len() < 2 {
                return Err(Error::InvalidModel("each coordinate needs at least two knots".into()));
            }
            if k.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteEntries);
            }
            if k.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidModel("knots must be strictly increasing".into()));
            }
        }
        let dims: Vec<usize> = knots.iter().map(Vec::len).collect();
        if values.len() != dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!("{} values for a {dims:?} knot grid", values.len())));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        for (idx, &v) in values.iter().enumerate() {
            if digits_of(idx, &dims).contains(&0) && v.abs() > NEG_TOL {
                return Err(Error::NonMonotoneCdf(format!("value {v} on a lower face, expected 0")));
            }
        }
        let top = *values.last().expect("nonempty");
        if (top - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NonMonotoneCdf(format!("value {top} at the upper corner, expected 1")));
        }
        let masses = differences(&values, &dims);
        if let Some(m) = masses.iter().find(|&&m| m < -NEG_TOL) {
            return Err(Error::NonMonotoneCdf(format!("negative cell mass {m}")));
        }
        Ok(Self { knots, values })
    }

    /// Univariate table from knots and CDF values.
    pub fn univariate(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![knots], values)
    }

    /// Uniform distribution on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::univariate(vec![lo, hi], vec![0.0, 1.0])
    }

    /// Tabulates a univariate CDF at the given knots.
    pub fn tabulate(knots: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = knots.iter().map(|&x| f(x)).collect();
        Self::univariate(knots, values)
    }

    /// Builds the table from nonnegative masses of the grid cells (one fewer
    /// per coordinate than knots), normalized to total 1.
    pub fn from_cell_masses(knots: Vec<Vec<f64>>, masses: &[f64]) -> Result<Self> {
        let cells: Vec<usize> = knots.iter().map(|k| k.len().saturating_sub(1)).collect();
        if masses.len() != cells.iter().product::<usize>() {
            return Err(Error::DimensionMismatch("cell masses do not match the knot grid".into()));
        }
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|&m| m < 0.0) || total <= 0.0 {
            return Err(Error::NonMonotoneCdf("cell masses must be nonnegative with positive total".into()));
        }
        let dims: Vec<usize> = knots.iter().map(Vec::len).collect();
        let mut values = vec![0.0; dims.iter().product()];
        for (idx, v) in values.iter_mut().enumerate() {
            let d = digits_of(idx, &dims);
            if d.contains(&0) {
                continue;
            }
            let shifted: Vec<usize> = d.iter().map(|x| x - 1).collect();
            *v = masses[flat_index(&shifted, &cells)] / total;
        }
        cumulate(&mut values, &dims);
        *values.last_mut().expect("nonempty") = 1.0;
        Self::new(knots, values)
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[Vec<f64>] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Evaluates at `x`; infinite coordinates clamp to the grid ends.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension");
        let dims: Vec<usize> = self.knots.iter().map(Vec::len).collect();
        let locs: Vec<(usize, f64)> = self.knots.iter().zip(x).map(|(k, &t)| locate(k, t)).collect();
        let b = self.dim();
        let mut out = 0.0;
        for corner in 0..1usize << b {
            let mut w = 1.0;
            let mut idx = vec![0; b];
            for c in 0..b {
                let (s, frac) = locs[c];
                if corner >> c & 1 == 1 {
                    w *= frac;
                    idx[c] = s + 1;
                } else {
                    w *= 1.0 - frac;
                    idx[c] = s;
                }
            }
            if w != 0.0 {
                out += w * self.values[flat_index(&idx, &dims)];
            }
        }
        out
    }
}

/// Segment index and fraction of `t` within sorted `knots`, clamped.
fn locate(knots: &[f64], t: f64) -> (usize, f64) {
    let n = knots.len();
    if t <= knots[0] {
        return (0, 0.0);
    }
    if t >= knots[n - 1] {
        return (n - 2, 1.0);
    }
    let s = knots.partition_point(|&k| k <= t) - 1;
    (s, (t - knots[s]) / (knots[s + 1] - knots[s]))
}

/// Finite differences along every axis: cumulative table to cell masses.
/// Index 0 on each axis is treated as the lower boundary and left in place.
fn differences(values: &[f64], dims: &[usize]) -> Vec<f64> {
    let mut out = values.to_vec();
    for axis in 0..dims.len() {
        let stride: usize = dims[axis + 1..].iter().product();
        for idx in (0..out.len()).rev() {
            if (idx / stride) % dims[axis] != 0 {
                out[idx] -= out[idx - stride];
            }
        }
    }
    out
}

/// Inverse of [`differences`].
fn cumulate(values: &mut [f64], dims: &[usize]) {
    for axis in 0..dims.len() {
        let stride: usize = dims[axis + 1..].iter().product();
        for idx in 0..values.len() {
            if (idx / stride) % dims[axis] != 0 {
                values[idx] += values[idx - stride];
            }
        }
    }
}

/// Cut points per coordinate of one variate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutPointSet {
    pub cuts: Vec<Vec<f64>>,
    /// Points whose coordinates were forced into the cuts.
    #[serde(default)]
    pub mandatory: Vec<Vec<f64>>,
}

impl CutPointSet {
    pub fn new(cuts: Vec<Vec<f64>>) -> Result<Self> {
        if cuts.is_empty() || cuts.iter().any(Vec::is_empty) {
            return Err(Error::EmptyInput);
        }
        for c in &cuts {
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteEntries);
            }
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidModel("cut points must be strictly increasing".into()));
            }
        }
        Ok(Self { cuts, mandatory: Vec::new() })
    }

    pub fn univariate(cuts: Vec<f64>) -> Result<Self> {
        Self::new(vec![cuts])
    }

    pub fn dim(&self) -> usize {
        self.cuts.len()
    }

    /// Bins per coordinate.
    pub fn bins(&self) -> Vec<usize> {
        self.cuts.iter().map(|c| c.len() + 1).collect()
    }

    /// Total number of bins.
    pub fn kappa(&self) -> usize {
        self.bins().iter().product()
    }

    /// Adds the coordinates of `point` to the cuts.
    pub fn insert_point(&mut self, point: &[f64]) {
        for (c, &x) in self.cuts.iter_mut().zip(point) {
            if let Err(pos) = c.binary_search_by(|y| y.total_cmp(&x)) {
                c.insert(pos, x);
            }
        }
    }

    /// Index of the bin whose upper corner is `point`, if every coordinate is a cut.
    pub fn corner_index(&self, point: &[f64]) -> Option<usize> {
        let digits = self
            .cuts
            .iter()
            .zip(point)
            .map(|(c, &x)| c.iter().position(|&y| y == x))
            .collect::<Option<Vec<usize>>>()?;
        Some(flat_index(&digits, &self.bins()))
    }

    /// Upper corners of every bin, with `+inf` for the last bin on each axis.
    fn upper_edges(&self) -> Vec<Vec<f64>> {
        self.cuts.iter().map(|c| c.iter().copied().chain([f64::INFINITY]).collect()).collect()
    }
}

/// CDF values of `component` at the upper corners of all bins.
fn cumulative_row(component: &CdfComponent, cuts: &CutPointSet) -> Vec<f64> {
    let edges = cuts.upper_edges();
    let dims = cuts.bins();
    (0..cuts.kappa())
        .map(|idx| {
            let point: Vec<f64> = digits_of(idx, &dims).iter().zip(&edges).map(|(&d, e)| e[d]).collect();
            component.eval(&point)
        })
        .collect()
}

fn check_dims(components: &[CdfComponent], dim: usize) -> Result<()> {
    if components.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(c) = components.iter().find(|c| c.dim() != dim) {
        return Err(Error::DimensionMismatch(format!("component on R^{} with {dim}-dimensional cuts", c.dim())));
    }
    Ok(())
}

/// `r x kappa` matrix of bin masses of each component.
pub fn binned_conditional_matrix(components: &[CdfComponent], cuts: &CutPointSet) -> Result<StochasticMatrix> {
    check_dims(components, cuts.dim())?;
    let dims = cuts.bins();
    let mut out = Matrix::zeros(components.len(), cuts.kappa());
    for (i, comp) in components.iter().enumerate() {
        // pad a zero lower boundary on every axis before differencing
        let padded_dims: Vec<usize> = dims.iter().map(|d| d + 1).collect();
        let cum = cumulative_row(comp, cuts);
        let mut padded = vec![0.0; padded_dims.iter().product()];
        for (idx, &v) in cum.iter().enumerate() {
            let d: Vec<usize> = digits_of(idx, &dims).iter().map(|x| x + 1).collect();
            padded[flat_index(&d, &padded_dims)] = v;
        }
        let diffs = differences(&padded, &padded_dims);
        for idx in 0..cuts.kappa() {
            let d: Vec<usize> = digits_of(idx, &dims).iter().map(|x| x + 1).collect();
            let m = diffs[flat_index(&d, &padded_dims)];
            if m < -NEG_TOL {
                return Err(Error::NonMonotoneCdf(format!("bin mass {m} for component {}", i + 1)));
            }
            out.set(i, idx, m.max(0.0));
        }
    }
    StochasticMatrix::new(out)
}

/// Turns bin masses back into CDF values at the bin upper corners, the last
/// entry being 1.
pub fn cumulative_transform(row: &[f64], bins: &[usize]) -> Vec<f64> {
    assert_eq!(row.len(), bins.iter().product::<usize>(), "row length");
    let mut out = row.to_vec();
    cumulate(&mut out, bins);
    out
}

/// Default candidates per coordinate: all knots of all components plus the
/// midpoints between consecutive pooled knots, sorted.
pub fn default_grid(components: &[CdfComponent]) -> Vec<Vec<f64>> {
    let b = components.first().map_or(0, CdfComponent::dim);
    (0..b)
        .map(|c| {
            let mut pts: Vec<f64> = components.iter().flat_map(|comp| comp.knots[c].iter().copied()).collect();
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            pts.extend(mids);
            pts.sort_by(f64::total_cmp);
            pts
        })
        .collect()
}

/// Greedily adds cut points until the matrix of component CDF values at the
/// bin upper corners has rank `r`. Mandatory points go in first and stay.
/// Each step takes a left null vector `alpha` of the current matrix and
/// accepts the first grid point whose insertion makes `alpha` no longer
/// annihilate the matrix by more than `tol`.
pub fn select_cut_points(
    components: &[CdfComponent],
    mandatory: &[Vec<f64>],
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<CutPointSet> {
    let b = components.first().ok_or(Error::EmptyInput)?.dim();
    check_dims(components, b)?;
    if grid.len() != b || grid.iter().any(Vec::is_empty) {
        return Err(Error::DimensionMismatch(format!("candidate grid must have {b} nonempty coordinate lists")));
    }
    let r = components.len();
    let mut set = CutPointSet { cuts: vec![Vec::new(); b], mandatory: mandatory.to_vec() };
    for t in mandatory {
        if t.len() != b {
            return Err(Error::DimensionMismatch(format!("mandatory point of dimension {}", t.len())));
        }
        set.insert_point(t);
    }
    let candidates: Vec<Vec<f64>> = {
        let dims: Vec<usize> = grid.iter().map(Vec::len).collect();
        (0..dims.iter().product())
            .map(|idx| digits_of(idx, &dims).iter().zip(grid).map(|(&d, g)| g[d]).collect())
            .collect()
    };
    let matrix = |s: &CutPointSet| -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = components.iter().map(|c| cumulative_row(c, s)).collect();
        Matrix::from_rows(&rows)
    };
    loop {
        let a = matrix(&set)?;
        let null = linalg::null_space(&a.transpose(), RANK_TOL);
        let Some(alpha) = null.first() else { break };
        let accepted = candidates.iter().find_map(|u| {
            let mut trial = set.clone();
            trial.insert_point(u);
            if trial.cuts == set.cuts {
                return None;
            }
            let a_new = matrix(&trial).ok()?;
            let hit = (0..a_new.cols())
                .map(|j| (0..r).map(|i| alpha[i] * a_new.get(i, j)).sum::<f64>().abs())
                .fold(0.0, f64::max);
            (hit > tol).then_some(trial)
        });
        match accepted {
            Some(s) => set = s,
            None => return Err(Error::GridExhausted(numerical_rank(&a, RANK_TOL)?)),
        }
    }
    if set.cuts.iter().any(Vec::is_empty) {
        let first: Vec<f64> = grid.iter().map(|g| g[0]).collect();
        for (c, x) in set.cuts.iter_mut().zip(first) {
            if c.is_empty() {
                c.push(x);
            }
        }
    }
    Ok(set)
}

/// Rank of the bivariate bin-mass matrix `M1^T diag(pi) M2` of two variates.
pub fn bivariate_rank(
    pi: &[f64],
    components1: &[CdfComponent],
    components2: &[CdfComponent],
    cuts1: &CutPointSet,
    cuts2: &CutPointSet,
    tol: f64,
) -> Result<usize> {
    let r = pi.len();
    if components1.len() != r || components2.len() != r {
        return Err(Error::MismatchedRows(components1.len(), components2.len()));
    }
    if r > cuts1.kappa().min(cuts2.kappa()) {
        return Err(Error::PreconditionUnmet(format!("{r} classes but only {} and {} bins", cuts1.kappa(), cuts2.kappa())));
    }
    let m1 = binned_conditional_matrix(components1, cuts1)?;
    let m2 = binned_conditional_matrix(components2, cuts2)?;
    let n = m1.transpose().matmul(&m2.scale_rows(pi))?;
    numerical_rank(&n, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonparametricMixture {
    pub pi: ProbabilityVector,
    pub block_dims: Vec<usize>,
    /// `components[i][j]` is the CDF of variate `j` in class `i`.
    pub components: Vec<Vec<CdfComponent>>,
}

impl NonparametricMixture {
    pub fn new(pi: ProbabilityVector, block_dims: Vec<usize>, components: Vec<Vec<CdfComponent>>) -> Result<Self> {
        if components.len() != pi.len() {
            return Err(Error::MismatchedRows(pi.len(), components.len()));
        }
        if block_dims.is_empty() || block_dims.contains(&0) {
            return Err(Error::InvalidModel("block dimensions must be positive".into()));
        }
        for row in &components {
            if row.len() != block_dims.len() {
                return Err(Error::DimensionMismatch(format!("{} components for {} variates", row.len(), block_dims.len())));
            }
            for (c, &b) in row.iter().zip(&block_dims) {
                if c.dim() != b {
                    return Err(Error::DimensionMismatch(format!("component on R^{} for a block of size {b}", c.dim())));
                }
            }
        }
        Ok(Self { pi, block_dims, components })
    }

    pub fn r(&self) -> usize {
        self.pi.len()
    }

    pub fn p(&self) -> usize {
        self.block_dims.len()
    }

    /// Components of variate `j` across classes.
    pub fn variate(&self, j: usize) -> Vec<CdfComponent> {
        self.components.iter().map(|row| row[j].clone()).collect()
    }

    /// Relabels classes: new class `k` is old class `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pi = ProbabilityVector::new(perm.iter().map(|&k| self.pi[k]).collect())?;
        Self::new(pi, self.block_dims.clone(), perm.iter().map(|&k| self.components[k].clone()).collect())
    }

    /// Exact probabilities of the product bins of three variates.
    pub fn binned_tensor(&self, variates: [usize; 3], cuts: [&CutPointSet; 3]) -> Result<Tensor3> {
        let m: Vec<StochasticMatrix> = (0..3)
            .map(|a| binned_conditional_matrix(&self.variate(variates[a]), cuts[a]))
            .collect::<Result<_>>()?;
        triple_product(&m[0].scale_rows(&self.pi), &m[1], &m[2])
    }

    /// Random mixture: each component spreads random cell masses over its
    /// own random knot grid inside `[0, 10]` per coordinate.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, r: usize, block_dims: &[usize], knots_per_axis: usize) -> Self {
        let pi = sample::probability_vector(rng, r);
        let components = (0..r)
            .map(|_| {
                block_dims
                    .iter()
                    .map(|&b| {
                        let knots: Vec<Vec<f64>> = (0..b)
                            .map(|_| {
                                let mut k: Vec<f64> = (0..knots_per_axis).map(|_| rng.gen_range(0.0..10.0)).collect();
                                k.sort_by(f64::total_cmp);
                                k.dedup();
                                k
                            })
                            .collect();
                        let cells: usize = knots.iter().map(|k| k.len() - 1).product();
                        let masses: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.05..1.0)).collect();
                        CdfComponent::from_cell_masses(knots, &masses).expect("valid random table")
                    })
                    .collect()
            })
            .collect();
        Self::new(pi, block_dims.to_vec(), components).expect("consistent random mixture")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureRecovery {
    pub pi: Vec<f64>,
    /// `values[j][i][q]` estimates the CDF of variate `j` in class `i` at query point `q`.
    pub values: Vec<Vec<Vec<f64>>>,
    pub cuts: Vec<CutPointSet>,
    /// Per variate, the permutation taking the labels of the run that read it
    /// to the labels of the first run.
    pub chaining: Vec<Vec<usize>>,
    pub max_residual: f64,
}

/// Match recovered anchor rows to reference rows; each must pair with
/// exactly one reference row within [`CHAIN_TOL`].
fn chain_labels(reference: &[Vec<f64>], recovered: &[Vec<f64>]) -> Result<Vec<usize>> {
    let r = reference.len();
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= CHAIN_TOL);
    let mut perm = vec![usize::MAX; r];
    for (k, target) in reference.iter().enumerate() {
        let hits: Vec<usize> = (0..r).filter(|&i| close(&recovered[i], target)).collect();
        match hits.as_slice() {
            [i] => perm[k] = *i,
            [] => return Err(Error::AmbiguousChaining(format!("no recovered class matches class {}", k + 1))),
            _ => return Err(Error::AmbiguousChaining(format!("{} classes match class {}", hits.len(), k + 1))),
        }
    }
    let mut seen = perm.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != r {
        return Err(Error::AmbiguousChaining("row matching is not a bijection".into()));
    }
    Ok(perm)
}

/// Recovers weights and component CDF values at the query points from the
/// exact binned distribution of the mixture.
///
/// Variates 1, 2, 3 are read from one decomposition; every further variate
/// `j` from a decomposition of variates `(1, 2, j)` whose labels are chained
/// to the first by matching the bin masses of variates 1 and 2.
pub fn recover_mixture(
    mixture: &NonparametricMixture,
    query_points: &[Vec<Vec<f64>>],
    grid: Option<&[Vec<Vec<f64>>]>,
    opts: &DecomposeOptions,
) -> Result<MixtureRecovery> {
    let (r, p) = (mixture.r(), mixture.p());
    if p < 3 {
        return Err(Error::TooFewVariables(p));
    }
    if query_points.len() != p {
        return Err(Error::DimensionMismatch(format!("query points for {} variates, expected {p}", query_points.len())));
    }
    let cuts: Vec<CutPointSet> = (0..p)
        .map(|j| {
            let comps = mixture.variate(j);
            let g = match grid {
                Some(g) => g.get(j).cloned().ok_or_else(|| Error::DimensionMismatch("grid per variate".into()))?,
                None => default_grid(&comps),
            };
            select_cut_points(&comps, &query_points[j], &g, opts.tol)
        })
        .collect::<Result<_>>()?;
    for (j, c) in cuts.iter().enumerate() {
        if c.kappa() < r {
            return Err(Error::PreconditionUnmet(format!("variate {} has {} bins for {r} classes", j + 1, c.kappa())));
        }
    }

    let read = |m: &Matrix, j: usize| -> Vec<Vec<f64>> {
        let bins = cuts[j].bins();
        (0..r)
            .map(|i| {
                let cum = cumulative_transform(m.row(i), &bins);
                query_points[j]
                    .iter()
                    .map(|t| cum[cuts[j].corner_index(t).expect("query points are cuts")])
                    .collect()
            })
            .collect()
    };

    let t = mixture.binned_tensor([0, 1, 2], [&cuts[0], &cuts[1], &cuts[2]])?;
    let first = decompose3(&t, r, opts)?;
    let mut values = vec![Vec::new(); p];
    for (a, vals) in values.iter_mut().enumerate().take(3) {
        *vals = read(&first.factors[a], a);
    }
    let anchor = |f: &crate::recovery::RecoveredFactors| -> Vec<Vec<f64>> {
        (0..r).map(|i| f.factors[0].row(i).iter().chain(f.factors[1].row(i)).copied().collect()).collect()
    };
    let reference = anchor(&first);
    let mut chaining = vec![(0..r).collect::<Vec<usize>>(); p];
    let mut max_residual = first.residual;
    for j in 3..p {
        let t = mixture.binned_tensor([0, 1, j], [&cuts[0], &cuts[1], &cuts[j]])?;
        let run = decompose3(&t, r, opts)?;
        max_residual = max_residual.max(run.residual);
        let perm = chain_labels(&reference, &anchor(&run))?;
        let raw = read(&run.factors[2], j);
        values[j] = perm.iter().map(|&i| raw[i].clone()).collect();
        chaining[j] = perm;
    }
    Ok(MixtureRecovery { pi: first.pi.to_vec(), values, cuts, chaining, max_residual })
}

/// Best label permutation of a recovery against the true mixture, and the
/// max-abs error of weights and CDF values under it.
pub fn align_mixture(
    recovered: &MixtureRecovery,
    truth: &NonparametricMixture,
    query_points: &[Vec<Vec<f64>>],
) -> (Vec<usize>, f64) {
    let r = truth.r();
    let exact: Vec<Vec<Vec<f64>>> = (0..truth.p())
        .map(|j| {
            (0..r)
                .map(|i| query_points[j].iter().map(|t| truth.components[i][j].eval(t)).collect())
                .collect()
        })
        .collect();
    let cost = |perm: &[usize]| {
        let mut e: f64 = 0.0;
        for k in 0..r {
            let i = perm[k];
            e = e.max((recovered.pi[i] - truth.pi[k]).abs());
            for j in 0..truth.p() {
                for (x, y) in recovered.values[j][i].iter().zip(&exact[j][k]) {
                    e = e.max((x - y).abs());
                }
            }
        }
        e
    };
    let a = best_permutation(r, cost);
    (a.permutation, a.max_abs_error)
}
