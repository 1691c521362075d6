//! Dense matrices and probability tensors.
//!
//! Every array in this crate is stored row-major with the last index varying
//! fastest. Composite indices built from several variables follow the same
//! mixed-radix rule: the first variable is the most significant digit. The
//! row tensor product in [`khatri_rao`] and the regrouping in [`clump_tensor`]
//! both use this convention, which is what lets [`unclump`] invert them.

mod ops;
mod rank;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ops::{clump_tensor, khatri_rao, kron, triple_product, unclump};
pub use rank::{first_primes, kruskal_rank, kruskal_rank_capped, numerical_rank, vandermonde_witness};

/// Relative tolerance used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Tolerance on row sums of stochastic matrices and totals of distributions.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Largest negative entry tolerated in a probability tensor.
pub const NEG_TOL: f64 = 1e-12;
/// Row cap for exhaustive Kruskal rank enumeration.
pub const KRUSKAL_ROW_CAP: usize = 20;
/// Default cap on the number of entries of any materialized table.
pub const ENTRY_CAP: usize = 1 << 24;

pub(crate) fn check_entry_count(dims: &[usize], cap: usize) -> Result<usize> {
    let entries = dims.iter().fold(1u128, |acc, &d| acc.saturating_mul(d as u128));
    if entries > cap as u128 {
        return Err(Error::TooLarge { entries, cap });
    }
    Ok(entries as usize)
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DimsData", into = "DimsData")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyInput);
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptyInput)?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Single-column matrix of ones.
    pub fn ones_column(rows: usize) -> Self {
        Self { rows, cols: 1, data: vec![1.0; rows] }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Returns `diag(scales) * self`.
    pub fn scale_rows(&self, scales: &[f64]) -> Matrix {
        let mut out = self.clone();
        for (i, &s) in scales.iter().enumerate().take(self.rows) {
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        max_abs_diff(&self.data, &other.data)
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        self.data.iter().all(|&x| (-tol..=1.0 + tol).contains(&x))
            && self.row_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A matrix whose rows are probability vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StochasticMatrix(Matrix);

impl StochasticMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        Self::with_tol(m, ROW_SUM_TOL)
    }

    pub fn with_tol(m: Matrix, tol: f64) -> Result<Self> {
        if !m.is_stochastic(tol) {
            return Err(Error::InvalidModel("matrix rows are not probability vectors".into()));
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Clamps entries within `tol` below zero and renormalizes every row.
    pub fn normalized(mut m: Matrix, tol: f64) -> Result<Self> {
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            if let Some(&bad) = row.iter().find(|&&x| x < -tol) {
                return Err(Error::NegativeWeights(bad));
            }
            row.iter_mut().for_each(|x| *x = x.max(0.0));
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidModel("row has no mass".into()));
            }
            row.iter_mut().for_each(|x| *x /= s);
        }
        Ok(Self(m))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl AsRef<Matrix> for Matrix {
    fn as_ref(&self) -> &Matrix {
        self
    }
}

impl AsRef<Matrix> for StochasticMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

impl Deref for StochasticMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl<'de> Deserialize<'de> for StochasticMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Matrix::deserialize(d)?;
        StochasticMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0 || *w > 1.0 + ROW_SUM_TOL) {
            return Err(Error::InvalidModel("weights must lie in (0, 1]".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {s}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbabilityVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for ProbabilityVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        ProbabilityVector::new(v).map_err(serde::de::Error::custom)
    }
}

/// Three-way array indexed `(u, v, w)`, `w` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DimsData", into = "DimsData")]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::EmptyInput);
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!("{dims:?} vs {} entries", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, w: usize) -> f64 {
        self.data[(u * self.dims[1] + v) * self.dims[2] + w]
    }

    #[inline]
    pub(crate) fn get_mut(&mut self, u: usize, v: usize, w: usize) -> &mut f64 {
        let [_, d1, d2] = self.dims;
        &mut self.data[(u * d1 + v) * d2 + w]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Checks nonnegativity within [`NEG_TOL`] and unit total within `tol`.
    pub fn is_distribution(&self, tol: f64) -> bool {
        self.data.iter().all(|&x| x >= -NEG_TOL) && (self.sum() - 1.0).abs() <= tol
    }

    /// Mode-1 unfolding: `dims[0] x (dims[1] * dims[2])`.
    pub fn unfold_first(&self) -> Matrix {
        Matrix { rows: self.dims[0], cols: self.dims[1] * self.dims[2], data: self.data.clone() }
    }

    /// Weighted sum of the frontal slices over the third index.
    pub fn contract_third(&self, weights: &[f64]) -> Matrix {
        let [d0, d1, d2] = self.dims;
        let mut out = Matrix::zeros(d0, d1);
        for u in 0..d0 {
            for v in 0..d1 {
                let base = (u * d1 + v) * d2;
                let s: f64 = self.data[base..base + d2].iter().zip(weights).map(|(x, w)| x * w).sum();
                out.set(u, v, s);
            }
        }
        out
    }

    /// Marginal table over the chosen modes (`keep[i]` true keeps mode `i`).
    pub fn marginal(&self, keep: [bool; 3]) -> Vec<f64> {
        let [d0, d1, d2] = self.dims;
        let kd = [if keep[0] { d0 } else { 1 }, if keep[1] { d1 } else { 1 }, if keep[2] { d2 } else { 1 }];
        let mut out = vec![0.0; kd.iter().product()];
        for u in 0..d0 {
            for v in 0..d1 {
                for w in 0..d2 {
                    let (a, b, c) = (if keep[0] { u } else { 0 }, if keep[1] { v } else { 0 }, if keep[2] { w } else { 0 });
                    out[(a * kd[1] + b) * kd[2] + c] += self.get(u, v, w);
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims);
        max_abs_diff(&self.data, &other.data)
    }
}

/// Joint table over `p` finite variables, last index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DimsData", into = "DimsData")]
pub struct TensorP {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl TensorP {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::EmptyInput);
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!("{dims:?} vs {} entries", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[flat_index(index, &self.dims)]
    }

    pub fn is_distribution(&self, tol: f64) -> bool {
        self.data.iter().all(|&x| x >= -NEG_TOL) && (self.sum() - 1.0).abs() <= tol
    }
}

/// Mixed-radix flattening, first digit most significant.
pub fn flat_index(digits: &[usize], radices: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

/// Inverse of [`flat_index`].
pub fn digits_of(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = index % r;
        index /= r;
    }
    out
}

/// Three disjoint nonempty blocks of variable indices (0-based) covering `0..p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tripartition {
    pub blocks: [Vec<usize>; 3],
}

impl Tripartition {
    /// Validates the blocks against `p` variables; indices inside each block are sorted.
    pub fn new(blocks: [Vec<usize>; 3], p: usize) -> Result<Self> {
        let mut seen = vec![false; p];
        let mut blocks = blocks;
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(Error::BadPartition("empty block".into()));
            }
            b.sort_unstable();
            for &j in b.iter() {
                if j >= p {
                    return Err(Error::BadPartition(format!("index {j} out of range for p = {p}")));
                }
                if seen[j] {
                    return Err(Error::BadPartition(format!("index {j} appears twice")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::BadPartition("blocks do not cover every variable".into()));
        }
        Ok(Self { blocks })
    }

    pub fn clumped_dims(&self, kappas: &[usize]) -> [usize; 3] {
        let prod = |b: &Vec<usize>| b.iter().map(|&j| kappas[j]).product();
        [prod(&self.blocks[0]), prod(&self.blocks[1]), prod(&self.blocks[2])]
    }
}

impl std::fmt::Display for Tripartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |b: &Vec<usize>| b.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",");
        write!(f, "({{{}}}, {{{}}}, {{{}}})", show(&self.blocks[0]), show(&self.blocks[1]), show(&self.blocks[2]))
    }
}

/// Serialized form shared by matrices and tensors.
#[derive(Serialize, Deserialize)]
struct DimsData {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<DimsData> for Matrix {
    type Error = Error;
    fn try_from(d: DimsData) -> Result<Self> {
        match d.dims.as_slice() {
            &[r, c] => Matrix::new(r, c, d.data),
            other => Err(Error::DimensionMismatch(format!("matrix needs 2 dims, got {}", other.len()))),
        }
    }
}

impl From<Matrix> for DimsData {
    fn from(m: Matrix) -> Self {
        DimsData { dims: vec![m.rows, m.cols], data: m.data }
    }
}

impl TryFrom<DimsData> for Tensor3 {
    type Error = Error;
    fn try_from(d: DimsData) -> Result<Self> {
        match d.dims.as_slice() {
            &[a, b, c] => Tensor3::new([a, b, c], d.data),
            other => Err(Error::DimensionMismatch(format!("tensor needs 3 dims, got {}", other.len()))),
        }
    }
}

impl From<Tensor3> for DimsData {
    fn from(t: Tensor3) -> Self {
        DimsData { dims: t.dims.to_vec(), data: t.data }
    }
}

impl TryFrom<DimsData> for TensorP {
    type Error = Error;
    fn try_from(d: DimsData) -> Result<Self> {
        TensorP::new(d.dims, d.data)
    }
}

impl From<TensorP> for DimsData {
    fn from(t: TensorP) -> Self {
        DimsData { dims: t.dims, data: t.data }
    }
}
