//! Python bindings. Matrices cross the boundary as lists of rows and
//! tensors as `(dims, flat_data)` pairs with the last index fastest.

use std::cell::RefCell;

use latentid::hmm::{self, HiddenMarkovModel};
use latentid::latent_class::{self, Certificate, LatentClassModel};
use latentid::model_file::{self, Model};
use latentid::nonparametric::{self, NonparametricMixture};
use latentid::random_graph::{self, GraphMixtureModel};
use latentid::recovery::{self, DecomposeOptions};
use latentid::tensor::{self, RANK_TOL};
use latentid::{Matrix, ProbabilityVector, StochasticMatrix, Tensor3, TensorP, Tripartition};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pyo3::create_exception!(latentid_py, LatentIdError, pyo3::exceptions::PyValueError);

type Rows = Vec<Vec<f64>>;

fn err(e: latentid::Error) -> PyErr {
    LatentIdError::new_err(e.to_string())
}

fn matrix(rows: &Rows) -> PyResult<Matrix> {
    Matrix::from_rows(rows).map_err(err)
}

fn stochastic(rows: &Rows) -> PyResult<StochasticMatrix> {
    StochasticMatrix::from_rows(rows).map_err(err)
}

fn options(seed: u64, tol: f64) -> DecomposeOptions {
    DecomposeOptions { seed, tol, ..DecomposeOptions::default() }
}

fn certificate_dict<'py>(py: Python<'py>, cert: &Certificate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("holds", cert.holds)?;
    d.set_item("kruskal_ranks", cert.kruskal_ranks.to_vec())?;
    d.set_item("threshold", cert.threshold)?;
    d.set_item("exhaustive", cert.exhaustive)?;
    d.set_item("witness", cert.witness.as_ref().map(|w| w.blocks.to_vec()))?;
    Ok(d)
}

#[pyclass(name = "LatentClassModel", module = "latentid_py", from_py_object)]
#[derive(Clone)]
struct PyLatentClassModel {
    inner: LatentClassModel,
}

#[pymethods]
impl PyLatentClassModel {
    #[new]
    fn new(pi: Vec<f64>, emissions: Vec<Rows>) -> PyResult<Self> {
        let pi = ProbabilityVector::new(pi).map_err(err)?;
        let emissions = emissions.iter().map(stochastic).collect::<PyResult<_>>()?;
        Ok(Self { inner: LatentClassModel::new(pi, emissions).map_err(err)? })
    }

    #[staticmethod]
    fn random(r: usize, kappas: Vec<usize>, seed: u64) -> Self {
        Self { inner: latentid::sample::latent_class(&mut ChaCha8Rng::seed_from_u64(seed), r, &kappas) }
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    #[getter]
    fn kappas(&self) -> Vec<usize> {
        self.inner.kappas()
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi().to_vec()
    }

    #[getter]
    fn emissions(&self) -> Vec<Rows> {
        self.inner.emissions().iter().map(|m| m.to_rows()).collect()
    }

    /// Full joint table as `(dims, data)`.
    fn joint(&self) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let t = latent_class::joint_distribution(&self.inner).map_err(err)?;
        Ok((t.dims().to_vec(), t.data().to_vec()))
    }

    /// Kruskal certificate, clumping by `tripartition` (0-based) when given.
    #[pyo3(signature = (tripartition=None, tol=RANK_TOL))]
    fn certificate<'py>(
        &self,
        py: Python<'py>,
        tripartition: Option<[Vec<usize>; 3]>,
        tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cert = match tripartition {
            Some(blocks) => {
                let tri = Tripartition::new(blocks, self.inner.p()).map_err(err)?;
                let mut c = latent_class::kruskal_certificate(&self.inner.clumped(&tri).map_err(err)?, tol).map_err(err)?;
                c.witness = Some(tri);
                c
            }
            None => latent_class::kruskal_certificate(&self.inner, tol).map_err(err)?,
        };
        certificate_dict(py, &cert)
    }

    /// Max-abs parameter difference to `other` after the best relabeling.
    fn alignment_error(&self, other: &PyLatentClassModel) -> PyResult<f64> {
        Ok(recovery::align_models(&self.inner, &other.inner).map_err(err)?.max_abs_error)
    }

    fn to_json(&self) -> String {
        model_file::to_json(&Model::LatentClass(self.inner.clone()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match model_file::parse_model(text).map_err(err)? {
            Model::LatentClass(inner) => Ok(Self { inner }),
            other => Err(LatentIdError::new_err(format!("expected latent_class, found {}", other.kind()))),
        }
    }

    fn __repr__(&self) -> String {
        format!("LatentClassModel(r={}, kappas={:?})", self.inner.r(), self.inner.kappas())
    }
}

#[pyclass(name = "HiddenMarkovModel", module = "latentid_py", from_py_object)]
#[derive(Clone)]
struct PyHiddenMarkovModel {
    inner: HiddenMarkovModel,
}

#[pymethods]
impl PyHiddenMarkovModel {
    #[new]
    fn new(a: Rows, b: Rows) -> PyResult<Self> {
        Ok(Self { inner: HiddenMarkovModel::new(stochastic(&a)?, stochastic(&b)?).map_err(err)? })
    }

    #[staticmethod]
    fn random(r: usize, kappa: usize, seed: u64) -> Self {
        Self { inner: HiddenMarkovModel::random(&mut ChaCha8Rng::seed_from_u64(seed), r, kappa) }
    }

    #[getter]
    fn a(&self) -> Rows {
        self.inner.a.to_rows()
    }

    #[getter]
    fn b(&self) -> Rows {
        self.inner.b.to_rows()
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi.to_vec()
    }

    /// Joint law of the `2k + 1` window as `(dims, data)`.
    fn window_tensor(&self, k: usize) -> PyResult<([usize; 3], Vec<f64>)> {
        let t = hmm::window_tensor(&self.inner, k).map_err(err)?;
        Ok((t.dims(), t.data().to_vec()))
    }

    #[pyo3(signature = (k=None, tol=RANK_TOL))]
    fn certificate<'py>(&self, py: Python<'py>, k: Option<usize>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let k = k.unwrap_or_else(|| hmm::min_window(self.inner.r(), self.inner.kappa()));
        let d = certificate_dict(py, &hmm::hmm_certificate(&self.inner, k, tol).map_err(err)?)?;
        d.set_item("k", k)?;
        Ok(d)
    }

    fn alignment_error(&self, other: &PyHiddenMarkovModel) -> PyResult<f64> {
        Ok(hmm::align_hmm(&self.inner, &other.inner).map_err(err)?.max_abs_error)
    }

    fn __repr__(&self) -> String {
        format!("HiddenMarkovModel(r={}, kappa={})", self.inner.r(), self.inner.kappa())
    }
}

#[pyclass(name = "GraphMixtureModel", module = "latentid_py", from_py_object)]
#[derive(Clone)]
struct PyGraphMixtureModel {
    inner: GraphMixtureModel,
}

#[pymethods]
impl PyGraphMixtureModel {
    #[new]
    fn new(pi: Vec<f64>, p: Rows) -> PyResult<Self> {
        let pi = ProbabilityVector::new(pi).map_err(err)?;
        Ok(Self { inner: GraphMixtureModel::new(pi, matrix(&p)?).map_err(err)? })
    }

    fn conditional_graph_matrix(&self, m: usize) -> PyResult<Rows> {
        Ok(random_graph::conditional_graph_matrix(&self.inner, m).map_err(err)?.to_rows())
    }

    #[pyo3(signature = (m=4, tol=RANK_TOL))]
    fn certificate<'py>(&self, py: Python<'py>, m: usize, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        certificate_dict(py, &random_graph::graph_certificate(&self.inner, m, tol).map_err(err)?)
    }

    fn node_state_prior(&self, n: usize) -> PyResult<Vec<f64>> {
        random_graph::node_state_prior(&self.inner.pi, n).map_err(err)
    }

    fn edge_probability(&self, assignment: Vec<usize>, edge: (usize, usize)) -> PyResult<f64> {
        random_graph::single_edge_marginal(&self.inner, &assignment, edge).map_err(err)
    }
}

#[pyclass(name = "NonparametricMixture", module = "latentid_py", from_py_object)]
#[derive(Clone)]
struct PyNonparametricMixture {
    inner: NonparametricMixture,
}

#[pymethods]
impl PyNonparametricMixture {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match model_file::parse_model(text).map_err(err)? {
            Model::Nonparametric(inner) => Ok(Self { inner }),
            other => Err(LatentIdError::new_err(format!("expected nonparametric, found {}", other.kind()))),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (r, block_dims, seed, knots=5))]
    fn random(r: usize, block_dims: Vec<usize>, seed: u64, knots: usize) -> Self {
        let inner = NonparametricMixture::random(&mut ChaCha8Rng::seed_from_u64(seed), r, &block_dims, knots);
        Self { inner }
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi.to_vec()
    }

    /// CDF of variate `j` in class `i` at `point`.
    fn cdf(&self, i: usize, j: usize, point: Vec<f64>) -> PyResult<f64> {
        let comp = self.inner.components.get(i).and_then(|row| row.get(j)).ok_or_else(|| {
            LatentIdError::new_err(format!("no component ({i}, {j})"))
        })?;
        if point.len() != comp.dim() {
            return Err(LatentIdError::new_err("point dimension does not match the block"));
        }
        Ok(comp.eval(&point))
    }

    /// Cut points per coordinate selected for variate `j`.
    #[pyo3(signature = (j, tol=1e-8))]
    fn cut_points(&self, j: usize, tol: f64) -> PyResult<Vec<Vec<f64>>> {
        if j >= self.inner.p() {
            return Err(LatentIdError::new_err(format!("variate {j} out of range")));
        }
        let comps = self.inner.variate(j);
        let cuts = nonparametric::select_cut_points(&comps, &[], &nonparametric::default_grid(&comps), tol).map_err(err)?;
        Ok(cuts.cuts)
    }

    /// Recovers weights and `values[j][i][q]`, the CDF of variate `j` in
    /// class `i` at query point `q`.
    #[pyo3(signature = (query_points, seed=0, tol=1e-8))]
    fn recover(&self, query_points: Vec<Vec<Vec<f64>>>, seed: u64, tol: f64) -> PyResult<(Vec<f64>, Vec<Vec<Vec<f64>>>, f64)> {
        let rec = nonparametric::recover_mixture(&self.inner, &query_points, None, &options(seed, tol)).map_err(err)?;
        let (_, error) = nonparametric::align_mixture(&rec, &self.inner, &query_points);
        Ok((rec.pi, rec.values, error))
    }
}

#[pyfunction]
fn khatri_rao(factors: Vec<Rows>) -> PyResult<Rows> {
    let ms = factors.iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    Ok(tensor::khatri_rao(&ms).map_err(err)?.to_rows())
}

#[pyfunction]
#[pyo3(signature = (rows, tol=RANK_TOL))]
fn kruskal_rank(rows: Rows, tol: f64) -> PyResult<usize> {
    tensor::kruskal_rank(&matrix(&rows)?, tol).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rows, tol=RANK_TOL))]
fn numerical_rank(rows: Rows, tol: f64) -> PyResult<usize> {
    tensor::numerical_rank(&matrix(&rows)?, tol).map_err(err)
}

#[pyfunction]
fn tripartition_search<'py>(py: Python<'py>, r: usize, kappas: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    certificate_dict(py, &latent_class::tripartition_search(r, &kappas).map_err(err)?)
}

#[pyfunction]
fn min_variables_bound(r: usize, kappa: usize) -> PyResult<usize> {
    if r == 0 || kappa < 2 {
        return Err(LatentIdError::new_err("need r >= 1 and kappa >= 2"));
    }
    Ok(latent_class::min_variables_bound(r, kappa))
}

#[pyfunction]
fn min_window(r: usize, kappa: usize) -> PyResult<usize> {
    if r == 0 || kappa < 2 {
        return Err(LatentIdError::new_err("need r >= 1 and kappa >= 2"));
    }
    Ok(hmm::min_window(r, kappa))
}

/// Decomposes a nonnegative three-way tensor into `(pi, [M1, M2, M3], residual)`.
#[pyfunction]
#[pyo3(signature = (dims, data, r, seed=0, tol=1e-8))]
fn decompose3(dims: [usize; 3], data: Vec<f64>, r: usize, seed: u64, tol: f64) -> PyResult<(Vec<f64>, Vec<Rows>, f64)> {
    let t = Tensor3::new(dims, data).map_err(err)?;
    let rec = recovery::decompose3(&t, r, &options(seed, tol)).map_err(err)?;
    Ok((rec.pi.to_vec(), rec.factors.iter().map(|m| m.to_rows()).collect(), rec.residual))
}

/// Recovers a latent-class model from its joint table and a 0-based tripartition.
#[pyfunction]
#[pyo3(signature = (dims, data, r, tripartition, seed=0, tol=1e-8))]
fn recover_latent_class(
    dims: Vec<usize>,
    data: Vec<f64>,
    r: usize,
    tripartition: [Vec<usize>; 3],
    seed: u64,
    tol: f64,
) -> PyResult<(PyLatentClassModel, f64)> {
    let t = TensorP::new(dims, data).map_err(err)?;
    let tri = Tripartition::new(tripartition, t.dims().len()).map_err(err)?;
    let rec = recovery::recover_latent_class(&t, r, &tri, &options(seed, tol)).map_err(err)?;
    Ok((PyLatentClassModel { inner: rec.model }, rec.residual))
}

#[pyfunction]
#[pyo3(signature = (dims, data, r, kappa, k, seed=0, tol=1e-8))]
fn recover_hmm(
    dims: [usize; 3],
    data: Vec<f64>,
    r: usize,
    kappa: usize,
    k: usize,
    seed: u64,
    tol: f64,
) -> PyResult<(PyHiddenMarkovModel, f64)> {
    let t = Tensor3::new(dims, data).map_err(err)?;
    let rec = hmm::recover_hmm(&t, r, kappa, k, &options(seed, tol)).map_err(err)?;
    Ok((PyHiddenMarkovModel { inner: rec.model }, rec.residual))
}

/// Rows, columns and wrapped diagonals of the `m x m` node grid.
#[pyfunction]
fn lattice_partitions(m: usize) -> PyResult<[Vec<Vec<usize>>; 3]> {
    if m < 2 {
        return Err(LatentIdError::new_err("need m >= 2"));
    }
    Ok(random_graph::lattice_partitions(m).families)
}

/// Reads `(pi, p11, p12, p22)` from a shuffled prior and an oracle
/// `oracle(row, (k, l)) -> float`.
#[pyfunction]
#[pyo3(signature = (v_perm, oracle, n, tol=1e-12))]
fn extract_parameters<'py>(
    py: Python<'py>,
    v_perm: Vec<f64>,
    oracle: Bound<'py, PyAny>,
    n: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let failure: RefCell<Option<PyErr>> = RefCell::new(None);
    let call = |row: usize, edge: (usize, usize)| -> f64 {
        match oracle.call1((row, edge)).and_then(|v| v.extract::<f64>()) {
            Ok(x) => x,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let got = random_graph::extract_parameters(&v_perm, call, n, tol);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let got = got.map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("pi", got.pi.to_vec())?;
    d.set_item("p11", got.p11)?;
    d.set_item("p12", got.p12)?;
    d.set_item("p22", got.p22)?;
    d.set_item("equal_weights", got.branch == random_graph::ExtractionBranch::EqualWeights)?;
    Ok(d)
}

/// Validates a model file and returns its family name.
#[pyfunction]
fn model_kind(text: &str) -> PyResult<&'static str> {
    Ok(model_file::parse_model(text).map_err(err)?.kind())
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LatentIdError", m.py().get_type::<LatentIdError>())?;
    m.add_class::<PyLatentClassModel>()?;
    m.add_class::<PyHiddenMarkovModel>()?;
    m.add_class::<PyGraphMixtureModel>()?;
    m.add_class::<PyNonparametricMixture>()?;
    m.add_function(wrap_pyfunction!(khatri_rao, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_rank, m)?)?;
    m.add_function(wrap_pyfunction!(numerical_rank, m)?)?;
    m.add_function(wrap_pyfunction!(tripartition_search, m)?)?;
    m.add_function(wrap_pyfunction!(min_variables_bound, m)?)?;
    m.add_function(wrap_pyfunction!(min_window, m)?)?;
    m.add_function(wrap_pyfunction!(decompose3, m)?)?;
    m.add_function(wrap_pyfunction!(recover_latent_class, m)?)?;
    m.add_function(wrap_pyfunction!(recover_hmm, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_partitions, m)?)?;
    m.add_function(wrap_pyfunction!(extract_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(model_kind, m)?)?;
    Ok(())
}

#[pymodule]
fn latentid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
