//! Python bindings. Partitions cross the boundary as lists of 1-based blocks,
//! compositions as lists of block sizes.

use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gibbs_frag::eppf::{self, Eppf, GibbsWeights, TwoParamPd};
use gibbs_frag::fragcoag::{self, FragParams, ZetaLaw};
use gibbs_frag::partitions::{self as parts, Composition};
use gibbs_frag::samplers::{self, RngStream};
use gibbs_frag::special_fn::{self as sf, StableIndex};
use gibbs_frag::tilt::TiltFunction;
use gibbs_frag::verify::{self, ExperimentReport, SuiteOptions};
use gibbs_frag::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numeric { .. } => PyArithmeticError::new_err(e.to_string()),
        Error::Efficiency(_) | Error::DegenerateTest(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for gibbs_frag::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn idx(a: f64) -> PyResult<StableIndex> {
    StableIndex::new(a).py()
}

fn comp(sizes: Vec<usize>) -> PyResult<Composition> {
    Composition::new(sizes).py()
}

/// Seeded random stream; `substream(i)` gives independent child streams.
#[pyclass(name = "RngStream")]
struct PyRng(RngStream);

#[pymethods]
impl PyRng {
    #[new]
    #[pyo3(signature = (seed, stream = 0))]
    fn new(seed: u64, stream: u64) -> Self {
        PyRng(RngStream::new(seed, stream))
    }

    fn substream(&self, id: u64) -> Self {
        PyRng(self.0.substream(id))
    }

    fn uniform(&mut self) -> f64 {
        self.0.uniform()
    }
}

/// Partition of {1..n} into blocks, kept in canonical order.
#[pyclass(name = "SetPartition", eq, hash, frozen, skip_from_py_object)]
#[derive(Clone, PartialEq, Hash)]
struct PySetPartition(parts::SetPartition);

#[pymethods]
impl PySetPartition {
    #[new]
    fn new(blocks: Vec<Vec<usize>>) -> PyResult<Self> {
        Ok(PySetPartition(parts::SetPartition::new(blocks).py()?))
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PySetPartition(parts::SetPartition::from_json(s).py()?))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn blocks(&self) -> Vec<Vec<usize>> {
        self.0.blocks().to_vec()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    /// Block sizes in order of least elements.
    fn composition(&self) -> Vec<usize> {
        self.0.composition().sizes().to_vec()
    }

    fn restrict(&self, m: usize) -> PyResult<Self> {
        Ok(PySetPartition(self.0.restrict(m).py()?))
    }

    /// Merges the blocks whose indices share a block of `q`, a partition of `[k]`.
    fn coagulate(&self, q: &PySetPartition) -> PyResult<Self> {
        Ok(PySetPartition(parts::coagulate(&self.0, &q.0).py()?))
    }

    fn __repr__(&self) -> String {
        format!("SetPartition({})", self.0.to_json())
    }
}

/// Ranked masses with the unranked remainder as `tail`.
#[pyclass(name = "MassPartition", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMassPartition(parts::MassPartition);

#[pymethods]
impl PyMassPartition {
    #[new]
    #[pyo3(signature = (weights, tail = 0.0))]
    fn new(weights: Vec<f64>, tail: f64) -> PyResult<Self> {
        Ok(PyMassPartition(parts::MassPartition::new(weights, tail).py()?))
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn tail(&self) -> f64 {
        self.0.tail()
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    /// `Gamma(1 - alpha) eps^alpha #{P_j >= eps}`, the small-eps estimate of the alpha-diversity.
    fn diversity(&self, alpha: f64, eps: f64) -> PyResult<f64> {
        parts::diversity_estimate(&self.0, idx(alpha)?, eps).py()
    }

    fn __repr__(&self) -> String {
        format!("MassPartition({})", self.0.to_json())
    }
}

enum Law {
    Pd(TwoParamPd),
    Gibbs(GibbsWeights),
}

impl Law {
    fn eppf(&self) -> &dyn Eppf {
        match self {
            Law::Pd(p) => p,
            Law::Gibbs(g) => g,
        }
    }
}

/// An exchangeable partition law: two-parameter Poisson-Dirichlet or a Gibbs
/// law from a tilted stable subordinator.
#[pyclass(name = "PartitionLaw", frozen)]
struct PyLaw {
    law: Law,
    label: String,
}

#[pymethods]
impl PyLaw {
    /// PD(alpha, theta), theta > -alpha.
    #[staticmethod]
    fn pd(alpha: f64, theta: f64) -> PyResult<Self> {
        Ok(PyLaw { law: Law::Pd(TwoParamPd::new(idx(alpha)?, theta).py()?), label: format!("pd({alpha},{theta})") })
    }

    /// Generalized gamma tilt `exp(-zeta t)` of order `m`, weights up to `n_max`.
    #[staticmethod]
    #[pyo3(signature = (alpha, zeta, n_max, m = 0))]
    fn gg(alpha: f64, zeta: f64, n_max: usize, m: u8) -> PyResult<Self> {
        let h = TiltFunction::gg_zeta(idx(alpha)?, zeta, m).py()?;
        Ok(PyLaw { law: Law::Gibbs(GibbsWeights::from_tilt(&h, n_max).py()?), label: h.label() })
    }

    /// Mittag-Leffler tilt with parameter `lam`, weights up to `n_max`.
    #[staticmethod]
    fn ml(alpha: f64, lam: f64, n_max: usize) -> PyResult<Self> {
        let h = TiltFunction::ml_lambda(idx(alpha)?, lam).py()?;
        Ok(PyLaw { law: Law::Gibbs(GibbsWeights::from_tilt(&h, n_max).py()?), label: h.label() })
    }

    /// PD(beta, 0) given `T_beta = y`.
    #[staticmethod]
    fn conditional(beta: f64, y: f64, n_max: usize) -> PyResult<Self> {
        Ok(PyLaw { law: Law::Gibbs(GibbsWeights::cond(idx(beta)?, y, n_max).py()?), label: format!("cond({beta}|{y})") })
    }

    /// Probability of any one set partition with these block sizes.
    fn prob(&self, sizes: Vec<usize>) -> PyResult<f64> {
        self.law.eppf().prob(&comp(sizes)?).py()
    }

    fn sample(&self, n: usize, rng: &mut PyRng) -> PyResult<PySetPartition> {
        Ok(PySetPartition(samplers::sample_eppf_partition(self.law.eppf(), n, &mut rng.0).py()?))
    }

    #[getter]
    fn label(&self) -> String {
        self.label.clone()
    }
}

#[pyfunction]
fn stable_pdf(alpha: f64, t: f64) -> PyResult<f64> {
    sf::stable_pdf(idx(alpha)?, t).py()
}

#[pyfunction]
fn stable_cdf(alpha: f64, t: f64) -> PyResult<f64> {
    sf::stable_cdf(idx(alpha)?, t).py()
}

#[pyfunction]
fn ml_pdf(alpha: f64, s: f64) -> PyResult<f64> {
    sf::ml_pdf(idx(alpha)?, s).py()
}

#[pyfunction]
fn gml_pdf(alpha: f64, theta: f64, s: f64) -> PyResult<f64> {
    sf::gml_pdf(idx(alpha)?, theta, s).py()
}

#[pyfunction]
fn hermite_fn(q: f64, s: f64) -> PyResult<f64> {
    sf::hermite_fn(q, s).py()
}

#[pyfunction]
fn gen_stirling(alpha: f64, n: usize, k: usize) -> PyResult<f64> {
    sf::gen_stirling(idx(alpha)?, n, k).py()
}

/// Density of `T_beta` given `k` blocks among `n` items.
#[pyfunction]
fn tilted_y_pdf(beta: f64, n: usize, k: usize, y: f64) -> PyResult<f64> {
    sf::tilted_y_pdf(idx(beta)?, n, k, y).py()
}

#[pyfunction]
fn pd_eppf(alpha: f64, theta: f64, sizes: Vec<usize>) -> PyResult<f64> {
    eppf::pd_eppf(idx(alpha)?, theta, &comp(sizes)?).py()
}

#[pyfunction]
fn cond_eppf(beta: f64, y: f64, sizes: Vec<usize>) -> PyResult<f64> {
    eppf::cond_eppf(idx(beta)?, y, &comp(sizes)?).py()
}

#[pyfunction]
fn frag_cond_eppf(alpha: f64, beta: f64, y: f64, sizes: Vec<usize>) -> PyResult<f64> {
    eppf::frag_cond_eppf(idx(alpha)?, idx(beta)?, y, &comp(sizes)?).py()
}

/// `P(K_n = k)` under PD(alpha, 0).
#[pyfunction]
fn blocks_pmf(alpha: f64, n: usize, k: usize) -> PyResult<f64> {
    eppf::blocks_pmf(idx(alpha)?, n, k).py()
}

#[pyfunction]
fn enumerate_set_partitions(n: usize) -> PyResult<Vec<PySetPartition>> {
    Ok(parts::enumerate_set_partitions(n).py()?.into_iter().map(PySetPartition).collect())
}

#[pyfunction]
fn sample_gem(alpha: f64, theta: f64, count: usize, rng: &mut PyRng) -> PyResult<PyMassPartition> {
    Ok(PyMassPartition(samplers::sample_gem(idx(alpha)?, theta, count, &mut rng.0).py()?))
}

#[pyfunction]
fn paint_box(m: &PyMassPartition, n: usize, rng: &mut PyRng) -> PyResult<PySetPartition> {
    Ok(PySetPartition(samplers::paint_box(m.0.weights(), n, &mut rng.0).py()?))
}

fn frag_params(alpha: f64, beta: f64) -> PyResult<FragParams> {
    FragParams::new(idx(alpha)?, idx(beta)?).py()
}

/// Splits every block by an independent PD(alpha, -beta) partition.
#[pyfunction]
fn frag(p: &PySetPartition, alpha: f64, beta: f64, rng: &mut PyRng) -> PyResult<PySetPartition> {
    Ok(PySetPartition(fragcoag::frag_set_partition(&p.0, &frag_params(alpha, beta)?, &mut rng.0).py()?))
}

#[pyfunction]
#[pyo3(signature = (m, alpha, beta, rng, sticks_per_mass = 1000))]
fn frag_masses(m: &PyMassPartition, alpha: f64, beta: f64, rng: &mut PyRng, sticks_per_mass: usize) -> PyResult<PyMassPartition> {
    let fp = frag_params(alpha, beta)?;
    Ok(PyMassPartition(fragcoag::frag_mass_partition(&m.0, &fp, sticks_per_mass, &mut rng.0).py()?))
}

/// One draw of the generalized gamma dual pair with gamma-randomized zeta:
/// returns `(v_tilde, q, v)`, `v` the coagulation of `v_tilde` by `q`.
#[pyfunction]
fn gg_dual(
    alpha: f64,
    beta: f64,
    theta: f64,
    m: u8,
    n: usize,
    rng: &mut PyRng,
) -> PyResult<(PySetPartition, PySetPartition, PySetPartition)> {
    let fp = frag_params(alpha, beta)?;
    let d = fragcoag::gg_dual_demo(&fp, ZetaLaw::PdTheta { theta }, m, n, &mut rng.0).py()?;
    Ok((PySetPartition(d.draw.pair.v_tilde), PySetPartition(d.draw.pair.q), PySetPartition(d.draw.v)))
}

#[pyclass(name = "Report", frozen, get_all)]
struct PyReport {
    name: String,
    statistic: f64,
    p_value: Option<f64>,
    abs_error: Option<f64>,
    n_samples: u64,
    passed: bool,
    seed: u64,
    runtime_ms: u64,
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!("Report({}, pass={})", self.name, self.passed)
    }
}

impl From<ExperimentReport> for PyReport {
    fn from(r: ExperimentReport) -> Self {
        PyReport {
            name: r.name,
            statistic: r.statistic,
            p_value: r.p_value,
            abs_error: r.abs_error,
            n_samples: r.n_samples,
            passed: r.pass,
            seed: r.seed,
            runtime_ms: r.runtime_ms,
        }
    }
}

/// Runs one registered verification experiment; unset parameters take the
/// experiment's defaults.
#[pyfunction]
#[pyo3(signature = (name, seed = 0, alpha = None, beta = None, theta = None, n = None, samples = None))]
fn run_experiment(
    py: Python<'_>,
    name: &str,
    seed: u64,
    alpha: Option<f64>,
    beta: Option<f64>,
    theta: Option<f64>,
    n: Option<usize>,
    samples: Option<usize>,
) -> PyResult<Vec<PyReport>> {
    if !verify::EXPERIMENTS.contains(&name) {
        return Err(PyValueError::new_err(format!("unknown experiment '{name}'")));
    }
    let o = SuiteOptions { alpha, beta, theta, n, samples, ..Default::default() };
    let rows = py.detach(|| verify::run_experiment(name, seed, &o)).py()?;
    Ok(rows.into_iter().map(PyReport::from).collect())
}

#[pymodule]
fn gibbs_frag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRng>()?;
    m.add_class::<PySetPartition>()?;
    m.add_class::<PyMassPartition>()?;
    m.add_class::<PyLaw>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(stable_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(stable_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(ml_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(gml_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(hermite_fn, m)?)?;
    m.add_function(wrap_pyfunction!(gen_stirling, m)?)?;
    m.add_function(wrap_pyfunction!(tilted_y_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(pd_eppf, m)?)?;
    m.add_function(wrap_pyfunction!(cond_eppf, m)?)?;
    m.add_function(wrap_pyfunction!(frag_cond_eppf, m)?)?;
    m.add_function(wrap_pyfunction!(blocks_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_set_partitions, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gem, m)?)?;
    m.add_function(wrap_pyfunction!(paint_box, m)?)?;
    m.add_function(wrap_pyfunction!(frag, m)?)?;
    m.add_function(wrap_pyfunction!(frag_masses, m)?)?;
    m.add_function(wrap_pyfunction!(gg_dual, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("EXPERIMENTS", verify::EXPERIMENTS.to_vec())?;
    Ok(())
}
