//! Python bindings: series sets, coalition formation, baselines and sweeps.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use prosumer_coalitions::coalition::{self, ContractMode, FormationOptions, GridRequirements, Schedule};
use prosumer_coalitions::experiment::{self, RunConfig};
use prosumer_coalitions::timeseries::{self, SeriesSet};
use prosumer_coalitions::{AgentId, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(pycoalitions, CoalitionError, PyRuntimeError);
create_exception!(pycoalitions, ConfigError, PyValueError);
create_exception!(pycoalitions, InfeasibleError, CoalitionError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Validation { .. } | Error::Configuration(_) => ConfigError::new_err(msg),
        Error::InvalidArgument(_) | Error::PhiBoundary(_) | Error::Length { .. } => PyValueError::new_err(msg),
        Error::Infeasible { .. } | Error::ScanBudget { .. } => InfeasibleError::new_err(msg),
        Error::Io(_) => PyOSError::new_err(msg),
        _ => CoalitionError::new_err(msg),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn to_ids(v: &[AgentId]) -> Vec<u32> {
    v.iter().map(|a| a.0).collect()
}

/// Equal-length hourly series of a set of agents.
#[pyclass(frozen, skip_from_py_object, name = "Series", module = "pycoalitions")]
#[derive(Clone)]
struct PySeries {
    inner: SeriesSet,
}

#[pymethods]
impl PySeries {
    /// `values[i]` is the hourly series of agent `ids[i]` (default `0..n`).
    #[new]
    #[pyo3(signature = (values, ids=None, start="2006-01-01T00:00:00"))]
    fn new(values: Vec<Vec<f64>>, ids: Option<Vec<u32>>, start: &str) -> PyResult<Self> {
        let start = start
            .parse()
            .map_err(|e| PyValueError::new_err(format!("bad start `{start}`: {e}")))?;
        let ids = ids.unwrap_or_else(|| (0..values.len() as u32).collect());
        if ids.len() != values.len() {
            return Err(PyValueError::new_err(format!("{} ids for {} series", ids.len(), values.len())));
        }
        let series = ids.into_iter().map(AgentId).zip(values).collect();
        Ok(PySeries {
            inner: SeriesSet::new(start, series).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| py_err(e.into()))?;
        Ok(PySeries {
            inner: SeriesSet::read_csv(BufReader::new(f)).map_err(py_err)?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| py_err(e.into()))?;
        self.inner.write_csv(BufWriter::new(f)).map_err(py_err)
    }

    #[getter]
    fn ids(&self) -> Vec<u32> {
        to_ids(self.inner.ids())
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    #[getter]
    fn start(&self) -> String {
        self.inner.start().format("%Y-%m-%dT%H:%M:%S").to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn values(&self, id: u32) -> PyResult<Vec<f64>> {
        self.inner
            .get(AgentId(id))
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyValueError::new_err(format!("no agent {id}")))
    }

    /// Hours `start..end`.
    fn slice(&self, start: usize, end: usize) -> PyResult<Self> {
        if start > end || end > self.inner.len() {
            return Err(PyValueError::new_err(format!("bad range {start}..{end}")));
        }
        Ok(PySeries {
            inner: self.inner.slice(start..end).map_err(py_err)?,
        })
    }

    /// Pearson matrix over the agents with non-constant series.
    fn correlation(&self) -> PyResult<(Vec<u32>, Vec<Vec<f64>>)> {
        let m = timeseries::correlation_matrix_excluding_degenerate(&self.inner).map_err(py_err)?;
        let n = m.n();
        let rows = (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect();
        Ok((to_ids(m.ids()), rows))
    }

    fn __repr__(&self) -> String {
        format!("Series({} agents x {} hours)", self.inner.n_agents(), self.inner.len())
    }
}

#[pyclass(frozen, skip_from_py_object, get_all, name = "Coalition", module = "pycoalitions")]
#[derive(Clone)]
struct PyCoalition {
    members: Vec<u32>,
    mu: f64,
    sigma: f64,
    p_phi: f64,
    contract: Option<f64>,
    valid: bool,
    utility: f64,
}

#[pymethods]
impl PyCoalition {
    fn __len__(&self) -> usize {
        self.members.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Coalition(size={}, p_phi={:.3}, valid={})",
            self.members.len(),
            self.p_phi,
            if self.valid { "True" } else { "False" }
        )
    }
}

#[pyclass(frozen, name = "Structure", module = "pycoalitions")]
struct PyStructure {
    inner: coalition::CoalitionStructure,
}

#[pymethods]
impl PyStructure {
    #[getter]
    fn coalitions(&self) -> Vec<PyCoalition> {
        self.inner
            .coalitions
            .iter()
            .map(|c| PyCoalition {
                members: to_ids(&c.members),
                mu: c.mu,
                sigma: c.sigma,
                p_phi: c.p_phi,
                contract: c.contract,
                valid: c.valid,
                utility: c.utility,
            })
            .collect()
    }

    #[getter]
    fn unassigned(&self) -> Vec<u32> {
        to_ids(&self.inner.unassigned)
    }

    #[getter]
    fn algorithm(&self) -> String {
        self.inner.provenance.algorithm().to_string()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn epsilon_star(&self) -> Option<f64> {
        match &self.inner.provenance {
            coalition::Provenance::Percolation { epsilon_star, .. } => Some(*epsilon_star),
            _ => None,
        }
    }

    #[getter]
    fn welfare(&self) -> f64 {
        self.inner.welfare()
    }

    /// Percentage of coalitions whose contract clears `p_min`.
    #[getter]
    fn acceptance(&self) -> PyResult<f64> {
        coalition::acceptance_percentage(&self.inner).map_err(py_err)
    }

    /// Held-out shortfall frequency of each coalition (`None` if not valid).
    fn reliability(&self, held_out: &PySeries) -> PyResult<Vec<Option<f64>>> {
        self.inner
            .coalitions
            .iter()
            .map(|c| {
                c.contract
                    .map(|_| coalition::empirical_reliability(c, &held_out.inner))
                    .transpose()
                    .map_err(py_err)
            })
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| py_err(e.into()))
    }

    fn __len__(&self) -> usize {
        self.inner.coalitions.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Structure({}, {} coalitions, welfare={:.3})",
            self.inner.provenance.algorithm(),
            self.inner.coalitions.len(),
            self.inner.welfare()
        )
    }
}

#[pyfunction]
fn max_contract(mu: f64, sigma: f64, phi: f64) -> PyResult<f64> {
    coalition::max_contract(mu, sigma, phi).map_err(py_err)
}

#[pyfunction]
fn shortfall_probability(mu: f64, sigma: f64, contract: f64) -> f64 {
    coalition::shortfall_probability(mu, sigma, contract)
}

#[pyfunction]
fn empirical_max_contract(values: Vec<f64>, phi: f64) -> PyResult<f64> {
    coalition::empirical_max_contract(&values, phi).map_err(py_err)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    timeseries::pearson(&a, &b).map_err(py_err)
}

#[pyfunction]
fn deseasonalize(values: Vec<f64>, window_days: usize) -> PyResult<Vec<f64>> {
    timeseries::deseasonalize(&values, window_days).map_err(py_err)
}

/// Available-power series of one realization of a JSON run config.
#[pyfunction]
#[pyo3(signature = (config, realization=0))]
fn simulate(py: Python<'_>, config: &str, realization: usize) -> PyResult<PySeries> {
    let cfg = RunConfig::from_json(config).map_err(py_err)?;
    cfg.validate_simulation().map_err(py_err)?;
    let sim = py
        .detach(|| experiment::simulate_realization(&cfg, realization))
        .map_err(py_err)?;
    Ok(PySeries { inner: sim.series })
}

/// Deseasonalized formation and held-out parts of a raw series set.
#[pyfunction]
#[pyo3(signature = (series, split=0.8, window_days=30))]
fn prepare(series: &PySeries, split: f64, window_days: usize) -> PyResult<(PySeries, Option<PySeries>)> {
    let (train, test) = experiment::prepare(&series.inner, split, window_days).map_err(py_err)?;
    Ok((PySeries { inner: train }, test.map(|inner| PySeries { inner })))
}

/// Threshold and seed cliques for `n_coal` coalitions.
#[pyfunction]
#[pyo3(signature = (series, n_coal, k_min=2))]
fn epsilon_star(py: Python<'_>, series: &PySeries, n_coal: usize, k_min: usize) -> PyResult<(f64, Vec<Vec<u32>>)> {
    let ctx = coalition::FormationContext::new(&series.inner).map_err(py_err)?;
    let opts = FormationOptions {
        k_min,
        ..FormationOptions::default()
    };
    let eps = py.detach(|| ctx.seeds(n_coal, &opts)).map_err(py_err)?;
    let seeds = eps.seeds.cliques.iter().map(|c| to_ids(c)).collect();
    Ok((eps.epsilon, seeds))
}

#[pyfunction]
#[pyo3(signature = (series, phi, p_min, n_coal, mode="analytic", k_min=2, schedule="sequential"))]
#[allow(clippy::too_many_arguments)]
fn form_coalitions(
    py: Python<'_>,
    series: &PySeries,
    phi: f64,
    p_min: f64,
    n_coal: usize,
    mode: &str,
    k_min: usize,
    schedule: &str,
) -> PyResult<PyStructure> {
    let req = GridRequirements::new(phi, p_min, n_coal).map_err(py_err)?;
    let mode: ContractMode = parse(mode)?;
    let schedule = match schedule {
        "sequential" => Schedule::Sequential,
        "independent" => Schedule::Independent,
        other => return Err(PyValueError::new_err(format!("unknown schedule `{other}`"))),
    };
    let opts = FormationOptions {
        k_min,
        schedule,
        ..FormationOptions::default()
    };
    let inner = py
        .detach(|| coalition::form_coalitions(&series.inner, req, mode, &opts))
        .map_err(py_err)?;
    Ok(PyStructure { inner })
}

#[pyfunction]
#[pyo3(signature = (series, phi, p_min, n_coal, seed, mode="analytic"))]
fn random_partition(series: &PySeries, phi: f64, p_min: f64, n_coal: usize, seed: u64, mode: &str) -> PyResult<PyStructure> {
    let req = GridRequirements::new(phi, p_min, n_coal).map_err(py_err)?;
    let ctx = coalition::FormationContext::new(&series.inner).map_err(py_err)?;
    let ev = ctx.evaluator(req, parse(mode)?).map_err(py_err)?;
    let inner = coalition::random_partition(&ev, n_coal, seed).map_err(py_err)?;
    Ok(PyStructure { inner })
}

#[pyfunction]
#[pyo3(signature = (series, phi, p_min, n_coal, mode="analytic"))]
fn correlated_partition(series: &PySeries, phi: f64, p_min: f64, n_coal: usize, mode: &str) -> PyResult<PyStructure> {
    let req = GridRequirements::new(phi, p_min, n_coal).map_err(py_err)?;
    let ctx = coalition::FormationContext::new(&series.inner).map_err(py_err)?;
    let ev = ctx.evaluator(req, parse(mode)?).map_err(py_err)?;
    let inner = coalition::correlated_partition(&ev, ctx.correlation(), n_coal).map_err(py_err)?;
    Ok(PyStructure { inner })
}

/// Runs a JSON config's full grid; returns `{"config_id", "rows", "warnings"}`
/// with one summary row per algorithm run.
#[pyfunction]
fn run(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let cfg = RunConfig::from_json(config).map_err(py_err)?;
    let out = py.detach(|| experiment::run(&cfg)).map_err(py_err)?;
    let doc = serde_json::json!({
        "config_id": out.config_id,
        "rows": experiment::summary_rows(&out, cfg.output.p_min_display_scale),
        "warnings": out.warnings,
    });
    let text = serde_json::to_string(&doc).map_err(|e| py_err(e.into()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pymodule]
fn pycoalitions(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CoalitionError", py.get_type::<CoalitionError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    m.add_class::<PySeries>()?;
    m.add_class::<PyCoalition>()?;
    m.add_class::<PyStructure>()?;
    m.add_function(wrap_pyfunction!(max_contract, m)?)?;
    m.add_function(wrap_pyfunction!(shortfall_probability, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_max_contract, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(deseasonalize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_star, m)?)?;
    m.add_function(wrap_pyfunction!(form_coalitions, m)?)?;
    m.add_function(wrap_pyfunction!(random_partition, m)?)?;
    m.add_function(wrap_pyfunction!(correlated_partition, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
