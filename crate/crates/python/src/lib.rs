use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use refresh_adam::betagrid::{self, IntervalConvention, RefreshRule};
use refresh_adam::harness::{self, ExperimentRecord, SplitTag, SweepOptions};
use refresh_adam::horizon::{self, ValCurve};
use refresh_adam::io::{self, Workspace};
use refresh_adam::metrics::{self, ExperimentGap, SubsetStats, SubsetSummary};
use refresh_adam::optim::{self, DecayMode, OptimizerConfig, OptimizerState};
use refresh_adam::perturb::{self, PerturbConfig};
use refresh_adam::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for refresh_adam::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Balanced Adam optimizer state over a flat parameter vector.
#[pyclass(module = "refresh_adam")]
struct BalancedAdam {
    config: OptimizerConfig,
    state: Option<OptimizerState>,
}

#[pymethods]
impl BalancedAdam {
    #[new]
    #[pyo3(signature = (beta, epsilon=optim::DEFAULT_EPSILON, weight_decay=0.0, decoupled=false, clip_norm=None))]
    fn new(beta: f64, epsilon: f64, weight_decay: f64, decoupled: bool, clip_norm: Option<f64>) -> PyResult<Self> {
        let mode = if decoupled { DecayMode::Decoupled } else { DecayMode::Coupled };
        let config = OptimizerConfig::new(beta)
            .py()?
            .with_epsilon(epsilon)
            .with_weight_decay(weight_decay, mode)
            .with_clip_norm(clip_norm);
        config.validate().py()?;
        Ok(Self { config, state: None })
    }

    /// Applies one update and returns the new parameters.
    fn step(&mut self, params: Vec<f64>, grads: Vec<f64>, lr: f64) -> PyResult<Vec<f64>> {
        if self.state.is_none() {
            self.state = Some(optim::init_state(params.len()).py()?);
        }
        let state = self.state.as_mut().expect("initialized above");
        let mut params = params;
        optim::adam_step(&mut params, &grads, state, &self.config, lr).py()?;
        Ok(params)
    }

    fn reset(&mut self) {
        self.state = None;
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.config.beta
    }

    #[getter]
    fn t(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.step)
    }

    #[getter]
    fn m(&self) -> Vec<f64> {
        self.state.as_ref().map_or_else(Vec::new, |s| s.m.clone())
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.state.as_ref().map_or_else(Vec::new, |s| s.v.clone())
    }

    fn __repr__(&self) -> String {
        format!("BalancedAdam(beta={}, t={})", self.config.beta, self.t())
    }
}

#[pyclass(module = "refresh_adam", get_all, frozen)]
struct Selection {
    index: usize,
    beta: f64,
    label: String,
    beta_ref: f64,
    clamped: bool,
    refresh_count: f64,
    lower: Option<u64>,
    upper: Option<u64>,
}

#[pymethods]
impl Selection {
    fn __repr__(&self) -> String {
        format!(
            "Selection(label='{}', beta={}, clamped={}, interval=({:?}, {:?}))",
            self.label, self.beta, self.clamped, self.lower, self.upper
        )
    }
}

/// Per-experiment beta sweep summary.
#[pyclass(module = "refresh_adam", name = "ExperimentRecord", from_py_object)]
#[derive(Clone)]
struct PyRecord {
    inner: ExperimentRecord,
}

#[pymethods]
impl PyRecord {
    #[getter]
    fn experiment_id(&self) -> &str {
        &self.inner.experiment_id
    }

    #[getter]
    fn split(&self) -> String {
        self.inner.split.to_string()
    }

    #[getter]
    fn t_es(&self) -> u64 {
        self.inner.t_es
    }

    #[getter]
    fn total_steps(&self) -> u64 {
        self.inner.total_steps
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.inner.betas()
    }

    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.inner.entries.iter().map(|e| e.loss).collect()
    }

    fn oracle_beta(&self) -> PyResult<f64> {
        metrics::oracle_beta(&self.inner).py()
    }

    /// Relative gap of `beta` to the oracle, or None if it was not swept.
    fn gap(&self, beta: f64) -> PyResult<Option<f64>> {
        metrics::gap_for(&self.inner, beta).py()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_record(&path, &self.inner).py()
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentRecord('{}', split={}, t_es={}, betas={})",
            self.inner.experiment_id,
            self.inner.split,
            self.inner.t_es,
            self.inner.entries.len()
        )
    }
}

fn unwrap_records(records: Vec<PyRecord>) -> Vec<ExperimentRecord> {
    records.into_iter().map(|r| r.inner).collect()
}

fn stats_dict<'py>(py: Python<'py>, s: &SubsetStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("count", s.count)?;
    d.set_item("mean", s.mean)?;
    d.set_item("max", s.max)?;
    d.set_item("cvar", s.cvar)?;
    d.set_item("below", s.below)?;
    d.set_item("frac_below", s.frac_below())?;
    Ok(d)
}

fn summary_dict<'py>(py: Python<'py>, s: &SubsetSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, stats) in [("development", &s.development), ("held_out", &s.held_out), ("global", &s.global)] {
        match stats {
            Some(st) => d.set_item(name, stats_dict(py, st)?)?,
            None => d.set_item(name, py.None())?,
        }
    }
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &metrics::GapReport) -> PyResult<Bound<'py, PyDict>> {
    let d = summary_dict(py, &r.summary)?;
    d.set_item("label", &r.label)?;
    let gaps: Vec<(String, String, f64, f64)> = r
        .per_experiment
        .iter()
        .map(|g| (g.experiment_id.clone(), g.split.to_string(), g.beta, g.gap))
        .collect();
    d.set_item("per_experiment", gaps)?;
    d.set_item("warnings", r.warnings.clone())?;
    Ok(d)
}

/// The 13 exact grid values.
#[pyfunction]
fn grid() -> Vec<f64> {
    betagrid::build_grid().values().to_vec()
}

#[pyfunction]
fn grid_labels() -> Vec<String> {
    betagrid::build_grid().labels()
}

#[pyfunction]
fn beta_label(beta: f64) -> String {
    betagrid::beta_label(beta)
}

#[pyfunction]
fn effective_horizon(beta: f64) -> PyResult<f64> {
    optim::effective_horizon(beta).py()
}

/// `(beta_ref, clamped)` for `1 - r0 / t`.
#[pyfunction]
fn refresh_beta(r0: f64, t: u64) -> PyResult<(f64, bool)> {
    let r = betagrid::refresh_beta(r0, t).py()?;
    Ok((r.beta, r.clamped))
}

#[pyfunction]
#[pyo3(signature = (t_es, r0=betagrid::DEFAULT_R0, exact_interval=false))]
fn select_beta(t_es: u64, r0: f64, exact_interval: bool) -> PyResult<Selection> {
    let convention = if exact_interval {
        IntervalConvention::Exact
    } else {
        IntervalConvention::Reported
    };
    let rule = RefreshRule::new(r0, betagrid::build_grid()).py()?.with_convention(convention);
    let s = betagrid::select_beta(&rule, t_es).py()?;
    Ok(Selection {
        index: s.index,
        beta: s.beta,
        label: s.label,
        beta_ref: s.beta_ref,
        clamped: s.clamped,
        refresh_count: s.refresh_count,
        lower: s.interval.lower,
        upper: s.interval.upper,
    })
}

#[pyfunction]
fn round_sig1(x: f64) -> PyResult<f64> {
    horizon::round_sig1(x).py()
}

/// Step of the best validation loss before patience ran out.
#[pyfunction]
#[pyo3(signature = (points, budget, patience, min_delta=0.0))]
fn early_stop_step(points: Vec<(u64, f64)>, budget: u64, patience: u64, min_delta: f64) -> PyResult<u64> {
    let curve = ValCurve::new(points, budget).py()?;
    horizon::early_stop_step(&curve, patience, min_delta).py()
}

#[pyfunction]
#[pyo3(signature = (values, alpha=metrics::DEFAULT_CVAR_ALPHA))]
fn cvar(values: Vec<f64>, alpha: f64) -> PyResult<f64> {
    metrics::cvar(&values, alpha).py()
}

/// Summary statistics for `(experiment_id, split, gap)` triples.
#[pyfunction]
#[pyo3(signature = (gaps, threshold=metrics::DEFAULT_THRESHOLD))]
fn aggregate<'py>(py: Python<'py>, gaps: Vec<(String, String, f64)>, threshold: f64) -> PyResult<Bound<'py, PyDict>> {
    let gaps = gaps
        .into_iter()
        .map(|(experiment_id, split, gap)| {
            Ok(ExperimentGap {
                experiment_id,
                split: split.parse::<SplitTag>().py()?,
                beta: f64::NAN,
                gap,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let report = metrics::aggregate("gaps", gaps, threshold).py()?;
    summary_dict(py, &report.summary)
}

#[pyfunction]
fn load_record(path: PathBuf) -> PyResult<PyRecord> {
    Ok(PyRecord {
        inner: io::read_record(&path).py()?,
    })
}

/// Runs the beta sweep described by a manifest file. With `workspace`, run
/// logs and the record are written there as well.
#[pyfunction]
#[pyo3(signature = (manifest, workspace=None, refine_top_k=None, extra_seeds=None))]
fn sweep(
    py: Python<'_>,
    manifest: PathBuf,
    workspace: Option<PathBuf>,
    refine_top_k: Option<usize>,
    extra_seeds: Option<usize>,
) -> PyResult<PyRecord> {
    let m = io::load_manifest(&manifest).py()?;
    let mut options = SweepOptions::from(&m.sweep);
    options.refine_top_k = refine_top_k.unwrap_or(options.refine_top_k);
    options.extra_seeds = extra_seeds.unwrap_or(options.extra_seeds);
    let outcome = py
        .detach(|| harness::sweep(&m, &betagrid::build_grid(), &options))
        .py()?;
    if let Some(root) = workspace {
        let ws = Workspace::new(root);
        for run in &outcome.runs {
            io::write_runlog(&ws.run_path(run), run).py()?;
        }
        io::write_record(&ws.record_path(&m.experiment_id), &outcome.record).py()?;
    }
    Ok(PyRecord { inner: outcome.record })
}

/// Refresh-rule gap report over records.
#[pyfunction]
#[pyo3(signature = (records, r0=betagrid::DEFAULT_R0, threshold=metrics::DEFAULT_THRESHOLD))]
fn analyze<'py>(py: Python<'py>, records: Vec<PyRecord>, r0: f64, threshold: f64) -> PyResult<Bound<'py, PyDict>> {
    let records = unwrap_records(records);
    let report = metrics::refresh_report(&records, &betagrid::build_grid(), r0, threshold).py()?;
    report_dict(py, &report)
}

/// `(r0, dev_max)` with `None` when no development experiment was scored.
type CalibrationRow = (f64, Option<f64>);

/// Returns `(selected_r0, [(r0, dev_max or None), ...])`.
#[pyfunction]
#[pyo3(signature = (records, candidates=None, threshold=metrics::DEFAULT_THRESHOLD))]
fn calibrate(
    records: Vec<PyRecord>,
    candidates: Option<Vec<f64>>,
    threshold: f64,
) -> PyResult<(f64, Vec<CalibrationRow>)> {
    let records = unwrap_records(records);
    let candidates = candidates.unwrap_or_else(metrics::default_r0_candidates);
    let cal = metrics::calibrate_r0(&records, &betagrid::build_grid(), &candidates, threshold).py()?;
    let rows = cal
        .rows
        .iter()
        .map(|r| {
            let dev_max = r.report.as_ref().and_then(|rep| rep.summary.development).map(|d| d.max);
            (r.r0, dev_max)
        })
        .collect();
    Ok((cal.selected_r0, rows))
}

/// One dict per noise level with the pooled gap summary.
#[pyfunction]
#[pyo3(signature = (records, sigmas=None, draws=perturb::DEFAULT_DRAWS, seed=0, r0=betagrid::DEFAULT_R0, threshold=metrics::DEFAULT_THRESHOLD))]
fn robustness<'py>(
    py: Python<'py>,
    records: Vec<PyRecord>,
    sigmas: Option<Vec<f64>>,
    draws: usize,
    seed: u64,
    r0: f64,
    threshold: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let records = unwrap_records(records);
    let config = PerturbConfig {
        sigmas: sigmas.unwrap_or_else(|| perturb::DEFAULT_SIGMAS.to_vec()),
        draws_per_experiment: draws,
        base_seed: seed,
        r0,
    };
    let study = perturb::robustness_study(&records, &betagrid::build_grid(), &config, None, threshold).py()?;
    study
        .rows
        .iter()
        .map(|row| {
            let d = summary_dict(py, &row.summary)?;
            d.set_item("sigma", row.sigma)?;
            d.set_item("evaluations", row.evaluations)?;
            d.set_item("infeasible", row.infeasible)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "refresh_adam")]
fn refresh_adam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BalancedAdam>()?;
    m.add_class::<Selection>()?;
    m.add_class::<PyRecord>()?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(grid_labels, m)?)?;
    m.add_function(wrap_pyfunction!(beta_label, m)?)?;
    m.add_function(wrap_pyfunction!(effective_horizon, m)?)?;
    m.add_function(wrap_pyfunction!(refresh_beta, m)?)?;
    m.add_function(wrap_pyfunction!(select_beta, m)?)?;
    m.add_function(wrap_pyfunction!(round_sig1, m)?)?;
    m.add_function(wrap_pyfunction!(early_stop_step, m)?)?;
    m.add_function(wrap_pyfunction!(cvar, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(load_record, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(robustness, m)?)?;
    m.add("DEFAULT_R0", betagrid::DEFAULT_R0)?;
    Ok(())
}
