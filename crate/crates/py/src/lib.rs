//! Python module `valuator`.
//!
//! Results cross the boundary as plain dicts and lists. Data and
//! configuration problems raise `ValueError`; backend failures and
//! invariant violations raise `RuntimeError`.

use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use valuation_core::config::RunConfig;
use valuation_core::fundamentals::load_fundamentals;
use valuation_core::orchestrator::{initialize_inputs, run_full_valuation, FixedClock, RunOptions};
use valuation_core::store::{stability_report, PerturbationMode, RunStore};
use valuation_core::valuation::{sensitivity_grid, value, Axis, ValuationInputs};
use valuation_core::Error;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn date(s: Option<&str>) -> PyResult<Option<NaiveDate>> {
    s.map(|d| d.parse::<NaiveDate>().map_err(|e| PyValueError::new_err(format!("date `{d}`: {e}"))))
        .transpose()
}

fn config(path: Option<PathBuf>) -> PyResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(&p).map_err(to_py),
        None => Ok(RunConfig::default()),
    }
}

fn options(clock: Option<NaiveDate>, report: bool, persist: bool) -> RunOptions {
    let mut opts = RunOptions { write_report: report, persist, ..RunOptions::default() };
    if let Some(day) = clock {
        opts.clock = Arc::new(FixedClock::end_of(day));
    }
    opts
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn base_inputs(cfg: &RunConfig, opts: &RunOptions, ticker: &str, as_of: Option<NaiveDate>) -> Result<ValuationInputs, Error> {
    let provider = opts.registry.resolve(&cfg.data.source)?;
    let snapshot = load_fundamentals(provider.as_ref(), ticker, as_of, opts.clock.now().date_naive())?;
    Ok(initialize_inputs(&snapshot, &cfg.macro_inputs)?)
}

/// Value the base anchors for `ticker` with no agent involvement.
#[pyfunction]
#[pyo3(signature = (ticker, config=None, as_of=None, clock=None))]
fn value_base<'py>(
    py: Python<'py>,
    ticker: &str,
    config: Option<PathBuf>,
    as_of: Option<&str>,
    clock: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let opts = options(date(clock)?, false, false);
    let as_of = date(as_of)?;
    let result = py.detach(|| base_inputs(&cfg, &opts, ticker, as_of).and_then(|i| Ok(value(&i)?))).map_err(to_py)?;
    to_dict(py, &result)
}

/// Full agent run; returns the run record.
#[pyfunction]
#[pyo3(signature = (ticker, config=None, as_of=None, clock=None, report=false, persist=false))]
fn run<'py>(
    py: Python<'py>,
    ticker: &str,
    config: Option<PathBuf>,
    as_of: Option<&str>,
    clock: Option<&str>,
    report: bool,
    persist: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let opts = options(date(clock)?, report, persist);
    let as_of = date(as_of)?;
    let record = py.detach(|| run_full_valuation(ticker, as_of, &cfg, &opts)).map_err(to_py)?;
    to_dict(py, &record)
}

/// Two-driver grid over the base anchors, or over a stored run's final inputs.
#[pyfunction]
#[pyo3(signature = (ticker, rows, cols, config=None, as_of=None, clock=None, run_id=None))]
#[allow(clippy::too_many_arguments)]
fn sensitivity<'py>(
    py: Python<'py>,
    ticker: &str,
    rows: (String, Vec<f64>),
    cols: (String, Vec<f64>),
    config: Option<PathBuf>,
    as_of: Option<&str>,
    clock: Option<&str>,
    run_id: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let opts = options(date(clock)?, false, false);
    let as_of = date(as_of)?;
    let table = py
        .detach(|| {
            let inputs = match run_id {
                Some(id) => RunStore::new(&cfg.paths.runs_dir).load(id)?.final_inputs,
                None => base_inputs(&cfg, &opts, ticker, as_of)?,
            };
            Ok::<_, Error>(sensitivity_grid(&inputs, &Axis::new(&rows.0, rows.1), &Axis::new(&cols.0, cols.1))?)
        })
        .map_err(to_py)?;
    to_dict(py, &table)
}

/// Repeat the pipeline `n` times; `mode` is `none`, `paraphrase-templates` or `temperature`.
#[pyfunction]
#[pyo3(signature = (ticker, n=5, config=None, as_of=None, clock=None, mode="none", templates=None, temperature=0.7))]
#[allow(clippy::too_many_arguments)]
fn stability<'py>(
    py: Python<'py>,
    ticker: &str,
    n: usize,
    config: Option<PathBuf>,
    as_of: Option<&str>,
    clock: Option<&str>,
    mode: &str,
    templates: Option<Vec<PathBuf>>,
    temperature: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        "none" => PerturbationMode::None,
        "paraphrase-templates" => PerturbationMode::ParaphraseTemplates { dirs: templates.unwrap_or_default() },
        "temperature" => PerturbationMode::Temperature { value: temperature },
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let cfg = self::config(config)?;
    let opts = options(date(clock)?, false, false);
    let as_of = date(as_of)?;
    let metrics = py.detach(|| stability_report(ticker, as_of, n, &mode, &cfg, &opts)).map_err(to_py)?;
    to_dict(py, &metrics)
}

/// Load a persisted run record by id.
#[pyfunction]
#[pyo3(signature = (run_id, config=None))]
fn load_run<'py>(py: Python<'py>, run_id: &str, config: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let record = RunStore::new(&cfg.paths.runs_dir).load(run_id).map_err(|e| to_py(e.into()))?;
    to_dict(py, &record)
}

#[pymodule]
fn valuator(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(value_base, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(stability, m)?)?;
    m.add_function(wrap_pyfunction!(load_run, m)?)?;
    Ok(())
}
