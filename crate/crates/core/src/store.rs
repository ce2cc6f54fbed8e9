//! Run records, their on-disk store, the Buy/Hold/Sell rule and the
//! stability and backtest harnesses built on repeated runs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{DataError, Error, StoreError, ValuationError};
use crate::fundamentals::CompanyIdentity;
use crate::llm::AgentRole;
use crate::orchestrator::{run_full_valuation, FixedClock, RunOptions, TerminationCause, TranscriptEntry};
use crate::reporting::Verdict;
use crate::valuation::{ValuationInputs, ValuationResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Buy,
    Hold,
    Sell,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Buy => "Buy",
            Decision::Hold => "Hold",
            Decision::Sell => "Sell",
        })
    }
}

/// Buy above `price × (1 + band)`, Sell below `price × (1 − band)`, Hold
/// in between (bounds inclusive).
pub fn decision_of(value_per_share: f64, market_price: f64, band: f64) -> Result<Decision, ValuationError> {
    if !(market_price > 0.0) {
        return Err(ValuationError::DegenerateInput(format!("market price {market_price} must be > 0")));
    }
    Ok(if value_per_share > market_price * (1.0 + band) {
        Decision::Buy
    } else if value_per_share < market_price * (1.0 - band) {
        Decision::Sell
    } else {
        Decision::Hold
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportPaths {
    pub dir: String,
    pub report: String,
    pub manifest: String,
    pub charts: Vec<String>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub identity: CompanyIdentity,
    pub as_of: NaiveDate,
    pub config_hash: String,
    pub initial_inputs: ValuationInputs,
    pub final_inputs: ValuationInputs,
    pub final_value: ValuationResult,
    /// Round 0 plus one entry per transcript entry.
    pub value_history: Vec<ValuationResult>,
    pub decision: Option<Decision>,
    pub transcript: Vec<TranscriptEntry>,
    pub report_paths: Option<ReportPaths>,
    pub termination_cause: TerminationCause,
    #[serde(default)]
    pub failure: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunRecord {
    /// Content address: hash of the record with id and report paths blank.
    pub fn content_id(&self) -> Result<String, StoreError> {
        let mut blank = self.clone();
        blank.run_id.clear();
        blank.report_paths = None;
        let digest = Sha256::digest(serde_json::to_vec(&blank)?);
        Ok(format!(
            "{}-{}-{}",
            self.identity.ticker,
            self.as_of.format("%Y%m%d"),
            &hex::encode(digest)[..12]
        ))
    }

    /// Equality ignoring run id, timestamps and report locations.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        let strip = |r: &RunRecord| {
            let mut r = r.clone();
            r.run_id.clear();
            r.created_at = DateTime::<Utc>::MIN_UTC;
            r.report_paths = r.report_paths.map(|p| ReportPaths {
                dir: String::new(),
                report: String::new(),
                manifest: String::new(),
                charts: vec![],
                verdict: p.verdict,
            });
            r
        };
        strip(self) == strip(other)
    }
}

/// Plain-file store: one `runs/<run_id>/record.json` per run.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn record_path(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id).join("record.json")
    }

    pub fn persist(&self, record: &RunRecord) -> Result<PathBuf, StoreError> {
        let dir = self.root.join(&record.run_id);
        fs::create_dir_all(&dir)?;
        let path = dir.join("record.json");
        let tmp = dir.join("record.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(record)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(&self, run_id: &str) -> Result<RunRecord, StoreError> {
        let path = self.record_path(run_id);
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound(run_id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    /// Stored run ids, sorted, optionally restricted to one ticker.
    pub fn list(&self, ticker: Option<&str>) -> Result<Vec<String>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
            Err(e) => return Err(e.into()),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry?;
            let id = entry.file_name().to_string_lossy().into_owned();
            if !entry.path().join("record.json").is_file() {
                continue;
            }
            if let Some(t) = ticker {
                if self.load(&id)?.identity.ticker != t {
                    continue;
                }
            }
            ids.push(id);
        }
        ids.sort();
        Ok(ids)
    }
}

/// Fraction of adjacent pairs whose decisions differ.
pub fn flip_rate(decisions: &[Decision]) -> f64 {
    if decisions.len() < 2 {
        return 0.0;
    }
    let flips = decisions.windows(2).filter(|w| w[0] != w[1]).count();
    flips as f64 / (decisions.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMetrics {
    pub n_runs: usize,
    pub value_mean: f64,
    pub value_std: f64,
    pub dispersion: f64,
    pub decision_flip_rate: f64,
    pub decisions: Vec<Decision>,
    pub values: Vec<f64>,
}

impl StabilityMetrics {
    /// Population statistics over per-run values and decisions.
    pub fn from_runs(values: &[f64], decisions: &[Decision]) -> Self {
        let n = values.len();
        let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let var = if n == 0 { 0.0 } else { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64 };
        let std = var.sqrt();
        let dispersion = if std == 0.0 { 0.0 } else { std / mean.abs() };
        Self {
            n_runs: n,
            value_mean: mean,
            value_std: std,
            dispersion,
            decision_flip_rate: flip_rate(decisions),
            decisions: decisions.to_vec(),
            values: values.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PerturbationMode {
    None,
    /// Alternate template directories, used in turn.
    ParaphraseTemplates { dirs: Vec<PathBuf> },
    /// Writer and decision prompts sampled at this temperature.
    Temperature { value: f64 },
}

/// Runs the pipeline `n_runs` times and aggregates value and decision.
pub fn stability_report(
    ticker: &str,
    as_of: Option<NaiveDate>,
    n_runs: usize,
    mode: &PerturbationMode,
    config: &RunConfig,
    options: &RunOptions,
) -> Result<StabilityMetrics, Error> {
    let mut values = Vec::with_capacity(n_runs);
    let mut decisions = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        let mut cfg = config.clone();
        let mut opts = options.clone();
        match mode {
            PerturbationMode::None => {}
            PerturbationMode::ParaphraseTemplates { dirs } => {
                if dirs.is_empty() {
                    return Err(Error::Config("paraphrase mode needs at least one template directory".into()));
                }
                cfg.llm.prompts_dir = Some(dirs[i % dirs.len()].clone());
            }
            PerturbationMode::Temperature { value } => {
                let mut gw = cfg.gateway()?;
                for role in AgentRole::ALL {
                    gw = gw.with_temperature(role, *value);
                }
                opts.gateway = Some(gw);
            }
        }
        let record = run_full_valuation(ticker, as_of, &cfg, &opts)?;
        values.push(record.final_value.value_per_share);
        decisions.push(record.decision.expect("completed runs carry a decision"));
    }
    Ok(StabilityMetrics::from_runs(&values, &decisions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub date: NaiveDate,
    pub run_id: String,
    pub value_per_share: f64,
    pub market_price: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub rows: Vec<BacktestRow>,
    pub skipped: Vec<(NaiveDate, String)>,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

/// One run per date with the clock pinned to the end of that day. Dates
/// without data are skipped with a note.
pub fn backtest(
    ticker: &str,
    dates: &[NaiveDate],
    config: &RunConfig,
    options: &RunOptions,
) -> Result<BacktestReport, Error> {
    let mut report = BacktestReport { rows: vec![], skipped: vec![], records: vec![] };
    for &date in dates {
        let mut opts = options.clone();
        opts.clock = Arc::new(FixedClock::end_of(date));
        match run_full_valuation(ticker, Some(date), config, &opts) {
            Ok(record) => {
                report.rows.push(BacktestRow {
                    date,
                    run_id: record.run_id.clone(),
                    value_per_share: record.final_value.value_per_share,
                    market_price: record.final_inputs.financials.market_price,
                    decision: record.decision.expect("completed runs carry a decision"),
                });
                report.records.push(record);
            }
            Err(Error::Data(e @ (DataError::MissingFixture { .. } | DataError::NotFound { .. }))) => {
                report.skipped.push((date, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Full runs for several tickers on separate threads; results keep the
/// input order.
pub fn batch(tickers: &[String], config: &RunConfig, options: &RunOptions) -> Vec<(String, Result<RunRecord, Error>)> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = tickers
            .iter()
            .map(|t| scope.spawn(move || run_full_valuation(t, None, config, options)))
            .collect();
        tickers
            .iter()
            .cloned()
            .zip(handles.into_iter().map(|h| h.join().expect("batch worker panicked")))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Decision::*;

    #[test]
    fn decision_band() {
        assert_eq!(decision_of(420.0, 300.0, 0.10).unwrap(), Buy);
        assert_eq!(decision_of(100.0, 100.0, 0.10).unwrap(), Hold);
        assert_eq!(decision_of(89.9, 100.0, 0.10).unwrap(), Sell);
        assert_eq!(decision_of(90.0, 100.0, 0.10).unwrap(), Hold);
        assert!(decision_of(1.0, 0.0, 0.10).is_err());
    }

    #[test]
    fn flip_rates() {
        assert_eq!(flip_rate(&[Buy, Buy, Hold, Buy]), 2.0 / 3.0);
        assert_eq!(flip_rate(&[Buy; 5]), 0.0);
        assert_eq!(flip_rate(&[Buy]), 0.0);
        assert_eq!(flip_rate(&[Buy, Sell, Buy, Sell]), 1.0);
    }

    #[test]
    fn identical_values_have_zero_dispersion() {
        let m = StabilityMetrics::from_runs(&[420.0; 5], &[Buy; 5]);
        assert_eq!((m.dispersion, m.decision_flip_rate, m.value_std), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_run_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        assert!(matches!(store.load("nope"), Err(StoreError::NotFound(_))));
        assert_eq!(store.list(None).unwrap(), Vec::<String>::new());
    }
}
