//! The control loop: build inputs from the snapshot, run the fixed
//! waterfall of agents, let the router pick further agents until the value
//! settles, then write the report and store the run.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{
    apply_news, apply_patch, fetch_news, route_next, run_comparables_agent, run_consensus_agent,
    run_market_agent, run_sensitivity_agent, triage_news, AgentContext, AgentError, AgentTurn,
    Artifact, ComparablesTable, FixtureNewsFeed, InputPatch, NewsBatch, NewsDigest, NewsFeed,
    RoundSummary, Route,
};
use crate::config::{ConvergenceCriterion, RunConfig};
use crate::error::{DataError, Error, ValuationError};
use crate::fundamentals::{
    fetch_comparables, fetch_consensus, parse_fundamentals, validate_snapshot, ComparablesSet,
    ConsensusEstimates, DataProvider, DocumentKind, FundamentalsSnapshot, ProviderRegistry,
};
use crate::llm::Gateway;
use crate::reporting::{render_report, write_report, ReportMaterials};
use crate::store::{decision_of, ReportPaths, RunRecord, RunStore};
use crate::valuation::{derive_base_anchors, value, BaseFinancials, MacroInputs, SensitivityTable, ValuationInputs, ValuationResult};

pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl FixedClock {
    /// Last second of `date`, UTC.
    pub fn end_of(date: NaiveDate) -> Self {
        Self(end_of_day(date))
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

fn end_of_day(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(23, 59, 59).expect("valid time").and_utc()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepOutcome {
    Applied,
    Rejected { reasons: Vec<String> },
    Skipped { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Waterfall,
    Refinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: u32,
    pub stage: Stage,
    pub route: Route,
    #[serde(default)]
    pub instruction: String,
    pub outcome: StepOutcome,
    /// The proposed patch, kept for rejected steps too.
    pub patch: Option<InputPatch>,
    pub rationale: String,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
    /// Inputs revision after this step.
    pub revision: u64,
    pub value_per_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    RoutedEnd,
    Converged,
    IterationCap,
    Failed,
}

impl fmt::Display for TerminationCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationCause::RoutedEnd => "routed_end",
            TerminationCause::Converged => "converged",
            TerminationCause::IterationCap => "iteration_cap",
            TerminationCause::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub initial_inputs: ValuationInputs,
    pub inputs: ValuationInputs,
    pub value_history: Vec<ValuationResult>,
    pub transcript: Vec<TranscriptEntry>,
    /// Completed refinement rounds.
    pub iteration: u32,
    pub warnings: Vec<String>,
}

impl RunState {
    /// Round 0: the inputs and their value.
    pub fn new(inputs: ValuationInputs) -> Result<Self, ValuationError> {
        let v0 = value(&inputs)?;
        Ok(Self {
            initial_inputs: inputs.clone(),
            inputs,
            value_history: vec![v0],
            transcript: vec![],
            iteration: 0,
            warnings: vec![],
        })
    }

    pub fn current(&self) -> &ValuationResult {
        self.value_history.last().expect("round 0 always present")
    }

    pub fn routes(&self) -> Vec<Route> {
        self.transcript.iter().map(|e| e.route).collect()
    }

    /// The router's view of the transcript.
    pub fn history(&self) -> Vec<RoundSummary> {
        self.transcript
            .iter()
            .zip(self.value_history.windows(2))
            .map(|(e, w)| RoundSummary {
                round: e.round,
                route: e.route,
                outcome: match &e.outcome {
                    StepOutcome::Applied => format!(
                        "applied {} change(s): {}",
                        e.patch.as_ref().map_or(0, |p| p.changes.len()),
                        e.rationale
                    ),
                    StepOutcome::Rejected { reasons } => format!("rejected: {}", reasons.join("; ")),
                    StepOutcome::Skipped { reason } => format!("skipped: {reason}"),
                },
                value_per_share: w[1].value_per_share,
                delta: relative_change(w[0].value_per_share, w[1].value_per_share),
            })
            .collect()
    }

    /// Latest artifact of each kind, for the report.
    pub fn latest_sensitivity(&self) -> Option<&SensitivityTable> {
        self.artifacts().find_map(|a| match a {
            Artifact::Sensitivity(t) => Some(t),
            _ => None,
        })
    }

    pub fn latest_comparables(&self) -> Option<&ComparablesTable> {
        self.artifacts().find_map(|a| match a {
            Artifact::Comparables(t) => Some(t),
            _ => None,
        })
    }

    pub fn latest_news(&self) -> Option<&NewsDigest> {
        self.artifacts().find_map(|a| match a {
            Artifact::News(d) => Some(d),
            _ => None,
        })
    }

    fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.transcript.iter().rev().flat_map(|e| e.artifacts.iter().rev())
    }
}

pub fn relative_change(old: f64, new: f64) -> f64 {
    if old == new {
        0.0
    } else if old == 0.0 {
        f64::INFINITY
    } else {
        ((new - old) / old).abs()
    }
}

/// Inputs from the snapshot: financials as reported, drivers from the
/// base anchors.
pub fn initialize_inputs(snapshot: &FundamentalsSnapshot, macro_inputs: &MacroInputs) -> Result<ValuationInputs, ValuationError> {
    let drivers = derive_base_anchors(snapshot, macro_inputs)?;
    let financials = BaseFinancials {
        base_revenue: snapshot.latest_revenue(),
        base_ebit: snapshot.ebit,
        effective_tax_rate: snapshot.effective_tax_rate,
        total_debt: snapshot.total_debt,
        cash_and_nonoperating: snapshot.cash_and_nonoperating,
        shares_outstanding: snapshot.shares_outstanding,
        market_price: snapshot.market_price,
        depreciation_amortization: snapshot.depreciation_amortization,
    };
    ValuationInputs::new(snapshot.identity.clone(), financials, drivers, *macro_inputs)
}

/// Documents the agents consult; absent ones make their step a skip.
#[derive(Debug, Clone)]
pub struct RunData {
    pub consensus: Result<ConsensusEstimates, String>,
    pub comparables: Result<ComparablesSet, String>,
    pub news: NewsBatch,
    pub feeds: Vec<Arc<dyn NewsFeed>>,
    pub sources: Vec<String>,
}

fn optional<T>(r: Result<T, DataError>) -> Result<Result<T, String>, DataError> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e @ DataError::NotFound { .. }) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

impl RunData {
    /// Loads consensus, comparables and news for the snapshot date. News
    /// published after the end of that day is excluded.
    pub fn load(
        provider: &Arc<dyn DataProvider>,
        feeds: Vec<Arc<dyn NewsFeed>>,
        ticker: &str,
        as_of: NaiveDate,
        cutoff: DateTime<Utc>,
    ) -> Result<Self, DataError> {
        let consensus = optional(fetch_consensus(provider.as_ref(), ticker, Some(as_of)))?;
        let comparables = optional(fetch_comparables(provider.as_ref(), ticker, Some(as_of)))?;
        let news = fetch_news(&feeds, ticker, Some(as_of), Some(cutoff.min(end_of_day(as_of))));
        let mut sources = vec![format!("Company fundamentals for {ticker} as of {as_of}")];
        if consensus.is_ok() {
            sources.push(format!("Analyst consensus estimates for {ticker} as of {as_of}"));
        }
        if comparables.is_ok() {
            sources.push(format!("Peer trading multiples for {ticker} as of {as_of}"));
        }
        Ok(Self { consensus, comparables, news, feeds, sources })
    }
}

/// One run's collaborators.
#[derive(Debug, Clone, Copy)]
pub struct Session<'a> {
    pub gateway: &'a Gateway,
    pub data: &'a RunData,
    pub config: &'a RunConfig,
}

fn agent_error(e: AgentError) -> Error {
    match e {
        AgentError::Llm(e) => Error::Llm(e),
        AgentError::Valuation(e) => Error::Valuation(e),
        AgentError::Rejected(r) => Error::Valuation(ValuationError::InvariantViolation(r.reasons)),
    }
}

impl Session<'_> {
    fn dispatch(&self, state: &RunState, route: Route, round: u32, instruction: &str) -> Result<Result<AgentTurn, String>, Error> {
        let ctx = AgentContext { gateway: self.gateway, round, instruction };
        let inputs = &state.inputs;
        let v = state.current();
        let turn = match route {
            Route::Market => run_market_agent(&ctx, inputs, v),
            Route::Sensitivity => run_sensitivity_agent(&ctx, inputs, v, self.config.sensitivity.points),
            Route::Consensus => match &self.data.consensus {
                Ok(c) => run_consensus_agent(&ctx, inputs, v, c),
                Err(reason) => return Ok(Err(reason.clone())),
            },
            Route::Comparables => match &self.data.comparables {
                Ok(c) => run_comparables_agent(&ctx, inputs, v, c),
                Err(reason) => return Ok(Err(reason.clone())),
            },
            Route::News => {
                if self.data.news.items.is_empty() {
                    return Ok(Err("no news items".to_string()));
                }
                let feeds = &self.data.feeds;
                let mut fetch = |item: &crate::agents::NewsItem| {
                    let mut last = DataError::NotFound { ticker: item.source_name.clone(), what: item.url.clone() };
                    for f in feeds {
                        match f.full_text(item) {
                            Ok(t) => return Ok(t),
                            Err(e) => last = e,
                        }
                    }
                    Err(last)
                };
                let digest = triage_news(
                    self.gateway,
                    &inputs.identity.name,
                    &self.data.news.items,
                    &self.config.news,
                    &mut fetch,
                )?;
                apply_news(&ctx, inputs, v, digest)
            }
            Route::End => unreachable!("end is handled by the loop"),
        };
        turn.map(Ok).map_err(agent_error)
    }

    /// Runs one agent, applies its patch (if any) and revalues.
    pub fn run_step(&self, state: &mut RunState, route: Route, stage: Stage, instruction: &str) -> Result<(), Error> {
        let round = state.transcript.len() as u32 + 1;
        let (outcome, patch, rationale, artifacts, warnings) = match self.dispatch(state, route, round, instruction)? {
            Err(reason) => {
                log::info!("round {round} {route}: skipped ({reason})");
                (StepOutcome::Skipped { reason }, None, String::new(), vec![], vec![])
            }
            Ok(turn) => match turn.patch {
                Ok(patch) => match apply_patch(&state.inputs, &patch) {
                    Ok(next) => {
                        state.inputs = next;
                        let rationale = patch.rationale.clone();
                        (StepOutcome::Applied, Some(patch), rationale, turn.artifacts, turn.warnings)
                    }
                    Err(rej) => {
                        log::warn!("round {round} {route}: {rej}");
                        let rationale = patch.rationale.clone();
                        (StepOutcome::Rejected { reasons: rej.reasons }, Some(patch), rationale, turn.artifacts, turn.warnings)
                    }
                },
                Err((rej, rationale)) => {
                    log::warn!("round {round} {route}: {rej}");
                    (StepOutcome::Rejected { reasons: rej.reasons }, None, rationale, turn.artifacts, turn.warnings)
                }
            },
        };
        let v = value(&state.inputs)?;
        state.transcript.push(TranscriptEntry {
            round,
            stage,
            route,
            instruction: instruction.to_string(),
            outcome,
            patch,
            rationale,
            artifacts,
            warnings,
            revision: state.inputs.revision,
            value_per_share: v.value_per_share,
        });
        state.value_history.push(v);
        Ok(())
    }

    pub fn run_waterfall(&self, state: &mut RunState) -> Result<(), Error> {
        for route in Route::WATERFALL {
            self.run_step(state, route, Stage::Waterfall, "")?;
        }
        Ok(())
    }

    /// Router-driven rounds until the router ends, the value settles for
    /// `window` consecutive rounds, or `max_iterations` rounds have run.
    pub fn run_refinement_loop(&self, state: &mut RunState, criterion: &ConvergenceCriterion) -> Result<TerminationCause, Error> {
        let mut streak = 0;
        loop {
            let round = state.transcript.len() as u32 + 1;
            let outcome = route_next(self.gateway, round, &state.inputs, state.current(), &state.history())?;
            state.warnings.extend(outcome.warnings);
            if outcome.decision.route == Route::End {
                return Ok(TerminationCause::RoutedEnd);
            }
            self.run_step(state, outcome.decision.route, Stage::Refinement, &outcome.decision.instruction)?;
            state.iteration += 1;
            let n = state.value_history.len();
            let delta = relative_change(
                state.value_history[n - 2].value_per_share,
                state.value_history[n - 1].value_per_share,
            );
            streak = if delta < criterion.rel_tolerance { streak + 1 } else { 0 };
            if streak >= criterion.window {
                return Ok(TerminationCause::Converged);
            }
            if state.iteration >= criterion.max_iterations {
                return Ok(TerminationCause::IterationCap);
            }
        }
    }
}

/// Everything a run needs besides the configuration.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub clock: Arc<dyn Clock>,
    pub registry: ProviderRegistry,
    /// News feeds; `None` reads the fixture news next to the fundamentals.
    pub feeds: Option<Vec<Arc<dyn NewsFeed>>>,
    /// Replaces the gateway built from the configuration.
    pub gateway: Option<Gateway>,
    pub write_report: bool,
    pub persist: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            clock: Arc::new(SystemClock),
            registry: ProviderRegistry::default(),
            feeds: None,
            gateway: None,
            write_report: true,
            persist: true,
        }
    }
}

fn load_snapshot(provider: &dyn DataProvider, ticker: &str, as_of: Option<NaiveDate>, today: NaiveDate) -> Result<FundamentalsSnapshot, Error> {
    let text = provider.fetch(ticker, DocumentKind::Fundamentals, as_of)?;
    let snapshot = parse_fundamentals(&text, ticker)?;
    if snapshot.revenue_history.len() < 2 {
        return Err(ValuationError::InsufficientHistory(snapshot.revenue_history.len()).into());
    }
    Ok(validate_snapshot(snapshot, today)?)
}

fn build_record(
    state: &RunState,
    created_at: DateTime<Utc>,
    as_of: NaiveDate,
    config_hash: &str,
    cause: TerminationCause,
    failure: Option<String>,
    band: f64,
) -> Result<RunRecord, Error> {
    let final_value = value(&state.inputs)?;
    let decision = match failure {
        None => Some(decision_of(final_value.value_per_share, state.inputs.financials.market_price, band)?),
        Some(_) => None,
    };
    let mut record = RunRecord {
        run_id: String::new(),
        created_at,
        identity: state.inputs.identity.clone(),
        as_of,
        config_hash: config_hash.to_string(),
        initial_inputs: state.initial_inputs.clone(),
        final_inputs: state.inputs.clone(),
        final_value,
        value_history: state.value_history.clone(),
        decision,
        transcript: state.transcript.clone(),
        report_paths: None,
        termination_cause: cause,
        failure,
        warnings: state.warnings.clone(),
    };
    record.run_id = record.content_id()?;
    Ok(record)
}

/// Initialize, waterfall, refine, report, persist. A failure after
/// initialization persists a partial record before the error is returned.
pub fn run_full_valuation(ticker: &str, as_of: Option<NaiveDate>, config: &RunConfig, options: &RunOptions) -> Result<RunRecord, Error> {
    let provider = options.registry.resolve(&config.data.source)?;
    let now = options.clock.now();
    let snapshot = load_snapshot(provider.as_ref(), ticker, as_of, now.date_naive())?;
    let inputs = initialize_inputs(&snapshot, &config.macro_inputs)?;
    let config_hash = config.config_hash()?;
    let feeds = options
        .feeds
        .clone()
        .unwrap_or_else(|| vec![Arc::new(FixtureNewsFeed::new("fixture", provider.clone())) as Arc<dyn NewsFeed>]);
    let data = RunData::load(&provider, feeds, ticker, snapshot.as_of, now)?;
    let gateway = match &options.gateway {
        Some(g) => g.clone(),
        None => config.gateway()?,
    };
    let session = Session { gateway: &gateway, data: &data, config };
    let mut state = RunState::new(inputs)?;
    state.warnings.extend(data.news.warnings.iter().cloned());

    let outcome = session
        .run_waterfall(&mut state)
        .and_then(|_| session.run_refinement_loop(&mut state, &config.convergence));
    let cause = match outcome {
        Ok(cause) => cause,
        Err(e) => {
            let partial = build_record(&state, now, snapshot.as_of, &config_hash, TerminationCause::Failed, Some(e.to_string()), config.decision.band)?;
            if options.persist {
                let path = RunStore::new(&config.paths.runs_dir).persist(&partial)?;
                log::error!("run failed; partial record at {}", path.display());
            }
            return Err(e);
        }
    };

    let mut record = build_record(&state, now, snapshot.as_of, &config_hash, cause, None, config.decision.band)?;
    if options.write_report {
        let history = state.history();
        let mut sources = data.sources.clone();
        let digest = state.latest_news();
        if let Some(d) = digest {
            sources.extend(
                d.relevant_items(&config.news)
                    .map(|t| format!("{}: {} ({})", t.item.source_name, t.item.headline, t.item.url)),
            );
        }
        let mut extra = snapshot.revenue_history.clone();
        extra.extend([snapshot.invested_capital, snapshot.ebit]);
        if let Ok(c) = &data.consensus {
            extra.extend([c.revenue_growth_y1, c.revenue_growth_y2, c.operating_margin_fwd, c.median_target_price].into_iter().flatten());
        }
        let materials = ReportMaterials {
            inputs: &record.final_inputs,
            result: &record.final_value,
            decision: record.decision.expect("completed run"),
            sensitivity: state.latest_sensitivity(),
            comparables: state.latest_comparables(),
            news: digest,
            news_thresholds: config.news,
            history: &history,
            sources,
            extra_numbers: extra,
        };
        let outcome = write_report(&gateway, &materials, &config.report)?;
        record.warnings.extend(outcome.warnings.iter().cloned());
        let dir: PathBuf = config.paths.out_dir.join(&record.run_id);
        let rendered = render_report(&dir, &outcome.draft, &materials.charts())?;
        let show = |p: &std::path::Path| p.display().to_string();
        record.report_paths = Some(ReportPaths {
            dir: show(&dir),
            report: show(&rendered.report),
            manifest: show(&rendered.manifest),
            charts: rendered.charts.iter().map(|p| show(p)).collect(),
            verdict: outcome.verdict,
        });
    }
    if options.persist {
        RunStore::new(&config.paths.runs_dir).persist(&record)?;
    }
    Ok(record)
}

/// Re-applies every applied patch from the initial inputs and revalues.
pub fn replay(record: &RunRecord) -> Result<Vec<ValuationResult>, Error> {
    let mut inputs = record.initial_inputs.clone();
    let mut out = vec![value(&inputs)?];
    for entry in &record.transcript {
        if let (StepOutcome::Applied, Some(patch)) = (&entry.outcome, &entry.patch) {
            inputs = apply_patch(&inputs, patch)
                .map_err(|r| Error::Valuation(ValuationError::InvariantViolation(r.reasons)))?;
        }
        out.push(value(&inputs)?);
    }
    Ok(out)
}

/// Whether replay reproduces the stored value history bit for bit.
pub fn replay_matches(record: &RunRecord) -> Result<bool, Error> {
    let replayed = replay(record)?;
    let bits = |v: &[ValuationResult]| -> Vec<u64> { v.iter().map(|r| r.value_per_share.to_bits()).collect() };
    Ok(replayed == record.value_history && bits(&replayed) == bits(&record.value_history))
}
