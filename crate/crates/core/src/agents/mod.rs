//! Specialized agents. Each reads the current inputs and valuation, asks
//! the gateway for a structured reply and turns it into an [`InputPatch`]
//! or a routing decision. Agents never mutate inputs themselves; the
//! orchestrator applies patches through [`apply_patch`].

mod analysts;
mod news;
mod router;

pub use analysts::{
    default_axes, run_comparables_agent, run_consensus_agent, run_market_agent,
    run_sensitivity_agent, ComparablesTable, PeerRow,
};
pub use news::{
    apply_news, fetch_news, triage_news, DriverImplication, FixtureNewsFeed, ImageRef, NewsBatch,
    NewsDigest, NewsFeed, NewsItem, NewsThresholds, Phase, TriagedItem,
};
pub use router::{route_next, RoundSummary, RouteOutcome};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{LlmError, ValuationError};
use crate::llm::structured::PatchProposal;
use crate::llm::Gateway;
use crate::valuation::{DriverPath, DriverSelector, SensitivityTable, ValuationInputs};

/// Largest per-round move, relative to the current value.
pub const GUARDRAIL: f64 = 0.5;
/// Magnitude floor for the guardrail so that zero-valued drivers can move.
pub const GUARDRAIL_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Market,
    Sensitivity,
    Consensus,
    Comparables,
    News,
    End,
}

impl Route {
    /// Fixed order of the initial waterfall.
    pub const WATERFALL: [Route; 5] = [
        Route::Market,
        Route::Sensitivity,
        Route::Consensus,
        Route::Comparables,
        Route::News,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Route::Market => "market",
            Route::Sensitivity => "sensitivity",
            Route::Consensus => "consensus",
            Route::Comparables => "comparables",
            Route::News => "news",
            Route::End => "end",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverChange {
    pub path: DriverPath,
    pub old_value: f64,
    pub new_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPatch {
    pub patch_id: String,
    pub source_agent: Route,
    pub changes: Vec<DriverChange>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("patch rejected: {}", .reasons.join("; "))]
pub struct PatchRejected {
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Rejected(#[from] PatchRejected),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
}

/// Table or digest an agent produced along the way; kept in the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    Sensitivity(SensitivityTable),
    Comparables(ComparablesTable),
    News(NewsDigest),
}

impl Artifact {
    pub fn kind(&self) -> &'static str {
        match self {
            Artifact::Sensitivity(_) => "sensitivity",
            Artifact::Comparables(_) => "comparables",
            Artifact::News(_) => "news",
        }
    }
}

/// What one agent invocation hands back to the orchestrator.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTurn {
    /// `Err` when the proposal could not even be expressed as a patch
    /// (unknown paths, guardrail breach); the rationale is kept either way.
    pub patch: Result<InputPatch, (PatchRejected, String)>,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

/// Shared per-call context.
#[derive(Debug, Clone, Copy)]
pub struct AgentContext<'a> {
    pub gateway: &'a Gateway,
    pub round: u32,
    pub instruction: &'a str,
}

impl AgentContext<'_> {
    pub fn patch_id(&self, agent: Route) -> String {
        format!("r{:02}-{agent}", self.round)
    }
}

fn within_guardrail(old: f64, new: f64) -> bool {
    let limit = GUARDRAIL * old.abs().max(GUARDRAIL_FLOOR);
    (new - old).abs() <= limit * (1.0 + 1e-12)
}

fn guardrail_problems(changes: &[DriverChange]) -> Vec<String> {
    changes
        .iter()
        .filter(|c| !within_guardrail(c.old_value, c.new_value))
        .map(|c| {
            format!(
                "{}: {} -> {} moves more than {:.0}%",
                c.path,
                c.old_value,
                c.new_value,
                GUARDRAIL * 100.0
            )
        })
        .collect()
}

/// Turns an LLM proposal into a patch against `inputs`. Range and
/// whole-schedule paths expand to one change per year; a later entry for
/// the same path replaces an earlier one.
pub fn build_patch(
    inputs: &ValuationInputs,
    source_agent: Route,
    patch_id: String,
    proposal: &PatchProposal,
) -> Result<InputPatch, PatchRejected> {
    let mut changes: Vec<DriverChange> = Vec::new();
    let mut problems = Vec::new();
    for proposed in &proposal.changes {
        match proposed.path.parse::<DriverSelector>() {
            Ok(sel) => {
                for path in sel.expand() {
                    let change = DriverChange {
                        path,
                        old_value: path.get(inputs),
                        new_value: proposed.value,
                    };
                    match changes.iter_mut().find(|c| c.path == path) {
                        Some(existing) => *existing = change,
                        None => changes.push(change),
                    }
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    problems.extend(guardrail_problems(&changes));
    if !problems.is_empty() {
        return Err(PatchRejected { reasons: problems });
    }
    Ok(InputPatch {
        patch_id,
        source_agent,
        changes,
        rationale: proposal.rationale.clone(),
    })
}

/// Applies `patch` atomically. On any failure `inputs` is untouched and
/// the reasons are returned.
pub fn apply_patch(inputs: &ValuationInputs, patch: &InputPatch) -> Result<ValuationInputs, PatchRejected> {
    let mut problems = Vec::new();
    for c in &patch.changes {
        let current = c.path.get(inputs);
        if current.to_bits() != c.old_value.to_bits() {
            problems.push(format!("{}: stale old value {} (current {current})", c.path, c.old_value));
        }
    }
    problems.extend(guardrail_problems(&patch.changes));
    if !problems.is_empty() {
        return Err(PatchRejected { reasons: problems });
    }
    let assignments: Vec<(DriverPath, f64)> =
        patch.changes.iter().map(|c| (c.path, c.new_value)).collect();
    inputs
        .with_changes(&assignments, &patch.patch_id)
        .map_err(|e| PatchRejected { reasons: vec![e.to_string()] })
}

pub(crate) fn turn_from_proposal(
    inputs: &ValuationInputs,
    ctx: &AgentContext<'_>,
    agent: Route,
    proposal: &PatchProposal,
    artifacts: Vec<Artifact>,
    warnings: Vec<String>,
) -> AgentTurn {
    let patch = build_patch(inputs, agent, ctx.patch_id(agent), proposal)
        .map_err(|r| (r, proposal.rationale.clone()));
    AgentTurn { patch, artifacts, warnings }
}
