use serde::{Deserialize, Serialize};

use super::Route;
use crate::error::LlmError;
use crate::llm::structured::RouteDecision;
use crate::llm::{context, AgentRole, Attachment, Gateway};
use crate::valuation::{ValuationInputs, ValuationResult};

/// One line of the history the router sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub route: Route,
    pub outcome: String,
    pub value_per_share: f64,
    /// Relative change in value per share against the previous round.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub decision: RouteDecision,
    pub warnings: Vec<String>,
}

/// Asks the router for the next step. Two unusable replies end the loop.
pub fn route_next(
    gateway: &Gateway,
    round: u32,
    inputs: &ValuationInputs,
    result: &ValuationResult,
    history: &[RoundSummary],
) -> Result<RouteOutcome, LlmError> {
    let price = inputs.financials.market_price;
    let gap = if price > 0.0 { result.value_per_share / price - 1.0 } else { 0.0 };
    let vars = context([
        ("company_name", inputs.identity.name.clone()),
        ("round", round.to_string()),
        ("value_per_share", format!("{:.2}", result.value_per_share)),
        ("market_price", format!("{price:.2}")),
        ("gap_pct", format!("{:+.1}%", gap * 100.0)),
    ]);
    let env = gateway.render(AgentRole::Router, "router", &vars, vec![Attachment::json("history", &history)])?;
    match gateway.ask::<RouteDecision>(AgentRole::Router, &env, 1) {
        Ok(a) => Ok(RouteOutcome { decision: a.value, warnings: a.warnings }),
        Err(e @ (LlmError::MalformedOutput(_) | LlmError::SchemaViolation { .. })) => Ok(RouteOutcome {
            decision: RouteDecision { route: Route::End, instruction: String::new() },
            warnings: vec![format!("router gave no usable decision ({e}); ending")],
        }),
        Err(e) => Err(e),
    }
}
