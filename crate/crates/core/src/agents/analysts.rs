use serde::{Deserialize, Serialize};

use super::{turn_from_proposal, AgentContext, AgentError, AgentTurn, Artifact, Route};
use crate::fundamentals::{ComparablesSet, ConsensusEstimates};
use crate::llm::structured::{AxisSelection, PatchProposal};
use crate::llm::{context, AgentRole, Attachment, MAX_REPROMPTS};
use crate::valuation::{
    sensitivity_grid, Axis, DriverSelector, SensitivityTable, ValuationInputs, ValuationResult,
};

fn money(v: f64) -> String {
    format!("{v:.2}")
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

fn state_attachments(inputs: &ValuationInputs, result: &ValuationResult) -> Vec<Attachment> {
    vec![Attachment::json("inputs", inputs), Attachment::json("valuation", result)]
}

/// Asks for drivers that reconcile the model value with the market price.
pub fn run_market_agent(
    ctx: &AgentContext<'_>,
    inputs: &ValuationInputs,
    result: &ValuationResult,
) -> Result<AgentTurn, AgentError> {
    let gw = ctx.gateway;
    let vars = context([
        ("company_name", inputs.identity.name.clone()),
        ("ticker", inputs.identity.ticker.clone()),
        ("market_price", money(inputs.financials.market_price)),
        ("value_per_share", money(result.value_per_share)),
        ("instruction", ctx.instruction.to_string()),
    ]);
    let env = gw.render(AgentRole::Market, "market", &vars, state_attachments(inputs, result))?;
    let answer = gw.ask::<PatchProposal>(AgentRole::Market, &env, MAX_REPROMPTS)?;
    Ok(turn_from_proposal(inputs, ctx, Route::Market, &answer.value, vec![], answer.warnings))
}

fn axis_step(sel: &DriverSelector, center: f64) -> f64 {
    if sel.as_str().starts_with("sales_to_capital") {
        (0.1 * center.abs()).max(0.05)
    } else {
        0.01
    }
}

/// `points` values centred on the selector's current (mean) value; values
/// that would break an input invariant on their own are dropped.
pub(crate) fn axis_around(inputs: &ValuationInputs, driver: &str, points: usize) -> Result<Axis, AgentError> {
    let sel: DriverSelector = driver.parse()?;
    if !sel.is_value_driver() {
        return Err(crate::error::ValuationError::UnknownDriver(driver.to_string()).into());
    }
    let center = sel.current(inputs);
    let step = axis_step(&sel, center);
    let half = (points.max(1) - 1) as f64 / 2.0;
    let values = (0..points.max(1))
        .map(|k| if k as f64 == half { center } else { center + (k as f64 - half) * step })
        .filter(|v| sel.apply(inputs, *v).validate().is_ok())
        .collect();
    Ok(Axis::new(sel.as_str(), values))
}

/// Terminal margin by cost of capital.
pub fn default_axes(inputs: &ValuationInputs, points: usize) -> Result<(Axis, Axis), AgentError> {
    Ok((
        axis_around(inputs, "terminal_margin", points)?,
        axis_around(inputs, "cost_of_capital", points)?,
    ))
}

/// Runs the grid over the LLM's chosen axes (falling back to the default
/// axes if the choice is unusable), then asks whether any input should
/// change in light of the scenarios.
pub fn run_sensitivity_agent(
    ctx: &AgentContext<'_>,
    inputs: &ValuationInputs,
    result: &ValuationResult,
    points: usize,
) -> Result<AgentTurn, AgentError> {
    let gw = ctx.gateway;
    let mut warnings = Vec::new();
    let vars = context([
        ("company_name", inputs.identity.name.clone()),
        ("value_per_share", money(result.value_per_share)),
        ("instruction", ctx.instruction.to_string()),
    ]);
    let env = gw.render(
        AgentRole::Sensitivity,
        "sensitivity_axes",
        &vars,
        state_attachments(inputs, result),
    )?;

    let chosen: Result<SensitivityTable, String> = match gw.ask::<AxisSelection>(AgentRole::Sensitivity, &env, MAX_REPROMPTS) {
        Ok(a) => {
            warnings.extend(a.warnings);
            axis_around(inputs, &a.value.rows, points)
                .and_then(|r| Ok((r, axis_around(inputs, &a.value.cols, points)?)))
                .and_then(|(r, c)| Ok(sensitivity_grid(inputs, &r, &c)?))
                .map_err(|e| format!("axes {}x{}: {e}", a.value.rows, a.value.cols))
        }
        Err(e @ (crate::error::LlmError::MalformedOutput(_) | crate::error::LlmError::SchemaViolation { .. })) => {
            Err(e.to_string())
        }
        Err(e) => return Err(e.into()),
    };
    let table = match chosen {
        Ok(t) => t,
        Err(reason) => {
            warnings.push(format!("sensitivity: falling back to default axes ({reason})"));
            let (rows, cols) = default_axes(inputs, points)?;
            sensitivity_grid(inputs, &rows, &cols)?
        }
    };

    let (lo, hi) = table.min_max();
    let vars = context([
        ("company_name", inputs.identity.name.clone()),
        ("row_driver", table.row_axis.driver.clone()),
        ("col_driver", table.col_axis.driver.clone()),
        ("min_value", money(lo)),
        ("max_value", money(hi)),
        ("value_per_share", money(result.value_per_share)),
    ]);
    let mut attachments = state_attachments(inputs, result);
    attachments.push(Attachment::json("sensitivity", &table));
    let env = gw.render(AgentRole::Sensitivity, "sensitivity", &vars, attachments)?;
    let answer = gw.ask::<PatchProposal>(AgentRole::Sensitivity, &env, MAX_REPROMPTS)?;
    warnings.extend(answer.warnings);
    Ok(turn_from_proposal(
        inputs,
        ctx,
        Route::Sensitivity,
        &answer.value,
        vec![Artifact::Sensitivity(table)],
        warnings,
    ))
}

fn describe_consensus(c: &ConsensusEstimates) -> String {
    let mut parts = vec![format!("{} analyst(s) as of {}", c.analyst_count, c.as_of)];
    if let Some(g) = c.revenue_growth_y1 {
        parts.push(format!("year-1 revenue growth {}", pct(g)));
    }
    if let Some(g) = c.revenue_growth_y2 {
        parts.push(format!("year-2 revenue growth {}", pct(g)));
    }
    if let Some(m) = c.operating_margin_fwd {
        parts.push(format!("forward operating margin {}", pct(m)));
    }
    if let Some(p) = c.median_target_price {
        parts.push(format!("median target price {}", money(p)));
    }
    parts.join(", ")
}

pub fn run_consensus_agent(
    ctx: &AgentContext<'_>,
    inputs: &ValuationInputs,
    result: &ValuationResult,
    consensus: &ConsensusEstimates,
) -> Result<AgentTurn, AgentError> {
    let gw = ctx.gateway;
    let d = &inputs.drivers;
    let vars = context([
        ("company_name", inputs.identity.name.clone()),
        ("consensus_summary", describe_consensus(consensus)),
        ("growth_y1", pct(d.revenue_growth[0])),
        ("growth_y2", pct(d.revenue_growth[1])),
        ("margin_y1", pct(d.operating_margin[0])),
        ("instruction", ctx.instruction.to_string()),
    ]);
    let mut attachments = state_attachments(inputs, result);
    attachments.push(Attachment::json("consensus", consensus));
    let env = gw.render(AgentRole::Consensus, "consensus", &vars, attachments)?;
    let answer = gw.ask::<PatchProposal>(AgentRole::Consensus, &env, MAX_REPROMPTS)?;
    Ok(turn_from_proposal(inputs, ctx, Route::Consensus, &answer.value, vec![], answer.warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerRow {
    pub ticker: String,
    pub name: String,
    pub ev_to_ebitda: f64,
    pub revenue_growth: f64,
    pub operating_margin: f64,
}

/// The company's terminal EV/EBITDA next to each peer's multiple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparablesTable {
    pub ticker: String,
    pub ev_to_ebitda: Option<f64>,
    pub peers: Vec<PeerRow>,
}

impl ComparablesTable {
    pub fn build(inputs: &ValuationInputs, result: &ValuationResult, comps: &ComparablesSet) -> Self {
        Self {
            ticker: inputs.identity.ticker.clone(),
            ev_to_ebitda: result.terminal_ev_to_ebitda,
            peers: comps
                .peers
                .iter()
                .map(|p| PeerRow {
                    ticker: p.identity.ticker.clone(),
                    name: p.identity.name.clone(),
                    ev_to_ebitda: p.ev_to_ebitda,
                    revenue_growth: p.revenue_growth,
                    operating_margin: p.operating_margin,
                })
                .collect(),
        }
    }
}

pub fn run_comparables_agent(
    ctx: &AgentContext<'_>,
    inputs: &ValuationInputs,
    result: &ValuationResult,
    comps: &ComparablesSet,
) -> Result<AgentTurn, AgentError> {
    let gw = ctx.gateway;
    let table = ComparablesTable::build(inputs, result, comps);
    let ratio = table
        .ev_to_ebitda
        .map(|r| format!("{r:.1}"))
        .unwrap_or_else(|| "not meaningful (terminal EBITDA not positive)".to_string());
    let vars = context([
        ("company_name", inputs.identity.name.clone()),
        ("ev_to_ebitda", ratio),
        ("instruction", ctx.instruction.to_string()),
    ]);
    let mut attachments = state_attachments(inputs, result);
    attachments.push(Attachment::json("peers", &table));
    let env = gw.render(AgentRole::Comparables, "comparables", &vars, attachments)?;
    let answer = gw.ask::<PatchProposal>(AgentRole::Comparables, &env, MAX_REPROMPTS)?;
    Ok(turn_from_proposal(
        inputs,
        ctx,
        Route::Comparables,
        &answer.value,
        vec![Artifact::Comparables(table)],
        answer.warnings,
    ))
}
