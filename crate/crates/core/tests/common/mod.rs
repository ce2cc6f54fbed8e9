#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use valuation_core::config::RunConfig;
use valuation_core::orchestrator::{FixedClock, RunOptions};
use valuation_core::valuation::{ValuationInputs, HORIZON};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// The bundled scripted configuration with output redirected under `tmp`.
pub fn scripted_config(tmp: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&repo_root().join("configs/scripted.toml")).unwrap();
    cfg.paths.out_dir = tmp.join("out");
    cfg.paths.runs_dir = tmp.join("runs");
    cfg
}

pub fn options_at(day: &str) -> RunOptions {
    RunOptions { clock: Arc::new(FixedClock::end_of(date(day))), ..RunOptions::default() }
}

/// Year-by-year FCFF valuation written independently of the engine.
pub fn oracle_value_per_share(inputs: &ValuationInputs) -> f64 {
    let d = &inputs.drivers;
    let f = &inputs.financials;
    let eff = f.effective_tax_rate;
    let mtr = inputs.macro_inputs.marginal_tax_rate;

    let mut revenue = vec![f.base_revenue];
    for t in 0..HORIZON {
        revenue.push(revenue[t] * (1.0 + d.revenue_growth[t]));
    }
    let mut pv = 0.0;
    let mut factor = 1.0;
    for year in 1..=HORIZON {
        let rate = if year <= 5 { eff } else { eff + (mtr - eff) * (year as f64 - 5.0) / 5.0 };
        let ebit = revenue[year] * d.operating_margin[year - 1];
        let nopat = if ebit > 0.0 { ebit * (1.0 - rate) } else { ebit };
        let growth_capital = (revenue[year] - revenue[year - 1]) / d.sales_to_capital[year - 1];
        let fcff = nopat - growth_capital.max(0.0);
        factor *= 1.0 + d.cost_of_capital[year - 1];
        pv += fcff / factor;
    }
    let rev_t = revenue[HORIZON] * (1.0 + d.terminal_growth);
    let ebit_t = rev_t * d.terminal_margin;
    let nopat_t = if ebit_t > 0.0 { ebit_t * (1.0 - mtr) } else { ebit_t };
    let fcff_t = nopat_t - nopat_t * d.terminal_growth / d.terminal_cost_of_capital;
    let tv = fcff_t / (d.terminal_cost_of_capital - d.terminal_growth);
    let ev = pv + tv / factor;
    (ev - f.total_debt + f.cash_and_nonoperating) / f.shares_outstanding
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use valuation_core::fundamentals::CompanyIdentity;
use valuation_core::valuation::{BaseFinancials, MacroInputs, ValueDrivers};

pub fn identity(ticker: &str) -> CompanyIdentity {
    CompanyIdentity {
        name: format!("{ticker} Holdings"),
        ticker: ticker.to_string(),
        listing_currency: "USD".into(),
        country: "US".into(),
    }
}

fn schedule(lo: f64, hi: f64) -> impl Strategy<Value = [f64; HORIZON]> {
    prop::array::uniform10(lo..hi)
}

/// Valid inputs. `growth_floor` and `margin_floor` bound the schedules from
/// below so callers can ask for non-negative growth or profitable years.
pub fn inputs_strategy(growth_floor: f64, margin_floor: f64) -> impl Strategy<Value = ValuationInputs> {
    let macro_s = (0.01..0.06f64, 0.02..0.07f64, 0.0..0.4f64);
    let fin_s = (1.0..1e6f64, 0.0..0.4f64, 0.0..1e5f64, 0.0..1e5f64, 1.0..1e4f64, 1.0..500.0f64);
    let drv_s = (
        schedule(growth_floor, 0.4),
        schedule(margin_floor, 0.4),
        schedule(0.3, 5.0),
        schedule(0.04, 0.15),
        margin_floor..0.4f64,
        0.0..1.0f64,
        0.01..0.1f64,
    );
    (macro_s, fin_s, drv_s).prop_map(|((rf, erp, mtr), (rev, eff, debt, cash, shares, price), d)| {
        let (growth, margin, s2c, wacc, tm, tg_frac, spread) = d;
        let macro_inputs = MacroInputs { risk_free_rate: rf, equity_risk_premium: erp, marginal_tax_rate: mtr };
        let tg = -0.02 + (rf + 0.02) * tg_frac;
        let drivers = ValueDrivers {
            revenue_growth: growth,
            terminal_growth: tg,
            operating_margin: margin,
            terminal_margin: tm,
            sales_to_capital: s2c,
            cost_of_capital: wacc,
            terminal_cost_of_capital: tg + spread,
        };
        let financials = BaseFinancials {
            base_revenue: rev,
            base_ebit: rev * margin[0],
            effective_tax_rate: eff,
            total_debt: debt,
            cash_and_nonoperating: cash,
            shares_outstanding: shares,
            market_price: price,
            depreciation_amortization: 0.0,
        };
        ValuationInputs::new(identity("RAND"), financials, drivers, macro_inputs).expect("strategy yields valid inputs")
    })
}

/// `n` draws from a deterministic runner.
pub fn sample<S: Strategy>(strategy: S, n: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..n).map(|_| strategy.new_tree(&mut runner).unwrap().current()).collect()
}

use valuation_core::llm::{Gateway, ScriptRule, ScriptedRules};

pub fn byd_rules() -> ScriptedRules {
    ScriptedRules::load(&repo_root().join("scripts/byd.rules.json")).unwrap()
}

/// The bundled rules with `overrides` taking precedence.
pub fn gateway_with(overrides: Vec<ScriptRule>) -> Gateway {
    let mut rules = overrides;
    rules.extend(byd_rules().rules);
    Gateway::scripted(ScriptedRules::new(rules))
}

pub fn patch_json(changes: &[(&str, f64)]) -> String {
    let changes: Vec<_> = changes.iter().map(|(p, v)| serde_json::json!({"path": p, "value": v})).collect();
    serde_json::json!({"changes": changes, "rationale": "scripted"}).to_string()
}

pub fn route_json(route: &str) -> String {
    serde_json::json!({"route": route, "instruction": format!("go to {route}")}).to_string()
}

use valuation_core::orchestrator::RunState;
use valuation_core::store::RunRecord;

/// Rebuilds the end-of-run state held in a record.
pub fn state_of(record: &RunRecord) -> RunState {
    RunState {
        initial_inputs: record.initial_inputs.clone(),
        inputs: record.final_inputs.clone(),
        value_history: record.value_history.clone(),
        transcript: record.transcript.clone(),
        iteration: 0,
        warnings: vec![],
    }
}

/// Narrative part of a rendered report: everything before the first
/// generated table section.
pub fn narrative_of(markdown: &str) -> &str {
    markdown.split("\n## Value drivers").next().unwrap()
}
