mod common;

use common::{inputs_strategy, oracle_value_per_share, rel_err};
use proptest::prelude::*;
use valuation_core::valuation::{
    derive_base_anchors, sensitivity_grid, value, Axis, BaseFinancials, DriverPath, MacroInputs,
    ValuationInputs, ValueDrivers, HORIZON,
};

const ORACLE_TOL: f64 = 1e-9;

fn perpetuity(revenue: f64, margin: f64, tax: f64, wacc: f64) -> ValuationInputs {
    let macro_inputs = MacroInputs { risk_free_rate: 0.04, equity_risk_premium: 0.05, marginal_tax_rate: tax };
    let financials = BaseFinancials {
        base_revenue: revenue,
        base_ebit: revenue * margin,
        effective_tax_rate: tax,
        total_debt: 0.0,
        cash_and_nonoperating: 0.0,
        shares_outstanding: 100.0,
        market_price: 5.0,
        depreciation_amortization: 0.0,
    };
    ValuationInputs::new(common::identity("FLAT"), financials, ValueDrivers::flat(0.0, margin, 1.5, wacc), macro_inputs)
        .unwrap()
}

#[test]
fn textbook_perpetuity_is_seven_fifty() {
    let v = value(&perpetuity(1000.0, 0.10, 0.25, 0.10)).unwrap();
    assert!((v.value_per_share - 7.50).abs() < 1e-12, "{}", v.value_per_share);
}

#[test]
fn anchors_from_two_years_of_history() {
    let snapshot = valuation_core::fundamentals::FundamentalsSnapshot {
        identity: common::identity("ANCH"),
        as_of: common::date("2024-11-04"),
        revenue_history: vec![800.0, 1000.0],
        ebit: 100.0,
        depreciation_amortization: 0.0,
        effective_tax_rate: 0.2,
        total_debt: 0.0,
        cash_and_nonoperating: 0.0,
        invested_capital: 500.0,
        shares_outstanding: 10.0,
        market_price: 10.0,
    };
    let macro_inputs = MacroInputs { risk_free_rate: 0.044, equity_risk_premium: 0.05, marginal_tax_rate: 0.25 };
    let d = derive_base_anchors(&snapshot, &macro_inputs).unwrap();
    assert!((d.revenue_growth[0] - 0.25).abs() < 1e-12);
    assert!((d.operating_margin[0] - 0.10).abs() < 1e-12);
    assert!((d.sales_to_capital[0] - 2.0).abs() < 1e-12);
    assert_eq!(d.revenue_growth[HORIZON - 1], 0.044);
}

#[test]
fn sensitivity_grid_brackets_the_point_estimate() {
    let inputs = perpetuity(1000.0, 0.10, 0.25, 0.10);
    let v = value(&inputs).unwrap().value_per_share;
    let t = sensitivity_grid(
        &inputs,
        &Axis::new("terminal_margin", vec![0.08, 0.10, 0.12]),
        &Axis::new("cost_of_capital", vec![0.09, 0.10, 0.11]),
    )
    .unwrap();
    let (lo, hi) = t.min_max();
    assert!(lo < v && v < hi);
    assert_eq!(t.cells[1][1], v);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_matches_oracle(inputs in inputs_strategy(-0.3, -0.2)) {
        let v = value(&inputs).unwrap().value_per_share;
        let o = oracle_value_per_share(&inputs);
        prop_assert!(rel_err(v, o) <= ORACLE_TOL || (v - o).abs() < 1e-9, "engine {v} oracle {o}");
    }

    #[test]
    fn flat_zero_growth_is_nopat_over_wacc(
        revenue in 1.0..1e6f64, margin in 0.01..0.5f64, tax in 0.0..0.4f64, wacc in 0.05..0.2f64,
    ) {
        let v = value(&perpetuity(revenue, margin, tax, wacc)).unwrap();
        let expected = revenue * margin * (1.0 - tax) / wacc;
        prop_assert!(rel_err(v.enterprise_value, expected) <= ORACLE_TOL);
    }

    #[test]
    fn value_rises_with_any_margin(inputs in inputs_strategy(-0.3, -0.2), year in 0..=HORIZON, bump in 0.001..0.05f64) {
        let base = value(&inputs).unwrap().value_per_share;
        let mut up = inputs.clone();
        if year == HORIZON {
            up.drivers.terminal_margin = (up.drivers.terminal_margin + bump).min(0.99);
        } else {
            up.drivers.operating_margin[year] = (up.drivers.operating_margin[year] + bump).min(0.99);
        }
        let after = value(&up).unwrap().value_per_share;
        prop_assert!(after >= base - 1e-9 * base.abs().max(1.0), "{base} -> {after}");
    }

    #[test]
    fn sales_to_capital_helps_growing_firms(inputs in inputs_strategy(0.0, -0.2), year in 0..HORIZON, bump in 0.01..1.0f64) {
        let base = value(&inputs).unwrap().value_per_share;
        let mut up = inputs.clone();
        up.drivers.sales_to_capital[year] += bump;
        let after = value(&up).unwrap().value_per_share;
        prop_assert!(after >= base - 1e-9 * base.abs().max(1.0), "{base} -> {after}");
    }

    #[test]
    fn higher_cost_of_capital_lowers_positive_remaining_value(
        inputs in inputs_strategy(-0.3, -0.2), year in 0..HORIZON, bump in 0.001..0.05f64,
    ) {
        let r = value(&inputs).unwrap();
        let remaining: f64 = r.table.rows[year..].iter().map(|row| row.present_value).sum::<f64>() + r.pv_terminal;
        prop_assume!(remaining > 0.0);
        let mut up = inputs.clone();
        up.drivers.cost_of_capital[year] += bump;
        let after = value(&up).unwrap().value_per_share;
        prop_assert!(after <= r.value_per_share + 1e-9 * r.value_per_share.abs().max(1.0));
    }

    #[test]
    fn patches_never_leave_invalid_inputs(inputs in inputs_strategy(-0.3, -0.2), tg in -0.1..0.2f64) {
        let path: DriverPath = "terminal_growth".parse().unwrap();
        match inputs.with_changes(&[(path, tg)], "p") {
            Ok(next) => prop_assert!(next.problems().is_empty()),
            Err(_) => prop_assert!(tg > inputs.macro_inputs.risk_free_rate || tg >= inputs.drivers.terminal_cost_of_capital),
        }
    }
}
