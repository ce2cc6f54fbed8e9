use super::{MacroInputs, ValueDrivers, HORIZON};
use crate::error::ValuationError;
use crate::fundamentals::FundamentalsSnapshot;

const GROWTH_FLOOR: f64 = -0.5;
const GROWTH_CAP: f64 = 1.0;
const MARGIN_BOUND: f64 = 0.95;
const FALLBACK_SALES_TO_CAPITAL: f64 = 1.0;

/// Trailing compound annual revenue growth over the whole history.
pub(crate) fn trailing_cagr(history: &[f64]) -> f64 {
    let first = history[0];
    let last = history[history.len() - 1];
    let years = (history.len() - 1) as f64;
    let raw = if first > 0.0 && last >= 0.0 {
        (last / first).powf(1.0 / years) - 1.0
    } else if first <= 0.0 && last > 0.0 {
        GROWTH_CAP
    } else {
        0.0
    };
    raw.clamp(GROWTH_FLOOR, GROWTH_CAP)
}

fn interpolate(first: f64, last: f64) -> [f64; HORIZON] {
    let mut out = [0.0; HORIZON];
    for (t, slot) in out.iter_mut().enumerate() {
        *slot = if t == HORIZON - 1 {
            last
        } else {
            first + (last - first) * t as f64 / (HORIZON - 1) as f64
        };
    }
    out
}

/// Base-year anchors computed directly from the statements. The forward
/// path starts at these values; moving it is the agents' job.
///
/// Year 1 takes the observed ratios, year 10 lands on the terminal value,
/// and the years between are linear. Terminal growth defaults to the
/// risk-free rate and terminal cost of capital to `rf + erp`.
pub fn derive_base_anchors(
    snapshot: &FundamentalsSnapshot,
    macro_inputs: &MacroInputs,
) -> Result<ValueDrivers, ValuationError> {
    let history = &snapshot.revenue_history;
    if history.len() < 2 {
        return Err(ValuationError::InsufficientHistory(history.len()));
    }
    let latest = snapshot.latest_revenue();
    let growth = trailing_cagr(history);
    let margin = if latest > 0.0 {
        (snapshot.ebit / latest).clamp(-MARGIN_BOUND, MARGIN_BOUND)
    } else {
        0.0
    };
    let sales_to_capital = match latest / snapshot.invested_capital {
        s if s.is_finite() && s > 0.0 => s,
        _ => FALLBACK_SALES_TO_CAPITAL,
    };
    let cost_of_capital = macro_inputs.risk_free_rate + macro_inputs.equity_risk_premium;
    let terminal_growth = macro_inputs.risk_free_rate;

    Ok(ValueDrivers {
        revenue_growth: interpolate(growth, terminal_growth),
        terminal_growth,
        operating_margin: interpolate(margin, margin),
        terminal_margin: margin,
        sales_to_capital: interpolate(sales_to_capital, sales_to_capital),
        cost_of_capital: interpolate(cost_of_capital, cost_of_capital),
        terminal_cost_of_capital: cost_of_capital,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamentals::CompanyIdentity;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn snapshot(history: Vec<f64>, ebit: f64, invested: f64) -> FundamentalsSnapshot {
        FundamentalsSnapshot {
            identity: CompanyIdentity {
                name: "A".into(),
                ticker: "A".into(),
                listing_currency: "USD".into(),
                country: "US".into(),
            },
            as_of: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            revenue_history: history,
            ebit,
            depreciation_amortization: 0.0,
            effective_tax_rate: 0.2,
            total_debt: 0.0,
            cash_and_nonoperating: 0.0,
            invested_capital: invested,
            shares_outstanding: 1.0,
            market_price: 1.0,
        }
    }

    fn macro_inputs() -> MacroInputs {
        MacroInputs { risk_free_rate: 0.04, equity_risk_premium: 0.05, marginal_tax_rate: 0.25 }
    }

    #[test]
    fn direct_ratios() {
        let d = derive_base_anchors(&snapshot(vec![800.0, 1000.0], 100.0, 500.0), &macro_inputs())
            .unwrap();
        assert!((d.revenue_growth[0] - 0.25).abs() < 1e-15);
        assert!((d.operating_margin[0] - 0.10).abs() < 1e-15);
        assert!((d.sales_to_capital[0] - 2.0).abs() < 1e-15);
        assert!((d.cost_of_capital[0] - 0.09).abs() < 1e-15);
        assert_eq!(d.revenue_growth[HORIZON - 1], d.terminal_growth);
    }

    #[test]
    fn flat_history_zero_growth() {
        let d = derive_base_anchors(&snapshot(vec![1000.0, 1000.0], 50.0, 500.0), &macro_inputs())
            .unwrap();
        assert_eq!(d.revenue_growth[0], 0.0);
    }

    #[test]
    fn three_year_cagr() {
        let d = derive_base_anchors(&snapshot(vec![600.0, 800.0, 1000.0], 50.0, 500.0), &macro_inputs())
            .unwrap();
        let oracle = (1000.0f64 / 600.0).sqrt() - 1.0;
        assert!((d.revenue_growth[0] - oracle).abs() < 1e-15);
        assert!((d.revenue_growth[0] - 0.2910).abs() < 5e-5);
    }

    #[test]
    fn growth_clamped() {
        let d = derive_base_anchors(&snapshot(vec![100.0, 1000.0], 50.0, 500.0), &macro_inputs())
            .unwrap();
        assert_eq!(d.revenue_growth[0], 1.0);
        let d = derive_base_anchors(&snapshot(vec![1000.0, 100.0], 5.0, 500.0), &macro_inputs())
            .unwrap();
        assert_eq!(d.revenue_growth[0], -0.5);
    }

    #[test]
    fn single_observation_is_insufficient() {
        let err = derive_base_anchors(&snapshot(vec![1000.0], 50.0, 500.0), &macro_inputs())
            .unwrap_err();
        assert_eq!(err, ValuationError::InsufficientHistory(1));
    }

    proptest! {
        // one line per ratio, written independently of the implementation above
        #[test]
        fn anchors_match_ratio_oracle(
            hist in prop::collection::vec(10.0f64..1e6, 2..=8),
            margin in -0.5f64..0.5,
            turns in 0.2f64..5.0,
        ) {
            let latest = *hist.last().unwrap();
            let snap = snapshot(hist.clone(), latest * margin, latest / turns);
            let d = derive_base_anchors(&snap, &macro_inputs()).unwrap();

            let n = (hist.len() - 1) as f64;
            let cagr = ((latest / hist[0]).powf(1.0 / n) - 1.0).max(-0.5).min(1.0);
            prop_assert!((d.revenue_growth[0] - cagr).abs() <= 1e-12);
            prop_assert!((d.operating_margin[0] - (latest * margin) / latest).abs() <= 1e-12);
            prop_assert!((d.sales_to_capital[0] - latest / (latest / turns)).abs() <= 1e-9 * turns);
            prop_assert!((d.cost_of_capital[0] - 0.09).abs() <= 1e-15);
        }
    }
}
