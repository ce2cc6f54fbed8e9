use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Issue, IssueCategory, ReportDraft, ReportMaterials};

/// Relative allowance for rounded numbers in prose.
pub const PROSE_TOLERANCE: f64 = 0.005;

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)-?[$€£¥]?-?\d[\d,]*(?:\.\d+)?(?:\s?(%|x\b|×|trillion\b|billion\b|million\b|thousand\b|bn\b|mn\b|tn\b|k\b))?",
    )
    .expect("number pattern")
});

/// A number quoted in narrative text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericClaim {
    pub text: String,
    pub value: f64,
    /// Heading of the section the number appears in.
    pub location: String,
}

impl NumericClaim {
    /// Values the claim may stand for: the bare number, a fraction when
    /// written as a percentage, and the scaled amount for magnitude words.
    fn candidates(&self) -> Vec<f64> {
        let lower = self.text.to_lowercase();
        let mut out = vec![self.value];
        if lower.ends_with('%') {
            out.push(self.value / 100.0);
        }
        let scales = [
            ("trillion", 1e12),
            ("tn", 1e12),
            ("billion", 1e9),
            ("bn", 1e9),
            ("million", 1e6),
            ("mn", 1e6),
            ("thousand", 1e3),
            ("k", 1e3),
        ];
        if let Some((_, s)) = scales.iter().find(|(w, _)| lower.ends_with(w)) {
            out.push(self.value * s);
            // amounts kept in millions
            out.push(self.value * s / 1e6);
        }
        out
    }

    /// Small counts and calendar years are not treated as claims.
    fn is_exempt(&self) -> bool {
        let bare = !self.text.contains(['%', '.', '$', '€', '£', '¥', '×'])
            && !self.text.chars().any(char::is_alphabetic);
        bare && self.value.fract() == 0.0
            && ((0.0..=10.0).contains(&self.value) || (1900.0..=2100.0).contains(&self.value))
    }
}

/// Every numeric token in `text`; digits glued to words (tickers, ids,
/// dates after the first component) are not numbers.
pub fn extract_claims(text: &str, location: &str) -> Vec<NumericClaim> {
    let mut out = Vec::new();
    for m in NUMBER.find_iter(text) {
        let before = text[..m.start()].chars().next_back();
        if before.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '-') {
            continue;
        }
        let after = text[m.end()..].chars().next();
        if after.is_some_and(|c| c.is_alphanumeric() || c == '_') {
            continue;
        }
        let token = m.as_str().trim_end_matches(|c: char| c == ',' || c.is_whitespace());
        let digits: String = token
            .chars()
            .take_while(|c| !c.is_alphabetic() && *c != '%' && *c != '×' && !c.is_whitespace())
            .filter(|c| c.is_ascii_digit() || *c == '.' || *c == '-')
            .collect();
        let Ok(value) = digits.parse::<f64>() else { continue };
        let claim = NumericClaim { text: token.to_string(), value, location: location.to_string() };
        if !claim.is_exempt() {
            out.push(claim);
        }
    }
    out
}

/// All values a report may quote.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Whitelist {
    values: Vec<f64>,
}

impl Whitelist {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        Self { values: values.into_iter().filter(|v| v.is_finite()).collect() }
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) {
        self.values.extend(values.into_iter().filter(|v| v.is_finite()));
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Engine outputs, inputs, grid cells and peer data.
    pub fn from_materials(m: &ReportMaterials<'_>) -> Self {
        let mut w = Whitelist::default();
        let r = m.result;
        w.extend([
            r.enterprise_value,
            r.equity_value,
            r.value_per_share,
            r.pv_explicit,
            r.pv_terminal,
            r.terminal_value,
            r.terminal_revenue,
            r.terminal_ebit,
            r.terminal_nopat,
            r.price_to_value,
        ]);
        w.extend(r.terminal_ev_to_ebitda);
        for row in &r.table.rows {
            w.extend([
                row.revenue,
                row.ebit,
                row.tax,
                row.nopat,
                row.reinvestment,
                row.fcff,
                row.cumulative_discount_factor,
                row.present_value,
            ]);
        }
        let f = &m.inputs.financials;
        w.extend([
            f.base_revenue,
            f.base_ebit,
            f.effective_tax_rate,
            f.total_debt,
            f.cash_and_nonoperating,
            f.shares_outstanding,
            f.market_price,
            f.depreciation_amortization,
        ]);
        if f.market_price > 0.0 {
            w.extend([r.value_per_share / f.market_price - 1.0, 1.0 - f.market_price / r.value_per_share]);
        }
        let mac = &m.inputs.macro_inputs;
        w.extend([mac.risk_free_rate, mac.equity_risk_premium, mac.marginal_tax_rate]);
        let d = &m.inputs.drivers;
        for sched in [&d.revenue_growth, &d.operating_margin, &d.sales_to_capital, &d.cost_of_capital] {
            w.extend(sched.iter().copied());
        }
        w.extend([d.terminal_growth, d.terminal_margin, d.terminal_cost_of_capital]);
        if let Some(t) = m.sensitivity {
            w.extend(t.row_axis.values.iter().copied());
            w.extend(t.col_axis.values.iter().copied());
            w.extend(t.cells.iter().flatten().copied());
        }
        if let Some(c) = m.comparables {
            w.extend(c.ev_to_ebitda);
            for p in &c.peers {
                w.extend([p.ev_to_ebitda, p.revenue_growth, p.operating_margin]);
            }
        }
        w.extend(m.extra_numbers.iter().copied());
        w
    }

    /// Whether `x` equals a listed value within `tolerance` relative.
    pub fn matches(&self, x: f64, tolerance: f64) -> bool {
        self.values.iter().any(|&v| {
            if v == 0.0 || x == 0.0 {
                (x - v).abs() <= 1e-12
            } else {
                ((x - v) / v).abs() <= tolerance
            }
        })
    }

    /// Prose states declines without a sign, so magnitudes are compared too.
    pub fn admits(&self, claim: &NumericClaim) -> bool {
        claim.candidates().into_iter().any(|c| self.matches(c, PROSE_TOLERANCE) || self.matches(-c, PROSE_TOLERANCE))
    }
}

/// Numbers quoted in the narrative that match no whitelisted value.
pub fn verify_numbers(draft: &ReportDraft, whitelist: &Whitelist) -> Vec<Issue> {
    draft
        .numeric_claims
        .iter()
        .filter(|c| !whitelist.admits(c))
        .map(|c| Issue {
            category: IssueCategory::UnverifiedNumber,
            detail: format!("`{}` in section \"{}\" matches no computed value", c.text, c.location),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(text: &str) -> Vec<f64> {
        extract_claims(text, "s").into_iter().map(|c| c.value).collect()
    }

    #[test]
    fn extraction() {
        assert_eq!(values("valuing the company at $420 per share"), [420.0]);
        assert_eq!(values("a 6.7% margin and 8.8x EV/EBITDA"), [6.7, 8.8]);
        assert_eq!(values("revenue of 1,234.5 million"), [1234.5]);
        assert_eq!(values("in 2024 over 10 years, Q3, r02-market, 2024-10-28"), Vec::<f64>::new());
        assert_eq!(values("growth falls to -0.5% then 4.4%."), [-0.5, 4.4]);
    }

    #[test]
    fn tolerance_arithmetic() {
        let w = Whitelist::new([420.0, 8.7942, 0.067]);
        let ok = |t: &str| extract_claims(t, "s").iter().all(|c| w.admits(c));
        assert!(ok("$420 per share"));
        assert!(ok("8.8x")); // |8.8 - 8.7942| / 8.7942 = 0.066%
        assert!(ok("6.7%"));
        assert!(!ok("$999"));
        assert!(!ok("8.9x")); // 1.2% off
    }

    #[test]
    fn negative_written_as_decline() {
        let w = Whitelist::new([-0.005]);
        assert!(extract_claims("cut growth by 0.5%", "s").iter().all(|c| w.admits(c)));
    }
}
