//! Addressing individual inputs by path, e.g. `operating_margin[3]`,
//! `terminal_growth` or `financials.total_debt`.
//!
//! Selectors may also name a whole schedule (`revenue_growth`) or an
//! inclusive year range (`revenue_growth[2..10]`); these expand into one
//! scalar path per year.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ValuationInputs, HORIZON};
use crate::error::ValuationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Schedule {
    RevenueGrowth,
    OperatingMargin,
    SalesToCapital,
    CostOfCapital,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerminalDriver {
    Growth,
    Margin,
    CostOfCapital,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FinancialField {
    BaseRevenue,
    BaseEbit,
    EffectiveTaxRate,
    TotalDebt,
    CashAndNonoperating,
    SharesOutstanding,
    MarketPrice,
    DepreciationAmortization,
}

const SCHEDULES: [(&str, Schedule); 4] = [
    ("revenue_growth", Schedule::RevenueGrowth),
    ("operating_margin", Schedule::OperatingMargin),
    ("sales_to_capital", Schedule::SalesToCapital),
    ("cost_of_capital", Schedule::CostOfCapital),
];

const TERMINALS: [(&str, TerminalDriver); 3] = [
    ("terminal_growth", TerminalDriver::Growth),
    ("terminal_margin", TerminalDriver::Margin),
    ("terminal_cost_of_capital", TerminalDriver::CostOfCapital),
];

const FINANCIALS: [(&str, FinancialField); 8] = [
    ("base_revenue", FinancialField::BaseRevenue),
    ("base_ebit", FinancialField::BaseEbit),
    ("effective_tax_rate", FinancialField::EffectiveTaxRate),
    ("total_debt", FinancialField::TotalDebt),
    ("cash_and_nonoperating", FinancialField::CashAndNonoperating),
    ("shares_outstanding", FinancialField::SharesOutstanding),
    ("market_price", FinancialField::MarketPrice),
    ("depreciation_amortization", FinancialField::DepreciationAmortization),
];

impl Schedule {
    pub fn name(self) -> &'static str {
        SCHEDULES.iter().find(|(_, s)| *s == self).unwrap().0
    }
}

impl TerminalDriver {
    pub fn name(self) -> &'static str {
        TERMINALS.iter().find(|(_, t)| *t == self).unwrap().0
    }
}

impl FinancialField {
    pub fn name(self) -> &'static str {
        FINANCIALS.iter().find(|(_, f)| *f == self).unwrap().0
    }
}

/// A single scalar input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DriverPath {
    /// Year is 1-based, `1..=HORIZON`.
    Schedule(Schedule, usize),
    Terminal(TerminalDriver),
    Financial(FinancialField),
}

impl DriverPath {
    pub fn is_value_driver(&self) -> bool {
        !matches!(self, DriverPath::Financial(_))
    }

    pub fn get(&self, inputs: &ValuationInputs) -> f64 {
        let d = &inputs.drivers;
        let f = &inputs.financials;
        match *self {
            DriverPath::Schedule(s, year) => {
                let arr = match s {
                    Schedule::RevenueGrowth => &d.revenue_growth,
                    Schedule::OperatingMargin => &d.operating_margin,
                    Schedule::SalesToCapital => &d.sales_to_capital,
                    Schedule::CostOfCapital => &d.cost_of_capital,
                };
                arr[year - 1]
            }
            DriverPath::Terminal(TerminalDriver::Growth) => d.terminal_growth,
            DriverPath::Terminal(TerminalDriver::Margin) => d.terminal_margin,
            DriverPath::Terminal(TerminalDriver::CostOfCapital) => d.terminal_cost_of_capital,
            DriverPath::Financial(field) => match field {
                FinancialField::BaseRevenue => f.base_revenue,
                FinancialField::BaseEbit => f.base_ebit,
                FinancialField::EffectiveTaxRate => f.effective_tax_rate,
                FinancialField::TotalDebt => f.total_debt,
                FinancialField::CashAndNonoperating => f.cash_and_nonoperating,
                FinancialField::SharesOutstanding => f.shares_outstanding,
                FinancialField::MarketPrice => f.market_price,
                FinancialField::DepreciationAmortization => f.depreciation_amortization,
            },
        }
    }

    /// Writes without validating; callers re-check invariants afterwards.
    pub(crate) fn set(&self, inputs: &mut ValuationInputs, value: f64) {
        let d = &mut inputs.drivers;
        let f = &mut inputs.financials;
        match *self {
            DriverPath::Schedule(s, year) => {
                let arr = match s {
                    Schedule::RevenueGrowth => &mut d.revenue_growth,
                    Schedule::OperatingMargin => &mut d.operating_margin,
                    Schedule::SalesToCapital => &mut d.sales_to_capital,
                    Schedule::CostOfCapital => &mut d.cost_of_capital,
                };
                arr[year - 1] = value;
            }
            DriverPath::Terminal(TerminalDriver::Growth) => d.terminal_growth = value,
            DriverPath::Terminal(TerminalDriver::Margin) => d.terminal_margin = value,
            DriverPath::Terminal(TerminalDriver::CostOfCapital) => {
                d.terminal_cost_of_capital = value
            }
            DriverPath::Financial(field) => match field {
                FinancialField::BaseRevenue => f.base_revenue = value,
                FinancialField::BaseEbit => f.base_ebit = value,
                FinancialField::EffectiveTaxRate => f.effective_tax_rate = value,
                FinancialField::TotalDebt => f.total_debt = value,
                FinancialField::CashAndNonoperating => f.cash_and_nonoperating = value,
                FinancialField::SharesOutstanding => f.shares_outstanding = value,
                FinancialField::MarketPrice => f.market_price = value,
                FinancialField::DepreciationAmortization => f.depreciation_amortization = value,
            },
        }
    }
}

impl fmt::Display for DriverPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriverPath::Schedule(s, year) => write!(f, "{}[{year}]", s.name()),
            DriverPath::Terminal(t) => f.write_str(t.name()),
            DriverPath::Financial(x) => write!(f, "financials.{}", x.name()),
        }
    }
}

impl FromStr for DriverPath {
    type Err = ValuationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let paths = DriverSelector::from_str(s)?.expand();
        match paths.as_slice() {
            [single] => Ok(*single),
            _ => Err(ValuationError::UnknownDriver(s.to_string())),
        }
    }
}

impl Serialize for DriverPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DriverPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One or more scalar paths named by a single string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriverSelector {
    text: String,
    paths: Vec<DriverPath>,
}

impl DriverSelector {
    pub fn expand(&self) -> Vec<DriverPath> {
        self.paths.clone()
    }

    pub fn paths(&self) -> &[DriverPath] {
        &self.paths
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn is_value_driver(&self) -> bool {
        self.paths.iter().all(DriverPath::is_value_driver)
    }

    /// Copy of `inputs` with every selected path set to `value`.
    pub fn apply(&self, inputs: &ValuationInputs, value: f64) -> ValuationInputs {
        let mut out = inputs.clone();
        for p in &self.paths {
            p.set(&mut out, value);
        }
        out
    }

    /// Mean of the current values under this selector.
    pub fn current(&self, inputs: &ValuationInputs) -> f64 {
        let sum: f64 = self.paths.iter().map(|p| p.get(inputs)).sum();
        sum / self.paths.len() as f64
    }
}

impl fmt::Display for DriverSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn parse_year(s: &str, whole: &str) -> Result<usize, ValuationError> {
    match s.trim().parse::<usize>() {
        Ok(y) if (1..=HORIZON).contains(&y) => Ok(y),
        _ => Err(ValuationError::UnknownDriver(whole.to_string())),
    }
}

impl FromStr for DriverSelector {
    type Err = ValuationError;

    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let s = raw.trim();
        let unknown = || ValuationError::UnknownDriver(raw.to_string());
        let (name, index) = match s.find('[') {
            Some(open) => {
                let inner = s[open + 1..].strip_suffix(']').ok_or_else(unknown)?;
                (&s[..open], Some(inner))
            }
            None => (s, None),
        };

        if let Some((_, sched)) = SCHEDULES.iter().find(|(n, _)| *n == name) {
            let years: Vec<usize> = match index {
                None => (1..=HORIZON).collect(),
                Some(idx) => match idx.split_once("..") {
                    Some((a, b)) => {
                        let (a, b) = (parse_year(a, raw)?, parse_year(b, raw)?);
                        if a > b {
                            return Err(unknown());
                        }
                        (a..=b).collect()
                    }
                    None => vec![parse_year(idx, raw)?],
                },
            };
            return Ok(DriverSelector {
                text: s.to_string(),
                paths: years.into_iter().map(|y| DriverPath::Schedule(*sched, y)).collect(),
            });
        }
        if index.is_some() {
            return Err(unknown());
        }
        let path = if let Some((_, t)) = TERMINALS.iter().find(|(n, _)| *n == name) {
            DriverPath::Terminal(*t)
        } else if let Some((_, f)) = name
            .strip_prefix("financials.")
            .and_then(|n| FINANCIALS.iter().find(|(x, _)| *x == n))
        {
            DriverPath::Financial(*f)
        } else {
            return Err(unknown());
        };
        Ok(DriverSelector {
            text: s.to_string(),
            paths: vec![path],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_paths_round_trip_through_display() {
        for text in [
            "revenue_growth[1]",
            "operating_margin[10]",
            "terminal_growth",
            "terminal_cost_of_capital",
            "financials.total_debt",
        ] {
            let p: DriverPath = text.parse().unwrap();
            assert_eq!(p.to_string(), text);
        }
    }

    #[test]
    fn ranges_expand() {
        let sel: DriverSelector = "operating_margin[2..10]".parse().unwrap();
        assert_eq!(sel.paths().len(), 9);
        assert_eq!(sel.paths()[0], DriverPath::Schedule(Schedule::OperatingMargin, 2));
        let whole: DriverSelector = "cost_of_capital".parse().unwrap();
        assert_eq!(whole.paths().len(), HORIZON);
    }

    #[test]
    fn unknown_names_rejected() {
        for bad in ["vibes", "revenue_growth[0]", "revenue_growth[11]", "terminal_growth[1]",
                    "revenue_growth[5..2]", "financials.ceo_salary", "revenue_growth"] {
            assert!(bad.parse::<DriverPath>().is_err(), "{bad}");
        }
        assert!("revenue_growth".parse::<DriverSelector>().is_ok());
    }
}
