//! Free-cash-flow-to-firm valuation over a fixed ten-year horizon followed
//! by a Gordon-growth terminal value.
//!
//! Conventions:
//! - end-of-year discounting, cumulative over the year-by-year cost of capital;
//! - tax at the effective rate for years 1-5, moving linearly to the
//!   marginal rate by year 10 and held there in the terminal year;
//! - no tax on negative EBIT and no loss carryforwards;
//! - reinvestment = revenue change / sales-to-capital, floored at zero;
//! - terminal ROIC equals the terminal cost of capital, so terminal
//!   reinvestment is `g / ROIC` of NOPAT.

mod anchors;
mod drivers;
mod sensitivity;

pub use anchors::derive_base_anchors;
pub use drivers::{DriverPath, DriverSelector, FinancialField, Schedule, TerminalDriver};
pub use sensitivity::{sensitivity_grid, Axis, SensitivityTable, MAX_AXIS_LEN};

use serde::{Deserialize, Serialize};

use crate::error::ValuationError;
use crate::fundamentals::CompanyIdentity;

pub const HORIZON: usize = 10;

/// Bumped whenever valuation arithmetic changes; part of every run's config hash.
pub const ENGINE_VERSION: &str = "fcff-10y-1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroInputs {
    pub risk_free_rate: f64,
    pub equity_risk_premium: f64,
    pub marginal_tax_rate: f64,
}

impl MacroInputs {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..1.0).contains(&self.marginal_tax_rate) {
            out.push(format!("marginal_tax_rate {} outside [0, 1)", self.marginal_tax_rate));
        }
        if !(self.risk_free_rate > -0.05) || !self.risk_free_rate.is_finite() {
            out.push(format!("risk_free_rate {} must exceed -0.05", self.risk_free_rate));
        }
        if !self.equity_risk_premium.is_finite() {
            out.push("equity_risk_premium must be finite".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDrivers {
    pub revenue_growth: [f64; HORIZON],
    pub terminal_growth: f64,
    pub operating_margin: [f64; HORIZON],
    pub terminal_margin: f64,
    pub sales_to_capital: [f64; HORIZON],
    pub cost_of_capital: [f64; HORIZON],
    pub terminal_cost_of_capital: f64,
}

impl ValueDrivers {
    /// Flat schedules: every year equals its terminal counterpart.
    pub fn flat(growth: f64, margin: f64, sales_to_capital: f64, cost_of_capital: f64) -> Self {
        Self {
            revenue_growth: [growth; HORIZON],
            terminal_growth: growth,
            operating_margin: [margin; HORIZON],
            terminal_margin: margin,
            sales_to_capital: [sales_to_capital; HORIZON],
            cost_of_capital: [cost_of_capital; HORIZON],
            terminal_cost_of_capital: cost_of_capital,
        }
    }

    pub fn problems(&self, macro_inputs: &MacroInputs) -> Vec<String> {
        let mut out = Vec::new();
        let all = self
            .revenue_growth
            .iter()
            .chain(&self.operating_margin)
            .chain(&self.sales_to_capital)
            .chain(&self.cost_of_capital)
            .chain([&self.terminal_growth, &self.terminal_margin, &self.terminal_cost_of_capital]);
        if all.into_iter().any(|v| !v.is_finite()) {
            out.push("value drivers must all be finite".to_string());
            return out;
        }
        if self.terminal_growth > macro_inputs.risk_free_rate {
            out.push(format!(
                "terminal_growth {} exceeds risk_free_rate {}",
                self.terminal_growth, macro_inputs.risk_free_rate
            ));
        }
        if self.terminal_cost_of_capital <= self.terminal_growth {
            out.push(format!(
                "terminal_cost_of_capital {} must exceed terminal_growth {}",
                self.terminal_cost_of_capital, self.terminal_growth
            ));
        }
        for (i, s) in self.sales_to_capital.iter().enumerate() {
            if *s <= 0.0 {
                out.push(format!("sales_to_capital[{}] {s} must be > 0", i + 1));
            }
        }
        for (i, m) in self.operating_margin.iter().enumerate() {
            if *m <= -1.0 || *m >= 1.0 {
                out.push(format!("operating_margin[{}] {m} outside (-1, 1)", i + 1));
            }
        }
        if self.terminal_margin <= -1.0 || self.terminal_margin >= 1.0 {
            out.push(format!("terminal_margin {} outside (-1, 1)", self.terminal_margin));
        }
        for (i, g) in self.revenue_growth.iter().enumerate() {
            if *g <= -1.0 {
                out.push(format!("revenue_growth[{}] {g} must exceed -1", i + 1));
            }
        }
        for (i, r) in self.cost_of_capital.iter().enumerate() {
            if *r <= -1.0 {
                out.push(format!("cost_of_capital[{}] {r} must exceed -1", i + 1));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseFinancials {
    pub base_revenue: f64,
    pub base_ebit: f64,
    pub effective_tax_rate: f64,
    pub total_debt: f64,
    pub cash_and_nonoperating: f64,
    pub shares_outstanding: f64,
    pub market_price: f64,
    /// Base-year D&A; scaled with revenue to proxy terminal-year EBITDA.
    #[serde(default)]
    pub depreciation_amortization: f64,
}

impl BaseFinancials {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let fields = [
            ("base_revenue", self.base_revenue),
            ("base_ebit", self.base_ebit),
            ("total_debt", self.total_debt),
            ("cash_and_nonoperating", self.cash_and_nonoperating),
            ("market_price", self.market_price),
            ("depreciation_amortization", self.depreciation_amortization),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                out.push(format!("{name} must be finite"));
            }
        }
        if self.base_revenue < 0.0 {
            out.push(format!("base_revenue {} must be >= 0", self.base_revenue));
        }
        if !(self.shares_outstanding > 0.0) || !self.shares_outstanding.is_finite() {
            out.push(format!("shares_outstanding {} must be > 0", self.shares_outstanding));
        }
        if !(0.0..1.0).contains(&self.effective_tax_rate) {
            out.push(format!("effective_tax_rate {} outside [0, 1)", self.effective_tax_rate));
        }
        out
    }
}

/// The single mutable state of a valuation run. Values are replaced, never
/// edited in place: every accepted patch yields a new `ValuationInputs`
/// with a higher revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationInputs {
    pub identity: CompanyIdentity,
    pub financials: BaseFinancials,
    pub drivers: ValueDrivers,
    #[serde(rename = "macro")]
    pub macro_inputs: MacroInputs,
    pub revision: u64,
    pub provenance: Vec<String>,
}

impl ValuationInputs {
    pub fn new(
        identity: CompanyIdentity,
        financials: BaseFinancials,
        drivers: ValueDrivers,
        macro_inputs: MacroInputs,
    ) -> Result<Self, ValuationError> {
        let inputs = Self {
            identity,
            financials,
            drivers,
            macro_inputs,
            revision: 0,
            provenance: Vec::new(),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = self.macro_inputs.problems();
        out.extend(self.financials.problems());
        out.extend(self.drivers.problems(&self.macro_inputs));
        out
    }

    pub fn validate(&self) -> Result<(), ValuationError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ValuationError::InvariantViolation(problems))
        }
    }

    /// Replaces the drivers wholesale; the result is a new revision.
    pub fn with_drivers(&self, drivers: ValueDrivers, source: &str) -> Result<Self, ValuationError> {
        let mut next = self.clone();
        next.drivers = drivers;
        next.validate()?;
        next.revision += 1;
        next.provenance.push(source.to_string());
        Ok(next)
    }

    /// Applies scalar assignments atomically: either every assignment lands
    /// and all invariants hold, or `self` is returned untouched via `Err`.
    pub fn with_changes(
        &self,
        changes: &[(DriverPath, f64)],
        source: &str,
    ) -> Result<Self, ValuationError> {
        let mut next = self.clone();
        for (path, value) in changes {
            if !value.is_finite() {
                return Err(ValuationError::InvariantViolation(vec![format!(
                    "{path}: non-finite value"
                )]));
            }
            path.set(&mut next, *value);
        }
        next.validate()?;
        next.revision += 1;
        next.provenance.push(source.to_string());
        Ok(next)
    }

    /// Tax rate applied in explicit year `year` (1-based).
    pub fn tax_rate(&self, year: usize) -> f64 {
        let eff = self.financials.effective_tax_rate;
        let marginal = self.macro_inputs.marginal_tax_rate;
        if year <= 5 {
            eff
        } else {
            eff + (marginal - eff) * (year - 5) as f64 / 5.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashflowRow {
    pub year: usize,
    pub revenue: f64,
    pub ebit: f64,
    pub tax: f64,
    pub nopat: f64,
    pub reinvestment: f64,
    pub fcff: f64,
    pub cumulative_discount_factor: f64,
    pub present_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashflowTable {
    pub rows: Vec<CashflowRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationResult {
    pub enterprise_value: f64,
    pub equity_value: f64,
    pub value_per_share: f64,
    pub pv_explicit: f64,
    pub pv_terminal: f64,
    pub terminal_value: f64,
    pub terminal_revenue: f64,
    pub terminal_ebit: f64,
    pub terminal_nopat: f64,
    /// `None` when terminal EBITDA is not positive.
    pub terminal_ev_to_ebitda: Option<f64>,
    pub price_to_value: f64,
    pub table: CashflowTable,
}

fn terminal_ebitda(result: &ValuationResult, inputs: &ValuationInputs) -> f64 {
    let f = &inputs.financials;
    let da = if f.base_revenue > 0.0 {
        f.depreciation_amortization * result.terminal_revenue / f.base_revenue
    } else {
        f.depreciation_amortization
    };
    result.terminal_ebit + da
}

/// Terminal value over terminal-year EBITDA (EBIT plus the D&A proxy).
pub fn terminal_ev_to_ebitda(
    result: &ValuationResult,
    inputs: &ValuationInputs,
) -> Result<f64, ValuationError> {
    let ebitda = terminal_ebitda(result, inputs);
    if !(ebitda > 0.0) {
        return Err(ValuationError::DegenerateInput(format!(
            "terminal EBITDA {ebitda} is not positive"
        )));
    }
    Ok(result.terminal_value / ebitda)
}

/// Values the firm. Pure and deterministic.
pub fn value(inputs: &ValuationInputs) -> Result<ValuationResult, ValuationError> {
    if inputs.financials.shares_outstanding == 0.0 {
        return Err(ValuationError::DegenerateInput(
            "shares_outstanding is zero".to_string(),
        ));
    }
    inputs.validate()?;

    let d = &inputs.drivers;
    let f = &inputs.financials;
    let mut rows = Vec::with_capacity(HORIZON);
    let mut prev_revenue = f.base_revenue;
    let mut discount = 1.0;
    let mut pv_explicit = 0.0;

    for t in 0..HORIZON {
        let year = t + 1;
        let revenue = prev_revenue * (1.0 + d.revenue_growth[t]);
        let ebit = revenue * d.operating_margin[t];
        let tax = ebit.max(0.0) * inputs.tax_rate(year);
        let nopat = ebit - tax;
        let reinvestment = ((revenue - prev_revenue) / d.sales_to_capital[t]).max(0.0);
        let fcff = nopat - reinvestment;
        discount /= 1.0 + d.cost_of_capital[t];
        let present_value = fcff * discount;
        pv_explicit += present_value;
        rows.push(CashflowRow {
            year,
            revenue,
            ebit,
            tax,
            nopat,
            reinvestment,
            fcff,
            cumulative_discount_factor: discount,
            present_value,
        });
        prev_revenue = revenue;
    }

    let terminal_revenue = prev_revenue * (1.0 + d.terminal_growth);
    let terminal_ebit = terminal_revenue * d.terminal_margin;
    let terminal_nopat =
        terminal_ebit - terminal_ebit.max(0.0) * inputs.macro_inputs.marginal_tax_rate;
    let roic = d.terminal_cost_of_capital;
    let reinvestment_rate = d.terminal_growth / roic;
    let terminal_value = terminal_nopat * (1.0 - reinvestment_rate)
        / (d.terminal_cost_of_capital - d.terminal_growth);
    let pv_terminal = terminal_value * discount;

    let enterprise_value = pv_explicit + pv_terminal;
    let equity_value = enterprise_value - f.total_debt + f.cash_and_nonoperating;
    let value_per_share = equity_value / f.shares_outstanding;

    let mut result = ValuationResult {
        enterprise_value,
        equity_value,
        value_per_share,
        pv_explicit,
        pv_terminal,
        terminal_value,
        terminal_revenue,
        terminal_ebit,
        terminal_nopat,
        terminal_ev_to_ebitda: None,
        price_to_value: f.market_price / value_per_share,
        table: CashflowTable { rows },
    };
    result.terminal_ev_to_ebitda = terminal_ev_to_ebitda(&result, inputs).ok();
    Ok(result)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn identity() -> CompanyIdentity {
        CompanyIdentity {
            name: "Test Co".into(),
            ticker: "TEST".into(),
            listing_currency: "USD".into(),
            country: "US".into(),
        }
    }

    pub fn macro_inputs() -> MacroInputs {
        MacroInputs {
            risk_free_rate: 0.044,
            equity_risk_premium: 0.05,
            marginal_tax_rate: 0.25,
        }
    }

    pub fn financials(base_revenue: f64) -> BaseFinancials {
        BaseFinancials {
            base_revenue,
            base_ebit: base_revenue * 0.1,
            effective_tax_rate: 0.25,
            total_debt: 0.0,
            cash_and_nonoperating: 0.0,
            shares_outstanding: 100.0,
            market_price: 5.0,
            depreciation_amortization: 0.0,
        }
    }

    /// Zero growth, 10% margin, 25% tax, 10% cost of capital.
    pub fn perpetuity() -> ValuationInputs {
        ValuationInputs::new(
            identity(),
            financials(1000.0),
            ValueDrivers::flat(0.0, 0.10, 1.5, 0.10),
            macro_inputs(),
        )
        .unwrap()
    }
}
