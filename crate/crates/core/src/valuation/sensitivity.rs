use serde::{Deserialize, Serialize};

use super::{value, DriverSelector, ValuationInputs};
use crate::error::ValuationError;

pub const MAX_AXIS_LEN: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Driver selector, e.g. `terminal_margin` or `cost_of_capital`.
    pub driver: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(driver: impl Into<String>, values: Vec<f64>) -> Self {
        Self { driver: driver.into(), values }
    }

    fn selector(&self) -> Result<DriverSelector, ValuationError> {
        let sel: DriverSelector = self.driver.parse()?;
        if !sel.is_value_driver() {
            return Err(ValuationError::UnknownDriver(self.driver.clone()));
        }
        if self.values.is_empty() || self.values.len() > MAX_AXIS_LEN {
            return Err(ValuationError::DegenerateInput(format!(
                "axis `{}` has {} values, expected 1..={MAX_AXIS_LEN}",
                self.driver,
                self.values.len()
            )));
        }
        Ok(sel)
    }
}

/// Value per share over a two-driver grid; `cells[i][j]` is the value with
/// the row driver at `row_axis.values[i]` and the column driver at
/// `col_axis.values[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub row_axis: Axis,
    pub col_axis: Axis,
    pub cells: Vec<Vec<f64>>,
}

impl SensitivityTable {
    pub fn min_max(&self) -> (f64, f64) {
        self.cells
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

pub fn sensitivity_grid(
    inputs: &ValuationInputs,
    row_axis: &Axis,
    col_axis: &Axis,
) -> Result<SensitivityTable, ValuationError> {
    let rows = row_axis.selector()?;
    let cols = col_axis.selector()?;
    let mut cells = Vec::with_capacity(row_axis.values.len());
    for &rv in &row_axis.values {
        let row_inputs = rows.apply(inputs, rv);
        let mut line = Vec::with_capacity(col_axis.values.len());
        for &cv in &col_axis.values {
            line.push(value(&cols.apply(&row_inputs, cv))?.value_per_share);
        }
        cells.push(line);
    }
    Ok(SensitivityTable {
        row_axis: row_axis.clone(),
        col_axis: col_axis.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::perpetuity;
    use super::*;

    #[test]
    fn identity_grid_matches_point_value() {
        let inputs = perpetuity();
        let t = sensitivity_grid(
            &inputs,
            &Axis::new("terminal_margin", vec![inputs.drivers.terminal_margin]),
            &Axis::new("terminal_cost_of_capital", vec![inputs.drivers.terminal_cost_of_capital]),
        )
        .unwrap();
        assert_eq!(t.cells, vec![vec![value(&inputs).unwrap().value_per_share]]);
    }

    #[test]
    fn margin_by_wacc_is_monotone() {
        let inputs = perpetuity();
        let t = sensitivity_grid(
            &inputs,
            &Axis::new("operating_margin", vec![0.05, 0.06, 0.07]),
            &Axis::new("cost_of_capital", vec![0.08, 0.09, 0.10]),
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                // independent re-evaluation per cell
                let mut copy = inputs.clone();
                copy.drivers.operating_margin = [t.row_axis.values[i]; 10];
                copy.drivers.cost_of_capital = [t.col_axis.values[j]; 10];
                assert_eq!(t.cells[i][j], value(&copy).unwrap().value_per_share);
                if i > 0 {
                    assert!(t.cells[i][j] >= t.cells[i - 1][j]);
                }
                if j > 0 {
                    assert!(t.cells[i][j] <= t.cells[i][j - 1]);
                }
            }
        }
    }

    #[test]
    fn rejects_unknown_and_non_driver_axes() {
        let inputs = perpetuity();
        let ok = Axis::new("terminal_margin", vec![0.1]);
        for bad in ["vibes", "financials.total_debt"] {
            let err = sensitivity_grid(&inputs, &Axis::new(bad, vec![0.1]), &ok).unwrap_err();
            assert_eq!(err, ValuationError::UnknownDriver(bad.into()));
        }
        let long = Axis::new("terminal_margin", vec![0.1; 10]);
        assert!(sensitivity_grid(&inputs, &long, &ok).is_err());
    }

    #[test]
    fn inputs_unmodified() {
        let inputs = perpetuity();
        let before = inputs.clone();
        let _ = sensitivity_grid(
            &inputs,
            &Axis::new("terminal_margin", vec![0.05, 0.2]),
            &Axis::new("revenue_growth[1]", vec![0.0, 0.1]),
        )
        .unwrap();
        assert_eq!(inputs, before);
    }
}
