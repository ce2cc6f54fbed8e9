use serde::{Deserialize, Serialize};

use crate::agents::ComparablesTable;
use crate::valuation::{CashflowTable, SensitivityTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartKind {
    #[serde(rename = "line")]
    Line,
    #[serde(rename = "bar")]
    Bar,
    #[serde(rename = "table-heatmap")]
    TableHeatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartAxis {
    pub label: String,
    #[serde(default)]
    pub unit: String,
    #[serde(default)]
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// Declarative chart: any plotting backend can draw it. For heatmaps each
/// series is one row, `y.categories` names the rows and `x.categories` the
/// columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub chart_id: String,
    pub kind: ChartKind,
    pub caption: String,
    pub x: ChartAxis,
    pub y: ChartAxis,
    pub series: Vec<Series>,
}

impl ChartSpec {
    pub fn check_shape(&self) -> Result<(), String> {
        let id_ok = !self.chart_id.is_empty()
            && self.chart_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok {
            return Err(format!("chart_id `{}` is not a plain identifier", self.chart_id));
        }
        if self.series.is_empty() {
            return Err(format!("chart `{}` has no series", self.chart_id));
        }
        let width = self.x.categories.len();
        if width == 0 {
            return Err(format!("chart `{}` has no x categories", self.chart_id));
        }
        for s in &self.series {
            if s.values.len() != width {
                return Err(format!(
                    "series `{}` has {} values for {width} categories",
                    s.name,
                    s.values.len()
                ));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(format!("series `{}` has non-finite values", s.name));
            }
        }
        if self.kind == ChartKind::TableHeatmap && self.series.len() != self.y.categories.len() {
            return Err(format!(
                "heatmap `{}` has {} rows for {} row labels",
                self.chart_id,
                self.series.len(),
                self.y.categories.len()
            ));
        }
        Ok(())
    }
}

/// Revenue and free cash flow over the explicit horizon.
pub fn projection_chart(table: &CashflowTable, currency: &str) -> ChartSpec {
    let pick = |f: fn(&crate::valuation::CashflowRow) -> f64| table.rows.iter().map(f).collect();
    ChartSpec {
        chart_id: "projection".into(),
        kind: ChartKind::Line,
        caption: "Projected revenue and free cash flow to the firm".into(),
        x: ChartAxis {
            label: "Year".into(),
            unit: String::new(),
            categories: table.rows.iter().map(|r| r.year.to_string()).collect(),
        },
        y: ChartAxis { label: "Amount".into(), unit: currency.into(), categories: vec![] },
        series: vec![
            Series { name: "revenue".into(), values: pick(|r| r.revenue) },
            Series { name: "fcff".into(), values: pick(|r| r.fcff) },
        ],
    }
}

pub fn sensitivity_chart(table: &SensitivityTable, currency: &str) -> ChartSpec {
    ChartSpec {
        chart_id: "sensitivity".into(),
        kind: ChartKind::TableHeatmap,
        caption: format!(
            "Value per share by {} and {}",
            table.row_axis.driver, table.col_axis.driver
        ),
        x: ChartAxis {
            label: table.col_axis.driver.clone(),
            unit: String::new(),
            categories: table.col_axis.values.iter().map(|v| v.to_string()).collect(),
        },
        y: ChartAxis {
            label: table.row_axis.driver.clone(),
            unit: currency.into(),
            categories: table.row_axis.values.iter().map(|v| v.to_string()).collect(),
        },
        series: table
            .row_axis
            .values
            .iter()
            .zip(&table.cells)
            .map(|(v, row)| Series { name: v.to_string(), values: row.clone() })
            .collect(),
    }
}

/// Terminal EV/EBITDA of the company (when meaningful) and its peers.
pub fn comparables_chart(table: &ComparablesTable) -> ChartSpec {
    let mut categories = Vec::new();
    let mut values = Vec::new();
    if let Some(r) = table.ev_to_ebitda {
        categories.push(table.ticker.clone());
        values.push(r);
    }
    for p in &table.peers {
        categories.push(p.ticker.clone());
        values.push(p.ev_to_ebitda);
    }
    ChartSpec {
        chart_id: "comparables".into(),
        kind: ChartKind::Bar,
        caption: "EV/EBITDA against peers".into(),
        x: ChartAxis { label: "Company".into(), unit: String::new(), categories },
        y: ChartAxis { label: "EV/EBITDA".into(), unit: "x".into(), categories: vec![] },
        series: vec![Series { name: "ev_to_ebitda".into(), values }],
    }
}

/// Charts backing the report. Missing tables simply produce no chart.
pub fn make_charts(
    cashflows: &CashflowTable,
    sensitivity: Option<&SensitivityTable>,
    comparables: Option<&ComparablesTable>,
    currency: &str,
) -> Vec<ChartSpec> {
    let mut out = vec![projection_chart(cashflows, currency)];
    out.extend(sensitivity.map(|t| sensitivity_chart(t, currency)));
    out.extend(comparables.filter(|c| !c.peers.is_empty()).map(comparables_chart));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::test_support::perpetuity;
    use crate::valuation::{sensitivity_grid, value, Axis};

    #[test]
    fn projection_has_ten_points() {
        let r = value(&perpetuity()).unwrap();
        let c = projection_chart(&r.table, "USD");
        c.check_shape().unwrap();
        assert!(c.series.iter().all(|s| s.values.len() == 10));
        assert_eq!(c.series[1].values[3].to_bits(), r.table.rows[3].fcff.to_bits());
    }

    #[test]
    fn heatmap_cells_equal_table() {
        let inputs = perpetuity();
        let t = sensitivity_grid(
            &inputs,
            &Axis::new("terminal_margin", vec![0.09, 0.10, 0.11]),
            &Axis::new("cost_of_capital", vec![0.09, 0.10, 0.11]),
        )
        .unwrap();
        let c = sensitivity_chart(&t, "USD");
        c.check_shape().unwrap();
        let flat: Vec<f64> = c.series.iter().flat_map(|s| s.values.clone()).collect();
        assert_eq!(flat.len(), 9);
        assert_eq!(flat, t.cells.concat());
    }

    #[test]
    fn empty_comparables_omitted() {
        let r = value(&perpetuity()).unwrap();
        let empty = ComparablesTable { ticker: "X".into(), ev_to_ebitda: Some(8.0), peers: vec![] };
        let charts = make_charts(&r.table, None, Some(&empty), "USD");
        assert_eq!(charts.len(), 1);
    }

    #[test]
    fn shape_violations() {
        let r = value(&perpetuity()).unwrap();
        let mut c = projection_chart(&r.table, "USD");
        c.series[0].values.pop();
        assert!(c.check_shape().is_err());
        let mut c = projection_chart(&r.table, "USD");
        c.chart_id = "../etc".into();
        assert!(c.check_shape().is_err());
    }
}
