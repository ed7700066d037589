use serde::{Deserialize, Serialize};

use crate::LpError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub integer: bool,
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Sparse coefficients as `(column, value)`; duplicates are summed.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
    pub name: Option<String>,
}

/// A sparse linear program, optionally with integrality flags on columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub sense: Sense,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }

    pub fn add_column(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.columns.push(Column {
            lower,
            upper,
            cost,
            integer: false,
            name: None,
        });
        self.columns.len() - 1
    }

    pub fn add_integer_column(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        let j = self.add_column(lower, upper, cost);
        self.columns[j].integer = true;
        j
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(Row {
            coeffs,
            sense,
            rhs,
            name: None,
        });
        self.rows.len() - 1
    }

    pub fn set_column_name(&mut self, j: usize, name: impl Into<String>) {
        self.columns[j].name = Some(name.into());
    }

    pub fn set_row_name(&mut self, i: usize, name: impl Into<String>) {
        self.rows[i].name = Some(name.into());
    }

    pub fn has_integers(&self) -> bool {
        self.columns.iter().any(|c| c.integer)
    }

    /// Row activities `a_i · x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, &v) in self.columns.iter().zip(x) {
            worst = worst.max(c.lower - v).max(v - c.upper);
        }
        for (r, act) in self.rows.iter().zip(self.row_activity(x)) {
            let viol = match r.sense {
                RowSense::Le => act - r.rhs,
                RowSense::Ge => r.rhs - act,
                RowSense::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub(crate) fn validate(&self) -> Result<(), LpError> {
        for (j, c) in self.columns.iter().enumerate() {
            if c.lower.is_nan() || c.upper.is_nan() || !c.cost.is_finite() {
                return Err(LpError::NonFinite(format!("column {j}")));
            }
            if c.lower > c.upper {
                return Err(LpError::InvalidBounds {
                    column: j,
                    lower: c.lower,
                    upper: c.upper,
                });
            }
            if c.lower == f64::INFINITY || c.upper == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds {
                    column: j,
                    lower: c.lower,
                    upper: c.upper,
                });
            }
        }
        let n = self.columns.len();
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("rhs of row {i}")));
            }
            for &(j, a) in &r.coeffs {
                if j >= n {
                    return Err(LpError::ColumnOutOfRange { row: i, column: j });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("row {i}, column {j}")));
                }
            }
        }
        Ok(())
    }
}
