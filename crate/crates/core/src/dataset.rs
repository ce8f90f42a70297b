//! Training data with its task type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::maxmargin_l2;
use crate::solvers::{svd, Matrix};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Exponential loss Σ exp(−y_i f(x_i)), labels ±1.
    Classification,
    /// Squared loss ½ Σ (f(x_i) − y_i)².
    Regression,
}

/// n data points x_i ∈ ℝ^d (rows of X) with targets y.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    task: Task,
    margin: Option<f64>,
}

impl Dataset {
    /// Validates the data. Regression data must have full row rank;
    /// classification labels must be ±1 and linearly separable, and the
    /// ℓ2 hard margin is recorded.
    pub fn new(x: Matrix, y: Vec<f64>, task: Task) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::Precondition("dataset has no points".into()));
        }
        if x.cols() == 0 {
            return Err(Error::Precondition("data points have dimension 0".into()));
        }
        if y.len() != n {
            return Err(Error::Shape(format!(
                "X has {n} rows but y has {} entries",
                y.len()
            )));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(
                "dataset contains non-finite values".into(),
            ));
        }
        let margin = match task {
            Task::Regression => {
                let s = svd(&x).s;
                let full = s.len() == n && s[n - 1] > tol::DATA_RANK_RTOL * s[0];
                if !full {
                    return Err(Error::Precondition(format!(
                        "regression data must have full row rank (rank {} of {n})",
                        s.len()
                    )));
                }
                None
            }
            Task::Classification => {
                if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
                    return Err(Error::Precondition(format!(
                        "classification label {i} is {}, expected +1 or -1",
                        y[i]
                    )));
                }
                Some(maxmargin_l2(&x, &y)?.margin)
            }
        };
        Ok(Self { x, y, task, margin })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, task: Task) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, y, task)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    /// ℓ2 hard margin γ of classification data.
    pub fn margin(&self) -> Option<f64> {
        self.margin
    }
}
