use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `n × p` observations (one row per observation) with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                found: names.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contain non-finite values".into()));
        }
        Ok(Self { values, names })
    }

    /// Builds a matrix with generated names `x1, x2, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        let values = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(values, (1..=p).map(|j| format!("x{j}")).collect())
    }

    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let p = values.ncols();
        Self::new(values, (1..=p).map(|j| format!("x{j}")).collect())
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }

    pub fn mean(&self) -> DVector<f64> {
        self.values.row_mean().transpose()
    }

    /// Per-column variances with divisor `n`.
    pub fn variances(&self) -> DVector<f64> {
        let mean = self.mean();
        let n = self.n() as f64;
        DVector::from_iterator(
            self.p(),
            self.values
                .column_iter()
                .zip(mean.iter())
                .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n),
        )
    }

    /// Maximum-likelihood covariance (divisor `n`).
    pub fn covariance(&self) -> DMatrix<f64> {
        let centered = self.centered(&self.mean());
        centered.transpose() * &centered / self.n() as f64
    }

    pub fn centered(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let mut c = self.values.clone();
        for mut row in c.row_iter_mut() {
            row -= mu.transpose();
        }
        c
    }

    /// Z-scores each column (divisor `n - 1`). Constant columns are only
    /// centered.
    pub fn standardized(&self) -> Self {
        let mean = self.mean();
        let n = self.n() as f64;
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = var.sqrt();
            for v in col.iter_mut() {
                *v -= mean[j];
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
        Self {
            values,
            names: self.names.clone(),
        }
    }

    /// Copy with one cell replaced.
    pub fn with_value(&self, row: usize, col: usize, value: f64) -> Result<Self> {
        if row >= self.n() || col >= self.p() {
            return Err(Error::InvalidArgument(format!(
                "cell ({row}, {col}) outside a {}x{} matrix",
                self.n(),
                self.p()
            )));
        }
        let mut out = self.clone();
        out.values[(row, col)] = value;
        Ok(out)
    }

    /// Rows selected by index, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.values[(rows[i], j)]);
        Self {
            values,
            names: self.names.clone(),
        }
    }
}
