use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix with its
/// log-determinant cached.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    inner: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    log_det: f64,
}

/// Relative pivot floor. A pivot at or below `PIVOT_FLOOR * M[j][j]` counts
/// as a failure.
const PIVOT_FLOOR: f64 = 1e-14;
const JITTER: f64 = 1e-10;

impl SpdFactor {
    /// Factorizes `m`, retrying once with `1e-10 * mean(diag)` added to the
    /// diagonal before reporting [`Error::NotPositiveDefinite`].
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if p == 0 || m.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p.max(1),
                found: m.ncols(),
            });
        }
        match cholesky(m) {
            Ok(f) => Ok(f),
            Err(first) => {
                let mean_diag = m.diagonal().mean();
                if !(mean_diag.is_finite() && mean_diag > 0.0) {
                    return Err(first);
                }
                let mut jittered = m.clone();
                for i in 0..p {
                    jittered[(i, i)] += JITTER * mean_diag;
                }
                cholesky(&jittered)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.inner.solve(b)
    }

    /// Solves `M X = B`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.inner.inverse()
    }

    /// `L L'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// Squared Mahalanobis norm `r' M^{-1} r`.
    pub fn mahalanobis(&self, r: &[f64]) -> f64 {
        debug_assert_eq!(r.len(), self.dim());
        let mut y = DVector::from_column_slice(r);
        self.lower.solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }
}

fn cholesky(m: &DMatrix<f64>) -> Result<SpdFactor> {
    let p = m.nrows();
    // averages the two triangles so slightly asymmetric input is accepted
    let sym = (m + m.transpose()) * 0.5;
    let fail = |column: usize, pivot: f64| Error::NotPositiveDefinite { dim: p, column, pivot };
    let inner = Cholesky::new(sym.clone()).ok_or_else(|| fail(first_bad_pivot(&sym), f64::NAN))?;
    let lower = inner.l();
    let mut log_det = 0.0;
    for j in 0..p {
        let pivot = lower[(j, j)] * lower[(j, j)];
        if !(pivot.is_finite() && pivot > PIVOT_FLOOR * sym[(j, j)].abs()) {
            return Err(fail(j, pivot));
        }
        log_det += pivot.ln();
    }
    Ok(SpdFactor { inner, lower, log_det })
}

/// Size of the largest leading block that still factorizes, i.e. the column
/// where elimination breaks down.
fn first_bad_pivot(m: &DMatrix<f64>) -> usize {
    (1..=m.nrows())
        .find(|&k| Cholesky::new(m.view((0, 0), (k, k)).into_owned()).is_none())
        .map_or(m.nrows(), |k| k - 1)
}
