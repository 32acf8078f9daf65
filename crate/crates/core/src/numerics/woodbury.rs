//! Low-rank-plus-diagonal covariances `ΛΛ' + Ψ`.
//!
//! Inverses and determinants go through the `q × q` matrix
//! `M = I_q + Λ'Ψ^{-1}Λ`:
//!
//! ```text
//! (ΛΛ' + Ψ)^{-1} = Ψ^{-1} - Ψ^{-1} Λ M^{-1} Λ' Ψ^{-1}
//! log|ΛΛ' + Ψ|   = log|M| + Σ_j log ψ_j
//! ```

use nalgebra::{DMatrix, DVector};

use super::density::Scale;
use super::spd::SpdFactor;
use crate::error::{Error, Result};

/// Covariance `ΛΛ' + Ψ` with `p × q` loadings and positive uniquenesses.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankCov {
    loadings: DMatrix<f64>,
    psi: DVector<f64>,
}

impl LowRankCov {
    pub fn new(loadings: DMatrix<f64>, psi: DVector<f64>) -> Result<Self> {
        let p = psi.len();
        if loadings.nrows() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: loadings.nrows(),
            });
        }
        if loadings.ncols() > p {
            return Err(Error::InvalidRank {
                p,
                q: loadings.ncols(),
            });
        }
        if let Some(bad) = psi.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "uniquenesses must be positive, found {bad}"
            )));
        }
        Ok(Self { loadings, psi })
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn psi(&self) -> &DVector<f64> {
        &self.psi
    }

    pub fn p(&self) -> usize {
        self.psi.len()
    }

    pub fn q(&self) -> usize {
        self.loadings.ncols()
    }

    /// Dense `ΛΛ' + Ψ`.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut s = &self.loadings * self.loadings.transpose();
        for j in 0..self.p() {
            s[(j, j)] += self.psi[j];
        }
        s
    }

    /// `Ψ^{-1}Λ`.
    fn scaled_loadings(&self) -> DMatrix<f64> {
        let mut out = self.loadings.clone();
        for (j, mut row) in out.row_iter_mut().enumerate() {
            row /= self.psi[j];
        }
        out
    }

    /// Factor of `M = I_q + Λ'Ψ^{-1}Λ`; `None` when `q = 0`.
    fn inner_factor(&self) -> Result<Option<SpdFactor>> {
        if self.q() == 0 {
            return Ok(None);
        }
        let mut inner = self.loadings.transpose() * self.scaled_loadings();
        for k in 0..self.q() {
            inner[(k, k)] += 1.0;
        }
        SpdFactor::new(&inner).map(Some)
    }

    /// `(ΛΛ' + Ψ)^{-1} Λ`, evaluated as `Ψ^{-1}Λ M^{-1}`: the Woodbury
    /// expansion applied to `Λ` collapses to this product exactly.
    pub fn inverse_times_loadings(&self) -> Result<DMatrix<f64>> {
        let scaled = self.scaled_loadings();
        match self.inner_factor()? {
            None => Ok(scaled),
            Some(m) => Ok(m.solve_matrix(&scaled.transpose()).transpose()),
        }
    }

    /// Factor usable wherever a [`Scale`] is expected, without forming the
    /// `p × p` matrix.
    pub fn factor(&self) -> Result<LowRankFactor> {
        let inner = self.inner_factor()?;
        let log_det =
            inner.as_ref().map_or(0.0, |m| m.log_det()) + self.psi.iter().map(|v| v.ln()).sum::<f64>();
        Ok(LowRankFactor {
            psi_inv: self.psi.map(|v| 1.0 / v),
            scaled: self.scaled_loadings(),
            inner,
            log_det,
        })
    }
}

/// `(ΛΛ' + Ψ)^{-1}` through the Woodbury identity. Only the diagonal `Ψ` and
/// the `q × q` inner matrix are inverted.
pub fn woodbury_inverse(cov: &LowRankCov) -> Result<DMatrix<f64>> {
    let p = cov.p();
    let mut out = DMatrix::from_diagonal(&cov.psi.map(|v| 1.0 / v));
    if let Some(m) = cov.inner_factor()? {
        let scaled = cov.scaled_loadings();
        let correction = &scaled * m.inverse() * scaled.transpose();
        out -= correction;
    }
    debug_assert_eq!(out.nrows(), p);
    Ok(out)
}

/// `log|ΛΛ' + Ψ| = log|I_q + Λ'Ψ^{-1}Λ| + Σ_j log ψ_j`.
pub fn woodbury_logdet(cov: &LowRankCov) -> Result<f64> {
    let inner = cov.inner_factor()?.map_or(0.0, |m| m.log_det());
    Ok(inner + cov.psi.iter().map(|v| v.ln()).sum::<f64>())
}

/// Woodbury-based factor of `ΛΛ' + Ψ`.
#[derive(Debug, Clone)]
pub struct LowRankFactor {
    psi_inv: DVector<f64>,
    scaled: DMatrix<f64>,
    inner: Option<SpdFactor>,
    log_det: f64,
}

impl Scale for LowRankFactor {
    fn dim(&self) -> usize {
        self.psi_inv.len()
    }

    fn log_det(&self) -> f64 {
        self.log_det
    }

    fn mahalanobis(&self, r: &[f64]) -> f64 {
        let diag: f64 = r.iter().zip(self.psi_inv.iter()).map(|(a, w)| a * a * w).sum();
        match &self.inner {
            None => diag,
            Some(m) => {
                let t = DVector::from_iterator(
                    self.scaled.ncols(),
                    self.scaled
                        .column_iter()
                        .map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()),
                );
                diag - m.mahalanobis(t.as_slice())
            }
        }
    }
}
