use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ContaminationBox, NelderMeadOptions};

/// Settings shared by every fitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Lower bound `α*` on the proportion of good points.
    pub alpha_min: f64,
    /// Aitken stopping threshold.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Seed for the k-means start of mixture fits.
    pub seed: u64,
    /// k-means restarts for mixture fits.
    pub restarts: usize,
    /// `(α, η)` used to start contaminated fits from their Gaussian
    /// counterparts.
    pub start_alpha: f64,
    pub start_eta: f64,
    pub eta_max: f64,
    pub nm_tol: f64,
    pub nm_max_evals: usize,
    /// Uniquenesses are kept at or above this multiple of each variable's
    /// variance.
    pub psi_floor_ratio: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha_min: 0.5,
            epsilon: 1e-3,
            max_iter: 1000,
            seed: 1,
            restarts: 10,
            start_alpha: 0.999,
            start_eta: 1.001,
            eta_max: crate::numerics::nelder_mead::DEFAULT_ETA_MAX,
            nm_tol: 1e-8,
            nm_max_evals: 500,
            psi_floor_ratio: crate::cnfa::DEFAULT_PSI_FLOOR_RATIO,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > 0.0 && self.alpha_min < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha_min must lie in (0, 1), got {}",
                self.alpha_min
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        if !self.bounds().contains(crate::numerics::BoxedPoint2::new(self.start_alpha, self.start_eta)) {
            return Err(Error::InvalidArgument(format!(
                "start (alpha, eta) = ({}, {}) lies outside ({}, 1) x (1, {})",
                self.start_alpha, self.start_eta, self.alpha_min, self.eta_max
            )));
        }
        Ok(())
    }

    pub fn bounds(&self) -> ContaminationBox {
        ContaminationBox {
            eta_max: self.eta_max,
            ..ContaminationBox::new(self.alpha_min)
        }
    }

    pub fn optimizer(&self) -> NelderMeadOptions {
        NelderMeadOptions {
            tol: self.nm_tol,
            max_evals: self.nm_max_evals,
        }
    }
}
