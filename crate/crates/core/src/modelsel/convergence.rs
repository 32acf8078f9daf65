use crate::error::{Error, Result};
use crate::numerics::chi2_sf;

/// Denominators below this mean the trace has stalled.
const STALL: f64 = 1e-12;

/// Aitken-accelerated stopping rule on three consecutive log-likelihoods
/// `l0 = l(k)`, `l1 = l(k+1)`, `l2 = l(k+2)`.
///
/// With `a = (l2 - l1) / (l1 - l0)` the asymptotic estimate is
/// `l_inf = l1 + (l2 - l1) / (1 - a)`, and the run has converged once
/// `l_inf - l1 < epsilon`. A stalled trace (`|l1 - l0| < 1e-12`) counts as
/// converged; an accelerating one (`a >= 1`) never does.
pub fn aitken_converged(l0: f64, l1: f64, l2: f64, epsilon: f64) -> bool {
    let den = l1 - l0;
    if den.abs() < STALL {
        return true;
    }
    let a = (l2 - l1) / den;
    if !(a < 1.0) {
        return false;
    }
    let l_inf = l1 + (l2 - l1) / (1.0 - a);
    l_inf - l1 < epsilon
}

/// Observed log-likelihood trace with the Aitken stopping rule.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    epsilon: f64,
    trace: Vec<f64>,
}

impl ConvergenceMonitor {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            trace: Vec::new(),
        }
    }

    /// Appends a value and reports whether the last three have converged.
    pub fn push(&mut self, loglik: f64) -> bool {
        self.trace.push(loglik);
        match self.trace.as_slice() {
            [.., l0, l1, l2] => aitken_converged(*l0, *l1, *l2, self.epsilon),
            _ => false,
        }
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn last(&self) -> Option<f64> {
        self.trace.last().copied()
    }

    pub fn into_trace(self) -> Vec<f64> {
        self.trace
    }
}

/// `BIC = 2 l - m log n`; larger is better.
pub fn bic(loglik: f64, m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "BIC needs m >= 1 and n >= 1 (m = {m}, n = {n})"
        )));
    }
    Ok(2.0 * loglik - m as f64 * (n as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrTest {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Band inside which a negative statistic is attributed to optimizer noise
/// and clamped to zero.
const NESTING_TOLERANCE: f64 = 1e-6;

/// Likelihood-ratio test of a null model nested in an alternative:
/// `LR = -2 (l_null - l_alt)`, referred to `χ²_df`.
pub fn lr_test(loglik_null: f64, loglik_alt: f64, df: u32) -> Result<LrTest> {
    if loglik_alt < loglik_null - NESTING_TOLERANCE {
        return Err(Error::InvalidNesting {
            null: loglik_null,
            alt: loglik_alt,
        });
    }
    let statistic = (-2.0 * (loglik_null - loglik_alt)).max(0.0);
    Ok(LrTest {
        statistic,
        df,
        p_value: chi2_sf(statistic, df),
    })
}
