//! Read-only views of fitter state handed to per-iteration observers.

use nalgebra::DMatrix;

/// Which update of an iteration has just completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Weights or responsibilities were refreshed.
    EStep,
    /// A parameter block was updated; `loglik` is the observed value after it.
    Cycle(u8),
}

/// State of a fit at one stage of one iteration.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub iteration: usize,
    pub stage: Stage,
    /// Observed log-likelihood at the current parameters.
    pub loglik: f64,
    /// `n × G` characteristic weights (`G = 1` outside mixtures).
    pub weights: &'a DMatrix<f64>,
    /// `n × G` responsibilities; `None` outside mixtures.
    pub responsibilities: Option<&'a DMatrix<f64>>,
    /// Inflation of each component that `weights` were computed with.
    pub eta: &'a [f64],
}

/// Observer that ignores everything.
pub fn ignore(_: &IterationView<'_>) {}
