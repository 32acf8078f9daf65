//! Stopping rule, information criteria, likelihood-ratio tests and grid
//! search over `(G, q)`.

mod convergence;
mod grid;

pub use convergence::{aitken_converged, bic, lr_test, ConvergenceMonitor, LrTest};
pub use grid::{
    fit_candidate, grid_search, Candidate, Family, FitStatus, FittedModel, GridResult, ModelId,
    ModelScore,
};
