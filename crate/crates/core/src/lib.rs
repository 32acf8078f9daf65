//! Contaminated Gaussian distributions, contaminated Gaussian factor
//! analysis and mixtures of contaminated Gaussian factor analyzers, with
//! automatic detection of bad points.

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cn;
pub mod cnfa;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod mcnfa;
pub mod modelsel;
pub mod numerics;
pub mod observe;

pub use config::FitConfig;
pub use data::DataMatrix;
pub use error::{Error, Result};
