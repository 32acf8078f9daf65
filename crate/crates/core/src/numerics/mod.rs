//! Dense linear algebra and optimization kernel.

pub mod chi2;
pub mod density;
pub mod nelder_mead;
pub mod spd;
pub mod woodbury;

pub use chi2::chi2_sf;
pub use density::{gaussian_logpdf, log_add_exp, log_sum_exp, Scale};
pub use nelder_mead::{
    nelder_mead_maximize, BoxedPoint2, ContaminationBox, Maximum, NelderMeadOptions,
};
pub use spd::SpdFactor;
pub use woodbury::{woodbury_inverse, woodbury_logdet, LowRankCov, LowRankFactor};

/// Factorizes a symmetric positive-definite matrix (see [`SpdFactor::new`]).
pub fn spd_factorize(m: &nalgebra::DMatrix<f64>) -> crate::Result<SpdFactor> {
    SpdFactor::new(m)
}
