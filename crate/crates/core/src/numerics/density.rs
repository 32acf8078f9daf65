use nalgebra::{DMatrix, DVector};

use super::spd::SpdFactor;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A factored covariance: anything that can report `log|Σ|` and squared
/// Mahalanobis norms `r'Σ^{-1}r`.
pub trait Scale {
    fn dim(&self) -> usize;
    fn log_det(&self) -> f64;
    fn mahalanobis(&self, r: &[f64]) -> f64;

    /// Mahalanobis distances of every row of `x` from `mu`.
    fn mahalanobis_rows(&self, x: &DMatrix<f64>, mu: &DVector<f64>) -> Vec<f64> {
        let p = self.dim();
        let mut r = vec![0.0; p];
        (0..x.nrows())
            .map(|i| {
                for j in 0..p {
                    r[j] = x[(i, j)] - mu[j];
                }
                self.mahalanobis(&r)
            })
            .collect()
    }

    /// `-(p/2) log 2π - (1/2) log|Σ|`.
    fn log_normalizer(&self) -> f64 {
        -0.5 * self.dim() as f64 * LN_2PI - 0.5 * self.log_det()
    }
}

impl Scale for SpdFactor {
    fn dim(&self) -> usize {
        SpdFactor::dim(self)
    }

    fn log_det(&self) -> f64 {
        SpdFactor::log_det(self)
    }

    fn mahalanobis(&self, r: &[f64]) -> f64 {
        SpdFactor::mahalanobis(self, r)
    }
}

/// Multivariate normal log-density.
pub fn gaussian_logpdf<S: Scale + ?Sized>(x: &DVector<f64>, mu: &DVector<f64>, scale: &S) -> f64 {
    let r: Vec<f64> = x.iter().zip(mu.iter()).map(|(a, b)| a - b).collect();
    scale.log_normalizer() - 0.5 * scale.mahalanobis(&r)
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() {
        return hi;
    }
    hi + values.iter().map(|v| (v - hi).exp()).sum::<f64>().ln()
}
