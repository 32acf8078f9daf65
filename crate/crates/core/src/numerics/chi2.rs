//! Upper-tail χ² probabilities.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `P(χ²_df > x)`; one for `x <= 0`.
pub fn chi2_sf(x: f64, df: u32) -> f64 {
    assert!(df > 0, "degrees of freedom must be positive");
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(f64::from(df)).expect("positive degrees of freedom").sf(x)
}
