//! Seeded synthetic data and fit-state checks shared by the test targets.
#![allow(dead_code)]

use cnmix::observe::IterationView;
use cnmix::DataMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vector(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample(StandardNormal))
}

/// Draws `n` points from a contaminated Gaussian with covariance `L L'`.
/// Returns the data and the true good/bad indicator of each row.
pub fn cn_sample(
    rng: &mut ChaCha8Rng,
    n: usize,
    mu: &DVector<f64>,
    chol: &DMatrix<f64>,
    alpha: f64,
    eta: f64,
) -> (DMatrix<f64>, Vec<bool>) {
    let p = mu.len();
    let mut x = DMatrix::zeros(n, p);
    let mut good = Vec::with_capacity(n);
    for i in 0..n {
        let is_good = rng.random::<f64>() < alpha;
        let scale = if is_good { 1.0 } else { eta.sqrt() };
        let v = mu + chol * normal_vector(rng, p) * scale;
        x.set_row(i, &v.transpose());
        good.push(is_good);
    }
    (x, good)
}

/// Random lower-triangular factor with a dominant positive diagonal.
pub fn random_chol(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => rng.random_range(-0.5..0.5),
        std::cmp::Ordering::Equal => rng.random_range(0.7..1.5),
        std::cmp::Ordering::Less => 0.0,
    })
}

/// A `p`-variate contaminated dataset with one-factor structure.
pub fn factor_dataset(seed: u64, n: usize, p: usize, alpha: f64, eta: f64) -> DataMatrix {
    let mut r = rng(seed);
    let lambda = DVector::from_fn(p, |_, _| r.random_range(0.5..1.5));
    let psi = DVector::from_fn(p, |_, _| r.random_range(0.2..0.6));
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let scale = if r.random::<f64>() < alpha { 1.0 } else { eta.sqrt() };
        let f: f64 = r.sample(StandardNormal);
        let e = normal_vector(&mut r, p).component_mul(&psi.map(f64::sqrt));
        x.set_row(i, &((&lambda * f + e) * scale).transpose());
    }
    DataMatrix::from_matrix(x).unwrap()
}

/// Two well separated one-factor groups, contaminated.
pub fn two_group_dataset(seed: u64, n_per: usize, p: usize) -> (DataMatrix, Vec<usize>) {
    let a = factor_dataset(seed, n_per, p, 0.9, 6.0);
    let b = factor_dataset(seed + 10_000, n_per, p, 0.9, 6.0);
    let mut x = DMatrix::zeros(2 * n_per, p);
    for i in 0..n_per {
        x.set_row(i, &a.values().row(i));
        let shifted = b.values().row(i).map(|v| v + 8.0);
        x.set_row(n_per + i, &shifted);
    }
    let labels = (0..2 * n_per).map(|i| usize::from(i >= n_per)).collect();
    (DataMatrix::from_matrix(x).unwrap(), labels)
}

/// Records every stage of a fit and checks weights and responsibilities as
/// they are produced.
#[derive(Debug, Default)]
pub struct StageLog {
    pub logliks: Vec<f64>,
    pub weight_violations: Vec<String>,
    pub row_sum_violations: Vec<String>,
    /// Whether weights are expected to lie strictly inside `(1/η, 1)`.
    pub contaminated: bool,
}

/// Slack for weights that round to exactly `1/η` or `1` in floating point.
const WEIGHT_SLACK: f64 = 1e-12;

impl StageLog {
    pub fn new(contaminated: bool) -> Self {
        Self {
            contaminated,
            ..Self::default()
        }
    }

    pub fn record(&mut self, v: &IterationView<'_>) {
        self.logliks.push(v.loglik);
        for (g, eta) in v.eta.iter().enumerate() {
            for (i, w) in v.weights.column(g).iter().enumerate() {
                let ok = if self.contaminated {
                    *w >= 1.0 / eta - WEIGHT_SLACK && *w <= 1.0 + WEIGHT_SLACK && *w > 0.0
                } else {
                    *w == 1.0
                };
                if !ok {
                    self.weight_violations.push(format!(
                        "iteration {} {:?}: w[{i},{g}] = {w} with eta = {eta}",
                        v.iteration, v.stage
                    ));
                }
            }
        }
        if let Some(z) = v.responsibilities {
            for (i, row) in z.row_iter().enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 || row.iter().any(|v| *v < 0.0) {
                    self.row_sum_violations
                        .push(format!("iteration {} {:?}: row {i} sums to {s}", v.iteration, v.stage));
                }
            }
        }
    }
}

/// Largest drop between consecutive values, zero when nondecreasing.
pub fn largest_drop(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}
pub mod suites;
