//! The contaminated Gaussian distribution
//! `α φ(x; μ, Σ) + (1 - α) φ(x; μ, ηΣ)` and its ECME fitter.

use nalgebra::{DMatrix, DVector};

use crate::config::FitConfig;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::modelsel::ConvergenceMonitor;
use crate::numerics::{log_add_exp, nelder_mead_maximize, BoxedPoint2, Maximum, Scale, SpdFactor};
use crate::observe::{IterationView, Stage};

/// Location, scale of the good points, proportion of good points and
/// inflation of the bad ones.
#[derive(Debug, Clone, PartialEq)]
pub struct CnParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub alpha: f64,
    pub eta: f64,
}

impl CnParams {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, alpha: f64, eta: f64) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: sigma.nrows(),
            });
        }
        check_contamination(alpha, eta)?;
        SpdFactor::new(&sigma)?;
        Ok(Self {
            mu,
            sigma,
            alpha,
            eta,
        })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn factor(&self) -> Result<SpdFactor> {
        SpdFactor::new(&self.sigma)
    }

    /// Log-density of every row of `x`.
    pub fn log_density_rows(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        check_dim(self.p(), x.p())?;
        let k = Kernel::new(x.values(), &self.mu, &self.factor()?);
        Ok(k.log_density(self.alpha, self.eta))
    }

    pub fn loglik(&self, x: &DataMatrix) -> Result<f64> {
        Ok(self.log_density_rows(x)?.iter().sum())
    }
}

pub(crate) fn check_contamination(alpha: f64, eta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(eta >= 1.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < alpha <= 1 and eta >= 1, got alpha = {alpha}, eta = {eta}"
        )));
    }
    Ok(())
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Squared Mahalanobis distances of a sample from one location under one
/// scale. Every quantity of the contaminated model depends on the data only
/// through these, so `(α, η)` searches reuse them.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    log_norm: f64,
    half_p: f64,
    dist: Vec<f64>,
}

impl Kernel {
    pub(crate) fn new<S: Scale + ?Sized>(x: &DMatrix<f64>, mu: &DVector<f64>, scale: &S) -> Self {
        Self {
            log_norm: scale.log_normalizer(),
            half_p: 0.5 * scale.dim() as f64,
            dist: scale.mahalanobis_rows(x, mu),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.dist.len()
    }

    /// `(log αφ(x_i; μ, Σ), log (1-α)φ(x_i; μ, ηΣ))`.
    fn terms(&self, i: usize, alpha: f64, eta: f64) -> (f64, f64) {
        let d = self.dist[i];
        let good = alpha.ln() + self.log_norm - 0.5 * d;
        let bad = if alpha < 1.0 {
            (-alpha).ln_1p() + self.log_norm - self.half_p * eta.ln() - 0.5 * d / eta
        } else {
            f64::NEG_INFINITY
        };
        (good, bad)
    }

    pub(crate) fn log_density_at(&self, i: usize, alpha: f64, eta: f64) -> f64 {
        let (g, b) = self.terms(i, alpha, eta);
        log_add_exp(g, b)
    }

    pub(crate) fn log_density(&self, alpha: f64, eta: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.log_density_at(i, alpha, eta)).collect()
    }

    pub(crate) fn gaussian_log_density(&self) -> Vec<f64> {
        self.dist.iter().map(|d| self.log_norm - 0.5 * d).collect()
    }

    /// `Σ_i z_i log p_CN(x_i)`, with `z ≡ 1` when absent.
    pub(crate) fn loglik(&self, alpha: f64, eta: f64, z: Option<&[f64]>) -> f64 {
        match z {
            None => (0..self.len()).map(|i| self.log_density_at(i, alpha, eta)).sum(),
            Some(z) => (0..self.len())
                .map(|i| z[i] * self.log_density_at(i, alpha, eta))
                .sum(),
        }
    }

    pub(crate) fn good_prob_at(&self, i: usize, alpha: f64, eta: f64) -> f64 {
        let (g, b) = self.terms(i, alpha, eta);
        (g - log_add_exp(g, b)).exp()
    }

    pub(crate) fn good_prob(&self, alpha: f64, eta: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.good_prob_at(i, alpha, eta)).collect()
    }

    /// `E[W | x_i] = P(good) + P(bad) / η`.
    pub(crate) fn weight_at(&self, i: usize, alpha: f64, eta: f64) -> f64 {
        let good = self.good_prob_at(i, alpha, eta);
        good + (1.0 - good) / eta
    }

    pub(crate) fn weights(&self, alpha: f64, eta: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight_at(i, alpha, eta)).collect()
    }
}

/// Direct maximization of the (optionally `z`-weighted) observed
/// log-likelihood over `(α, η)` with location and scale held fixed. The
/// result never scores below `start`.
pub(crate) fn maximize_contamination(
    kernel: &Kernel,
    start: BoxedPoint2,
    z: Option<&[f64]>,
    cfg: &FitConfig,
) -> Result<Maximum> {
    nelder_mead_maximize(
        |pt| kernel.loglik(pt.alpha, pt.eta, z),
        start,
        &cfg.bounds(),
        &cfg.optimizer(),
    )
}

fn single_kernel(x: &DVector<f64>, theta: &CnParams) -> Result<Kernel> {
    check_dim(theta.p(), x.len())?;
    let xm = DMatrix::from_row_slice(1, x.len(), x.as_slice());
    Ok(Kernel::new(&xm, &theta.mu, &theta.factor()?))
}

pub fn cn_logpdf(x: &DVector<f64>, theta: &CnParams) -> Result<f64> {
    Ok(single_kernel(x, theta)?.log_density_at(0, theta.alpha, theta.eta))
}

/// Mass function of the scale variable `W ∈ {1, 1/η}`.
pub fn pc_pmf(w: f64, alpha: f64, eta: f64) -> Result<f64> {
    const SUPPORT_TOL: f64 = 1e-12;
    if (w - 1.0).abs() > SUPPORT_TOL && (w - 1.0 / eta).abs() > SUPPORT_TOL {
        return Err(Error::InvalidSupport { w, eta });
    }
    let span = 1.0 - 1.0 / eta;
    let a = (w - 1.0 / eta) / span;
    let b = (1.0 - w) / span;
    Ok(alpha.powf(a) * (1.0 - alpha).powf(b))
}

/// Posterior probability that `x` came from the uninflated component.
pub fn posterior_good(x: &DVector<f64>, theta: &CnParams) -> Result<f64> {
    Ok(single_kernel(x, theta)?.good_prob_at(0, theta.alpha, theta.eta))
}

pub fn posterior_bad(x: &DVector<f64>, theta: &CnParams) -> Result<f64> {
    let k = single_kernel(x, theta)?;
    let (g, b) = k.terms(0, theta.alpha, theta.eta);
    Ok((b - log_add_exp(g, b)).exp())
}

/// Conditional expectation of `W` given `x`; lies between `1/η` and 1.
pub fn estep_weight(x: &DVector<f64>, theta: &CnParams) -> Result<f64> {
    Ok(single_kernel(x, theta)?.weight_at(0, theta.alpha, theta.eta))
}

/// A point is bad when its posterior probability of being good is at most
/// one half.
pub fn is_bad(good_prob: f64) -> bool {
    good_prob <= 0.5
}

/// Weighted location and scatter: `μ = Σ w_i x_i / Σ w_i`,
/// `Σ = (1/n) Σ w_i (x_i - μ)(x_i - μ)'`.
pub fn cm1_update(x: &DataMatrix, w: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim(x.n(), w.len())?;
    let mu = weighted_mean(x.values(), w)?;
    let sigma = weighted_scatter(x.values(), &mu, w, x.n() as f64);
    if SpdFactor::new(&sigma).is_err() {
        return Err(Error::DegenerateScatter);
    }
    Ok((mu, sigma))
}

pub(crate) fn weighted_mean(x: &DMatrix<f64>, w: &[f64]) -> Result<DVector<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("weights must have a positive sum".into()));
    }
    let mut mu = DVector::zeros(x.ncols());
    for (i, wi) in w.iter().enumerate() {
        for j in 0..x.ncols() {
            mu[j] += wi * x[(i, j)];
        }
    }
    Ok(mu / total)
}

/// `(1/divisor) Σ w_i (x_i - μ)(x_i - μ)'`.
pub(crate) fn weighted_scatter(
    x: &DMatrix<f64>,
    mu: &DVector<f64>,
    w: &[f64],
    divisor: f64,
) -> DMatrix<f64> {
    let p = x.ncols();
    let mut scaled = DMatrix::zeros(x.nrows(), p);
    let mut centered = DMatrix::zeros(x.nrows(), p);
    for i in 0..x.nrows() {
        for j in 0..p {
            let r = x[(i, j)] - mu[j];
            centered[(i, j)] = r;
            scaled[(i, j)] = w[i] * r;
        }
    }
    let s = centered.transpose() * scaled / divisor;
    (&s + s.transpose()) * 0.5
}

/// ECME direct step for `(α, η)` at fixed `(μ, Σ)`. Returns the new pair and
/// the observed log-likelihood there.
pub fn cm2_update(
    x: &DataMatrix,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    start: BoxedPoint2,
    cfg: &FitConfig,
) -> Result<(BoxedPoint2, f64)> {
    check_dim(mu.len(), x.p())?;
    let kernel = Kernel::new(x.values(), mu, &SpdFactor::new(sigma)?);
    let m = maximize_contamination(&kernel, start, None, cfg)?;
    Ok((m.point, m.value))
}

#[derive(Debug, Clone)]
pub struct CnFitReport {
    pub params: CnParams,
    pub loglik: f64,
    /// Observed log-likelihood at the start and after every iteration.
    pub loglik_trace: Vec<f64>,
    /// Observed log-likelihood after every conditional maximization.
    pub cycle_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub weights: Vec<f64>,
    pub good_prob: Vec<f64>,
    pub bad_flags: Vec<bool>,
}

/// Log-likelihood of the Gaussian maximum-likelihood fit.
pub fn gaussian_mle_loglik(x: &DataMatrix) -> Result<f64> {
    let f = SpdFactor::new(&x.covariance()).map_err(|_| Error::DegenerateScatter)?;
    Ok(Kernel::new(x.values(), &x.mean(), &f).gaussian_log_density().iter().sum())
}

pub fn fit_cn(x: &DataMatrix, cfg: &FitConfig) -> Result<CnFitReport> {
    fit_cn_observed(x, cfg, &mut crate::observe::ignore)
}

/// [`fit_cn`] reporting every stage to `observer`.
pub fn fit_cn_observed(
    x: &DataMatrix,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<CnFitReport> {
    cfg.validate()?;
    if x.n() < x.p() + 1 {
        return Err(Error::InvalidArgument(format!(
            "need n >= p + 1 observations, got n = {}, p = {}",
            x.n(),
            x.p()
        )));
    }
    let (mut mu, mut sigma) = cm1_update(x, &vec![1.0; x.n()])?;
    let mut pt = BoxedPoint2::new(cfg.start_alpha, cfg.start_eta);
    let mut kernel = Kernel::new(x.values(), &mu, &SpdFactor::new(&sigma)?);

    let mut monitor = ConvergenceMonitor::new(cfg.epsilon);
    monitor.push(kernel.loglik(pt.alpha, pt.eta, None));
    let mut cycle_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut weights = DMatrix::zeros(x.n(), 1);

    while iterations < cfg.max_iter {
        iterations += 1;
        let w = kernel.weights(pt.alpha, pt.eta);
        let weight_eta = [pt.eta];
        weights.set_column(0, &DVector::from_column_slice(&w));
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::EStep,
            loglik: *monitor.trace().last().unwrap_or(&f64::NAN),
            weights: &weights,
            responsibilities: None,
            eta: &weight_eta,
        });

        (mu, sigma) = cm1_update(x, &w)?;
        kernel = Kernel::new(x.values(), &mu, &SpdFactor::new(&sigma)?);
        let after_cm1 = kernel.loglik(pt.alpha, pt.eta, None);
        cycle_trace.push(after_cm1);
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::Cycle(1),
            loglik: after_cm1,
            weights: &weights,
            responsibilities: None,
            eta: &weight_eta,
        });

        let m = maximize_contamination(&kernel, pt, None, cfg)?;
        pt = m.point;
        cycle_trace.push(m.value);
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::Cycle(2),
            loglik: m.value,
            weights: &weights,
            responsibilities: None,
            eta: &weight_eta,
        });

        if monitor.push(m.value) {
            converged = true;
            break;
        }
    }

    let good_prob = kernel.good_prob(pt.alpha, pt.eta);
    let loglik = monitor.last().unwrap_or(f64::NAN);
    Ok(CnFitReport {
        params: CnParams {
            mu,
            sigma,
            alpha: pt.alpha,
            eta: pt.eta,
        },
        loglik,
        loglik_trace: monitor.into_trace(),
        cycle_trace,
        iterations,
        converged,
        weights: kernel.weights(pt.alpha, pt.eta),
        bad_flags: good_prob.iter().map(|g| is_bad(*g)).collect(),
        good_prob,
    })
}
