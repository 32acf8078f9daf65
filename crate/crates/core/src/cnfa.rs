//! Contaminated Gaussian factor analysis: `X = μ + ΛU + e` with the
//! contaminated law on `(U, e)`, so that `X ~ CN(μ, ΛΛ' + Ψ, α, η)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::cn::{is_bad, maximize_contamination, weighted_mean, weighted_scatter, CnParams, Kernel};
use crate::config::FitConfig;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::modelsel::{bic, ConvergenceMonitor};
use crate::numerics::{BoxedPoint2, LowRankCov, SpdFactor};
use crate::observe::{IterationView, Stage};

#[derive(Debug, Clone, PartialEq)]
pub struct CnfaParams {
    pub mu: DVector<f64>,
    pub lambda: DMatrix<f64>,
    pub psi: DVector<f64>,
    pub alpha: f64,
    pub eta: f64,
}

impl CnfaParams {
    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn q(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn low_rank(&self) -> Result<LowRankCov> {
        LowRankCov::new(self.lambda.clone(), self.psi.clone())
    }

    /// `ΛΛ' + Ψ`.
    pub fn sigma(&self) -> DMatrix<f64> {
        let mut s = &self.lambda * self.lambda.transpose();
        for j in 0..self.p() {
            s[(j, j)] += self.psi[j];
        }
        s
    }

    pub fn to_cn(&self) -> CnParams {
        CnParams {
            mu: self.mu.clone(),
            sigma: self.sigma(),
            alpha: self.alpha,
            eta: self.eta,
        }
    }

    pub(crate) fn kernel(&self, x: &DMatrix<f64>) -> Result<Kernel> {
        Ok(Kernel::new(x, &self.mu, &SpdFactor::new(&self.sigma())?))
    }

    /// Log-density of every row under the contaminated model, or under the
    /// Gaussian one when `contaminated` is false.
    pub fn log_density_rows(&self, x: &DataMatrix, contaminated: bool) -> Result<Vec<f64>> {
        if x.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x.p(),
            });
        }
        let k = self.kernel(x.values())?;
        Ok(if contaminated {
            k.log_density(self.alpha, self.eta)
        } else {
            k.gaussian_log_density()
        })
    }
}

/// Second-cycle sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondCycleStats {
    /// Weighted scatter about the current location.
    pub s: DMatrix<f64>,
    /// `I_q - γ'Λ + γ'Sγ`.
    pub r: DMatrix<f64>,
    /// `(ΛΛ' + Ψ)^{-1}Λ`.
    pub gamma: DMatrix<f64>,
}

/// `(ΛΛ' + Ψ)^{-1}Λ` through the Woodbury identity.
pub fn gamma_matrix(lambda: &DMatrix<f64>, psi: &DVector<f64>) -> Result<DMatrix<f64>> {
    LowRankCov::new(lambda.clone(), psi.clone())?.inverse_times_loadings()
}

/// Statistics with `S = (1/n) Σ w_i (x_i - μ)(x_i - μ)'`.
pub fn second_cycle_stats(
    x: &DataMatrix,
    mu: &DVector<f64>,
    w: &[f64],
    lambda: &DMatrix<f64>,
    psi: &DVector<f64>,
) -> Result<SecondCycleStats> {
    if w.len() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            found: w.len(),
        });
    }
    stats_from_scatter(weighted_scatter(x.values(), mu, w, x.n() as f64), lambda, psi)
}

pub(crate) fn stats_from_scatter(
    s: DMatrix<f64>,
    lambda: &DMatrix<f64>,
    psi: &DVector<f64>,
) -> Result<SecondCycleStats> {
    let gamma = gamma_matrix(lambda, psi)?;
    let sg = &s * &gamma;
    let mut r = gamma.transpose() * &sg - gamma.transpose() * lambda;
    for k in 0..r.nrows() {
        r[(k, k)] += 1.0;
    }
    let r = (&r + r.transpose()) * 0.5;
    Ok(SecondCycleStats { s, r, gamma })
}

/// `Λ = SγR^{-1}`, `Ψ = diag(S - Λγ'S)` clamped below at `floor`.
pub fn update_loadings(
    stats: &SecondCycleStats,
    floor: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let r = SpdFactor::new(&stats.r).map_err(|_| Error::SingularR)?;
    let sg = &stats.s * &stats.gamma;
    // Λ = SγR^{-1}  <=>  RΛ' = (Sγ)'
    let lambda = r.solve_matrix(&sg.transpose()).transpose();
    let p = stats.s.nrows();
    let psi = DVector::from_fn(p, |j, _| {
        let explained: f64 = lambda.row(j).iter().zip(sg.row(j).iter()).map(|(a, b)| a * b).sum();
        (stats.s[(j, j)] - explained).max(floor[j])
    });
    Ok((lambda, psi))
}

pub const DEFAULT_PSI_FLOOR_RATIO: f64 = 1e-6;

/// Smallest admissible uniqueness per variable: `max(1e-10, ratio · var_j)`.
pub fn psi_floor(variances: &DVector<f64>, ratio: f64) -> DVector<f64> {
    variances.map(|v| (ratio * v).max(1e-10))
}

/// Loadings from the leading `q` eigenpairs of `s` (`v_k √λ_k`) and the
/// residual diagonal as uniquenesses.
pub(crate) fn eigen_start(
    s: &DMatrix<f64>,
    q: usize,
    floor: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = s.nrows();
    let eig = SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let mut lambda = DMatrix::zeros(p, q);
    for (k, &idx) in order.iter().take(q).enumerate() {
        let scale = eig.eigenvalues[idx].max(0.0).sqrt();
        // fix the sign so the start does not depend on the eigensolver's choice
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0, |m: f64, c| if c.abs() > m.abs() { c } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            lambda[(j, k)] = sign * v[j] * scale;
        }
    }
    let psi = DVector::from_fn(p, |j, _| {
        let explained: f64 = lambda.row(j).iter().map(|v| v * v).sum();
        (s[(j, j)] - explained).max(floor[j])
    });
    (lambda, psi)
}

pub(crate) fn check_rank(p: usize, q: usize) -> Result<()> {
    if q == 0 || q >= p {
        return Err(Error::InvalidRank { p, q });
    }
    Ok(())
}

/// Free parameters: `p + [pq - q(q-1)/2] + p`, plus 2 for `(α, η)`.
pub fn count_params_cnfa(p: usize, q: usize, contaminated: bool) -> Result<usize> {
    check_rank(p, q)?;
    Ok(p + p * q - q * (q - 1) / 2 + p + if contaminated { 2 } else { 0 })
}

#[derive(Debug, Clone)]
pub struct FaFitReport {
    pub params: CnfaParams,
    pub contaminated: bool,
    pub loglik: f64,
    pub m: usize,
    pub bic: f64,
    /// Observed log-likelihood at the start and after every iteration.
    pub loglik_trace: Vec<f64>,
    /// Observed log-likelihood after every cycle.
    pub cycle_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub weights: Vec<f64>,
    pub good_prob: Vec<f64>,
    pub bad_flags: Vec<bool>,
}

fn check_shape(x: &DataMatrix, q: usize) -> Result<()> {
    check_rank(x.p(), q)?;
    if x.n() <= x.p() {
        return Err(Error::InvalidArgument(format!(
            "need n > p observations, got n = {}, p = {}",
            x.n(),
            x.p()
        )));
    }
    Ok(())
}

/// Gaussian factor analysis: the same two cycles with every weight fixed at
/// one and `(α, η)` frozen at the configured start.
pub fn fit_gfa(x: &DataMatrix, q: usize, cfg: &FitConfig) -> Result<FaFitReport> {
    fit_gfa_observed(x, q, cfg, &mut crate::observe::ignore)
}

pub fn fit_gfa_observed(
    x: &DataMatrix,
    q: usize,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<FaFitReport> {
    cfg.validate()?;
    check_shape(x, q)?;
    let n = x.n();
    let floor = psi_floor(&x.variances(), cfg.psi_floor_ratio);
    let ones = vec![1.0; n];
    let mu = weighted_mean(x.values(), &ones)?;
    let s = weighted_scatter(x.values(), &mu, &ones, n as f64);
    let (lambda, psi) = eigen_start(&s, q, &floor);
    let mut params = CnfaParams {
        mu,
        lambda,
        psi,
        alpha: cfg.start_alpha,
        eta: cfg.start_eta,
    };
    let weights = DMatrix::from_element(n, 1, 1.0);
    let gaussian = |p: &CnfaParams| -> Result<f64> {
        Ok(p.kernel(x.values())?.gaussian_log_density().iter().sum())
    };

    let mut monitor = ConvergenceMonitor::new(cfg.epsilon);
    monitor.push(gaussian(&params)?);
    let mut cycle_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        params.mu = weighted_mean(x.values(), &ones)?;
        let l1 = gaussian(&params)?;
        cycle_trace.push(l1);
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::Cycle(1),
            loglik: l1,
            weights: &weights,
            responsibilities: None,
            eta: &[params.eta],
        });

        let stats = stats_from_scatter(s.clone(), &params.lambda, &params.psi)?;
        (params.lambda, params.psi) = update_loadings(&stats, &floor)?;
        let l2 = gaussian(&params)?;
        cycle_trace.push(l2);
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::Cycle(2),
            loglik: l2,
            weights: &weights,
            responsibilities: None,
            eta: &[params.eta],
        });
        if monitor.push(l2) {
            converged = true;
            break;
        }
    }

    let loglik = monitor.last().unwrap_or(f64::NAN);
    let m = count_params_cnfa(x.p(), q, false)?;
    Ok(FaFitReport {
        contaminated: false,
        loglik,
        m,
        bic: bic(loglik, m, n)?,
        loglik_trace: monitor.into_trace(),
        cycle_trace,
        iterations,
        converged,
        weights: ones,
        good_prob: vec![1.0; n],
        bad_flags: vec![false; n],
        params,
    })
}

/// Contaminated factor analysis started from [`fit_gfa`].
pub fn fit_cnfa(x: &DataMatrix, q: usize, cfg: &FitConfig) -> Result<FaFitReport> {
    fit_cnfa_observed(x, q, cfg, &mut crate::observe::ignore)
}

pub fn fit_cnfa_observed(
    x: &DataMatrix,
    q: usize,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<FaFitReport> {
    cfg.validate()?;
    check_shape(x, q)?;
    let start = fit_gfa(x, q, cfg)?.params;
    fit_cnfa_from(x, start, cfg, observer)
}

/// Runs the contaminated two-cycle iteration from the given parameters.
pub fn fit_cnfa_from(
    x: &DataMatrix,
    start: CnfaParams,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<FaFitReport> {
    cfg.validate()?;
    let q = start.q();
    check_shape(x, q)?;
    if start.p() != x.p() {
        return Err(Error::DimensionMismatch {
            expected: x.p(),
            found: start.p(),
        });
    }
    let n = x.n();
    let xs = x.values();
    let floor = psi_floor(&x.variances(), cfg.psi_floor_ratio);
    let mut params = start;
    let mut pt = BoxedPoint2::new(params.alpha, params.eta);
    if !cfg.bounds().contains(pt) {
        return Err(Error::InvalidArgument(format!(
            "start (alpha, eta) = ({}, {}) is infeasible",
            pt.alpha, pt.eta
        )));
    }
    let mut kernel = params.kernel(xs)?;
    let mut weights = DMatrix::zeros(n, 1);

    let mut monitor = ConvergenceMonitor::new(cfg.epsilon);
    monitor.push(kernel.loglik(pt.alpha, pt.eta, None));
    let mut cycle_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;

        // cycle 1: location, then (α, η) at the new location and old scale
        let w = kernel.weights(pt.alpha, pt.eta);
        let weight_eta = [pt.eta];
        weights.set_column(0, &DVector::from_column_slice(&w));
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::EStep,
            loglik: monitor.last().unwrap_or(f64::NAN),
            weights: &weights,
            responsibilities: None,
            eta: &weight_eta,
        });
        params.mu = weighted_mean(xs, &w)?;
        kernel = params.kernel(xs)?;
        cycle_trace.push(kernel.loglik(pt.alpha, pt.eta, None));
        let m = maximize_contamination(&kernel, pt, None, cfg)?;
        pt = m.point;
        (params.alpha, params.eta) = (pt.alpha, pt.eta);
        cycle_trace.push(m.value);
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::Cycle(1),
            loglik: m.value,
            weights: &weights,
            responsibilities: None,
            eta: &weight_eta,
        });

        // cycle 2: loadings and uniquenesses from weights refreshed at the
        // cycle-1 output
        let w = kernel.weights(pt.alpha, pt.eta);
        let weight_eta = [pt.eta];
        weights.set_column(0, &DVector::from_column_slice(&w));
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::EStep,
            loglik: m.value,
            weights: &weights,
            responsibilities: None,
            eta: &weight_eta,
        });
        let stats = second_cycle_stats(x, &params.mu, &w, &params.lambda, &params.psi)?;
        (params.lambda, params.psi) = update_loadings(&stats, &floor)?;
        kernel = params.kernel(xs)?;
        let l2 = kernel.loglik(pt.alpha, pt.eta, None);
        cycle_trace.push(l2);
        observer(&IterationView {
            iteration: iterations,
            stage: Stage::Cycle(2),
            loglik: l2,
            weights: &weights,
            responsibilities: None,
            eta: &weight_eta,
        });
        if monitor.push(l2) {
            converged = true;
            break;
        }
    }

    let loglik = monitor.last().unwrap_or(f64::NAN);
    let m = count_params_cnfa(x.p(), q, true)?;
    let good_prob = kernel.good_prob(pt.alpha, pt.eta);
    Ok(FaFitReport {
        contaminated: true,
        loglik,
        m,
        bic: bic(loglik, m, n)?,
        loglik_trace: monitor.into_trace(),
        cycle_trace,
        iterations,
        converged,
        weights: kernel.weights(pt.alpha, pt.eta),
        bad_flags: good_prob.iter().map(|g| is_bad(*g)).collect(),
        good_prob,
        params,
    })
}
