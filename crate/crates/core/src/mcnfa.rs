//! Mixtures of contaminated Gaussian factor analyzers and their Gaussian
//! counterpart, fitted by a three-cycle AECM iteration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cn::{is_bad, maximize_contamination, weighted_scatter, Kernel};
use crate::cnfa::{check_rank, count_params_cnfa, eigen_start, psi_floor, stats_from_scatter, update_loadings, CnfaParams};
use crate::config::FitConfig;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::modelsel::{bic, ConvergenceMonitor};
use crate::numerics::{log_sum_exp, BoxedPoint2};
use crate::observe::{IterationView, Stage};

#[derive(Debug, Clone, PartialEq)]
pub struct McnfaParams {
    pub pi: DVector<f64>,
    pub components: Vec<CnfaParams>,
}

impl McnfaParams {
    pub fn g(&self) -> usize {
        self.components.len()
    }

    pub fn p(&self) -> usize {
        self.components.first().map_or(0, CnfaParams::p)
    }

    pub fn q(&self) -> usize {
        self.components.first().map_or(0, CnfaParams::q)
    }

    pub fn etas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.eta).collect()
    }

    fn kernels(&self, x: &DMatrix<f64>) -> Result<Vec<Kernel>> {
        self.components.iter().map(|c| c.kernel(x)).collect()
    }

    /// Log-density of every row under the mixture.
    pub fn log_density_rows(&self, x: &DataMatrix, contaminated: bool) -> Result<Vec<f64>> {
        if x.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x.p(),
            });
        }
        let joint = joint_log_density(&self.pi, &self.components, &self.kernels(x.values())?, contaminated);
        Ok(joint.row_iter().map(|r| log_sum_exp(r.transpose().as_slice())).collect())
    }

    pub fn loglik(&self, x: &DataMatrix, contaminated: bool) -> Result<f64> {
        Ok(self.log_density_rows(x, contaminated)?.iter().sum())
    }
}

/// `n × G` matrix of `log π_g + log p_g(x_i)`.
fn joint_log_density(
    pi: &DVector<f64>,
    comps: &[CnfaParams],
    kernels: &[Kernel],
    contaminated: bool,
) -> DMatrix<f64> {
    let n = kernels.first().map_or(0, Kernel::len);
    let mut out = DMatrix::zeros(n, comps.len());
    for (g, (c, k)) in comps.iter().zip(kernels).enumerate() {
        let lp = pi[g].ln();
        let dens = if contaminated {
            k.log_density(c.alpha, c.eta)
        } else {
            k.gaussian_log_density()
        };
        for (i, v) in dens.iter().enumerate() {
            out[(i, g)] = lp + v;
        }
    }
    out
}

/// Normalizes each row of a joint log-density into responsibilities and
/// returns them with the observed log-likelihood.
fn normalize(joint: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let mut z = joint.clone();
    let mut loglik = 0.0;
    for mut row in z.row_iter_mut() {
        let vals: Vec<f64> = row.iter().copied().collect();
        let lse = log_sum_exp(&vals);
        loglik += lse;
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        let s: f64 = row.iter().sum();
        row /= s;
    }
    (z, loglik)
}

fn state(
    pi: &DVector<f64>,
    comps: &[CnfaParams],
    x: &DMatrix<f64>,
    contaminated: bool,
) -> Result<(Vec<Kernel>, DMatrix<f64>, f64)> {
    let kernels: Vec<Kernel> = comps.iter().map(|c| c.kernel(x)).collect::<Result<_>>()?;
    let (z, l) = normalize(&joint_log_density(pi, comps, &kernels, contaminated));
    Ok((kernels, z, l))
}

fn weight_matrix(comps: &[CnfaParams], kernels: &[Kernel]) -> DMatrix<f64> {
    let n = kernels.first().map_or(0, Kernel::len);
    DMatrix::from_fn(n, comps.len(), |i, g| kernels[g].weight_at(i, comps[g].alpha, comps[g].eta))
}

/// Posterior component memberships.
pub fn estep_responsibilities(x: &DataMatrix, theta: &McnfaParams) -> Result<DMatrix<f64>> {
    Ok(state(&theta.pi, &theta.components, x.values(), true)?.1)
}

/// Characteristic weights of every point under every component.
pub fn estep_weights(x: &DataMatrix, theta: &McnfaParams) -> Result<DMatrix<f64>> {
    Ok(weight_matrix(&theta.components, &theta.kernels(x.values())?))
}

fn check_sizes(n_g: f64, n: usize, q: usize, component: usize) -> Result<()> {
    if n_g < (q + 1) as f64 || n_g / (n as f64) < 1.0 / n as f64 {
        return Err(Error::EmptyComponent { component, size: n_g });
    }
    Ok(())
}

/// Mixing proportions `n_g / n` and locations `Σ z w x / Σ z w`.
pub fn cycle1_update(
    x: &DataMatrix,
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
    q: usize,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let n = x.n();
    let g_count = z.ncols();
    let mut pi = DVector::zeros(g_count);
    let mut mus = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let n_g: f64 = z.column(g).sum();
        check_sizes(n_g, n, q, g)?;
        pi[g] = n_g / n as f64;
        let zw: Vec<f64> = (0..n).map(|i| z[(i, g)] * w[(i, g)]).collect();
        mus.push(crate::cn::weighted_mean(x.values(), &zw)?);
    }
    Ok((pi, mus))
}

/// Per-component `(α_g, η_g)` maximizing `Σ_i z_ig log p_CN(x_i; g)` at the
/// current locations and scales.
pub fn cycle2_update(
    x: &DataMatrix,
    z: &DMatrix<f64>,
    theta: &McnfaParams,
    cfg: &FitConfig,
) -> Result<Vec<BoxedPoint2>> {
    let kernels = theta.kernels(x.values())?;
    contamination_cycle(z, &theta.components, &kernels, cfg)
}

fn contamination_cycle(
    z: &DMatrix<f64>,
    comps: &[CnfaParams],
    kernels: &[Kernel],
    cfg: &FitConfig,
) -> Result<Vec<BoxedPoint2>> {
    comps
        .iter()
        .zip(kernels)
        .enumerate()
        .map(|(g, (c, k))| {
            let zg: Vec<f64> = z.column(g).iter().copied().collect();
            let start = BoxedPoint2::new(c.alpha, c.eta);
            Ok(maximize_contamination(k, start, Some(&zg), cfg)?.point)
        })
        .collect()
}

/// Per-component loadings and uniquenesses from `S_g` built with weights
/// `z_ig w_ig` and divisor `n_g = Σ_i z_ig`.
pub fn cycle3_update(
    x: &DataMatrix,
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
    theta: &McnfaParams,
    cfg: &FitConfig,
) -> Result<Vec<(DMatrix<f64>, DVector<f64>)>> {
    let floor = psi_floor(&x.variances(), cfg.psi_floor_ratio);
    loadings_cycle(x, z, w, &theta.components, &floor)
}

fn loadings_cycle(
    x: &DataMatrix,
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
    comps: &[CnfaParams],
    floor: &DVector<f64>,
) -> Result<Vec<(DMatrix<f64>, DVector<f64>)>> {
    let n = x.n();
    comps
        .iter()
        .enumerate()
        .map(|(g, c)| {
            let n_g: f64 = z.column(g).sum();
            check_sizes(n_g, n, c.q(), g)?;
            let zw: Vec<f64> = (0..n).map(|i| z[(i, g)] * w[(i, g)]).collect();
            let s = weighted_scatter(x.values(), &c.mu, &zw, n_g);
            let stats = stats_from_scatter(s, &c.lambda, &c.psi)?;
            update_loadings(&stats, floor)
        })
        .collect()
}

/// Free parameters of the contaminated mixture:
/// `(G-1) + Gp + G[pq - q(q-1)/2] + Gp + 2G`.
pub fn count_params_mcnfa(g: usize, p: usize, q: usize) -> Result<usize> {
    Ok(count_params_mgfa(g, p, q)? + 2 * g)
}

/// Free parameters of the Gaussian mixture of factor analyzers.
pub fn count_params_mgfa(g: usize, p: usize, q: usize) -> Result<usize> {
    if g == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    Ok(g - 1 + g * count_params_cnfa(p, q, false)?)
}

/// Best-of-`restarts` k-means (k-means++ seeding, Lloyd iterations) on the
/// standardized variables. Returns one label per row.
pub fn kmeans_init(x: &DataMatrix, g: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let n = x.n();
    if g == 0 || g > n {
        return Err(Error::InvalidArgument(format!("cannot form {g} clusters from {n} points")));
    }
    if g == 1 {
        return Ok(vec![0; n]);
    }
    let z = x.standardized();
    let pts: Vec<Vec<f64>> = (0..n).map(|i| z.values().row(i).iter().copied().collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(g as u64);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let (cost, labels) = lloyd(&pts, g, &mut rng);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, labels));
        }
    }
    Ok(best.map(|(_, l)| l).unwrap_or_default())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn nearest(pt: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(k, c)| (k, sq_dist(pt, c)))
        .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc })
}

const LLOYD_MAX_ITER: usize = 100;

fn lloyd(pts: &[Vec<f64>], g: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = pts.len();
    let p = pts[0].len();
    // k-means++ seeding
    let mut centers = vec![pts[rng.random_range(0..n)].clone()];
    while centers.len() < g {
        let d: Vec<f64> = pts.iter().map(|x| nearest(x, &centers).1).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut k = n - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    k = i;
                    break;
                }
                u -= di;
            }
            k
        } else {
            rng.random_range(0..n)
        };
        centers.push(pts[pick].clone());
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_MAX_ITER {
        let mut changed = false;
        for (i, x) in pts.iter().enumerate() {
            let k = nearest(x, &centers).0;
            if labels[i] != k {
                labels[i] = k;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; p]; g];
        let mut counts = vec![0usize; g];
        for (x, &k) in pts.iter().zip(&labels) {
            counts[k] += 1;
            for j in 0..p {
                sums[k][j] += x[j];
            }
        }
        for k in 0..g {
            if counts[k] == 0 {
                // reseed an empty cluster at the point worst served
                let far = (0..n)
                    .max_by(|a, b| {
                        sq_dist(&pts[*a], &centers[labels[*a]]).total_cmp(&sq_dist(&pts[*b], &centers[labels[*b]]))
                    })
                    .unwrap_or(0);
                centers[k] = pts[far].clone();
                labels[far] = k;
            } else {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
    }
    let cost = pts.iter().zip(&labels).map(|(x, &k)| sq_dist(x, &centers[k])).sum();
    (cost, labels)
}

#[derive(Debug, Clone)]
pub struct MixtureFitReport {
    pub params: McnfaParams,
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
    /// `n × G` responsibilities.
    pub z: DMatrix<f64>,
    /// `n × G` characteristic weights.
    pub w: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// Posterior probability of being good under the MAP component.
    pub good_prob: Vec<f64>,
    pub bad_flags: Vec<bool>,
}

fn check_shape(x: &DataMatrix, g: usize, q: usize) -> Result<()> {
    check_rank(x.p(), q)?;
    if g == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    if x.n() <= x.p() {
        return Err(Error::InvalidArgument(format!(
            "need n > p observations, got n = {}, p = {}",
            x.n(),
            x.p()
        )));
    }
    Ok(())
}

fn map_labels(z: &DMatrix<f64>) -> Vec<usize> {
    z.row_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (g, v)| if *v > acc.1 { (g, *v) } else { acc })
                .0
        })
        .collect()
}

/// Component parameters from a hard partition: class means, eigen-based
/// loadings on class scatters, and the configured `(α, η)` start.
fn partition_start(x: &DataMatrix, labels: &[usize], g: usize, q: usize, cfg: &FitConfig) -> Result<McnfaParams> {
    let n = x.n();
    let floor = psi_floor(&x.variances(), cfg.psi_floor_ratio);
    let mut pi = DVector::zeros(g);
    let mut components = Vec::with_capacity(g);
    for k in 0..g {
        let member: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { 0.0 }).collect();
        let n_k: f64 = member.iter().sum();
        check_sizes(n_k, n, q, k)?;
        pi[k] = n_k / n as f64;
        let mu = crate::cn::weighted_mean(x.values(), &member)?;
        let s = weighted_scatter(x.values(), &mu, &member, n_k);
        let (lambda, psi) = eigen_start(&s, q, &floor);
        components.push(CnfaParams {
            mu,
            lambda,
            psi,
            alpha: cfg.start_alpha,
            eta: cfg.start_eta,
        });
    }
    Ok(McnfaParams { pi, components })
}

/// Gaussian mixture of factor analyzers from a k-means partition; the same
/// cycles as [`fit_mcnfa`] with unit weights and `(α, η)` frozen.
pub fn fit_mgfa(x: &DataMatrix, g: usize, q: usize, cfg: &FitConfig) -> Result<MixtureFitReport> {
    fit_mgfa_observed(x, g, q, cfg, &mut crate::observe::ignore)
}

pub fn fit_mgfa_observed(
    x: &DataMatrix,
    g: usize,
    q: usize,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<MixtureFitReport> {
    cfg.validate()?;
    check_shape(x, g, q)?;
    let labels = kmeans_init(x, g, cfg.restarts, cfg.seed)?;
    let start = partition_start(x, &labels, g, q, cfg)?;
    run(x, start, false, cfg, observer)
}

/// Contaminated mixture started from [`fit_mgfa`].
pub fn fit_mcnfa(x: &DataMatrix, g: usize, q: usize, cfg: &FitConfig) -> Result<MixtureFitReport> {
    fit_mcnfa_observed(x, g, q, cfg, &mut crate::observe::ignore)
}

pub fn fit_mcnfa_observed(
    x: &DataMatrix,
    g: usize,
    q: usize,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<MixtureFitReport> {
    let mut start = fit_mgfa(x, g, q, cfg)?.params;
    for c in &mut start.components {
        (c.alpha, c.eta) = (cfg.start_alpha, cfg.start_eta);
    }
    run(x, start, true, cfg, observer)
}

/// Runs the three-cycle iteration from `start`.
pub fn fit_mixture_from(
    x: &DataMatrix,
    start: McnfaParams,
    contaminated: bool,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<MixtureFitReport> {
    cfg.validate()?;
    check_shape(x, start.g(), start.q())?;
    run(x, start, contaminated, cfg, observer)
}

fn run(
    x: &DataMatrix,
    start: McnfaParams,
    contaminated: bool,
    cfg: &FitConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<MixtureFitReport> {
    let n = x.n();
    let g = start.g();
    let q = start.q();
    let xs = x.values();
    let floor = psi_floor(&x.variances(), cfg.psi_floor_ratio);
    let McnfaParams { mut pi, mut components } = start;
    if contaminated {
        let bounds = cfg.bounds();
        if let Some(c) = components.iter().find(|c| !bounds.contains(BoxedPoint2::new(c.alpha, c.eta))) {
            return Err(Error::InvalidArgument(format!(
                "start (alpha, eta) = ({}, {}) is infeasible",
                c.alpha, c.eta
            )));
        }
    }
    let weights_of = |comps: &[CnfaParams], kernels: &[Kernel]| {
        if contaminated {
            weight_matrix(comps, kernels)
        } else {
            DMatrix::from_element(n, g, 1.0)
        }
    };

    let (mut kernels, mut z, l0) = state(&pi, &components, xs, contaminated)?;
    let mut w = weights_of(&components, &kernels);
    let mut monitor = ConvergenceMonitor::new(cfg.epsilon);
    monitor.push(l0);
    let mut cycle_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut etas: Vec<f64> = components.iter().map(|c| c.eta).collect();

    macro_rules! notify {
        ($stage:expr, $l:expr) => {
            observer(&IterationView {
                iteration: iterations,
                stage: $stage,
                loglik: $l,
                weights: &w,
                responsibilities: Some(&z),
                eta: &etas,
            })
        };
    }

    while iterations < cfg.max_iter {
        iterations += 1;
        notify!(Stage::EStep, monitor.last().unwrap_or(f64::NAN));

        // cycle 1: proportions and locations from z(k), w(k)
        let (new_pi, mus) = cycle1_update(x, &z, &w, q)?;
        pi = new_pi;
        for (c, mu) in components.iter_mut().zip(mus) {
            c.mu = mu;
        }
        let l1;
        (kernels, z, l1) = state(&pi, &components, xs, contaminated)?;
        cycle_trace.push(l1);
        notify!(Stage::Cycle(1), l1);

        // cycle 2: (α_g, η_g) with z(k+1/3) as fixed case weights
        if contaminated {
            let pts = contamination_cycle(&z, &components, &kernels, cfg)?;
            for (c, pt) in components.iter_mut().zip(pts) {
                (c.alpha, c.eta) = (pt.alpha, pt.eta);
            }
            etas = components.iter().map(|c| c.eta).collect();
            let l2;
            (kernels, z, l2) = state(&pi, &components, xs, contaminated)?;
            cycle_trace.push(l2);
            w = weights_of(&components, &kernels);
            notify!(Stage::Cycle(2), l2);
        } else {
            w = weights_of(&components, &kernels);
        }

        // cycle 3: loadings and uniquenesses from z(k+2/3), w(k+2/3)
        let updates = loadings_cycle(x, &z, &w, &components, &floor)?;
        for (c, (lambda, psi)) in components.iter_mut().zip(updates) {
            c.lambda = lambda;
            c.psi = psi;
        }
        let l3;
        (kernels, z, l3) = state(&pi, &components, xs, contaminated)?;
        w = weights_of(&components, &kernels);
        cycle_trace.push(l3);
        notify!(Stage::Cycle(3), l3);

        if monitor.push(l3) {
            converged = true;
            break;
        }
    }

    let labels = map_labels(&z);
    let good_prob: Vec<f64> = if contaminated {
        labels
            .iter()
            .enumerate()
            .map(|(i, &k)| kernels[k].good_prob_at(i, components[k].alpha, components[k].eta))
            .collect()
    } else {
        vec![1.0; n]
    };
    let loglik = monitor.last().unwrap_or(f64::NAN);
    let m = if contaminated {
        count_params_mcnfa(g, x.p(), q)?
    } else {
        count_params_mgfa(g, x.p(), q)?
    };
    Ok(MixtureFitReport {
        params: McnfaParams { pi, components },
        contaminated,
        loglik,
        m,
        bic: bic(loglik, m, n)?,
        loglik_trace: monitor.into_trace(),
        cycle_trace,
        iterations,
        converged,
        z,
        w,
        labels,
        bad_flags: good_prob.iter().map(|v| is_bad(*v)).collect(),
        good_prob,
    })
}
