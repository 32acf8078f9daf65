//! Property checks shared by the property tests and the acceptance report.
//! Each returns the first violation found.

use cnmix::cn::{fit_cn, fit_cn_observed, CnParams};
use cnmix::cnfa::{
    count_params_cnfa, fit_cnfa, fit_cnfa_observed, fit_gfa, fit_gfa_observed, psi_floor, second_cycle_stats,
    update_loadings,
};
use cnmix::mcnfa::{count_params_mcnfa, fit_mcnfa, fit_mcnfa_observed, fit_mgfa};
use cnmix::numerics::{woodbury_inverse, woodbury_logdet, LowRankCov, SpdFactor};
use cnmix::{DataMatrix, FitConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{largest_drop, StageLog};

pub type Check = Result<(), String>;

const MONOTONE_SLACK: f64 = 1e-8;
pub const DATASETS: u64 = 32;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn stage_log(log: &StageLog, what: &str) -> Check {
    if let Some(v) = log.weight_violations.first() {
        return Err(format!("{what}: weight out of bounds at {v}"));
    }
    if let Some(v) = log.row_sum_violations.first() {
        return Err(format!("{what}: {v}"));
    }
    let drop = largest_drop(&log.logliks);
    ensure!(drop <= MONOTONE_SLACK, "{what}: log-likelihood dropped by {drop}");
    Ok(())
}

/// Monotone log-likelihood, weight bounds and responsibility row sums for
/// contaminated Gaussian fits.
pub fn cn_monotone() -> Check {
    let cfg = FitConfig::default();
    for seed in 0..DATASETS {
        let mut r = super::rng(seed);
        let p = 1 + (seed as usize % 3);
        let chol = super::random_chol(&mut r, p);
        let mu = super::normal_vector(&mut r, p);
        let (x, _) = super::cn_sample(&mut r, 150, &mu, &chol, 0.8, 8.0);
        let x = DataMatrix::from_matrix(x).unwrap();
        let mut log = StageLog::new(true);
        let fit = fit_cn_observed(&x, &cfg, &mut |v| log.record(v)).map_err(|e| e.to_string())?;
        stage_log(&log, &format!("cn seed {seed}"))?;
        ensure!(largest_drop(&fit.cycle_trace) <= MONOTONE_SLACK, "cn seed {seed}: cycle trace drops");
    }
    Ok(())
}

/// The same for Gaussian and contaminated factor analysis.
pub fn factor_monotone() -> Check {
    let cfg = FitConfig::default();
    for seed in 0..DATASETS {
        let x = super::factor_dataset(100 + seed, 120, 5, 0.85, 7.0);
        let q = 1 + (seed as usize % 2);
        let mut log = StageLog::new(false);
        let gfa = fit_gfa_observed(&x, q, &cfg, &mut |v| log.record(v)).map_err(|e| e.to_string())?;
        stage_log(&log, &format!("gfa seed {seed}"))?;

        let mut log = StageLog::new(true);
        let fit = fit_cnfa_observed(&x, q, &cfg, &mut |v| log.record(v)).map_err(|e| e.to_string())?;
        stage_log(&log, &format!("cnfa seed {seed}"))?;
        ensure!(largest_drop(&fit.cycle_trace) <= MONOTONE_SLACK, "cnfa seed {seed}: cycle trace drops");
        ensure!(fit.loglik >= gfa.loglik - MONOTONE_SLACK, "cnfa seed {seed}: below its Gaussian start");
    }
    Ok(())
}

/// The same for mixtures, including responsibility rows.
pub fn mixture_monotone() -> Check {
    let cfg = FitConfig {
        max_iter: 300,
        ..FitConfig::default()
    };
    for seed in 0..DATASETS {
        let (x, _) = super::two_group_dataset(200 + seed, 60, 4);
        let mut log = StageLog::new(true);
        let fit = fit_mcnfa_observed(&x, 2, 1, &cfg, &mut |v| log.record(v)).map_err(|e| e.to_string())?;
        stage_log(&log, &format!("mcnfa seed {seed}"))?;
        ensure!(largest_drop(&fit.cycle_trace) <= MONOTONE_SLACK, "mcnfa seed {seed}: cycle trace drops");
        let start = fit_mgfa(&x, 2, 1, &cfg).map_err(|e| e.to_string())?;
        ensure!(fit.loglik >= start.loglik - MONOTONE_SLACK, "mcnfa seed {seed}: below its Gaussian start");
    }
    Ok(())
}

/// Compares the low-rank inverse and log-determinant with dense oracles.
pub fn woodbury_case(lambda: DMatrix<f64>, psi: DVector<f64>) -> Check {
    let cov = LowRankCov::new(lambda, psi).map_err(|e| e.to_string())?;
    let dense = cov.dense();
    let oracle = dense.clone().try_inverse().ok_or("dense inverse failed")?;
    let inv = woodbury_inverse(&cov).map_err(|e| e.to_string())?;
    let err = (&inv - &oracle).abs().max() / oracle.abs().max().max(1.0);
    ensure!(err < 1e-8, "p = {}, q = {}: inverse off by {err}", cov.p(), cov.q());
    let lu_logdet = dense.lu().determinant().ln();
    let err = (woodbury_logdet(&cov).map_err(|e| e.to_string())? - lu_logdet).abs();
    ensure!(err < 1e-8, "p = {}, q = {}: log-determinant off by {err}", cov.p(), cov.q());
    Ok(())
}

pub fn random_woodbury_case(seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = super::rng(seed);
    let p = r.random_range(1..=50);
    let q = r.random_range(0..=5usize).min(p);
    let lambda = DMatrix::from_fn(p, q, |_, _| r.random_range(-1.0..1.0));
    let psi = DVector::from_fn(p, |_, _| r.random_range(0.1..2.0));
    (lambda, psi)
}

pub fn woodbury_seeded(cases: u64) -> Check {
    (0..cases).try_for_each(|seed| {
        let (lambda, psi) = random_woodbury_case(seed);
        woodbury_case(lambda, psi)
    })
}

/// Trapezoid rule on a uniform grid; spectrally accurate for densities that
/// decay to zero inside the range.
fn trapezoid_weight(i: usize, count: usize) -> f64 {
    if i == 0 || i + 1 == count {
        0.5
    } else {
        1.0
    }
}

pub fn quadrature_1d() -> Check {
    let theta = CnParams::new(DVector::from_vec(vec![0.3]), DMatrix::from_element(1, 1, 1.7), 0.8, 6.0).unwrap();
    let (lo, h, count) = (-45.0, 0.05, 1801);
    let grid: Vec<Vec<f64>> = (0..count).map(|i| vec![lo + h * i as f64]).collect();
    let dens = theta.log_density_rows(&DataMatrix::from_rows(&grid).unwrap()).unwrap();
    let total: f64 = dens.iter().enumerate().map(|(i, l)| trapezoid_weight(i, count) * l.exp()).sum::<f64>() * h;
    ensure!((total - 1.0).abs() < 1e-6, "p = 1 integral {total}");
    Ok(())
}

pub fn quadrature_2d() -> Check {
    let theta = CnParams::new(
        DVector::from_vec(vec![1.0, -0.5]),
        DMatrix::from_row_slice(2, 2, &[1.5, 0.6, 0.6, 0.8]),
        0.7,
        9.0,
    )
    .unwrap();
    let (lo, h, count) = (-35.0, 0.1, 701);
    let mut grid = Vec::with_capacity(count * count);
    for i in 0..count {
        for j in 0..count {
            grid.push(vec![lo + h * i as f64, lo + h * j as f64]);
        }
    }
    let dens = theta.log_density_rows(&DataMatrix::from_rows(&grid).unwrap()).unwrap();
    let total: f64 = dens
        .iter()
        .enumerate()
        .map(|(k, l)| trapezoid_weight(k / count, count) * trapezoid_weight(k % count, count) * l.exp())
        .sum::<f64>()
        * h
        * h;
    ensure!((total - 1.0).abs() < 1e-6, "p = 2 integral {total}");
    Ok(())
}

/// Data whose centered scatter (divisor `n`) equals `target`.
fn data_with_scatter(target: &DMatrix<f64>, n: usize, seed: u64) -> DataMatrix {
    let p = target.nrows();
    let mut r = super::rng(seed);
    let raw = DMatrix::from_fn(n, p, |_, _| r.random_range(-1.0..1.0));
    let x = DataMatrix::from_matrix(raw).unwrap();
    let centered = x.centered(&x.mean());
    let current = SpdFactor::new(&x.covariance()).unwrap();
    let want = SpdFactor::new(target).unwrap();
    // rows y_i = L_t L_c^{-1} (x_i - m)
    let whitened = current.lower().clone().solve_lower_triangular(&centered.transpose()).unwrap();
    DataMatrix::from_matrix((want.lower() * whitened).transpose()).unwrap()
}

/// With `S = ΛΛ' + Ψ` the loadings update returns `(Λ, Ψ)` unchanged.
pub fn fa_fixed_point() -> Check {
    for (p, q, seed) in [(4, 1, 1u64), (6, 2, 2), (8, 3, 3)] {
        let mut r = super::rng(seed);
        let lambda = DMatrix::from_fn(p, q, |_, _| r.random_range(-1.0..1.0));
        let psi = DVector::from_fn(p, |_, _| r.random_range(0.2..1.0));
        let sigma = &lambda * lambda.transpose() + DMatrix::from_diagonal(&psi);
        let x = data_with_scatter(&sigma, 40, seed);
        let stats = second_cycle_stats(&x, &x.mean(), &vec![1.0; x.n()], &lambda, &psi).map_err(|e| e.to_string())?;
        let (new_lambda, new_psi) =
            update_loadings(&stats, &psi_floor(&x.variances(), 1e-6)).map_err(|e| e.to_string())?;
        let dl = (&new_lambda - &lambda).abs().max();
        let dp = (&new_psi - &psi).abs().max();
        ensure!(dl < 1e-8 && dp < 1e-8, "p = {p}, q = {q}: moved by {dl} / {dp}");
    }
    Ok(())
}

/// One-component mixtures agree with the single-population fits.
pub fn single_component_reduction() -> Check {
    let cfg = FitConfig {
        epsilon: 1e-10,
        max_iter: 20_000,
        ..FitConfig::default()
    };
    let err = |e: cnmix::Error| e.to_string();
    for seed in [5u64, 6, 7] {
        let x = super::factor_dataset(seed, 150, 5, 0.85, 8.0);
        let gfa = fit_gfa(&x, 1, &cfg).map_err(err)?;
        let mgfa = fit_mgfa(&x, 1, 1, &cfg).map_err(err)?;
        ensure!((gfa.loglik - mgfa.loglik).abs() < 1e-6, "seed {seed}: {} vs {}", gfa.loglik, mgfa.loglik);
        ensure!(gfa.m == mgfa.m, "seed {seed}: parameter counts differ");

        let cnfa = fit_cnfa(&x, 1, &cfg).map_err(err)?;
        let mcnfa = fit_mcnfa(&x, 1, 1, &cfg).map_err(err)?;
        ensure!((cnfa.loglik - mcnfa.loglik).abs() < 1e-6, "seed {seed}: {} vs {}", cnfa.loglik, mcnfa.loglik);
        let c = &mcnfa.params.components[0];
        ensure!((cnfa.params.alpha - c.alpha).abs() < 1e-6, "seed {seed}: alpha {} vs {}", cnfa.params.alpha, c.alpha);
        ensure!((cnfa.params.eta - c.eta).abs() < 1e-6 * cnfa.params.eta, "seed {seed}: eta {} vs {}", cnfa.params.eta, c.eta);
        ensure!(cnfa.m == mcnfa.m && cnfa.bad_flags == mcnfa.bad_flags, "seed {seed}: counts or flags differ");
    }
    Ok(())
}

/// Fits `CN(μ, LL', 0.85, 9)` to 5000 draws.
pub fn cn_recovery() -> Check {
    let mut r = super::rng(2024);
    let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let chol = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.4, 0.9, 0.0, -0.3, 0.2, 1.2]);
    let (x, _) = super::cn_sample(&mut r, 5000, &mu, &chol, 0.85, 9.0);
    let fit = fit_cn(&DataMatrix::from_matrix(x).unwrap(), &FitConfig::default()).map_err(|e| e.to_string())?;
    let p = &fit.params;
    let dmu = (&p.mu - &mu).abs().max();
    ensure!(dmu < 0.1, "|mu - mu0| = {dmu}");
    ensure!((p.alpha - 0.85).abs() < 0.07, "alpha = {}", p.alpha);
    ensure!((p.eta / 9.0 - 1.0).abs() < 0.2, "eta = {}", p.eta);
    Ok(())
}

pub fn parameter_counts() -> Check {
    let got = [
        count_params_cnfa(8, 1, true),
        count_params_cnfa(8, 1, false),
        count_params_cnfa(8, 2, true),
        count_params_mcnfa(2, 7, 2),
    ]
    .map(|c| c.unwrap_or(0));
    ensure!(got == [26, 24, 33, 59], "counts {got:?}");
    Ok(())
}
