mod common;

use cnmix::cn::{cm2_update, fit_cn, gaussian_mle_loglik, CnParams};
use cnmix::cnfa::{fit_cnfa, fit_cnfa_from, fit_gfa, psi_floor, second_cycle_stats, update_loadings, CnfaParams};
use cnmix::mcnfa::{cycle3_update, fit_mcnfa, fit_mgfa, kmeans_init, McnfaParams};
use cnmix::numerics::BoxedPoint2;
use cnmix::{DataMatrix, Error, FitConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn tight() -> FitConfig {
    FitConfig {
        epsilon: 1e-10,
        max_iter: 20_000,
        ..FitConfig::default()
    }
}

#[test]
fn univariate_contamination_is_recovered() {
    let mut r = common::rng(31);
    let (x, _) = common::cn_sample(&mut r, 5000, &DVector::zeros(1), &DMatrix::identity(1, 1), 0.85, 9.0);
    let fit = fit_cn(&DataMatrix::from_matrix(x).unwrap(), &FitConfig::default()).unwrap();
    assert!((fit.params.alpha - 0.85).abs() < 0.07, "{}", fit.params.alpha);
    assert!((fit.params.eta / 9.0 - 1.0).abs() < 0.2, "{}", fit.params.eta);
}

#[test]
fn trivariate_location_is_recovered_and_beats_the_gaussian() {
    let mut r = common::rng(32);
    let (x, _) = common::cn_sample(&mut r, 5000, &DVector::zeros(3), &DMatrix::identity(3, 3), 0.85, 9.0);
    let x = DataMatrix::from_matrix(x).unwrap();
    let fit = fit_cn(&x, &FitConfig::default()).unwrap();
    assert!(fit.params.mu.amax() < 0.1, "{}", fit.params.mu);
    assert!(fit.loglik >= gaussian_mle_loglik(&x).unwrap());
    assert!(fit.converged);
}

#[test]
fn near_gaussian_start_matches_the_gaussian_likelihood() {
    let x = common::factor_dataset(33, 200, 3, 1.0, 1.0);
    let cfg = FitConfig::default();
    let start = CnParams::new(x.mean(), x.covariance(), 0.999, 1.001).unwrap().loglik(&x).unwrap();
    let gauss = gaussian_mle_loglik(&x).unwrap();
    // each point moves by at most log(0.999) plus a term of order 1e-6
    assert!((start - gauss).abs() < 2e-3 * x.n() as f64, "{start} vs {gauss}");
    let (pt, best) = cm2_update(&x, &x.mean(), &x.covariance(), BoxedPoint2::new(0.999, 1.001), &cfg).unwrap();
    assert!(best >= start);
    assert!(cfg.bounds().contains(pt));
}

#[test]
fn degenerate_data_are_reported() {
    let x = DataMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
    assert!(matches!(fit_cn(&x, &FitConfig::default()), Err(Error::DegenerateScatter)));
}

/// `n` draws from `N(0, λλ' + ψ I)`.
fn one_factor_gaussian(seed: u64, n: usize, lambda: &DVector<f64>, psi: f64) -> DataMatrix {
    let mut r = common::rng(seed);
    let p = lambda.len();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let f: f64 = r.sample(StandardNormal);
        let e = common::normal_vector(&mut r, p) * psi.sqrt();
        x.set_row(i, &(lambda * f + e).transpose());
    }
    DataMatrix::from_matrix(x).unwrap()
}

#[test]
fn gaussian_factor_model_is_recovered() {
    let lambda = DVector::from_vec(vec![0.9, 0.8, 0.7, 0.6, 0.5]);
    let x = one_factor_gaussian(34, 5000, &lambda, 0.3);
    let fit = fit_gfa(&x, 1, &FitConfig::default()).unwrap();
    let truth = &lambda * lambda.transpose() + DMatrix::identity(5, 5) * 0.3;
    let err = (fit.params.sigma() - truth).norm();
    assert!(err < 0.1, "{err}");
}

#[test]
fn contaminated_factor_fit_stays_close_on_gaussian_data() {
    let lambda = DVector::from_vec(vec![0.9, 0.8, 0.7, 0.6, 0.5]);
    let x = one_factor_gaussian(35, 500, &lambda, 0.3);
    let cfg = FitConfig::default();
    let gfa = fit_gfa(&x, 1, &cfg).unwrap();
    let cnfa = fit_cnfa(&x, 1, &cfg).unwrap();
    assert!(cnfa.loglik >= gfa.loglik);
    assert!(cnfa.loglik - gfa.loglik < 2.0, "{} vs {}", cnfa.loglik, gfa.loglik);
    // either almost nobody is bad or the bad points are barely inflated
    let (a, e) = (cnfa.params.alpha, cnfa.params.eta);
    assert!(a > 0.9 || e < 1.5, "alpha {a}, eta {e}");
}

#[test]
fn uniquenesses_respect_the_floor() {
    let d = cnmix::io::datasets::state_x77();
    let cfg = FitConfig::default();
    let floor = psi_floor(&d.data.variances(), cfg.psi_floor_ratio);
    for q in [1, 2, 3] {
        let fit = fit_cnfa(&d.data, q, &cfg).unwrap();
        assert!(fit.params.psi.iter().zip(floor.iter()).all(|(p, f)| p >= f));
    }
}

#[test]
fn likelihood_ignores_rotation_of_the_starting_loadings() {
    let x = common::factor_dataset(36, 200, 6, 0.85, 6.0);
    let cfg = tight();
    let start = fit_gfa(&x, 2, &cfg).unwrap().params;
    let theta: f64 = 0.7;
    let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
    let rotated = CnfaParams {
        lambda: &start.lambda * rot,
        ..start.clone()
    };
    let mut ignore = cnmix::observe::ignore;
    let a = fit_cnfa_from(&x, start, &cfg, &mut ignore).unwrap();
    let b = fit_cnfa_from(&x, rotated, &cfg, &mut ignore).unwrap();
    assert!((a.loglik - b.loglik).abs() < 1e-6, "{} vs {}", a.loglik, b.loglik);
}

/// Expected complete-data objective of the loadings step, per observation.
fn loadings_objective(s: &DMatrix<f64>, gamma: &DMatrix<f64>, r: &DMatrix<f64>, lambda: &DMatrix<f64>, psi: &DVector<f64>) -> f64 {
    let psi_inv = DMatrix::from_diagonal(&psi.map(|v| 1.0 / v));
    -0.5 * psi.iter().map(|v| v.ln()).sum::<f64>() - 0.5 * (&psi_inv * s).trace()
        + (&psi_inv * lambda * gamma.transpose() * s).trace()
        - 0.5 * (lambda.transpose() * &psi_inv * lambda * r).trace()
}

#[test]
fn loadings_update_maximizes_its_objective() {
    let x = common::factor_dataset(37, 100, 3, 0.8, 5.0);
    let mut r = common::rng(37);
    let lambda = DMatrix::from_fn(3, 1, |_, _| r.random_range(0.2..1.0));
    let psi = DVector::from_fn(3, |_, _| r.random_range(0.3..1.0));
    let w: Vec<f64> = (0..x.n()).map(|_| r.random_range(0.2..1.0)).collect();
    let stats = second_cycle_stats(&x, &x.mean(), &w, &lambda, &psi).unwrap();
    let (best_l, best_p) = update_loadings(&stats, &DVector::from_element(3, 1e-10)).unwrap();
    let f = |l: &DMatrix<f64>, p: &DVector<f64>| loadings_objective(&stats.s, &stats.gamma, &stats.r, l, p);
    let at_update = f(&best_l, &best_p);
    for _ in 0..2000 {
        let dl = DMatrix::from_fn(3, 1, |_, _| r.random_range(-0.05..0.05));
        let dp = DVector::from_fn(3, |_, _| r.random_range(-0.05..0.05));
        let p = (&best_p + dp).map(|v| v.max(1e-3));
        assert!(f(&(&best_l + dl), &p) <= at_update + 1e-12);
    }
}

#[test]
fn separated_clusters_are_found_by_kmeans() {
    let mut r = common::rng(38);
    let mut x = DMatrix::zeros(100, 2);
    for i in 0..100 {
        let shift = if i < 50 { 0.0 } else { 10.0 };
        x.set_row(i, &(common::normal_vector(&mut r, 2).add_scalar(shift)).transpose());
    }
    let labels = kmeans_init(&DataMatrix::from_matrix(x).unwrap(), 2, 10, 1).unwrap();
    assert!(labels[..50].iter().all(|l| *l == labels[0]));
    assert!(labels[50..].iter().all(|l| *l == labels[50]));
    assert_ne!(labels[0], labels[50]);
}

#[test]
fn hard_assignments_split_the_loadings_update() {
    let (x, truth) = common::two_group_dataset(39, 40, 4);
    let n = x.n();
    let z = DMatrix::from_fn(n, 2, |i, g| if truth[i] == g { 1.0 } else { 0.0 });
    let mut r = common::rng(39);
    let w = DMatrix::from_fn(n, 2, |_, _| r.random_range(0.3..1.0));
    let comps: Vec<CnfaParams> = (0..2)
        .map(|_| CnfaParams {
            mu: DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0)),
            lambda: DMatrix::from_fn(4, 1, |_, _| r.random_range(0.2..1.0)),
            psi: DVector::from_fn(4, |_, _| r.random_range(0.3..1.0)),
            alpha: 0.9,
            eta: 4.0,
        })
        .collect();
    let theta = McnfaParams {
        pi: DVector::from_element(2, 0.5),
        components: comps.clone(),
    };
    let cfg = FitConfig::default();
    let joint = cycle3_update(&x, &z, &w, &theta, &cfg).unwrap();
    let floor = psi_floor(&x.variances(), cfg.psi_floor_ratio);
    for (g, c) in comps.iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| truth[i] == g).collect();
        let wg: Vec<f64> = rows.iter().map(|&i| w[(i, g)]).collect();
        let stats = second_cycle_stats(&x.select_rows(&rows), &c.mu, &wg, &c.lambda, &c.psi).unwrap();
        let (l, p) = update_loadings(&stats, &floor).unwrap();
        assert!((&joint[g].0 - l).amax() < 1e-12);
        assert!((&joint[g].1 - p).amax() < 1e-12);
    }
}

/// Adjusted Rand index between two labelings.
fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (x, y) in a.iter().zip(b) {
        table[*x][*y] += 1;
    }
    let pairs = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|v| pairs(*v)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / pairs(a.len() as u64);
    (index - expected) / (0.5 * (rows + cols) - expected)
}

#[test]
fn gaussian_mixture_recovers_two_groups() {
    let (x, truth) = common::two_group_dataset(40, 150, 5);
    let fit = fit_mgfa(&x, 2, 1, &FitConfig::default()).unwrap();
    let ari = adjusted_rand(&fit.labels, &truth);
    assert!(ari >= 0.95, "{ari}");
}

/// Two contaminated groups with one-factor scales, 2000 points each.
fn contaminated_clusters(seed: u64) -> DataMatrix {
    let mut r = common::rng(seed);
    let lambda = DVector::from_vec(vec![1.0, 0.8, 0.6]);
    let sigma = &lambda * lambda.transpose() + DMatrix::identity(3, 3) * 0.4;
    let chol = sigma.cholesky().unwrap().l();
    let (a, _) = common::cn_sample(&mut r, 2000, &DVector::from_element(3, 0.0), &chol, 0.9, 9.0);
    let (b, _) = common::cn_sample(&mut r, 2000, &DVector::from_vec(vec![15.0, -15.0, 15.0]), &chol, 0.8, 16.0);
    let mut x = DMatrix::zeros(4000, 3);
    x.rows_mut(0, 2000).copy_from(&a);
    x.rows_mut(2000, 2000).copy_from(&b);
    DataMatrix::from_matrix(x).unwrap()
}

#[test]
fn per_component_contamination_is_recovered() {
    let x = contaminated_clusters(41);
    let fit = fit_mcnfa(&x, 2, 1, &FitConfig::default()).unwrap();
    // order components by location
    let mut comps: Vec<_> = fit.params.components.iter().collect();
    comps.sort_by(|a, b| a.mu[0].total_cmp(&b.mu[0]));
    for (c, (alpha, eta)) in comps.iter().zip([(0.9, 9.0), (0.8, 16.0)]) {
        assert!((c.alpha - alpha).abs() < 0.07, "alpha {} vs {alpha}", c.alpha);
        assert!((c.eta / eta - 1.0).abs() < 0.25, "eta {} vs {eta}", c.eta);
    }
}

#[test]
fn mixture_start_is_deterministic() {
    let (x, _) = common::two_group_dataset(42, 50, 4);
    let cfg = FitConfig::default();
    let a = fit_mcnfa(&x, 2, 1, &cfg).unwrap();
    let b = fit_mcnfa(&x, 2, 1, &cfg).unwrap();
    assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
    assert_eq!(a.labels, b.labels);
}
