mod common;

use cnmix::io::datasets::state_x77;
use cnmix::io::{emit_plot_data, load_model, run_perturbation_study, save_model, Dataset, ModelDocument, StudySettings};
use cnmix::mcnfa::fit_mcnfa;
use cnmix::modelsel::Family;
use cnmix::cnfa::fit_cnfa;
use cnmix::FitConfig;

fn labelled(seed: u64, n_per: usize, p: usize) -> Dataset {
    let (x, labels) = common::two_group_dataset(seed, n_per, p);
    Dataset {
        name: "groups".into(),
        data: x,
        labels: Some(labels.iter().map(|l| if *l == 0 { "a".into() } else { "b".into() }).collect()),
        label_column: Some("group".into()),
        provenance: vec![],
        standardized: false,
    }
}

#[test]
fn mixture_documents_round_trip_and_rescore_exactly() {
    let d = labelled(21, 50, 7);
    let cfg = FitConfig::default();
    let fit = fit_mcnfa(&d.data, 2, 2, &cfg).unwrap();
    let doc = ModelDocument::from_mixture(&fit, &d.data, &cfg, false);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&doc, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, doc);
    let (loglik, bic) = back.rescore(&d.data).unwrap();
    assert!((loglik - fit.loglik).abs() <= 1e-12 * fit.loglik.abs());
    assert!((bic - fit.bic).abs() <= 1e-12 * fit.bic.abs());
    let eval = back.evaluate(&d.data).unwrap();
    assert_eq!(eval.labels, fit.labels);
}

#[test]
fn factor_documents_round_trip_on_reference_data() {
    let d = state_x77();
    let cfg = FitConfig::default();
    let fit = fit_cnfa(&d.data, 1, &cfg).unwrap();
    let doc = ModelDocument::from_fa(&fit, &d.data, &cfg, false);
    let back = ModelDocument::from_json(&doc.to_json()).unwrap();
    let (loglik, bic) = back.rescore(&d.data).unwrap();
    assert!((loglik - fit.loglik).abs() <= 1e-12 * fit.loglik.abs());
    assert!((bic - fit.bic).abs() <= 1e-12 * fit.bic.abs());
}

#[test]
fn malformed_documents_are_rejected() {
    assert!(ModelDocument::from_json("{}").is_err());
    let d = labelled(22, 30, 3);
    let cfg = FitConfig::default();
    let fit = fit_mcnfa(&d.data, 1, 1, &cfg).unwrap();
    let mut doc = ModelDocument::from_mixture(&fit, &d.data, &cfg, false);
    doc.schema_version += 1;
    assert!(ModelDocument::from_json(&doc.to_json()).is_err());
}

#[test]
fn plot_contour_covers_the_data_and_integrates_near_one() {
    let d = labelled(23, 60, 2);
    let cfg = FitConfig::default();
    let fit = fit_mcnfa(&d.data, 2, 1, &cfg).unwrap();
    let doc = ModelDocument::from_mixture(&fit, &d.data, &cfg, false);
    let plot = emit_plot_data(&doc, &d, Some(150)).unwrap();
    assert_eq!(plot.points.len(), 120);
    assert_eq!(plot.points[0].row_index, 1);
    let c = plot.contour.unwrap();
    let (xs, ys) = (&c.x_grid, &c.y_grid);
    for i in 0..d.data.n() {
        let (x, y) = (d.data.values()[(i, 0)], d.data.values()[(i, 1)]);
        assert!(x > xs[0] && x < xs[xs.len() - 1] && y > ys[0] && y < ys[ys.len() - 1]);
    }
    // a rough Riemann sum; the widened box holds most of the mass
    let (hx, hy) = (xs[1] - xs[0], ys[1] - ys[0]);
    let mass: f64 = c.density.iter().flatten().sum::<f64>() * hx * hy;
    assert!(mass > 0.9 && mass < 1.01, "{mass}");
}

#[test]
fn perturbed_row_is_flagged_and_inflation_grows() {
    let d = labelled(24, 50, 3);
    let settings = StudySettings {
        family: Family::Mcnfa,
        g_range: vec![2],
        q_range: vec![1],
        cfg: FitConfig::default(),
    };
    let rows = run_perturbation_study(&d, 3, "x1", &[25.0, 40.0, 60.0], &settings).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.status, "ok");
        assert_eq!(r.misclassified, Some(0), "{r:?}");
        assert_eq!(r.perturbed_bad, Some(true), "{r:?}");
    }
    let etas: Vec<f64> = rows.iter().map(|r| r.eta.unwrap()).collect();
    assert!(etas.windows(2).all(|w| w[1] > w[0]), "{etas:?}");
}
