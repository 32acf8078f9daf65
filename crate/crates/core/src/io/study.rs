//! Cell-perturbation studies and classification agreement.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::csv::Dataset;
use crate::config::FitConfig;
use crate::error::{Error, Result};
use crate::modelsel::{grid_search, Family, FittedModel};

/// Errors left after mapping clusters to labels in the best possible way.
/// With at least as many label classes as clusters the mapping is
/// one-to-one; otherwise surplus clusters may share a label.
pub fn misclassified(clusters: &[usize], labels: &[String]) -> usize {
    let classes: Vec<&String> = {
        let mut c: Vec<&String> = labels.iter().collect();
        c.sort();
        c.dedup();
        c
    };
    let g = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; classes.len()]; g];
    for (k, l) in clusters.iter().zip(labels) {
        let c = classes.binary_search(&l).expect("label is among the classes");
        counts[*k][c] += 1;
    }
    let injective = g <= classes.len();
    let mut best = 0;
    let mut assignment = vec![0usize; g];
    search(&counts, injective, 0, &mut assignment, &mut best);
    clusters.len() - best
}

fn search(counts: &[Vec<usize>], injective: bool, k: usize, assign: &mut Vec<usize>, best: &mut usize) {
    if k == counts.len() {
        let hits = assign.iter().enumerate().map(|(g, c)| counts[g][*c]).sum();
        *best = (*best).max(hits);
        return;
    }
    for c in 0..counts[k].len() {
        if injective && assign[..k].contains(&c) {
            continue;
        }
        assign[k] = c;
        search(counts, injective, k + 1, assign, best);
    }
}

/// `lo:hi:step` as an arithmetic sequence including both ends.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidArgument(format!("expected lo:hi:step, got '{spec}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || hi < lo || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

#[derive(Debug, Clone)]
pub struct StudySettings {
    pub family: Family,
    pub g_range: Vec<usize>,
    pub q_range: Vec<usize>,
    pub cfg: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub value: f64,
    /// `ok` or the failure message.
    pub status: String,
    pub best_g: Option<usize>,
    pub best_q: Option<usize>,
    pub bic: Option<f64>,
    /// Against the label column, excluding the perturbed row.
    pub misclassified: Option<usize>,
    pub perturbed_bad: Option<bool>,
    /// Inflation of the perturbed row's MAP component.
    pub eta: Option<f64>,
}

impl StudyRow {
    fn failed(value: f64, message: String) -> Self {
        Self {
            value,
            status: message,
            best_g: None,
            best_q: None,
            bic: None,
            misclassified: None,
            perturbed_bad: None,
            eta: None,
        }
    }
}

/// Overwrites `data[row, column]` with each value in turn, runs the grid
/// search and records the selected model's behaviour. `row` is zero-based.
/// Each value yields one row, failed or not.
pub fn run_perturbation_study(
    base: &Dataset,
    row: usize,
    column: &str,
    values: &[f64],
    settings: &StudySettings,
) -> Result<Vec<StudyRow>> {
    let col = base
        .data
        .column_index(column)
        .ok_or_else(|| Error::InvalidArgument(format!("no column named '{column}'")))?;
    if row >= base.data.n() {
        return Err(Error::InvalidArgument(format!("row {row} outside {} rows", base.data.n())));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("no perturbation values".into()));
    }
    Ok(values
        .par_iter()
        .map(|&v| study_one(base, row, col, v, settings).unwrap_or_else(|e| StudyRow::failed(v, e.to_string())))
        .collect())
}

fn study_one(base: &Dataset, row: usize, col: usize, value: f64, s: &StudySettings) -> Result<StudyRow> {
    let d = base.with_value(row, col, value)?;
    let grid = grid_search(&d.data, s.family, &s.g_range, &s.q_range, &s.cfg)?;
    let best = &grid.best().score;
    let (labels, good, etas): (Vec<usize>, Vec<f64>, Vec<f64>) = match grid.best_fit() {
        FittedModel::Single(r) => (vec![0; d.data.n()], r.good_prob.clone(), vec![r.params.eta]),
        FittedModel::Mixture(r) => (r.labels.clone(), r.good_prob.clone(), r.params.etas()),
    };
    let misclassified = d.labels.as_ref().map(|truth| {
        let keep: Vec<usize> = (0..labels.len()).filter(|&i| i != row).collect();
        misclassified(
            &keep.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
            &keep.iter().map(|&i| truth[i].clone()).collect::<Vec<_>>(),
        )
    });
    Ok(StudyRow {
        value,
        status: "ok".into(),
        best_g: Some(best.id.g),
        best_q: Some(best.id.q),
        bic: Some(best.bic),
        misclassified,
        perturbed_bad: Some(crate::cn::is_bad(good[row])),
        eta: Some(if s.family.is_contaminated() { etas[labels[row]] } else { 1.0 }),
    })
}

pub fn write_study_csv(rows: &[StudyRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    w.write_record(["value", "status", "best_g", "best_q", "bic", "misclassified", "perturbed_bad", "eta"])
        .map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.status.clone(),
            opt(r.best_g.map(|v| v.to_string())),
            opt(r.best_q.map(|v| v.to_string())),
            opt(r.bic.map(|v| v.to_string())),
            opt(r.misclassified.map(|v| v.to_string())),
            opt(r.perturbed_bad.map(|v| v.to_string())),
            opt(r.eta.map(|v| v.to_string())),
        ])
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `row_index,label,good_prob,bad_flag,w_weight` (one-based rows).
pub fn write_flags_csv(
    path: impl AsRef<Path>,
    labels: Option<&[String]>,
    good_prob: &[f64],
    weights: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["row_index", "label", "good_prob", "bad_flag", "w_weight"])
        .map_err(|e| Error::io(path, e.into()))?;
    for (i, (g, wt)) in good_prob.iter().zip(weights).enumerate() {
        let label = labels.map_or_else(String::new, |l| l[i].clone());
        w.write_record([
            (i + 1).to_string(),
            label,
            g.to_string(),
            crate::cn::is_bad(*g).to_string(),
            wt.to_string(),
        ])
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Counts of each `(cluster, label)` pair, for printing cross-tabulations.
pub fn cross_tab(clusters: &[usize], labels: &[String]) -> BTreeMap<(usize, String), usize> {
    let mut out = BTreeMap::new();
    for (k, l) in clusters.iter().zip(labels) {
        *out.entry((*k, l.clone())).or_insert(0) += 1;
    }
    out
}
