//! Scatter and contour tables for external plotting tools.

use nalgebra::DMatrix;
use serde::Serialize;

use super::csv::Dataset;
use super::model::ModelDocument;
use crate::data::DataMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    /// One-based row number in the input.
    pub row_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// First (and second, when present) fitted coordinate.
    pub x: f64,
    pub y: Option<f64>,
    pub component: usize,
    pub good_prob: f64,
    pub bad_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contour {
    pub x_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    /// `density[i][j]` is the model density at `(x_grid[j], y_grid[i])`.
    pub density: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotDocument {
    pub points: Vec<PlotPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contour: Option<Contour>,
}

/// Per-point table, plus a `grid × grid` density table over the bounding box
/// of the data (widened by 10% on each side) when `grid` is given. Contours
/// need exactly two variables.
pub fn emit_plot_data(model: &ModelDocument, data: &Dataset, grid: Option<usize>) -> Result<PlotDocument> {
    let x = model.prepare(&data.data)?;
    let contour = match grid {
        Some(k) => Some(contour(model, &x, k)?),
        None => None,
    };
    let eval = model.evaluate(&x)?;
    let points = (0..x.n())
        .map(|i| PlotPoint {
            row_index: i + 1,
            label: data.labels.as_ref().map(|l| l[i].clone()),
            x: x.values()[(i, 0)],
            y: (x.p() > 1).then(|| x.values()[(i, 1)]),
            component: eval.labels[i] + 1,
            good_prob: eval.good_prob[i],
            bad_flag: crate::cn::is_bad(eval.good_prob[i]),
        })
        .collect();
    Ok(PlotDocument { points, contour })
}

fn axis(values: impl Iterator<Item = f64>, k: usize) -> Vec<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = 0.1 * (hi - lo).max(f64::EPSILON);
    let (lo, hi) = (lo - pad, hi + pad);
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn contour(model: &ModelDocument, x: &DataMatrix, k: usize) -> Result<Contour> {
    if x.p() != 2 {
        return Err(Error::DimensionUnsupported(x.p()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("grid must have at least one point".into()));
    }
    let x_grid = axis(x.values().column(0).iter().copied(), k);
    let y_grid = axis(x.values().column(1).iter().copied(), k);
    let cells = DMatrix::from_fn(k * k, 2, |r, c| if c == 0 { x_grid[r % k] } else { y_grid[r / k] });
    let cells = DataMatrix::new(cells, x.names().to_vec())?;
    let dens = model.evaluate(&cells)?.log_density;
    let density = (0..k).map(|i| (0..k).map(|j| dens[i * k + j].exp()).collect()).collect();
    Ok(Contour { x_grid, y_grid, density })
}
