//! Two-dimensional Nelder–Mead maximization of a function of `(α, η)` over
//! the open box `(α*, 1) × (1 + δ_η, η_max)`.
//!
//! The simplex lives in unconstrained coordinates
//! `a = logit((α - α*) / (1 - α*))`, `b = logit((η - η_lo) / (η_max - η_lo))`
//! and every evaluation maps back into the box, so returned points are always
//! strictly feasible.

use crate::error::{Error, Result};

/// Point `(α, η)` inside the contamination box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxedPoint2 {
    pub alpha: f64,
    pub eta: f64,
}

impl BoxedPoint2 {
    pub fn new(alpha: f64, eta: f64) -> Self {
        Self { alpha, eta }
    }
}

/// Open box for `(α, η)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationBox {
    pub alpha_min: f64,
    pub eta_delta: f64,
    pub eta_max: f64,
}

pub const DEFAULT_ETA_DELTA: f64 = 1e-6;
pub const DEFAULT_ETA_MAX: f64 = 1000.0;

impl ContaminationBox {
    pub fn new(alpha_min: f64) -> Self {
        Self {
            alpha_min,
            eta_delta: DEFAULT_ETA_DELTA,
            eta_max: DEFAULT_ETA_MAX,
        }
    }

    pub fn eta_min(&self) -> f64 {
        1.0 + self.eta_delta
    }

    pub fn contains(&self, pt: BoxedPoint2) -> bool {
        pt.alpha > self.alpha_min && pt.alpha < 1.0 && pt.eta > self.eta_min() && pt.eta < self.eta_max
    }

    fn free_coords(&self, pt: BoxedPoint2) -> [f64; 2] {
        let u = (pt.alpha - self.alpha_min) / (1.0 - self.alpha_min);
        let v = (pt.eta - self.eta_min()) / (self.eta_max - self.eta_min());
        [logit(u).clamp(-FREE_LIMIT, FREE_LIMIT), logit(v).clamp(-FREE_LIMIT, FREE_LIMIT)]
    }

    fn boxed_point(&self, x: [f64; 2]) -> BoxedPoint2 {
        let a = x[0].clamp(-FREE_LIMIT, FREE_LIMIT);
        let b = x[1].clamp(-FREE_LIMIT, FREE_LIMIT);
        BoxedPoint2 {
            alpha: self.alpha_min + (1.0 - self.alpha_min) * sigmoid(a),
            eta: self.eta_min() + (self.eta_max - self.eta_min()) * sigmoid(b),
        }
    }
}

/// Free coordinates are clamped here so the sigmoid never rounds to 0 or 1.
const FREE_LIMIT: f64 = 30.0;

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once `max f - min f` over the simplex drops below this.
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_evals: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub point: BoxedPoint2,
    pub value: f64,
    pub start_value: f64,
    pub evals: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Maximizes `f` starting from `start`. The returned value is never below
/// `f(start)`; if the search finds nothing better, `start` comes back.
pub fn nelder_mead_maximize<F>(
    mut f: F,
    start: BoxedPoint2,
    bounds: &ContaminationBox,
    opts: &NelderMeadOptions,
) -> Result<Maximum>
where
    F: FnMut(BoxedPoint2) -> f64,
{
    let start_value = f(start);
    if !start_value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    if !bounds.contains(start) {
        return Err(Error::InvalidArgument(format!(
            "start ({}, {}) is outside the contamination box",
            start.alpha, start.eta
        )));
    }

    let mut evals = 1;
    // minimize the negated objective; non-finite values rank last
    let mut cost = |x: [f64; 2], evals: &mut usize| {
        *evals += 1;
        let v = f(bounds.boxed_point(x));
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    let x0 = bounds.free_coords(start);
    let scale = x0[0].abs().max(x0[1].abs());
    let step = if scale > 0.0 { 0.1 * scale } else { 0.1 };
    let mut simplex: [([f64; 2], f64); 3] = [
        (x0, -start_value),
        ([x0[0] + step, x0[1]], 0.0),
        ([x0[0], x0[1] + step], 0.0),
    ];
    for v in simplex.iter_mut().skip(1) {
        v.1 = cost(v.0, &mut evals);
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[2].1 - simplex[0].1;
        if spread < opts.tol || evals >= opts.max_evals {
            break;
        }
        let (best, second, worst) = (simplex[0], simplex[1], simplex[2]);
        let centroid = [
            0.5 * (best.0[0] + second.0[0]),
            0.5 * (best.0[1] + second.0[1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (centroid[0] - worst.0[0]),
                centroid[1] + t * (centroid[1] - worst.0[1]),
            ]
        };

        let xr = along(REFLECT);
        let fr = cost(xr, &mut evals);
        if fr < best.1 {
            let xe = along(EXPAND);
            let fe = cost(xe, &mut evals);
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second.1 {
            simplex[2] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst.1 {
            let xc = along(REFLECT * CONTRACT);
            let fc = cost(xc, &mut evals);
            (xc, fc, fc <= fr)
        } else {
            let xc = along(-CONTRACT);
            let fc = cost(xc, &mut evals);
            (xc, fc, fc < worst.1)
        };
        if accept {
            simplex[2] = (xc, fc);
            continue;
        }
        for v in simplex.iter_mut().skip(1) {
            v.0 = [
                best.0[0] + SHRINK * (v.0[0] - best.0[0]),
                best.0[1] + SHRINK * (v.0[1] - best.0[1]),
            ];
            v.1 = cost(v.0, &mut evals);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x_best, c_best) = simplex[0];
    let value = -c_best;
    if value > start_value {
        Ok(Maximum {
            point: bounds.boxed_point(x_best),
            value,
            start_value,
            evals,
        })
    } else {
        Ok(Maximum {
            point: start,
            value: start_value,
            start_value,
            evals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(alpha_min: f64) -> ContaminationBox {
        ContaminationBox::new(alpha_min)
    }

    #[test]
    fn finds_interior_quadratic_maximum() {
        let f = |p: BoxedPoint2| -(p.alpha - 0.8).powi(2) - (p.eta - 3.0).powi(2);
        let opts = NelderMeadOptions {
            tol: 1e-14,
            max_evals: 2000,
        };
        let m = nelder_mead_maximize(f, BoxedPoint2::new(0.6, 2.0), &unit_box(0.5), &opts).unwrap();
        assert!((m.point.alpha - 0.8).abs() < 1e-4, "{m:?}");
        assert!((m.point.eta - 3.0).abs() < 1e-4, "{m:?}");
        assert!(m.value >= m.start_value);
    }

    #[test]
    fn constant_objective_returns_start() {
        let start = BoxedPoint2::new(0.7, 5.0);
        let m = nelder_mead_maximize(|_| 4.2, start, &unit_box(0.5), &NelderMeadOptions::default())
            .unwrap();
        assert_eq!(m.point, start);
        assert_eq!(m.value, 4.2);
        assert_eq!(m.value - m.start_value, 0.0);
    }

    #[test]
    fn increasing_objective_approaches_upper_bound() {
        let m = nelder_mead_maximize(
            |p| p.alpha,
            BoxedPoint2::new(0.6, 2.0),
            &unit_box(0.5),
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!(m.point.alpha > 0.99 && m.point.alpha < 1.0, "{m:?}");
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = nelder_mead_maximize(
            |_| f64::NAN,
            BoxedPoint2::new(0.6, 2.0),
            &unit_box(0.5),
            &NelderMeadOptions::default(),
        );
        assert!(matches!(r, Err(Error::NonFiniteObjective)));
    }

    #[test]
    fn free_coordinates_round_trip() {
        let b = unit_box(0.5);
        let p = BoxedPoint2::new(0.93, 17.0);
        let q = b.boxed_point(b.free_coords(p));
        assert!((p.alpha - q.alpha).abs() < 1e-12);
        assert!((p.eta - q.eta).abs() < 1e-9);
    }
}
