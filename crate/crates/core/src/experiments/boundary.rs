//! Predicted phase boundaries.
//!
//! Along a line of the grid the predicted threshold is compared with `m`.
//! The boundary is where `threshold - m` changes sign: integer bisection
//! finds the last success point, then linear interpolation between it and
//! its successor gives a fractional location.

use std::fmt;

use super::{GridConfig, Procedure};
use crate::error::Result;
use crate::thresholds::{EstimatorConfig, PhaseModel};

/// Which axis the boundary value is measured along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// For each axis1 value, the boundary in axis2 units.
    AlongAxis2,
    /// For each axis2 value, the boundary in axis1 units.
    AlongAxis1,
}

impl Orientation {
    /// Column names `(position, boundary)` in curve CSV files.
    pub fn csv_columns(self) -> (&'static str, &'static str) {
        match self {
            Orientation::AlongAxis2 => ("axis1", "boundary_axis2"),
            Orientation::AlongAxis1 => ("axis2", "boundary_axis1"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Theoretical,
    /// Empirical 50% success contour.
    Empirical50,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::Theoretical => "theoretical",
            CurveKind::Empirical50 => "empirical50",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    pub orientation: Orientation,
    pub kind: CurveKind,
    /// Grid values of the fixed axis.
    pub positions: Vec<usize>,
    /// Boundary location in units of the other axis; `None` if the line has
    /// no sign change within the grid range.
    pub boundary: Vec<Option<f64>>,
}

/// `threshold - m` at one grid point. Points where the tradeoff is
/// undefined because the signal is dense count as failures.
fn gap(cfg: &GridConfig, est: &EstimatorConfig, a1: usize, a2: usize) -> Result<f64> {
    let model = PhaseModel::new(&cfg.signal_spec(a1)?, &cfg.corruption_spec(a2)?, est)?;
    let threshold = match cfg.procedure {
        Procedure::Constrained => model.cp().value,
        Procedure::Penalized(l) => model.lambda_bounds(l)?.upper,
        Procedure::PenalizedOptimal => match model.optimal_lambda() {
            Ok(opt) => model.lambda_bounds(opt.lambda_star)?.upper,
            Err(_) if a1 == cfg.max_complexity() => f64::INFINITY,
            Err(e) => return Err(e),
        },
    };
    Ok(threshold - cfg.m as f64)
}

/// Location in `[lo, hi]` where `h` turns nonnegative, assuming a single
/// sign change; `None` if `h(lo) >= 0` or `h(hi) < 0`.
fn sign_change(h: impl Fn(usize) -> Result<f64>, lo: usize, hi: usize) -> Result<Option<f64>> {
    if lo > hi {
        return Ok(None);
    }
    let h_lo = h(lo)?;
    if h_lo >= 0.0 {
        return Ok(None);
    }
    let h_hi = h(hi)?;
    if h_hi < 0.0 {
        return Ok(None);
    }
    let (mut a, mut b, mut ha, mut hb) = (lo, hi, h_lo, h_hi);
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        let hm = h(mid)?;
        if hm < 0.0 {
            (a, ha) = (mid, hm);
        } else {
            (b, hb) = (mid, hm);
        }
    }
    let frac = if hb.is_finite() { ha / (ha - hb) } else { 1.0 };
    Ok(Some(a as f64 + frac * (b - a) as f64))
}

/// Predicted boundary over the grid range of `cfg`.
///
/// Bisection runs over all integers between the smallest and largest value
/// of the searched axis, not just the grid values. Penalized procedures
/// need a nonzero corruption sparsity, and the optimal tradeoff needs a
/// nonzero signal complexity, so those lines start at 1.
pub fn theoretical_boundary(cfg: &GridConfig, orientation: Orientation) -> Result<BoundaryCurve> {
    cfg.validate()?;
    let est = cfg.estimator()?;
    let penalized = cfg.procedure != Procedure::Constrained;
    let optimal = cfg.procedure == Procedure::PenalizedOptimal;
    let span = |axis: &[usize], floor: bool| {
        let lo = axis.first().copied().unwrap_or(0);
        let hi = axis.last().copied().unwrap_or(0);
        (if floor { lo.max(1) } else { lo }, hi)
    };
    let (positions, boundary) = match orientation {
        Orientation::AlongAxis2 => {
            let (lo, hi) = span(&cfg.axis2, penalized);
            let mut out = Vec::with_capacity(cfg.axis1.len());
            for &a1 in &cfg.axis1 {
                if optimal && a1 == 0 {
                    out.push(None);
                    continue;
                }
                out.push(sign_change(|a2| gap(cfg, &est, a1, a2), lo, hi)?);
            }
            (cfg.axis1.clone(), out)
        }
        Orientation::AlongAxis1 => {
            let (lo, hi) = span(&cfg.axis1, optimal);
            let mut out = Vec::with_capacity(cfg.axis2.len());
            for &a2 in &cfg.axis2 {
                if penalized && a2 == 0 {
                    out.push(None);
                    continue;
                }
                out.push(sign_change(|a1| gap(cfg, &est, a1, a2), lo, hi)?);
            }
            (cfg.axis2.clone(), out)
        }
    };
    Ok(BoundaryCurve {
        orientation,
        kind: CurveKind::Theoretical,
        positions,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_change_interpolates_linearly() {
        // h(x) = x - 4.25 crosses at 4.25.
        let r = sign_change(|x| Ok(x as f64 - 4.25), 0, 10).unwrap();
        assert!((r.unwrap() - 4.25).abs() < 1e-12);
        assert_eq!(sign_change(|_| Ok(1.0), 0, 10).unwrap(), None);
        assert_eq!(sign_change(|_| Ok(-1.0), 0, 10).unwrap(), None);
    }

    #[test]
    fn infinite_failure_snaps_to_upper_point() {
        let r = sign_change(|x| Ok(if x < 7 { -1.0 } else { f64::INFINITY }), 0, 10).unwrap();
        assert_eq!(r, Some(7.0));
    }
}
