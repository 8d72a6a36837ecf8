//! Empirical 50% crossings and their agreement with predicted boundaries.
//!
//! Crossings live in the index domain: a column of `L` cells spans
//! `[0, L - 1]`, cell `j` at `j`. A cleanly separated column (all successes
//! then all failures, or the reverse) crosses halfway between the two
//! blocks. Otherwise a logistic curve in the index is fitted by maximum
//! likelihood and its 50% point is the crossing. A small ridge on the slope
//! keeps the fit finite when one cell straddles an otherwise separated
//! column.

use super::{BoundaryCurve, CurveKind, Orientation, PhaseGrid};
use crate::error::{invalid, Result};

const SLOPE_RIDGE: f64 = 1e-2;
const NEWTON_STEPS: usize = 200;
const NEWTON_TOL: f64 = 1e-12;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn separation_midpoint(rates: &[f64]) -> Option<f64> {
    let ones = rates.iter().take_while(|&&r| r == 1.0).count();
    if ones > 0 && rates[ones..].iter().all(|&r| r == 0.0) {
        return Some(ones as f64 - 0.5);
    }
    let zeros = rates.iter().take_while(|&&r| r == 0.0).count();
    if zeros > 0 && rates[zeros..].iter().all(|&r| r == 1.0) {
        return Some(zeros as f64 - 0.5);
    }
    None
}

/// Penalized binomial negative log-likelihood of `logit = a + b (x - xbar)`.
fn objective(successes: &[usize], trials: usize, xbar: f64, a: f64, b: f64) -> f64 {
    let n = trials as f64;
    let nll: f64 = successes
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let z = a + b * (j as f64 - xbar);
            n * softplus(z) - k as f64 * z
        })
        .sum();
    nll + 0.5 * SLOPE_RIDGE * b * b
}

fn logistic_crossing(successes: &[usize], trials: usize) -> Option<f64> {
    let xbar = (successes.len() - 1) as f64 / 2.0;
    let n = trials as f64;
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut value = objective(successes, trials, xbar, a, b);
    for _ in 0..NEWTON_STEPS {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, SLOPE_RIDGE * b, 0.0, 0.0, SLOPE_RIDGE);
        for (j, &k) in successes.iter().enumerate() {
            let x = j as f64 - xbar;
            let p = sigmoid(a + b * x);
            let r = n * p - k as f64;
            let w = n * p * (1.0 - p);
            ga += r;
            gb += r * x;
            haa += w;
            hab += w * x;
            hbb += w * x * x;
        }
        let det = haa * hbb - hab * hab;
        if !(det > 0.0) {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            let nv = objective(successes, trials, xbar, na, nb);
            if nv <= value {
                (a, b) = (na, nb);
                improved = value - nv > NEWTON_TOL * (1.0 + value.abs());
                value = nv;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let crossing = xbar - a / b;
    (b != 0.0 && crossing.is_finite()).then_some(crossing)
}

/// 50% crossing of one column of success counts, in index units. `None`
/// for all-success or all-failure columns, or a column with no trend.
pub fn empirical_crossing(successes: &[usize], trials: usize) -> Option<f64> {
    if trials == 0 || successes.len() < 2 {
        return None;
    }
    let rates: Vec<f64> = successes.iter().map(|&k| k as f64 / trials as f64).collect();
    if rates.iter().all(|&r| r == 1.0) || rates.iter().all(|&r| r == 0.0) {
        return None;
    }
    separation_midpoint(&rates).or_else(|| logistic_crossing(successes, trials))
}

/// Fractional index of `value` in the increasing `axis`, by linear
/// interpolation; extrapolates linearly past the ends.
fn value_to_index(axis: &[usize], value: f64) -> Option<f64> {
    if axis.len() < 2 {
        return None;
    }
    let seg = axis
        .windows(2)
        .position(|w| value <= w[1] as f64)
        .unwrap_or(axis.len() - 2);
    let (lo, hi) = (axis[seg] as f64, axis[seg + 1] as f64);
    Some(seg as f64 + (value - lo) / (hi - lo))
}

fn index_to_value(axis: &[usize], index: f64) -> Option<f64> {
    if axis.len() < 2 {
        return None;
    }
    let seg = (index.floor().max(0.0) as usize).min(axis.len() - 2);
    let (lo, hi) = (axis[seg] as f64, axis[seg + 1] as f64);
    Some(lo + (index - seg as f64) * (hi - lo))
}

/// Lines of the grid perpendicular to `orientation`: the fixed-position
/// values, the searched axis, and the success counts along each line.
fn lines(grid: &PhaseGrid, orientation: Orientation) -> (Vec<usize>, Vec<usize>, Vec<Vec<usize>>) {
    match orientation {
        Orientation::AlongAxis2 => (grid.axis1.clone(), grid.axis2.clone(), grid.successes.clone()),
        Orientation::AlongAxis1 => (
            grid.axis2.clone(),
            grid.axis1.clone(),
            (0..grid.axis2.len())
                .map(|j| grid.successes.iter().map(|row| row[j]).collect())
                .collect(),
        ),
    }
}

impl BoundaryCurve {
    /// The empirical 50% contour of a complete grid.
    pub fn empirical(grid: &PhaseGrid, orientation: Orientation) -> Result<Self> {
        if !grid.is_complete() {
            return Err(invalid("grid", "the grid has unfinished cells"));
        }
        let (positions, axis, lines) = lines(grid, orientation);
        let boundary = lines
            .iter()
            .map(|line| empirical_crossing(line, grid.trials_per_cell).and_then(|c| index_to_value(&axis, c)))
            .collect();
        Ok(Self {
            orientation,
            kind: CurveKind::Empirical50,
            positions,
            boundary,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnCrossing {
    pub position: usize,
    /// Empirical crossing, index units.
    pub empirical: Option<f64>,
    /// Predicted boundary mapped to index units.
    pub predicted: Option<f64>,
    /// `|empirical - predicted|` in cells, when both exist.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingReport {
    pub columns: Vec<ColumnCrossing>,
    pub band: f64,
    /// Columns with no empirical crossing (all-success or all-failure).
    pub excluded_empirical: usize,
    /// Columns with an empirical crossing but no predicted boundary.
    pub excluded_predicted: usize,
    pub compared: usize,
    pub within_band: usize,
    pub max_deviation: Option<f64>,
}

impl CrossingReport {
    /// Share of compared columns within the band; 0 when nothing compares.
    pub fn fraction_within(&self) -> f64 {
        if self.compared == 0 {
            0.0
        } else {
            self.within_band as f64 / self.compared as f64
        }
    }
}

/// Compares the empirical crossings of `grid` with a predicted `curve`
/// column by column. `band` is in cells.
pub fn crossing_compare(grid: &PhaseGrid, curve: &BoundaryCurve, band: f64) -> Result<CrossingReport> {
    if !(band >= 0.0) {
        return Err(invalid("band", "must be nonnegative"));
    }
    if !grid.is_complete() {
        return Err(invalid("grid", "the grid has unfinished cells"));
    }
    let (positions, axis, lines) = lines(grid, curve.orientation);
    if positions != curve.positions || curve.boundary.len() != positions.len() {
        return Err(invalid("curve", "positions differ from the grid axis"));
    }
    let mut report = CrossingReport {
        columns: Vec::with_capacity(positions.len()),
        band,
        excluded_empirical: 0,
        excluded_predicted: 0,
        compared: 0,
        within_band: 0,
        max_deviation: None,
    };
    for ((&position, line), predicted) in positions.iter().zip(&lines).zip(&curve.boundary) {
        let empirical = empirical_crossing(line, grid.trials_per_cell);
        let predicted = predicted.and_then(|b| value_to_index(&axis, b));
        let deviation = match (empirical, predicted) {
            (None, _) => {
                report.excluded_empirical += 1;
                None
            }
            (Some(_), None) => {
                report.excluded_predicted += 1;
                None
            }
            (Some(e), Some(p)) => {
                let d = (e - p).abs();
                report.compared += 1;
                report.within_band += (d <= band) as usize;
                report.max_deviation = Some(report.max_deviation.map_or(d, |m: f64| m.max(d)));
                Some(d)
            }
        };
        report.columns.push(ColumnCrossing {
            position,
            empirical,
            predicted,
            deviation,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::Ensemble;
    use crate::experiments::Procedure;

    #[test]
    fn separated_column_crosses_between_blocks() {
        assert_eq!(empirical_crossing(&[10, 10, 10, 0, 0], 10), Some(2.5));
        assert_eq!(empirical_crossing(&[0, 0, 10], 10), Some(1.5));
        assert_eq!(empirical_crossing(&[10, 10, 10], 10), None);
        assert_eq!(empirical_crossing(&[0, 0], 10), None);
    }

    #[test]
    fn symmetric_column_crosses_at_center() {
        let c = empirical_crossing(&[20, 18, 10, 2, 0], 20).unwrap();
        assert!((c - 2.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn straddling_cell_stays_finite() {
        let c = empirical_crossing(&[20, 20, 10, 0, 0], 20).unwrap();
        assert!((c - 2.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn logistic_fit_recovers_planted_midpoint() {
        // Expected counts of a logistic with midpoint 3.3 and slope -1.5.
        let counts: Vec<usize> = (0..8)
            .map(|j| (1000.0 * sigmoid(-1.5 * (j as f64 - 3.3))).round() as usize)
            .collect();
        let c = empirical_crossing(&counts, 1000).unwrap();
        assert!((c - 3.3).abs() < 0.01, "{c}");
    }

    #[test]
    fn index_value_maps_are_inverse() {
        let axis = [2, 6, 10, 20];
        for v in [2.0, 3.5, 10.0, 17.0, 20.0] {
            let i = value_to_index(&axis, v).unwrap();
            assert!((index_to_value(&axis, i).unwrap() - v).abs() < 1e-12);
        }
        assert_eq!(value_to_index(&axis, 8.0), Some(1.5));
    }

    fn synthetic(cutoffs: &[usize], trials: usize) -> PhaseGrid {
        let axis2: Vec<usize> = (0..10).collect();
        let n = cutoffs.len();
        PhaseGrid {
            axis1_label: "s".into(),
            axis2_label: "k".into(),
            axis1: (0..n).collect(),
            axis2: axis2.clone(),
            trials_per_cell: trials,
            successes: cutoffs
                .iter()
                .map(|&c| axis2.iter().map(|&k| if k < c { trials } else { 0 }).collect())
                .collect(),
            done: vec![vec![true; 10]; n],
            diagnostics: vec![vec![Default::default(); 10]; n],
            procedure: Procedure::Constrained,
            ensemble: Ensemble::Gaussian,
            m: 10,
            n,
            master_seed: 0,
        }
    }

    #[test]
    fn perfect_grid_matches_its_own_boundary() {
        let grid = synthetic(&[8, 6, 5, 3, 0], 5);
        let curve = BoundaryCurve {
            orientation: Orientation::AlongAxis2,
            kind: CurveKind::Theoretical,
            positions: grid.axis1.clone(),
            boundary: vec![Some(7.6), Some(5.5), Some(4.9), Some(2.5), None],
        };
        let r = crossing_compare(&grid, &curve, 0.5).unwrap();
        assert_eq!(r.compared, 4);
        assert_eq!(r.excluded_empirical, 1);
        assert_eq!(r.fraction_within(), 1.0);
        assert!(r.max_deviation.unwrap() <= 0.5);
        let empirical = BoundaryCurve::empirical(&grid, Orientation::AlongAxis2).unwrap();
        assert_eq!(empirical.boundary[0], Some(7.5));
        assert_eq!(empirical.boundary[4], None);
    }

    #[test]
    fn all_success_grid_compares_nothing() {
        let grid = synthetic(&[10, 10], 3);
        let curve = BoundaryCurve {
            orientation: Orientation::AlongAxis2,
            kind: CurveKind::Theoretical,
            positions: grid.axis1.clone(),
            boundary: vec![None, None],
        };
        let r = crossing_compare(&grid, &curve, 0.5).unwrap();
        assert_eq!((r.compared, r.excluded_empirical), (0, 2));
        assert_eq!(r.fraction_within(), 0.0);
        assert_eq!(r.max_deviation, None);
    }

    #[test]
    fn transposed_lines_read_columns() {
        let grid = synthetic(&[8, 6, 5, 3, 0], 5);
        let (pos, axis, lines) = lines(&grid, Orientation::AlongAxis1);
        assert_eq!(pos.len(), 10);
        assert_eq!(axis, grid.axis1);
        assert_eq!(lines[4], vec![5, 5, 5, 0, 0]);
    }
}
