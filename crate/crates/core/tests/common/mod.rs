//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Column kinds of a linear program `min sum cost_i * z_i` over `A z = b`.
#[derive(Clone, Copy)]
enum Column {
    /// `z_i >= 0`, cost `cost * z_i`.
    Nonneg(f64),
    /// `z_i` free, cost `cost * |z_i|` (a +/- pair of which a basis holds one).
    Free(f64),
}

/// Calls `visit` with every `k`-subset of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Minimum over all basic feasible solutions, by exhaustive enumeration.
/// Bounded feasible programs attain their optimum at one of them.
fn enumerate(a: &DMatrix<f64>, b: &DVector<f64>, columns: &[Column]) -> f64 {
    let rows = a.nrows();
    let scale = 1.0 + b.norm();
    let mut best = f64::INFINITY;
    subsets(columns.len(), rows, |basis| {
        let sub = DMatrix::from_fn(rows, rows, |i, j| a[(i, basis[j])]);
        let Some(w) = sub.clone().lu().solve(b) else {
            return;
        };
        if !w.iter().all(|x| x.is_finite()) || (&sub * &w - b).norm() > 1e-10 * scale {
            return;
        }
        let mut value = 0.0;
        for (&col, &wi) in basis.iter().zip(w.iter()) {
            match columns[col] {
                Column::Nonneg(c) => {
                    if wi < -1e-12 * scale {
                        return;
                    }
                    value += c * wi.max(0.0);
                }
                Column::Free(c) => value += c * wi.abs(),
            }
        }
        best = best.min(value);
    });
    best
}

/// Optimal value of `min ||x||_1 + lambda ||v||_1` s.t. `Phi x + sqrt(m) v = y`.
pub fn lp_penalized(phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> f64 {
    let (m, n) = phi.shape();
    let sm = (m as f64).sqrt();
    let a = DMatrix::from_fn(m, n + m, |i, j| {
        if j < n {
            phi[(i, j)]
        } else if j - n == i {
            sm
        } else {
            0.0
        }
    });
    let columns: Vec<Column> = (0..n + m)
        .map(|j| Column::Free(if j < n { 1.0 } else { lambda }))
        .collect();
    enumerate(&a, y, &columns)
}

/// Optimal value of `min ||v||_1` s.t. `Phi x + sqrt(m) v = y`,
/// `||x||_1 <= radius`, written with `x = x+ - x-` and a slack:
/// `1'x+ + 1'x- + sigma = radius`.
pub fn lp_constrained(phi: &DMatrix<f64>, y: &DVector<f64>, radius: f64) -> f64 {
    let (m, n) = phi.shape();
    let sm = (m as f64).sqrt();
    let cols = 2 * n + m + 1;
    let a = DMatrix::from_fn(m + 1, cols, |i, j| {
        if i == m {
            return if j < 2 * n || j == cols - 1 { 1.0 } else { 0.0 };
        }
        if j < n {
            phi[(i, j)]
        } else if j < 2 * n {
            -phi[(i, j - n)]
        } else if j < 2 * n + m {
            if j - 2 * n == i {
                sm
            } else {
                0.0
            }
        } else {
            0.0
        }
    });
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(y);
    b[m] = radius;
    let columns: Vec<Column> = (0..cols)
        .map(|j| {
            if j < 2 * n || j == cols - 1 {
                Column::Nonneg(0.0)
            } else {
                Column::Free(1.0)
            }
        })
        .collect();
    enumerate(&a, &b, &columns)
}

/// Relative difference. A zero optimum has no relative scale, so the
/// reference is floored at `scale`, the objective of the feasible point
/// `(x, v) = (0, y / sqrt(m))` with unit weight.
pub fn rel_diff(value: f64, reference: f64, y: &DVector<f64>) -> f64 {
    let scale = y.lp_norm(1) / (y.len() as f64).sqrt();
    (value - reference).abs() / reference.abs().max(scale)
}
