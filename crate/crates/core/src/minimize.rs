//! One-dimensional minimization used by the threshold computations.
//!
//! A coarse scan locates the best grid cell; golden-section search refines
//! it when the scan looks unimodal, otherwise a dense scan is refined. Ties
//! go to the larger argument.

const COARSE_INTERVALS: usize = 32;
const DENSE_INTERVALS: usize = 4096;
const MAX_SLOPE_CHANGES: usize = 2;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Minimum {
    pub arg: f64,
    pub value: f64,
}

/// `a` beats `b` if strictly smaller, or equal at a larger argument.
fn better(a: Minimum, b: Minimum) -> bool {
    a.value < b.value || (a.value == b.value && a.arg > b.arg)
}

fn scan(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..=intervals)
        .map(|i| if i == intervals { hi } else { lo + (hi - lo) * i as f64 / intervals as f64 })
        .collect();
    let fs = xs.iter().map(|&x| f(x)).collect();
    (xs, fs)
}

fn slope_sign_changes(fs: &[f64]) -> usize {
    let mut changes = 0;
    let mut last = 0.0f64;
    for w in fs.windows(2) {
        let d = w[1] - w[0];
        if d == 0.0 {
            continue;
        }
        if last != 0.0 && d.signum() != last.signum() {
            changes += 1;
        }
        last = d;
    }
    changes
}

fn best_index(fs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in fs.iter().enumerate() {
        if v <= fs[best] {
            best = i;
        }
    }
    best
}

fn golden(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Minimum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        Minimum { arg: c, value: fc }
    } else {
        Minimum { arg: d, value: fd }
    }
}

/// Minimizes `f` over `[lo, hi]` to absolute tolerance `tol` in the argument.
pub(crate) fn minimize_interval(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Minimum {
    debug_assert!(lo <= hi && tol > 0.0);
    if hi - lo <= tol {
        let (a, b) = (Minimum { arg: lo, value: f(lo) }, Minimum { arg: hi, value: f(hi) });
        return if better(a, b) { a } else { b };
    }
    let (mut xs, mut fs) = scan(&f, lo, hi, COARSE_INTERVALS);
    if slope_sign_changes(&fs) > MAX_SLOPE_CHANGES {
        (xs, fs) = scan(&f, lo, hi, DENSE_INTERVALS);
    }
    let i = best_index(&fs);
    let mut best = Minimum { arg: xs[i], value: fs[i] };
    let a = xs[i.saturating_sub(1)];
    let b = xs[(i + 1).min(xs.len() - 1)];
    let refined = golden(&f, a, b, tol);
    if better(refined, best) {
        best = refined;
    }
    for end in [lo, hi] {
        let candidate = Minimum { arg: end, value: f(end) };
        if better(candidate, best) {
            best = candidate;
        }
    }
    best
}

/// Minimizes `f` over `[0, inf)`. The right end of the search interval is
/// doubled from 1 while `f` keeps decreasing, up to `cap`.
pub(crate) fn minimize_nonneg(f: impl Fn(f64) -> f64, tol: f64, cap: f64) -> Minimum {
    let mut hi = 1.0;
    let mut f_hi = f(hi);
    while hi < cap {
        let next = (2.0 * hi).min(cap);
        let f_next = f(next);
        if f_next > f_hi {
            break;
        }
        hi = next;
        f_hi = f_next;
    }
    minimize_interval(f, 0.0, (2.0 * hi).min(cap), tol)
}
