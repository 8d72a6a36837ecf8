//! Closed forms checked against independent numerical routes: quadrature,
//! a test-local Monte Carlo generator, and the Gamma-ratio recursion.

use phaselab::geometry::{
    eta_sq_l1, expected_norm, gaussian_tail, spherical_width_l1, StructureSpec,
};

/// SplitMix64 with Box–Muller; deliberately unrelated to the crate's RNG.
struct TestNormals {
    state: u64,
    spare: Option<f64>,
}

impl TestNormals {
    fn new(seed: u64) -> Self {
        Self { state: seed, spare: None }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform_open().ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.uniform_open();
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Mean and standard error of a sample.
fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let (left, right) = (simpson(f, a, mid), simpson(f, mid, b));
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        recurse(f, a, mid, left, tol / 2.0, depth - 1) + recurse(f, mid, b, right, tol / 2.0, depth - 1)
    }
    recurse(f, a, b, simpson(f, a, b), tol, 50)
}

#[test]
fn gaussian_tail_matches_quadrature() {
    let f = |x: f64| (-x * x / 2.0).exp();
    for t in [0.0, 0.5, 1.0, 2.0, 3.5] {
        // The integrand is below 1e-30 past t + 12.
        let q = adaptive_simpson(&f, t, t + 12.0, 1e-14);
        assert!((gaussian_tail(t) - q).abs() < 1e-12, "t = {t}");
    }
    // sqrt(pi/2) erfc(1/sqrt 2), confirmed by the quadrature above.
    assert!((gaussian_tail(1.0) - 0.3976897454).abs() < 1e-10);
}

#[test]
fn eta_sq_l1_matches_independent_monte_carlo() {
    let (n, s, t) = (128, 10, 1.0);
    let mut rng = TestNormals::new(20);
    let samples: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let mut d = 0.0;
            for i in 0..n {
                let g = rng.normal();
                // On the support the subgradient is fixed at +t.
                d += if i < s { (g - t).powi(2) } else { (g.abs() - t).max(0.0).powi(2) };
            }
            d
        })
        .collect();
    let (mean, se) = summarize(&samples);
    let exact = eta_sq_l1(n, s, t).unwrap().value;
    assert!((exact - mean).abs() <= 4.0 * se, "{exact} vs {mean} +- {se}");
}

#[test]
fn expected_norm_satisfies_gamma_recursion() {
    // mu_n mu_{n+1} = n, mu_1 = sqrt(2 / pi).
    let mut mu = (2.0 / std::f64::consts::PI).sqrt();
    for n in 1..400 {
        let got = expected_norm(n);
        assert!((got - mu).abs() <= 1e-11 * mu, "n = {n}: {got} vs {mu}");
        mu = n as f64 / mu;
    }
    assert_eq!(expected_norm(0), 0.0);
}

#[test]
fn expected_norm_matches_monte_carlo() {
    let mut rng = TestNormals::new(5);
    for n in [1usize, 7, 40] {
        let samples: Vec<f64> = (0..200_000)
            .map(|_| (0..n).map(|_| rng.normal().powi(2)).sum::<f64>().sqrt())
            .collect();
        let (mean, se) = summarize(&samples);
        assert!((expected_norm(n) - mean).abs() <= 4.0 * se, "n = {n}");
    }
}

#[test]
fn spherical_width_at_largest_scale_matches_monte_carlo() {
    // At t = sqrt(m) the set is {sign patterns agreeing on the support}/sqrt(m),
    // so the supremum is (sum_S h_i + sum_off |h_i|) / sqrt(m).
    let (m, k) = (64usize, 9usize);
    let t = (m as f64).sqrt();
    let width = spherical_width_l1(m, k, t).unwrap().value;
    let exact = (2.0 / std::f64::consts::PI).sqrt() * (m - k) as f64 / t;
    assert!((width - exact).abs() < 1e-12);

    let mut rng = TestNormals::new(9);
    let samples: Vec<f64> = (0..200_000)
        .map(|_| {
            (0..m)
                .map(|i| {
                    let h = rng.normal();
                    if i < k {
                        h
                    } else {
                        h.abs()
                    }
                })
                .sum::<f64>()
                / t
        })
        .collect();
    let (mean, se) = summarize(&samples);
    assert!((width - mean).abs() <= 4.0 * se);
}

#[test]
fn spherical_width_vanishes_at_smallest_scale() {
    let spec = StructureSpec::sparse(50, 8).unwrap();
    let (lo, _) = spec.scale_range().unwrap();
    assert_eq!(spherical_width_l1(50, 8, lo).unwrap().value, 0.0);
}
