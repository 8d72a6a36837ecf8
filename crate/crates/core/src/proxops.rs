//! Proximal operators and Euclidean projections used by the recovery solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};
use crate::geometry::shrink;
use crate::linalg::svd;

pub fn prox_l1(x: &DVector<f64>, t: f64) -> DVector<f64> {
    x.map(|xi| shrink(xi, t))
}

pub(crate) fn prox_l1_in_place(x: &mut [f64], t: f64) {
    for xi in x {
        *xi = shrink(*xi, t);
    }
}

/// Threshold `theta` such that `sum_i max(|x_i| - theta, 0) = radius`, or
/// `None` when `x` already lies in the ball. Sort-based, O(n log n).
fn l1_ball_threshold(x: &[f64], radius: f64, scratch: &mut Vec<f64>) -> Option<f64> {
    let norm: f64 = x.iter().map(|v| v.abs()).sum();
    if norm <= radius {
        return None;
    }
    if radius <= 0.0 {
        return Some(f64::INFINITY);
    }
    scratch.clear();
    scratch.extend(x.iter().map(|v| v.abs()));
    scratch.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (j + 1) as f64;
        if u > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    Some(theta.max(0.0))
}

pub(crate) fn project_l1_ball_in_place(x: &mut [f64], radius: f64, scratch: &mut Vec<f64>) {
    if let Some(theta) = l1_ball_threshold(x, radius, scratch) {
        if theta.is_infinite() {
            x.iter_mut().for_each(|v| *v = 0.0);
        } else {
            prox_l1_in_place(x, theta);
        }
    }
}

/// Euclidean projection onto `{z : ||z||_1 <= radius}`.
pub fn project_l1_ball(x: &DVector<f64>, radius: f64) -> DVector<f64> {
    let mut out = x.clone();
    project_l1_ball_in_place(out.as_mut_slice(), radius.max(0.0), &mut Vec::new());
    out
}

fn map_singular_values(
    x: &DMatrix<f64>,
    f: impl FnOnce(&mut [f64]),
) -> Result<DMatrix<f64>> {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return Ok(x.clone());
    }
    let mut decomposition = svd(x.clone())?;
    f(decomposition.singular_values.as_mut_slice());
    decomposition
        .recompose()
        .map_err(|_| Error::SvdNonConvergence { rows, cols })
}

/// Singular value thresholding.
pub fn prox_nuclear(x: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if t < 0.0 {
        return Err(invalid("t", "threshold must be nonnegative"));
    }
    map_singular_values(x, |sv| prox_l1_in_place(sv, t))
}

/// Projection onto `{Z : ||Z||_* <= radius}`: the singular values are
/// projected onto the l1 ball.
pub fn project_nuclear_ball(x: &DMatrix<f64>, radius: f64) -> Result<DMatrix<f64>> {
    if radius < 0.0 {
        return Err(invalid("radius", "radius must be nonnegative"));
    }
    map_singular_values(x, |sv| {
        project_l1_ball_in_place(sv, radius, &mut Vec::new());
    })
}

/// Projection onto `{(x, v) : Phi x + sqrt(m) v = y}`.
///
/// With `A = [Phi, sqrt(m) I]` the projection is `z - A^T (A A^T)^{-1} (A z - y)`;
/// `A A^T = Phi Phi^T + m I` is factored once and reused.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    phi: DMatrix<f64>,
    y: DVector<f64>,
    sqrt_m: f64,
    gram: Cholesky<f64, Dyn>,
}

impl AffineProjector {
    pub fn new(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let m = phi.nrows();
        if m == 0 || phi.ncols() == 0 {
            return Err(invalid("phi", "sensing matrix must be nonempty"));
        }
        if y.len() != m {
            return Err(invalid(
                "y",
                format!("observation length {} differs from m = {m}", y.len()),
            ));
        }
        let gram = phi * phi.transpose() + DMatrix::identity(m, m) * (m as f64);
        let gram = Cholesky::new(gram)
            .filter(|c| c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0))
            .ok_or_else(|| Error::Factorization("Phi Phi^T + m I is not positive definite".into()))?;
        Ok(Self {
            phi: phi.clone(),
            y: y.clone(),
            sqrt_m: (m as f64).sqrt(),
            gram,
        })
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// `Phi x + sqrt(m) v - y`.
    pub fn constraint_gap(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut r = &self.phi * x;
        r.axpy(self.sqrt_m, v, 1.0);
        r -= &self.y;
        r
    }

    pub fn residual(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.constraint_gap(x, v).norm()
    }

    /// Projects in place.
    pub fn project_mut(&self, x: &mut DVector<f64>, v: &mut DVector<f64>) {
        let gap = self.constraint_gap(x, v);
        let w = self.gram.solve(&gap);
        x.gemv_tr(-1.0, &self.phi, &w, 1.0);
        v.axpy(-self.sqrt_m, &w, 1.0);
    }

    pub fn project(&self, x: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut x, mut v) = (x.clone(), v.clone());
        self.project_mut(&mut x, &mut v);
        (x, v)
    }
}

/// One-shot affine projection; builds the factorization on every call.
pub fn project_affine(
    x: &DVector<f64>,
    v: &DVector<f64>,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    m: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if phi.nrows() != m || v.len() != m || x.len() != phi.ncols() {
        return Err(invalid("m", "inconsistent dimensions for the affine projection"));
    }
    Ok(AffineProjector::new(phi, y)?.project(x, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{nuclear_norm, spectral_norm};
    use crate::rng::RandomStream;
    use proptest::prelude::*;

    fn random_vec(n: usize, seed: u64, scale: f64) -> DVector<f64> {
        let mut s = RandomStream::new(seed);
        DVector::from_fn(n, |_, _| scale * s.normal())
    }

    fn random_mat(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut s = RandomStream::new(seed);
        DMatrix::from_fn(r, c, |_, _| s.normal())
    }

    #[test]
    fn prox_l1_examples() {
        let x = DVector::from_vec(vec![3.0, -0.5, 0.0]);
        assert_eq!(prox_l1(&x, 1.0), DVector::from_vec(vec![2.0, 0.0, 0.0]));
        assert_eq!(prox_l1(&x, 0.0), x);
    }

    #[test]
    fn prox_l1_subgradient_optimality() {
        for seed in 0..20 {
            let x = random_vec(30, seed, 2.0);
            let t = 0.1 + (seed as f64) * 0.1;
            let p = prox_l1(&x, t);
            for i in 0..30 {
                let g = (x[i] - p[i]) / t;
                if p[i] != 0.0 {
                    assert!((g - p[i].signum()).abs() < 1e-12);
                } else {
                    assert!(g.abs() <= 1.0 + 1e-12);
                }
            }
            assert!(p.lp_norm(1) <= x.lp_norm(1));
        }
    }

    #[test]
    fn l1_ball_examples() {
        let inside = DVector::from_vec(vec![0.2, -0.3]);
        assert_eq!(project_l1_ball(&inside, 1.0), inside);
        let axis = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(project_l1_ball(&axis, 1.0), DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(project_l1_ball(&axis, 0.0), DVector::zeros(2));
    }

    /// Dual bisection on theta: independent of the sort-based threshold.
    fn l1_ball_by_bisection(x: &DVector<f64>, radius: f64) -> DVector<f64> {
        if x.lp_norm(1) <= radius {
            return x.clone();
        }
        let (mut lo, mut hi) = (0.0, x.amax());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mass: f64 = x.iter().map(|v| (v.abs() - mid).max(0.0)).sum();
            if mass > radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        prox_l1(x, 0.5 * (lo + hi))
    }

    #[test]
    fn l1_ball_matches_bisection_oracle() {
        for seed in 0..50 {
            let x = random_vec(25, 100 + seed, 1.5);
            let radius = 0.5 + (seed % 7) as f64;
            let p = project_l1_ball(&x, radius);
            let q = l1_ball_by_bisection(&x, radius);
            assert!((p - q).amax() < 1e-10);
        }
    }

    #[test]
    fn prox_nuclear_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let p = prox_nuclear(&d, 2.0).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!((p - expected).amax() < 1e-12);

        let x = random_mat(5, 4, 3);
        assert!((prox_nuclear(&x, 0.0).unwrap() - &x).amax() < 1e-12);
    }

    #[test]
    fn prox_nuclear_residual_has_small_spectral_norm() {
        let x = random_mat(5, 4, 8);
        let p = prox_nuclear(&x, 0.7).unwrap();
        assert!(spectral_norm(&(&x - &p)).unwrap() <= 0.7 + 1e-9);
        assert!(nuclear_norm(&p).unwrap() <= nuclear_norm(&x).unwrap());
    }

    #[test]
    fn nuclear_ball_examples() {
        let x = random_mat(4, 4, 13);
        let r = nuclear_norm(&x).unwrap();
        assert!((project_nuclear_ball(&x, r + 1.0).unwrap() - &x).amax() < 1e-12);

        let u = random_vec(4, 1, 1.0).normalize();
        let v = random_vec(3, 2, 1.0).normalize();
        let rank_one = &u * v.transpose() * 5.0;
        let p = project_nuclear_ball(&rank_one, 2.0).unwrap();
        assert!((p - &u * v.transpose() * 2.0).amax() < 1e-12);

        for seed in 0..10 {
            let x = random_mat(6, 5, 50 + seed);
            let radius = 1.0 + seed as f64;
            let p = project_nuclear_ball(&x, radius).unwrap();
            let expect = nuclear_norm(&x).unwrap().min(radius);
            assert!((nuclear_norm(&p).unwrap() - expect).abs() < 1e-9);
            let again = project_nuclear_ball(&p, radius).unwrap();
            assert!((again - &p).amax() < 1e-10);
        }
    }

    #[test]
    fn affine_projection_of_member_is_identity() {
        let phi = random_mat(6, 9, 4);
        let x = random_vec(9, 5, 1.0);
        let v = random_vec(6, 6, 1.0);
        let y = &phi * &x + v.scale(6f64.sqrt());
        let (px, pv) = project_affine(&x, &v, &phi, &y, 6).unwrap();
        assert!((px - &x).amax() < 1e-12);
        assert!((pv - &v).amax() < 1e-12);
    }

    #[test]
    fn affine_projection_decoupled_case() {
        let phi = DMatrix::zeros(4, 3);
        let y = DVector::zeros(4);
        let x = random_vec(3, 1, 1.0);
        let v = random_vec(4, 2, 1.0);
        let (px, pv) = project_affine(&x, &v, &phi, &y, 4).unwrap();
        assert_eq!(px, x);
        assert!(pv.amax() < 1e-15);
    }

    #[test]
    fn affine_projection_is_orthogonal_to_null_space() {
        let (m, n) = (7, 11);
        let phi = random_mat(m, n, 31);
        let y = random_vec(m, 32, 3.0);
        let proj = AffineProjector::new(&phi, &y).unwrap();
        let x = random_vec(n, 33, 1.0);
        let v = random_vec(m, 34, 1.0);
        let (px, pv) = proj.project(&x, &v);
        assert!(proj.residual(&px, &pv) <= 1e-10 * (1.0 + y.norm()));

        let (qx, qv) = proj.project(&px, &pv);
        assert!((&qx - &px).amax() < 1e-10 && (&qv - &pv).amax() < 1e-10);

        // Null-space directions of [Phi, sqrt(m) I]: (d, -Phi d / sqrt(m)).
        for seed in 0..10 {
            let d = random_vec(n, 40 + seed, 1.0);
            let dv = -(&phi * &d) / (m as f64).sqrt();
            let inner = (&x - &px).dot(&d) + (&v - &pv).dot(&dv);
            assert!(inner.abs() <= 1e-9);
        }
    }

    #[test]
    fn factorization_failure_is_reported() {
        let phi = DMatrix::from_element(2, 2, f64::NAN);
        let y = DVector::zeros(2);
        assert!(matches!(
            AffineProjector::new(&phi, &y),
            Err(Error::Factorization(_))
        ));
    }

    proptest! {
        #[test]
        fn l1_ball_projection_idempotent_and_nonexpansive(
            seed in 0u64..10_000, radius in 0.0f64..5.0
        ) {
            let a = random_vec(12, seed, 2.0);
            let b = random_vec(12, seed + 1, 2.0);
            let pa = project_l1_ball(&a, radius);
            let pb = project_l1_ball(&b, radius);
            prop_assert!(pa.lp_norm(1) <= radius + 1e-10);
            prop_assert!((project_l1_ball(&pa, radius) - &pa).amax() <= 1e-10);
            prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
        }

        #[test]
        fn prox_inequality_holds(seed in 0u64..10_000, t in 0.0f64..3.0) {
            let x = random_vec(10, seed, 2.0);
            let z = random_vec(10, seed + 7, 2.0);
            let p = prox_l1(&x, t);
            let h = |w: &DVector<f64>| t * w.lp_norm(1);
            let lhs = h(&p) + 0.5 * (&p - &x).norm_squared();
            let rhs = h(&z) + 0.5 * (&z - &x).norm_squared();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn svt_prox_inequality_holds(seed in 0u64..1_000, t in 0.0f64..2.0) {
            let x = random_mat(4, 3, seed);
            let z = random_mat(4, 3, seed + 3);
            let p = prox_nuclear(&x, t).unwrap();
            let h = |w: &DMatrix<f64>| t * nuclear_norm(w).unwrap();
            let lhs = h(&p) + 0.5 * (&p - &x).norm_squared();
            let rhs = h(&z) + 0.5 * (&z - &x).norm_squared();
            prop_assert!(lhs <= rhs + 1e-10);
        }

        #[test]
        fn affine_projection_nonexpansive(seed in 0u64..1_000) {
            let phi = random_mat(5, 8, seed);
            let y = random_vec(5, seed + 1, 1.0);
            let proj = AffineProjector::new(&phi, &y).unwrap();
            let (ax, av) = (random_vec(8, seed + 2, 1.0), random_vec(5, seed + 3, 1.0));
            let (bx, bv) = (random_vec(8, seed + 4, 1.0), random_vec(5, seed + 5, 1.0));
            let (pax, pav) = proj.project(&ax, &av);
            let (pbx, pbv) = proj.project(&bx, &bv);
            let before = ((&ax - &bx).norm_squared() + (&av - &bv).norm_squared()).sqrt();
            let after = ((&pax - &pbx).norm_squared() + (&pav - &pbv).norm_squared()).sqrt();
            prop_assert!(after <= before + 1e-12);
            prop_assert!(proj.residual(&pax, &pav) <= 1e-10 * (1.0 + y.norm()));
        }
    }
}
