//! Thin wrappers over nalgebra decompositions that surface non-convergence
//! as an [`Error`] instead of a panic or `None`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

const SVD_MAX_SWEEPS: usize = 10_000;

/// Convergence thresholds tried in order. On some rank-deficient inputs the
/// tightest threshold yields a factorization that does not reproduce the
/// matrix, so every result is verified and the next threshold is tried on
/// failure.
const SVD_EPS_LADDER: [f64; 5] = [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12];
const SVD_CHECK_TOL: f64 = 1e-12;

type Svd = SVD<f64, nalgebra::Dyn, nalgebra::Dyn>;

fn reconstruction_ok(mat: &DMatrix<f64>, svd: &Svd) -> bool {
    let (Some(u), Some(v_t)) = (&svd.u, &svd.v_t) else {
        return false;
    };
    let mut scaled = u.clone();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(s);
    }
    let err = (scaled * v_t - mat).amax();
    err.is_finite() && err <= SVD_CHECK_TOL * (1.0 + mat.amax())
}

/// Sum of squared singular values must equal the squared Frobenius norm.
fn energy_ok(mat: &DMatrix<f64>, values: &DVector<f64>) -> bool {
    let fro = mat.norm_squared();
    let err = (values.norm_squared() - fro).abs();
    err.is_finite() && err <= SVD_CHECK_TOL * (1.0 + fro)
}

pub(crate) fn svd(mat: DMatrix<f64>) -> Result<Svd> {
    let (rows, cols) = mat.shape();
    for eps in SVD_EPS_LADDER {
        if let Some(svd) = mat.clone().try_svd(true, true, eps, SVD_MAX_SWEEPS) {
            if reconstruction_ok(&mat, &svd) {
                return Ok(svd);
            }
        }
    }
    Err(Error::SvdNonConvergence { rows, cols })
}

/// Singular values in nonincreasing order.
pub(crate) fn singular_values(mat: DMatrix<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = mat.shape();
    if rows == 0 || cols == 0 {
        return Ok(DVector::zeros(0));
    }
    for eps in SVD_EPS_LADDER {
        let Some(svd) = mat.clone().try_svd(false, false, eps, SVD_MAX_SWEEPS) else {
            continue;
        };
        let mut values = svd.singular_values;
        if !energy_ok(&mat, &values) {
            continue;
        }
        values
            .as_mut_slice()
            .sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        return Ok(values);
    }
    Err(Error::SvdNonConvergence { rows, cols })
}

pub(crate) fn nuclear_norm(mat: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(mat.clone())?.sum())
}

pub(crate) fn spectral_norm(mat: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(mat.clone())?.iter().cloned().fold(0.0, f64::max))
}

/// Running mean and variance (Welford).
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean, sample std / sqrt(count).
    pub(crate) fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.count - 1) as f64;
        (var / self.count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn verified_svd_reproduces_rank_deficient_matrix() {
        // A rank-2 6x5 matrix on which the tightest threshold alone fails.
        let mut s = RandomStream::new(52);
        let x = DMatrix::from_fn(6, 5, |_, _| s.normal());
        let mut d = svd(x).unwrap();
        let mut values = d.singular_values.clone();
        crate::proxops::project_l1_ball_in_place(values.as_mut_slice(), 3.0, &mut Vec::new());
        d.singular_values = values;
        let p = d.recompose().unwrap();
        let again = svd(p.clone()).unwrap();
        assert!((again.recompose().unwrap() - &p).amax() < 1e-12);
        let sv = singular_values(p.clone()).unwrap();
        assert!((sv.sum() - 3.0).abs() < 1e-12);
    }
}
