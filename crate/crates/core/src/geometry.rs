//! Gaussian squared distance, Gaussian distance and spherical Gaussian width
//! of scaled subdifferentials of the l1 and nuclear norms.
//!
//! For an s-sparse `x` in R^n the subdifferential `t * d||x||_1` is the box
//! `{z : z_i = t sgn(x_i) on the support, |z_i| <= t off it}`. For a rank-r
//! matrix in canonical form `diag(Sigma, 0)` the scaled subdifferential of the
//! nuclear norm is `{[t I_r, 0; 0, t W] : ||W|| <= 1}`. Both have an exact
//! pointwise distance from a Gaussian draw, which is what the Monte Carlo
//! estimators average.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::ensembles::MonteCarloConfig;
use crate::error::{invalid, Result};
use crate::linalg::{singular_values, Moments};
use crate::rng::RandomStream;

/// Relative slack allowed when a scale sits on an endpoint of its range.
const RANGE_SLACK: f64 = 1e-12;

/// A structured object together with the norm that promotes its structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureSpec {
    /// An s-sparse vector in R^dim, regularized by the l1 norm.
    SparseL1 { dim: usize, sparsity: usize },
    /// A rank-r matrix of shape rows x cols (rows <= cols), regularized by
    /// the nuclear norm.
    LowRankNuclear {
        rows: usize,
        cols: usize,
        rank: usize,
    },
}

impl StructureSpec {
    pub fn sparse(dim: usize, sparsity: usize) -> Result<Self> {
        let spec = StructureSpec::SparseL1 { dim, sparsity };
        spec.validate()?;
        Ok(spec)
    }

    pub fn low_rank(rows: usize, cols: usize, rank: usize) -> Result<Self> {
        let spec = StructureSpec::LowRankNuclear { rows, cols, rank };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StructureSpec::SparseL1 { dim, sparsity } => {
                if dim == 0 {
                    return Err(invalid("dim", "dimension must be positive"));
                }
                if sparsity > dim {
                    return Err(invalid(
                        "sparsity",
                        format!("sparsity {sparsity} exceeds dimension {dim}"),
                    ));
                }
            }
            StructureSpec::LowRankNuclear { rows, cols, rank } => {
                if rows == 0 || cols == 0 {
                    return Err(invalid("rows", "matrix dimensions must be positive"));
                }
                if rows > cols {
                    return Err(invalid(
                        "rows",
                        format!("rows {rows} must not exceed cols {cols}"),
                    ));
                }
                if rank > rows {
                    return Err(invalid(
                        "rank",
                        format!("rank {rank} exceeds min(rows, cols) = {rows}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn ambient_dim(&self) -> usize {
        match *self {
            StructureSpec::SparseL1 { dim, .. } => dim,
            StructureSpec::LowRankNuclear { rows, cols, .. } => rows * cols,
        }
    }

    /// Sparsity or rank.
    pub fn complexity(&self) -> usize {
        match *self {
            StructureSpec::SparseL1 { sparsity, .. } => sparsity,
            StructureSpec::LowRankNuclear { rank, .. } => rank,
        }
    }

    /// Same shape with a different sparsity or rank.
    pub fn with_complexity(&self, complexity: usize) -> Result<Self> {
        let spec = match *self {
            StructureSpec::SparseL1 { dim, .. } => StructureSpec::SparseL1 {
                dim,
                sparsity: complexity,
            },
            StructureSpec::LowRankNuclear { rows, cols, .. } => StructureSpec::LowRankNuclear {
                rows,
                cols,
                rank: complexity,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The subdifferential at any point of this structure contains the origin
    /// exactly when the point itself is zero.
    pub fn subdifferential_contains_origin(&self) -> bool {
        self.complexity() == 0
    }

    /// Smallest and largest Euclidean norm over the subdifferential.
    ///
    /// For l1 these are `sqrt(k)` and `sqrt(m)`. For the nuclear norm the
    /// largest norm is `sqrt(rows)`: the identity block contributes `rho` and
    /// the spectral-norm-bounded block at most `rows - rho`.
    pub fn scale_range(&self) -> Result<(f64, f64)> {
        self.validate()?;
        if self.subdifferential_contains_origin() {
            return Err(invalid(
                "sparsity",
                "subdifferential contains the origin; the scale range is undefined",
            ));
        }
        Ok(match *self {
            StructureSpec::SparseL1 { dim, sparsity } => {
                ((sparsity as f64).sqrt(), (dim as f64).sqrt())
            }
            StructureSpec::LowRankNuclear { rows, rank, .. } => {
                ((rank as f64).sqrt(), (rows as f64).sqrt())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    MonteCarlo,
}

/// Value of a geometric measure with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureEstimate {
    pub value: f64,
    pub method: Method,
    pub samples: usize,
    pub std_error: f64,
}

impl MeasureEstimate {
    pub fn closed_form(value: f64) -> Self {
        Self {
            value,
            method: Method::ClosedForm,
            samples: 0,
            std_error: 0.0,
        }
    }

    pub fn monte_carlo(value: f64, std_error: f64, samples: usize) -> Self {
        Self {
            value,
            method: Method::MonteCarlo,
            samples,
            std_error,
        }
    }

    fn from_moments(moments: &Moments) -> Self {
        Self::monte_carlo(moments.mean(), moments.std_error(), moments.count())
    }
}

/// Soft thresholding.
pub fn shrink(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `int_t^inf exp(-x^2 / 2) dx`, via the complementary error function.
pub fn gaussian_tail(t: f64) -> f64 {
    (PI / 2.0).sqrt() * libm::erfc(t / std::f64::consts::SQRT_2)
}

/// Closed-form Gaussian squared distance for real-valued (n, s); the
/// expression is affine in s, which the boundary search relies on.
pub(crate) fn eta_sq_l1_value(n: f64, s: f64, t: f64) -> f64 {
    let t2 = t * t;
    let off_support = (1.0 + t2) * gaussian_tail(t) - t * (-t2 / 2.0).exp();
    s * (1.0 + t2) + 2.0 * (n - s) / (2.0 * PI).sqrt() * off_support
}

fn check_scale(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("scale must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// `eta^2(t * d||x||_1)` for an s-sparse x in R^n.
pub fn eta_sq_l1(n: usize, s: usize, t: f64) -> Result<MeasureEstimate> {
    StructureSpec::sparse(n, s)?;
    check_scale(t)?;
    Ok(MeasureEstimate::closed_form(eta_sq_l1_value(
        n as f64, s as f64, t,
    )))
}

/// Singular values of independent standard Gaussian matrices, kept so that
/// `E sum_i shrink(sigma_i, t)^2` can be evaluated at many scales with common
/// random numbers.
#[derive(Debug, Clone)]
pub struct SpectrumSample {
    per_sample: usize,
    samples: usize,
    values: Vec<f64>,
}

impl SpectrumSample {
    pub fn draw(rows: usize, cols: usize, mc: &MonteCarloConfig) -> Result<Self> {
        let per_sample = rows.min(cols);
        if per_sample == 0 {
            return Ok(Self {
                per_sample,
                samples: 0,
                values: Vec::new(),
            });
        }
        let mut stream = RandomStream::new(mc.seed);
        let mut values = Vec::with_capacity(per_sample * mc.samples);
        let mut buf = vec![0.0; rows * cols];
        for _ in 0..mc.samples {
            stream.fill_normal(&mut buf);
            let g = DMatrix::from_column_slice(rows, cols, &buf);
            values.extend(singular_values(g)?.iter());
        }
        Ok(Self {
            per_sample,
            samples: mc.samples,
            values,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample == 0
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Mean and standard error of `sum_i shrink(sigma_i, t)^2`.
    pub fn shrink_energy(&self, t: f64) -> (f64, f64) {
        if self.is_empty() {
            return (0.0, 0.0);
        }
        let mut moments = Moments::default();
        for block in self.values.chunks_exact(self.per_sample) {
            moments.push(block.iter().map(|&s| shrink(s, t).powi(2)).sum());
        }
        (moments.mean(), moments.std_error())
    }
}

/// Exact part `r (n1 + n2 - r + t^2)` of the nuclear-norm squared distance.
pub(crate) fn nuclear_exact_part(n1: usize, n2: usize, r: usize, t: f64) -> f64 {
    let r_f = r as f64;
    r_f * (n1 as f64 + n2 as f64 - r_f + t * t)
}

/// `eta^2(t * d||X||_*)` for a rank-r n1 x n2 matrix: the exact
/// `r (n1 + n2 - r + t^2)` plus a Monte Carlo estimate of
/// `E sum_i shrink(sigma_i(G2), t)^2` over (n1 - r) x (n2 - r) Gaussian G2.
pub fn eta_sq_nuclear(
    n1: usize,
    n2: usize,
    r: usize,
    t: f64,
    mc: &MonteCarloConfig,
) -> Result<MeasureEstimate> {
    StructureSpec::low_rank(n1, n2, r)?;
    check_scale(t)?;
    mc.validate()?;
    let exact = nuclear_exact_part(n1, n2, r, t);
    if r == n1 {
        return Ok(MeasureEstimate::closed_form(exact));
    }
    let spectrum = SpectrumSample::draw(n1 - r, n2 - r, mc)?;
    let (mean, se) = spectrum.shrink_energy(t);
    Ok(MeasureEstimate::monte_carlo(exact + mean, se, mc.samples))
}

fn check_width_scale(t: f64, lo: f64, hi: f64) -> Result<f64> {
    if !t.is_finite() || t < lo * (1.0 - RANGE_SLACK) || t > hi * (1.0 + RANGE_SLACK) {
        return Err(invalid(
            "t",
            format!("scale {t} outside the admissible range [{lo}, {hi}]"),
        ));
    }
    Ok(t.clamp(lo, hi))
}

/// `omega((1/t) d||v||_1 ∩ S^{m-1})` for a k-sparse v in R^m and
/// `sqrt(k) <= t <= sqrt(m)`.
pub fn spherical_width_l1(m: usize, k: usize, t: f64) -> Result<MeasureEstimate> {
    let spec = StructureSpec::sparse(m, k)?;
    let (lo, hi) = spec.scale_range()?;
    let t = check_width_scale(t, lo, hi)?;
    Ok(MeasureEstimate::closed_form(spherical_width_l1_value(
        m as f64, k as f64, t,
    )))
}

/// `1 - k / t^2`, snapped to 0 when `t^2` is within rounding of `k`.
fn width_factor(k: f64, t: f64) -> f64 {
    let t_sq = t * t;
    if t_sq - k <= RANGE_SLACK * k {
        0.0
    } else {
        1.0 - k / t_sq
    }
}

pub(crate) fn spherical_width_l1_value(m: f64, k: f64, t: f64) -> f64 {
    let inner = (2.0 / PI) * (m - k) * width_factor(k, t);
    inner.max(0.0).sqrt()
}

/// `omega((1/t) d||V||_* ∩ S^{m1 m2 - 1})` for a rank-rho m1 x m2 matrix,
/// `sqrt(1 - rho/t^2) * mu_{(m1 - rho)(m2 - rho)}`.
pub fn spherical_width_nuclear(
    m1: usize,
    m2: usize,
    rho: usize,
    t: f64,
) -> Result<MeasureEstimate> {
    let spec = StructureSpec::low_rank(m1, m2, rho)?;
    let (lo, hi) = spec.scale_range()?;
    let t = check_width_scale(t, lo, hi)?;
    Ok(MeasureEstimate::closed_form(spherical_width_nuclear_value(
        m1, m2, rho, t,
    )))
}

pub(crate) fn spherical_width_nuclear_value(m1: usize, m2: usize, rho: usize, t: f64) -> f64 {
    let factor = width_factor(rho as f64, t).sqrt();
    factor * expected_norm((m1 - rho) * (m2 - rho))
}

/// Expected Euclidean length of a standard Gaussian vector in R^n,
/// `sqrt(2) Gamma((n+1)/2) / Gamma(n/2)`.
pub fn expected_norm(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    std::f64::consts::SQRT_2 * (libm::lgamma((n + 1.0) / 2.0) - libm::lgamma(n / 2.0)).exp()
}

/// Summary of one Gaussian draw against a subdifferential: the squared
/// distance to `c * df` is
/// `fixed_sq - 2 c aligned + c^2 pinned + sum_i shrink(free_i, c)^2`.
#[derive(Debug, Clone, Copy)]
struct DrawSummary {
    fixed_sq: f64,
    aligned: f64,
    pinned: f64,
}

impl DrawSummary {
    fn sq_distance(&self, free: &[f64], c: f64) -> f64 {
        let fixed = self.fixed_sq - 2.0 * c * self.aligned + c * c * self.pinned;
        fixed.max(0.0) + free.iter().map(|&g| shrink(g, c).powi(2)).sum::<f64>()
    }
}

/// Draws one Gaussian point in the ambient space of `spec` and reduces it to
/// a [`DrawSummary`] plus the coordinates (or singular values) that interact
/// with the free part of the subdifferential. The support of an l1 point is
/// taken to be the first `s` coordinates with positive signs, and a low-rank
/// point is taken in canonical form; both are without loss of generality.
fn draw_summary(
    spec: &StructureSpec,
    stream: &mut RandomStream,
    buf: &mut [f64],
    free: &mut Vec<f64>,
) -> Result<DrawSummary> {
    free.clear();
    stream.fill_normal(buf);
    match *spec {
        StructureSpec::SparseL1 { sparsity, .. } => {
            let (support, rest) = buf.split_at(sparsity);
            free.extend(rest.iter().map(|g| g.abs()));
            Ok(DrawSummary {
                fixed_sq: support.iter().map(|g| g * g).sum(),
                aligned: support.iter().sum(),
                pinned: sparsity as f64,
            })
        }
        StructureSpec::LowRankNuclear { rows, cols, rank } => {
            let g = DMatrix::from_column_slice(rows, cols, buf);
            let total_sq = g.norm_squared();
            let lower = g.view((rank, rank), (rows - rank, cols - rank)).clone_owned();
            let lower_sq = lower.norm_squared();
            free.extend(singular_values(lower)?.iter());
            Ok(DrawSummary {
                fixed_sq: total_sq - lower_sq,
                aligned: (0..rank).map(|i| g[(i, i)]).sum(),
                pinned: rank as f64,
            })
        }
    }
}

/// Stored Gaussian draws against one subdifferential, for evaluating the
/// distance functionals at many scales with common random numbers.
#[derive(Debug, Clone)]
pub struct DistanceSampler {
    summaries: Vec<DrawSummary>,
    free: Vec<f64>,
    free_len: usize,
}

impl DistanceSampler {
    pub fn draw(spec: &StructureSpec, mc: &MonteCarloConfig) -> Result<Self> {
        spec.validate()?;
        mc.validate()?;
        let mut stream = RandomStream::new(mc.seed);
        let mut buf = vec![0.0; spec.ambient_dim()];
        let mut free = Vec::new();
        let mut summaries = Vec::with_capacity(mc.samples);
        let mut all_free = Vec::new();
        for _ in 0..mc.samples {
            summaries.push(draw_summary(spec, &mut stream, &mut buf, &mut free)?);
            all_free.extend_from_slice(&free);
        }
        Ok(Self {
            free_len: all_free.len() / mc.samples,
            summaries,
            free: all_free,
        })
    }

    fn sq_distances(&self, c: f64) -> impl Iterator<Item = f64> + '_ {
        let width = self.free_len.max(1);
        self.summaries.iter().enumerate().map(move |(i, summary)| {
            let free = if self.free_len == 0 {
                &[][..]
            } else {
                &self.free[i * width..(i + 1) * width]
            };
            summary.sq_distance(free, c)
        })
    }

    pub fn eta_sq(&self, c: f64) -> MeasureEstimate {
        let mut moments = Moments::default();
        self.sq_distances(c).for_each(|d| moments.push(d));
        MeasureEstimate::from_moments(&moments)
    }

    pub fn zeta(&self, c: f64) -> MeasureEstimate {
        let mut moments = Moments::default();
        self.sq_distances(c).for_each(|d| moments.push(d.sqrt()));
        MeasureEstimate::from_moments(&moments)
    }
}

/// Monte Carlo estimate of `eta^2(t * df)`.
///
/// For l1 every draw contributes its exact squared distance. For the
/// nuclear norm the deterministic part `r (n1 + n2 - r + t^2)` is added
/// exactly and only the lower-right block is sampled, so a full-rank spec has
/// zero variance.
pub fn mc_eta_sq(spec: &StructureSpec, t: f64, mc: &MonteCarloConfig) -> Result<MeasureEstimate> {
    spec.validate()?;
    check_scale(t)?;
    mc.validate()?;
    match *spec {
        StructureSpec::SparseL1 { .. } => {
            let mut stream = RandomStream::new(mc.seed);
            let mut buf = vec![0.0; spec.ambient_dim()];
            let mut free = Vec::new();
            let mut moments = Moments::default();
            for _ in 0..mc.samples {
                let summary = draw_summary(spec, &mut stream, &mut buf, &mut free)?;
                moments.push(summary.sq_distance(&free, t));
            }
            Ok(MeasureEstimate::from_moments(&moments))
        }
        StructureSpec::LowRankNuclear { rows, cols, rank } => {
            let exact = nuclear_exact_part(rows, cols, rank, t);
            if rank == rows {
                return Ok(MeasureEstimate::closed_form(exact));
            }
            let spectrum = SpectrumSample::draw(rows - rank, cols - rank, mc)?;
            let (mean, se) = spectrum.shrink_energy(t);
            Ok(MeasureEstimate::monte_carlo(exact + mean, se, mc.samples))
        }
    }
}

/// Monte Carlo estimate of the Gaussian distance `zeta(c * df) = E dist(g, c df)`.
pub fn mc_zeta(spec: &StructureSpec, c: f64, mc: &MonteCarloConfig) -> Result<MeasureEstimate> {
    spec.validate()?;
    check_scale(c)?;
    mc.validate()?;
    let mut stream = RandomStream::new(mc.seed);
    let mut buf = vec![0.0; spec.ambient_dim()];
    let mut free = Vec::new();
    let mut moments = Moments::default();
    for _ in 0..mc.samples {
        let summary = draw_summary(spec, &mut stream, &mut buf, &mut free)?;
        moments.push(summary.sq_distance(&free, c).sqrt());
    }
    Ok(MeasureEstimate::from_moments(&moments))
}
