//! Phase-transition locations for the constrained and penalized programs.
//!
//! * `C_p ~ min_t eta^2(t df) + min_t eta^2(t dg)` for the constrained program.
//! * `C_p(lambda)` for the penalized program, bracketed by
//!   `min_{alpha <= t <= beta} [2 sqrt(eta^2(c df) [- 1]) - 2 omega(t) + m]`
//!   with `c = sqrt(m) / (lambda t)` and `omega(t)` the spherical width of
//!   `(1/t) dg`. The upper value is the point estimate.
//!
//! The signal term is closed form for l1 and a common-random-numbers Monte
//! Carlo average for the nuclear norm, so each threshold is a deterministic
//! function of its inputs and seed.

use crate::ensembles::MonteCarloConfig;
use crate::error::{invalid, Result};
use crate::geometry::{
    eta_sq_l1_value, nuclear_exact_part, spherical_width_l1_value,
    spherical_width_nuclear_value, DistanceSampler, SpectrumSample, StructureSpec,
};
use crate::minimize::{minimize_interval, minimize_nonneg, Minimum};

/// Tolerance in the scale argument for every inner minimization.
pub const SCALE_TOL: f64 = 1e-6;
/// Largest scale searched by unbounded minimizations.
const SCALE_CAP: f64 = 1e6;

/// How `zeta(c df)` is evaluated when choosing the optimal tradeoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaMode {
    /// `sqrt(eta^2)`, which has the same minimizer as `eta^2`.
    Surrogate,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub mc: MonteCarloConfig,
    pub zeta: ZetaMode,
    pub tol: f64,
}

impl EstimatorConfig {
    pub fn new(mc: MonteCarloConfig) -> Self {
        Self {
            mc,
            zeta: ZetaMode::Surrogate,
            tol: SCALE_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mc.validate()?;
        if !(self.tol > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// `eta^2(t df)` as a function of `t`, with its Monte Carlo standard error.
#[derive(Debug, Clone)]
enum EtaModel {
    L1 { n: f64, s: f64 },
    Nuclear {
        rows: usize,
        cols: usize,
        rank: usize,
        spectrum: SpectrumSample,
    },
}

impl EtaModel {
    fn build(spec: &StructureSpec, mc: &MonteCarloConfig) -> Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            StructureSpec::SparseL1 { dim, sparsity } => EtaModel::L1 {
                n: dim as f64,
                s: sparsity as f64,
            },
            StructureSpec::LowRankNuclear { rows, cols, rank } => EtaModel::Nuclear {
                rows,
                cols,
                rank,
                spectrum: SpectrumSample::draw(rows - rank, cols - rank, mc)?,
            },
        })
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            EtaModel::L1 { n, s } => (eta_sq_l1_value(*n, *s, t), 0.0),
            EtaModel::Nuclear {
                rows,
                cols,
                rank,
                spectrum,
            } => {
                let (mean, se) = spectrum.shrink_energy(t);
                (nuclear_exact_part(*rows, *cols, *rank, t) + mean, se)
            }
        }
    }

    fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }
}

/// `omega((1/t) dg ∩ sphere)` for the corruption, on `[alpha, beta]`.
#[derive(Debug, Clone, Copy)]
struct WidthModel {
    spec: StructureSpec,
    alpha: f64,
    beta: f64,
}

impl WidthModel {
    fn build(spec: &StructureSpec) -> Result<Self> {
        let (alpha, beta) = spec.scale_range()?;
        Ok(Self {
            spec: *spec,
            alpha,
            beta,
        })
    }

    fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(self.alpha, self.beta);
        match self.spec {
            StructureSpec::SparseL1 { dim, sparsity } => {
                spherical_width_l1_value(dim as f64, sparsity as f64, t)
            }
            StructureSpec::LowRankNuclear { rows, cols, rank } => {
                spherical_width_nuclear_value(rows, cols, rank, t)
            }
        }
    }
}

/// Cached estimators for one (signal, corruption) pair.
#[derive(Debug, Clone)]
pub struct PhaseModel {
    signal: StructureSpec,
    corruption: StructureSpec,
    signal_eta: EtaModel,
    corruption_eta: EtaModel,
    width: Option<WidthModel>,
    cfg: EstimatorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Minimizing scale of `eta^2(t df)`.
    pub signal_scale: f64,
    /// Minimizing scale of `eta^2(t dg)`.
    pub corruption_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaBounds {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    /// Minimizing corruption scale of the upper value.
    pub t_star: f64,
    /// Signal scale `sqrt(m) / (lambda t_star)`.
    pub c_star: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalLambda {
    pub lambda_star: f64,
    pub t_star: f64,
    pub c_star: f64,
}

impl PhaseModel {
    pub fn new(signal: &StructureSpec, corruption: &StructureSpec, cfg: &EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let width = if corruption.validate().is_ok() && !corruption.subdifferential_contains_origin() {
            Some(WidthModel::build(corruption)?)
        } else {
            None
        };
        Ok(Self {
            signal: *signal,
            corruption: *corruption,
            signal_eta: EtaModel::build(signal, &cfg.mc)?,
            corruption_eta: EtaModel::build(corruption, &cfg.mc)?,
            width,
            cfg: *cfg,
        })
    }

    pub fn signal(&self) -> &StructureSpec {
        &self.signal
    }

    pub fn corruption(&self) -> &StructureSpec {
        &self.corruption
    }

    /// Number of measurements, the ambient dimension of the corruption.
    pub fn m(&self) -> usize {
        self.corruption.ambient_dim()
    }

    pub fn n(&self) -> usize {
        self.signal.ambient_dim()
    }

    fn min_eta(&self, model: &EtaModel) -> (Minimum, f64) {
        let best = minimize_nonneg(|t| model.value(t), self.cfg.tol, SCALE_CAP);
        (best, model.eval(best.arg).1)
    }

    pub fn cp(&self) -> CpEstimate {
        let (sig, sig_se) = self.min_eta(&self.signal_eta);
        let (cor, cor_se) = self.min_eta(&self.corruption_eta);
        CpEstimate {
            value: sig.value + cor.value,
            std_error: (sig_se * sig_se + cor_se * cor_se).sqrt(),
            signal_scale: sig.arg,
            corruption_scale: cor.arg,
        }
    }

    fn width_model(&self) -> Result<&WidthModel> {
        self.width.as_ref().ok_or_else(|| {
            invalid(
                "corruption",
                "the corruption subdifferential contains the origin",
            )
        })
    }

    fn sandwich_term(&self, lambda: f64, t: f64, lower: bool) -> f64 {
        let m = self.m() as f64;
        let c = m.sqrt() / (lambda * t);
        let eta = self.signal_eta.value(c);
        let root = if lower { (eta - 1.0).max(0.0).sqrt() } else { eta.sqrt() };
        2.0 * root - 2.0 * self.width.as_ref().map_or(0.0, |w| w.eval(t)) + m
    }

    pub fn lambda_bounds(&self, lambda: f64) -> Result<LambdaBounds> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive and finite, got {lambda}")));
        }
        let w = *self.width_model()?;
        let upper = minimize_interval(|t| self.sandwich_term(lambda, t, false), w.alpha, w.beta, self.cfg.tol);
        let lower = minimize_interval(|t| self.sandwich_term(lambda, t, true), w.alpha, w.beta, self.cfg.tol);
        let c_star = (self.m() as f64).sqrt() / (lambda * upper.arg);
        let (eta, se) = self.signal_eta.eval(c_star);
        // d sqrt(x) = dx / (2 sqrt(x)); the sandwich carries 2 sqrt(eta^2).
        let std_error = if eta > 0.0 { se / eta.sqrt() } else { 0.0 };
        Ok(LambdaBounds {
            lambda,
            lower: lower.value.min(upper.value),
            upper: upper.value,
            t_star: upper.arg,
            c_star,
            std_error,
        })
    }

    pub fn optimal_lambda(&self) -> Result<OptimalLambda> {
        if self.signal.subdifferential_contains_origin() {
            return Err(invalid(
                "sparsity",
                "the signal subdifferential contains the origin",
            ));
        }
        let w = *self.width_model()?;
        let t_star = minimize_interval(|t| -w.eval(t), w.alpha, w.beta, self.cfg.tol).arg;
        let c_star = match self.cfg.zeta {
            ZetaMode::Surrogate => minimize_nonneg(|c| self.signal_eta.value(c), self.cfg.tol, SCALE_CAP).arg,
            ZetaMode::MonteCarlo => {
                let sampler = DistanceSampler::draw(&self.signal, &self.cfg.mc)?;
                minimize_nonneg(|c| sampler.zeta(c).value, self.cfg.tol, SCALE_CAP).arg
            }
        };
        if !(c_star > 0.0) {
            return Err(invalid(
                "sparsity",
                "the signal distance is minimized at scale 0, so the optimal lambda is unbounded",
            ));
        }
        Ok(OptimalLambda {
            lambda_star: (self.m() as f64).sqrt() / (c_star * t_star),
            t_star,
            c_star,
        })
    }
}

fn check_m(corruption: &StructureSpec, m: usize) -> Result<()> {
    if m == 0 || corruption.ambient_dim() != m {
        return Err(invalid(
            "m",
            format!("m = {m} differs from the corruption dimension {}", corruption.ambient_dim()),
        ));
    }
    Ok(())
}

pub fn cp_estimate(signal: &StructureSpec, corruption: &StructureSpec, cfg: &EstimatorConfig) -> Result<CpEstimate> {
    Ok(PhaseModel::new(signal, corruption, cfg)?.cp())
}

pub fn cp_lambda_bounds(
    signal: &StructureSpec,
    corruption: &StructureSpec,
    m: usize,
    lambda: f64,
    cfg: &EstimatorConfig,
) -> Result<LambdaBounds> {
    check_m(corruption, m)?;
    PhaseModel::new(signal, corruption, cfg)?.lambda_bounds(lambda)
}

pub fn optimal_lambda(
    signal: &StructureSpec,
    corruption: &StructureSpec,
    m: usize,
    cfg: &EstimatorConfig,
) -> Result<OptimalLambda> {
    check_m(corruption, m)?;
    PhaseModel::new(signal, corruption, cfg)?.optimal_lambda()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Procedure {
    Constrained,
    Penalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityBound {
    pub event: Event,
    pub procedure: Procedure,
    pub epsilon: f64,
    pub prob_lower_bound: f64,
}

/// Tail bound implied by `m` and a threshold.
///
/// Constrained: `eps = sqrt(m) - sqrt(C) - sqrt(2)` (success) or
/// `sqrt(C) - sqrt(m)` (failure), bound `1 - 2 exp(-eps^2 / 4)`.
/// Penalized: `eps = m - C` or `C - m`, bound `1 - 2 exp(-eps^2 / 16)`.
/// A negative `eps` is reported as 0. The bound is clamped to `[0, 1]`.
pub fn probability_bound(procedure: Procedure, event: Event, m: usize, threshold: f64) -> ProbabilityBound {
    let m = m as f64;
    let c = threshold.max(0.0);
    let (raw, denom) = match (procedure, event) {
        (Procedure::Constrained, Event::Success) => (m.sqrt() - c.sqrt() - 2f64.sqrt(), 4.0),
        (Procedure::Constrained, Event::Failure) => (c.sqrt() - m.sqrt(), 4.0),
        (Procedure::Penalized, Event::Success) => (m - c, 16.0),
        (Procedure::Penalized, Event::Failure) => (c - m, 16.0),
    };
    let epsilon = if raw > 0.0 { raw } else { 0.0 };
    let prob = (1.0 - 2.0 * (-epsilon * epsilon / denom).exp()).clamp(0.0, 1.0);
    ProbabilityBound {
        event,
        procedure,
        epsilon,
        prob_lower_bound: prob,
    }
}

/// Regime of `m` relative to an estimated threshold and its uncertainty band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Success,
    Failure,
    Indeterminate,
}

impl Regime {
    pub fn classify(m: usize, lower: f64, upper: f64) -> Self {
        let m = m as f64;
        if m >= upper {
            Regime::Success
        } else if m < lower {
            Regime::Failure
        } else {
            Regime::Indeterminate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub cp: f64,
    pub cp_std_error: f64,
    pub cp_lambda_lower: Option<f64>,
    pub cp_lambda_upper: Option<f64>,
    pub cp_lambda_std_error: Option<f64>,
    pub lambda: Option<f64>,
    pub t_star: Option<f64>,
    pub c_star: Option<f64>,
    pub lambda_star: Option<f64>,
    pub m: usize,
    pub n: usize,
}

/// C_p, and the C_p(lambda) sandwich at `lambda` or, when `optimal` is set
/// and no `lambda` is given, at the optimal tradeoff.
pub fn threshold_report(
    signal: &StructureSpec,
    corruption: &StructureSpec,
    lambda: Option<f64>,
    optimal: bool,
    cfg: &EstimatorConfig,
) -> Result<ThresholdReport> {
    let model = PhaseModel::new(signal, corruption, cfg)?;
    let cp = model.cp();
    let opt = if optimal { Some(model.optimal_lambda()?) } else { None };
    let at = lambda.or(opt.map(|o| o.lambda_star));
    let bounds = match at {
        Some(l) => Some(model.lambda_bounds(l)?),
        None => None,
    };
    Ok(ThresholdReport {
        cp: cp.value,
        cp_std_error: cp.std_error,
        cp_lambda_lower: bounds.map(|b| b.lower),
        cp_lambda_upper: bounds.map(|b| b.upper),
        cp_lambda_std_error: bounds.map(|b| b.std_error),
        lambda: at,
        t_star: opt.map(|o| o.t_star).or(bounds.map(|b| b.t_star)),
        c_star: opt.map(|o| o.c_star).or(bounds.map(|b| b.c_star)),
        lambda_star: opt.map(|o| o.lambda_star),
        m: model.m(),
        n: model.n(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMargin {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    /// `lower + slack - (cp - 1)`.
    pub unconditional: f64,
    /// Whether `m >= C_p(lambda)` can hold given the sandwich, `m >= lower`.
    pub premise: bool,
    /// `m - (cp - 1) + slack`, meaningful when `premise` holds.
    pub implication: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Report {
    pub m: usize,
    pub cp: f64,
    pub slack: f64,
    pub optimal: OptimalLambda,
    pub optimal_upper: f64,
    pub per_lambda: Vec<LambdaMargin>,
    /// `cp + 5 + slack - upper(lambda*)`.
    pub optimal_unconditional: f64,
    /// Whether `m >= C_p` can hold, `m >= cp - slack`.
    pub optimal_premise: bool,
    /// `m + 5 + slack - upper(lambda*)`.
    pub optimal_implication: f64,
    /// Gap-1 form of the second relation, checked only when the signal
    /// width estimate `sqrt(min_t eta^2(t df) - 1)` is at least 4:
    /// `m + 1 + slack - upper(lambda*)`.
    pub sharpened_implication: Option<f64>,
}

impl Theorem3Report {
    /// Both relations in the stated implication form.
    pub fn passed(&self) -> bool {
        let first = self
            .per_lambda
            .iter()
            .all(|l| !l.premise || l.implication >= 0.0);
        let second = !self.optimal_premise || self.optimal_implication >= 0.0;
        first && second
    }

    /// `lower + slack >= cp - 1` for every lambda and
    /// `upper(lambda*) <= cp + 5 + slack`, without the premises.
    pub fn passed_unconditional(&self) -> bool {
        self.per_lambda.iter().all(|l| l.unconditional >= 0.0) && self.optimal_unconditional >= 0.0
    }
}

/// Numerical check of the two relations between the programs:
/// (i) `m >= C_p(lambda)` implies `m >= C_p - 1`, for each `lambda` in the
/// grid; (ii) `m >= C_p` implies `m >= C_p(lambda*) - 5`.
///
/// Default slack is `2 (3 max_se + max sandwich gap)` over all evaluated
/// `lambda` including `lambda*`.
pub fn theorem3_check(
    signal: &StructureSpec,
    corruption: &StructureSpec,
    m: usize,
    lambda_grid: &[f64],
    slack: Option<f64>,
    cfg: &EstimatorConfig,
) -> Result<Theorem3Report> {
    check_m(corruption, m)?;
    if let Some(s) = slack {
        if !(s >= 0.0) {
            return Err(invalid("slack", "must be nonnegative"));
        }
    }
    let model = PhaseModel::new(signal, corruption, cfg)?;
    let cp = model.cp();
    let optimal = model.optimal_lambda()?;
    let at_optimal = model.lambda_bounds(optimal.lambda_star)?;
    let bounds = lambda_grid
        .iter()
        .map(|&l| model.lambda_bounds(l))
        .collect::<Result<Vec<_>>>()?;

    let slack = slack.unwrap_or_else(|| {
        let all = bounds.iter().chain(std::iter::once(&at_optimal));
        let max_se = all
            .clone()
            .map(|b| b.std_error)
            .fold(cp.std_error, f64::max);
        let max_gap = all.map(|b| b.upper - b.lower).fold(0.0, f64::max);
        2.0 * (3.0 * max_se + max_gap)
    });
    let mf = m as f64;
    let per_lambda = bounds
        .iter()
        .map(|b| LambdaMargin {
            lambda: b.lambda,
            lower: b.lower,
            upper: b.upper,
            unconditional: b.lower + slack - (cp.value - 1.0),
            premise: mf >= b.lower,
            implication: mf - (cp.value - 1.0) + slack,
        })
        .collect();
    let signal_width_sq = model.min_eta(&model.signal_eta).0.value - 1.0;
    let sharpened_implication = if signal_width_sq >= 16.0 {
        Some(mf + 1.0 + slack - at_optimal.upper)
    } else {
        None
    };
    Ok(Theorem3Report {
        m,
        cp: cp.value,
        slack,
        optimal,
        optimal_upper: at_optimal.upper,
        per_lambda,
        optimal_unconditional: cp.value + 5.0 + slack - at_optimal.upper,
        optimal_premise: mf >= cp.value - slack,
        optimal_implication: mf + 5.0 + slack - at_optimal.upper,
        sharpened_implication,
    })
}
