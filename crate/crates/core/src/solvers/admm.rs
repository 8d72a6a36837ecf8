//! Douglas–Rachford splitting (ADMM form) between the separable objective
//! and the affine observation constraint.
//!
//! With `h` the separable objective over `z = (x, v)` and `P` the projection
//! onto `{Phi x + sqrt(m) v = y}`, one sweep is
//!
//! ```text
//! a = prox_{h/rho}(b - u)
//! b = P(a + u)
//! u = u + a - b
//! ```
//!
//! `zeta = b + u` is the governing Douglas–Rachford sequence; its successive
//! differences are nonincreasing while `rho` is held fixed. The returned
//! signal is the projected block `b_x`, so the affine constraint holds to
//! projection accuracy, and `v_hat` is recomputed from it.

use nalgebra::{DMatrix, DVector};

use super::certificate::{signs, subdifferential_gap};
use super::{relative_error, signal_norm, ProblemInstance, SolveResult, SolverSettings};
use crate::error::{invalid, Result};
use crate::geometry::StructureSpec;
use crate::proxops::{
    project_l1_ball_in_place, project_nuclear_ball, prox_l1_in_place, prox_nuclear,
    AffineProjector,
};

#[derive(Debug, Clone, Copy)]
enum SignalTerm {
    /// `weight * f(x)`.
    Penalty(f64),
    /// Indicator of `f(x) <= radius`.
    Ball(f64),
}

struct Objective {
    signal: StructureSpec,
    signal_term: SignalTerm,
    corruption_weight: f64,
}

impl Objective {
    fn prox(&self, x: &mut DVector<f64>, v: &mut DVector<f64>, rho: f64, scratch: &mut Vec<f64>) -> Result<()> {
        match (self.signal, self.signal_term) {
            (StructureSpec::SparseL1 { .. }, SignalTerm::Penalty(w)) => {
                prox_l1_in_place(x.as_mut_slice(), w / rho)
            }
            (StructureSpec::SparseL1 { .. }, SignalTerm::Ball(r)) => {
                project_l1_ball_in_place(x.as_mut_slice(), r, scratch)
            }
            (StructureSpec::LowRankNuclear { rows, cols, .. }, term) => {
                let mat = DMatrix::from_column_slice(rows, cols, x.as_slice());
                let out = match term {
                    SignalTerm::Penalty(w) => prox_nuclear(&mat, w / rho)?,
                    SignalTerm::Ball(r) => project_nuclear_ball(&mat, r)?,
                };
                x.as_mut_slice().copy_from_slice(out.as_slice());
            }
        }
        prox_l1_in_place(v.as_mut_slice(), self.corruption_weight / rho);
        Ok(())
    }

    fn value(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(match self.signal_term {
            SignalTerm::Penalty(w) => w * signal_norm(&self.signal, x)? + self.corruption_weight * v.lp_norm(1),
            SignalTerm::Ball(_) => self.corruption_weight * v.lp_norm(1),
        })
    }
}

struct Iterates {
    a_x: DVector<f64>,
    a_v: DVector<f64>,
    b_x: DVector<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
    trace_rho: Vec<f64>,
}

fn norm2(x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (x.norm_squared() + v.norm_squared()).sqrt()
}

fn run(
    projector: &AffineProjector,
    objective: &Objective,
    settings: &SolverSettings,
) -> Result<Iterates> {
    settings.validate()?;
    let (m, n) = (projector.m(), projector.n());
    let y_scale = 1.0 + projector.y().norm();
    let mut rho = settings.rho;

    let (mut b_x, mut b_v) = projector.project(&DVector::zeros(n), &DVector::zeros(m));
    let mut u_x = DVector::zeros(n);
    let mut u_v = DVector::zeros(m);
    let mut a_x = DVector::zeros(n);
    let mut a_v = DVector::zeros(m);
    let mut prev_x = DVector::zeros(n);
    let mut prev_v = DVector::zeros(m);
    let mut scratch = Vec::with_capacity(n);
    let mut trace = Vec::new();
    let mut trace_rho = Vec::new();

    for k in 1..=settings.max_iterations {
        a_x.copy_from(&b_x);
        a_x -= &u_x;
        a_v.copy_from(&b_v);
        a_v -= &u_v;
        objective.prox(&mut a_x, &mut a_v, rho, &mut scratch)?;

        prev_x.copy_from(&b_x);
        prev_v.copy_from(&b_v);
        b_x.copy_from(&a_x);
        b_x += &u_x;
        b_v.copy_from(&a_v);
        b_v += &u_v;
        projector.project_mut(&mut b_x, &mut b_v);

        // u += a - b
        u_x += &a_x;
        u_x -= &b_x;
        u_v += &a_v;
        u_v -= &b_v;

        let primal = ((&a_x - &b_x).norm_squared() + (&a_v - &b_v).norm_squared()).sqrt();
        let step = ((&b_x - &prev_x).norm_squared() + (&b_v - &prev_v).norm_squared()).sqrt();
        if settings.record_trace {
            // zeta_{k+1} - zeta_k = a - b_prev
            let merit =
                ((&a_x - &prev_x).norm_squared() + (&a_v - &prev_v).norm_squared()).sqrt();
            trace.push(merit);
            trace_rho.push(rho);
        }

        let scale = 1.0 + norm2(&b_x, &b_v);
        if primal.max(step) <= settings.change_tol * scale
            && projector.residual(&a_x, &a_v) <= settings.residual_tol * y_scale
        {
            return Ok(Iterates {
                a_x,
                a_v,
                b_x,
                iterations: k,
                converged: true,
                trace,
                trace_rho,
            });
        }

        if settings.balance_interval > 0 && k % settings.balance_interval == 0 {
            let dual = rho * step;
            if primal > settings.balance_ratio * dual {
                rho *= 2.0;
                u_x *= 0.5;
                u_v *= 0.5;
            } else if dual > settings.balance_ratio * primal {
                rho *= 0.5;
                u_x *= 2.0;
                u_v *= 2.0;
            }
        }
    }
    log::debug!("splitting stopped at the iteration limit {}", settings.max_iterations);
    Ok(Iterates {
        a_x,
        a_v,
        b_x,
        iterations: settings.max_iterations,
        converged: false,
        trace,
        trace_rho,
    })
}

fn finish(
    inst: &ProblemInstance,
    projector: &AffineProjector,
    objective: &Objective,
    settings: &SolverSettings,
    it: Iterates,
    budget: Option<f64>,
    certificate_scale: Option<f64>,
) -> Result<SolveResult> {
    let x_hat = it.b_x;
    let mut v_hat = &inst.y - &inst.phi * &x_hat;
    v_hat /= inst.sqrt_m();
    let affine_residual = projector.residual(&x_hat, &v_hat);
    let ball_violation = match budget {
        Some(r) => (signal_norm(&objective.signal, &x_hat)? - r).max(0.0),
        None => 0.0,
    };
    let rel_err_x = relative_error(&x_hat, &inst.x_true);
    let certificate_residual = match certificate_scale {
        Some(c) => {
            Some(subdifferential_gap(&inst.phi, &signs(&it.a_x), &signs(&it.a_v), c).margin)
        }
        None => None,
    };
    Ok(SolveResult {
        objective: objective.value(&x_hat, &v_hat)?,
        x_hat,
        v_hat,
        iterations: it.iterations,
        affine_residual,
        ball_violation,
        converged: it.converged,
        success: rel_err_x <= settings.success_tol,
        rel_err_x,
        certificate_residual,
        trace: it.trace,
        trace_rho: it.trace_rho,
    })
}

/// `min ||v||_1` subject to `Phi x + sqrt(m) v = y` and `f(x) <= budget`.
///
/// Hitting the iteration limit is not an error: the last iterate is returned
/// with `converged = false`.
pub fn solve_constrained(
    inst: &ProblemInstance,
    signal: &StructureSpec,
    budget: f64,
    settings: &SolverSettings,
) -> Result<SolveResult> {
    inst.check_signal(signal)?;
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(invalid("budget", "must be finite and nonnegative"));
    }
    let projector = AffineProjector::new(&inst.phi, &inst.y)?;
    let objective = Objective {
        signal: *signal,
        signal_term: SignalTerm::Ball(budget),
        corruption_weight: 1.0,
    };
    let it = run(&projector, &objective, settings)?;
    finish(inst, &projector, &objective, settings, it, Some(budget), None)
}

/// `min f(x) + lambda ||v||_1` subject to `Phi x + sqrt(m) v = y`.
pub fn solve_penalized(
    inst: &ProblemInstance,
    signal: &StructureSpec,
    lambda: f64,
    settings: &SolverSettings,
) -> Result<SolveResult> {
    inst.check_signal(signal)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive and finite"));
    }
    let projector = AffineProjector::new(&inst.phi, &inst.y)?;
    let objective = Objective {
        signal: *signal,
        signal_term: SignalTerm::Penalty(1.0),
        corruption_weight: lambda,
    };
    let it = run(&projector, &objective, settings)?;
    let certificate_scale = match signal {
        StructureSpec::SparseL1 { .. } => Some(inst.sqrt_m() / lambda),
        StructureSpec::LowRankNuclear { .. } => None,
    };
    finish(inst, &projector, &objective, settings, it, None, certificate_scale)
}
