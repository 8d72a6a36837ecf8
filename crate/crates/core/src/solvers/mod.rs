//! Recovery programs for the corrupted observation `y = Phi x* + sqrt(m) v*`.
//!
//! * [`solve_constrained`]: `min ||v||_1` subject to the observation and
//!   `f(x) <= budget`.
//! * [`solve_penalized`]: `min f(x) + lambda ||v||_1` subject to the
//!   observation.
//!
//! `f` is the l1 norm for vector signals and the nuclear norm for matrix
//! signals; matrices enter the affine operator vectorized column-major.

mod admm;
mod certificate;
mod instance_file;

use nalgebra::{DMatrix, DVector};

use crate::ensembles::Ensemble;
use crate::error::{invalid, Result};
use crate::geometry::StructureSpec;
use crate::linalg::nuclear_norm;

pub use admm::{solve_constrained, solve_penalized};
pub use certificate::{certificate_check, Certificate};
pub use instance_file::{read_instance, write_instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalShape {
    Vector,
    /// Stored column-major in `x_true`.
    Matrix { rows: usize, cols: usize },
}

impl SignalShape {
    pub fn len(&self, n: usize) -> usize {
        match *self {
            SignalShape::Vector => n,
            SignalShape::Matrix { rows, cols } => rows * cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub phi: DMatrix<f64>,
    pub x_true: DVector<f64>,
    pub v_true: DVector<f64>,
    pub y: DVector<f64>,
    pub m: usize,
    pub n: usize,
    pub shape: SignalShape,
    pub ensemble: Ensemble,
    pub seed: u64,
}

impl ProblemInstance {
    /// Builds an instance with `y = Phi x + sqrt(m) v`.
    pub fn assemble(
        phi: DMatrix<f64>,
        x_true: DVector<f64>,
        v_true: DVector<f64>,
        shape: SignalShape,
        ensemble: Ensemble,
        seed: u64,
    ) -> Result<Self> {
        let (m, n) = phi.shape();
        if m == 0 || n == 0 {
            return Err(invalid("m", "m and n must be positive"));
        }
        if x_true.len() != n {
            return Err(invalid(
                "n",
                format!("signal length {} differs from n = {n}", x_true.len()),
            ));
        }
        if v_true.len() != m {
            return Err(invalid(
                "m",
                format!("corruption length {} differs from m = {m}", v_true.len()),
            ));
        }
        if shape.len(n) != n {
            return Err(invalid("shape", "matrix shape does not match n"));
        }
        let y = &phi * &x_true + v_true.scale((m as f64).sqrt());
        Ok(Self {
            phi,
            x_true,
            v_true,
            y,
            m,
            n,
            shape,
            ensemble,
            seed,
        })
    }

    /// `x*` as a matrix for matrix signals.
    pub fn x_true_matrix(&self) -> Option<DMatrix<f64>> {
        match self.shape {
            SignalShape::Vector => None,
            SignalShape::Matrix { rows, cols } => {
                Some(DMatrix::from_column_slice(rows, cols, self.x_true.as_slice()))
            }
        }
    }

    pub fn sqrt_m(&self) -> f64 {
        (self.m as f64).sqrt()
    }

    /// `f(x*)`, the side information used by the constrained program.
    pub fn signal_budget(&self, signal: &StructureSpec) -> Result<f64> {
        signal_norm(signal, &self.x_true)
    }

    fn check_signal(&self, signal: &StructureSpec) -> Result<()> {
        signal.validate()?;
        let ok = match (*signal, self.shape) {
            (StructureSpec::SparseL1 { dim, .. }, SignalShape::Vector) => dim == self.n,
            (
                StructureSpec::LowRankNuclear { rows, cols, .. },
                SignalShape::Matrix { rows: r, cols: c },
            ) => rows == r && cols == c,
            _ => false,
        };
        if !ok {
            return Err(invalid("signal", "signal spec does not match the instance"));
        }
        Ok(())
    }
}

/// `||x||_1` or the nuclear norm of the column-major reshaping of `x`.
pub fn signal_norm(signal: &StructureSpec, x: &DVector<f64>) -> Result<f64> {
    match *signal {
        StructureSpec::SparseL1 { .. } => Ok(x.lp_norm(1)),
        StructureSpec::LowRankNuclear { rows, cols, .. } => {
            if x.len() != rows * cols {
                return Err(invalid("signal", "length does not match the matrix shape"));
            }
            nuclear_norm(&DMatrix::from_column_slice(rows, cols, x.as_slice()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Relative change of the projected iterate, `||b_k - b_{k-1}|| / (1 + ||b_k||)`.
    pub change_tol: f64,
    /// Affine residual of the prox iterate relative to `1 + ||y||`.
    pub residual_tol: f64,
    pub rho: f64,
    /// Rebalance `rho` when one residual exceeds the other by this factor.
    pub balance_ratio: f64,
    /// Iterations between rebalancing checks; 0 disables rebalancing.
    pub balance_interval: usize,
    pub success_tol: f64,
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            change_tol: 1e-9,
            residual_tol: 1e-8,
            rho: 1.0,
            balance_ratio: 10.0,
            balance_interval: 50,
            success_tol: 1e-3,
            record_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid("rho", "must be positive and finite"));
        }
        if !(self.balance_ratio > 1.0) {
            return Err(invalid("balance_ratio", "must exceed 1"));
        }
        if !(self.change_tol > 0.0 && self.residual_tol > 0.0 && self.success_tol > 0.0) {
            return Err(invalid("tolerance", "tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Column-major for matrix signals.
    pub x_hat: DVector<f64>,
    pub v_hat: DVector<f64>,
    pub iterations: usize,
    pub affine_residual: f64,
    /// Violation of `f(x_hat) <= budget`; 0 for the penalized program.
    pub ball_violation: f64,
    pub objective: f64,
    pub converged: bool,
    pub success: bool,
    pub rel_err_x: f64,
    /// Distance from 0 to `Phi^T d||v||_1 - (sqrt(m)/lambda) d||x||_1` at the
    /// returned point; penalized l1 runs only.
    pub certificate_residual: Option<f64>,
    /// `||zeta_{k+1} - zeta_k||` of the governing splitting sequence, when
    /// recorded.
    pub trace: Vec<f64>,
    /// Penalty parameter in effect at each trace entry.
    pub trace_rho: Vec<f64>,
}

impl SolveResult {
    pub fn x_hat_matrix(&self, shape: SignalShape) -> Option<DMatrix<f64>> {
        match shape {
            SignalShape::Vector => None,
            SignalShape::Matrix { rows, cols } => {
                Some(DMatrix::from_column_slice(rows, cols, self.x_hat.as_slice()))
            }
        }
    }
}

/// `||x_hat - x*|| / ||x*||`, or `||x_hat||` when `x* = 0`.
pub fn relative_error(x_hat: &DVector<f64>, x_true: &DVector<f64>) -> f64 {
    let err = (x_hat - x_true).norm();
    let scale = x_true.norm();
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}
