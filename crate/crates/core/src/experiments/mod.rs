//! Phase-diagram sweeps.
//!
//! A grid is indexed by `(axis1, axis2)`: signal sparsity or rank against
//! corruption sparsity. Every `(axis1, axis2, trial)` triple owns the
//! instance seed `mix_path(seed, [axis1, axis2, trial])`, so results do not
//! depend on the order or parallelism of evaluation, and different
//! procedures run on the same grid see the same instances.

mod boundary;
mod crossing;
mod grid;

use std::fmt;
use std::str::FromStr;

use crate::ensembles::{Ensemble, MonteCarloConfig, DEFAULT_MC_SAMPLES};
use crate::error::{invalid, Error, Result};
use crate::geometry::StructureSpec;
use crate::rng::mix;
use crate::thresholds::EstimatorConfig;

pub use boundary::{theoretical_boundary, BoundaryCurve, CurveKind, Orientation};
pub use crossing::{crossing_compare, empirical_crossing, ColumnCrossing, CrossingReport};
pub use grid::{
    read_grid_csv, run_grid, trial_seed, write_curve_csv, write_grid_csv, CellDiagnostics,
    PhaseGrid, RunOptions,
};

/// Sub-stream index reserved for threshold Monte Carlo estimates.
const THRESHOLD_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    SparseSparse,
    LowRankSparse,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::SparseSparse => "sparse-sparse",
            Model::LowRankSparse => "lowrank-sparse",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse-sparse" => Ok(Model::SparseSparse),
            "lowrank-sparse" => Ok(Model::LowRankSparse),
            other => Err(invalid(
                "model",
                format!("expected sparse-sparse or lowrank-sparse, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Procedure {
    Constrained,
    Penalized(f64),
    /// Penalized with the optimal tradeoff computed per cell.
    PenalizedOptimal,
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Procedure::Constrained => f.write_str("constrained"),
            Procedure::Penalized(l) => write!(f, "penalized({l})"),
            Procedure::PenalizedOptimal => f.write_str("penalized(optimal)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub model: Model,
    /// Signal length, or the number of rows for matrix signals.
    pub n: usize,
    /// Number of columns for matrix signals; ignored for vectors.
    pub n2: usize,
    pub m: usize,
    /// Signal sparsity or rank values.
    pub axis1: Vec<usize>,
    /// Corruption sparsity values.
    pub axis2: Vec<usize>,
    pub trials: usize,
    pub procedure: Procedure,
    pub ensemble: Ensemble,
    pub seed: u64,
    pub success_tol: f64,
    /// Monte Carlo samples for threshold estimates that need them.
    pub mc_samples: usize,
}

impl GridConfig {
    pub fn sparse(n: usize, m: usize, axis1: Vec<usize>, axis2: Vec<usize>, procedure: Procedure, seed: u64) -> Self {
        Self {
            model: Model::SparseSparse,
            n,
            n2: n,
            m,
            axis1,
            axis2,
            trials: 20,
            procedure,
            ensemble: Ensemble::Gaussian,
            seed,
            success_tol: 1e-3,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }

    pub fn low_rank(
        n1: usize,
        n2: usize,
        m: usize,
        axis1: Vec<usize>,
        axis2: Vec<usize>,
        procedure: Procedure,
        seed: u64,
    ) -> Self {
        Self {
            model: Model::LowRankSparse,
            n: n1,
            n2,
            ..Self::sparse(n1, m, axis1, axis2, procedure, seed)
        }
    }

    pub fn axis_labels(&self) -> (&'static str, &'static str) {
        match self.model {
            Model::SparseSparse => ("s", "k"),
            Model::LowRankSparse => ("r", "rho"),
        }
    }

    pub fn signal_dim(&self) -> usize {
        match self.model {
            Model::SparseSparse => self.n,
            Model::LowRankSparse => self.n * self.n2,
        }
    }

    /// Largest signal sparsity or rank.
    pub fn max_complexity(&self) -> usize {
        match self.model {
            Model::SparseSparse => self.n,
            Model::LowRankSparse => self.n.min(self.n2),
        }
    }

    pub fn signal_spec(&self, complexity: usize) -> Result<StructureSpec> {
        match self.model {
            Model::SparseSparse => StructureSpec::sparse(self.n, complexity),
            Model::LowRankSparse => StructureSpec::low_rank(self.n, self.n2, complexity),
        }
    }

    pub fn corruption_spec(&self, sparsity: usize) -> Result<StructureSpec> {
        StructureSpec::sparse(self.m, sparsity)
    }

    pub fn estimator(&self) -> Result<EstimatorConfig> {
        Ok(EstimatorConfig::new(MonteCarloConfig::new(
            self.mc_samples,
            mix(self.seed, THRESHOLD_STREAM),
        )?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("m", "must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be positive"));
        }
        if !(self.success_tol > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if let Procedure::Penalized(l) = self.procedure {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("lambda", format!("must be positive and finite, got {l}")));
            }
        }
        for (key, axis) in [("axis1", &self.axis1), ("axis2", &self.axis2)] {
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(key, "values must be strictly increasing"));
            }
        }
        for &a in &self.axis1 {
            self.signal_spec(a)?;
        }
        for &b in &self.axis2 {
            self.corruption_spec(b)?;
        }
        self.estimator()?.validate()
    }

    /// Configuration as ordered `key=value` pairs.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let (procedure, lambda) = match self.procedure {
            Procedure::Constrained => ("constrained", String::new()),
            Procedure::Penalized(l) => ("penalized", l.to_string()),
            Procedure::PenalizedOptimal => ("penalized", "optimal".to_string()),
        };
        let mut out = vec![("model", self.model.to_string()), ("n", self.n.to_string())];
        if self.model == Model::LowRankSparse {
            out.push(("n2", self.n2.to_string()));
        }
        out.extend([
            ("m", self.m.to_string()),
            ("axis1", list(&self.axis1)),
            ("axis2", list(&self.axis2)),
            ("trials", self.trials.to_string()),
            ("procedure", procedure.to_string()),
        ]);
        if !lambda.is_empty() {
            out.push(("lambda", lambda));
        }
        out.extend([
            ("ensemble", self.ensemble.to_string()),
            ("seed", self.seed.to_string()),
            ("tolerance", self.success_tol.to_string()),
            ("samples", self.mc_samples.to_string()),
        ]);
        out
    }

    pub fn echo_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Inclusive integer range as an axis.
pub fn axis_range(lo: usize, hi: usize, step: usize) -> Vec<usize> {
    (lo..=hi).step_by(step.max(1)).collect()
}
