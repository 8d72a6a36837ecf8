//! Seeded generation of structured signals, corruptions and sensing matrices.
//!
//! Sub-seeds used by [`make_instance`]: the signal draws from
//! `mix(seed, 0)`, the corruption from `mix(seed, 1)` and the sensing matrix
//! from `mix(seed, 2)`. [`gen_lowrank`] draws its two factors from
//! `mix(seed, 0)` and `mix(seed, 1)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::geometry::StructureSpec;
use crate::rng::{mix, RandomStream};
use crate::solvers::{ProblemInstance, SignalShape};

pub const DEFAULT_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub seed: u64,
}

impl MonteCarloConfig {
    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        let cfg = Self { samples, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            samples: DEFAULT_MC_SAMPLES,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("samples", "Monte Carlo sample count must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ensemble {
    Gaussian,
    Bernoulli,
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Bernoulli => "bernoulli",
        })
    }
}

impl FromStr for Ensemble {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "bernoulli" => Ok(Ensemble::Bernoulli),
            other => Err(invalid(
                "ensemble",
                format!("expected gaussian or bernoulli, got {other:?}"),
            )),
        }
    }
}

/// An s-sparse vector with a uniformly random support (partial Fisher–Yates)
/// and standard normal nonzeros, drawn in support order.
pub fn gen_sparse(n: usize, s: usize, seed: u64) -> Result<DVector<f64>> {
    if s > n {
        return Err(invalid("sparsity", format!("sparsity {s} exceeds dimension {n}")));
    }
    let mut stream = RandomStream::new(seed);
    let mut index: Vec<usize> = (0..n).collect();
    for i in 0..s {
        let j = i + stream.below((n - i) as u64) as usize;
        index.swap(i, j);
    }
    let mut x = DVector::zeros(n);
    for &i in &index[..s] {
        x[i] = stream.normal();
    }
    Ok(x)
}

fn orthonormal_columns(rows: usize, r: usize, stream: &mut RandomStream) -> DMatrix<f64> {
    let mut buf = vec![0.0; rows * r];
    stream.fill_normal(&mut buf);
    DMatrix::from_column_slice(rows, r, &buf).qr().q()
}

/// `U1 U2^T` with `U1` (n1 x r) and `U2` (n2 x r) having orthonormal columns,
/// obtained by QR of Gaussian blocks.
pub fn gen_lowrank(n1: usize, n2: usize, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n1 == 0 || n2 == 0 {
        return Err(invalid("rows", "matrix dimensions must be positive"));
    }
    if r > n1.min(n2) {
        return Err(invalid(
            "rank",
            format!("rank {r} exceeds min({n1}, {n2})"),
        ));
    }
    if r == 0 {
        return Ok(DMatrix::zeros(n1, n2));
    }
    let u1 = orthonormal_columns(n1, r, &mut RandomStream::substream(seed, 0));
    let u2 = orthonormal_columns(n2, r, &mut RandomStream::substream(seed, 1));
    Ok(&u1 * u2.transpose())
}

/// Sensing matrix filled in row-major order from one stream.
pub fn gen_sensing(m: usize, n: usize, ensemble: Ensemble, seed: u64) -> Result<DMatrix<f64>> {
    if m == 0 || n == 0 {
        return Err(invalid("m", "sensing matrix dimensions must be positive"));
    }
    let mut stream = RandomStream::new(seed);
    let mut phi = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            phi[(i, j)] = match ensemble {
                Ensemble::Gaussian => stream.normal(),
                Ensemble::Bernoulli => stream.sign(),
            };
        }
    }
    Ok(phi)
}

/// Draws `x*`, `v*` and `Phi` and assembles `y = Phi vec(x*) + sqrt(m) v*`.
/// Matrix signals are vectorized column-major.
pub fn make_instance(
    signal: &StructureSpec,
    corruption: &StructureSpec,
    m: usize,
    ensemble: Ensemble,
    seed: u64,
) -> Result<ProblemInstance> {
    signal.validate()?;
    corruption.validate()?;
    let k = match *corruption {
        StructureSpec::SparseL1 { dim, sparsity } => {
            if dim != m {
                return Err(invalid(
                    "m",
                    format!("corruption dimension {dim} differs from m = {m}"),
                ));
            }
            sparsity
        }
        StructureSpec::LowRankNuclear { .. } => {
            return Err(invalid("corruption", "instances support sparse corruption only"))
        }
    };
    let (x_true, shape) = match *signal {
        StructureSpec::SparseL1 { dim, sparsity } => {
            (gen_sparse(dim, sparsity, mix(seed, 0))?, SignalShape::Vector)
        }
        StructureSpec::LowRankNuclear { rows, cols, rank } => {
            let x = gen_lowrank(rows, cols, rank, mix(seed, 0))?;
            (
                DVector::from_column_slice(x.as_slice()),
                SignalShape::Matrix { rows, cols },
            )
        }
    };
    let v_true = gen_sparse(m, k, mix(seed, 1))?;
    let phi = gen_sensing(m, signal.ambient_dim(), ensemble, mix(seed, 2))?;
    ProblemInstance::assemble(phi, x_true, v_true, shape, ensemble, seed)
}
