//! Plain-text instance files.
//!
//! ```text
//! phaselab-instance 1
//! m <m>
//! n <n>
//! ensemble <gaussian|bernoulli>
//! seed <u64>
//! shape vector | shape matrix <rows> <cols>
//! phi
//! <m lines of n values: Phi row-major>
//! x_true
//! <n values>
//! v_true
//! <m values>
//! y
//! <m values>
//! ```
//!
//! Values are written in shortest round-trip exponent form, so a written
//! instance reads back bit for bit. On read, `y` must equal the value
//! reassembled from `Phi`, `x_true` and `v_true`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::{ProblemInstance, SignalShape};
use crate::error::{Error, Result};

const MAGIC: &str = "phaselab-instance 1";

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "instance file",
        detail: detail.into(),
    }
}

fn write_values<'a, W: Write>(out: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let line: Vec<String> = values.map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", line.join(" "))?;
    Ok(())
}

pub fn write_instance<W: Write>(inst: &ProblemInstance, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "m {}", inst.m)?;
    writeln!(out, "n {}", inst.n)?;
    writeln!(out, "ensemble {}", inst.ensemble)?;
    writeln!(out, "seed {}", inst.seed)?;
    match inst.shape {
        SignalShape::Vector => writeln!(out, "shape vector")?,
        SignalShape::Matrix { rows, cols } => writeln!(out, "shape matrix {rows} {cols}")?,
    }
    writeln!(out, "phi")?;
    for i in 0..inst.m {
        write_values(&mut out, inst.phi.row(i).iter())?;
    }
    for (label, values) in [
        ("x_true", &inst.x_true),
        ("v_true", &inst.v_true),
        ("y", &inst.y),
    ] {
        writeln!(out, "{label}")?;
        write_values(&mut out, values.iter())?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.line_no += 1;
        match self.inner.next() {
            Some(line) => Ok(line?.trim_end().to_string()),
            None => Err(format_err(format!("unexpected end of file at line {}", self.line_no))),
        }
    }

    fn field(&mut self, key: &str) -> Result<String> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, value)) if k == key => Ok(value.to_string()),
            _ => Err(format_err(format!("line {}: expected `{key} <value>`", self.line_no))),
        }
    }

    fn label(&mut self, key: &str) -> Result<()> {
        if self.next_line()? != key {
            return Err(format_err(format!("line {}: expected `{key}`", self.line_no)));
        }
        Ok(())
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format_err(format!("line {}: {e}", self.line_no)))?;
        if values.len() != count {
            return Err(format_err(format!(
                "line {}: expected {count} values, found {}",
                self.line_no,
                values.len()
            )));
        }
        Ok(values)
    }
}

fn parse_usize(value: &str, key: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| format_err(format!("{key} must be a nonnegative integer")))
}

pub fn read_instance<R: BufRead>(input: R) -> Result<ProblemInstance> {
    let mut lines = Lines {
        inner: input.lines(),
        line_no: 0,
    };
    if lines.next_line()? != MAGIC {
        return Err(format_err("missing header line"));
    }
    let m = parse_usize(&lines.field("m")?, "m")?;
    let n = parse_usize(&lines.field("n")?, "n")?;
    let ensemble = lines
        .field("ensemble")?
        .parse()
        .map_err(|e: Error| format_err(e.to_string()))?;
    let seed = lines
        .field("seed")?
        .parse::<u64>()
        .map_err(|_| format_err("seed must be an unsigned 64-bit integer"))?;
    let shape_text = lines.field("shape")?;
    let shape = match shape_text.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["vector"] => SignalShape::Vector,
        ["matrix", rows, cols] => SignalShape::Matrix {
            rows: parse_usize(rows, "rows")?,
            cols: parse_usize(cols, "cols")?,
        },
        _ => return Err(format_err(format!("unknown shape `{shape_text}`"))),
    };
    if m == 0 || n == 0 {
        return Err(format_err("m and n must be positive"));
    }

    lines.label("phi")?;
    let mut rows = Vec::with_capacity(m * n);
    for _ in 0..m {
        rows.extend(lines.values(n)?);
    }
    let phi = DMatrix::from_row_slice(m, n, &rows);
    lines.label("x_true")?;
    let x_true = DVector::from_vec(lines.values(n)?);
    lines.label("v_true")?;
    let v_true = DVector::from_vec(lines.values(m)?);
    lines.label("y")?;
    let y = DVector::from_vec(lines.values(m)?);

    let inst = ProblemInstance::assemble(phi, x_true, v_true, shape, ensemble, seed)?;
    if inst.y != y {
        return Err(format_err("y differs from Phi x_true + sqrt(m) v_true"));
    }
    Ok(inst)
}
