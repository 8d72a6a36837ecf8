//! Grid execution, checkpointing and CSV persistence.
//!
//! A checkpoint is the grid CSV itself plus two sidecars next to it:
//! `<file>.config` (configuration echo, `key=value` lines) and
//! `<file>.diagnostics.csv` (`axis1,axis2,solver_errors,non_converged`).
//! Finished cells are appended as they complete; when the grid is complete
//! both CSV files are rewritten in canonical order, axis1-major.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{GridConfig, Procedure};
use crate::ensembles::{make_instance, Ensemble};
use crate::error::{invalid, Error, Result};
use crate::rng::mix_path;
use crate::solvers::{solve_constrained, solve_penalized, SolverSettings};
use crate::thresholds::{EstimatorConfig, PhaseModel};

pub const GRID_HEADER: [&str; 5] = ["axis1", "axis2", "trials", "successes", "success_rate"];
const DIAG_HEADER: [&str; 4] = ["axis1", "axis2", "solver_errors", "non_converged"];

pub fn trial_seed(master: u64, axis1: usize, axis2: usize, trial: usize) -> u64 {
    mix_path(master, &[axis1 as u64, axis2 as u64, trial as u64])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellDiagnostics {
    /// Trials whose instance, tradeoff or solve raised an error.
    pub solver_errors: usize,
    /// Trials that stopped at the iteration limit.
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub axis1_label: String,
    pub axis2_label: String,
    pub axis1: Vec<usize>,
    pub axis2: Vec<usize>,
    pub trials_per_cell: usize,
    /// `successes[i][j]` for `axis1[i]`, `axis2[j]`.
    pub successes: Vec<Vec<usize>>,
    pub done: Vec<Vec<bool>>,
    pub diagnostics: Vec<Vec<CellDiagnostics>>,
    pub procedure: Procedure,
    pub ensemble: Ensemble,
    pub m: usize,
    pub n: usize,
    pub master_seed: u64,
}

impl PhaseGrid {
    fn empty(cfg: &GridConfig) -> Self {
        let (l1, l2) = cfg.axis_labels();
        let shape = |v| vec![vec![v; cfg.axis2.len()]; cfg.axis1.len()];
        Self {
            axis1_label: l1.to_string(),
            axis2_label: l2.to_string(),
            axis1: cfg.axis1.clone(),
            axis2: cfg.axis2.clone(),
            trials_per_cell: cfg.trials,
            successes: shape(0),
            done: vec![vec![false; cfg.axis2.len()]; cfg.axis1.len()],
            diagnostics: vec![vec![CellDiagnostics::default(); cfg.axis2.len()]; cfg.axis1.len()],
            procedure: cfg.procedure,
            ensemble: cfg.ensemble,
            m: cfg.m,
            n: cfg.signal_dim(),
            master_seed: cfg.seed,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.done.iter().flatten().all(|&d| d)
    }

    pub fn success_rate(&self, i: usize, j: usize) -> f64 {
        self.successes[i][j] as f64 / self.trials_per_cell as f64
    }

    pub fn total_diagnostics(&self) -> CellDiagnostics {
        self.diagnostics
            .iter()
            .flatten()
            .fold(CellDiagnostics::default(), |acc, d| CellDiagnostics {
                solver_errors: acc.solver_errors + d.solver_errors,
                non_converged: acc.non_converged + d.non_converged,
            })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses all available cores.
    pub jobs: usize,
    pub checkpoint: Option<PathBuf>,
    /// Continue from an existing checkpoint instead of starting over.
    pub resume: bool,
    /// Stop after this many newly computed cells.
    pub max_new_cells: Option<usize>,
    pub solver: SolverSettings,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

#[derive(Debug, Clone, Copy)]
struct CellOutcome {
    i: usize,
    j: usize,
    successes: usize,
    diagnostics: CellDiagnostics,
}

fn cell_lambda(cfg: &GridConfig, estimator: &EstimatorConfig, a1: usize, a2: usize) -> Result<Option<f64>> {
    Ok(match cfg.procedure {
        Procedure::Constrained => None,
        Procedure::Penalized(l) => Some(l),
        Procedure::PenalizedOptimal => {
            let model = PhaseModel::new(&cfg.signal_spec(a1)?, &cfg.corruption_spec(a2)?, estimator)?;
            Some(model.optimal_lambda()?.lambda_star)
        }
    })
}

fn run_cell(
    cfg: &GridConfig,
    estimator: &EstimatorConfig,
    settings: &SolverSettings,
    i: usize,
    j: usize,
) -> CellOutcome {
    let (a1, a2) = (cfg.axis1[i], cfg.axis2[j]);
    let mut outcome = CellOutcome {
        i,
        j,
        successes: 0,
        diagnostics: CellDiagnostics::default(),
    };
    let lambda = match cell_lambda(cfg, estimator, a1, a2) {
        Ok(l) => l,
        Err(e) => {
            log::warn!("cell ({a1}, {a2}): no tradeoff parameter: {e}");
            outcome.diagnostics.solver_errors = cfg.trials;
            return outcome;
        }
    };
    let settings = SolverSettings {
        success_tol: cfg.success_tol,
        ..*settings
    };
    for trial in 0..cfg.trials {
        let seed = trial_seed(cfg.seed, a1, a2, trial);
        let result = (|| {
            let signal = cfg.signal_spec(a1)?;
            let inst = make_instance(&signal, &cfg.corruption_spec(a2)?, cfg.m, cfg.ensemble, seed)?;
            match lambda {
                None => solve_constrained(&inst, &signal, inst.signal_budget(&signal)?, &settings),
                Some(l) => solve_penalized(&inst, &signal, l, &settings),
            }
        })();
        match result {
            Ok(r) => {
                outcome.successes += r.success as usize;
                outcome.diagnostics.non_converged += !r.converged as usize;
            }
            Err(e) => {
                log::warn!("cell ({a1}, {a2}) trial {trial}: {e}");
                outcome.diagnostics.solver_errors += 1;
            }
        }
    }
    outcome
}

struct Checkpoint {
    grid: BufWriter<File>,
    diag: BufWriter<File>,
}

impl Checkpoint {
    fn append(&mut self, grid: &PhaseGrid, o: &CellOutcome) -> Result<()> {
        let (a1, a2) = (grid.axis1[o.i], grid.axis2[o.j]);
        writeln!(self.grid, "{}", grid_row(a1, a2, grid.trials_per_cell, o.successes))?;
        writeln!(
            self.diag,
            "{a1},{a2},{},{}",
            o.diagnostics.solver_errors, o.diagnostics.non_converged
        )?;
        self.grid.flush()?;
        self.diag.flush()?;
        Ok(())
    }
}

fn grid_row(a1: usize, a2: usize, trials: usize, successes: usize) -> String {
    format!("{a1},{a2},{trials},{successes},{}", successes as f64 / trials as f64)
}

fn parse_rows(text: &str, width: usize) -> Vec<Vec<usize>> {
    // Rows that do not parse, such as a line cut short by an interrupt, are
    // dropped; the cell is simply recomputed.
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < width {
                return None;
            }
            fields[..width.min(4)]
                .iter()
                .map(|f| f.trim().parse::<usize>().ok())
                .collect::<Option<Vec<_>>>()
        })
        .collect()
}

fn load_checkpoint(cfg: &GridConfig, path: &Path, grid: &mut PhaseGrid) -> Result<()> {
    let echo = fs::read_to_string(sidecar(path, ".config"))?;
    if echo != cfg.echo_text() {
        return Err(invalid(
            "resume",
            format!("checkpoint {} was written for a different configuration", path.display()),
        ));
    }
    let index1: HashMap<usize, usize> = cfg.axis1.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let index2: HashMap<usize, usize> = cfg.axis2.iter().enumerate().map(|(j, &a)| (a, j)).collect();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    for row in parse_rows(&text, GRID_HEADER.len()) {
        let (Some(&i), Some(&j)) = (index1.get(&row[0]), index2.get(&row[1])) else {
            continue;
        };
        if row[2] != cfg.trials || row[3] > cfg.trials {
            continue;
        }
        grid.successes[i][j] = row[3];
        grid.done[i][j] = true;
    }
    let diag_path = sidecar(path, ".diagnostics.csv");
    if diag_path.exists() {
        let text = fs::read_to_string(diag_path)?;
        for row in parse_rows(&text, DIAG_HEADER.len()) {
            if let (Some(&i), Some(&j)) = (index1.get(&row[0]), index2.get(&row[1])) {
                grid.diagnostics[i][j] = CellDiagnostics {
                    solver_errors: row[2],
                    non_converged: row[3],
                };
            }
        }
    }
    Ok(())
}

/// Writes the finished cells of `grid` in canonical order to a fresh file.
fn rewrite(path: &Path, cfg: &GridConfig, grid: &PhaseGrid) -> Result<()> {
    let tmp = sidecar(path, ".tmp");
    fs::write(sidecar(path, ".config"), cfg.echo_text())?;
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write_grid_csv(grid, &mut out)?;
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    let mut out = BufWriter::new(File::create(sidecar(path, ".diagnostics.csv"))?);
    writeln!(out, "{}", DIAG_HEADER.join(","))?;
    for (i, &a1) in grid.axis1.iter().enumerate() {
        for (j, &a2) in grid.axis2.iter().enumerate() {
            if grid.done[i][j] {
                let d = grid.diagnostics[i][j];
                writeln!(out, "{a1},{a2},{},{}", d.solver_errors, d.non_converged)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn open_append(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(OpenOptions::new().append(true).open(path)?))
}

/// Runs every pending cell of the grid.
///
/// Solver errors count as failures and are tallied per cell in
/// [`CellDiagnostics`]. With `max_new_cells` the run may stop early; the
/// returned grid then has unfinished cells (`done` false) and the
/// checkpoint holds everything computed so far.
pub fn run_grid(cfg: &GridConfig, options: &RunOptions) -> Result<PhaseGrid> {
    cfg.validate()?;
    options.solver.validate()?;
    let estimator = cfg.estimator()?;
    let mut grid = PhaseGrid::empty(cfg);

    let mut checkpoint = match &options.checkpoint {
        Some(path) => {
            if options.resume && path.exists() {
                load_checkpoint(cfg, path, &mut grid)?;
            }
            rewrite(path, cfg, &grid)?;
            Some(Checkpoint {
                grid: open_append(path)?,
                diag: open_append(&sidecar(path, ".diagnostics.csv"))?,
            })
        }
        None => None,
    };

    let mut pending: Vec<(usize, usize)> = (0..cfg.axis1.len())
        .flat_map(|i| (0..cfg.axis2.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| !grid.done[i][j])
        .collect();
    if let Some(cap) = options.max_new_cells {
        pending.truncate(cap);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| invalid("jobs", e.to_string()))?;
    let chunk = 2 * pool.current_num_threads().max(1);
    for batch in pending.chunks(chunk) {
        let outcomes: Vec<CellOutcome> = pool.install(|| {
            batch
                .par_iter()
                .map(|&(i, j)| run_cell(cfg, &estimator, &options.solver, i, j))
                .collect()
        });
        for o in &outcomes {
            grid.successes[o.i][o.j] = o.successes;
            grid.diagnostics[o.i][o.j] = o.diagnostics;
            grid.done[o.i][o.j] = true;
            if let Some(cp) = checkpoint.as_mut() {
                cp.append(&grid, o)?;
            }
        }
        log::info!("finished {} cells", outcomes.len());
    }

    if let (Some(path), true) = (&options.checkpoint, grid.is_complete()) {
        drop(checkpoint);
        rewrite(path, cfg, &grid)?;
    }
    Ok(grid)
}

/// Finished cells in canonical order with the grid CSV header.
pub fn write_grid_csv<W: Write>(grid: &PhaseGrid, mut out: W) -> Result<()> {
    writeln!(out, "{}", GRID_HEADER.join(","))?;
    for (i, &a1) in grid.axis1.iter().enumerate() {
        for (j, &a2) in grid.axis2.iter().enumerate() {
            if grid.done[i][j] {
                writeln!(out, "{}", grid_row(a1, a2, grid.trials_per_cell, grid.successes[i][j]))?;
            }
        }
    }
    Ok(())
}

/// Parses a grid CSV into `(axis1, axis2, trials, successes)` rows,
/// validating the header and each row.
pub fn read_grid_csv<R: Read>(input: R) -> Result<Vec<(usize, usize, usize, usize)>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != GRID_HEADER {
        return Err(Error::Format {
            what: "grid csv",
            detail: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let bad = |detail: String| Error::Format {
            what: "grid csv",
            detail,
        };
        let ints: Vec<usize> = (0..4)
            .map(|k| record[k].parse::<usize>().map_err(|e| bad(format!("field {k}: {e}"))))
            .collect::<Result<_>>()?;
        let rate: f64 = record[4].parse().map_err(|e| bad(format!("success_rate: {e}")))?;
        if ints[2] == 0 || ints[3] > ints[2] || (rate - ints[3] as f64 / ints[2] as f64).abs() > 1e-12 {
            return Err(bad(format!("inconsistent row {:?}", record)));
        }
        rows.push((ints[0], ints[1], ints[2], ints[3]));
    }
    Ok(rows)
}

pub fn write_curve_csv<W: Write>(curve: &super::BoundaryCurve, mut out: W) -> Result<()> {
    let (pos, value) = curve.orientation.csv_columns();
    writeln!(out, "{pos},{value},kind")?;
    for (p, b) in curve.positions.iter().zip(&curve.boundary) {
        match b {
            Some(v) => writeln!(out, "{p},{v},{}", curve.kind)?,
            None => writeln!(out, "{p},,{}", curve.kind)?,
        }
    }
    Ok(())
}
