//! Subcommand implementations. Each command validates its whole
//! configuration before any computation starts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use phaselab::ensembles::{make_instance, Ensemble, MonteCarloConfig, DEFAULT_MC_SAMPLES};
use phaselab::experiments::{
    crossing_compare, run_grid, theoretical_boundary, write_curve_csv, CrossingReport, GridConfig,
    Model, Orientation, Procedure as GridProcedure, RunOptions,
};
use phaselab::geometry::StructureSpec;
use phaselab::solvers::{
    read_instance, solve_constrained, solve_penalized, write_instance, ProblemInstance, SignalShape,
    SolverSettings,
};
use phaselab::thresholds::{
    optimal_lambda, probability_bound, theorem3_check, threshold_report, EstimatorConfig, Event,
    Procedure, Regime, ZetaMode,
};

use crate::config::RunConfig;
use crate::CliError;

const DEFAULT_LAMBDAS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lambda {
    Fixed(f64),
    Optimal,
}

fn lambda(cfg: &RunConfig) -> Result<Option<Lambda>, CliError> {
    match cfg.raw("lambda") {
        None => Ok(None),
        Some("optimal") => Ok(Some(Lambda::Optimal)),
        Some(raw) => match raw.parse::<f64>() {
            Ok(l) if l > 0.0 && l.is_finite() => Ok(Some(Lambda::Fixed(l))),
            _ => Err(config_error(format!(
                "invalid lambda: {raw:?}: expected a positive number or optimal"
            ))),
        },
    }
}

/// `None` for the constrained program.
fn procedure(cfg: &RunConfig) -> Result<Option<Lambda>, CliError> {
    let lambda = lambda(cfg)?;
    let default = if lambda.is_some() { "penalized" } else { "constrained" };
    match cfg.raw("procedure").unwrap_or(default) {
        "constrained" if lambda.is_none() => Ok(None),
        "constrained" => Err(config_error("invalid lambda: not used by the constrained procedure")),
        "penalized" => lambda
            .map(Some)
            .ok_or_else(|| config_error("missing required key lambda for the penalized procedure")),
        other => Err(config_error(format!(
            "invalid procedure: {other:?}: expected constrained or penalized"
        ))),
    }
}

fn model(cfg: &RunConfig) -> Result<Model, CliError> {
    cfg.raw("model")
        .unwrap_or("sparse-sparse")
        .parse()
        .map_err(|e: phaselab::Error| config_error(e.to_string()))
}

fn ensemble(cfg: &RunConfig) -> Result<Ensemble, CliError> {
    cfg.raw("ensemble")
        .unwrap_or("gaussian")
        .parse()
        .map_err(|e: phaselab::Error| config_error(e.to_string()))
}

fn zeta(cfg: &RunConfig) -> Result<ZetaMode, CliError> {
    match cfg.raw("zeta").unwrap_or("surrogate") {
        "surrogate" => Ok(ZetaMode::Surrogate),
        "mc" => Ok(ZetaMode::MonteCarlo),
        other => Err(config_error(format!("invalid zeta: {other:?}: expected surrogate or mc"))),
    }
}

fn positive(cfg: &RunConfig, key: &str) -> Result<usize, CliError> {
    let v: usize = cfg.require(key)?;
    if v == 0 {
        return Err(config_error(format!("invalid {key}: must be positive")));
    }
    Ok(v)
}

fn bounded(cfg: &RunConfig, key: &str, limit_key: &str, limit: usize) -> Result<usize, CliError> {
    let v: usize = cfg.require(key)?;
    if v > limit {
        return Err(config_error(format!("invalid {key}: {key} = {v} exceeds {limit_key} = {limit}")));
    }
    Ok(v)
}

/// Shapes of the signal and corruption, before their complexities.
#[derive(Debug, Clone, Copy)]
struct Dims {
    model: Model,
    rows: usize,
    cols: usize,
    m: usize,
}

impl Dims {
    fn parse(cfg: &RunConfig) -> Result<Self, CliError> {
        let model = model(cfg)?;
        let m = positive(cfg, "m")?;
        let (rows, cols) = match model {
            Model::SparseSparse => (positive(cfg, "n")?, 1),
            Model::LowRankSparse => {
                let (n1, n2) = (positive(cfg, "n1")?, positive(cfg, "n2")?);
                if n1 > n2 {
                    return Err(config_error(format!("invalid n1: n1 = {n1} exceeds n2 = {n2}")));
                }
                (n1, n2)
            }
        };
        Ok(Self { model, rows, cols, m })
    }

    fn complexity_key(&self) -> (&'static str, &'static str, usize) {
        match self.model {
            Model::SparseSparse => ("s", "n", self.rows),
            Model::LowRankSparse => ("r", "n1", self.rows),
        }
    }

    fn corruption_key(&self) -> &'static str {
        match self.model {
            Model::SparseSparse => "k",
            Model::LowRankSparse => "rho",
        }
    }

    fn signal(&self, complexity: usize) -> Result<StructureSpec, CliError> {
        Ok(match self.model {
            Model::SparseSparse => StructureSpec::sparse(self.rows, complexity)?,
            Model::LowRankSparse => StructureSpec::low_rank(self.rows, self.cols, complexity)?,
        })
    }
}

/// Signal and corruption specs from `s,k` or `r,rho`.
fn structures(cfg: &RunConfig) -> Result<(Dims, StructureSpec, StructureSpec), CliError> {
    let dims = Dims::parse(cfg)?;
    let (key, limit_key, limit) = dims.complexity_key();
    let complexity = bounded(cfg, key, limit_key, limit)?;
    let sparsity = bounded(cfg, dims.corruption_key(), "m", dims.m)?;
    Ok((dims, dims.signal(complexity)?, StructureSpec::sparse(dims.m, sparsity)?))
}

fn estimator(cfg: &RunConfig, model: Model) -> Result<EstimatorConfig, CliError> {
    let zeta = zeta(cfg)?;
    let samples = cfg.get_or("samples", DEFAULT_MC_SAMPLES)?;
    let stochastic = model == Model::LowRankSparse || zeta == ZetaMode::MonteCarlo;
    let seed = match cfg.get::<u64>("seed")? {
        Some(seed) => seed,
        None if stochastic => {
            return Err(config_error("missing required key seed (Monte Carlo estimates need one)"))
        }
        None => 0,
    };
    let mut est = EstimatorConfig::new(
        MonteCarloConfig::new(samples, seed).map_err(|e| config_error(e.to_string()))?,
    );
    est.zeta = zeta;
    Ok(est)
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Success => "success",
        Regime::Failure => "failure",
        Regime::Indeterminate => "indeterminate",
    }
}

/// Key-value report lines, printed and optionally saved as CSV.
#[derive(Default)]
struct Report(Vec<(String, String)>);

impl Report {
    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    fn print(&self) {
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k}={v}");
        }
    }

    fn write_csv(&self, path: &str) -> Result<(), CliError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "key,value")?;
        for (k, v) in &self.0 {
            writeln!(out, "{k},{v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let (dims, signal, corruption) = structures(cfg)?;
    let est = estimator(cfg, dims.model)?;
    let choice = lambda(cfg)?;
    let out: Option<String> = cfg.get("out")?;

    let report = threshold_report(
        &signal,
        &corruption,
        match choice {
            Some(Lambda::Fixed(l)) => Some(l),
            _ => None,
        },
        choice == Some(Lambda::Optimal),
        &est,
    )?;
    let m = dims.m;
    let mut r = Report::default();
    r.push("model", dims.model);
    r.push("n", report.n);
    r.push("m", m);
    r.push("cp", report.cp);
    r.push("cp_std_error", report.cp_std_error);
    let band = 3.0 * report.cp_std_error;
    r.push("regime_constrained", regime_name(Regime::classify(m, report.cp - band, report.cp + band)));
    for event in [Event::Success, Event::Failure] {
        let b = probability_bound(Procedure::Constrained, event, m, report.cp);
        let name = if event == Event::Success { "success" } else { "failure" };
        r.push(format!("constrained_{name}_epsilon"), b.epsilon);
        r.push(format!("constrained_{name}_probability"), b.prob_lower_bound);
    }
    if let Some(l) = report.lambda_star {
        r.push("lambda_star", l);
        r.push("t_star", report.t_star.unwrap_or(f64::NAN));
        r.push("c_star", report.c_star.unwrap_or(f64::NAN));
    }
    if let (Some(l), Some(lower), Some(upper)) = (report.lambda, report.cp_lambda_lower, report.cp_lambda_upper) {
        let se = report.cp_lambda_std_error.unwrap_or(0.0);
        r.push("lambda", l);
        r.push("cp_lambda_lower", lower);
        r.push("cp_lambda_upper", upper);
        r.push("cp_lambda_std_error", se);
        r.push(
            "regime_penalized",
            regime_name(Regime::classify(m, lower - 3.0 * se, upper + 3.0 * se)),
        );
        for event in [Event::Success, Event::Failure] {
            let b = probability_bound(Procedure::Penalized, event, m, upper);
            let name = if event == Event::Success { "success" } else { "failure" };
            r.push(format!("penalized_{name}_epsilon"), b.epsilon);
            r.push(format!("penalized_{name}_probability"), b.prob_lower_bound);
        }
    }
    r.print();
    if let Some(path) = out {
        r.write_csv(&path)?;
    }
    Ok(())
}

fn count_nonzero<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    values.filter(|v| **v != 0.0).count()
}

/// The instance to solve and the specs describing it.
fn instance(cfg: &RunConfig) -> Result<(ProblemInstance, StructureSpec, StructureSpec, Model), CliError> {
    if let Some(path) = cfg.get::<PathBuf>("instance")? {
        for key in ["n", "n1", "n2", "m", "s", "k", "rho", "ensemble"] {
            if cfg.has(key) {
                return Err(config_error(format!(
                    "invalid {key}: the instance file fixes the problem; remove {key}"
                )));
            }
        }
        let file = File::open(&path)
            .map_err(|e| config_error(format!("invalid instance: cannot open {}: {e}", path.display())))?;
        let inst = read_instance(BufReader::new(file))?;
        let corruption = StructureSpec::sparse(inst.m, count_nonzero(inst.v_true.iter()))?;
        let (signal, model) = match inst.shape {
            SignalShape::Vector => (
                StructureSpec::sparse(inst.n, count_nonzero(inst.x_true.iter()))?,
                Model::SparseSparse,
            ),
            SignalShape::Matrix { rows, cols } => {
                // The budget only needs the norm; the rank matters for lambda=optimal.
                let rank = match cfg.get::<usize>("r")? {
                    Some(r) => r,
                    None if lambda(cfg)? == Some(Lambda::Optimal) => {
                        return Err(config_error(
                            "missing required key r (lambda=optimal on a matrix instance)",
                        ))
                    }
                    None => rows.min(cols),
                };
                let spec = StructureSpec::low_rank(rows, cols, rank)
                    .map_err(|e| config_error(format!("invalid r: {e}")))?;
                (spec, Model::LowRankSparse)
            }
        };
        return Ok((inst, signal, corruption, model));
    }
    let (dims, signal, corruption) = structures(cfg)?;
    let seed: u64 = cfg
        .get("seed")?
        .ok_or_else(|| config_error("missing required key seed (instance generation needs one)"))?;
    let ensemble = ensemble(cfg)?;
    let inst = make_instance(&signal, &corruption, dims.m, ensemble, seed)?;
    Ok((inst, signal, corruption, dims.model))
}

fn write_values(out: &mut impl Write, label: &str, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    writeln!(out, "{label}")?;
    let line: Vec<String> = values.map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", line.join(" "))
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let choice = procedure(cfg)?;
    let tolerance: f64 = cfg.get_or("tolerance", 1e-3)?;
    let max_iterations: usize = cfg.get_or("max_iterations", SolverSettings::default().max_iterations)?;
    let settings = SolverSettings {
        success_tol: tolerance,
        max_iterations,
        ..SolverSettings::default()
    };
    settings.validate().map_err(|e| config_error(e.to_string()))?;
    let out: Option<String> = cfg.get("out")?;
    let save: Option<String> = cfg.get("save_instance")?;
    let (inst, signal, corruption, model) = instance(cfg)?;
    let lambda = match choice {
        None => None,
        Some(Lambda::Fixed(l)) => Some(l),
        Some(Lambda::Optimal) => {
            let est = estimator(cfg, model)?;
            Some(optimal_lambda(&signal, &corruption, inst.m, &est)?.lambda_star)
        }
    };

    if let Some(path) = &save {
        let mut w = BufWriter::new(File::create(path)?);
        write_instance(&inst, &mut w)?;
        w.flush()?;
    }
    let result = match lambda {
        None => solve_constrained(&inst, &signal, inst.signal_budget(&signal)?, &settings)?,
        Some(l) => solve_penalized(&inst, &signal, l, &settings)?,
    };

    let mut r = Report::default();
    r.push("procedure", if lambda.is_some() { "penalized" } else { "constrained" });
    if let Some(l) = lambda {
        r.push("lambda", l);
    }
    r.push("m", inst.m);
    r.push("n", inst.n);
    r.push("converged", result.converged);
    r.push("success", result.success);
    r.push("rel_err_x", format!("{:.6e}", result.rel_err_x));
    r.push("objective", format!("{:.9e}", result.objective));
    r.push("affine_residual", format!("{:.3e}", result.affine_residual));
    r.push("ball_violation", format!("{:.3e}", result.ball_violation));
    r.push("iterations", result.iterations);
    if let Some(c) = result.certificate_residual {
        r.push("certificate_residual", format!("{c:.3e}"));
    }
    r.print();
    if let Some(path) = out {
        let mut w = BufWriter::new(File::create(path)?);
        write_values(&mut w, "x_hat", result.x_hat.iter().copied())?;
        write_values(&mut w, "v_hat", result.v_hat.iter().copied())?;
        w.flush()?;
    }
    if !result.converged {
        return Err(CliError::NonConvergence(format!(
            "solver stopped at the iteration limit of {}",
            result.iterations
        )));
    }
    Ok(())
}

fn sidecar(path: &str, suffix: &str) -> String {
    format!("{path}{suffix}")
}

fn grid_config(cfg: &RunConfig) -> Result<GridConfig, CliError> {
    let dims = Dims::parse(cfg)?;
    let axis1 = cfg.axis("axis1")?;
    let axis2 = cfg.axis("axis2")?;
    let (key, limit_key, limit) = dims.complexity_key();
    if let Some(&a) = axis1.iter().find(|&&a| a > limit) {
        return Err(config_error(format!("invalid axis1: {key} = {a} exceeds {limit_key} = {limit}")));
    }
    if let Some(&b) = axis2.iter().find(|&&b| b > dims.m) {
        return Err(config_error(format!(
            "invalid axis2: {} = {b} exceeds m = {}",
            dims.corruption_key(),
            dims.m
        )));
    }
    let procedure = match procedure(cfg)? {
        None => GridProcedure::Constrained,
        Some(Lambda::Fixed(l)) => GridProcedure::Penalized(l),
        Some(Lambda::Optimal) => GridProcedure::PenalizedOptimal,
    };
    let seed: u64 = cfg
        .get("seed")?
        .ok_or_else(|| config_error("missing required key seed (phase diagrams are stochastic)"))?;
    let mut grid = match dims.model {
        Model::SparseSparse => GridConfig::sparse(dims.rows, dims.m, axis1, axis2, procedure, seed),
        Model::LowRankSparse => GridConfig::low_rank(dims.rows, dims.cols, dims.m, axis1, axis2, procedure, seed),
    };
    grid.trials = cfg.get_or("trials", grid.trials)?;
    grid.ensemble = ensemble(cfg)?;
    grid.success_tol = cfg.get_or("tolerance", grid.success_tol)?;
    grid.mc_samples = cfg.get_or("samples", grid.mc_samples)?;
    grid.validate().map_err(|e| config_error(e.to_string()))?;
    Ok(grid)
}

fn write_report(path: &str, report: &CrossingReport, labels: (&str, &str)) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "position_axis={} searched_axis={}", labels.0, labels.1)?;
    writeln!(w, "band_cells={}", report.band)?;
    writeln!(w, "compared={}", report.compared)?;
    writeln!(w, "within_band={}", report.within_band)?;
    writeln!(w, "fraction_within={}", report.fraction_within())?;
    writeln!(w, "excluded_empirical={}", report.excluded_empirical)?;
    writeln!(w, "excluded_predicted={}", report.excluded_predicted)?;
    match report.max_deviation {
        Some(d) => writeln!(w, "max_deviation_cells={d}")?,
        None => writeln!(w, "max_deviation_cells=")?,
    }
    writeln!(w, "position,empirical_index,predicted_index,deviation_cells")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &report.columns {
        writeln!(w, "{},{},{},{}", c.position, opt(c.empirical), opt(c.predicted), opt(c.deviation))?;
    }
    w.flush()?;
    Ok(())
}

pub fn phase_diagram(cfg: &RunConfig, resume: bool) -> Result<(), CliError> {
    let grid_cfg = grid_config(cfg)?;
    let out: String = cfg.require("out")?;
    let jobs: usize = cfg.get_or("jobs", 0)?;
    let band: f64 = cfg.get_or("band", 3.0)?;
    if !(band >= 0.0) {
        return Err(config_error("invalid band: must be nonnegative"));
    }
    let orientation = match cfg.raw("orientation").unwrap_or("axis2") {
        "axis2" => Orientation::AlongAxis2,
        "axis1" => Orientation::AlongAxis1,
        other => return Err(config_error(format!("invalid orientation: {other:?}: expected axis1 or axis2"))),
    };
    let options = RunOptions {
        jobs,
        checkpoint: Some(PathBuf::from(&out)),
        resume,
        ..RunOptions::default()
    };

    let grid = run_grid(&grid_cfg, &options)?;
    let curve = theoretical_boundary(&grid_cfg, orientation)?;
    let curve_path = sidecar(&out, ".curve.csv");
    {
        let mut w = BufWriter::new(File::create(&curve_path)?);
        write_curve_csv(&curve, &mut w)?;
        w.flush()?;
    }
    let report = crossing_compare(&grid, &curve, band)?;
    let labels = grid_cfg.axis_labels();
    let labels = match orientation {
        Orientation::AlongAxis2 => labels,
        Orientation::AlongAxis1 => (labels.1, labels.0),
    };
    let report_path = sidecar(&out, ".report.txt");
    write_report(&report_path, &report, labels)?;

    let diag = grid.total_diagnostics();
    let mut r = Report::default();
    r.push("grid", &out);
    r.push("curve", &curve_path);
    r.push("report", &report_path);
    r.push("cells", grid.axis1.len() * grid.axis2.len());
    r.push("trials", grid.trials_per_cell);
    r.push("solver_errors", diag.solver_errors);
    r.push("non_converged", diag.non_converged);
    r.push("compared", report.compared);
    r.push("fraction_within", report.fraction_within());
    r.push(
        "max_deviation_cells",
        report.max_deviation.map(|d| d.to_string()).unwrap_or_default(),
    );
    r.print();
    Ok(())
}

pub fn verify_theorem3(cfg: &RunConfig) -> Result<(), CliError> {
    let (dims, signal, corruption) = structures(cfg)?;
    let est = estimator(cfg, dims.model)?;
    let lambdas = cfg.real_list("lambdas")?.unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(config_error(format!("invalid lambdas: {l} is not a positive number")));
    }
    let slack: Option<f64> = cfg.get("slack")?;
    if let Some(s) = slack {
        if !(s >= 0.0) {
            return Err(config_error("invalid slack: must be nonnegative"));
        }
    }

    let t3 = theorem3_check(&signal, &corruption, dims.m, &lambdas, slack, &est)?;
    let mut r = Report::default();
    r.push("m", t3.m);
    r.push("cp", t3.cp);
    r.push("slack", t3.slack);
    r.push("lambda_star", t3.optimal.lambda_star);
    r.push("t_star", t3.optimal.t_star);
    r.push("c_star", t3.optimal.c_star);
    r.push("cp_lambda_star_upper", t3.optimal_upper);
    for l in &t3.per_lambda {
        r.push(
            format!("lambda[{}]", l.lambda),
            format!(
                "lower={} upper={} premise={} margin={} unconditional_margin={}",
                l.lower, l.upper, l.premise, l.implication, l.unconditional
            ),
        );
    }
    r.push(
        "optimal",
        format!(
            "premise={} margin={} unconditional_margin={}",
            t3.optimal_premise, t3.optimal_implication, t3.optimal_unconditional
        ),
    );
    if let Some(s) = t3.sharpened_implication {
        r.push("sharpened_margin", s);
    }
    r.push("unconditional", if t3.passed_unconditional() { "pass" } else { "fail" });
    let passed = t3.passed();
    r.push("verdict", if passed { "pass" } else { "fail" });
    r.print();
    if !passed {
        return Err(CliError::Violation("threshold relations violated; see margins above".into()));
    }
    Ok(())
}
