//! Experiment runner behind the `rdec` binary: configuration parsing, CSV output,
//! convergence tables and gamma statistics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coeffs::{make_coefficients, NodeFamily};
use crate::dec::{Dec, DecConfig, EntropyMode, RelaxationMode, Trajectory};
use crate::error::{Error, Result};
use crate::fv::{burgers_ec_rhs, burgers_problem};
use crate::problems::{problem_by_name, OdeProblem};
use crate::rd1d::{rd_integrate, Correction, RdMesh, RdOperatorSet, RdRelaxation, RdResidualConfig, ScalarLaw};
use crate::tableau::{butcher_to_shu_osher, dec_to_butcher, ButcherTableau, NamedMethod};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RDEC_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "rdec-output";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Tableau,
    OdeRun,
    OdeConverge,
    FvBurgers,
    RdTransport,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Tableau => "tableau",
            Experiment::OdeRun => "ode-run",
            Experiment::OdeConverge => "ode-converge",
            Experiment::FvBurgers => "fv-burgers",
            Experiment::RdTransport => "rd-transport",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Experiment::Tableau, Experiment::OdeRun, Experiment::OdeConverge, Experiment::FvBurgers, Experiment::RdTransport]
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment '{s}'")))
    }
}

/// Raw `key = value` settings; keys are normalized to lowercase with dashes.
pub type Settings = BTreeMap<String, String>;

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

/// Parses a config file: one `key = value` per line, `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected 'key = value'", lineno + 1)))?;
        let key = normalize_key(k);
        if key.is_empty() {
            return Err(Error::InvalidArgument(format!("config line {}: empty key", lineno + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

const KEYS: &[&str] = &[
    "order", "family", "method", "relaxation", "entropy", "dt", "cfl", "t-final", "problem", "u0", "alpha",
    "refinements", "cells", "degree", "nu", "correction", "lumped-mass", "output", "seed",
];

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub order: usize,
    pub family: NodeFamily,
    pub method: Option<NamedMethod>,
    pub relaxation: RelaxationMode,
    pub rd_relaxation: RdRelaxation,
    pub entropy: EntropyMode,
    pub dt: f64,
    pub cfl: f64,
    pub t_final: f64,
    pub problem: String,
    pub u0: Option<[f64; 2]>,
    pub alpha: Option<f64>,
    pub refinements: usize,
    pub cells: usize,
    pub degree: usize,
    pub nu: f64,
    pub correction: Correction,
    pub lumped_mass: bool,
    pub output: PathBuf,
    pub seed: u64,
}

fn parse<T: FromStr>(s: &Settings, key: &str) -> Result<Option<T>> {
    s.get(key)
        .map(|v| v.parse::<T>().map_err(|_| Error::InvalidArgument(format!("invalid value '{v}' for '{key}'"))))
        .transpose()
}

fn parse_mode<T: FromStr<Err = Error>>(s: &Settings, key: &str) -> Result<Option<T>> {
    s.get(key).map(|v| v.parse::<T>()).transpose()
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("'{key}' must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    /// Builds a config from settings, filling experiment-specific defaults. The output
    /// directory falls back to `$RDEC_OUTPUT_DIR`, then to `rdec-output`.
    pub fn from_settings(experiment: Experiment, s: &Settings) -> Result<Self> {
        if let Some(bad) = s.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("unknown setting '{bad}'")));
        }
        let degree: usize = parse(s, "degree")?.unwrap_or(2);
        let default_order = if experiment == Experiment::RdTransport { degree + 1 } else { 3 };
        let (dt, cfl, t_final) = match experiment {
            Experiment::OdeRun => (0.1, 0.0, 10.0),
            Experiment::OdeConverge => (0.5, 0.0, 10.0),
            Experiment::FvBurgers => (0.0, crate::fv::CFL, crate::fv::FINAL_TIME),
            Experiment::RdTransport => (0.0, 0.3, 1.0),
            Experiment::Tableau => (0.0, 0.0, 0.0),
        };
        let cells = match experiment {
            Experiment::FvBurgers => 100,
            _ => 16,
        };
        let u0 = match s.get("u0") {
            None => None,
            Some(v) => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::InvalidArgument(format!("invalid value '{v}' for 'u0'")))?;
                match parts[..] {
                    [a, b] => Some([a, b]),
                    _ => return Err(Error::InvalidArgument("'u0' needs two comma-separated values".into())),
                }
            }
        };
        let output = match s.get("output") {
            Some(p) => PathBuf::from(p),
            None => std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into()),
        };
        let relaxation = if experiment == Experiment::RdTransport { None } else { parse_mode(s, "relaxation")? };
        let rd_relaxation = if experiment == Experiment::RdTransport { parse_mode(s, "relaxation")? } else { None };
        let cfg = Self {
            experiment,
            order: parse(s, "order")?.unwrap_or(default_order),
            family: parse_mode(s, "family")?.unwrap_or(NodeFamily::Equispaced),
            method: parse_mode(s, "method")?,
            relaxation: relaxation.unwrap_or(RelaxationMode::None),
            rd_relaxation: rd_relaxation.unwrap_or(RdRelaxation::Off),
            entropy: parse_mode(s, "entropy")?.unwrap_or(EntropyMode::Energy),
            dt: parse(s, "dt")?.unwrap_or(dt),
            cfl: parse(s, "cfl")?.unwrap_or(cfl),
            t_final: parse(s, "t-final")?.unwrap_or(t_final),
            problem: s.get("problem").cloned().unwrap_or_else(|| "oscillator".into()),
            u0,
            alpha: parse(s, "alpha")?,
            refinements: parse(s, "refinements")?.unwrap_or(if experiment == Experiment::OdeConverge { 6 } else { 1 }),
            cells: parse(s, "cells")?.unwrap_or(cells),
            degree,
            nu: parse(s, "nu")?.unwrap_or(0.01),
            correction: parse_mode(s, "correction")?.unwrap_or(Correction::None),
            lumped_mass: parse(s, "lumped-mass")?.unwrap_or(false),
            output,
            seed: parse(s, "seed")?.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidArgument("'order' must be at least 1".into()));
        }
        if self.method.is_some() && self.experiment != Experiment::Tableau {
            return Err(Error::InvalidArgument("named methods are only available for the tableau experiment".into()));
        }
        match self.experiment {
            Experiment::Tableau => {}
            Experiment::OdeRun | Experiment::OdeConverge => {
                positive("dt", self.dt)?;
                positive("t-final", self.t_final)?;
            }
            Experiment::FvBurgers | Experiment::RdTransport => {
                positive("cfl", self.cfl)?;
                positive("t-final", self.t_final)?;
            }
        }
        if self.experiment == Experiment::OdeConverge && self.refinements < 2 {
            return Err(Error::InvalidArgument("'refinements' must be at least 2".into()));
        }
        if self.refinements < 1 {
            return Err(Error::InvalidArgument("'refinements' must be at least 1".into()));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::InvalidArgument("'nu' must be non-negative".into()));
        }
        if let Some(a) = self.alpha {
            positive("alpha", a)?;
        }
        Ok(())
    }

    fn dec(&self) -> Result<Dec> {
        Dec::new(DecConfig::with_order(self.order, self.family)?.relaxed(self.relaxation, self.entropy))
    }
}

/// Process exit categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Numerical = 3,
    Solver = 4,
    Io = 5,
}

impl ExitKind {
    pub fn label(self) -> &'static str {
        match self {
            ExitKind::Config => "config",
            ExitKind::Numerical => "numerical",
            ExitKind::Solver => "solver",
            ExitKind::Io => "io",
        }
    }
}

pub fn exit_kind(e: &Error) -> ExitKind {
    match e {
        Error::InvalidArgument(_) => ExitKind::Config,
        Error::NonFinite(_)
        | Error::Underflow(_)
        | Error::NonPositiveGamma { .. }
        | Error::DegenerateElement { .. }
        | Error::EmptyTrajectory => ExitKind::Numerical,
        Error::NoBracket { .. } | Error::NoConvergence { .. } | Error::NoPositiveRoot => ExitKind::Solver,
        Error::Io(_) => ExitKind::Io,
    }
}

/// One-line diagnostic for the error stream: `rdec: error[<kind>]: <message>`.
pub fn diagnostic(e: &Error) -> String {
    format!("rdec: error[{}]: {}", exit_kind(e).label(), e.to_string().replace('\n', " "))
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub step: f64,
    pub error: f64,
    /// Observed order against the previous row.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Requires a constant refinement ratio between consecutive steps.
    pub fn new(label: impl Into<String>, steps: &[f64], errors: &[f64]) -> Result<Self> {
        if steps.len() != errors.len() || steps.len() < 2 {
            return Err(Error::InvalidArgument("convergence table needs at least two matching rows".into()));
        }
        let ratio = steps[0] / steps[1];
        if steps.windows(2).any(|w| ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidArgument("refinement ratio must be constant".into()));
        }
        let rows = steps
            .iter()
            .zip(errors)
            .enumerate()
            .map(|(i, (&step, &error))| ConvergenceRow {
                step,
                error,
                slope: (i > 0).then(|| (errors[i - 1] / error).ln() / (steps[i - 1] / step).ln()),
            })
            .collect();
        Ok(Self { label: label.into(), rows })
    }

    /// Least-squares slope over rows whose error exceeds `floor` (round-off plateaus
    /// would otherwise flatten the fit).
    pub fn fitted_slope(&self, floor: f64) -> Option<f64> {
        let (h, e): (Vec<f64>, Vec<f64>) = self.rows.iter().filter(|r| r.error > floor).map(|r| (r.step, r.error)).unzip();
        (h.len() >= 2).then(|| fit_slope(&h, &e))
    }

    pub fn min_slope(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.slope).reduce(f64::min)
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| vec![fmt_f64(r.step), fmt_f64(r.error), r.slope.map(fmt_f64).unwrap_or_default()])
            .collect()
    }
}

/// Least-squares slope of `log(error)` against `log(step)`.
pub fn fit_slope(steps: &[f64], errors: &[f64]) -> f64 {
    let n = steps.len() as f64;
    let x: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Order statistics of per-step gamma values; quartiles by linear interpolation
/// between order statistics (the median is the midpoint for even counts).
pub fn gamma_stats(gammas: &[f64]) -> Result<GammaStats> {
    if gammas.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut v = gammas.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    Ok(GammaStats { median: q(0.5), q1: q(0.25), q3: q(0.75), min: v[0], max: v[v.len() - 1], count: v.len() })
}

fn matrix_text(m: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in m {
        for v in row {
            let _ = write!(out, " {v:>12.8}");
        }
        out.push('\n');
    }
    out
}

fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    let eta0 = traj.records[0].eta;
    traj.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![i.to_string(), fmt_f64(r.t), fmt_f64(r.gamma), fmt_f64(r.eta), fmt_f64(r.eta - eta0)];
            row.extend(r.y.iter().map(|&v| fmt_f64(v)));
            row
        })
        .collect()
}

fn state_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "t", "gamma", "eta", "eta_minus_eta0"].iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|i| format!("y{i}")));
    h
}

/// Runs an experiment, writing CSV files under `cfg.output` and a human-readable
/// summary to `out`. Returns the paths written.
pub fn run(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    match cfg.experiment {
        Experiment::Tableau => run_tableau(cfg, out),
        Experiment::OdeRun => run_ode(cfg, out),
        Experiment::OdeConverge => run_converge(cfg, out),
        Experiment::FvBurgers => run_burgers(cfg, out),
        Experiment::RdTransport => run_transport(cfg, out),
    }
}

fn run_tableau(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let (label, t): (String, ButcherTableau) = match cfg.method {
        Some(m) => (format!("{m:?}"), m.tableau()),
        None => {
            let dec = DecConfig::with_order(cfg.order, cfg.family)?;
            let coeffs = make_coefficients(dec.subintervals, cfg.family)?;
            (format!("DeC{} ({})", cfg.order, cfg.family), dec_to_butcher(&coeffs, dec.corrections)?)
        }
    };
    let so = butcher_to_shu_osher(&t);
    writeln!(out, "{label}: {} stages", t.stages())?;
    write!(out, "Butcher tableau (c | A, b):\n{}", t.to_text())?;
    write!(out, "Shu-Osher alpha:\n{}", matrix_text(&so.alpha))?;
    write!(out, "Shu-Osher beta:\n{}", matrix_text(&so.beta))?;
    let path = cfg.output.join("tableau.csv");
    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(&path, t.to_csv())?;
    Ok(vec![path])
}

fn run_ode(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let problem = problem_by_name(&cfg.problem, cfg.u0, cfg.alpha)?;
    let dec = cfg.dec()?;
    let traj = dec.integrate(problem.as_ref(), 0.0, &problem.initial_state(), cfg.dt, cfg.t_final)?;
    let path = cfg.output.join("ode-run.csv");
    let header = state_header(problem.dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&path, &header, trajectory_rows(&traj))?;
    writeln!(
        out,
        "{} DeC{} {} relaxation={:?}: {} steps, t_end = {}, max |eta - eta0| = {:e}",
        problem.name(),
        cfg.order,
        cfg.family,
        cfg.relaxation,
        traj.step_count,
        traj.last().t,
        traj.max_entropy_deviation()
    )?;
    let gammas = traj.gammas();
    if !gammas.is_empty() {
        let g = gamma_stats(&gammas)?;
        writeln!(out, "gamma: median {} quartiles [{}, {}] range [{}, {}] over {} steps", g.median, g.q1, g.q3, g.min, g.max, g.count)?;
    }
    Ok(vec![path])
}

/// Error against the exact solution at the time actually reached.
fn final_error(problem: &dyn OdeProblem, traj: &Trajectory) -> Result<f64> {
    let last = traj.last();
    let exact = problem
        .exact(last.t)
        .ok_or_else(|| Error::InvalidArgument(format!("problem '{}' has no exact solution", problem.name())))?;
    Ok(exact.iter().zip(&last.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Convergence study of a DeC method on an ODE problem with an exact solution.
pub fn ode_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    let problem = problem_by_name(&cfg.problem, cfg.u0, cfg.alpha)?;
    let dec = cfg.dec()?;
    let y0 = problem.initial_state();
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for level in 0..cfg.refinements {
        let dt = cfg.dt / f64::powi(2.0, level as i32);
        let traj = dec.integrate(problem.as_ref(), 0.0, &y0, dt, cfg.t_final)?;
        steps.push(dt);
        errors.push(final_error(problem.as_ref(), &traj)?);
    }
    ConvergenceTable::new(format!("{} DeC{} {} {:?}", problem.name(), cfg.order, cfg.family, cfg.relaxation), &steps, &errors)
}

fn run_converge(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let table = ode_convergence(cfg)?;
    let path = cfg.output.join("ode-converge.csv");
    write_csv(&path, &["dt", "error", "slope"], table.csv_rows())?;
    writeln!(out, "{}", table.label)?;
    for r in &table.rows {
        writeln!(out, "  dt = {:<10} error = {:.3e}  slope = {}", r.step, r.error, r.slope.map(|s| format!("{s:.2}")).unwrap_or_default())?;
    }
    if let Some(s) = table.fitted_slope(1e-11) {
        writeln!(out, "fitted slope: {s:.3}")?;
    }
    Ok(vec![path])
}

fn run_burgers(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let problem = burgers_problem(cfg.cells)?;
    // semidiscrete conservation on random states
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    let mut rhs = vec![0.0; cfg.cells];
    for _ in 0..200 {
        let u: Vec<f64> = (0..cfg.cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
        burgers_ec_rhs(&problem.grid, &u, &mut rhs)?;
        let scale: f64 = u.iter().zip(&rhs).map(|(a, b)| (a * b).abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        worst = worst.max(u.iter().zip(&rhs).map(|(a, b)| a * b).sum::<f64>().abs() / scale);
    }
    let dec = cfg.dec()?;
    let dt = problem.cfl_step(cfg.cfl);
    let traj = dec.integrate(&problem, 0.0, &problem.u0, dt, cfg.t_final)?;
    let path = cfg.output.join("fv-burgers.csv");
    let eta0 = traj.records[0].eta;
    let rows = traj
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), fmt_f64(r.t), fmt_f64(r.gamma), fmt_f64(r.eta), fmt_f64(r.eta - eta0)]);
    write_csv(&path, &["step", "t", "gamma", "eta", "eta_minus_eta0"], rows)?;
    writeln!(out, "semidiscrete: max |sum u*rhs| / scale = {worst:e} over 200 random states (seed {})", cfg.seed)?;
    writeln!(
        out,
        "burgers N={} DeC{} relaxation={:?}: {} steps, dt = {dt}, relative energy change = {:e}",
        cfg.cells,
        cfg.order,
        cfg.relaxation,
        traj.step_count,
        (traj.last().eta - eta0) / eta0
    )?;
    Ok(vec![path])
}

/// Outcome of a residual distribution transport run at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    pub cells: usize,
    pub l2_error: f64,
    /// `max_n |E_n - E_0| / E_0` for the discrete energy.
    pub energy_deviation: f64,
    pub run: crate::rd1d::RdRun,
}

/// Linear transport of `0.1 sin(pi x)` with `dt = cfl h / p`.
pub fn transport_run(cfg: &ExperimentConfig, cells: usize) -> Result<TransportResult> {
    let ops = RdOperatorSet::new(RdMesh::new(cells, cfg.degree)?, cfg.lumped_mass);
    let rcfg = RdResidualConfig { law: ScalarLaw::LinearAdvection(1.0), correction: cfg.correction, nu: cfg.nu };
    let dec = DecConfig::with_order(cfg.order, cfg.family)?;
    let coeffs = make_coefficients(dec.subintervals, cfg.family)?;
    let u0 = ops.interpolate(|x| 0.1 * (PI * x).sin());
    let dt = cfg.cfl * ops.mesh.h / cfg.degree as f64;
    let run = rd_integrate(&ops, &rcfg, &coeffs, dec.corrections, cfg.rd_relaxation, &u0, dt, cfg.t_final)?;
    let l2_error = ops.l2_error(&run.u, |x| 0.1 * (PI * (x - run.t_end)).sin());
    let energy_deviation = run.max_energy_deviation() / ops.energy(&u0);
    Ok(TransportResult { cells, l2_error, energy_deviation, run })
}

fn run_transport(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let results: Vec<TransportResult> =
        (0..cfg.refinements).map(|l| transport_run(cfg, cfg.cells << l)).collect::<Result<_>>()?;
    let mut paths = Vec::new();
    let path = cfg.output.join("rd-transport.csv");
    let rows = results[0]
        .run
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), fmt_f64(r.t), fmt_f64(r.gamma), fmt_f64(r.energy)]);
    write_csv(&path, &["step", "t", "gamma", "energy"], rows)?;
    paths.push(path);
    writeln!(
        out,
        "transport p={} DeC{} {} relaxation={:?} correction={:?} nu={} cfl={}",
        cfg.degree, cfg.order, cfg.family, cfg.rd_relaxation, cfg.correction, cfg.nu, cfg.cfl
    )?;
    for r in &results {
        writeln!(
            out,
            "  cells = {:<5} L2 error = {:.3e}  max relative energy deviation = {:.3e}  t_end = {}",
            r.cells, r.l2_error, r.energy_deviation, r.run.t_end
        )?;
    }
    if results.len() > 1 {
        let h: Vec<f64> = results.iter().map(|r| 2.0 / r.cells as f64).collect();
        let e: Vec<f64> = results.iter().map(|r| r.l2_error).collect();
        let table = ConvergenceTable::new("rd transport", &h, &e)?;
        let path = cfg.output.join("rd-transport-convergence.csv");
        write_csv(&path, &["h", "error", "slope"], table.csv_rows())?;
        paths.push(path);
        if let Some(s) = table.fitted_slope(0.0) {
            writeln!(out, "fitted slope: {s:.3}")?;
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_file_parsing() {
        let s = parse_config("# header\norder = 4\n\nfamily=gauss-lobatto  # trailing\nT_FINAL = 2.5\n").unwrap();
        assert_eq!(s.get("order").unwrap(), "4");
        assert_eq!(s.get("family").unwrap(), "gauss-lobatto");
        assert_eq!(s.get("t-final").unwrap(), "2.5");
        assert!(parse_config("order 4").is_err());
        assert!(parse_config(" = 4").is_err());
    }

    #[test]
    fn defaults_and_validation() {
        let c = ExperimentConfig::from_settings(Experiment::RdTransport, &settings(&[("degree", "3"), ("output", "x")])).unwrap();
        assert_eq!(c.order, 4);
        assert_eq!(c.cells, 16);
        assert_eq!(c.output, PathBuf::from("x"));
        let c = ExperimentConfig::from_settings(Experiment::FvBurgers, &settings(&[])).unwrap();
        assert_eq!((c.cells, c.cfl, c.t_final), (100, 0.3, 0.2));
        for bad in [("dt", "-1"), ("order", "x"), ("bogus", "1"), ("relaxation", "sometimes"), ("u0", "1")] {
            assert!(ExperimentConfig::from_settings(Experiment::OdeRun, &settings(&[bad])).is_err(), "{bad:?}");
        }
        assert!(ExperimentConfig::from_settings(Experiment::OdeRun, &settings(&[("method", "rk44")])).is_err());
        let c = ExperimentConfig::from_settings(Experiment::OdeRun, &settings(&[("u0", "0.5, 0.25")])).unwrap();
        assert_eq!(c.u0, Some([0.5, 0.25]));
    }

    #[test]
    fn gamma_stats_examples() {
        let g = gamma_stats(&[1.0; 5]).unwrap();
        assert_eq!((g.median, g.min, g.max, g.count), (1.0, 1.0, 1.0, 5));
        let g = gamma_stats(&[1.1, 0.9, 1.0]).unwrap();
        assert_eq!(g.median, 1.0);
        assert!((g.q1 - 0.95).abs() < 1e-15 && (g.q3 - 1.05).abs() < 1e-15);
        assert_eq!(gamma_stats(&[1.0, 2.0, 4.0, 3.0]).unwrap().median, 2.5);
        assert_eq!(gamma_stats(&[]), Err(Error::EmptyTrajectory));
    }

    #[test]
    fn convergence_table_slopes() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(3)).collect();
        let t = ConvergenceTable::new("cubic", &h, &e).unwrap();
        assert!(t.rows[0].slope.is_none());
        assert!((t.min_slope().unwrap() - 3.0).abs() < 1e-12);
        assert!((t.fitted_slope(0.0).unwrap() - 3.0).abs() < 1e-12);
        assert!(t.fitted_slope(1.0).is_none());
        assert!(ConvergenceTable::new("bad", &[0.4, 0.2, 0.05], &[1.0, 0.5, 0.1]).is_err());
    }

    #[test]
    fn exit_kinds_are_distinct() {
        let kinds = [
            exit_kind(&Error::InvalidArgument("x".into())),
            exit_kind(&Error::NonPositiveGamma { gamma: -1.0, t: 0.0 }),
            exit_kind(&Error::NoBracket { lo: 0.5, hi: 1.5 }),
            exit_kind(&Error::Io("x".into())),
        ];
        for (i, a) in kinds.iter().enumerate() {
            for b in &kinds[i + 1..] {
                assert_ne!(*a as i32, *b as i32);
            }
        }
        let d = diagnostic(&Error::NonFinite("state"));
        assert!(d.starts_with("rdec: error[numerical]:") && !d.contains('\n'));
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            assert_eq!(s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count(), 17);
        }
    }
}
