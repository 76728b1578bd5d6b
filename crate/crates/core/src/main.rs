use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdec::harness::{diagnostic, exit_kind, normalize_key, parse_config, run, Experiment, ExperimentConfig, Settings};
use rdec::{Error, Result};

#[derive(Parser)]
#[command(name = "rdec", version, about = "Relaxation deferred correction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Butcher tableau and Shu-Osher form of a DeC or named RK method.
    Tableau(Opts),
    /// Integrate an ODE problem and write the trajectory.
    OdeRun(Opts),
    /// Convergence study on a problem with an exact solution.
    OdeConverge(Opts),
    /// Entropy conservative finite volume Burgers run.
    FvBurgers(Opts),
    /// Residual distribution linear transport run.
    RdTransport(Opts),
}

/// Every option may also be given in a `key = value` config file; flags win.
#[derive(clap::Args)]
struct Opts {
    /// Config file with `key = value` lines.
    #[arg(long, allow_hyphen_values = true)]
    config: Option<PathBuf>,
    /// DeC order of accuracy.
    #[arg(long, allow_hyphen_values = true)]
    order: Option<String>,
    /// Subtimestep nodes: equispaced or gauss-lobatto.
    #[arg(long, allow_hyphen_values = true)]
    family: Option<String>,
    /// Named RK method (ssprk22, ssprk33, rk44); tableau only.
    #[arg(long, allow_hyphen_values = true)]
    method: Option<String>,
    /// none, idt or relaxation (rd-transport: off, conservative, dissipative, appendix).
    #[arg(long, allow_hyphen_values = true)]
    relaxation: Option<String>,
    /// energy or general.
    #[arg(long, allow_hyphen_values = true)]
    entropy: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    cfl: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t_final: Option<String>,
    /// oscillator, damped or pendulum.
    #[arg(long, allow_hyphen_values = true)]
    problem: Option<String>,
    /// Initial state as `a,b`.
    #[arg(long, allow_hyphen_values = true)]
    u0: Option<String>,
    /// Damping coefficient.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    refinements: Option<String>,
    /// Cells (fv-burgers) or elements (rd-transport).
    #[arg(long, allow_hyphen_values = true)]
    cells: Option<String>,
    /// Polynomial degree of the elements.
    #[arg(long, allow_hyphen_values = true)]
    degree: Option<String>,
    /// Jump stabilization coefficient.
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    /// none, conservative or conservative+jump.
    #[arg(long, allow_hyphen_values = true)]
    correction: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lumped_mass: Option<String>,
    /// Output directory (default: $RDEC_OUTPUT_DIR or ./rdec-output).
    #[arg(long, allow_hyphen_values = true)]
    output: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
}

impl Opts {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => parse_config(&std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
            })?)?,
            None => Settings::new(),
        };
        let flags = [
            ("order", &self.order),
            ("family", &self.family),
            ("method", &self.method),
            ("relaxation", &self.relaxation),
            ("entropy", &self.entropy),
            ("dt", &self.dt),
            ("cfl", &self.cfl),
            ("t-final", &self.t_final),
            ("problem", &self.problem),
            ("u0", &self.u0),
            ("alpha", &self.alpha),
            ("refinements", &self.refinements),
            ("cells", &self.cells),
            ("degree", &self.degree),
            ("nu", &self.nu),
            ("correction", &self.correction),
            ("lumped-mass", &self.lumped_mass),
            ("output", &self.output),
            ("seed", &self.seed),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.insert(normalize_key(k), v.clone());
            }
        }
        Ok(s)
    }
}

fn execute(experiment: Experiment, opts: &Opts) -> Result<()> {
    let cfg = ExperimentConfig::from_settings(experiment, &opts.settings()?)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for path in run(&cfg, &mut out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, opts) = match &cli.command {
        Command::Tableau(o) => (Experiment::Tableau, o),
        Command::OdeRun(o) => (Experiment::OdeRun, o),
        Command::OdeConverge(o) => (Experiment::OdeConverge, o),
        Command::FvBurgers(o) => (Experiment::FvBurgers, o),
        Command::RdTransport(o) => (Experiment::RdTransport, o),
    };
    match execute(experiment, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            ExitCode::from(exit_kind(&e) as u8)
        }
    }
}
