//! `nlstefan`: run simulations, limit solvers and invariant checks from a
//! JSON scenario file.
//!
//! Exit status is 0 when every assertion passes, 1 when one fails or a
//! solver gives up, and 2 for configuration and I/O errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Assertion, Context};
use output::OutDir;
use scenario::{Overrides, Scenario};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Solver(nlstefan::Error),
}

impl From<nlstefan::Error> for CliError {
    fn from(e: nlstefan::Error) -> Self {
        use nlstefan::Error as E;
        match e {
            E::InvalidGrid(_)
            | E::InvalidField(_)
            | E::GridMismatch
            | E::KernelUnderResolved { .. }
            | E::InvalidKernel(_)
            | E::InvalidGraph(_)
            | E::InvalidConfig(_)
            | E::NegativeData { .. }
            | E::SupportGuard { .. }
            | E::BlowUp { .. } => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Solver(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nlstefan", version, about = "Nonlocal two-phase Stefan problem toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "STEFAN_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    /// Rest tolerance for limit computations.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads for the convolution (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the merged scenario to `effective_config.json` and print it.
    #[arg(long, global = true)]
    dump_effective_config: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Integrate and write the trajectory diagnostics.
    Simulate,
    /// One-phase asymptotic projection.
    Project,
    /// Biobstacle problem by time integration and by direct sweeps
    /// (rest tolerance defaults to 1e-10 (1 + ||f||_1)).
    Bop,
    /// Phase-loss criterion report.
    Criterion,
    /// Non-interaction check and decomposition gap series.
    Decompose,
    /// Invariant suite over one trajectory.
    Checks,
}

fn run(cli: &Cli) -> Result<Vec<Assertion>, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut scenario = Scenario::load(path)?;
    scenario.apply(Overrides { dt: cli.dt, t_end: cli.t_end, tol: cli.tol });
    scenario.validate()?;
    let out = OutDir::new(cli.out.clone())?;
    if cli.dump_effective_config {
        out.write_json("effective_config.json", &scenario)?;
        println!("{}", serde_json::to_string_pretty(&scenario).expect("serializable scenario"));
    }
    let grid = scenario.grid.build()?;
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let f = scenario.initial.resolve(&grid, &base)?;
    if scenario.outputs.kernel_dump {
        out.write("kernel.json", &format!("{}\n", scenario.kernel.build(&grid)?.to_json()))?;
    }
    let cx = Context { scenario: &scenario, f: &f, out: &out };
    let assertions = match cli.command {
        Command::Simulate => commands::simulate(&cx)?,
        Command::Project => commands::project(&cx)?,
        Command::Bop => commands::bop(&cx)?,
        Command::Criterion => commands::phase_loss(&cx)?,
        Command::Decompose => commands::decompose(&cx)?,
        Command::Checks => commands::checks(&cx)?,
    };
    out.write_json("assertions.json", &assertions)?;
    Ok(assertions)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(assertions) => {
            let mut ok = true;
            for a in &assertions {
                let status = if a.skipped {
                    "SKIP"
                } else if a.pass {
                    "PASS"
                } else {
                    "FAIL"
                };
                println!("{status} {}: {}", a.name, a.detail);
                ok &= a.pass;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
