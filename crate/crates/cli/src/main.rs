//! `spiralwave`: batch front end for the spiral-wave toolkit.
//!
//! Exit codes: 0 success, 1 validation failure, 2 solver failure,
//! 64 malformed arguments or configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use output::Outputs;

#[derive(Parser, Debug)]
#[command(
    name = "spiralwave",
    version,
    about = "Vortex and spiral-wave equilibria on surfaces of revolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// JSON file with any of the flags below; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of the radial operator for n = 0..=nmax.
    Eig(Common),
    /// Continue a real pitchfork branch up to --lambda-max.
    Branch(Common),
    /// Solve the complex equation at (--eta, --b) from the real branch at --lambda.
    Solve(Common),
    /// Solve over an (eta, b) grid.
    Sweep(Common),
    /// Classify the solution at (--eta, --b).
    Classify(Common),
    /// Trace the frozen locus eta(beta).
    Locus(Common),
    /// Spiral curves of the solution at time --t.
    Render(Common),
    /// Check the surface and kinetics hypotheses.
    Validate(Common),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Validation(_) => 1,
            CliError::Solver(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Solver(m) => write!(f, "solver failed: {m}"),
            CliError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<spiralwave::Error> for CliError {
    fn from(e: spiralwave::Error) -> Self {
        use spiralwave::Error as E;
        match e {
            E::InvalidSurface(_) | E::InvalidBoundary(_) | E::InvalidKinetics(_) => {
                CliError::Validation(e.to_string())
            }
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            E::Io { .. } | E::Csv { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SPIRALWAVE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "SPIRALWAVE_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

type Action = fn(&RunConfig, &mut Outputs) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (name, common, action): (&str, Common, Action) = match cli.command {
        Command::Eig(c) => ("eig", c, commands::eig),
        Command::Branch(c) => ("branch", c, commands::branch),
        Command::Solve(c) => ("solve", c, commands::solve),
        Command::Sweep(c) => ("sweep", c, commands::sweep),
        Command::Classify(c) => ("classify", c, commands::classify_cmd),
        Command::Locus(c) => ("locus", c, commands::locus),
        Command::Render(c) => ("render", c, commands::render),
        Command::Validate(c) => ("validate", c, commands::validate),
    };
    let file = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = common.run.over(file);
    let mut out = Outputs::create(cfg.out_dir())?;
    // Artifacts written before a failure stay listed in the manifest.
    let result = action(&cfg, &mut out);
    out.finish(name, &cfg)?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spiralwave: {e}");
            ExitCode::from(e.code())
        }
    }
}
