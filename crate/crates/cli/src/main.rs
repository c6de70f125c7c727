use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod plots;

/// Stationary shear flows of nematic liquid crystals: bifurcation diagrams, Evans-function
/// spectra and energy decay.
#[derive(Debug, Parser)]
#[command(name = "shearlab", version, about)]
pub struct Cli {
    /// JSON run configuration; the built-in default material when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for random perturbations and samples.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the material parameters and the run configuration.
    Validate,
    /// Sweep the shear speed and write the branch diagram and the D curve.
    Bifurcation {
        /// Largest shear speed; twice the first critical speed by default.
        #[arg(long)]
        ubar_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Reconstruct stationary profiles.
    Stationary {
        #[command(flatten)]
        target: Target,
        /// Grid size (odd); the configured profile size by default.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Scan the Evans function along the real axis.
    Evans {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        window: LambdaWindow,
    },
    /// Real eigenvalues with the zero-eigenvalue identity.
    Eigs {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        window: LambdaWindow,
    },
    /// Evolve the linearized flow from random perturbations and fit the decay rate.
    Evolve {
        #[command(flatten)]
        target: Target,
        /// Final time.
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Time step; the grid spacing by default.
        #[arg(long)]
        dt: Option<f64>,
        /// Number of seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run the verification suite and write a single verdict.
    Report {
        /// Reduced sample counts.
        #[arg(long)]
        quick: bool,
    },
    /// Render SVG plots from CSV outputs.
    Plot {
        /// CSV files written by the other commands.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Lower,
    Upper,
    All,
}

/// A stationary solution given by its level or by its shear speed.
#[derive(Debug, Args)]
pub struct Target {
    /// Hamiltonian level.
    #[arg(long, conflicts_with = "ubar", required_unless_present = "ubar")]
    pub beta: Option<f64>,
    /// Shear speed; solved for on `--interval`.
    #[arg(long)]
    pub ubar: Option<f64>,
    /// Interval index for `--ubar` (0 is `(0, beta_1)`).
    #[arg(long, default_value_t = 0)]
    pub interval: usize,
    /// Which root to keep when `--ubar` has several on the interval.
    #[arg(long, value_enum, default_value_t = Branch::All)]
    pub branch: Branch,
}

#[derive(Debug, Args)]
pub struct LambdaWindow {
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_max: Option<f64>,
    /// Scan points.
    #[arg(long, default_value_t = 301)]
    pub points: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
