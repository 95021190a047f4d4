//! `boa-pta`: solver runs, cold-start tuning campaigns, Monte-Carlo
//! acceleration and speed-up reports.
//!
//! Exit status: 0 on success, 1 on numerical non-convergence, 2 on usage,
//! configuration or netlist errors.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use boapta_core::{AcquisitionKind, BoConfig, McOptions};
use clap::{Parser, Subcommand};

use crate::commands::{McMethod, Method, OptimizeArgs};
use crate::config::{load_circuits, DefaultsTable, FileConfig, CONFIG_ENV};
pub use crate::error::CliError;

#[derive(Parser)]
#[command(name = "boa-pta", version, about = "Bayesian tuning of pseudo-transient DC solver parameters")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Campaign settings shared by `optimize` and `mc`.
#[derive(clap::Args)]
struct BoFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// ei, ucb or mes.
    #[arg(long)]
    acquisition: Option<AcquisitionKind>,
    #[arg(long)]
    ucb_beta: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
}

impl BoFlags {
    fn apply(&self, mut c: BoConfig) -> BoConfig {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.acquisition {
            c.acquisition.kind = v;
        }
        if let Some(v) = self.ucb_beta {
            c.acquisition.ucb_beta = v;
        }
        if let Some(v) = self.restarts {
            c.acquisition.restarts = v;
        }
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve netlists and print one JSON result per line.
    Simulate {
        /// Netlist files, or `suite:NAME` for a bundled deck.
        paths: Vec<String>,
        /// Add every bundled deck.
        #[arg(long)]
        suite: bool,
        #[arg(long, value_enum, default_value = "cepta")]
        method: Method,
        /// Pseudo capacitance.
        #[arg(long)]
        c: Option<f64>,
        /// Pseudo inductance.
        #[arg(long)]
        l: Option<f64>,
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long)]
        g0: Option<f64>,
        /// Ramp time constant.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Cold-start Bayesian tuning over a circuit set.
    Optimize {
        /// Netlist files, or `suite:NAME` for a bundled deck.
        paths: Vec<String>,
        /// Add every bundled deck.
        #[arg(long)]
        suite: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        bo: BoFlags,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run a baseline campaign (only `random` is available).
        #[arg(long, value_parser = ["random"])]
        baseline: Option<String>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Monte-Carlo runs at constant default parameters and with per-sample tuning.
    Mc {
        /// Netlist file or `suite:NAME`.
        netlist: String,
        /// Relative standard deviation of the resistor values.
        #[arg(long, default_value_t = 0.05)]
        variation: f64,
        #[arg(long, short = 'n', default_value_t = 200)]
        samples: usize,
        #[command(flatten)]
        bo: BoFlags,
        #[arg(long, value_enum, default_value = "both")]
        method: McMethod,
        /// Checkpoint of an earlier `optimize` run to warm-start from.
        #[arg(long)]
        warm: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Speed-up table from a trial log.
    Report {
        /// `trials.jsonl` written by `optimize`.
        log: PathBuf,
        /// Compare against this log instead of the default-parameter runs.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Also write CSV and SVG files here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out_dir = |flag: Option<PathBuf>| flag.or_else(|| file.output.clone()).unwrap_or_else(|| PathBuf::from("boa-pta-out"));
    match cli.command {
        Command::Simulate { paths, suite, method, c, l, r0, g0, tau } => {
            let circuits = load_circuits(&paths, suite, file.circuits.as_deref())?;
            let params = DefaultsTable { c, l, r0, g0, tau }.apply(file.bo_config().defaults);
            commands::simulate(&circuits, method, &params)
        }
        Command::Optimize { paths, suite, epochs, bo, out, baseline, resume } => {
            let circuits = load_circuits(&paths, suite, file.circuits.as_deref())?;
            let mut config = bo.apply(file.bo_config());
            if let Some(e) = epochs {
                config.epochs = e;
            }
            let args = OptimizeArgs { out: out_dir(out), resume, epochs_override: epochs, random_baseline: baseline.is_some() };
            commands::optimize(circuits, config, &args)
        }
        Command::Mc { netlist, variation, samples, bo, method, warm, out } => {
            let config = bo.apply(file.bo_config());
            let opts = McOptions { variation, samples, seed: config.seed };
            opts.validate()?;
            let circuit = load_circuits(&[netlist], false, None)?.remove(0);
            commands::monte_carlo(circuit, config, opts, method, warm.as_deref(), &out_dir(out))
        }
        Command::Report { log, baseline, out } => commands::report(&log, baseline.as_deref(), out.as_deref()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: numerical non-convergence");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
