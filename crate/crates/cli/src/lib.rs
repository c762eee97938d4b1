//! Command-line front end for the `apkinetic` solvers.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure,
//! 3 acceptance-threshold failure (`check`).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "apkinetic", version, about = "AP micro-macro solvers for 1D kinetic equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file; every key is optional.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set run.eps=[1,1e-4]`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set run.output_dir=DIR`.
    #[arg(short, long, value_name = "DIR")]
    pub output_dir: Option<String>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every sweep point and write density snapshots.
    Run(Common),
    /// Time-step refinement study.
    ConvergenceTime(Common),
    /// Grid refinement study.
    ConvergenceSpace(Common),
    /// Micro-macro vs kinetic vs limit model on the same setup.
    Compare(Common),
    /// Run the acceptance criteria.
    Check {
        /// Only these criteria (1-11); repeatable.
        #[arg(long = "criterion", value_name = "ID")]
        criteria: Vec<u8>,
    },
}

impl Common {
    fn resolve(&self) -> CliResult<Config> {
        let mut cfg = Config::load(self.config.as_deref(), &self.set)?;
        if let Some(d) = &self.output_dir {
            cfg.run.output_dir = d.clone();
        }
        Ok(cfg)
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    let (common, f): (Common, fn(&Config) -> CliResult<()>) = match cmd {
        Command::Check { criteria } => return commands::cmd_check(&criteria).map(|_| ()),
        Command::Run(c) => (c, |cfg| commands::cmd_run(cfg).map(|_| ())),
        Command::ConvergenceTime(c) => (c, |cfg| commands::cmd_convergence_time(cfg).map(|_| ())),
        Command::ConvergenceSpace(c) => (c, |cfg| commands::cmd_convergence_space(cfg).map(|_| ())),
        Command::Compare(c) => (c, |cfg| commands::cmd_compare(cfg).map(|_| ())),
    };
    let cfg = common.resolve()?;
    if common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    f(&cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
