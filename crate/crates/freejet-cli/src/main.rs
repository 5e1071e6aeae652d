//! Command-line driver for the freejet solver. One TOML configuration file
//! drives every subcommand; outputs are plain-text tables plus a key-value
//! run report, all written atomically into the output directory (config
//! `output.dir`, overridable through the FREEJET_OUT_DIR environment
//! variable).

mod config;
mod output;
mod report;
mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "freejet",
    version,
    about = "Rotational free-jet solver: fixed-speed solves, speed fitting, and profile tables",
    long_about = "Computes the incompressible rotational jet issuing from a semi-infinite nozzle \
                  by direct minimization of the governing free-boundary functional. A single TOML \
                  configuration file drives every subcommand; --lambda, --grid-h and --L override \
                  the matching scalar keys. Exit codes: 0 all checks passed, 1 a check failed, \
                  2 configuration error, 3 solver non-convergence."
)]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE", default_value = "freejet.toml")]
    config: PathBuf,
    /// Override physics.lambda (the free-boundary speed).
    #[arg(long, global = true, value_name = "SPEED")]
    lambda: Option<f64>,
    /// Override grid.h (the grid spacing).
    #[arg(long = "grid-h", global = true, value_name = "H")]
    grid_h: Option<f64>,
    /// Override grid.l (the truncation length).
    #[arg(long = "L", global = true, value_name = "LEN")]
    l: Option<f64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit the closed-form profile tables: kappa/f0, chi/u1, h(lambda).
    Profiles,
    /// Solve at a fixed speed; dump field, interface curve, diagnostics.
    Solve,
    /// Fit the free-boundary speed on the largest configured grid.
    Fit,
    /// Fit across the whole (L, h) schedule and report the spread.
    Continue,
    /// Run the property suite against the configured case.
    Verify,
}

fn main() {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Profiles => run::Command::Profiles,
        Cmd::Solve => run::Command::Solve,
        Cmd::Fit => run::Command::Fit,
        Cmd::Continue => run::Command::Continue,
        Cmd::Verify => run::Command::Verify,
    };
    let code = run::drive(run::Invocation {
        config_path: cli.config,
        lambda: cli.lambda,
        grid_h: cli.grid_h,
        l: cli.l,
        command,
    });
    std::process::exit(code);
}
