//! `kyle-eq`: solve, analyse and simulate the penalised Kyle equilibrium.
//!
//! Exit codes: 0 success, 2 configuration error, 3 non-convergence,
//! 4 numerical failure. Errors are printed to stderr as a JSON object.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use commands::{Mesh, SweepGrid};
use config::{CommonArgs, RunConfig};
use output::Sink;

#[derive(Debug, Parser)]
#[command(name = "kyle-eq", version, about = "Equilibrium of the Kyle model with quadratic trading penalties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Iterate the fixed-point operator; writes the report and φ on its grid.
    Solve(CommonArgs),
    /// Closed-form Gaussian equilibrium summary.
    Gaussian(CommonArgs),
    /// Closed-form Bernoulli equilibrium.
    Bernoulli(CommonArgs),
    /// Equilibrium quantities plus pricing-rule and strategy surfaces.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        mesh: MeshArgs,
    },
    /// Monte Carlo simulation of the equilibrium demand.
    Simulate(CommonArgs),
    /// Normalised comparative statics over a log-spaced κ grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 1e-2)]
        kappa_min: f64,
        #[arg(long, default_value_t = 1e2)]
        kappa_max: f64,
    },
}

#[derive(Debug, Args)]
struct MeshArgs {
    #[arg(long, default_value_t = 51)]
    nt: usize,
    #[arg(long, default_value_t = 201)]
    ny: usize,
    /// Half-width of the y range in units of σ.
    #[arg(long, default_value_t = 4.0)]
    y_half_width: f64,
}

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    code: u8,
    message: String,
    detail: Value,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: "config", code: 2, message: message.into(), detail: Value::Null }
    }

    fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind, "exit_code": self.code, "message": self.message });
        if !self.detail.is_null() {
            v["detail"] = self.detail.clone();
        }
        v
    }
}

impl From<kyle_core::Error> for CliError {
    fn from(e: kyle_core::Error) -> Self {
        use kyle_core::Error as E;
        let message = e.to_string();
        match e {
            E::InvalidArgument(_) => Self::config(message),
            E::NonConvergence { iterations, residual, history } => Self {
                kind: "non_convergence",
                code: 3,
                message,
                detail: json!({ "iterations": iterations, "residual": residual, "history": history }),
            },
            E::Range { .. } | E::Domain(_) | E::Numerical(_) => {
                Self { kind: "numerical", code: 4, message, detail: Value::Null }
            }
        }
    }
}

fn run(cli: Cli) -> Result<Value, CliError> {
    let common = match &cli.command {
        Command::Solve(c) | Command::Gaussian(c) | Command::Bernoulli(c) | Command::Simulate(c) => c,
        Command::Analyze { common, .. } | Command::Sweep { common, .. } => common,
    };
    let cfg = RunConfig::resolve(common)?;
    if let Some(p) = &common.write_config {
        fs::write(p, cfg.to_pretty_json()).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
    }
    let sink = Sink::new(&cfg)?;
    sink.config(&cfg)?;
    match cli.command {
        Command::Solve(_) => commands::solve(&cfg, &sink),
        Command::Gaussian(_) => commands::gaussian(&cfg, &sink),
        Command::Bernoulli(_) => commands::bernoulli(&cfg, &sink),
        Command::Analyze { mesh, .. } => {
            commands::analyze(&cfg, &sink, Mesh { nt: mesh.nt, ny: mesh.ny, y_half_width: mesh.y_half_width })
        }
        Command::Simulate(_) => commands::simulate_cmd(&cfg, &sink),
        Command::Sweep { points, kappa_min, kappa_max, .. } => {
            commands::sweep_cmd(&sink, SweepGrid { points, kappa_min, kappa_max })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = CliError::config(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code);
        }
    };
    match run(cli) {
        Ok(doc) => {
            // a closed pipe downstream is not a failure of the run
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&doc).expect("JSON values serialise"));
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.code)
        }
    }
}
