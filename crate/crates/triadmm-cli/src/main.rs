//! `triadmm`: run 3-block semi-proximal ADMM experiments from JSON configs.

mod runspec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes: 0 converged (or certify-only/sweep succeeded), 2 diverged,
/// 3 iteration limit, 1 error.
#[derive(Parser)]
#[command(
    name = "triadmm",
    about = "3-block semi-proximal ADMM: solver, convergence certificates, experiment runner",
    long_about = "Runs 3-block semi-proximal ADMM experiments described by JSON configs or named \
presets. Every run checks the convergence certificate first (operators M and H plus the first-block \
condition) and writes the report JSON, then solves and writes a CSV iteration trace.\n\n\
Config defaults: sigma = 1, tau = 1, proximal terms linearized-as-needed (zero for quadratic \
blocks, eta*I - sigma*A A^* for prox blocks), tol_kkt = 1e-8, max_iter = 100000, alpha = 1, \
trace = trace.csv, report = report.json. The config schema ships in schema/config.schema.json.\n\n\
Exit codes: 0 converged, 2 diverged, 3 iteration limit, 1 error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file
    Run {
        /// Path to the config (see schema/config.schema.json)
        config: PathBuf,
        /// Check and report the certificate, skip the solve
        #[arg(long)]
        certify_only: bool,
        /// Trace CSV path (overrides the config; default trace.csv)
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Report JSON path (overrides the config; default report.json)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a named preset (chyy, chyy-divergent, chyy-small-sigma,
    /// chyy-large-t3, chyy-tau-1.6, qsdp-demo, qsdp-demo-psd,
    /// random-qp:<seed>; TRIADMM_SEED overrides the random seed)
    Preset {
        name: String,
        /// Print the resolved run spec as JSON instead of running
        #[arg(long)]
        show: bool,
        /// Check and report the certificate, skip the solve
        #[arg(long)]
        certify_only: bool,
        /// Trace CSV path (default trace.csv)
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Report JSON path (default report.json)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the sweep section of a JSON config and emit a summary CSV
    Sweep {
        /// Path to the config with a `sweep` section
        config: PathBuf,
        /// Summary CSV path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            certify_only,
            trace,
            report,
        } => runspec::parse_config(&config).and_then(|mut spec| {
            if let Some(t) = trace {
                spec.trace_path = t;
            }
            if let Some(r) = report {
                spec.report_path = r;
            }
            runspec::run_experiment(&spec, certify_only)
        }),
        Command::Preset {
            name,
            show,
            certify_only,
            trace,
            report,
        } => runspec::preset(&name).and_then(|mut spec| {
            if show {
                println!("{}", runspec::describe(&spec));
                return Ok(0);
            }
            if let Some(t) = trace {
                spec.trace_path = t;
            }
            if let Some(r) = report {
                spec.report_path = r;
            }
            runspec::run_experiment(&spec, certify_only)
        }),
        Command::Sweep { config, out } => {
            runspec::parse_config(&config).and_then(|spec| runspec::sweep(&spec, out.as_deref()))
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
