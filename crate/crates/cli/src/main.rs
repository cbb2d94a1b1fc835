#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pllab::{catalogue_lines, execute, load_config, run_suite_to, suite, CliError};

#[derive(Debug, Parser)]
#[command(name = "pllab", version, about = "Numerical checks of PL inequalities, gradient flows and distance fields")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Relative slack on the continuum bounds.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the built-in acceptance suite.
    Suite {
        /// Print criterion identifiers without running.
        #[arg(long)]
        list: bool,
        #[arg(long, default_value = "pllab-suite")]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// List catalogue fields.
    Catalogue,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command.unwrap_or(Command::Catalogue) {
        Command::Catalogue => {
            for line in catalogue_lines() {
                println!("{line}");
            }
            Ok(0)
        }
        Command::Suite { list: true, .. } => {
            for line in suite::list_lines() {
                println!("{line}");
            }
            Ok(0)
        }
        Command::Suite { list: false, out, tol } => {
            let eps = check_tol(tol)?.unwrap_or(pllab_core::flow::DEFAULT_EPS_CHECK);
            let result = run_suite_to(&out, eps)?;
            for line in &result.lines {
                println!("{line}");
            }
            eprintln!("report written to {}", result.report_path.display());
            Ok(result.exit_code)
        }
        Command::Run { config, seed, out, tol } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(t) = check_tol(tol)? {
                cfg.set_eps_check(t);
            }
            let result = execute(&cfg, &cfg.output_dir)?;
            for line in &result.lines {
                println!("{line}");
            }
            println!("{}", result.summary_json(cfg.task));
            if result.exit_code == 1 {
                eprintln!(
                    "{} of {} checks failed; see {}",
                    result.n_failed,
                    result.n_checks,
                    result.report_path.display()
                );
            }
            Ok(result.exit_code)
        }
    }
}

fn check_tol(tol: Option<f64>) -> Result<Option<f64>, CliError> {
    match tol {
        Some(t) if !(t >= 0.0) || !t.is_finite() => {
            Err(CliError::Config("--tol must be finite and >= 0".into()))
        }
        other => Ok(other),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", serde_json::json!({ "exit_code": e.exit_code(), "error": e.to_string() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
