//! `gwspeed`: speed estimates, conductance samples, identity checks and
//! degree-law comparisons from the command line.
//!
//! Exit codes: 0 on success, 1 when a `verify` check fails, 2 on usage,
//! regime or estimation errors.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use commands::{CliError, Report};
use config::{Cli, Format, RunConfig, SEED_ENV};

fn emit(text: &str, cfg: Option<&RunConfig>) -> std::io::Result<()> {
    match cfg.and_then(|c| c.output.as_ref()) {
        Some(path) => fs::write(path, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn fail(err: &CliError, cfg: Option<&RunConfig>) -> ExitCode {
    eprintln!("gwspeed: {}", err.message());
    let body = json!({ "error": err.kind(), "message": err.message() });
    let text = serde_json::to_string_pretty(&body).expect("error serializes") + "\n";
    if let Err(e) = emit(&text, cfg) {
        eprintln!("gwspeed: cannot write report: {e}");
    }
    ExitCode::from(2)
}

fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(&report.json).expect("report serializes") + "\n",
        Format::Csv => report.csv.clone(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match RunConfig::resolve(cli.command, cli.opts, std::env::var(SEED_ENV).ok()) {
        Ok(c) => c,
        Err(msg) => return fail(&CliError::Usage(msg), None),
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match commands::run(&cfg) {
        Ok(report) => {
            if let Err(e) = emit(&render(&report, cfg.format), Some(&cfg)) {
                return fail(&CliError::Failed(format!("cannot write report: {e}")), None);
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e, Some(&cfg)),
    }
}
