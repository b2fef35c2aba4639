mod args;
mod commands;
mod failure;
mod files;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use failure::{CliResult, Failure, Status};
use manifest::RunManifest;

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Size the worker pool from `STATT_THREADS`; returns the thread count in use.
fn configure_threads() -> CliResult<usize> {
    let requested = match std::env::var("STATT_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Failure::config(format!("STATT_THREADS={v:?}: expected a positive integer")))?,
        ),
        Err(_) => None,
    };
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        Ok(1)
    }
}

fn run(cli: Cli) -> CliResult<Status> {
    let threads = configure_threads()?;
    let invocation = commands::resolve(&cli.command)?;
    let started = now();
    let status = commands::execute(&invocation)?;
    if let Status::CheckFailed(msg) = &status {
        eprintln!("check failed: {msg}");
    }
    let path = invocation.manifest_path()?;
    let record = RunManifest {
        invocation,
        library_version: statt::VERSION.to_string(),
        argv: std::env::args().collect(),
        threads,
        started,
        finished: now(),
        exit_code: status.code(),
    };
    manifest::write(&path, &record)?;
    Ok(status)
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(status) => status.code(),
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    };
    ExitCode::from(code)
}
