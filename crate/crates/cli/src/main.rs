mod args;
mod commands;
mod output;

use std::ffi::OsString;
use std::time::Instant;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use netsir::ErrorKind;

use args::Cli;
use commands::{Context, Outcome};
use output::{exit_code, kind_label, sha256_hex, sidecar, Failure, Outputs, RunManifest};

fn main() {
    std::process::exit(run(std::env::args_os().collect()));
}

/// Errors go to stderr as `error[<kind>]: <message>`.
fn report(kind: &str, msg: impl std::fmt::Display) {
    eprintln!("error[{kind}]: {msg}");
}

fn run(argv: Vec<OsString>) -> i32 {
    let started = Instant::now();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            report(
                kind_label(ErrorKind::Validation),
                text.trim_start_matches("error: ").trim_end(),
            );
            return 1;
        }
    };
    let config = match &cli.config {
        Some(path) => match std::fs::read(path) {
            Ok(bytes) => Some(bytes),
            Err(e) => {
                report(
                    kind_label(ErrorKind::Validation),
                    format!("cannot read {}: {e}", path.display()),
                );
                return 1;
            }
        },
        None => None,
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut ctx = Context {
        cli: &cli,
        config: config.as_deref(),
        out: Outputs::default(),
    };
    let result = netsir::montecarlo::with_workers(workers, || commands::dispatch(&mut ctx))
        .map_err(Failure::from)
        .and_then(|r| r);
    let code = match result {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::Inconclusive(why)) => {
            report(kind_label(ErrorKind::Inconclusive), &why);
            exit_code(ErrorKind::Inconclusive)
        }
        Err(e) => {
            report(kind_label(e.kind()), &e);
            exit_code(e.kind())
        }
    };
    let manifest_path = cli
        .manifest
        .clone()
        .or_else(|| ctx.out.files.first().map(|p| sidecar(p, ".manifest.json")));
    if let Some(path) = manifest_path {
        let manifest = RunManifest {
            tool: "netsir",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: commands::subcommand_name(&cli.command).to_string(),
            args: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
            seed: cli.seed,
            workers,
            config: cli.config.as_ref().map(|p| p.display().to_string()),
            config_sha256: config.as_deref().map(sha256_hex),
            outputs: ctx.out.files.iter().map(|p| p.display().to_string()).collect(),
            exit_code: code,
            wall_time_seconds: started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        if let Err(e) = std::fs::write(&path, text + "\n") {
            report(
                kind_label(ErrorKind::Validation),
                format!("cannot write manifest {}: {e}", path.display()),
            );
            return code.max(1);
        }
    }
    code
}
