//! `anneal`: runs one experiment from a TOML config and writes CSV/JSON
//! artifacts plus a `manifest.json` with checksums.
//!
//! Exit codes: 0 on success, 2 for an invalid config (nothing is written),
//! 3 when a numerical module aborts (only the manifest is written, with the
//! module's diagnostics), 1 for I/O failures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::artifacts::{sha256_hex, write_all, Diagnostics, Manifest};
use crate::config::{parse, validate, Command};

#[derive(Parser, Debug)]
#[command(name = "anneal", version, about = "Annealing diffusion experiments")]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Command,

    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,

    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let validated = match parse(&text).and_then(|c| validate(args.command, c, args.seed)) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: invalid config: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already configured: {e}");
        }
    }

    let canonical = serde_json::to_vec(&validated.config).expect("config serializes");
    let mut manifest = Manifest {
        tool: "anneal",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: args.command.name().into(),
        config_sha256: sha256_hex(&canonical),
        seed: validated.seed,
        status: "ok",
        artifacts: Vec::new(),
        diagnostics: None,
    };
    let (artifacts, code) = match run::execute(&validated) {
        Ok(a) => (a, ExitCode::SUCCESS),
        Err(abort) => {
            eprintln!("error: {} aborted: {}", abort.module, abort.message);
            manifest.status = "numerical_abort";
            manifest.diagnostics = Some(Diagnostics { module: abort.module.into(), message: abort.message });
            (Vec::new(), ExitCode::from(3))
        }
    };
    if let Err(e) = write_all(&args.out, &artifacts, manifest) {
        eprintln!("error: writing artifacts to {}: {e}", args.out.display());
        return ExitCode::from(1);
    }
    code
}
