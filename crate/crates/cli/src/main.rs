//! `qplab` — command-line driver for the quasi-periodic operator laboratory.
//!
//! Every subcommand reads a JSON configuration document, validates it fully
//! before touching the filesystem, runs one experiment, and writes its
//! artifacts (CSV record, PNG quick-look, `summary.json`, `manifest.json`)
//! into the output directory.
//!
//! Exit codes: 0 success; 2 configuration error (nothing written);
//! 3 numerical-guard failure (manifest written with the failure recorded).

mod config;
mod manifest;
mod plot;
mod runs;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, ConfigResult};
use manifest::{sha256_hex, Manifest};
use runs::Job;
use serde::de::DeserializeOwned;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "qplab",
    version,
    about = "Numerical laboratory for quasi-periodic Schrödinger operators",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan an annulus of quasi-momenta for non-resonant cells.
    Scan(RunArgs),
    /// Trace an isoenergetic surface over sampled directions.
    Surface(RunArgs),
    /// Build an energy-bounded projection region and run quadrature checks.
    Project(RunArgs),
    /// Evolve a tapered wave packet and fit the transport exponent.
    Transport(RunArgs),
    /// Compare an oscillatory integral against its stationary-phase term.
    Stationary(RunArgs),
    /// Tabulate small-divisor margins of the sampled frequencies.
    Diophantine(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = "qplab_out")]
    out: PathBuf,
    /// Override the sampling seed of a seed-defined potential.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides QPLAB_THREADS and the config document).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Scan(a) => ("scan", a),
        Command::Surface(a) => ("surface", a),
        Command::Project(a) => ("project", a),
        Command::Transport(a) => ("transport", a),
        Command::Stationary(a) => ("stationary", a),
        Command::Diophantine(a) => ("diophantine", a),
    };

    // Stage 1: configuration. Any failure exits 2 with nothing written.
    let (job, sha, threads) = match stage(name, args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("qplab {name}: configuration error: {e}");
            return 2;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!(
            "qplab {name}: configuration error: cannot create output directory {}: {e}",
            args.out.display()
        );
        return 2;
    }

    // Stage 2: execution. Failures are recorded in the manifest, exit 3.
    let started = Instant::now();
    let result = (job.execute)(&args.out);
    let runtime = started.elapsed().as_secs_f64();
    let mut mf = Manifest {
        tool: "qplab",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.to_string(),
        config_sha256: sha,
        seed_override: args.seed,
        threads,
        runtime_seconds: runtime,
        status: "ok",
        error: None,
        artifacts: Vec::new(),
    };
    match result {
        Ok(outcome) => {
            let mut artifacts = outcome.artifacts;
            let summary = match serde_json::to_string_pretty(&outcome.summary) {
                Ok(mut s) => {
                    s.push('\n');
                    s
                }
                Err(e) => {
                    return finish_guard(name, &args.out, mf, format!("summary serialization: {e}"))
                }
            };
            if let Err(e) = std::fs::write(args.out.join("summary.json"), summary) {
                return finish_guard(name, &args.out, mf, format!("cannot write summary.json: {e}"));
            }
            artifacts.push("summary.json".to_string());
            mf.artifacts = artifacts;
            if let Err(e) = mf.write(&args.out) {
                eprintln!("qplab {name}: cannot write manifest.json: {e}");
                return 3;
            }
            println!(
                "qplab {name}: ok — {} artifacts in {} ({:.3} s)",
                mf.artifacts.len() + 1,
                args.out.display(),
                runtime
            );
            for a in &mf.artifacts {
                println!("  {}", args.out.join(a).display());
            }
            0
        }
        Err(e) => finish_guard(name, &args.out, mf, e.to_string()),
    }
}

fn finish_guard(name: &str, out: &std::path::Path, mut mf: Manifest, msg: String) -> i32 {
    eprintln!("qplab {name}: numerical guard: {msg}");
    mf.status = "guard_failure";
    mf.error = Some(msg);
    mf.artifacts = Vec::new();
    if let Err(e) = mf.write(out) {
        eprintln!("qplab {name}: cannot write manifest.json: {e}");
    }
    3
}

/// Reads and validates the configuration, resolves the thread count, builds
/// the job. No filesystem writes happen here.
fn stage(name: &str, args: &RunArgs) -> ConfigResult<(Job, String, usize)> {
    let raw = std::fs::read(&args.config).map_err(|e| {
        ConfigError(format!(
            "cannot read config {}: {e}",
            args.config.display()
        ))
    })?;
    let sha = sha256_hex(&raw);
    let mut doc: serde_json::Value = serde_json::from_slice(&raw)
        .map_err(|e| ConfigError(format!("config is not valid JSON: {e}")))?;
    let threads = resolve_threads(args.threads, config::config_threads(&doc))?;
    // `threads` is handled here, uniformly for every subcommand; hide it from
    // the schema parsers so they can reject any other unknown field.
    if let Some(map) = doc.as_object_mut() {
        map.remove("threads");
    }

    let job = match name {
        "scan" => runs::prepare_scan(parse(doc)?, args.seed)?,
        "surface" => runs::prepare_surface(parse(doc)?, args.seed)?,
        "project" => runs::prepare_project(parse(doc)?, args.seed)?,
        "transport" => runs::prepare_transport(parse(doc)?, args.seed)?,
        "stationary" => runs::prepare_stationary(parse(doc)?, args.seed)?,
        "diophantine" => runs::prepare_diophantine(parse(doc)?, args.seed)?,
        _ => unreachable!("clap restricts subcommands"),
    };
    Ok((job, sha, threads))
}

fn parse<T: DeserializeOwned>(doc: serde_json::Value) -> ConfigResult<T> {
    serde_json::from_value(doc).map_err(|e| ConfigError(format!("invalid configuration: {e}")))
}

/// Thread priority: `--threads` flag, then `QPLAB_THREADS`, then the config
/// document, then the rayon default. Returns the count actually in effect.
fn resolve_threads(flag: Option<usize>, from_config: Option<usize>) -> ConfigResult<usize> {
    let from_env = match std::env::var("QPLAB_THREADS") {
        Ok(s) => Some(s.parse::<usize>().map_err(|_| {
            ConfigError(format!("QPLAB_THREADS must be a positive integer, got {s:?}"))
        })?),
        Err(_) => None,
    };
    let requested = flag.or(from_env).or(from_config);
    if let Some(n) = requested {
        if n == 0 {
            return Err(ConfigError("thread count must be ≥ 1".into()));
        }
        // A second initialization attempt (tests in one process) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}
