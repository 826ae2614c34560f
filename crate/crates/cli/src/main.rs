//! `zklab`: configuration driven runner for the Zakharov-Kuznetsov laboratory.
//!
//! Exit status: 0 when every verdict passes, 1 when any verdict fails or a run is
//! falsified (divergence, violated identity), 2 on usage and configuration errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::output::Run;

/// A usage or configuration problem, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "zklab", version, about = "Zakharov-Kuznetsov simulation and I-method verification runs")]
struct Cli {
    /// JSON run configuration layered over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, created when missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Sets a config leaf by dotted path; VALUE is JSON or a bare string.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the equation and tabulate the conserved and corrected functionals.
    Solve,
    /// Drift of the corrected mass across a dyadic list of N.
    #[command(name = "scan-n")]
    ScanN,
    /// Run the selected verifiers.
    Verify {
        /// Verifier to run (repeatable); replaces `verify.verifiers`.
        #[arg(long = "verifier", value_name = "NAME")]
        verifiers: Vec<String>,
    },
    /// Whitney tile classification table and almost-orthogonality counts.
    #[command(name = "decomp-stats")]
    DecompStats,
    /// Empirical bilinear Strichartz constants.
    Strichartz,
    /// Determinant factorization of the surface normals.
    Transversality,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::ScanN => "scan-n",
            Command::Verify { .. } => "verify",
            Command::DecompStats => "decomp-stats",
            Command::Strichartz => "strichartz",
            Command::Transversality => "transversality",
        }
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("out={}", serde_json::Value::String(out.display().to_string())));
    }
    if let Command::Verify { verifiers } = &cli.command {
        if !verifiers.is_empty() {
            overrides.push(format!("verify.verifiers={}", serde_json::to_string(verifiers)?));
        }
    }
    let cfg = config::resolve(cli.config.as_deref(), &overrides, cli.command.name())?;
    if let Command::Verify { .. } = cli.command {
        commands::check_verifiers(&cfg.verify.verifiers)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("cannot size the thread pool: {e}")))?;
    }
    let cfg = resolve(cli)?;
    let mut run = Run::start(&cfg).map_err(|e| UsageError(format!("{e:#}")))?;
    match cli.command {
        Command::Solve => commands::solve(&mut run, &cfg)?,
        Command::ScanN => commands::scan_n(&mut run, &cfg)?,
        Command::Verify { .. } => commands::verify(&mut run, &cfg)?,
        Command::DecompStats => commands::decomp_stats(&mut run, &cfg)?,
        Command::Strichartz => commands::strichartz(&mut run, &cfg)?,
        Command::Transversality => commands::transversality(&mut run, &cfg)?,
    }
    Ok(run.finish()?.passed)
}

/// Falsifying outcomes exit with 1, everything else that stops a run with 2.
fn exit_status(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<zklab::Error>() {
        Some(zklab::Error::Diverged { .. } | zklab::Error::Verification(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
