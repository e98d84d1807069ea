use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use remlab::manifest::{ExperimentManifest, Workers};
use remlab::{run_experiment, suite, CliError};
use remlab_core::theory::{critical_beta, diagnose, free_energy_limit};

/// Random Energy Model experiments.
#[derive(Parser)]
#[command(name = "remlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one manifest and write its artifacts.
    Run {
        manifest: PathBuf,
        /// Worker pool size: a positive integer or "auto".
        #[arg(long)]
        workers: Option<Workers>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides master_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in acceptance suite.
    Verify {
        #[arg(long)]
        workers: Option<Workers>,
    },
    /// Print the limiting free energy, critical beta and regime.
    Theory { alpha: f64, beta: f64 },
}

/// Flag, then manifest, then `REMLAB_WORKERS`, then one per core.
fn workers(flag: Option<Workers>, manifest: Option<Workers>) -> Result<Workers, CliError> {
    if let Some(w) = flag {
        return Ok(w);
    }
    if let Some(w) = manifest.filter(|w| *w != Workers::Auto) {
        return Ok(w);
    }
    match std::env::var("REMLAB_WORKERS") {
        Ok(v) => v.parse().map_err(|e| CliError::Invalid(format!("REMLAB_WORKERS: {e}"))),
        Err(_) => Ok(Workers::Auto),
    }
}

fn run(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Run {
            manifest,
            workers: flag,
            output_dir,
            seed,
        } => {
            let text = std::fs::read_to_string(&manifest)
                .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", manifest.display())))?;
            let mut m = ExperimentManifest::from_json(&text)
                .map_err(|e| CliError::Invalid(format!("{}: {}", manifest.display(), inner(e))))?;
            m.workers = workers(flag, Some(m.workers))?;
            if let Some(dir) = output_dir {
                m.output_dir = dir;
            }
            if let Some(s) = seed {
                m.master_seed = s;
            }
            let outcome = run_experiment(&m)?;
            for c in &outcome.artifacts.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {}", outcome.output_dir.display());
            Ok(outcome.passed())
        }
        Command::Verify { workers: flag } => {
            let pool = workers(flag, None)?.resolve();
            let verdicts = suite::verify(pool, |v| println!("{}", v.line()))?;
            let passed = verdicts.iter().filter(|v| v.passed).count();
            println!("{passed} of {} criteria passed", verdicts.len());
            Ok(passed == verdicts.len())
        }
        Command::Theory { alpha, beta } => {
            let limit = free_energy_limit(alpha, beta)?;
            let critical = critical_beta(alpha)?;
            let regime = diagnose(alpha, beta)?.regime;
            println!("free_energy_limit {limit:?}");
            println!("critical_beta {critical:?}");
            println!("regime {regime}");
            Ok(true)
        }
    }
}

fn inner(e: CliError) -> String {
    match e {
        CliError::Invalid(s) | CliError::Runtime(s) => s,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("remlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
