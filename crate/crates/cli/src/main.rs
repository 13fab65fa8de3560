use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qlimits::config::ExperimentKind;
use qlimits::manifest::{verify_manifest, Verdict};
use qlimits::{exit, run_experiment, RunRequest, SEED_ENV};

#[derive(Parser)]
#[command(
    name = "qlimits",
    version,
    about = "Seeded truncation, readout, fidelity and echo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML (or .json) experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config and QLIMITS_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    TruncateSweep(RunArgs),
    Readout(RunArgs),
    Fidelity(RunArgs),
    PeresCondition(RunArgs),
    PeresEcho(RunArgs),
    SpeedLimit(RunArgs),
    /// Recompute checksums of a run directory.
    Verify {
        dir: PathBuf,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Verify { dir } => return verify(&dir),
        Command::TruncateSweep(a) => (ExperimentKind::TruncateSweep, a),
        Command::Readout(a) => (ExperimentKind::Readout, a),
        Command::Fidelity(a) => (ExperimentKind::Fidelity, a),
        Command::PeresCondition(a) => (ExperimentKind::PeresCondition, a),
        Command::PeresEcho(a) => (ExperimentKind::PeresEcho, a),
        Command::SpeedLimit(a) => (ExperimentKind::SpeedLimit, a),
    };
    if args.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return code(exit::INPUT);
    }
    let result = run_experiment(&RunRequest {
        experiment: Some(kind),
        config: args.config,
        out: args.out,
        seed: args.seed,
        threads: args.threads,
        env_seed: std::env::var(SEED_ENV).ok(),
    });
    if let Some(err) = &result.error {
        eprintln!("error: {err}");
        return code(result.exit_code);
    }
    println!("{} -> {}", kind.name(), result.dir.display());
    for line in &result.summary {
        println!("  {line}");
    }
    if !result.violations.is_empty() {
        println!("violations ({}):", result.violations.len());
        for v in result.violations.iter().take(20) {
            println!("  {v}");
        }
        if result.violations.len() > 20 {
            println!(
                "  ... {} more in the output files",
                result.violations.len() - 20
            );
        }
    }
    code(result.exit_code)
}

fn verify(dir: &std::path::Path) -> ExitCode {
    match verify_manifest(dir) {
        Err(e) => {
            eprintln!("error: {e:#}");
            code(exit::INPUT)
        }
        Ok(verdict) => {
            println!("{}", verdict.label());
            match verdict {
                Verdict::Ok => code(exit::OK),
                Verdict::Stale(why) | Verdict::Corrupt(why) => {
                    for w in why {
                        println!("  {w}");
                    }
                    code(exit::VIOLATION)
                }
            }
        }
    }
}
