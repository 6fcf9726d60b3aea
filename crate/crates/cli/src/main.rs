use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use granular_bath::{run, ExperimentConfig, Overrides, RunOptions, Scenario};

/// Simulate and analyse a granular gas driven by a thermal bath.
#[derive(Debug, Parser)]
#[command(name = "granular-bath", version)]
struct Args {
    scenario: Scenario,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `outputDir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `simulation.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Continue a `simulate` run from a snapshot file.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let overrides = Overrides {
        scenario: Some(args.scenario),
        output_dir: args.out,
        seed: args.seed,
    };
    let options = RunOptions {
        workers: args.workers,
        resume: args.resume,
    };
    let result = ExperimentConfig::load(&args.config)
        .and_then(|c| c.materialize(&overrides))
        .and_then(|c| run(c, &options));
    match result {
        Ok(report) => {
            for check in report.checks.values() {
                let mark = if check.passed { "PASS" } else { "FAIL" };
                println!("[{mark}] C{:<2} {}: {}", check.criterion, check.name, check.summary);
            }
            for label in &report.non_converged {
                println!("[NOT CONVERGED] {label}");
            }
            println!(
                "report: {} ({:.1} s)",
                report.config.output_dir().join("report.json").display(),
                report.wall_clock_seconds
            );
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
