//! `agreesim`: run agreement-contract scenarios and check gas deltas.
//!
//! Exit codes: 0 success, 1 a delta check failed, 2 invalid configuration
//! or missing input file, 3 output could not be written.

use std::path::PathBuf;
use std::process::ExitCode;

use agreesim_core::contracts::{LayoutMode, PenaltyPolicy};
use agreesim_core::error::SimError;
use agreesim_core::schedule::GasSchedule;
use agreesim_core::verify::verify_deltas;
use agreesim_core::workload::{
    export, run_scenario, Format, Jitter, MetricsReport, ScenarioConfig,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "agreesim",
    version,
    about = "Agreement contract gas and latency simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its records and aggregates.
    Run(RunArgs),
    /// Check the built-in gas deltas against their reference values.
    VerifyDeltas(VerifyArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario preset name or path to a TOML scenario file.
    #[arg(long, default_value = "registration-sweep")]
    scenario: String,
    /// Schedule preset name or path to a TOML schedule file.
    #[arg(long, default_value = "canonical")]
    schedule: String,
    #[arg(long)]
    layout: Option<LayoutMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[arg(long)]
    policy: Option<PenaltyPolicy>,
    #[arg(long)]
    jitter: Option<Jitter>,
    /// Also write trace.csv with every gas-charging step.
    #[arg(long)]
    trace: bool,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, default_value = "canonical")]
    schedule: String,
    #[arg(long, default_value = "nested")]
    layout: LayoutMode,
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::VerifyDeltas(args) => verify(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                SimError::Io { .. } => EXIT_IO,
                SimError::Config(_) | SimError::Chain(_) => EXIT_CONFIG,
            })
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, SimError> {
    let schedule = GasSchedule::resolve(&args.schedule)?;
    let mut scenario = ScenarioConfig::resolve(&args.scenario)?;
    if let Some(layout) = args.layout {
        scenario.layout = layout;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(policy) = args.policy {
        scenario.policy = policy;
    }
    if let Some(jitter) = args.jitter {
        scenario.jitter = jitter;
    }
    if args.trace {
        scenario.record_traces = true;
    }
    let report = run_scenario(&scenario, &schedule)?;
    let files = export(&report, args.format, &args.out)?;
    print_summary(&report);
    for file in files {
        println!("wrote {}", file.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode, SimError> {
    let schedule = GasSchedule::resolve(&args.schedule)?;
    schedule.validate()?;
    let report = verify_deltas(&schedule, args.layout);
    println!("{report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}

fn print_summary(report: &MetricsReport) {
    println!(
        "scenario {} seed {}: {} transactions, {} blocks, {} unconfirmed",
        report.scenario,
        report.seed,
        report.transactions.len(),
        report.blocks.len(),
        report.unconfirmed
    );
    println!(
        "{:<18} {:>6} {:>6} {:>12} {:>12} {:>12} {:>10}",
        "function", "batch", "count", "lat_median", "lat_p95", "gas_mean", "blocks"
    );
    for a in &report.aggregates {
        println!(
            "{:<18} {:>6} {:>6} {:>12.3} {:>12.3} {:>12.1} {:>10.2}",
            a.function.name(),
            a.batch_size,
            a.count,
            a.latency.median,
            a.latency.p95,
            a.gas_used.mean,
            a.distinct_blocks.mean
        );
    }
    let s = &report.saturation;
    println!(
        "blocks below 80%: {}, at or above 80%: {}, longest saturated run: {}, mean utilization {:.3}",
        s.below_high, s.at_or_above_high, s.max_consecutive_high, s.mean_utilization
    );
    let d = &report.delays;
    println!(
        "penalty delays: {} pairs, {} delayed, mean {:.3}, median {:.3}, p90 {:.3}, max {} blocks",
        d.pairs, d.delayed, d.mean_blocks, d.median_blocks, d.p90_blocks, d.max_blocks
    );
}
