//! `ddabs`: data-driven symbolic control from recorded trajectories.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ddabs_core::pipeline::{self, PipelineConfig};
use ddabs_core::plant::CaseStudy;
use ddabs_core::Error;

#[derive(Parser)]
#[command(
    name = "ddabs",
    version,
    about = "Data-driven symbolic models and controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct StageArgs {
    /// Pipeline configuration (JSON); `DDABS_*` variables override keys.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Record two excited trajectories of the plant.
    Collect(StageArgs),
    /// Solve for and verify the simulation function; report ε.
    Certify(StageArgs),
    /// Build the grid-based symbolic model.
    Abstract(StageArgs),
    /// Synthesize the abstract controller.
    Synth(StageArgs),
    /// Simulate the plant under the refined controller.
    Simulate(StageArgs),
    /// Run every stage of a built-in benchmark.
    Casestudy {
        #[arg(value_enum)]
        spec: Benchmark,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    Safety,
    ReachAvoid,
}

fn load(args: &StageArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn stage<T: serde::Serialize>(
    args: &StageArgs,
    f: fn(&PipelineConfig, &Path) -> Result<T, Error>,
) -> Result<(), Error> {
    let cfg = load(args)?;
    print(&f(&cfg, &args.out)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Collect(a) => stage(&a, pipeline::cmd_collect),
        Command::Certify(a) => stage(&a, pipeline::cmd_certify),
        Command::Abstract(a) => stage(&a, pipeline::cmd_abstract),
        Command::Synth(a) => stage(&a, pipeline::cmd_synth),
        Command::Simulate(a) => stage(&a, pipeline::cmd_simulate),
        Command::Casestudy { spec, out, seed } => {
            let which = match spec {
                Benchmark::Safety => CaseStudy::Safety,
                Benchmark::ReachAvoid => CaseStudy::ReachAvoid,
            };
            let mut cfg = PipelineConfig::case_study(which);
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = pipeline::run_all(&cfg, &out)?;
            print(&pipeline::summarize(&report))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_spec_infeasible() { 2 } else { 1 })
        }
    }
}
