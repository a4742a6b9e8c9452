//! Argument parsing and command dispatch.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hexplan_core::oracle::OracleLimits;
use hexplan_core::schedule::SchedulerConfig;

use crate::commands::{
    cmd_bandwidth_sweep, cmd_compare, cmd_oracle, cmd_random_baseline, cmd_scale_bench, cmd_schedule, Outcome,
    PlanInputs,
};
use crate::error::{CliError, EXIT_INFEASIBLE};
use crate::exec::PoolExecutor;
use crate::io::{load_cluster, load_model, sha256_hex};
use crate::report::{to_json, RunRecord};

#[derive(Debug, Parser)]
#[command(name = "hexplan", version, about = "Parallel execution planning for heterogeneous GPU clusters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for an execution plan.
    Schedule(PlanArgs),
    /// Compare the scheduler with the best symmetric plan and the exhaustive optimum.
    Compare(PlanArgs),
    /// Exhaustive search over the plan space of a small cluster.
    Oracle {
        #[command(flatten)]
        plan: PlanArgs,
        /// Only report the size of the plan space.
        #[arg(long)]
        count_only: bool,
    },
    /// Scheduler against the same search with random partitions.
    RandomBaseline {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 20)]
        runs: usize,
    },
    /// Scheduler runtime and MFU on generated clusters of growing size.
    ScaleBench(ScaleArgs),
    /// MFU as every inter-machine bandwidth is rescaled.
    BandwidthSweep {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,5")]
        scales: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub global_batch: u32,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub micro_batches: Vec<u32>,
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Candidates kept per step of the stage-ordering search.
    #[arg(long, default_value_t = 2)]
    pub tau: usize,
    #[arg(long, default_value_t = 1.2)]
    pub balance_cap: f64,
    /// Directory for the report files; stdout only when absent.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

impl SearchArgs {
    pub fn config(&self) -> SchedulerConfig {
        SchedulerConfig {
            micro_batch_candidates: self.micro_batches.clone(),
            tau: self.tau,
            balance_cap: self.balance_cap,
            iterations: self.iterations,
            seed: self.seed,
            ..SchedulerConfig::new(self.global_batch)
        }
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Cluster description (.toml or .json).
    #[arg(long)]
    pub cluster: PathBuf,
    /// Model shape (.toml or .json).
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "64,128,192,256,320")]
    pub sizes: Vec<usize>,
    /// Seed of the cluster generator.
    #[arg(long, default_value_t = 0)]
    pub cluster_seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
}

fn load_inputs(plan: &PlanArgs) -> Result<PlanInputs, CliError> {
    let (cluster, cluster_digest) = load_cluster(&plan.cluster)?;
    let (model, model_digest) = load_model(&plan.model)?;
    Ok(PlanInputs {
        cluster,
        model,
        inputs: vec![cluster_digest, model_digest],
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<command>.json`, `<command>.txt` and `run.json` into `dir`.
pub fn write_outputs(dir: &Path, outcome: &Outcome, record: &RunRecord) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join(format!("{}.json", outcome.command)), &outcome.json)?;
    write_file(&dir.join(format!("{}.txt", outcome.command)), &outcome.table)?;
    write_file(&dir.join("run.json"), &to_json(record))
}

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    let executor = PoolExecutor::from_env()?;
    let start = Instant::now();
    let (outcome, search) = match &cli.command {
        Command::Schedule(plan) => (
            cmd_schedule(&load_inputs(plan)?, &plan.search.config(), &executor)?,
            &plan.search,
        ),
        Command::Compare(plan) => (
            cmd_compare(
                &load_inputs(plan)?,
                &plan.search.config(),
                OracleLimits::default(),
                &executor,
            )?,
            &plan.search,
        ),
        Command::Oracle { plan, count_only } => (
            cmd_oracle(
                &load_inputs(plan)?,
                &plan.search.config(),
                OracleLimits::default(),
                *count_only,
                &executor,
            )?,
            &plan.search,
        ),
        Command::RandomBaseline { plan, runs } => (
            cmd_random_baseline(&load_inputs(plan)?, &plan.search.config(), *runs, &executor)?,
            &plan.search,
        ),
        Command::ScaleBench(args) => {
            let (model, digest) = load_model(&args.model)?;
            (
                cmd_scale_bench(
                    &model,
                    vec![digest],
                    &args.search.config(),
                    &args.sizes,
                    args.cluster_seed,
                    &executor,
                )?,
                &args.search,
            )
        }
        Command::BandwidthSweep { plan, scales } => (
            cmd_bandwidth_sweep(&load_inputs(plan)?, &plan.search.config(), scales, &executor)?,
            &plan.search,
        ),
    };
    let record = RunRecord {
        command: outcome.command.to_string(),
        report_sha256: sha256_hex(outcome.json.as_bytes()),
        threads: executor.threads(),
        wall_seconds: start.elapsed().as_secs_f64(),
        timings: outcome.timings.clone(),
    };
    if let Some(dir) = &search.output_dir {
        write_outputs(dir, &outcome, &record)?;
    }
    match search.format {
        Format::Json => print!("{}", outcome.json),
        Format::Table => {
            print!("{}", outcome.table);
            for t in &outcome.timings {
                println!("wall time {}: {:.2} s", t.label, t.seconds);
            }
        }
    }
    Ok(if outcome.infeasible { EXIT_INFEASIBLE } else { 0 })
}
