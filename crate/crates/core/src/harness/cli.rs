//! Command-line entry point.

use std::fs::File;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::{write_json, write_records};
use super::problem::Setup;
use super::studies::{
    demo_deconv, feasibility_study, rate_study_m, rate_study_n, single_solve, FrequencyCell,
    RateReport,
};
use crate::dual::SolveStatus;
use crate::error::{AmemError, Result};
use crate::reconstruct::Summary;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "amem",
    version,
    about = "Maximum entropy reconstruction from noisy generalized moments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance and write the estimate and a summary.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write the per-iteration solver trace.
        #[arg(long)]
        trace: bool,
    },
    /// Error against the population solution as the sample size grows.
    RateN(Common),
    /// Error against the population solution as the operator error shrinks.
    RateM(Common),
    /// Frequency of feasible observations per cell.
    Feasibility(Common),
    /// Deconvolution demo with a blurred two-bump density.
    DemoDeconv(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        std::fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    n: usize,
    seed: u64,
    feasible: bool,
    rank_deficient: bool,
    #[serde(flatten)]
    summary: &'a Summary,
}

#[derive(Serialize)]
struct RateSummary<'a> {
    seed: u64,
    within_budget: bool,
    #[serde(flatten)]
    report: &'a RateReport,
}

#[derive(Serialize)]
struct FeasibilitySummary<'a> {
    seed: u64,
    cells: &'a [FrequencyCell],
}

fn run_solve(common: &Common, trace: bool) -> Result<i32> {
    let cfg = common.load()?;
    let out = single_solve(&cfg)?;
    let setup = Setup::new(&cfg)?;
    let summary = Summary::new(
        &out.solution,
        &out.estimate,
        &setup.op,
        &out.observation,
        &setup.prior,
    )?;
    out.estimate
        .write_csv(File::create(common.out.join("estimate.csv"))?)?;
    if trace {
        out.solution
            .write_trace_csv(File::create(common.out.join("trace.csv"))?)?;
    }
    write_json(
        &common.out.join("summary.json"),
        &SolveSummary {
            n: out.n,
            seed: cfg.seed,
            feasible: out.feasible,
            rank_deficient: out.solution.rank_deficient,
            summary: &summary,
        },
    )?;
    Ok(match out.solution.status {
        SolveStatus::InfeasibleDirection => EXIT_INFEASIBLE,
        SolveStatus::MaxIters => EXIT_NONCONVERGENCE,
        _ if !out.feasible => EXIT_INFEASIBLE,
        _ => EXIT_OK,
    })
}

fn run_rate(common: &Common, which: &str) -> Result<i32> {
    let cfg = common.load()?;
    let out = if which == "rate_n" {
        rate_study_n(&cfg)?
    } else {
        rate_study_m(&cfg)?
    };
    write_records(&common.out.join(format!("{which}.csv")), &out.records)?;
    let within_budget = out.report.within_budget();
    write_json(
        &common.out.join(format!("{which}_summary.json")),
        &RateSummary {
            seed: cfg.seed,
            within_budget,
            report: &out.report,
        },
    )?;
    if !within_budget {
        eprintln!(
            "{which}: {} of {} solves did not converge",
            out.report.exclusions, out.report.total
        );
        return Ok(EXIT_NONCONVERGENCE);
    }
    Ok(EXIT_OK)
}

fn run_feasibility(common: &Common) -> Result<i32> {
    let cfg = common.load()?;
    let out = feasibility_study(&cfg)?;
    write_records(&common.out.join("feasibility.csv"), &out.records)?;
    write_json(
        &common.out.join("feasibility_summary.json"),
        &FeasibilitySummary {
            seed: cfg.seed,
            cells: &out.report,
        },
    )?;
    Ok(EXIT_OK)
}

fn run_demo(common: &Common) -> Result<i32> {
    let cfg = common.load()?;
    let out = demo_deconv(&cfg)?;
    write_records(&common.out.join("demo_deconv.csv"), &out.records)?;
    out.snapshot
        .estimate
        .write_csv(File::create(common.out.join("estimate.csv"))?)?;
    out.snapshot
        .truth
        .write_csv(File::create(common.out.join("truth.csv"))?)?;
    write_json(&common.out.join("demo_summary.json"), &out.report)?;
    Ok(EXIT_OK)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve { common, trace } => run_solve(common, *trace),
        Command::RateN(c) => run_rate(c, "rate_n"),
        Command::RateM(c) => run_rate(c, "rate_m"),
        Command::Feasibility(c) => run_feasibility(c),
        Command::DemoDeconv(c) => run_demo(c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &AmemError) -> i32 {
    match e {
        AmemError::Config(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}
