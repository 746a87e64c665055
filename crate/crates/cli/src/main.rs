//! `flexmm`: plan, simulate and evaluate matrix-multiplication workloads.
//!
//! Exit codes: 0 success, 1 validation, 2 infeasible, 3 timeout, 4 internal.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "flexmm", version, about = "Flexible MM accelerator planner")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Explore modes, schedule the workload and generate its program.
    Optimize(OptimizeArgs),
    /// Run a generated plan through the simulator.
    Simulate(SimulateArgs),
    /// Modeled throughput against the fixed-shape baselines.
    Compare(CompareArgs),
    /// Write the scheduling MILP in LP format.
    ExportLp(ExportLpArgs),
    /// Emit the plot-data CSVs.
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerKind {
    Exact,
    Ga,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Exact => "exact",
            SchedulerKind::Ga => "ga",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GaArgs {
    #[arg(long, default_value_t = 64)]
    pub ga_pop: usize,
    #[arg(long, default_value_t = 500)]
    pub ga_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub workload: PathBuf,
    /// Hardware JSON; the VCK190 defaults when omitted.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchedulerKind::Ga)]
    pub scheduler: SchedulerKind,
    #[command(flatten)]
    pub ga: GaArgs,
    /// Wall-clock limit for the exact solver.
    #[arg(long, default_value_t = 60.0)]
    pub budget_sec: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Directory written by `optimize`.
    #[arg(long)]
    pub plan: PathBuf,
    /// Seed of the random input matrices.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compare every layer output with a dense reference product.
    #[arg(long)]
    pub check_functional: bool,
    /// Defaults to `<plan>/sim`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Single workload; the diverse transformer grid when omitted.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "charm,rsn")]
    pub baselines: Vec<Baseline>,
    /// Grid buckets per axis.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[command(flatten)]
    pub ga: GaArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Charm,
    Rsn,
}

#[derive(Args, Debug)]
pub struct ExportLpArgs {
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[command(flatten)]
    pub ga: GaArgs,
    /// Exact-solver limit per solver-study instance.
    #[arg(long, default_value_t = 5.0)]
    pub budget_sec: f64,
    /// Solver-study instances.
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FILCO_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let r = match cli.cmd {
        Command::Optimize(a) => commands::optimize(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::ExportLp(a) => commands::export_lp(&a),
        Command::Report(a) => commands::report(&a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {} failed: {:#}", f.stage, f.error);
            ExitCode::from(f.exit_code())
        }
    }
}
