mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evcs_core::sim::Baseline;
use evcs_core::solve::Method;

use config::{Context, RunConfig};

/// Exit codes: 0 solved to tolerance, 1 error, 2 usage, 3 stopped on a limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Done,
    Limit,
}

#[derive(Parser)]
#[command(name = "evcs", version, about = "Choice-aware stochastic design of EV charging networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with [run], [behavior], [choice], [saa], [sim], [report] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Instance JSON (default: built-in reference instance).
    #[arg(long, global = true)]
    instance: Option<PathBuf>,
    /// dep, single-cut or multi-cut.
    #[arg(long, global = true)]
    method: Option<Method>,
    #[arg(long, global = true)]
    budget: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenarios in the planning sample.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    scenarios: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Write zero for wall-clock fields so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenario set and write it as JSON-lines.
    Generate,
    /// Optimize the network design.
    Solve {
        /// Also write the deterministic equivalent as fixed-format MPS.
        #[arg(long)]
        mps: Option<PathBuf>,
    },
    /// Bound and value-of-information analyses.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Replay simulated days against a design.
    Simulate {
        /// Design JSON with `x` and `z` (e.g. a solution file).
        #[arg(long, conflicts_with = "baseline")]
        design: Option<PathBuf>,
        /// Build a baseline design at the run budget instead.
        #[arg(long)]
        baseline: Option<Baseline>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        replications: Option<u64>,
        #[arg(long)]
        sim_seed: Option<u64>,
        /// Write every driver's outcome as JSON-lines.
        #[arg(long)]
        events: bool,
    },
    /// Budget-sweep tables: accessibility, charger counts, utilization by slot, baselines.
    Report {
        /// Comma-separated budgets.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<f64>>,
        /// Comma-separated level-3 prices to re-solve the sweep at.
        #[arg(long, value_delimiter = ',')]
        level3_prices: Option<Vec<f64>>,
        /// Also run the per-source VSS ablation at every budget.
        #[arg(long)]
        ablation: bool,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        replications: Option<u64>,
        #[arg(long)]
        sim_seed: Option<u64>,
    },
    /// Aggregated utility tables.
    #[command(subcommand)]
    Utilities(Utilities),
}

#[derive(Subcommand)]
pub enum Analyze {
    /// Sample average approximation bounds and gap.
    Saa {
        #[arg(long = "K", value_parser = clap::value_parser!(u64).range(2..))]
        k: Option<u64>,
        #[arg(long = "L", value_parser = clap::value_parser!(u64).range(1..))]
        l: Option<u64>,
        #[arg(long = "Lprime", value_parser = clap::value_parser!(u64).range(2..))]
        l_prime: Option<u64>,
        /// Scenarios shared by all replications for picking the candidate.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        validation: Option<u64>,
        /// Every replication uses the same sample.
        #[arg(long)]
        common_sample: bool,
    },
    /// Recourse problem, expected-value solution and their difference.
    Vss {
        /// Use copies of the first scenario only.
        #[arg(long)]
        identical: bool,
    },
    /// VSS with each uncertainty source alone left random.
    Ablation,
}

#[derive(Subcommand)]
pub enum Utilities {
    /// Per-scenario table as CSV: one row per lot, a column per type plus not charging.
    Dump,
}

fn effective(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let r = &mut cfg.run;
    if let Some(v) = &common.instance {
        r.instance = Some(v.clone());
    }
    if let Some(v) = common.method {
        r.method = v;
    }
    if common.budget.is_some() {
        r.budget = common.budget;
    }
    if let Some(v) = common.seed {
        r.seed = v;
    }
    if let Some(v) = common.scenarios {
        r.scenarios = v as usize;
    }
    if let Some(v) = common.epsilon {
        r.epsilon = v;
    }
    if common.time_limit.is_some() {
        r.time_limit = common.time_limit;
    }
    if let Some(v) = &common.out {
        r.output = v.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    if let Some(j) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j as usize).build_global()?;
    }
    let mut cfg = effective(&cli.common)?;
    // Command flags that land in config sections, so they are part of the hash.
    match &cli.command {
        Command::Analyze(Analyze::Saa { k, l, l_prime, validation, common_sample }) => {
            // The SAA seed follows the run seed unless the config sets one.
            let follow = cfg.saa.is_none() || cli.common.seed.is_some();
            let s = cfg.saa.get_or_insert_with(Default::default);
            if follow {
                s.seed = cfg.run.seed;
            }
            if let Some(v) = k {
                s.k = *v as usize;
            }
            if let Some(v) = l {
                s.l = *v as usize;
            }
            if let Some(v) = l_prime {
                s.l_prime = *v as usize;
            }
            if let Some(v) = validation {
                s.validation = *v as usize;
            }
            s.common_sample |= common_sample;
        }
        Command::Simulate { replications, sim_seed, baseline, .. } => {
            let s = cfg.sim.get_or_insert_with(Default::default);
            if let Some(v) = replications {
                s.replications = *v as usize;
            }
            if let Some(v) = sim_seed {
                s.seed = *v;
            }
            if let Some(v) = baseline {
                s.baseline = *v;
            }
        }
        Command::Report { budgets, level3_prices, replications, sim_seed, .. } => {
            let s = cfg.sim.get_or_insert_with(Default::default);
            if let Some(v) = replications {
                s.replications = *v as usize;
            }
            if let Some(v) = sim_seed {
                s.seed = *v;
            }
            if let Some(v) = budgets {
                cfg.report.budgets = v.clone();
            }
            if let Some(v) = level3_prices {
                cfg.report.level3_prices = v.clone();
            }
        }
        _ => {}
    }
    let ctx = Context::new(cfg, !cli.common.no_timing)?;
    match cli.command {
        Command::Generate => commands::generate(&ctx),
        Command::Solve { mps } => commands::solve_cmd(&ctx, mps.as_deref()),
        Command::Analyze(a) => commands::analyze(&ctx, &a),
        Command::Simulate { design, events, .. } => commands::simulate(&ctx, design.as_deref(), events),
        Command::Report { ablation, .. } => commands::report(&ctx, ablation),
        Command::Utilities(Utilities::Dump) => commands::utilities_dump(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Limit) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
