//! `treecp`: simulation and exact computation for the contact process with
//! random vertex weights on regular trees.

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{
    load_config, merge, merge_or, parse_list, parse_support, require, CliError, ConfigMap,
    Resolved,
};
use output::{csv_header, emit, json_document, Format};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;
use treecp_core::cp_sim::{
    self, CensorReason, CpRunConfig, EnvironmentMode, TrajectorySummary,
};
use treecp_core::rng::Stream;
use treecp_core::stats::{wilson_interval, Z95};
use treecp_core::{bounds, duality, estimate, linear_sys, sir_moments, walks};
use treecp_core::{QuenchedEnvironment, TruncatedTree, WeightDistribution};

#[derive(Parser)]
#[command(name = "treecp", version, about = "Contact process with random vertex weights on regular trees", max_term_width = 100)]
struct Cli {
    /// Worker threads (0 = hardware parallelism). Results are identical
    /// for any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Flat key = value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight distribution as value:prob[,value:prob...].
    #[arg(long)]
    dist: Option<String>,
    /// Explicit upper bound M on the weights (default: max support value).
    #[arg(long = "M")]
    bound_m: Option<f64>,
    /// Output format.
    #[arg(long)]
    format: Option<Format>,
    /// Output path (resolved against $TREECP_OUT_DIR when relative);
    /// stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

struct Common {
    cfg: ConfigMap,
    dist: WeightDistribution,
    dist_spec: String,
    bound_m: f64,
    format: Format,
    out: Option<PathBuf>,
    seed: u64,
}

impl CommonArgs {
    fn resolve(&self) -> Result<Common, CliError> {
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ConfigMap::new(),
        };
        let dist_spec: String = require(self.dist.clone(), &cfg, "dist")?;
        let support = parse_support(&dist_spec)?;
        let max_value = support.iter().map(|&(v, _)| v).fold(0.0f64, f64::max);
        let bound_m = merge_or(self.bound_m, &cfg, "M", max_value)?;
        let dist = WeightDistribution::new(&support, bound_m).map_err(CliError::from_core)?;
        let format = merge_or(self.format, &cfg, "format", Format::Json)?;
        let out = match &self.out {
            Some(p) => Some(p.clone()),
            None => merge(None::<String>, &cfg, "out")?.map(PathBuf::from),
        };
        let seed = merge_or(self.seed, &cfg, "seed", 20260809)?;
        Ok(Common { cfg, dist, dist_spec, bound_m, format, out, seed })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form critical-rate bounds for one degree or a degree sweep.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Tree degree (the root has d neighbors).
        #[arg(long)]
        d: Option<usize>,
        /// Comma-separated degree list for an asymptotic sweep.
        #[arg(long)]
        d_list: Option<String>,
    },
    /// Trajectories of the contact process from a single infected root.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        size_cap: Option<u64>,
        #[arg(long)]
        depth_cap: Option<u32>,
        /// Checkpoint times for the trajectory CSV (comma separated).
        #[arg(long)]
        checkpoints: Option<String>,
        /// annealed (fresh weights per replica) or quenched.
        #[arg(long)]
        mode: Option<String>,
        /// Restrict to the depth-truncated tree.
        #[arg(long)]
        truncate_depth: Option<usize>,
    },
    /// Common-random-number survival sweep over a rate grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        lambda_grid: Option<String>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        size_cap: Option<u64>,
        #[arg(long)]
        depth_cap: Option<u32>,
    },
    /// Bisection bracket for the survival critical rate.
    LambdaC {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Largest grid rate with significantly negative decay slope.
    LambdaE {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        lambda_grid: Option<String>,
        #[arg(long)]
        time_grid: Option<String>,
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Exact SIR generation moments and the survival lower-bound ratios.
    Moments {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Exact mean of the auxiliary linear system on a truncation.
    XiMean {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        /// Truncation depth.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Exact self-duality discrepancies on small truncations.
    DualityCheck {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        /// Rates to check (comma separated).
        #[arg(long)]
        lambda: Option<String>,
        /// Times to check (comma separated).
        #[arg(long)]
        t: Option<String>,
        /// Number of quenched environments.
        #[arg(long)]
        env_draws: Option<u64>,
    },
    /// Distance law of the tree walk and its generating-function bound.
    Walks {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        /// Evaluate the generating function at this point of (0, 1].
        #[arg(long)]
        x: Option<f64>,
    },
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads;
    let run = || dispatch(cli.command);
    let result = if threads == 0 {
        run()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(CliError::validation(format!("thread pool: {e}"))),
        }
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::exit(e.exit_code);
        }
    }
}

fn core(e: treecp_core::Error) -> CliError {
    CliError::from_core(e)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Bounds { common, d, d_list } => cmd_bounds(common, d, d_list),
        Command::Simulate {
            common,
            d,
            lambda,
            t_max,
            replicas,
            size_cap,
            depth_cap,
            checkpoints,
            mode,
            truncate_depth,
        } => cmd_simulate(
            common, d, lambda, t_max, replicas, size_cap, depth_cap, checkpoints, mode,
            truncate_depth,
        ),
        Command::Sweep { common, d, lambda_grid, t_max, replicas, size_cap, depth_cap } => {
            cmd_sweep(common, d, lambda_grid, t_max, replicas, size_cap, depth_cap)
        }
        Command::LambdaC { common, d, t_max, replicas, tolerance } => {
            cmd_lambda_c(common, d, t_max, replicas, tolerance)
        }
        Command::LambdaE { common, d, lambda_grid, time_grid, replicas } => {
            cmd_lambda_e(common, d, lambda_grid, time_grid, replicas)
        }
        Command::Moments { common, d, lambda, n_max } => cmd_moments(common, d, lambda, n_max),
        Command::XiMean { common, d, lambda, t, depth } => cmd_xi_mean(common, d, lambda, t, depth),
        Command::DualityCheck { common, d, depth, lambda, t, env_draws } => {
            cmd_duality(common, d, depth, lambda, t, env_draws)
        }
        Command::Walks { common, d, n, x } => cmd_walks(common, d, n, x),
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

fn cmd_bounds(
    common: CommonArgs,
    d: Option<usize>,
    d_list: Option<String>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d = merge(d, &c.cfg, "d")?;
    let d_list = merge(d_list, &c.cfg, "d_list")?;
    let degrees: Vec<usize> = match (&d, &d_list) {
        (Some(d), None) => vec![*d],
        (None, Some(list)) => parse_list(list, "degree")?,
        _ => return Err(CliError::validation("give exactly one of --d / --d-list")),
    };
    let mut resolved = Resolved::default();
    resolved.push("command", "bounds");
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push(
        "degrees",
        degrees.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
    );
    let reports: Vec<bounds::BoundsReport> = degrees
        .iter()
        .map(|&deg| bounds::report(deg, &c.dist).map_err(core))
        .collect::<Result<_, _>>()?;
    let payload = match c.format {
        Format::Json => json_document(&resolved, &reports)?,
        Format::Csv => {
            let mut s = csv_header(&resolved);
            s.push_str("d,lower,upper,d_times_lower,d_times_upper,asymptote\n");
            for r in &reports {
                let d = r.degree as f64;
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.degree,
                    r.lambda_e_lower,
                    fmt_opt(&r.lambda_c_upper),
                    d * r.lambda_e_lower,
                    fmt_opt(&r.lambda_c_upper.map(|u| d * u)),
                    r.asymptote
                )
                .unwrap();
            }
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}

#[derive(Serialize)]
struct SimulateReport {
    survival: cp_sim::SurvivalEstimate,
    censor_counts: CensorCounts,
}

#[derive(Serialize, Default)]
struct CensorCounts {
    time_horizon: u64,
    size_cap: u64,
    depth_cap: u64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    common: CommonArgs,
    d: Option<usize>,
    lambda: Option<f64>,
    t_max: Option<f64>,
    replicas: Option<u64>,
    size_cap: Option<u64>,
    depth_cap: Option<u32>,
    checkpoints: Option<String>,
    mode: Option<String>,
    truncate_depth: Option<usize>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let lambda: f64 = require(lambda, &c.cfg, "lambda")?;
    let mut cfg = CpRunConfig::new(d, lambda);
    cfg.t_max = merge_or(t_max, &c.cfg, "t_max", cfg.t_max)?;
    cfg.size_cap = merge_or(size_cap, &c.cfg, "size_cap", cfg.size_cap)?;
    cfg.depth_cap = merge_or(depth_cap, &c.cfg, "depth_cap", cfg.depth_cap)?;
    cfg.truncate_depth = merge(truncate_depth, &c.cfg, "truncate_depth")?;
    let replicas: u64 = merge_or(replicas, &c.cfg, "replicas", 1_000)?;
    let mode = match merge_or(mode, &c.cfg, "mode", "annealed".to_string())?.as_str() {
        "annealed" => EnvironmentMode::Annealed,
        "quenched" => EnvironmentMode::Quenched,
        other => return Err(CliError::validation(format!("unknown mode {other:?}"))),
    };
    let checkpoints = match merge(checkpoints, &c.cfg, "checkpoints")? {
        Some(list) => parse_list::<f64>(&list, "checkpoint")?,
        None => (1..=10).map(|k| cfg.t_max * k as f64 / 10.0).collect(),
    };
    cfg.checkpoints = checkpoints;
    cfg.validate().map_err(core)?;
    if replicas == 0 {
        return Err(CliError::validation("need at least one replica"));
    }

    let mut resolved = Resolved::default();
    resolved.push("command", "simulate");
    resolved.push("d", d);
    resolved.push("lambda", lambda);
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push("t_max", cfg.t_max);
    resolved.push("size_cap", cfg.size_cap);
    resolved.push("depth_cap", cfg.depth_cap);
    resolved.push("replicas", replicas);
    resolved.push("mode", if mode == EnvironmentMode::Annealed { "annealed" } else { "quenched" });
    resolved.push("seed", c.seed);

    let summaries: Vec<TrajectorySummary> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let which = if mode == EnvironmentMode::Annealed { rep } else { 0 };
            let env_seed = Stream::derive(c.seed, &[0xE2, which]).next_u64();
            let env = QuenchedEnvironment::new(env_seed, c.dist.clone());
            let mut rng = Stream::derive(c.seed, &[0x52, rep]);
            cp_sim::run(&env, &cfg, &mut rng).expect("validated config")
        })
        .collect();

    let mut counts = CensorCounts::default();
    let mut survivors = 0u64;
    let mut violations = 0u64;
    for s in &summaries {
        match s.censored {
            Some(CensorReason::TimeHorizon) => counts.time_horizon += 1,
            Some(CensorReason::SizeCap) => counts.size_cap += 1,
            Some(CensorReason::DepthCap) => counts.depth_cap += 1,
            None => {}
        }
        survivors += s.survived() as u64;
        violations += s.rate_bound_violations;
    }
    let payload = match c.format {
        Format::Csv => {
            let mut out = csv_header(&resolved);
            out.push_str("replica,t,n_infected,censored\n");
            for (rep, s) in summaries.iter().enumerate() {
                let label = match s.censored {
                    None => "",
                    Some(CensorReason::TimeHorizon) => "time_horizon",
                    Some(CensorReason::SizeCap) => "size_cap",
                    Some(CensorReason::DepthCap) => "depth_cap",
                };
                for &(t, n) in &s.checkpoint_sizes {
                    writeln!(out, "{rep},{t},{n},{label}").unwrap();
                }
            }
            out
        }
        Format::Json => {
            let report = SimulateReport {
                survival: cp_sim::SurvivalEstimate {
                    lambda,
                    degree: d,
                    t_max: cfg.t_max,
                    mode,
                    replicas,
                    survivors,
                    cap_censored: counts.size_cap + counts.depth_cap,
                    estimate: survivors as f64 / replicas as f64,
                    wilson_ci: wilson_interval(survivors, replicas, Z95),
                    master_seed: c.seed,
                    rate_bound_violations: violations,
                },
                censor_counts: counts,
            };
            json_document(&resolved, &report)?
        }
    };
    emit(c.out.as_ref(), &payload)
}

fn cmd_sweep(
    common: CommonArgs,
    d: Option<usize>,
    lambda_grid: Option<String>,
    t_max: Option<f64>,
    replicas: Option<u64>,
    size_cap: Option<u64>,
    depth_cap: Option<u32>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let grid_spec: String = require(lambda_grid, &c.cfg, "lambda_grid")?;
    let grid = parse_list::<f64>(&grid_spec, "lambda")?;
    let t_max = merge_or(t_max, &c.cfg, "t_max", 200.0)?;
    let replicas = merge_or(replicas, &c.cfg, "replicas", 10_000)?;
    let size_cap = merge_or(size_cap, &c.cfg, "size_cap", 1_000_000)?;
    let depth_cap = merge_or(depth_cap, &c.cfg, "depth_cap", 10_000)?;
    let mut resolved = Resolved::default();
    resolved.push("command", "sweep");
    resolved.push("d", d);
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push("lambda_grid", &grid_spec);
    resolved.push("t_max", t_max);
    resolved.push("replicas", replicas);
    resolved.push("seed", c.seed);
    let result = estimate::sweep_with_caps(
        d,
        &c.dist,
        &grid,
        t_max,
        replicas,
        c.seed,
        Some((size_cap, depth_cap)),
    )
    .map_err(core)?;
    let payload = match c.format {
        Format::Json => json_document(&resolved, &result)?,
        Format::Csv => {
            let mut s = csv_header(&resolved);
            s.push_str("lambda,survivors,estimate,wilson_lo,wilson_hi,censor_fraction,replicas\n");
            for row in &result.rows {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    row.lambda,
                    row.survivors,
                    row.estimate,
                    row.wilson_ci.0,
                    row.wilson_ci.1,
                    row.censor_fraction,
                    row.replicas
                )
                .unwrap();
            }
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}

fn cmd_lambda_c(
    common: CommonArgs,
    d: Option<usize>,
    t_max: Option<f64>,
    replicas: Option<u64>,
    tolerance: Option<f64>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let t_max = merge_or(t_max, &c.cfg, "t_max", 200.0)?;
    let replicas = merge_or(replicas, &c.cfg, "replicas", 10_000)?;
    let tolerance = merge_or(tolerance, &c.cfg, "tolerance", 0.01)?;
    let mut resolved = Resolved::default();
    resolved.push("command", "lambda-c");
    resolved.push("d", d);
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push("t_max", t_max);
    resolved.push("replicas", replicas);
    resolved.push("tolerance", tolerance);
    resolved.push("seed", c.seed);
    let est =
        estimate::bisect_lambda_c(d, &c.dist, t_max, replicas, tolerance, c.seed).map_err(core)?;
    let payload = match c.format {
        Format::Json => json_document(&resolved, &est)?,
        Format::Csv => {
            let mut s = csv_header(&resolved);
            s.push_str("lambda_dead,lambda_alive,sandwich_lower,sandwich_upper,verdict\n");
            writeln!(
                s,
                "{},{},{},{},{:?}",
                est.lambda_dead,
                est.lambda_alive,
                est.sandwich_lower,
                fmt_opt(&est.sandwich_upper),
                est.sandwich_verdict
            )
            .unwrap();
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}

fn cmd_lambda_e(
    common: CommonArgs,
    d: Option<usize>,
    lambda_grid: Option<String>,
    time_grid: Option<String>,
    replicas: Option<u64>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let grid_spec: String = require(lambda_grid, &c.cfg, "lambda_grid")?;
    let grid = parse_list::<f64>(&grid_spec, "lambda")?;
    let times_spec: String = require(time_grid, &c.cfg, "time_grid")?;
    let times = parse_list::<f64>(&times_spec, "time")?;
    let replicas = merge_or(replicas, &c.cfg, "replicas", 100_000)?;
    let mut resolved = Resolved::default();
    resolved.push("command", "lambda-e");
    resolved.push("d", d);
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push("lambda_grid", &grid_spec);
    resolved.push("time_grid", &times_spec);
    resolved.push("replicas", replicas);
    resolved.push("seed", c.seed);
    let est =
        estimate::estimate_lambda_e(d, &c.dist, &grid, &times, replicas, c.seed).map_err(core)?;
    let payload = match c.format {
        Format::Json => json_document(&resolved, &est)?,
        Format::Csv => {
            let mut s = csv_header(&resolved);
            s.push_str("lambda,slope,stderr,analytic_slope_bound,decaying\n");
            for row in &est.rows {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    row.lambda, row.slope, row.stderr, row.analytic_slope_bound, row.decaying
                )
                .unwrap();
            }
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}

fn cmd_moments(
    common: CommonArgs,
    d: Option<usize>,
    lambda: Option<f64>,
    n_max: Option<usize>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let lambda: f64 = require(lambda, &c.cfg, "lambda")?;
    let n_max = merge_or(n_max, &c.cfg, "n_max", 30)?;
    let mut resolved = Resolved::default();
    resolved.push("command", "moments");
    resolved.push("d", d);
    resolved.push("lambda", lambda);
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push("n_max", n_max);
    let report =
        sir_moments::survival_lower_bound_sequence(lambda, d, &c.dist, n_max).map_err(core)?;
    let payload = match c.format {
        Format::Json => json_document(&resolved, &report)?,
        Format::Csv => {
            let mut s = csv_header(&resolved);
            s.push_str("n,first_moment,second_moment_exact,second_moment_bound,ratio\n");
            for row in &report.rows {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    row.n,
                    row.first_moment,
                    row.second_moment_exact,
                    row.second_moment_bound,
                    row.ratio
                )
                .unwrap();
            }
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}

#[derive(Serialize)]
struct XiMeanReport {
    root_mean: f64,
    tail_bound: f64,
    annealed_upper_bound: f64,
    means: Vec<f64>,
}

fn cmd_xi_mean(
    common: CommonArgs,
    d: Option<usize>,
    lambda: Option<f64>,
    t: Option<f64>,
    depth: Option<usize>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let lambda: f64 = require(lambda, &c.cfg, "lambda")?;
    let t: f64 = require(t, &c.cfg, "t")?;
    let depth = merge_or(depth, &c.cfg, "depth", 6)?;
    let mut resolved = Resolved::default();
    resolved.push("command", "xi-mean");
    resolved.push("d", d);
    resolved.push("lambda", lambda);
    resolved.push("t", t);
    resolved.push("depth", depth);
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push("seed", c.seed);
    let tree = TruncatedTree::with_max_vertices(d, depth, linear_sys::MAX_EXACT_VERTICES)
        .map_err(core)?;
    let env_seed = Stream::derive(c.seed, &[0xE2, 0]).next_u64();
    let env = QuenchedEnvironment::new(env_seed, c.dist.clone());
    let exact = linear_sys::mean_xi_exact(&tree, &env, lambda, t).map_err(core)?;
    let closed_form = linear_sys::annealed_mean_upper_bound(lambda, d, &c.dist, t).map_err(core)?;
    let payload = match c.format {
        Format::Json => {
            let report = XiMeanReport {
                root_mean: exact.means[0],
                tail_bound: exact.tail_bound,
                annealed_upper_bound: closed_form,
                means: exact.means.clone(),
            };
            json_document(&resolved, &report)?
        }
        Format::Csv => {
            let mut s = csv_header(&resolved);
            s.push_str("vertex,mean_xi\n");
            for (i, mean) in exact.means.iter().enumerate() {
                writeln!(s, "{},{}", tree.vertex(i), mean).unwrap();
            }
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}

#[derive(Serialize)]
struct DualityRow {
    env_seed: u64,
    lambda: f64,
    t: f64,
    discrepancy: f64,
}

#[derive(Serialize)]
struct DualityReport {
    degree: usize,
    depth: usize,
    rows: Vec<DualityRow>,
    max_discrepancy: f64,
}

fn cmd_duality(
    common: CommonArgs,
    d: Option<usize>,
    depth: Option<usize>,
    lambda: Option<String>,
    t: Option<String>,
    env_draws: Option<u64>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let depth = merge_or(depth, &c.cfg, "depth", 1)?;
    let lambdas = parse_list::<f64>(&merge_or(lambda, &c.cfg, "lambda", "1.0".into())?, "lambda")?;
    let times = parse_list::<f64>(&merge_or(t, &c.cfg, "t", "1.0".into())?, "time")?;
    let env_draws = merge_or(env_draws, &c.cfg, "env_draws", 1)?;
    let mut resolved = Resolved::default();
    resolved.push("command", "duality-check");
    resolved.push("d", d);
    resolved.push("depth", depth);
    resolved.push("dist", &c.dist_spec);
    resolved.push("M", c.bound_m);
    resolved.push("lambda", lambdas.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
    resolved.push("t", times.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
    resolved.push("env_draws", env_draws);
    resolved.push("seed", c.seed);
    let tree = TruncatedTree::new(d, depth).map_err(core)?;
    let mut rows = Vec::new();
    let mut max_disc = 0.0f64;
    for draw in 0..env_draws {
        let env_seed = Stream::derive(c.seed, &[0xD0, draw]).next_u64();
        let env = QuenchedEnvironment::new(env_seed, c.dist.clone());
        for &lambda in &lambdas {
            for &t in &times {
                let disc = duality::check_self_duality(&tree, &env, lambda, t).map_err(core)?;
                max_disc = max_disc.max(disc);
                rows.push(DualityRow { env_seed, lambda, t, discrepancy: disc });
            }
        }
    }
    eprintln!("max self-duality discrepancy: {max_disc:e}");
    let report = DualityReport { degree: d, depth, rows, max_discrepancy: max_disc };
    let payload = match c.format {
        Format::Json => json_document(&resolved, &report)?,
        Format::Csv => {
            let mut s = csv_header(&resolved);
            s.push_str("env_seed,lambda,t,discrepancy\n");
            for row in &report.rows {
                writeln!(s, "{},{},{},{}", row.env_seed, row.lambda, row.t, row.discrepancy)
                    .unwrap();
            }
            writeln!(s, "# max_discrepancy={max_disc}").unwrap();
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}

#[derive(Serialize)]
struct WalksReport {
    degree: usize,
    steps: usize,
    pmf: Vec<(usize, f64)>,
    gen_fn: Option<GenFnCheck>,
}

#[derive(Serialize)]
struct GenFnCheck {
    x: f64,
    value: f64,
    bound: f64,
}

fn cmd_walks(
    common: CommonArgs,
    d: Option<usize>,
    n: Option<usize>,
    x: Option<f64>,
) -> Result<(), CliError> {
    let c = common.resolve()?;
    let d: usize = require(d, &c.cfg, "d")?;
    let n: usize = require(n, &c.cfg, "n")?;
    let x = merge(x, &c.cfg, "x")?;
    let mut resolved = Resolved::default();
    resolved.push("command", "walks");
    resolved.push("d", d);
    resolved.push("n", n);
    if let Some(x) = x {
        resolved.push("x", x);
    }
    if d < 2 {
        return Err(CliError::validation("degree must be at least 2"));
    }
    let law = walks::distance_pmf(d, n);
    let gen_fn = match x {
        Some(x) => {
            let value = walks::distance_gen_fn(d, n, x).map_err(core)?;
            let bound = walks::distance_gen_fn_bound(d, n, x);
            eprintln!("gen fn at x={x}: value {value}, bound {bound}");
            Some(GenFnCheck { x, value, bound })
        }
        None => None,
    };
    let payload = match c.format {
        Format::Json => {
            let report = WalksReport {
                degree: d,
                steps: n,
                pmf: law.pmf().iter().enumerate().map(|(k, &p)| (k, p)).collect(),
                gen_fn,
            };
            json_document(&resolved, &report)?
        }
        Format::Csv => {
            let mut s = csv_header(&resolved);
            if let Some(check) = &gen_fn {
                s.push_str("x,value,bound\n");
                writeln!(s, "{},{},{}", check.x, check.value, check.bound).unwrap();
            } else {
                s.push_str("k,prob\n");
                for (k, &p) in law.pmf().iter().enumerate() {
                    writeln!(s, "{k},{p}").unwrap();
                }
            }
            s
        }
    };
    emit(c.out.as_ref(), &payload)
}
