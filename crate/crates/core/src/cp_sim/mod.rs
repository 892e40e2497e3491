//! Event-driven simulation of the contact process on the (possibly
//! truncated) weighted tree.
//!
//! Each infected vertex recovers at rate 1; each healthy neighbor `y` of an
//! infected `x` gets infected at rate `lambda rho(x) rho(y)`, rates from
//! distinct infected neighbors adding. Trajectories start from the root
//! unless configured otherwise and terminate at extinction, the time
//! horizon, or a cap on size or depth.
//!
//! Censoring convention: a run cut off by the horizon or a cap counts as a
//! survivor in every estimate. Caps make supercritical runs terminate, at
//! the price of biasing critical-rate estimates downward; all outputs carry
//! the censor counts so the bias is visible.

mod arena;
mod coupled;
mod direct;

pub use coupled::{
    run_coupled, run_coupled_multi, run_cp_sir_coupled, CoupledOutcome, DominationOutcome,
};
pub use direct::{run, InfectionState};

use crate::rng::Stream;
use crate::stats::{ols_slope, wilson_interval, Z95};
use crate::weights::{QuenchedEnvironment, WeightDistribution};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Fits of the exponential decay rate ignore grid points before this time;
/// the decay rate is a long-time object and early times contaminate the
/// slope.
pub const DECAY_FIT_START: f64 = 5.0;

/// Starting configuration of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InitialCondition {
    /// Only the root infected.
    Root,
    /// Everything infected; requires a truncation.
    AllOnes,
}

/// Why a run was cut short instead of reaching extinction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CensorReason {
    TimeHorizon,
    SizeCap,
    DepthCap,
}

/// Whether environments are redrawn per replica or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnvironmentMode {
    /// Fresh weights every replica: estimates average over environments.
    Annealed,
    /// One fixed environment across replicas.
    Quenched,
}

/// Parameters of a single trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct CpRunConfig {
    pub degree: usize,
    pub lambda: f64,
    pub t_max: f64,
    pub size_cap: u64,
    pub depth_cap: u32,
    /// Simulate on the depth-truncated tree instead of the infinite one.
    pub truncate_depth: Option<usize>,
    pub initial: InitialCondition,
    /// Times at which to record the infected count; strictly increasing.
    pub checkpoints: Vec<f64>,
    /// Capture the final infected set (truncated runs only).
    pub record_final_state: bool,
}

impl CpRunConfig {
    /// Defaults: horizon 200, size cap `10^6`, depth cap `10^4`, root
    /// start, infinite tree.
    pub fn new(degree: usize, lambda: f64) -> Self {
        Self {
            degree,
            lambda,
            t_max: 200.0,
            size_cap: 1_000_000,
            depth_cap: 10_000,
            truncate_depth: None,
            initial: InitialCondition::Root,
            checkpoints: Vec::new(),
            record_final_state: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 2 {
            return Err(Error::InvalidInput(format!(
                "tree degree must be at least 2, got {}",
                self.degree
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput("lambda must be nonnegative and finite".into()));
        }
        if !(self.t_max >= 0.0) {
            return Err(Error::InvalidInput("t_max must be nonnegative".into()));
        }
        if self.size_cap == 0 || self.depth_cap == 0 {
            return Err(Error::InvalidInput("caps must be positive".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("checkpoints must be strictly increasing".into()));
        }
        if self.initial == InitialCondition::AllOnes && self.truncate_depth.is_none() {
            return Err(Error::InvalidInput(
                "the all-ones initial state needs a truncation".into(),
            ));
        }
        if self.record_final_state && self.truncate_depth.is_none() {
            return Err(Error::InvalidInput(
                "final-state capture needs a truncation".into(),
            ));
        }
        Ok(())
    }
}

/// What happened to one trajectory. Exactly one of `extinction_time` and
/// `censored` is set.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub extinction_time: Option<f64>,
    pub censored: Option<CensorReason>,
    /// `(t, infected count)` at the configured checkpoint times.
    pub checkpoint_sizes: Vec<(f64, u64)>,
    pub events: u64,
    /// Failures of the per-site rate bound; zero in a correct engine.
    pub rate_bound_violations: u64,
    pub final_infected: u64,
    pub root_infected_at_end: bool,
    /// Final infected set in breadth-first tree order, when requested on a
    /// truncated run.
    pub final_state: Option<Vec<bool>>,
}

impl TrajectorySummary {
    /// Survivor under the censoring convention.
    pub fn survived(&self) -> bool {
        self.censored.is_some()
    }

    /// Alive at time `t` (strictly after extinction counts as dead).
    pub fn alive_at(&self, t: f64) -> bool {
        match self.extinction_time {
            Some(ext) => ext > t,
            None => true,
        }
    }
}

/// Survival estimate with its Wilson interval and censor accounting.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalEstimate {
    pub lambda: f64,
    pub degree: usize,
    pub t_max: f64,
    pub mode: EnvironmentMode,
    pub replicas: u64,
    pub survivors: u64,
    /// Survivors cut off by a size or depth cap rather than the horizon.
    pub cap_censored: u64,
    pub estimate: f64,
    pub wilson_ci: (f64, f64),
    pub master_seed: u64,
    /// Per-site rate-bound failures summed over every replica; zero in a
    /// correct engine.
    pub rate_bound_violations: u64,
}

const TAG_ENV: u64 = 0x1;
const TAG_SIM: u64 = 0x2;

fn replica_env(
    dist: &WeightDistribution,
    mode: EnvironmentMode,
    master_seed: u64,
    replica: u64,
) -> QuenchedEnvironment {
    let which = match mode {
        EnvironmentMode::Annealed => replica,
        EnvironmentMode::Quenched => 0,
    };
    let seed = Stream::derive(master_seed, &[TAG_ENV, which]).next_u64();
    QuenchedEnvironment::new(seed, dist.clone())
}

/// Estimate the survival probability at the configured horizon.
///
/// Annealed mode draws a fresh environment per replica; quenched mode holds
/// one fixed. Merged counts are independent of thread scheduling.
pub fn survival_probability(
    dist: &WeightDistribution,
    cfg: &CpRunConfig,
    mode: EnvironmentMode,
    replicas: u64,
    master_seed: u64,
) -> Result<SurvivalEstimate> {
    cfg.validate()?;
    if replicas == 0 {
        return Err(Error::InvalidInput("need at least one replica".into()));
    }
    let outcomes: Vec<(bool, bool, u64)> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let env = replica_env(dist, mode, master_seed, rep);
            let mut rng = Stream::derive(master_seed, &[TAG_SIM, rep]);
            let summary = run(&env, cfg, &mut rng).expect("validated config");
            let capped = matches!(
                summary.censored,
                Some(CensorReason::SizeCap) | Some(CensorReason::DepthCap)
            );
            (summary.survived(), capped, summary.rate_bound_violations)
        })
        .collect();
    let survivors = outcomes.iter().filter(|&&(s, _, _)| s).count() as u64;
    let cap_censored = outcomes.iter().filter(|&&(_, c, _)| c).count() as u64;
    let rate_bound_violations = outcomes.iter().map(|&(_, _, v)| v).sum();
    Ok(SurvivalEstimate {
        lambda: cfg.lambda,
        degree: cfg.degree,
        t_max: cfg.t_max,
        mode,
        replicas,
        survivors,
        cap_censored,
        estimate: survivors as f64 / replicas as f64,
        wilson_ci: wilson_interval(survivors, replicas, Z95),
        master_seed,
        rate_bound_violations,
    })
}

/// Least-squares fit of `log P(alive at t)` over a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct DecayRate {
    pub slope: f64,
    pub stderr: f64,
    /// `(t, survival estimate, survivors)` for the fitted grid points.
    pub points: Vec<(f64, f64, u64)>,
    pub replicas: u64,
    /// Per-site rate-bound failures summed over every replica.
    pub rate_bound_violations: u64,
}

/// Fit the exponential decay rate of the annealed survival probability.
///
/// Grid points before [`DECAY_FIT_START`] are dropped from the fit. Any
/// grid point with zero empirical survival aborts with
/// [`Error::GridTooLong`]. Standard errors come from the delta method
/// per point; correlation across grid points (the same replicas underlie
/// every point) is ignored, which overstates the error slightly.
pub fn decay_rate(
    dist: &WeightDistribution,
    degree: usize,
    lambda: f64,
    time_grid: &[f64],
    replicas: u64,
    master_seed: u64,
) -> Result<DecayRate> {
    if time_grid.len() < 4 {
        return Err(Error::InvalidInput("time grid needs at least 4 points".into()));
    }
    if time_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    if time_grid[0] <= 0.0 {
        return Err(Error::InvalidInput("time grid must be positive".into()));
    }
    let grid: Vec<f64> =
        time_grid.iter().copied().filter(|&t| t >= DECAY_FIT_START).collect();
    if grid.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 grid points at t >= {DECAY_FIT_START}"
        )));
    }
    let mut cfg = CpRunConfig::new(degree, lambda);
    cfg.t_max = *grid.last().unwrap();
    cfg.validate()?;
    let horizon = cfg.t_max;

    let (alive_counts, rate_bound_violations) = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let env = replica_env(dist, EnvironmentMode::Annealed, master_seed, rep);
            let mut rng = Stream::derive(master_seed, &[TAG_SIM, rep]);
            let summary = run(&env, &cfg, &mut rng).expect("validated config");
            let mut bits = 0u64;
            for (i, &t) in grid.iter().enumerate() {
                if t <= horizon && summary.alive_at(t) {
                    bits |= 1 << i;
                }
            }
            (bits, summary.rate_bound_violations)
        })
        .fold(
            || (vec![0u64; grid.len()], 0u64),
            |(mut acc, mut viol), (bits, v)| {
                for (i, slot) in acc.iter_mut().enumerate() {
                    *slot += (bits >> i) & 1;
                }
                viol += v;
                (acc, viol)
            },
        )
        .reduce(
            || (vec![0u64; grid.len()], 0u64),
            |(mut a, va), (b, vb)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                (a, va + vb)
            },
        );

    let n = replicas as f64;
    let mut ys = Vec::with_capacity(grid.len());
    let mut vars = Vec::with_capacity(grid.len());
    let mut points = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        let alive = alive_counts[i];
        if alive == 0 {
            return Err(Error::GridTooLong(t));
        }
        let p = alive as f64 / n;
        ys.push(p.ln());
        vars.push((1.0 - p) / (n * p));
        points.push((t, p, alive));
    }
    let (slope, stderr) = ols_slope(&grid, &ys, &vars);
    Ok(DecayRate { slope, stderr, points, replicas, rate_bound_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::FiniteCTMC;
    use crate::stats::mean_se;
    use crate::tree::TruncatedTree;

    fn unit() -> WeightDistribution {
        WeightDistribution::constant(1.0).unwrap()
    }

    fn coin() -> WeightDistribution {
        WeightDistribution::new(&[(0.0, 0.5), (1.0, 0.5)], 1.0).unwrap()
    }

    fn unit_env(seed: u64) -> QuenchedEnvironment {
        QuenchedEnvironment::new(seed, unit())
    }

    #[test]
    fn config_validation() {
        assert!(CpRunConfig::new(1, 0.5).validate().is_err());
        assert!(CpRunConfig::new(2, -0.5).validate().is_err());
        let mut cfg = CpRunConfig::new(2, 0.5);
        cfg.size_cap = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = CpRunConfig::new(2, 0.5);
        cfg.initial = InitialCondition::AllOnes;
        assert!(cfg.validate().is_err());
        cfg.truncate_depth = Some(2);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn pure_death_extinction_times() {
        // lambda = 0: the root dies at an Exp(1) time, nothing else happens.
        let env = unit_env(7);
        let cfg = CpRunConfig::new(2, 0.0);
        let n = 100_000;
        let mut times = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = Stream::derive(555, &[i as u64]);
            let s = run(&env, &cfg, &mut rng).unwrap();
            assert_eq!(s.events, 1);
            times.push(s.extinction_time.unwrap());
        }
        let (mean, se) = mean_se(&times);
        assert!((mean - 1.0).abs() < 0.01, "mean {mean} (se {se})");
    }

    #[test]
    fn zero_root_weight_blocks_infection() {
        let dist = coin();
        let mut seed = None;
        for s in 0..64 {
            let env = QuenchedEnvironment::new(s, dist.clone());
            if env.weight_of(&crate::tree::VertexId::root()) == 0.0 {
                seed = Some(s);
                break;
            }
        }
        let env = QuenchedEnvironment::new(seed.unwrap(), dist);
        let mut cfg = CpRunConfig::new(4, 50.0);
        cfg.checkpoints = vec![0.2, 0.5, 1.0, 2.0];
        for i in 0..200 {
            let mut rng = Stream::derive(31337, &[i]);
            let s = run(&env, &cfg, &mut rng).unwrap();
            assert!(s.extinction_time.is_some());
            assert_eq!(s.events, 1, "root with zero weight can only recover");
            for &(_, size) in &s.checkpoint_sizes {
                assert!(size <= 1);
            }
        }
    }

    #[test]
    fn supercritical_run_survives_sometimes() {
        // d=6, rho=1, lambda=1 sits far above the certified upper bound
        // 2 - sqrt(3); survival frequency must be solidly positive.
        let mut cfg = CpRunConfig::new(6, 1.0);
        cfg.t_max = 30.0;
        cfg.size_cap = 20_000;
        let est =
            survival_probability(&unit(), &cfg, EnvironmentMode::Annealed, 500, 99).unwrap();
        assert!(est.estimate > 0.3, "survival estimate {}", est.estimate);
    }

    #[test]
    fn subcritical_survival_is_zero() {
        // lambda = 0 with a long horizon: every run dies almost instantly.
        let cfg = CpRunConfig::new(3, 0.0);
        let est =
            survival_probability(&unit(), &cfg, EnvironmentMode::Annealed, 2_000, 4).unwrap();
        assert_eq!(est.survivors, 0);
        assert_eq!(est.estimate, 0.0);
        // d=6, lambda=0.05 < 1/7: certified subcritical.
        let mut cfg = CpRunConfig::new(6, 0.05);
        cfg.t_max = 200.0;
        let est =
            survival_probability(&unit(), &cfg, EnvironmentMode::Annealed, 2_000, 4).unwrap();
        assert!(
            est.estimate <= 0.002,
            "certified-subcritical survival read {}",
            est.estimate
        );
    }

    #[test]
    fn survival_deterministic_across_worker_counts() {
        let cfg = CpRunConfig::new(3, 0.3);
        let dist = coin();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1
            .install(|| survival_probability(&dist, &cfg, EnvironmentMode::Annealed, 3_000, 11))
            .unwrap();
        let b = pool4
            .install(|| survival_probability(&dist, &cfg, EnvironmentMode::Annealed, 3_000, 11))
            .unwrap();
        assert_eq!(a.survivors, b.survivors);
        assert_eq!(a.cap_censored, b.cap_censored);
    }

    #[test]
    fn decay_rate_pure_death() {
        // Survival is exactly e^{-t}: slope -1.
        let grid: Vec<f64> = (5..=12).map(|k| k as f64).collect();
        let fit = decay_rate(&unit(), 4, 0.0, &grid, 400_000, 8).unwrap();
        assert!(
            (fit.slope + 1.0).abs() < 3.0 * fit.stderr,
            "slope {} stderr {}",
            fit.slope,
            fit.stderr
        );
    }

    #[test]
    fn decay_rate_repetitions_agree() {
        let grid: Vec<f64> = (5..=10).map(|k| k as f64).collect();
        let a = decay_rate(&unit(), 4, 0.05, &grid, 150_000, 21).unwrap();
        let b = decay_rate(&unit(), 4, 0.05, &grid, 150_000, 22).unwrap();
        let combined = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!(
            (a.slope - b.slope).abs() < 3.0 * combined,
            "slopes {} vs {} (combined stderr {combined})",
            a.slope,
            b.slope
        );
    }

    #[test]
    fn decay_rate_grid_too_long() {
        // At lambda = 0 survival at t = 10 is ~e^{-10}: a 1000-replica
        // budget leaves nobody alive there.
        let grid = vec![5.0, 10.0, 20.0, 40.0];
        match decay_rate(&unit(), 3, 0.0, &grid, 1_000, 5) {
            Err(Error::GridTooLong(t)) => assert!(t >= 10.0),
            other => panic!("expected GridTooLong, got {other:?}"),
        }
    }

    #[test]
    fn coupled_pair_nested_and_monotone() {
        let dist = coin();
        let mut cfg = CpRunConfig::new(4, 0.0);
        cfg.t_max = 12.0;
        cfg.size_cap = 3_000;
        cfg.checkpoints = vec![1.0, 3.0, 6.0, 12.0];
        let mut low_survive = 0u64;
        let mut high_survive = 0u64;
        for rep in 0..3_000u64 {
            let env = QuenchedEnvironment::new(crate::rng::mix64(rep ^ 0xC0FFEE), dist.clone());
            let mut rng = Stream::derive(808, &[rep]);
            let (low, high) = run_coupled(&env, &cfg, 0.25, 0.375, &mut rng).unwrap();
            // Nesting at every checkpoint, and survival implication.
            for (l, h) in low.checkpoint_sizes.iter().zip(&high.checkpoint_sizes) {
                assert_eq!(l.0, h.0);
                assert!(l.1 <= h.1, "checkpoint sizes {l:?} vs {h:?}");
            }
            if low.survived() {
                assert!(high.survived(), "low survived but high died");
            }
            low_survive += low.survived() as u64;
            high_survive += high.survived() as u64;
        }
        assert!(low_survive <= high_survive);
    }

    #[test]
    fn coupled_multi_rejects_bad_rates() {
        let env = unit_env(3);
        let cfg = CpRunConfig::new(3, 1.0);
        let mut rng = Stream::new(1);
        assert!(run_coupled_multi(&env, &cfg, &[], &mut rng).is_err());
        assert!(run_coupled_multi(&env, &cfg, &[0.2, 0.2], &mut rng).is_err());
        assert!(run_coupled(&env, &cfg, 0.5, 0.5, &mut rng).is_err());
    }

    #[test]
    fn coupled_engine_agrees_with_direct_engine() {
        // Same law, two different engines: survival frequencies must agree.
        let mut cfg = CpRunConfig::new(3, 0.5);
        cfg.t_max = 8.0;
        cfg.size_cap = 5_000;
        let dist = unit();
        let replicas = 20_000u64;
        let direct =
            survival_probability(&dist, &cfg, EnvironmentMode::Annealed, replicas, 500).unwrap();
        let mut coupled_survivors = 0u64;
        for rep in 0..replicas {
            let env = replica_env(&dist, EnvironmentMode::Annealed, 501, rep);
            let mut rng = Stream::derive(502, &[rep]);
            let out = run_coupled_multi(&env, &cfg, &[0.5], &mut rng).unwrap();
            assert_eq!(out.inclusion_violations, 0);
            coupled_survivors += out.runs[0].survived() as u64;
        }
        let p1 = direct.estimate;
        let p2 = coupled_survivors as f64 / replicas as f64;
        let sigma = ((p1 * (1.0 - p1) + p2 * (1.0 - p2)) / replicas as f64).sqrt();
        assert!(
            (p1 - p2).abs() < 3.5 * sigma,
            "direct {p1} vs coupled {p2} (sigma {sigma})"
        );
    }

    #[test]
    fn truncated_survival_matches_exact_ctmc() {
        // d=2, depth 2: exact survival probability from the finite chain
        // must sit inside the Wilson interval of the simulated frequency.
        let env = unit_env(12);
        let tree = TruncatedTree::new(2, 2).unwrap();
        let (lambda, t) = (0.9, 2.0);
        let ctmc = FiniteCTMC::new(&tree, &env, lambda).unwrap();
        let exact = 1.0 - ctmc.exact_distribution(1, t).unwrap()[0];
        let mut cfg = CpRunConfig::new(2, lambda);
        cfg.truncate_depth = Some(2);
        cfg.t_max = t;
        let replicas = 100_000u64;
        let est =
            survival_probability(&unit(), &cfg, EnvironmentMode::Quenched, replicas, 77).unwrap();
        assert!(
            est.wilson_ci.0 <= exact && exact <= est.wilson_ci.1,
            "exact {exact} outside Wilson interval {:?}",
            est.wilson_ci
        );
    }

    #[test]
    fn truncated_full_state_matches_exact_distribution() {
        // Full end-state histogram against the exact row of e^{tQ},
        // chi-square at the 0.999 level.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let env = unit_env(3);
        let tree = TruncatedTree::new(2, 1).unwrap();
        let (lambda, t) = (1.0, 1.0);
        let ctmc = FiniteCTMC::new(&tree, &env, lambda).unwrap();
        let exact = ctmc.exact_distribution(1, t).unwrap();
        let mut cfg = CpRunConfig::new(2, lambda);
        cfg.truncate_depth = Some(1);
        cfg.t_max = t;
        cfg.record_final_state = true;
        let replicas = 200_000u64;
        let mut counts = vec![0u64; 8];
        for rep in 0..replicas {
            let mut rng = Stream::derive(9000, &[rep]);
            let s = run(&env, &cfg, &mut rng).unwrap();
            let state = s.final_state.unwrap();
            let mut mask = 0usize;
            for (i, &b) in state.iter().enumerate() {
                if b {
                    mask |= 1 << i;
                }
            }
            counts[mask] += 1;
        }
        let mut stat = 0.0;
        let mut dof = 0;
        for (s, &c) in counts.iter().enumerate() {
            let e = exact[s] * replicas as f64;
            if e >= 5.0 {
                stat += (c as f64 - e).powi(2) / e;
                dof += 1;
            }
        }
        let crit = ChiSquared::new((dof - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi-square {stat} above critical {crit}");
    }

    #[test]
    fn all_ones_truncated_run_matches_duality_side() {
        // Root occupation from the all-ones start equals the exact CTMC
        // marginal.
        let env = unit_env(21);
        let tree = TruncatedTree::new(2, 2).unwrap();
        let (lambda, t) = (0.8, 1.5);
        let ctmc = FiniteCTMC::new(&tree, &env, lambda).unwrap();
        let all = (1u32 << tree.len()) - 1;
        let dist_full = ctmc.exact_distribution(all, t).unwrap();
        let exact_marginal: f64 = dist_full
            .iter()
            .enumerate()
            .filter(|(s, _)| s & 1 != 0)
            .map(|(_, &p)| p)
            .sum();
        let mut cfg = CpRunConfig::new(2, lambda);
        cfg.truncate_depth = Some(2);
        cfg.t_max = t;
        cfg.initial = InitialCondition::AllOnes;
        let replicas = 100_000u64;
        let mut hits = 0u64;
        for rep in 0..replicas {
            let mut rng = Stream::derive(888, &[rep]);
            let s = run(&env, &cfg, &mut rng).unwrap();
            hits += s.root_infected_at_end as u64;
        }
        let (lo, hi) = wilson_interval(hits, replicas, Z95);
        assert!(
            lo <= exact_marginal && exact_marginal <= hi,
            "exact {exact_marginal} outside [{lo}, {hi}]"
        );
    }

    #[test]
    fn rate_bound_never_violated() {
        let dist =
            WeightDistribution::new(&[(0.2, 0.3), (1.0, 0.5), (2.0, 0.2)], 2.0).unwrap();
        let mut cfg = CpRunConfig::new(3, 0.7);
        cfg.t_max = 15.0;
        cfg.size_cap = 5_000;
        for rep in 0..2_000u64 {
            let env = QuenchedEnvironment::new(crate::rng::mix64(rep), dist.clone());
            let mut rng = Stream::derive(404, &[rep]);
            let s = run(&env, &cfg, &mut rng).unwrap();
            assert_eq!(s.rate_bound_violations, 0);
        }
    }

    #[test]
    fn domination_coupling_has_no_violations() {
        let dist = coin();
        let mut cfg = CpRunConfig::new(3, 0.8);
        cfg.t_max = 15.0;
        cfg.size_cap = 3_000;
        let mut sir_total = 0u64;
        for rep in 0..2_000u64 {
            let env = QuenchedEnvironment::new(crate::rng::mix64(rep ^ 0xABCD), dist.clone());
            let mut rng = Stream::derive(606, &[rep]);
            let out = run_cp_sir_coupled(&env, &cfg, &mut rng).unwrap();
            assert_eq!(out.violations, 0, "replica {rep}");
            sir_total += out.sir_ever_infected;
        }
        assert!(sir_total > 2_000, "SIR overlay never spread");
    }
}
