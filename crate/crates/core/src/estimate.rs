//! Estimation pipelines for the two critical rates, sandwiched by the
//! closed-form bounds.
//!
//! Everything here works with the finite-horizon proxy: a run that is still
//! alive at the horizon (or was cut by a cap) counts as a survivor, and a
//! rate is called dead or alive by comparing the Wilson interval of the
//! survival estimate against a small threshold. The proxy biases estimates
//! of the survival critical rate downward by an amount visible in the
//! censor counts, and every report carries the analytic sandwich so
//! inconsistencies surface immediately.

use crate::bounds;
use crate::cp_sim::{
    self, run_coupled_multi, CensorReason, CpRunConfig, EnvironmentMode, TrajectorySummary,
};
use crate::rng::Stream;
use crate::stats::{wilson_interval, Z95};
use crate::weights::{QuenchedEnvironment, WeightDistribution};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Survival threshold separating "dead" from "alive" classifications.
pub const SURVIVAL_THRESHOLD: f64 = 0.005;

/// One rate in a common-random-number sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub survivors: u64,
    pub estimate: f64,
    pub wilson_ci: (f64, f64),
    /// Fraction of replicas cut by a size or depth cap.
    pub censor_fraction: f64,
    pub replicas: u64,
}

/// Survival estimates over a rate grid from shared randomness: the
/// estimates are non-decreasing in the rate exactly, not just on average.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub degree: usize,
    pub t_max: f64,
    pub master_seed: u64,
    pub rows: Vec<SweepRow>,
    /// Nesting failures reported by the coupled engine; zero by
    /// construction.
    pub inclusion_violations: u64,
}

/// Common-random-number survival sweep over a strictly increasing rate
/// grid. Each replica runs every rate from one shared graphical
/// representation, with a fresh environment per replica.
pub fn sweep(
    degree: usize,
    dist: &WeightDistribution,
    lambda_grid: &[f64],
    t_max: f64,
    replicas: u64,
    master_seed: u64,
) -> Result<SweepResult> {
    sweep_with_caps(degree, dist, lambda_grid, t_max, replicas, master_seed, None)
}

/// [`sweep`] with explicit `(size_cap, depth_cap)`.
pub fn sweep_with_caps(
    degree: usize,
    dist: &WeightDistribution,
    lambda_grid: &[f64],
    t_max: f64,
    replicas: u64,
    master_seed: u64,
    caps: Option<(u64, u32)>,
) -> Result<SweepResult> {
    if lambda_grid.is_empty() || lambda_grid.len() > 32 {
        return Err(Error::InvalidInput("rate grid must have 1 to 32 points".into()));
    }
    if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("rate grid must be strictly increasing".into()));
    }
    if replicas == 0 {
        return Err(Error::InvalidInput("need at least one replica".into()));
    }
    let mut cfg = CpRunConfig::new(degree, *lambda_grid.last().unwrap());
    cfg.t_max = t_max;
    if let Some((size_cap, depth_cap)) = caps {
        cfg.size_cap = size_cap;
        cfg.depth_cap = depth_cap;
    }
    cfg.validate()?;

    let per_replica: Vec<(u32, u32, u64)> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let env_seed = Stream::derive(master_seed, &[0x5E, rep]).next_u64();
            let env = QuenchedEnvironment::new(env_seed, dist.clone());
            let mut rng = Stream::derive(master_seed, &[0x51, rep]);
            let out = run_coupled_multi(&env, &cfg, lambda_grid, &mut rng)
                .expect("validated sweep config");
            let mut survived = 0u32;
            let mut capped = 0u32;
            for (i, run) in out.runs.iter().enumerate() {
                if run.survived() {
                    survived |= 1 << i;
                }
                if matches!(
                    run.censored,
                    Some(CensorReason::SizeCap) | Some(CensorReason::DepthCap)
                ) {
                    capped |= 1 << i;
                }
            }
            (survived, capped, out.inclusion_violations)
        })
        .collect();

    let mut survivors = vec![0u64; lambda_grid.len()];
    let mut capped = vec![0u64; lambda_grid.len()];
    let mut violations = 0u64;
    for &(s, c, v) in &per_replica {
        for i in 0..lambda_grid.len() {
            survivors[i] += (s >> i & 1) as u64;
            capped[i] += (c >> i & 1) as u64;
        }
        violations += v;
    }
    let rows = lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| SweepRow {
            lambda,
            survivors: survivors[i],
            estimate: survivors[i] as f64 / replicas as f64,
            wilson_ci: wilson_interval(survivors[i], replicas, Z95),
            censor_fraction: capped[i] as f64 / replicas as f64,
            replicas,
        })
        .collect();
    Ok(SweepResult { degree, t_max, master_seed, rows, inclusion_violations: violations })
}

/// How one rate classified under the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Dead,
    Alive,
    Unclear,
}

/// Classification runs cap the infected count well below the general
/// default: reaching a few thousand infected decides survival for all
/// practical purposes, and supercritical runs would otherwise burn the
/// whole budget growing.
const CLASSIFY_SIZE_CAP: u64 = 5_000;

fn classify(
    degree: usize,
    dist: &WeightDistribution,
    lambda: f64,
    t_max: f64,
    replicas: u64,
    seed: u64,
) -> Result<(Classification, f64)> {
    let mut cfg = CpRunConfig::new(degree, lambda);
    cfg.t_max = t_max;
    cfg.size_cap = CLASSIFY_SIZE_CAP;
    let est = cp_sim::survival_probability(dist, &cfg, EnvironmentMode::Annealed, replicas, seed)?;
    let class = if est.wilson_ci.1 < SURVIVAL_THRESHOLD {
        Classification::Dead
    } else if est.wilson_ci.0 > SURVIVAL_THRESHOLD {
        Classification::Alive
    } else {
        Classification::Unclear
    };
    Ok((class, est.estimate))
}

/// A bisection bracket for the survival critical rate, with the analytic
/// sandwich attached.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalEstimate {
    pub degree: usize,
    /// Largest rate classified dead.
    pub lambda_dead: f64,
    /// Smallest rate classified alive.
    pub lambda_alive: f64,
    pub t_max: f64,
    pub replicas_per_point: u64,
    pub threshold: f64,
    pub master_seed: u64,
    /// Set when the budget ran out before the bracket reached tolerance.
    pub warning: Option<String>,
    pub sandwich_lower: f64,
    pub sandwich_upper: Option<f64>,
    pub sandwich_verdict: bounds::SandwichVerdict,
}

/// Bisect the finite-horizon survival transition.
///
/// The bracket starts at the certified lower bound (dead side) and expands
/// upward to find a live rate, then halves until the width drops below
/// `tolerance` or a midpoint refuses to classify at this replica budget.
pub fn bisect_lambda_c(
    degree: usize,
    dist: &WeightDistribution,
    t_max: f64,
    replicas: u64,
    tolerance: f64,
    master_seed: u64,
) -> Result<CriticalEstimate> {
    if tolerance <= 0.0 {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let lower = bounds::lower_bound_lambda_e(degree, dist)?;
    let upper = bounds::upper_bound_lambda_c(degree, dist)?;
    let mut warning = None;
    let mut point = 0u64;
    let mut next_seed = || {
        point += 1;
        Stream::derive(master_seed, &[0xB1, point]).next_u64()
    };

    // Dead side: the certified bound itself should classify dead.
    let mut lambda_dead = lower;
    for _ in 0..6 {
        let (class, _) = classify(degree, dist, lambda_dead, t_max, replicas, next_seed())?;
        if class == Classification::Dead {
            break;
        }
        warning = Some(format!("rate {lambda_dead} below the certified bound did not classify dead"));
        lambda_dead /= 2.0;
    }

    // Alive side: start inside the certified interval when there is one.
    let mut lambda_alive = match upper {
        Some((star, (lo, hi))) => {
            let _ = lo;
            (2.0 * star).min((star * hi).sqrt())
        }
        None => 2.0 * lambda_dead.max(1e-6),
    };
    let mut found_alive = false;
    for _ in 0..24 {
        let (class, _) = classify(degree, dist, lambda_alive, t_max, replicas, next_seed())?;
        match class {
            Classification::Alive => {
                found_alive = true;
                break;
            }
            Classification::Dead => {
                lambda_dead = lambda_dead.max(lambda_alive);
                lambda_alive *= 2.0;
            }
            Classification::Unclear => {
                // Already near the transition; treat as the live edge but
                // flag it.
                warning = Some("alive edge classified unclear at this budget".into());
                found_alive = true;
                break;
            }
        }
    }
    if !found_alive {
        return Err(Error::InvalidInput(
            "no live rate found; raise the horizon or replica budget".into(),
        ));
    }

    while lambda_alive - lambda_dead > tolerance {
        let mid = 0.5 * (lambda_dead + lambda_alive);
        let (class, _) = classify(degree, dist, mid, t_max, replicas, next_seed())?;
        match class {
            Classification::Dead => lambda_dead = mid,
            Classification::Alive => lambda_alive = mid,
            Classification::Unclear => {
                warning = Some(format!(
                    "midpoint {mid} unclassifiable at {replicas} replicas; bracket left at width {}",
                    lambda_alive - lambda_dead
                ));
                break;
            }
        }
    }

    let verdict = bounds::sandwich_check(degree, dist, (lambda_dead, lambda_alive))?;
    Ok(CriticalEstimate {
        degree,
        lambda_dead,
        lambda_alive,
        t_max,
        replicas_per_point: replicas,
        threshold: SURVIVAL_THRESHOLD,
        master_seed,
        warning,
        sandwich_lower: lower,
        sandwich_upper: upper.map(|(star, _)| star),
        sandwich_verdict: verdict,
    })
}

/// Decay classification of one rate.
#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub lambda: f64,
    pub slope: f64,
    pub stderr: f64,
    /// Closed-form slope bound `lambda (d E rho^2 + M^4/E rho^2) - 1`.
    pub analytic_slope_bound: f64,
    /// Whether `slope + 3 stderr < 0`.
    pub decaying: bool,
}

/// Result of scanning a rate grid for exponential decay.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaEEstimate {
    pub degree: usize,
    pub rows: Vec<DecayRow>,
    /// Largest grid rate whose survival decays significantly.
    pub estimate: Option<f64>,
    pub replicas: u64,
    pub master_seed: u64,
}

/// Classify each rate on the grid by the sign of its fitted decay slope
/// and return the largest significantly-decaying one.
pub fn estimate_lambda_e(
    degree: usize,
    dist: &WeightDistribution,
    lambda_grid: &[f64],
    time_grid: &[f64],
    replicas: u64,
    master_seed: u64,
) -> Result<LambdaEEstimate> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidInput("rate grid must be nonempty".into()));
    }
    if lambda_grid.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput(
            "rate grid must be strictly positive (a zero rate trivially decays)".into(),
        ));
    }
    if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("rate grid must be strictly increasing".into()));
    }
    let m2 = dist.moment(2);
    let m = dist.bound();
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for (i, &lambda) in lambda_grid.iter().enumerate() {
        let seed = Stream::derive(master_seed, &[0xE0, i as u64]).next_u64();
        let fit = cp_sim::decay_rate(dist, degree, lambda, time_grid, replicas, seed)?;
        rows.push(DecayRow {
            lambda,
            slope: fit.slope,
            stderr: fit.stderr,
            analytic_slope_bound: lambda * (degree as f64 * m2 + m.powi(4) / m2) - 1.0,
            decaying: fit.slope + 3.0 * fit.stderr < 0.0,
        });
    }
    let estimate = rows.iter().filter(|r| r.decaying).map(|r| r.lambda).fold(None, |acc, l| {
        Some(acc.map_or(l, |a: f64| a.max(l)))
    });
    Ok(LambdaEEstimate { degree, rows, estimate, replicas, master_seed })
}

/// One degree in an asymptotic table.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticRow {
    pub degree: usize,
    pub lower_bound: f64,
    pub lambda_star: Option<f64>,
    pub scaled_lower: f64,
    pub scaled_star: Option<f64>,
    /// Bisection bracket midpoint scaled by `d`, when requested.
    pub scaled_bisect: Option<f64>,
    pub asymptote: f64,
}

/// Budget for optional per-degree bisection inside
/// [`asymptotic_sweep`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BisectBudget {
    pub t_max: f64,
    pub replicas: u64,
    pub tolerance: f64,
}

/// Table of `d * bound` against the asymptote `1 / E rho^2` over a list of
/// degrees, optionally adding a Monte Carlo bracket per degree.
pub fn asymptotic_sweep(
    dist: &WeightDistribution,
    degrees: &[usize],
    bisect: Option<BisectBudget>,
    master_seed: u64,
) -> Result<Vec<AsymptoticRow>> {
    if degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("degree list must be strictly increasing".into()));
    }
    let asym = bounds::asymptote(dist)?;
    degrees
        .iter()
        .map(|&d| {
            let lower = bounds::lower_bound_lambda_e(d, dist)?;
            let star = bounds::upper_bound_lambda_c(d, dist)?.map(|(s, _)| s);
            let scaled_bisect = match bisect {
                Some(budget) => {
                    let est = bisect_lambda_c(
                        d,
                        dist,
                        budget.t_max,
                        budget.replicas,
                        budget.tolerance,
                        Stream::derive(master_seed, &[0xA5, d as u64]).next_u64(),
                    )?;
                    Some(d as f64 * 0.5 * (est.lambda_dead + est.lambda_alive))
                }
                None => None,
            };
            Ok(AsymptoticRow {
                degree: d,
                lower_bound: lower,
                lambda_star: star,
                scaled_lower: d as f64 * lower,
                scaled_star: star.map(|s| d as f64 * s),
                scaled_bisect,
                asymptote: asym,
            })
        })
        .collect()
}

/// Convenience view of [`TrajectorySummary`] sequences as per-time survival
/// columns (used by reporting code).
pub fn survival_columns(runs: &[Vec<TrajectorySummary>], times: &[f64]) -> Vec<Vec<u64>> {
    let mut columns = vec![vec![0u64; times.len()]; runs.first().map_or(0, Vec::len)];
    for replica in runs {
        for (i, summary) in replica.iter().enumerate() {
            for (j, &t) in times.iter().enumerate() {
                if summary.alive_at(t) {
                    columns[i][j] += 1;
                }
            }
        }
    }
    columns
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> WeightDistribution {
        WeightDistribution::constant(1.0).unwrap()
    }

    fn coin() -> WeightDistribution {
        WeightDistribution::new(&[(0.0, 0.5), (1.0, 0.5)], 1.0).unwrap()
    }

    #[test]
    fn sweep_is_exactly_monotone() {
        let grid = [0.05, 0.1, 0.2, 0.4, 0.8];
        let out = sweep_with_caps(4, &coin(), &grid, 10.0, 2_000, 31, Some((2_000, 10_000)))
            .unwrap();
        assert_eq!(out.inclusion_violations, 0);
        for w in out.rows.windows(2) {
            assert!(
                w[0].survivors <= w[1].survivors,
                "survivors dropped: {} -> {}",
                w[0].survivors,
                w[1].survivors
            );
        }
    }

    #[test]
    fn sweep_below_lower_bound_all_dead() {
        // Every grid point below the certified bound: zero survivors at a
        // long horizon.
        let d = 6;
        let lower = bounds::lower_bound_lambda_e(d, &unit()).unwrap();
        let grid = [lower * 0.2, lower * 0.4, lower * 0.6];
        let out = sweep(d, &unit(), &grid, 200.0, 2_000, 77).unwrap();
        for row in &out.rows {
            assert_eq!(row.survivors, 0, "lambda {}", row.lambda);
        }
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        assert!(sweep(3, &unit(), &[], 10.0, 10, 1).is_err());
        assert!(sweep(3, &unit(), &[0.2, 0.2], 10.0, 10, 1).is_err());
    }

    #[test]
    fn bisect_bracket_intersects_sandwich() {
        let est = bisect_lambda_c(10, &unit(), 60.0, 3_000, 0.02, 2026).unwrap();
        assert!(est.lambda_dead < est.lambda_alive);
        assert_eq!(est.sandwich_verdict, bounds::SandwichVerdict::Pass);
        assert!((est.sandwich_lower - 1.0 / 11.0).abs() < 1e-15);
        assert!((est.sandwich_upper.unwrap() - (4.0 - 15.0f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn bisect_more_replicas_consistent() {
        let a = bisect_lambda_c(6, &unit(), 40.0, 1_500, 0.05, 7).unwrap();
        let b = bisect_lambda_c(6, &unit(), 40.0, 3_000, 0.05, 8).unwrap();
        // Brackets from different budgets must overlap.
        assert!(
            a.lambda_dead <= b.lambda_alive && b.lambda_dead <= a.lambda_alive,
            "disjoint brackets: ({}, {}) vs ({}, {})",
            a.lambda_dead,
            a.lambda_alive,
            b.lambda_dead,
            b.lambda_alive
        );
    }

    #[test]
    fn lambda_e_grid_certified_region_decays() {
        // Both grid points sit below the certified bound 1/11; both must
        // classify as decaying, so the estimate is the larger one.
        let d = 10;
        let grid = [0.03, 0.05];
        let times: Vec<f64> = (5..=10).map(|k| k as f64).collect();
        let out = estimate_lambda_e(d, &unit(), &grid, &times, 60_000, 5).unwrap();
        for row in &out.rows {
            assert!(row.decaying, "lambda {} did not decay", row.lambda);
            assert!(row.analytic_slope_bound < 0.0);
        }
        assert_eq!(out.estimate, Some(0.05));
    }

    #[test]
    fn lambda_e_rejects_zero_rate() {
        let times = [5.0, 6.0, 7.0, 8.0];
        assert!(estimate_lambda_e(4, &unit(), &[0.0, 0.1], &times, 100, 5).is_err());
    }

    #[test]
    fn asymptotic_rows_match_closed_forms() {
        let rows = asymptotic_sweep(&unit(), &[4, 16, 64, 256], None, 1).unwrap();
        let expect_scaled = [0.8, 16.0 / 17.0, 64.0 / 65.0, 256.0 / 257.0];
        for (row, &exp) in rows.iter().zip(&expect_scaled) {
            assert!((row.scaled_lower - exp).abs() < 1e-12);
            assert_eq!(row.asymptote, 1.0);
        }
        assert!(rows[0].lambda_star.is_none(), "d=4 is the tangent case");
        let scaled: Vec<f64> = rows.iter().filter_map(|r| r.scaled_star).collect();
        assert_eq!(scaled.len(), 3);
        for w in scaled.windows(2) {
            assert!(w[0] > w[1], "d*lambda_star must decrease toward the limit");
        }
        for &s in &scaled {
            assert!(s > 1.0 && s < 1.2, "scaled star {s}");
        }
    }

    #[test]
    fn asymptotic_rows_coin_weights() {
        let rows = asymptotic_sweep(&coin(), &[4, 16, 64, 256], None, 1).unwrap();
        for row in &rows {
            assert_eq!(row.asymptote, 2.0);
        }
        // d * lower increases toward 2, d * star decreases toward 2.
        let lowers: Vec<f64> = rows.iter().map(|r| r.scaled_lower).collect();
        for w in lowers.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(*lowers.last().unwrap() < 2.0);
        assert!(2.0 - lowers.last().unwrap() < 0.04);
        let stars: Vec<f64> = rows.iter().filter_map(|r| r.scaled_star).collect();
        for w in stars.windows(2) {
            assert!(w[0] > w[1]);
        }
        for &s in &stars {
            assert!(s > 2.0);
        }
        assert!(stars.last().unwrap() - 2.0 < 0.04);
    }
}
