//! Coupled runs from one shared graphical representation.
//!
//! Per directed edge, candidate arrivals come as a Poisson stream at the
//! uniform rate `Lambda = lambda_max M^2`; a candidate infects in the run
//! with rate `lambda` iff a shared uniform falls below
//! `lambda rho(x) rho(y) / Lambda`. Recovery clocks are shared outright.
//! Acceptance thresholds are ordered in `lambda`, so the infected sets are
//! nested pathwise: the run at a smaller rate is contained in the run at a
//! larger rate at every event time. Nesting is what turns the monotonicity
//! of survival in `lambda` into an exact property of output.
//!
//! Vertices of the largest still-undecided run drive the clocks; every
//! vertex gets `d+1` candidate slots (the root's parent slot fires blanks)
//! so slot selection is uniform. Blank events are independent Poisson
//! thinning and change no law.
//!
//! The same machinery couples the non-backtracking SIR model under the
//! contact process: SIR uses the identical clocks but only accepts
//! parent-to-child candidates from currently-infectious, never-removed
//! vertices, which keeps its infected set inside the contact process's
//! pathwise.

use super::arena::{Arena, NO_VERTEX};
use super::{CensorReason, CpRunConfig, InitialCondition, TrajectorySummary};
use crate::rng::Stream;
use crate::weights::QuenchedEnvironment;
use crate::{Error, Result};

/// Run several infection rates from one graphical representation.
#[derive(Debug, Clone)]
pub struct CoupledOutcome {
    pub runs: Vec<TrajectorySummary>,
    /// Nesting failures observed at event granularity; structurally zero.
    pub inclusion_violations: u64,
}

#[derive(Debug, Clone, Copy)]
enum Decision {
    Extinct(f64),
    Censored(CensorReason),
}

/// Pathwise-coupled trajectories at every rate in `lambdas` (strictly
/// increasing, at most 32). `cfg.lambda` is ignored; everything else
/// (degree, horizon, caps, checkpoints) applies to each run.
pub fn run_coupled_multi(
    env: &QuenchedEnvironment,
    cfg: &CpRunConfig,
    lambdas: &[f64],
    rng: &mut Stream,
) -> Result<CoupledOutcome> {
    cfg.validate()?;
    if cfg.initial != InitialCondition::Root {
        return Err(Error::InvalidInput("coupled runs start from the root".into()));
    }
    if lambdas.is_empty() || lambdas.len() > 32 {
        return Err(Error::InvalidInput("need between 1 and 32 coupled rates".into()));
    }
    if lambdas.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput("rates must be nonnegative and finite".into()));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("rates must be strictly increasing".into()));
    }
    let m = env.distribution().bound();
    let big_lambda = lambdas.last().unwrap() * m * m;
    let n_runs = lambdas.len();
    let degree = cfg.degree;
    let slots_per_vertex = (degree + 1) as f64;
    let per_vertex_rate = 1.0 + slots_per_vertex * big_lambda;

    let mut arena = Arena::new(env, degree, cfg.truncate_depth);
    let mut masks: Vec<u32> = vec![(1u32 << n_runs) - 1]; // root infected everywhere
    let mut sizes = vec![1u64; n_runs];
    let mut max_depth = vec![0u32; n_runs];
    let mut decided: Vec<Option<Decision>> = vec![None; n_runs];
    let mut lo = 0usize;
    let mut hi = n_runs - 1;
    let mut top_list: Vec<u32> = vec![0];
    let mut top_pos: Vec<u32> = vec![0];
    let mut now = 0.0f64;
    let mut events = 0u64;
    let mut violations = 0u64;
    let mut thinning_violations = 0u64;
    let mut checkpoints: Vec<Vec<(f64, u64)>> = vec![Vec::new(); n_runs];
    let mut next_cp = 0usize;

    macro_rules! sync {
        () => {
            if masks.len() < arena.len() {
                masks.resize(arena.len(), 0);
                top_pos.resize(arena.len(), NO_VERTEX);
            }
        };
    }

    while lo <= hi {
        debug_assert!(!top_list.is_empty());
        let total = top_list.len() as f64 * per_vertex_rate;
        now += rng.exp(total);
        events += 1;
        // Checkpoints see the pre-event state.
        while next_cp < cfg.checkpoints.len() && cfg.checkpoints[next_cp] < now.min(cfg.t_max) {
            let cp = cfg.checkpoints[next_cp];
            for r in 0..n_runs {
                match decided[r] {
                    None => checkpoints[r].push((cp, sizes[r])),
                    Some(Decision::Extinct(_)) => checkpoints[r].push((cp, 0)),
                    Some(Decision::Censored(_)) => {}
                }
            }
            next_cp += 1;
        }
        if now > cfg.t_max {
            break;
        }
        let window_mask = suffix_mask(lo, hi);
        let x = top_list[rng.index(top_list.len())];
        let u = rng.u01() * per_vertex_rate;
        if u < 1.0 {
            // Shared recovery clock.
            let hit = masks[x as usize] & window_mask;
            masks[x as usize] &= !window_mask;
            let mut bits = hit;
            while bits != 0 {
                let r = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                sizes[r] -= 1;
                if sizes[r] == 0 {
                    decided[r] = Some(Decision::Extinct(now));
                }
            }
            remove_from_top(&mut top_list, &mut top_pos, x);
            while lo <= hi && decided[lo].is_some() {
                lo += 1;
            }
            if lo > hi {
                break;
            }
        } else {
            // Candidate arrival on one of the d+1 edge slots.
            let slot = (((u - 1.0) / big_lambda) as usize).min(degree);
            let y = if slot == 0 {
                let p = arena.parent(x);
                if p == NO_VERTEX {
                    continue; // the root's parent slot fires blanks
                }
                p
            } else {
                match arena.children(x) {
                    None => continue, // slots below the truncation fire blanks
                    Some(kids) => {
                        sync!();
                        kids.start + (slot as u32 - 1)
                    }
                }
            };
            let share = rng.u01();
            let w = arena.weight(x) * arena.weight(y);
            if w <= 0.0 {
                continue;
            }
            if lambdas[hi] * w > big_lambda * (1.0 + 1e-12) {
                thinning_violations += 1;
            }
            let mut newly = 0u32;
            for r in lo..=hi {
                let bit = 1u32 << r;
                if masks[x as usize] & bit != 0
                    && masks[y as usize] & bit == 0
                    && share * big_lambda < lambdas[r] * w
                {
                    masks[y as usize] |= bit;
                    newly |= bit;
                    sizes[r] += 1;
                }
            }
            if newly == 0 {
                continue;
            }
            // Nesting must survive the event.
            if !is_suffix_closed(masks[y as usize] & window_mask, hi) {
                violations += 1;
            }
            if newly & (1 << hi) != 0 {
                add_to_top(&mut top_list, &mut top_pos, y);
            }
            let depth = arena.depth(y);
            let mut bits = newly;
            while bits != 0 {
                let r = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                max_depth[r] = max_depth[r].max(depth);
                if sizes[r] >= cfg.size_cap {
                    decided[r] = Some(Decision::Censored(CensorReason::SizeCap));
                } else if max_depth[r] >= cfg.depth_cap {
                    decided[r] = Some(Decision::Censored(CensorReason::DepthCap));
                }
            }
            let old_hi = hi;
            while hi >= lo && decided[hi].is_some() {
                if hi == 0 {
                    break;
                }
                hi -= 1;
            }
            if decided[hi].is_some() {
                // Whole window decided.
                break;
            }
            if hi != old_hi {
                rebuild_top(&masks, hi, &mut top_list, &mut top_pos);
            }
        }
    }

    for r in 0..n_runs {
        if decided[r].is_none() {
            decided[r] = Some(Decision::Censored(CensorReason::TimeHorizon));
        }
    }
    let runs = (0..n_runs)
        .map(|r| {
            let (extinction_time, censored) = match decided[r].unwrap() {
                Decision::Extinct(t) => (Some(t), None),
                Decision::Censored(c) => (None, Some(c)),
            };
            let mut cps = checkpoints[r].clone();
            let mut k = next_cp;
            match censored {
                None => {
                    while k < cfg.checkpoints.len() && cfg.checkpoints[k] <= cfg.t_max {
                        let cp = cfg.checkpoints[k];
                        let t_ext = extinction_time.unwrap();
                        cps.push((cp, if cp < t_ext { sizes[r] } else { 0 }));
                        k += 1;
                    }
                }
                Some(CensorReason::TimeHorizon) => {
                    while k < cfg.checkpoints.len() && cfg.checkpoints[k] <= cfg.t_max {
                        cps.push((cfg.checkpoints[k], sizes[r]));
                        k += 1;
                    }
                }
                Some(_) => {}
            }
            TrajectorySummary {
                extinction_time,
                censored,
                checkpoint_sizes: cps,
                events,
                rate_bound_violations: thinning_violations,
                final_infected: if extinction_time.is_some() { 0 } else { sizes[r] },
                root_infected_at_end: masks[0] & (1 << r) != 0 && extinction_time.is_none(),
                final_state: None,
            }
        })
        .collect();
    Ok(CoupledOutcome { runs, inclusion_violations: violations })
}

/// Two coupled trajectories sharing all clocks; the lower-rate infected set
/// stays inside the higher-rate one pathwise.
pub fn run_coupled(
    env: &QuenchedEnvironment,
    cfg: &CpRunConfig,
    lambda_low: f64,
    lambda_high: f64,
    rng: &mut Stream,
) -> Result<(TrajectorySummary, TrajectorySummary)> {
    if !(lambda_low > 0.0) || lambda_low >= lambda_high {
        return Err(Error::InvalidInput(
            "coupled pair needs 0 < lambda_low < lambda_high".into(),
        ));
    }
    let out = run_coupled_multi(env, cfg, &[lambda_low, lambda_high], rng)?;
    assert_eq!(out.inclusion_violations, 0, "coupling construction violated nesting");
    let mut it = out.runs.into_iter();
    Ok((it.next().unwrap(), it.next().unwrap()))
}

fn suffix_mask(lo: usize, hi: usize) -> u32 {
    let upper = if hi + 1 >= 32 { u32::MAX } else { (1u32 << (hi + 1)) - 1 };
    let lower = (1u32 << lo) - 1;
    upper & !lower
}

fn is_suffix_closed(window_bits: u32, hi: usize) -> bool {
    if window_bits == 0 {
        return true;
    }
    let shifted = window_bits >> window_bits.trailing_zeros();
    (shifted & shifted.wrapping_add(1)) == 0 && window_bits >> hi == 1
}

fn add_to_top(list: &mut Vec<u32>, pos: &mut [u32], v: u32) {
    debug_assert_eq!(pos[v as usize], NO_VERTEX);
    pos[v as usize] = list.len() as u32;
    list.push(v);
}

fn remove_from_top(list: &mut Vec<u32>, pos: &mut [u32], v: u32) {
    let k = pos[v as usize];
    debug_assert_ne!(k, NO_VERTEX);
    let last = *list.last().unwrap();
    list.swap_remove(k as usize);
    if (k as usize) < list.len() {
        pos[last as usize] = k;
    }
    pos[v as usize] = NO_VERTEX;
}

fn rebuild_top(masks: &[u32], hi: usize, list: &mut Vec<u32>, pos: &mut [u32]) {
    let bit = 1u32 << hi;
    let old: Vec<u32> = std::mem::take(list);
    for &v in &old {
        pos[v as usize] = NO_VERTEX;
    }
    for v in old {
        if masks[v as usize] & bit != 0 {
            pos[v as usize] = list.len() as u32;
            list.push(v);
        }
    }
}

/// Outcome of one contact-process run with a non-backtracking SIR overlay
/// on the same clocks.
#[derive(Debug, Clone)]
pub struct DominationOutcome {
    /// Times an SIR-infected vertex was not contact-process infected;
    /// structurally zero.
    pub violations: u64,
    /// Vertices the SIR overlay ever infected.
    pub sir_ever_infected: u64,
    /// Whether the SIR infectious set emptied before the run ended.
    pub sir_extinct: bool,
    /// Whether the contact process went extinct before horizon/caps.
    pub cp_extinct: bool,
}

/// Couple the contact process with the SIR overlay: shared recovery clocks
/// and shared candidate uniforms, SIR accepting only parent-to-child edges
/// from currently infectious vertices.
pub fn run_cp_sir_coupled(
    env: &QuenchedEnvironment,
    cfg: &CpRunConfig,
    rng: &mut Stream,
) -> Result<DominationOutcome> {
    cfg.validate()?;
    if cfg.initial != InitialCondition::Root {
        return Err(Error::InvalidInput("the coupled SIR run starts from the root".into()));
    }
    let m = env.distribution().bound();
    let lambda = cfg.lambda;
    let big_lambda = lambda * m * m;
    let degree = cfg.degree;
    let per_vertex_rate = 1.0 + (degree + 1) as f64 * big_lambda;

    const SUSCEPTIBLE: u8 = 0;
    const INFECTIOUS: u8 = 1;
    const REMOVED: u8 = 2;

    let mut arena = Arena::new(env, degree, cfg.truncate_depth);
    let mut cp: Vec<bool> = vec![true];
    let mut sir: Vec<u8> = vec![INFECTIOUS];
    let mut cp_list: Vec<u32> = vec![0];
    let mut cp_pos: Vec<u32> = vec![0];
    let mut sir_active = 1u64;
    let mut sir_ever = 1u64;
    let mut violations = 0u64;
    let mut now = 0.0f64;
    let mut max_depth = 0u32;
    let mut cp_extinct = false;

    while !cp_list.is_empty() {
        let total = cp_list.len() as f64 * per_vertex_rate;
        now += rng.exp(total);
        if now > cfg.t_max {
            break;
        }
        let x = cp_list[rng.index(cp_list.len())];
        let u = rng.u01() * per_vertex_rate;
        if u < 1.0 {
            cp[x as usize] = false;
            remove_from_top(&mut cp_list, &mut cp_pos, x);
            if sir[x as usize] == INFECTIOUS {
                sir[x as usize] = REMOVED;
                sir_active -= 1;
            }
            if cp_list.is_empty() {
                cp_extinct = true;
            }
        } else {
            let slot = (((u - 1.0) / big_lambda) as usize).min(degree);
            let y = if slot == 0 {
                let p = arena.parent(x);
                if p == NO_VERTEX {
                    continue;
                }
                p
            } else {
                match arena.children(x) {
                    None => continue, // slots below the truncation fire blanks
                    Some(kids) => {
                        if cp.len() < arena.len() {
                            cp.resize(arena.len(), false);
                            sir.resize(arena.len(), SUSCEPTIBLE);
                            cp_pos.resize(arena.len(), NO_VERTEX);
                        }
                        kids.start + (slot as u32 - 1)
                    }
                }
            };
            let share = rng.u01();
            let w = arena.weight(x) * arena.weight(y);
            if w <= 0.0 || share * big_lambda >= lambda * w {
                continue;
            }
            if !cp[y as usize] {
                cp[y as usize] = true;
                add_to_top(&mut cp_list, &mut cp_pos, y);
                max_depth = max_depth.max(arena.depth(y));
            }
            // SIR accepts only child slots from an infectious parent.
            if slot >= 1 && sir[x as usize] == INFECTIOUS && sir[y as usize] == SUSCEPTIBLE {
                sir[y as usize] = INFECTIOUS;
                sir_active += 1;
                sir_ever += 1;
                if !cp[y as usize] {
                    violations += 1;
                }
            }
            if cp_list.len() as u64 >= cfg.size_cap || max_depth >= cfg.depth_cap {
                break;
            }
        }
    }
    Ok(DominationOutcome {
        violations,
        sir_ever_infected: sir_ever,
        sir_extinct: sir_active == 0,
        cp_extinct,
    })
}
