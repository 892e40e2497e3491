//! Direct-method event engine for the contact process.
//!
//! State is the infected set plus a frontier table: every healthy vertex
//! with at least one infected neighbor holds a slot with per-weight-class
//! counts of its infected neighbors. Slot rates are recomputed exactly from
//! the counts on every touch (no incremental float drift) and indexed in a
//! Fenwick tree for O(log n) selection. Recoveries are uniform over the
//! infected list.

use super::arena::{Arena, NO_VERTEX};
use super::{CensorReason, CpRunConfig, InitialCondition, TrajectorySummary};
use crate::fenwick::Fenwick;
use crate::rng::Stream;
use crate::weights::QuenchedEnvironment;
use crate::Result;

/// Relative slack for the uniform rate-bound assertion: the bound is exact
/// mathematics, the slack absorbs float rounding of the comparison itself.
const RATE_BOUND_SLACK: f64 = 1.0 + 1e-9;

/// What one capped step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// No infected vertices remain.
    Extinct,
    /// An event fired at `t`.
    Event { t: f64, depth_touched: u32 },
    /// The next event would fire past the limit; state unchanged.
    Horizon,
}

pub struct InfectionState<'a> {
    arena: Arena<'a>,
    lambda: f64,
    values: Vec<f64>,
    class_count: usize,
    now: f64,
    infected: Vec<u32>,
    /// Arena index -> position in `infected`, or `NO_VERTEX`.
    inf_pos: Vec<u32>,
    /// Arena index -> frontier slot, or `NO_VERTEX`.
    slot_of: Vec<u32>,
    /// Vertex per frontier slot.
    slot_vert: Vec<u32>,
    /// Flattened per-slot infected-neighbor counts, `class_count` each.
    slot_counts: Vec<u16>,
    rates: Fenwick,
    rate_bound: f64,
    rate_bound_violations: u64,
    events: u64,
}

impl<'a> InfectionState<'a> {
    pub fn new(env: &'a QuenchedEnvironment, cfg: &CpRunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut arena = Arena::new(env, cfg.degree, cfg.truncate_depth);
        let values = env.distribution().values().to_vec();
        let class_count = values.len();
        let m = env.distribution().bound();
        let mut state = Self {
            lambda: cfg.lambda,
            values,
            class_count,
            now: 0.0,
            infected: Vec::new(),
            inf_pos: Vec::new(),
            slot_of: Vec::new(),
            slot_vert: Vec::new(),
            slot_counts: Vec::new(),
            rates: Fenwick::new(64),
            rate_bound: crate::bounds::rate_sup(cfg.lambda, cfg.degree, m) * RATE_BOUND_SLACK,
            rate_bound_violations: 0,
            events: 0,
            arena: {
                if cfg.initial == InitialCondition::AllOnes {
                    arena.materialize_full();
                }
                arena
            },
        };
        state.sync_side_arrays();
        match cfg.initial {
            InitialCondition::Root => state.infect(0),
            InitialCondition::AllOnes => {
                for idx in 0..state.arena.len() as u32 {
                    state.inf_pos[idx as usize] = state.infected.len() as u32;
                    state.infected.push(idx);
                }
            }
        }
        Ok(state)
    }

    fn sync_side_arrays(&mut self) {
        let n = self.arena.len();
        if self.inf_pos.len() < n {
            self.inf_pos.resize(n, NO_VERTEX);
            self.slot_of.resize(n, NO_VERTEX);
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn infected_count(&self) -> usize {
        self.infected.len()
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn rate_bound_violations(&self) -> u64 {
        self.rate_bound_violations
    }

    #[inline]
    fn is_infected(&self, idx: u32) -> bool {
        self.inf_pos[idx as usize] != NO_VERTEX
    }

    pub fn root_infected(&self) -> bool {
        self.is_infected(0)
    }

    /// Total instantaneous transition rate.
    pub fn total_rate(&self) -> f64 {
        self.infected.len() as f64 + self.rates.total()
    }

    fn slot_rate(&self, slot: u32) -> f64 {
        let vert = self.slot_vert[slot as usize];
        let base = self.slot_counts[slot as usize * self.class_count..]
            .iter()
            .take(self.class_count)
            .zip(&self.values)
            .map(|(&c, &v)| c as f64 * v)
            .sum::<f64>();
        self.lambda * self.arena.weight(vert) * base
    }

    fn set_slot_rate(&mut self, slot: u32) {
        let rate = self.slot_rate(slot);
        if rate > self.rate_bound {
            self.rate_bound_violations += 1;
        }
        self.rates.set(slot as usize, rate);
    }

    fn ensure_slot(&mut self, vert: u32) -> u32 {
        let existing = self.slot_of[vert as usize];
        if existing != NO_VERTEX {
            return existing;
        }
        let slot = self.slot_vert.len() as u32;
        self.slot_vert.push(vert);
        self.slot_counts.extend(std::iter::repeat(0).take(self.class_count));
        if self.rates.len() < self.slot_vert.len() {
            self.rates.grow(self.slot_vert.len().next_power_of_two().max(64));
        }
        self.slot_of[vert as usize] = slot;
        slot
    }

    fn remove_slot(&mut self, slot: u32) {
        let last = self.slot_vert.len() as u32 - 1;
        let vert = self.slot_vert[slot as usize];
        self.slot_of[vert as usize] = NO_VERTEX;
        if slot != last {
            let moved = self.slot_vert[last as usize];
            self.slot_vert[slot as usize] = moved;
            self.slot_of[moved as usize] = slot;
            let k = self.class_count;
            for c in 0..k {
                self.slot_counts[slot as usize * k + c] = self.slot_counts[last as usize * k + c];
            }
            let moved_rate = self.rates.get(last as usize);
            self.rates.set(slot as usize, moved_rate);
        }
        self.slot_vert.pop();
        self.slot_counts.truncate(self.slot_vert.len() * self.class_count);
        self.rates.set(last as usize, 0.0);
    }

    /// Make `vert` infected; updates the frontier of its neighborhood.
    fn infect(&mut self, vert: u32) {
        let slot = self.slot_of[vert as usize];
        if slot != NO_VERTEX {
            self.remove_slot(slot);
        }
        self.inf_pos[vert as usize] = self.infected.len() as u32;
        self.infected.push(vert);
        let class = self.arena.class(vert);
        let parent = self.arena.parent(vert);
        let children = self.arena.children(vert);
        self.sync_side_arrays();
        if parent != NO_VERTEX && !self.is_infected(parent) {
            self.bump_neighbor(parent, class, 1);
        }
        if let Some(range) = children {
            for child in range {
                if !self.is_infected(child) {
                    self.bump_neighbor(child, class, 1);
                }
            }
        }
    }

    /// Adjust a healthy neighbor's infected-neighbor count.
    fn bump_neighbor(&mut self, vert: u32, class: u16, delta: i32) {
        let slot = self.ensure_slot(vert);
        let cell = slot as usize * self.class_count + class as usize;
        let count = self.slot_counts[cell] as i32 + delta;
        debug_assert!(count >= 0);
        self.slot_counts[cell] = count as u16;
        let total: u32 = self.slot_counts[slot as usize * self.class_count..]
            .iter()
            .take(self.class_count)
            .map(|&c| c as u32)
            .sum();
        if total == 0 {
            self.remove_slot(slot);
        } else {
            self.set_slot_rate(slot);
        }
    }

    fn recover(&mut self, vert: u32) {
        let pos = self.inf_pos[vert as usize];
        debug_assert_ne!(pos, NO_VERTEX);
        let last = *self.infected.last().unwrap();
        self.infected.swap_remove(pos as usize);
        if (pos as usize) < self.infected.len() {
            self.inf_pos[last as usize] = pos;
        }
        self.inf_pos[vert as usize] = NO_VERTEX;
        let class = self.arena.class(vert);
        // Neighbors lose an infected neighbor of this class.
        let parent = self.arena.parent(vert);
        if parent != NO_VERTEX && !self.is_infected(parent) {
            self.bump_neighbor(parent, class, -1);
        }
        if let Some(range) = self.arena.children_if_present(vert) {
            for child in range {
                if !self.is_infected(child) {
                    self.bump_neighbor(child, class, -1);
                }
            }
        }
        // The vertex itself joins the frontier if anything around it is
        // still infected.
        let mut any = false;
        if parent != NO_VERTEX && self.is_infected(parent) {
            let pc = self.arena.class(parent);
            let slot = self.ensure_slot(vert);
            self.slot_counts[slot as usize * self.class_count + pc as usize] += 1;
            any = true;
        }
        if let Some(range) = self.arena.children_if_present(vert) {
            for child in range {
                if self.is_infected(child) {
                    let cc = self.arena.class(child);
                    let slot = self.ensure_slot(vert);
                    self.slot_counts[slot as usize * self.class_count + cc as usize] += 1;
                    any = true;
                }
            }
        }
        if any {
            let slot = self.slot_of[vert as usize];
            self.set_slot_rate(slot);
        }
    }

    /// Advance by one event, but never past `t_limit`: an event that would
    /// fire beyond the limit is discarded (memorylessness makes the clock
    /// restart at the limit exact in law) and the state is left as it was.
    pub fn step_capped(&mut self, rng: &mut Stream, t_limit: f64) -> StepOutcome {
        if self.infected.is_empty() {
            return StepOutcome::Extinct;
        }
        let recovery_rate = self.infected.len() as f64;
        let infection_rate = self.rates.total();
        let total = recovery_rate + infection_rate;
        let dt = rng.exp(total);
        if self.now + dt > t_limit {
            self.now = t_limit;
            return StepOutcome::Horizon;
        }
        self.now += dt;
        self.events += 1;
        let u = rng.u01() * total;
        let depth_touched;
        if u < recovery_rate {
            let k = (u as usize).min(self.infected.len() - 1);
            let vert = self.infected[k];
            depth_touched = self.arena.depth(vert);
            self.recover(vert);
        } else {
            let slot = self.rates.sample(u - recovery_rate) as u32;
            let vert = self.slot_vert[slot as usize];
            depth_touched = self.arena.depth(vert);
            self.infect(vert);
        }
        StepOutcome::Event { t: self.now, depth_touched }
    }

    /// Advance by one event with no horizon. `None` at extinction.
    pub fn step(&mut self, rng: &mut Stream) -> Option<(f64, u32)> {
        match self.step_capped(rng, f64::INFINITY) {
            StepOutcome::Extinct => None,
            StepOutcome::Event { t, depth_touched } => Some((t, depth_touched)),
            StepOutcome::Horizon => unreachable!("no horizon"),
        }
    }

    /// Snapshot of the infected set as tree indices (only meaningful for
    /// truncated, fully materialized runs).
    fn infected_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.arena.len()];
        for &v in &self.infected {
            mask[v as usize] = true;
        }
        mask
    }
}

/// Run one trajectory to extinction, the horizon, or a cap.
pub fn run(
    env: &QuenchedEnvironment,
    cfg: &CpRunConfig,
    rng: &mut Stream,
) -> Result<TrajectorySummary> {
    let mut state = InfectionState::new(env, cfg)?;
    let mut checkpoint_sizes = Vec::with_capacity(cfg.checkpoints.len());
    let mut next_cp = 0usize;
    let mut max_depth = 0u32;
    let outcome;
    loop {
        let size_now = state.infected.len() as u64;
        match state.step_capped(rng, cfg.t_max) {
            StepOutcome::Extinct => {
                outcome = Ok(state.now);
                break;
            }
            StepOutcome::Horizon => {
                outcome = Err(CensorReason::TimeHorizon);
                break;
            }
            StepOutcome::Event { t, depth_touched } => {
                while next_cp < cfg.checkpoints.len() && cfg.checkpoints[next_cp] < t {
                    checkpoint_sizes.push((cfg.checkpoints[next_cp], size_now));
                    next_cp += 1;
                }
                max_depth = max_depth.max(depth_touched);
                if state.infected.len() as u64 >= cfg.size_cap {
                    outcome = Err(CensorReason::SizeCap);
                    break;
                }
                if max_depth >= cfg.depth_cap {
                    outcome = Err(CensorReason::DepthCap);
                    break;
                }
            }
        }
    }
    let (extinction_time, censored) = match outcome {
        Ok(t) => (Some(t), None),
        Err(reason) => (None, Some(reason)),
    };
    // Fill checkpoints we ran past: zero after extinction, the final size
    // at the horizon. Cap censoring leaves later checkpoints unknown.
    match censored {
        None => {
            while next_cp < cfg.checkpoints.len() && cfg.checkpoints[next_cp] <= cfg.t_max {
                checkpoint_sizes.push((cfg.checkpoints[next_cp], 0));
                next_cp += 1;
            }
        }
        Some(CensorReason::TimeHorizon) => {
            while next_cp < cfg.checkpoints.len() && cfg.checkpoints[next_cp] <= cfg.t_max {
                checkpoint_sizes.push((cfg.checkpoints[next_cp], state.infected.len() as u64));
                next_cp += 1;
            }
        }
        Some(_) => {}
    }
    Ok(TrajectorySummary {
        extinction_time,
        censored,
        checkpoint_sizes,
        events: state.events,
        rate_bound_violations: state.rate_bound_violations,
        final_infected: state.infected.len() as u64,
        root_infected_at_end: state.root_infected(),
        final_state: if cfg.record_final_state { Some(state.infected_mask()) } else { None },
    })
}
