//! The auxiliary integer-valued linear system on truncated trees.
//!
//! Dynamics, given quenched weights: each coordinate dies (`value -> 0`) at
//! rate 1, and for every ordered neighbor pair the coordinate at `x` absorbs
//! the value at `y` (`value(x) -> value(x) + value(y)`) at rate
//! `lambda rho(x) rho(y)`. Started from all ones, the indicator of
//! `value >= 1` evolves like the contact process started from all ones,
//! which is why the mean at the root upper-bounds the annealed survival
//! probability.
//!
//! The mean solves a linear ODE whose solution `e^{-t} e^{tG} 1` is computed
//! here by uniformization of the weighted adjacency matrix `G`: nonnegative
//! matrix, no cancellation, one-sided truncation error.
//!
//! Values are simulated on truncations only: the all-ones initial state has
//! infinite support on the full tree. The absorbing-no-children boundary
//! biases the root mean downward; the bias is quantified by the fact that
//! the exact mean is monotone non-decreasing in the truncation depth.

use crate::fenwick::Fenwick;
use crate::rng::Stream;
use crate::stats::wilson_interval;
use crate::tree::TruncatedTree;
use crate::weights::{QuenchedEnvironment, WeightDistribution};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Vertex budget for the exact mean computation.
pub const MAX_EXACT_VERTICES: usize = 20_000;

/// Series budget for the exact mean computation.
const MAX_SERIES_TERMS: u64 = 10_000;

/// Symmetric weighted adjacency with entries `lambda rho(x) rho(y)` on tree
/// edges and zero elsewhere.
#[derive(Debug, Clone)]
pub struct WeightedAdjacency {
    n: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl WeightedAdjacency {
    pub fn from_tree(
        tree: &TruncatedTree,
        env: &QuenchedEnvironment,
        lambda: f64,
    ) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidInput("lambda must be nonnegative".into()));
        }
        let n = tree.len();
        let weights: Vec<f64> = (0..n).map(|i| env.weight_of(tree.vertex(i))).collect();
        let mut rows = vec![Vec::new(); n];
        for (p, c) in tree.edges() {
            let w = lambda * weights[p] * weights[c];
            rows[p].push((c as u32, w));
            rows[c].push((p as u32, w));
        }
        Ok(Self { n, rows })
    }

    /// Build from explicit undirected edges; used by small oracles.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i == j {
                return Err(Error::InvalidInput("diagonal entries must be zero".into()));
            }
            if i >= n || j >= n || w < 0.0 {
                return Err(Error::InvalidInput("edge outside matrix or negative".into()));
            }
            rows[i].push((j as u32, w));
            rows[j].push((i as u32, w));
        }
        Ok(Self { n, rows })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    /// Largest row sum; the uniformization rate.
    pub fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, w)| w).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Exact mean vector with its rigorous series truncation bound.
#[derive(Debug, Clone, Serialize)]
pub struct XiExact {
    /// `E value_t(x)` per tree index.
    pub means: Vec<f64>,
    /// Absolute one-sided bound on the series truncation error, uniform
    /// over vertices. The computed means underestimate by at most this.
    pub tail_bound: f64,
}

/// `e^{-t} e^{tG} 1` for the truncation's weighted adjacency.
pub fn mean_xi_exact(
    tree: &TruncatedTree,
    env: &QuenchedEnvironment,
    lambda: f64,
    t: f64,
) -> Result<XiExact> {
    if tree.len() > MAX_EXACT_VERTICES {
        return Err(Error::StateSpaceTooLarge { got: tree.len(), max: MAX_EXACT_VERTICES });
    }
    let adj = WeightedAdjacency::from_tree(tree, env, lambda)?;
    mean_xi_core(&adj, t)
}

/// The solver behind [`mean_xi_exact`], on an explicit matrix.
pub fn mean_xi_core(adj: &WeightedAdjacency, t: f64) -> Result<XiExact> {
    if t < 0.0 {
        return Err(Error::InvalidInput("time must be nonnegative".into()));
    }
    let n = adj.len();
    let r = adj.max_row_sum();
    if t == 0.0 || r == 0.0 {
        let v = (-t).exp();
        return Ok(XiExact { means: vec![v; n], tail_bound: 0.0 });
    }
    // Substochastic power iteration per segment: B = G / r keeps sup norms
    // non-increasing, so Poisson weights control the tail exactly.
    let segments = (r * t / 500.0).ceil().max(1.0) as usize;
    let tau = t / segments as f64;
    let qt = r * tau;
    let mut u = vec![1.0f64; n];
    let mut ln_scale = 0.0f64;
    let mut terms_used = 0u64;
    let mut tail_rel_total = 0.0f64;
    let mut pow = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..segments {
        let mut weight = (-qt).exp();
        let mut cum = weight;
        pow.copy_from_slice(&u);
        let mut acc: Vec<f64> = pow.iter().map(|x| x * weight).collect();
        let mut k = 0u64;
        loop {
            let tail = 1.0 - cum;
            if tail <= 1e-13 {
                tail_rel_total += tail.max(0.0);
                break;
            }
            if terms_used >= MAX_SERIES_TERMS {
                // The final result is bounded by e^{(r-1)t} entrywise, so
                // the dropped mass can contribute at most this much.
                let bound = tail * ((r - 1.0) * t).exp();
                if bound > 1e-9 {
                    return Err(Error::PrecisionBudget(format!(
                        "series tail bound {bound:.3e} after {MAX_SERIES_TERMS} terms"
                    )));
                }
                tail_rel_total += tail;
                break;
            }
            k += 1;
            terms_used += 1;
            // next = B pow.
            for (i, slot) in next.iter_mut().enumerate() {
                let mut acc_i = 0.0;
                for &(j, w) in adj.row(i) {
                    acc_i += w * pow[j as usize];
                }
                *slot = acc_i / r;
            }
            std::mem::swap(&mut pow, &mut next);
            weight *= qt / k as f64;
            cum += weight;
            for (a, p) in acc.iter_mut().zip(&pow) {
                *a += weight * p;
            }
        }
        // Undo the substochastic normalization: e^{tau G} = e^{qt} * sum.
        ln_scale += qt;
        let sup = acc.iter().cloned().fold(0.0f64, f64::max);
        if sup > 0.0 && !(0.5..=2.0).contains(&sup) {
            for x in acc.iter_mut() {
                *x /= sup;
            }
            ln_scale += sup.ln();
        }
        u = acc;
    }
    let factor = (ln_scale - t).exp();
    let means: Vec<f64> = u.iter().map(|x| x * factor).collect();
    Ok(XiExact { means, tail_bound: tail_rel_total * factor })
}

/// Monte Carlo estimate of the root coordinate at time `t`.
#[derive(Debug, Clone, Serialize)]
pub struct XiEstimate {
    pub t: f64,
    pub replicas: u64,
    /// Sample mean of the root value.
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    /// Fraction of replicas with a nonzero root value.
    pub nonzero_fraction: f64,
    /// Wilson 95% interval for the nonzero fraction.
    pub nonzero_ci: (f64, f64),
    /// Replicas whose values saturated 64-bit arithmetic; their
    /// contribution to the mean is a lower bound.
    pub saturated_replicas: u64,
}

/// Event-driven simulation of the linear system from the all-ones state.
pub fn simulate_xi(
    tree: &TruncatedTree,
    env: &QuenchedEnvironment,
    lambda: f64,
    t: f64,
    replicas: u64,
    master_seed: u64,
) -> Result<XiEstimate> {
    if tree.depth() < 1 {
        return Err(Error::InvalidInput("truncation depth must be at least 1".into()));
    }
    if lambda < 0.0 || t < 0.0 {
        return Err(Error::InvalidInput("lambda and t must be nonnegative".into()));
    }
    if replicas == 0 {
        return Err(Error::InvalidInput("need at least one replica".into()));
    }
    let n = tree.len();
    let weights: Vec<f64> = (0..n).map(|i| env.weight_of(tree.vertex(i))).collect();
    let neighbors: Vec<Vec<u32>> =
        (0..n).map(|i| tree.neighbors_of(i).iter().map(|&j| j as u32).collect()).collect();
    // Static per-source rate: value at y feeds each neighbor x at rate
    // lambda rho(x) rho(y).
    let neighbor_sum: Vec<f64> = (0..n)
        .map(|y| neighbors[y].iter().map(|&x| weights[x as usize]).sum())
        .collect();
    let out_rate: Vec<f64> =
        (0..n).map(|y| lambda * weights[y] * neighbor_sum[y]).collect();

    let results: Vec<(u64, bool)> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut rng = Stream::derive(master_seed, &[0x7869, rep]);
            run_xi_replica(n, &weights, &neighbors, &neighbor_sum, &out_rate, t, &mut rng)
        })
        .collect();

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut nonzero = 0u64;
    let mut saturated = 0u64;
    for &(root, sat) in &results {
        let x = root as f64;
        sum += x;
        sumsq += x * x;
        if root > 0 {
            nonzero += 1;
        }
        if sat {
            saturated += 1;
        }
    }
    let nf = replicas as f64;
    let mean = sum / nf;
    let var = (sumsq / nf - mean * mean).max(0.0);
    let se = if replicas > 1 { (var / (nf - 1.0)).sqrt() } else { f64::NAN };
    Ok(XiEstimate {
        t,
        replicas,
        mean,
        se,
        nonzero_fraction: nonzero as f64 / nf,
        nonzero_ci: wilson_interval(nonzero, replicas, crate::stats::Z95),
        saturated_replicas: saturated,
    })
}

fn run_xi_replica(
    n: usize,
    weights: &[f64],
    neighbors: &[Vec<u32>],
    neighbor_sum: &[f64],
    out_rate: &[f64],
    t_end: f64,
    rng: &mut Stream,
) -> (u64, bool) {
    let mut value = vec![1u64; n];
    let mut active: Vec<u32> = (0..n as u32).collect();
    let mut pos: Vec<u32> = (0..n as u32).collect();
    const GONE: u32 = u32::MAX;
    let mut pairs = Fenwick::new(n);
    for y in 0..n {
        pairs.set(y, out_rate[y]);
    }
    let mut saturated = false;
    let mut now = 0.0f64;
    loop {
        if active.is_empty() {
            break;
        }
        let death_rate = active.len() as f64;
        let pair_rate = pairs.total();
        let total = death_rate + pair_rate;
        now += rng.exp(total);
        if now > t_end {
            break;
        }
        let u = rng.u01() * total;
        if u < death_rate {
            // value(y) -> 0.
            let k = (u as usize).min(active.len() - 1);
            let y = active[k] as usize;
            value[y] = 0;
            let last = *active.last().unwrap();
            active.swap_remove(k);
            if k < active.len() {
                pos[last as usize] = k as u32;
            }
            pos[y] = GONE;
            pairs.set(y, 0.0);
        } else {
            // value(x) -> value(x) + value(y) for a neighbor x of y,
            // chosen proportionally to its weight.
            let y = pairs.sample(u - death_rate);
            let pick = rng.u01() * neighbor_sum[y];
            let mut acc = 0.0;
            let mut x = neighbors[y][0] as usize;
            for &cand in &neighbors[y] {
                acc += weights[cand as usize];
                x = cand as usize;
                if pick < acc {
                    break;
                }
            }
            let vy = value[y];
            debug_assert!(vy > 0, "pair event from an empty source");
            let was_zero = value[x] == 0;
            value[x] = match value[x].checked_add(vy) {
                Some(v) => v,
                None => {
                    saturated = true;
                    u64::MAX
                }
            };
            if was_zero {
                pos[x] = active.len() as u32;
                active.push(x as u32);
                pairs.set(x, out_rate[x]);
            }
        }
    }
    (value[0], saturated)
}

/// Closed-form annealed upper bound on the root mean:
/// with `s = E (rho/M)^2`, the bound is
/// `s^{-1} exp{ t [ lambda M^2 (d s + 1/s) - 1 ] }`.
pub fn annealed_mean_upper_bound(
    lambda: f64,
    d: usize,
    dist: &WeightDistribution,
    t: f64,
) -> Result<f64> {
    let m2 = dist.moment(2);
    if m2 <= 0.0 {
        return Err(Error::InvalidDistribution(
            "assumption mu(rho > 0) > 0 violated: E rho^2 = 0".into(),
        ));
    }
    let m = dist.bound();
    let s = m2 / (m * m);
    Ok((1.0 / s) * (t * (lambda * m * m * (d as f64 * s + 1.0 / s) - 1.0)).exp())
}
