//! The non-backtracking SIR model: simulation of the ever-infected
//! generation sizes, exact transfer-matrix moments of `|L_n|`, and the
//! second-moment survival lower bound.
//!
//! Infection passes only from parent to child. A parent `x` stays
//! infectious for an `Exp(1)` time `H_x`; child `y` is reached iff an
//! independent `Exp(lambda rho(x) rho(y))` clock beats `H_x`. Children of
//! the same parent share `H_x`, which is what makes the second moment
//! couple through the split kernel below.
//!
//! `L_n` is the set of depth-`n` vertices ever infected. With finite-support
//! weights both `E|L_n|` and `E|L_n|^2` are exact finite computations:
//! the first moment is a transfer recursion along a single weight chain, and
//! the second moment conditions on the coalescence time `tau` of two
//! independent child-only walks (geometric, see [`crate::walks`]), splitting
//! each pair of paths into a shared prefix, a branch vertex, and two
//! independent tails.

use crate::rng::Stream;
use crate::walks::CoalescenceLaw;
use crate::weights::{QuenchedEnvironment, WeightDistribution};
use crate::{Error, Result};
use serde::Serialize;

/// Hard guard against runaway supercritical generations.
const GENERATION_GUARD: u64 = 10_000_000;

/// Edge-passing kernels for infection rate `lambda`.
///
/// * `pass(a, b)`: probability an `Exp(lambda a b)` clock beats an
///   independent `Exp(1)` clock.
/// * `split_exact(a, b, c)`: probability two clocks (rates `lambda a b`,
///   `lambda a c`) both beat one shared `Exp(1)` clock.
/// * `split_bound(a, b, c)`: the closed-form upper bound
///   `2 lambda^2 a^2 b c / ((1 + lambda a b)(1 + lambda a c))` on the same
///   probability.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgeKernels {
    pub lambda: f64,
}

impl EdgeKernels {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0);
        Self { lambda }
    }

    /// `lambda a b / (1 + lambda a b)`.
    #[inline]
    pub fn pass(&self, a: f64, b: f64) -> f64 {
        let r = self.lambda * a * b;
        r / (1.0 + r)
    }

    /// `P(U_1 < H, U_2 < H)` for a shared parent clock.
    #[inline]
    pub fn split_exact(&self, a: f64, b: f64, c: f64) -> f64 {
        let alpha = self.lambda * a * b;
        let beta = self.lambda * a * c;
        1.0 - 1.0 / (1.0 + alpha) - 1.0 / (1.0 + beta) + 1.0 / (1.0 + alpha + beta)
    }

    /// Upper bound on [`Self::split_exact`]; may exceed 1.
    #[inline]
    pub fn split_bound(&self, a: f64, b: f64, c: f64) -> f64 {
        let alpha = self.lambda * a * b;
        let beta = self.lambda * a * c;
        2.0 * alpha * beta / ((1.0 + alpha) * (1.0 + beta))
    }
}

/// `P(U_1 < H, U_2 < H)` with `U_1 ~ Exp(lambda a b)`, `U_2 ~ Exp(lambda a c)`
/// and a shared `H ~ Exp(1)`, all independent.
pub fn split_kernel_exact(lambda: f64, a: f64, b: f64, c: f64) -> f64 {
    EdgeKernels::new(lambda).split_exact(a, b, c)
}

/// Which split kernel the second moment uses at the branch vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplitMode {
    /// Exact shared-clock probability: the result is exactly `E|L_n|^2`.
    Exact,
    /// Closed-form upper bound: the result upper-bounds `E|L_n|^2`.
    PaperBound,
}

/// Sizes `|L_n|` of the ever-infected generations, truncated at `n_max`.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationSizes {
    sizes: Vec<u64>,
}

impl GenerationSizes {
    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn size(&self, n: usize) -> u64 {
        self.sizes.get(n).copied().unwrap_or(0)
    }
}

/// Breadth-first simulation of the ever-infected generations under a
/// quenched environment.
///
/// Draw order is fixed (parents in level order, children in digit order), so
/// the result is a pure function of `(env, rng stream)`.
pub fn simulate_sir(
    env: &QuenchedEnvironment,
    degree: usize,
    lambda: f64,
    n_max: usize,
    rng: &mut Stream,
) -> Result<GenerationSizes> {
    if n_max < 1 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    let values = env.distribution().values();
    let mut sizes = vec![0u64; n_max + 1];
    sizes[0] = 1;
    // Levels carry the environment hash-chain state per vertex.
    let mut level: Vec<u64> = vec![env.root_hash()];
    for n in 0..n_max {
        let mut next = Vec::new();
        for &hs in &level {
            let a = values[env.class_from_hash(hs)];
            let infectious_window = rng.exp(1.0);
            for j in 0..degree as u16 {
                let ch = QuenchedEnvironment::child_hash(hs, j);
                let b = values[env.class_from_hash(ch)];
                let rate = lambda * a * b;
                if rate > 0.0 && rng.exp(rate) < infectious_window {
                    next.push(ch);
                }
            }
        }
        if next.len() as u64 > GENERATION_GUARD {
            return Err(Error::InvalidInput(format!(
                "generation {} exceeded {GENERATION_GUARD} vertices",
                n + 1
            )));
        }
        sizes[n + 1] = next.len() as u64;
        level = next;
        if level.is_empty() {
            break;
        }
    }
    Ok(GenerationSizes { sizes })
}

/// A nonnegative quantity carried as `val * exp(ln_scale)` so long products
/// can underflow gracefully.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    val: f64,
    ln_scale: f64,
}

impl Scaled {
    fn ln(&self) -> f64 {
        self.val.ln() + self.ln_scale
    }

    fn to_f64(self) -> f64 {
        self.val * self.ln_scale.exp()
    }
}

/// Rescale a vector when its largest entry drifts below the threshold.
fn rescale(vec: &mut [f64], ln_scale: &mut f64) {
    let max = vec.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 && max < 1e-150 {
        for x in vec.iter_mut() {
            *x /= max;
        }
        *ln_scale += max.ln();
    }
}

/// Transfer state for products of `pass` kernels along an i.i.d. weight
/// chain, conditioned on the entry weight:
/// `tail[m][j] = E[ prod_{i=0}^{m-1} pass(w_i, w_{i+1}) | w_0 = v_j ]`
/// with `w_1, ..., w_m` fresh i.i.d. weights.
struct TailTransfer {
    kernels: EdgeKernels,
    values: Vec<f64>,
    probs: Vec<f64>,
    per_len: Vec<(Vec<f64>, f64)>,
}

impl TailTransfer {
    fn new(lambda: f64, dist: &WeightDistribution, max_len: usize) -> Self {
        let kernels = EdgeKernels::new(lambda);
        let values = dist.values().to_vec();
        let probs = dist.probs().to_vec();
        let k = values.len();
        let mut per_len: Vec<(Vec<f64>, f64)> = Vec::with_capacity(max_len + 1);
        per_len.push((vec![1.0; k], 0.0));
        for m in 0..max_len {
            let (prev, prev_scale) = &per_len[m];
            let mut next = vec![0.0; k];
            for j in 0..k {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += probs[l] * kernels.pass(values[j], values[l]) * prev[l];
                }
                next[j] = acc;
            }
            let mut scale = *prev_scale;
            rescale(&mut next, &mut scale);
            per_len.push((next, scale));
        }
        Self { kernels, values, probs, per_len }
    }

    /// Scaled vector over entry classes for a tail of length `m`.
    fn tail(&self, m: usize) -> (&[f64], f64) {
        let (v, s) = &self.per_len[m];
        (v, *s)
    }

    /// `E[ prod_{i=0}^{m-1} pass(w_i, w_{i+1}) ]` over a full chain of
    /// `m + 1` i.i.d. weights, as a scaled value.
    fn full_chain(&self, m: usize) -> Scaled {
        let (v, s) = self.tail(m);
        let val = self.probs.iter().zip(v).map(|(p, t)| p * t).sum();
        Scaled { val, ln_scale: s }
    }
}

/// Forward transfer with endpoint indicator:
/// `alpha_m[j] = E[ prod_{i=0}^{m-1} pass(w_i, w_{i+1}); w_m = v_j ]`.
struct ForwardTransfer {
    per_len: Vec<(Vec<f64>, f64)>,
}

impl ForwardTransfer {
    fn new(tt: &TailTransfer, max_len: usize) -> Self {
        let k = tt.values.len();
        let mut per_len: Vec<(Vec<f64>, f64)> = Vec::with_capacity(max_len + 1);
        per_len.push((tt.probs.clone(), 0.0));
        for m in 0..max_len {
            let (prev, prev_scale) = &per_len[m];
            let mut next = vec![0.0; k];
            for j in 0..k {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += prev[l] * tt.kernels.pass(tt.values[l], tt.values[j]);
                }
                next[j] = acc * tt.probs[j];
            }
            let mut scale = *prev_scale;
            rescale(&mut next, &mut scale);
            per_len.push((next, scale));
        }
        Self { per_len }
    }

    fn at(&self, m: usize) -> (&[f64], f64) {
        let (v, s) = &self.per_len[m];
        (v, *s)
    }
}

/// Exact `E|L_n| = d^n E[prod pass]` via the transfer recursion.
pub fn first_moment_exact(lambda: f64, d: usize, dist: &WeightDistribution, n: usize) -> f64 {
    first_moment_scaled(lambda, d, dist, n).to_f64()
}

fn first_moment_scaled(lambda: f64, d: usize, dist: &WeightDistribution, n: usize) -> Scaled {
    let tt = TailTransfer::new(lambda, dist, n);
    let chain = tt.full_chain(n);
    Scaled { val: chain.val * (d as f64).powi(n as i32), ln_scale: chain.ln_scale }
}

/// Exact (or paper-bound) `E|L_n|^2` by conditioning on the coalescence
/// time of the two defining child-only walks.
pub fn second_moment_exact(
    lambda: f64,
    d: usize,
    dist: &WeightDistribution,
    n: usize,
    mode: SplitMode,
) -> Result<f64> {
    Ok(second_moment_scaled(lambda, d, dist, n, mode)?.to_f64())
}

fn second_moment_scaled(
    lambda: f64,
    d: usize,
    dist: &WeightDistribution,
    n: usize,
    mode: SplitMode,
) -> Result<Scaled> {
    if n < 1 {
        return Err(Error::InvalidInput("second moment needs n >= 1".into()));
    }
    let tau_law = CoalescenceLaw::new(d)?;
    let tt = TailTransfer::new(lambda, dist, n);
    let fwd = ForwardTransfer::new(&tt, n);
    let kernels = EdgeKernels::new(lambda);
    let values = dist.values();
    let probs = dist.probs();
    let k = values.len();

    // One scaled term per coalescence depth, plus the never-split atom.
    let mut terms: Vec<Scaled> = Vec::with_capacity(n + 1);
    for split_at in 0..n {
        let (alpha, alpha_scale) = fwd.at(split_at);
        let tail_len = n - 1 - split_at;
        let (tail, tail_scale) = tt.tail(tail_len);
        let mut branch = 0.0;
        for j in 0..k {
            if alpha[j] == 0.0 {
                continue;
            }
            let mut both = 0.0;
            for b in 0..k {
                for c in 0..k {
                    let split = match mode {
                        SplitMode::Exact => kernels.split_exact(values[j], values[b], values[c]),
                        SplitMode::PaperBound => {
                            kernels.split_bound(values[j], values[b], values[c])
                        }
                    };
                    both += probs[b] * probs[c] * split * tail[b] * tail[c];
                }
            }
            branch += alpha[j] * both;
        }
        terms.push(Scaled {
            val: branch * tau_law.pmf(split_at as u32),
            ln_scale: alpha_scale + 2.0 * tail_scale,
        });
    }
    let chain = tt.full_chain(n);
    terms.push(Scaled { val: chain.val * tau_law.tail(n as u32), ln_scale: chain.ln_scale });

    // Sum the scaled terms by factoring out the largest scale.
    let max_scale = terms
        .iter()
        .filter(|t| t.val > 0.0)
        .map(|t| t.ln_scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_scale = if max_scale.is_finite() { max_scale } else { 0.0 };
    let total: f64 = terms.iter().map(|t| t.val * (t.ln_scale - max_scale).exp()).sum();
    Ok(Scaled { val: total * (d as f64).powi(2 * n as i32), ln_scale: max_scale })
}

/// One row of the moment/ratio table.
#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub n: usize,
    pub first_moment: f64,
    pub second_moment_exact: f64,
    pub second_moment_bound: f64,
    /// `(E|L_n|)^2 / E|L_n|^2`, the survival lower bound along the sequence.
    pub ratio: f64,
}

/// Moment table plus the quantities governing whether the ratio sequence
/// stays bounded away from zero.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub lambda: f64,
    pub degree: usize,
    pub rows: Vec<MomentRow>,
    /// `(1 + lambda M^2)^2 / (lambda E rho^2)`.
    pub condition_value: f64,
    /// Whether the sufficient survival condition `condition_value < d` holds.
    pub condition_holds: bool,
    /// The constant `2 M^2 (1 + lambda M^2)^2 / E rho^2`.
    pub c_lambda_m: f64,
    /// Set when the first moment underflowed and the table was cut short.
    pub truncated: bool,
}

/// The ratio sequence `(E|L_n|)^2 / E|L_n|^2` for `n = 0..=n_max`, exact.
pub fn survival_lower_bound_sequence(
    lambda: f64,
    d: usize,
    dist: &WeightDistribution,
    n_max: usize,
) -> Result<MomentReport> {
    if lambda <= 0.0 {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }
    let m2 = dist.moment(2);
    if m2 <= 0.0 {
        return Err(Error::InvalidDistribution(
            "assumption mu(rho > 0) > 0 violated: E rho^2 = 0".into(),
        ));
    }
    let m = dist.bound();
    let condition_value = (1.0 + lambda * m * m).powi(2) / (lambda * m2);
    let mut rows = vec![MomentRow {
        n: 0,
        first_moment: 1.0,
        second_moment_exact: 1.0,
        second_moment_bound: 1.0,
        ratio: 1.0,
    }];
    let mut truncated = false;
    for n in 1..=n_max {
        let first = first_moment_scaled(lambda, d, dist, n);
        let second = second_moment_scaled(lambda, d, dist, n, SplitMode::Exact)?;
        let bound = second_moment_scaled(lambda, d, dist, n, SplitMode::PaperBound)?;
        let first_f = first.to_f64();
        if first_f == 0.0 {
            truncated = true;
            break;
        }
        // Ratio through logs: immune to overflow of d^(2n).
        let ratio = (2.0 * first.ln() - second.ln()).exp();
        rows.push(MomentRow {
            n,
            first_moment: first_f,
            second_moment_exact: second.to_f64(),
            second_moment_bound: bound.to_f64(),
            ratio,
        });
    }
    Ok(MomentReport {
        lambda,
        degree: d,
        rows,
        condition_value,
        condition_holds: condition_value < d as f64,
        c_lambda_m: 2.0 * m * m * (1.0 + lambda * m * m).powi(2) / m2,
        truncated,
    })
}

/// Per-`tau` audit of the bound chain behind the sufficient survival
/// condition: exact branch numerator/denominator next to their closed-form
/// bounds.
#[derive(Debug, Clone, Serialize)]
pub struct SplitAuditRow {
    pub tau: usize,
    /// `E[prod_{i=0}^{tau} F]` with the exact split kernel.
    pub numerator_exact: f64,
    /// Same with the split-bound kernel.
    pub numerator_bound: f64,
    /// Closed form `2 M^2 (E rho)^4 lambda^{2+tau} (E rho^2)^{tau-1}`
    /// (valid for `tau >= 1`; at `tau = 0` the direct bound
    /// `2 lambda^2 M^2 (E rho)^2` applies instead).
    pub numerator_closed_form: f64,
    /// `{E prod_{i=0}^{tau} pass}^2`, exact.
    pub denominator_exact: f64,
    /// Closed-form lower bound
    /// `(E rho)^4 (lambda / (1 + lambda M^2))^{2 tau + 2} (E rho^2)^{2 tau}`.
    pub denominator_closed_form: f64,
    /// `C(lambda, M) * condition_value^tau`, the geometric majorant.
    pub geometric_majorant: f64,
}

/// Reproduce the split-term bound chain term by term, for audit output.
pub fn proposition_audit(
    lambda: f64,
    d: usize,
    dist: &WeightDistribution,
    max_tau: usize,
) -> Result<Vec<SplitAuditRow>> {
    let _ = d;
    let m2 = dist.moment(2);
    if m2 <= 0.0 {
        return Err(Error::InvalidDistribution(
            "assumption mu(rho > 0) > 0 violated: E rho^2 = 0".into(),
        ));
    }
    let m1 = dist.moment(1);
    let m = dist.bound();
    let tt = TailTransfer::new(lambda, dist, max_tau + 2);
    let fwd = ForwardTransfer::new(&tt, max_tau + 2);
    let kernels = EdgeKernels::new(lambda);
    let values = dist.values();
    let probs = dist.probs();
    let k = values.len();
    let condition_value = (1.0 + lambda * m * m).powi(2) / (lambda * m2);
    let c_const = 2.0 * m * m * (1.0 + lambda * m * m).powi(2) / m2;
    let mut rows = Vec::with_capacity(max_tau + 1);
    for tau in 0..=max_tau {
        let (alpha, alpha_scale) = fwd.at(tau);
        let scale = alpha_scale.exp();
        let mut num_exact = 0.0;
        let mut num_bound = 0.0;
        for j in 0..k {
            let mut se = 0.0;
            let mut sb = 0.0;
            for b in 0..k {
                for c in 0..k {
                    let pq = probs[b] * probs[c];
                    se += pq * kernels.split_exact(values[j], values[b], values[c]);
                    sb += pq * kernels.split_bound(values[j], values[b], values[c]);
                }
            }
            num_exact += alpha[j] * se;
            num_bound += alpha[j] * sb;
        }
        num_exact *= scale;
        num_bound *= scale;
        let den_exact = {
            let (a1, s1) = fwd.at(tau + 1);
            let e: f64 = a1.iter().sum::<f64>() * s1.exp();
            e * e
        };
        let num_closed = 2.0 * m * m * m1.powi(4) * lambda.powf(2.0 + tau as f64)
            * m2.powf(tau as f64 - 1.0);
        let den_closed = m1.powi(4)
            * (lambda / (1.0 + lambda * m * m)).powi(2 * tau as i32 + 2)
            * m2.powi(2 * tau as i32);
        rows.push(SplitAuditRow {
            tau,
            numerator_exact: num_exact,
            numerator_bound: num_bound,
            numerator_closed_form: num_closed,
            denominator_exact: den_exact,
            denominator_closed_form: den_closed,
            geometric_majorant: c_const * condition_value.powi(tau as i32),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_se;

    fn unit() -> WeightDistribution {
        WeightDistribution::constant(1.0).unwrap()
    }

    fn coin() -> WeightDistribution {
        WeightDistribution::new(&[(0.0, 0.5), (1.0, 0.5)], 1.0).unwrap()
    }

    fn three_point() -> WeightDistribution {
        WeightDistribution::new(&[(0.0, 0.2), (0.5, 0.5), (2.0, 0.3)], 2.0).unwrap()
    }

    /// Shared-clock probability by Simpson quadrature of
    /// `(1 - e^{-alpha t})(1 - e^{-beta t}) e^{-t}`: an independent route to
    /// the split kernel.
    fn split_by_quadrature(alpha: f64, beta: f64) -> f64 {
        let t_max = 120.0;
        let steps = 600_000;
        let h = t_max / steps as f64;
        let f = |t: f64| (1.0 - (-alpha * t).exp()) * (1.0 - (-beta * t).exp()) * (-t).exp();
        let mut acc = f(0.0) + f(t_max);
        for i in 1..steps {
            let t = i as f64 * h;
            acc += f(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    /// Exhaustive enumeration of `E|L_n|` over all weight tuples on the
    /// unique root path.
    fn brute_first(lambda: f64, d: usize, dist: &WeightDistribution, n: usize) -> f64 {
        let kernels = EdgeKernels::new(lambda);
        let k = dist.len();
        let mut total = 0.0;
        let mut tuple = vec![0usize; n + 1];
        loop {
            let mut p = 1.0;
            for &c in &tuple {
                p *= dist.probs()[c];
            }
            let mut prod = 1.0;
            for i in 0..n {
                prod *= kernels.pass(dist.values()[tuple[i]], dist.values()[tuple[i + 1]]);
            }
            total += p * prod;
            let mut pos = 0;
            loop {
                if pos > n {
                    return (d as f64).powi(n as i32) * total;
                }
                tuple[pos] += 1;
                if tuple[pos] < k {
                    break;
                }
                tuple[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Exhaustive enumeration of `E|L_n|^2`: ordered pairs of depth-n
    /// vertices grouped by meet depth, weights enumerated over the union of
    /// the two root paths. The split factor uses the quadrature oracle, so
    /// this route shares no kernel code with the implementation.
    fn brute_second(lambda: f64, d: usize, dist: &WeightDistribution, n: usize) -> f64 {
        let kernels = EdgeKernels::new(lambda);
        let k = dist.len();
        let values = dist.values();
        let probs = dist.probs();
        // Quadrature table over support triples.
        let mut split_table = vec![0.0; k * k * k];
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    split_table[(a * k + b) * k + c] =
                        split_by_quadrature(lambda * values[a] * values[b],
                                            lambda * values[a] * values[c]);
                }
            }
        }
        let mut total = 0.0;
        for meet in 0..n {
            let tail_len = n - 1 - meet;
            let m = (meet + 1) + 2 + 2 * tail_len;
            let mut tuple = vec![0usize; m];
            let mut expect = 0.0;
            'tuples: loop {
                let shared = &tuple[..meet + 1];
                let branch_a = tuple[meet + 1];
                let branch_b = tuple[meet + 2];
                let tail_a = &tuple[meet + 3..meet + 3 + tail_len];
                let tail_b = &tuple[meet + 3 + tail_len..];
                let mut p = 1.0;
                for &c in &tuple {
                    p *= probs[c];
                }
                let mut prod = 1.0;
                for w in shared.windows(2) {
                    prod *= kernels.pass(values[w[0]], values[w[1]]);
                }
                prod *= split_table[(shared[meet] * k + branch_a) * k + branch_b];
                let tail_prod = |entry: usize, tail: &[usize]| {
                    let mut prev = entry;
                    let mut tp = 1.0;
                    for &c in tail {
                        tp *= kernels.pass(values[prev], values[c]);
                        prev = c;
                    }
                    tp
                };
                prod *= tail_prod(branch_a, tail_a);
                prod *= tail_prod(branch_b, tail_b);
                expect += p * prod;
                let mut pos = 0;
                loop {
                    if pos == m {
                        break 'tuples;
                    }
                    tuple[pos] += 1;
                    if tuple[pos] < k {
                        break;
                    }
                    tuple[pos] = 0;
                    pos += 1;
                }
            }
            let pairs = (d as f64).powi(meet as i32)
                * (d * (d - 1)) as f64
                * (d as f64).powi(2 * tail_len as i32);
            total += pairs * expect;
        }
        // Meet depth n: the diagonal x = y.
        total += brute_first(lambda, d, dist, n);
        total
    }

    #[test]
    fn kernels_basic_shape() {
        let kr = EdgeKernels::new(1.0);
        assert_eq!(kr.pass(0.0, 1.0), 0.0);
        assert!((kr.pass(1.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(kr.pass(2.0, 0.5), kr.pass(0.5, 2.0));
        assert_eq!(kr.split_exact(1.0, 0.0, 1.0), 0.0);
        // Symmetric in the two children up to summation order.
        let q = kr.split_exact(1.0, 0.5, 2.0);
        let q_swapped = kr.split_exact(1.0, 2.0, 0.5);
        assert!((q - q_swapped).abs() < 1e-15);
    }

    #[test]
    fn split_kernel_matches_quadrature() {
        // lambda a b = lambda a c = 1: exact value 1/3, closed-form bound 1/2.
        let v = split_kernel_exact(1.0, 1.0, 1.0, 1.0);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert!((split_by_quadrature(1.0, 1.0) - 1.0 / 3.0).abs() < 1e-10);
        let bound = EdgeKernels::new(1.0).split_bound(1.0, 1.0, 1.0);
        assert!((bound - 0.5).abs() < 1e-15);
        assert!(v <= bound);
        for (a, b, c) in [(0.5, 0.25, 2.0), (1.5, 1.0, 0.1), (2.0, 2.0, 2.0)] {
            let lambda = 0.7;
            let exact = split_kernel_exact(lambda, a, b, c);
            let quad = split_by_quadrature(lambda * a * b, lambda * a * c);
            assert!(
                (exact - quad).abs() < 1e-9,
                "a={a} b={b} c={c}: {exact} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn split_dominates_product_and_stays_below_bound() {
        let kr = EdgeKernels::new(0.8);
        for a in [0.25f64, 1.0, 2.0] {
            for b in [0.25f64, 1.0, 2.0] {
                for c in [0.25f64, 1.0, 2.0] {
                    let q = kr.split_exact(a, b, c);
                    let qb = kr.split_bound(a, b, c);
                    let prod = kr.pass(a, b) * kr.pass(a, c);
                    assert!(q <= qb + 1e-15, "q {q} above bound {qb}");
                    assert!(
                        q > prod,
                        "shared clock must positively associate: q {q} <= product {prod}"
                    );
                }
            }
        }
    }

    #[test]
    fn first_moment_trivial_cases() {
        assert_eq!(first_moment_exact(1.0, 2, &unit(), 0), 1.0);
        // Constant weights: (d lambda / (1 + lambda))^n.
        let v = first_moment_exact(1.0, 2, &unit(), 3);
        assert!((v - 1.0).abs() < 1e-12, "{v}");
        let v = first_moment_exact(0.5, 3, &unit(), 4);
        assert!((v - (3.0f64 * 0.5 / 1.5).powi(4)).abs() < 1e-12);
    }

    #[test]
    fn first_moment_matches_enumeration() {
        for (lambda, d, n) in [(1.0, 4usize, 2usize), (0.6, 2, 3), (2.0, 3, 3)] {
            for dist in [coin(), three_point()] {
                let exact = first_moment_exact(lambda, d, &dist, n);
                let brute = brute_first(lambda, d, &dist, n);
                assert!(
                    (exact - brute).abs() < 1e-10 * brute.max(1.0),
                    "lambda={lambda} d={d} n={n}: {exact} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn second_moment_matches_enumeration() {
        for (lambda, d, n) in [(1.0, 4usize, 1usize), (1.0, 4, 2), (0.6, 2, 3), (2.0, 3, 2)] {
            for dist in [coin(), three_point()] {
                let exact = second_moment_exact(lambda, d, &dist, n, SplitMode::Exact).unwrap();
                let brute = brute_second(lambda, d, &dist, n);
                assert!(
                    (exact - brute).abs() < 1e-8 * brute.max(1.0),
                    "lambda={lambda} d={d} n={n}: {exact} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn second_moment_n1_hand_decomposition() {
        // |L_1|^2 = d E[pass] + d(d-1) E[split]: children share the parent
        // clock.
        let dist = three_point();
        let (lambda, d) = (0.9, 5usize);
        let kr = EdgeKernels::new(lambda);
        let k = dist.len();
        let mut e_pass = 0.0;
        let mut e_split = 0.0;
        for a in 0..k {
            for b in 0..k {
                let pab = dist.probs()[a] * dist.probs()[b];
                e_pass += pab * kr.pass(dist.values()[a], dist.values()[b]);
                for c in 0..k {
                    e_split += pab
                        * dist.probs()[c]
                        * kr.split_exact(dist.values()[a], dist.values()[b], dist.values()[c]);
                }
            }
        }
        let by_hand = d as f64 * e_pass + (d * (d - 1)) as f64 * e_split;
        let exact = second_moment_exact(lambda, d, &dist, 1, SplitMode::Exact).unwrap();
        assert!((exact - by_hand).abs() < 1e-12 * by_hand, "{exact} vs {by_hand}");
    }

    #[test]
    fn exact_mode_below_paper_bound_mode() {
        for (lambda, d) in [(0.5, 3usize), (1.0, 6), (2.0, 10)] {
            for dist in [unit(), coin(), three_point()] {
                for n in 1..=6 {
                    let e = second_moment_exact(lambda, d, &dist, n, SplitMode::Exact).unwrap();
                    let b =
                        second_moment_exact(lambda, d, &dist, n, SplitMode::PaperBound).unwrap();
                    assert!(e <= b * (1.0 + 1e-12), "n={n}: exact {e} above bound {b}");
                }
            }
        }
    }

    #[test]
    fn cauchy_schwarz_along_sequence() {
        let report = survival_lower_bound_sequence(0.8, 6, &three_point(), 20).unwrap();
        for row in &report.rows {
            assert!(
                row.second_moment_exact >= row.first_moment * row.first_moment * (1.0 - 1e-12),
                "n={}",
                row.n
            );
            assert!(row.ratio > 0.0 && row.ratio <= 1.0 + 1e-12, "n={}", row.n);
        }
    }

    #[test]
    fn ratio_sequence_shape() {
        let report = survival_lower_bound_sequence(0.5, 10, &unit(), 50).unwrap();
        assert_eq!(report.rows[0].ratio, 1.0);
        assert!(report.condition_holds, "condition value {}", report.condition_value);
        assert!((report.condition_value - 4.5).abs() < 1e-12);
        assert!(!report.truncated);
        for row in &report.rows {
            assert!(row.ratio > 0.5, "n={} ratio {}", row.n, row.ratio);
        }
    }

    #[test]
    fn simulate_sir_degenerate_cases() {
        let env = QuenchedEnvironment::new(5, unit());
        let mut rng = Stream::new(1);
        let g = simulate_sir(&env, 3, 0.0, 5, &mut rng).unwrap();
        assert_eq!(g.sizes(), &[1, 0, 0, 0, 0, 0]);
        // Root weight zero kills all outgoing infection.
        let zero_heavy = WeightDistribution::new(&[(0.0, 0.75), (1.0, 0.25)], 1.0).unwrap();
        let mut root_zero_seed = None;
        for seed in 0..64 {
            let cand = QuenchedEnvironment::new(seed, zero_heavy.clone());
            if cand.weight_of(&crate::tree::VertexId::root()) == 0.0 {
                root_zero_seed = Some(seed);
                break;
            }
        }
        let env0 = QuenchedEnvironment::new(root_zero_seed.unwrap(), zero_heavy);
        let g = simulate_sir(&env0, 3, 5.0, 4, &mut rng).unwrap();
        assert_eq!(g.sizes(), &[1, 0, 0, 0, 0]);
    }

    #[test]
    fn simulate_sir_first_generation_mean() {
        // d=2, rho=1, lambda=1: E|L_1| = 2 * 1/2 = 1, against the exact
        // transfer value.
        let env = QuenchedEnvironment::new(99, unit());
        let n = 200_000;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = Stream::derive(4242, &[i as u64]);
            let g = simulate_sir(&env, 2, 1.0, 1, &mut rng).unwrap();
            samples.push(g.size(1) as f64);
        }
        let (mean, se) = mean_se(&samples);
        let exact = first_moment_exact(1.0, 2, &unit(), 1);
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} vs {exact} (se {se})");
    }

    #[test]
    fn monte_carlo_matches_exact_moments() {
        // Annealed: a fresh environment per replica realizes the average
        // over weights.
        let dist = coin();
        let (lambda, d, n_max) = (1.5, 2usize, 5usize);
        let replicas = 200_000u64;
        let mut first = vec![Vec::with_capacity(replicas as usize); n_max + 1];
        let mut second = vec![Vec::with_capacity(replicas as usize); n_max + 1];
        for i in 0..replicas {
            let env = QuenchedEnvironment::new(crate::rng::mix64(31 ^ i), dist.clone());
            let mut rng = Stream::derive(77, &[i]);
            let g = simulate_sir(&env, d, lambda, n_max, &mut rng).unwrap();
            for n in 0..=n_max {
                let s = g.size(n) as f64;
                first[n].push(s);
                second[n].push(s * s);
            }
        }
        for n in 1..=n_max {
            let (m1, se1) = mean_se(&first[n]);
            let (m2, se2) = mean_se(&second[n]);
            let e1 = first_moment_exact(lambda, d, &dist, n);
            let e2 = second_moment_exact(lambda, d, &dist, n, SplitMode::Exact).unwrap();
            assert!(
                (m1 - e1).abs() < 3.0 * se1,
                "n={n}: first moment mc {m1} vs exact {e1} (se {se1})"
            );
            assert!(
                (m2 - e2).abs() < 3.0 * se2,
                "n={n}: second moment mc {m2} vs exact {e2} (se {se2})"
            );
        }
    }

    #[test]
    fn independent_pairs_factorize() {
        // Distinct parents have independent clocks, so the joint passing
        // probability is the product of the marginals.
        let (a, b) = (1.0, 0.5);
        let (c, e) = (2.0, 1.0);
        let lambda = 0.9;
        let kr = EdgeKernels::new(lambda);
        let mut rng = Stream::new(2024);
        let trials = 2_000_000u64;
        let mut both = 0u64;
        for _ in 0..trials {
            let h1 = rng.exp(1.0);
            let h2 = rng.exp(1.0);
            let u1 = rng.exp(lambda * a * b);
            let u2 = rng.exp(lambda * c * e);
            if u1 < h1 && u2 < h2 {
                both += 1;
            }
        }
        let est = both as f64 / trials as f64;
        let expect = kr.pass(a, b) * kr.pass(c, e);
        let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((est - expect).abs() < 3.5 * sigma, "{est} vs {expect}");
    }

    #[test]
    fn audit_rows_bound_chain() {
        let dist = coin();
        let (lambda, d) = (0.4, 12usize);
        let rows = proposition_audit(lambda, d, &dist, 8).unwrap();
        for row in &rows {
            assert!(
                row.numerator_exact <= row.numerator_bound * (1.0 + 1e-12),
                "tau={}",
                row.tau
            );
            if row.tau >= 1 {
                assert!(
                    row.numerator_bound <= row.numerator_closed_form * (1.0 + 1e-12),
                    "tau={}: bound {} above closed form {}",
                    row.tau,
                    row.numerator_bound,
                    row.numerator_closed_form
                );
            } else {
                // The closed form assumes tau >= 1; at tau = 0 the direct
                // bound applies.
                let m = dist.bound();
                let direct = 2.0 * lambda * lambda * m * m * dist.moment(1).powi(2);
                assert!(row.numerator_bound <= direct * (1.0 + 1e-12));
            }
            assert!(
                row.denominator_exact >= row.denominator_closed_form * (1.0 - 1e-12),
                "tau={}",
                row.tau
            );
            let ratio = row.numerator_exact / row.denominator_exact;
            assert!(
                ratio <= row.geometric_majorant * (1.0 + 1e-12),
                "tau={}: ratio {ratio} above majorant {}",
                row.tau,
                row.geometric_majorant
            );
        }
    }

    #[test]
    fn underflow_truncates_with_flag() {
        // Tiny lambda drives E|L_n| below the f64 floor quickly.
        let report = survival_lower_bound_sequence(1e-40, 2, &unit(), 12).unwrap();
        assert!(report.truncated);
        assert!(report.rows.len() < 13);
    }
}
