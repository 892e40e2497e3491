//! Closed-form bounds and asymptotics for the critical infection rates.
//!
//! For a weight law with second moment `E rho^2 > 0` and bound `M`:
//!
//! * every `lambda < (d E rho^2 + M^4 / E rho^2)^{-1}` decays exponentially,
//!   which lower-bounds both critical values;
//! * every `lambda` with `(1 + lambda M^2)^2 / (lambda E rho^2) < d`
//!   survives, which upper-bounds the survival critical value by the lower
//!   endpoint of the solution interval of that quadratic inequality;
//! * `d * lambda_c(d)` and `d * lambda_e(d)` both converge to `1 / E rho^2`.

use crate::weights::WeightDistribution;
use crate::{Error, Result};
use serde::Serialize;

/// Tangent or near-tangent discriminants are classified as empty: the
/// boundary case certifies nothing.
const DISCRIMINANT_TOL: f64 = 1e-12;

/// Everything the closed forms say about one `(d, law)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub degree: usize,
    pub mean_weight: f64,
    pub second_moment: f64,
    pub bound_m: f64,
    /// Certified lower bound on the exponential critical value.
    pub lambda_e_lower: f64,
    /// Certified upper bound on the survival critical value, when the
    /// quadratic condition has solutions.
    pub lambda_c_upper: Option<f64>,
    /// Full open interval of rates certified to survive.
    pub upper_condition_interval: Option<(f64, f64)>,
    /// Limit of `d * lambda` as the degree grows.
    pub asymptote: f64,
    /// Uniform bound on any single-site flip rate at rate `lambda = 1`.
    pub rate_sup_at_unit_lambda: f64,
}

fn require_second_moment(dist: &WeightDistribution) -> Result<f64> {
    let m2 = dist.moment(2);
    if m2 <= 0.0 {
        return Err(Error::InvalidDistribution(
            "assumption mu(rho > 0) > 0 violated: E rho^2 = 0".into(),
        ));
    }
    Ok(m2)
}

/// `(d E rho^2 + M^4 / E rho^2)^{-1}`, the certified lower bound on the
/// exponential critical value (hence also on the survival critical value).
pub fn lower_bound_lambda_e(d: usize, dist: &WeightDistribution) -> Result<f64> {
    let m2 = require_second_moment(dist)?;
    let m = dist.bound();
    Ok(1.0 / (d as f64 * m2 + m.powi(4) / m2))
}

/// Rates certified to survive: the open interval on which
/// `M^4 lambda^2 + (2 M^2 - d E rho^2) lambda + 1 < 0`, together with its
/// lower endpoint, the sharpest certified upper bound on `lambda_c`.
///
/// Returns `None` when the interval is empty (small `d`).
pub fn upper_bound_lambda_c(
    d: usize,
    dist: &WeightDistribution,
) -> Result<Option<(f64, (f64, f64))>> {
    let m2 = require_second_moment(dist)?;
    let m = dist.bound();
    let a = m.powi(4);
    let b = 2.0 * m * m - d as f64 * m2;
    let c = 1.0;
    let disc = b * b - 4.0 * a * c;
    if disc <= DISCRIMINANT_TOL || b >= 0.0 {
        return Ok(None);
    }
    let sqrt_disc = disc.sqrt();
    let lo = (-b - sqrt_disc) / (2.0 * a);
    let hi = (-b + sqrt_disc) / (2.0 * a);
    Ok(Some((lo, (lo, hi))))
}

/// `1 / E rho^2`, the common limit of `d * lambda_c(d)` and
/// `d * lambda_e(d)`.
pub fn asymptote(dist: &WeightDistribution) -> Result<f64> {
    Ok(1.0 / require_second_moment(dist)?)
}

/// Uniform bound `max{1, lambda M^2 (d+1)}` on any single-site flip rate.
pub fn rate_sup(lambda: f64, d: usize, bound_m: f64) -> f64 {
    assert!(lambda >= 0.0);
    1.0f64.max(lambda * bound_m * bound_m * (d + 1) as f64)
}

/// `(1 + lambda M^2)^2 / (d lambda E rho^2)`; below 1 exactly when `lambda`
/// sits in the survival-certified interval.
pub fn upper_condition_ratio(lambda: f64, d: usize, dist: &WeightDistribution) -> Result<f64> {
    let m2 = require_second_moment(dist)?;
    if lambda <= 0.0 {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }
    let m = dist.bound();
    Ok((1.0 + lambda * m * m).powi(2) / (d as f64 * lambda * m2))
}

/// Verdict of checking an estimated critical value against the analytic
/// sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SandwichVerdict {
    /// The estimate's interval intersects `[lower, upper]`.
    Pass,
    /// The estimate's interval lies strictly outside the sandwich.
    Fail,
}

/// Check whether an estimated interval for the critical value is compatible
/// with the analytic sandwich.
pub fn sandwich_check(
    d: usize,
    dist: &WeightDistribution,
    estimate_ci: (f64, f64),
) -> Result<SandwichVerdict> {
    let lower = lower_bound_lambda_e(d, dist)?;
    let upper = upper_bound_lambda_c(d, dist)?.map(|(star, _)| star);
    let (ci_lo, ci_hi) = estimate_ci;
    let ok_low = ci_hi >= lower;
    let ok_high = upper.map_or(true, |u| ci_lo <= u);
    Ok(if ok_low && ok_high { SandwichVerdict::Pass } else { SandwichVerdict::Fail })
}

/// Full report for one `(d, law)` pair.
pub fn report(d: usize, dist: &WeightDistribution) -> Result<BoundsReport> {
    let lambda_e_lower = lower_bound_lambda_e(d, dist)?;
    let upper = upper_bound_lambda_c(d, dist)?;
    Ok(BoundsReport {
        degree: d,
        mean_weight: dist.moment(1),
        second_moment: dist.moment(2),
        bound_m: dist.bound(),
        lambda_e_lower,
        lambda_c_upper: upper.map(|(star, _)| star),
        upper_condition_interval: upper.map(|(_, iv)| iv),
        asymptote: asymptote(dist)?,
        rate_sup_at_unit_lambda: rate_sup(1.0, d, dist.bound()),
    })
}
