//! Small statistics helpers used by the simulation modules.

/// z-quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for a binomial proportion.
///
/// Preferred over the Wald interval because survival probabilities sit near
/// 0 and 1, where Wald degenerates.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Sample mean and its standard error.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    assert!(n >= 2.0, "need at least two samples");
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares slope of `y` against `t`, with a standard error
/// propagated from per-point variances (delta method); correlations between
/// points are ignored.
pub fn ols_slope(ts: &[f64], ys: &[f64], y_vars: &[f64]) -> (f64, f64) {
    assert_eq!(ts.len(), ys.len());
    assert_eq!(ts.len(), y_vars.len());
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - t_mean) * (t - t_mean)).sum();
    assert!(sxx > 0.0, "degenerate time grid");
    let sxy: f64 = ts
        .iter()
        .zip(ys)
        .map(|(t, y)| (t - t_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let var: f64 = ts
        .iter()
        .zip(y_vars)
        .map(|(t, v)| {
            let w = (t - t_mean) / sxx;
            w * w * v
        })
        .sum();
    (slope, var.sqrt())
}

/// Compensated (Kahan) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
