// pilot runs to pin acceptance-test constants
use treecp_core::cp_sim::{self, CpRunConfig, EnvironmentMode};
use treecp_core::sir_moments::{self, SplitMode};
use treecp_core::{WeightDistribution};

fn main() {
    let unit = WeightDistribution::constant(1.0).unwrap();

    // 1. survival curve at d=10, lambda=0.05 (subcritical): where does the
    //    empirical curve die with 1e5 replicas?
    let grid: Vec<f64> = (5..=16).map(|k| k as f64).collect();
    match cp_sim::decay_rate(&unit, 10, 0.05, &grid, 100_000, 12345) {
        Ok(fit) => {
            println!("decay d=10 l=0.05: slope {} stderr {}", fit.slope, fit.stderr);
            for (t, p, a) in &fit.points { println!("  t={t} p={p} alive={a}"); }
        }
        Err(e) => println!("decay grid 5..16 failed: {e}"),
    }

    // 2. ratio sequence d=10 lambda=0.2 and lambda=0.5, n<=50
    for lambda in [0.2, 0.5] {
        let rep = sir_moments::survival_lower_bound_sequence(lambda, 10, &unit, 50).unwrap();
        let min = rep.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let last = rep.rows.last().unwrap();
        println!("ratio d=10 l={lambda}: min {min:.6} last(n={}) {:.6} condition {} ({})",
                 last.n, last.ratio, rep.condition_value, rep.condition_holds);
    }

    // 3. survival at d=10 lambda=0.2 (supercritical)
    let mut cfg = CpRunConfig::new(10, 0.2);
    cfg.t_max = 50.0;
    cfg.size_cap = 5_000;
    let est = cp_sim::survival_probability(&unit, &cfg, EnvironmentMode::Annealed, 20_000, 777).unwrap();
    println!("survival d=10 l=0.2 t=50: {} ci ({}, {}) capfrac {}",
             est.estimate, est.wilson_ci.0, est.wilson_ci.1,
             est.cap_censored as f64 / est.replicas as f64);

    // 4. survival at d=6 lambda=1.0
    let mut cfg = CpRunConfig::new(6, 1.0);
    cfg.t_max = 50.0;
    cfg.size_cap = 5_000;
    let est = cp_sim::survival_probability(&unit, &cfg, EnvironmentMode::Annealed, 10_000, 778).unwrap();
    println!("survival d=6 l=1.0 t=50: {} ci ({}, {})", est.estimate, est.wilson_ci.0, est.wilson_ci.1);

    // 5. survival at d=10 lambda=0.5 (for the example with the l=0.5 floor)
    let mut cfg = CpRunConfig::new(10, 0.5);
    cfg.t_max = 50.0;
    cfg.size_cap = 5_000;
    let est = cp_sim::survival_probability(&unit, &cfg, EnvironmentMode::Annealed, 20_000, 779).unwrap();
    println!("survival d=10 l=0.5 t=50: {} ci ({}, {})", est.estimate, est.wilson_ci.0, est.wilson_ci.1);

    // 6. second moment check: exact vs bound growth at d=10 l=0.2 n=50
    let e = sir_moments::second_moment_exact(0.2, 10, &unit, 20, SplitMode::Exact).unwrap();
    let b = sir_moments::second_moment_exact(0.2, 10, &unit, 20, SplitMode::PaperBound).unwrap();
    println!("second moment n=20: exact {e:.6e} bound {b:.6e}");
}
