//! Replicated statistical checks (seeds 0..9 unless stated).

use iterlab::harness::nonparametric_run;
use iterlab::identification::TransitionNoise;
use iterlab::kernel::Kernel;
use iterlab::lln::{gclt_as_trace, GcltConfig, GcltNorm};
use iterlab::monte_carlo::{coverage, plan_sample_size, sqrt_quartic, sqrt_quartic_integral, sqrt_quartic_variance_bound, BoxDomain};
use iterlab::numerics::median;
use iterlab::processes::DistributionSpec;

fn l1_over_seeds(noise: TransitionNoise) -> Vec<f64> {
    (0..10)
        .map(|s| nonparametric_run("piecewise", 0.9, noise, 6000, Kernel::Cauchy, 0.5, (-8.0, 4.0, 241), s).unwrap().l1)
        .collect()
}

#[test]
fn nonparametric_estimate_is_sensitive_to_dependence() {
    let dep = median(&l1_over_seeds(TransitionNoise::MovingAverage));
    let ind = median(&l1_over_seeds(TransitionNoise::Independent));
    println!("median L1: moving average {dep:.4}, independent {ind:.4}");
    assert!(dep > ind, "{dep} <= {ind}");
}

#[test]
fn monte_carlo_coverage_over_500_seeds() {
    let plan = plan_sample_size(0.01, 0.98, sqrt_quartic_variance_bound()).unwrap();
    let r = coverage(|x| sqrt_quartic(x[0]), &BoxDomain::unit(1), &plan, sqrt_quartic_integral(), 500, 0).unwrap();
    println!("coverage {}/{}", r.inside, r.runs);
    assert!(r.fraction >= 0.98 - 0.03);
}

#[test]
fn gclt_with_unit_indicator_tracks_harmonic_sum() {
    // x far in the right tail makes every indicator equal to one
    let n = 1_000_000usize;
    let mut cfg = GcltConfig::half_line(DistributionSpec::normal(0.0, 1.0), 1e6, n);
    cfg.thin = 100_000;
    cfg.norm = GcltNorm::Harmonic;
    let t = gclt_as_trace(&cfg, 0).unwrap();
    assert!(t.column(0).iter().all(|v| *v >= 0.0));
    let last = t.last_state().unwrap()[0];
    assert!((last - 1.0).abs() <= 0.02, "{last}");

    cfg.norm = GcltNorm::Log;
    let t = gclt_as_trace(&cfg, 0).unwrap();
    let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    let oracle = harmonic / (n as f64).ln();
    let last = t.last_state().unwrap()[0];
    assert!((last - oracle).abs() <= 1e-9, "{last} vs {oracle}");
}
