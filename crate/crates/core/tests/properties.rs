//! Property tests for the algebraic and geometric invariants.

use iterlab::kernel::{batch_density, cdf_estimate, recursive_density, Bandwidth, Kernel};
use iterlab::lln::jamison_capacity;
use iterlab::monte_carlo::{mc_integrate, plan_sample_size, BoxDomain, McMode};
use iterlab::processes::DistributionSpec;
use iterlab::recursion::{recur_trace, verify_basic_identity};
use iterlab::regression::{evaluate_ratio, recursive_regression};
use iterlab::sa::{quantile_track, Gains, ProjectionSet};
use iterlab::summability::{
    cesaro_coefficient, conjugate_steps, conjugate_weights, riesz_identity_check, riesz_mean_trace, StepSequence, WeightSequence,
};
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn finite(lo: f64, hi: f64, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, 2..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugacy_round_trip(steps in prop::collection::vec(0.01f64..0.99, 1..60)) {
        let mut s = steps.clone();
        s[0] = 1.0;
        let n = s.len();
        let seq = StepSequence::from_values(s.clone()).unwrap();
        let w = conjugate_weights(&seq, n).unwrap();
        let back = conjugate_steps(&w, n).unwrap().prefix(n).unwrap();
        for (a, b) in s.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{} vs {}", a, b);
        }
    }

    #[test]
    fn weights_sum_equals_ratio(n in 1usize..200, p in 0u32..4) {
        // integer weights (i+1)^p keep every partial sum exact
        let w = WeightSequence::power(p as f64);
        let alpha = w.prefix(n).unwrap();
        let mu = conjugate_steps(&w, n).unwrap().prefix(n).unwrap();
        let total: f64 = alpha.iter().sum();
        let last = n - 1;
        prop_assert!((total - alpha[last] / mu[last]).abs() <= 1e-12 * total);
    }

    #[test]
    fn cesaro_sum_identity(alpha in prop::sample::select(vec![0.0, 1.0, 2.0, 0.5]), n in 0usize..=50) {
        let lhs: f64 = (0..=n).map(|k| cesaro_coefficient(k, alpha).unwrap()).sum();
        let rhs = cesaro_coefficient(n, alpha + 1.0).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn riesz_recursion_matches_quotient(x in finite(-100.0, 100.0, 400), p in 0.0f64..3.0) {
        let t = riesz_mean_trace(&x, &WeightSequence::power(p)).unwrap();
        let q = t.aux_column("quotient").unwrap();
        for (r, d) in t.column(0).iter().zip(&q) {
            prop_assert!((r - d).abs() <= 1e-9 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn riesz_identity_exact(x in finite(-10.0, 10.0, 300), p in 0.0f64..2.5) {
        let rec = riesz_identity_check(&x, &WeightSequence::power(p)).unwrap();
        prop_assert!(rec.hat_bar_deviation <= 1e-9 && rec.step_deviation <= 1e-9);
    }

    #[test]
    fn recursion_is_riesz_mean(b in finite(-5.0, 5.0, 300), gamma in 0.5f64..1.0) {
        let steps = StepSequence::power(gamma).unwrap();
        let n = b.len();
        let t = recur_trace(|i| b[i], &steps, 0.0, n).unwrap();
        let w = conjugate_weights(&steps, n).unwrap();
        let r = riesz_mean_trace(&b, &w).unwrap();
        let xs = t.column(0);
        // row 0 of the recursion trace is x0
        for (a, c) in xs[1..].iter().zip(r.column(0)) {
            prop_assert!((a - c).abs() <= 1e-9 * (1.0 + c.abs()));
        }
        let res = verify_basic_identity(&t, &b, &steps, 0, n - 1).unwrap();
        prop_assert!(res <= 1e-8);
    }

    #[test]
    fn jamison_unit_jumps(p in 0.0f64..2.0, xs in prop::collection::vec(0.01f64..500.0, 2..40)) {
        let mut grid = xs.clone();
        grid.sort_by(|a, b| a.total_cmp(b));
        let pts = jamison_capacity(&WeightSequence::power(p), &grid, 400).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].count >= w[0].count);
        }
        // a fine grid sees every increment of size one
        let fine: Vec<f64> = (1..4000).map(|i| i as f64 * 0.125).collect();
        let pts = jamison_capacity(&WeightSequence::power(p), &fine, 400).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].count - w[0].count <= 1);
        }
    }

    #[test]
    fn projections_idempotent_nonexpansive(
        c in prop::collection::vec(-3.0f64..3.0, 3), r in 0.1f64..4.0,
        x in prop::collection::vec(-20.0f64..20.0, 3), y in prop::collection::vec(-20.0f64..20.0, 3),
    ) {
        let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
        let hi: Vec<f64> = c.iter().map(|v| v + 0.5 * r).collect();
        for set in [ProjectionSet::ball(c.clone(), r).unwrap(), ProjectionSet::boxed(lo, hi).unwrap()] {
            let px = set.project(&x);
            let py = set.project(&y);
            prop_assert!(set.contains(&px));
            prop_assert!(dist(&set.project(&px), &px) <= 1e-12);
            prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn quantile_increments_bounded(seed in 0u64..1000, alpha in 0.05f64..0.95, gamma in 0.5f64..1.0) {
        let g = Gains::power(1.0, gamma);
        let t = quantile_track(&DistributionSpec::normal(0.0, 2.0), alpha, &g, 0.0, 300, seed).unwrap();
        let z = t.column(0);
        for i in 1..z.len() {
            let mu = g.at(i).unwrap();
            prop_assert!((z[i] - z[i - 1]).abs() <= mu * (1.0 + 1e-12));
        }
    }

    #[test]
    fn recursive_density_matches_direct(xs in finite(-3.0, 3.0, 120), beta in 0.0f64..0.5) {
        let grid: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
        for k in [Kernel::Epanechnikov, Kernel::Gaussian, Kernel::Cauchy] {
            let bw = Bandwidth::rule(1.0, beta);
            let st = recursive_density(&xs, k, bw, grid.clone()).unwrap();
            let n = xs.len() as f64;
            for (g, v) in grid.iter().zip(st.values()) {
                let direct: f64 = xs.iter().enumerate().map(|(i, x)| {
                    let h = bw.at(i + 1);
                    k.pdf((g - x) / h) / h
                }).sum::<f64>() / n;
                prop_assert!((v - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn batch_density_nonnegative(xs in finite(-3.0, 3.0, 100), h in 0.05f64..2.0) {
        let grid: Vec<f64> = (0..31).map(|i| -4.0 + 0.25 * i as f64).collect();
        for k in Kernel::ALL {
            let f = batch_density(&xs, k, h, &grid).unwrap();
            prop_assert!(f.values.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn cdf_monotone(xs in finite(-3.0, 3.0, 100), h in 0.01f64..2.0) {
        let grid: Vec<f64> = (0..81).map(|i| -5.0 + 0.125 * i as f64).collect();
        for k in Kernel::ALL {
            let f = cdf_estimate(&xs, k, &Bandwidth::fixed(h), &grid).unwrap();
            for w in f.values.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(f.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn regression_envelope_and_affine(
        pairs in prop::collection::vec((-2.0f64..2.0, -5.0f64..5.0), 2..80),
        a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let grid: Vec<f64> = (0..25).map(|i| -3.0 + 0.25 * i as f64).collect();
        let bw = Bandwidth::rule(0.8, 0.2);
        let k = Kernel::Epanechnikov;
        let base = evaluate_ratio(&recursive_regression(&pairs, k, bw, grid.clone()).unwrap()).estimate.function;
        let ymin = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mapped: Vec<(f64, f64)> = pairs.iter().map(|(x, y)| (*x, a * y + b)).collect();
        let other = evaluate_ratio(&recursive_regression(&mapped, k, bw, grid).unwrap()).estimate.function;
        for i in 0..base.len() {
            prop_assert_eq!(base.is_defined(i), other.is_defined(i));
            if base.is_defined(i) {
                let v = base.values[i];
                prop_assert!(v >= ymin - 1e-9 * (1.0 + ymin.abs()) && v <= ymax + 1e-9 * (1.0 + ymax.abs()));
                let w = a * v + b;
                prop_assert!((other.values[i] - w).abs() <= 1e-9 * (1.0 + w.abs()));
            }
        }
    }

    #[test]
    fn plan_monotone(e in 0.001f64..0.1, c in 0.5f64..0.99, v in 0.01f64..2.0, de in 0.0f64..0.05, dc in 0.0f64..0.009, dv in 0.0f64..1.0) {
        let n = |e, c, v| plan_sample_size(e, c, v).unwrap().n_required;
        prop_assert!(n(e + de, c, v) <= n(e, c, v));
        prop_assert!(n(e, c + dc, v) >= n(e, c, v));
        prop_assert!(n(e, c, v + dv) >= n(e, c, v));
    }

    #[test]
    fn mc_nonnegative(seed in 0u64..10_000, n in 1usize..5000, p in 0.0f64..4.0) {
        let est = mc_integrate(|x| x[0].powf(p), &BoxDomain::unit(1), n, seed, McMode::Mean).unwrap();
        prop_assert!(est.estimate >= 0.0);
        prop_assert!(est.stderr >= 0.0);
    }
}
