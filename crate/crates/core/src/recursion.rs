//! The recursion x_{n+1} = (1 − μ_n)x_n + μ_n b_n and numeric diagnostics
//! built on it.

use serde::Serialize;

use crate::conditions::{classify_oscillation, partial_sums, ConditionEntry, OscillationConfig, Verdict};
use crate::error::{invalid, Error, Result};
use crate::summability::StepSequence;
use crate::trace::Trace;

/// Emits x_0..x_horizon. `b(n)` supplies b_n for n < horizon. A non-finite
/// b_n or state freezes the trace with the diverged flag set.
pub fn recur_trace<B>(mut b: B, steps: &StepSequence, x0: f64, horizon: usize) -> Result<Trace>
where
    B: FnMut(usize) -> f64,
{
    recur_trace_vec(|n| vec![b(n)], steps, &[x0], horizon)
}

/// Vector form of [`recur_trace`]; the step is applied coordinatewise.
pub fn recur_trace_vec<B>(mut b: B, steps: &StepSequence, x0: &[f64], horizon: usize) -> Result<Trace>
where
    B: FnMut(usize) -> Vec<f64>,
{
    if horizon == 0 {
        return invalid("horizon must be at least 1");
    }
    let mu = steps.prefix(horizon)?;
    let mut x = x0.to_vec();
    let mut trace = Trace::with_capacity(x.len(), &[], horizon + 1);
    trace.push(0, &x, &[]);
    for (n, &m) in mu.iter().enumerate() {
        let bn = b(n);
        if bn.len() != x.len() {
            return invalid(format!("b_{n} has dimension {} but state has {}", bn.len(), x.len()));
        }
        if bn.iter().any(|v| !v.is_finite()) {
            trace.mark_diverged(n + 1);
            break;
        }
        for (xi, bi) in x.iter_mut().zip(&bn) {
            *xi = (1.0 - m) * *xi + m * bi;
        }
        if !trace.push(n + 1, &x, &[]) {
            break;
        }
    }
    Ok(trace)
}

/// |x_{M+1} − x_N + Σ_{n=N}^{M} μ_n x_n − Σ_{n=N}^{M} μ_n b_n| for a scalar,
/// unthinned trace whose row i holds x_i.
pub fn verify_basic_identity(trace: &Trace, b: &[f64], steps: &StepSequence, n: usize, m: usize) -> Result<f64> {
    if n > m {
        return invalid(format!("need N ≤ M, got N={n}, M={m}"));
    }
    if m + 1 >= trace.len() {
        return Err(Error::OutOfRange { index: m + 1, len: trace.len() });
    }
    if m >= b.len() {
        return Err(Error::OutOfRange { index: m, len: b.len() });
    }
    if trace.step(m + 1) != m + 1 {
        return invalid("trace must hold every step (no thinning)");
    }
    let mu = steps.prefix(m + 1)?;
    let x = |i: usize| trace.state(i)[0];
    let mut sum_x = 0.0;
    let mut sum_b = 0.0;
    for i in n..=m {
        sum_x += mu[i] * x(i);
        sum_b += mu[i] * b[i];
    }
    Ok((x(m + 1) - x(n) + sum_x - sum_b).abs())
}

/// Result of checking d_{n+1} ≤ λ_n max(d_n, ε_n) over a finite horizon.
///
/// The lemma's conclusion compares a lim-inf with a lim-sup over infinite
/// tails. Here q_k = sup_{k≤n<H} Π_{i=k}^{n} λ_i and both limits are
/// replaced by the min/max over the trailing tenth of the horizon; this
/// surrogate is a modelling choice, not the lemma itself.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckReport {
    pub first_violation: Option<usize>,
    pub max_ratio: f64,
    pub lim_inf_estimate: f64,
    pub lim_sup_eps_estimate: f64,
    pub conclusion_holds: bool,
    pub surrogate: &'static str,
}

pub fn max_bound_check(d: &[f64], eps: &[f64], lambda: &[f64], from: usize) -> Result<BoundCheckReport> {
    let len = d.len();
    if eps.len() + 1 < len || lambda.len() + 1 < len {
        return invalid("eps and lambda must cover indices up to len(d) − 2");
    }
    if len < 2 || from + 1 >= len {
        return invalid("need at least one checked transition after `from`");
    }
    for (name, s) in [("d", &d[from..]), ("eps", &eps[from..len - 1]), ("lambda", &lambda[from..len - 1])] {
        if let Some(v) = s.iter().find(|v| **v < 0.0 || v.is_nan()) {
            return invalid(format!("{name} contains negative entry {v}"));
        }
    }
    let mut first_violation = None;
    let mut max_ratio: f64 = 0.0;
    for n in from..len - 1 {
        let bound = lambda[n] * d[n].max(eps[n]);
        let lhs = d[n + 1];
        if bound > 0.0 {
            max_ratio = max_ratio.max(lhs / bound);
        } else if lhs > 0.0 {
            max_ratio = f64::INFINITY;
        }
        let slack = 1e-12 * bound.abs() + 1e-300;
        if lhs > bound + slack && first_violation.is_none() {
            first_violation = Some(n);
        }
    }
    // q_k by backward recursion q_k = λ_k·max(1, q_{k+1}).
    let last = len - 2;
    let mut q = vec![0.0; len - 1];
    q[last] = lambda[last];
    for k in (from..last).rev() {
        q[k] = lambda[k] * q[k + 1].max(1.0);
    }
    let window = ((len - 1 - from) / 10).max(1);
    let tail = (len - 1 - window)..(len - 1);
    let lim_inf_estimate = tail.clone().map(|k| d[k] * q[k]).fold(f64::INFINITY, f64::min);
    let lim_sup_eps_estimate = tail.map(|k| eps[k] * q[k]).fold(0.0, f64::max);
    Ok(BoundCheckReport {
        first_violation,
        max_ratio,
        lim_inf_estimate,
        lim_sup_eps_estimate,
        conclusion_holds: lim_inf_estimate <= lim_sup_eps_estimate * (1.0 + 1e-9) + 1e-300,
        surrogate: "trailing-window min/max over the last 10% of the horizon",
    })
}

/// Partial sums and trajectories probed by the generalized Kronecker lemma.
#[derive(Debug, Clone, Serialize)]
pub struct KroneckerRecord {
    /// Σ_{i≤n} x_i/a_i
    pub weighted_series: Vec<f64>,
    /// m_n = Σ_{i≤n} x_i / a_n
    pub normalized_sums: Vec<f64>,
    /// Σ_{i≤n} (1/a_i − 1/a_{i+1}) Σ_{j≤i} x_j, for n < len − 1
    pub difference_series: Vec<f64>,
    pub weighted_verdict: ConditionEntry,
    pub difference_verdict: ConditionEntry,
    /// False when the weighted series looks Cauchy but m_n is not small.
    pub consistent: bool,
}

pub fn kronecker_check(x: &[f64], a: &[f64], cfg: OscillationConfig) -> Result<KroneckerRecord> {
    if x.len() != a.len() || x.is_empty() {
        return invalid("x and a must be nonempty and of equal length");
    }
    if a[0] <= 0.0 || a.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("a must be positive and strictly increasing");
    }
    let weighted_series = partial_sums(x.iter().zip(a).map(|(x, a)| x / a));
    let sums = partial_sums(x.iter().copied());
    let normalized_sums: Vec<f64> = sums.iter().zip(a).map(|(s, a)| s / a).collect();
    let difference_series = partial_sums((0..x.len() - 1).map(|i| (1.0 / a[i] - 1.0 / a[i + 1]) * sums[i]));
    let weighted_verdict = classify_oscillation(&weighted_series, cfg);
    let difference_verdict = classify_oscillation(&difference_series, cfg);
    let m_last = normalized_sums.last().copied().unwrap_or(0.0);
    let consistent = weighted_verdict.verdict != Verdict::Converging || m_last.abs() <= 10.0 * cfg.tau;
    Ok(KroneckerRecord { weighted_series, normalized_sums, difference_series, weighted_verdict, difference_verdict, consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summability::{conjugate_weights, riesz_mean_trace};

    #[test]
    fn constant_b_fixed_point() {
        let t = recur_trace(|_| 2.5, &StepSequence::power(0.6).unwrap(), -4.0, 50).unwrap();
        assert!(t.column(0)[1..].iter().all(|v| *v == 2.5));
    }

    #[test]
    fn arithmetic_mean_of_naturals() {
        let t = recur_trace(|n| (n + 1) as f64, &StepSequence::harmonic(), 0.0, 100).unwrap();
        for (i, v) in t.column(0).iter().enumerate().skip(1) {
            assert!((v - (i as f64 + 1.0) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn convex_hull_bound() {
        let b: Vec<f64> = (0..500).map(|i| ((i * 37) % 19) as f64 / 19.0 - 0.3).collect();
        let (lo, hi): (f64, f64) = (-0.3, 1.0 - 0.3);
        let x0 = 3.0;
        let t = recur_trace(|n| b[n], &StepSequence::power(0.7).unwrap(), x0, 500).unwrap();
        assert!(t.column(0).iter().all(|v| *v >= lo.min(x0) - 1e-12 && *v <= hi.max(x0) + 1e-12));
    }

    #[test]
    fn non_finite_b_halts() {
        let t = recur_trace(|n| if n == 5 { f64::NAN } else { 1.0 }, &StepSequence::harmonic(), 0.0, 20).unwrap();
        assert_eq!(t.diverged(), Some(6));
        assert_eq!(t.len(), 6);
    }

    #[test]
    fn matches_riesz_means() {
        let b: Vec<f64> = (0..300).map(|i| ((i * 7919) % 101) as f64 / 7.0 - 5.0).collect();
        let steps = StepSequence::power(0.8).unwrap();
        let t = recur_trace(|n| b[n], &steps, 0.0, 300).unwrap();
        let w = conjugate_weights(&steps, 300).unwrap();
        let r = riesz_mean_trace(&b, &w).unwrap();
        for (x, y) in t.column(0)[1..].iter().zip(r.column(0)) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn basic_identity_examples() {
        let b: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let steps = StepSequence::harmonic();
        let t = recur_trace(|n| b[n], &steps, 0.0, 10).unwrap();
        assert!(verify_basic_identity(&t, &b, &steps, 2, 7).unwrap() < 1e-12);
        for n in 0..9 {
            assert!(verify_basic_identity(&t, &b, &steps, n, n).unwrap() < 1e-12);
        }
        assert!(verify_basic_identity(&t, &b, &steps, 3, 10).is_err());
        assert!(verify_basic_identity(&t, &b, &steps, 4, 3).is_err());
    }

    #[test]
    fn bound_check_examples() {
        let z = vec![0.0; 50];
        let lam = vec![0.9; 50];
        let r = max_bound_check(&z, &z, &lam, 0).unwrap();
        assert_eq!(r.first_violation, None);
        assert_eq!(r.lim_inf_estimate, 0.0);

        let mut d: Vec<f64> = (0..50).map(|n| 0.9f64.powi(n)).collect();
        let eps = vec![0.0; 50];
        assert_eq!(max_bound_check(&d, &eps, &lam, 0).unwrap().first_violation, None);
        d[8] = 5.0;
        assert_eq!(max_bound_check(&d, &eps, &lam, 0).unwrap().first_violation, Some(7));
        assert!(max_bound_check(&[1.0, -1.0], &[0.0], &[1.0], 0).is_err());
    }

    #[test]
    fn kronecker_examples() {
        let h = 20_000;
        let a: Vec<f64> = (1..=h).map(|n| n as f64).collect();
        let x: Vec<f64> = (1..=h).map(|n| 1.0 / (n as f64).powi(2)).collect();
        let r = kronecker_check(&x, &a, OscillationConfig::default()).unwrap();
        assert_eq!(r.weighted_verdict.verdict, Verdict::Converging);
        assert_eq!(r.difference_verdict.verdict, Verdict::Converging);
        assert!(r.normalized_sums.last().unwrap().abs() < 1e-3);
        assert!(r.consistent);

        let ones = vec![1.0; h];
        let r = kronecker_check(&ones, &a, OscillationConfig::default()).unwrap();
        assert_eq!(r.weighted_verdict.verdict, Verdict::Diverging);
        assert!((r.normalized_sums.last().unwrap() - 1.0).abs() < 1e-12);

        let zeros = vec![0.0; 100];
        let r = kronecker_check(&zeros, &a[..100], OscillationConfig::default()).unwrap();
        assert!(r.weighted_series.iter().chain(&r.normalized_sums).all(|v| *v == 0.0));
        assert!(kronecker_check(&[1.0, 1.0], &[2.0, 1.0], OscillationConfig::default()).is_err());
    }

    #[test]
    fn convergent_family_direction() {
        // b_n = (−1)^n / n^1.1 with harmonic steps: Σ μ_n b_n is Cauchy.
        let h = 100_000;
        let b = |n: usize| if n == 0 { 0.0 } else { (-1f64).powi(n as i32) / (n as f64).powf(1.1) };
        let steps = StepSequence::harmonic();
        let t = recur_trace(b, &steps, 0.0, h).unwrap();
        let mu = steps.prefix(h).unwrap();
        let s = partial_sums((0..h).map(|n| mu[n] * b(n)));
        let tau = crate::conditions::trailing_oscillation(&s, 0.1);
        assert!(tau < 1e-6);
        let x = t.column(0);
        assert!(x[h].abs() <= 10.0 * tau + 1e-4);
        let sx = partial_sums((0..h).map(|n| mu[n] * x[n]));
        assert!(crate::conditions::trailing_oscillation(&sx, 0.1) < 10.0 * tau + 1e-4);
    }
}
