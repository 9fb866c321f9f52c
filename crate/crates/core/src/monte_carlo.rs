//! Monte Carlo integration with CLT sample-size planning, and the
//! capture–recapture estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate, norm_quantile};
use crate::processes::{mix_seed, open_unit, rng_from_seed};

/// Draws per parallel chunk; each chunk has its own derived seed.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return invalid("box needs finite lo < hi in every coordinate");
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        BoxDomain { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McMode {
    /// Volume times the sample mean of f.
    Mean,
    /// Indicator form for 0 ≤ f ≤ upper: Y = volume·upper·1(U·upper ≤ f(X)).
    HitOrMiss { upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    /// Draws where f was not finite; they are excluded.
    pub nonfinite: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    bad: usize,
}

impl Moments {
    fn push(&mut self, y: f64) {
        if !y.is_finite() {
            self.bad += 1;
            return;
        }
        self.n += 1;
        let d = y - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (y - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.n == 0 {
            return Moments { bad: self.bad + o.bad, ..self };
        }
        if self.n == 0 {
            return Moments { bad: self.bad + o.bad, ..o };
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
            bad: self.bad + o.bad,
        }
    }
}

/// Integral of f over the box from n uniform draws. Chunks run in parallel
/// and merge in index order, so results depend only on (f, n, seed).
pub fn mc_integrate<F>(f: F, domain: &BoxDomain, n: usize, seed: u64, mode: McMode) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n < 2 {
        return invalid("need at least two draws");
    }
    if let McMode::HitOrMiss { upper } = mode {
        if !(upper > 0.0 && upper.is_finite()) {
            return invalid("hit-or-miss needs a positive finite upper bound");
        }
    }
    let vol = domain.volume();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(mix_seed(seed, c as u64));
            let len = CHUNK.min(n - c * CHUNK);
            let mut x = vec![0.0; domain.dim()];
            let mut m = Moments::default();
            for _ in 0..len {
                for (xi, (a, b)) in x.iter_mut().zip(domain.lo.iter().zip(&domain.hi)) {
                    *xi = a + (b - a) * open_unit(&mut rng);
                }
                let y = match mode {
                    McMode::Mean => f(&x),
                    McMode::HitOrMiss { upper } => {
                        let u = upper * open_unit(&mut rng);
                        let fx = f(&x);
                        if fx.is_finite() {
                            if u <= fx { upper } else { 0.0 }
                        } else {
                            fx
                        }
                    }
                };
                m.push(y);
            }
            m
        })
        .collect();
    let m = parts.into_iter().fold(Moments::default(), Moments::merge);
    if m.n < 2 {
        return Err(Error::InvalidArgument(format!("only {} finite values of f", m.n)));
    }
    let var = m.m2 / (m.n - 1) as f64;
    Ok(McEstimate { estimate: vol * m.mean, stderr: vol * (var / m.n as f64).sqrt(), n: m.n, nonfinite: m.bad })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanRounding {
    /// z/ε rounded to three significant digits before squaring.
    ThreeSignificant,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPlan {
    pub epsilon: f64,
    pub confidence: f64,
    pub variance_bound: f64,
    /// Solves 2Φ₀(z) = confidence, Φ₀ = Φ − 1/2.
    pub z: f64,
    pub n_required: usize,
    pub rounding: PlanRounding,
}

/// Rounds to three significant digits.
fn round3(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mag = 10f64.powi(x.abs().log10().floor() as i32 - 2);
    (x / mag).round() * mag
}

/// n = ceil((z√V/ε)²) with z/ε rounded to three significant digits, the
/// rounding that turns (0.01, 0.98, 0.18315) into 9944.
pub fn plan_sample_size(epsilon: f64, confidence: f64, variance_bound: f64) -> Result<McPlan> {
    plan_sample_size_with(epsilon, confidence, variance_bound, PlanRounding::ThreeSignificant)
}

pub fn plan_sample_size_with(epsilon: f64, confidence: f64, variance_bound: f64, rounding: PlanRounding) -> Result<McPlan> {
    if !(epsilon > 0.0 && variance_bound > 0.0 && epsilon.is_finite() && variance_bound.is_finite()) {
        return invalid("epsilon and variance bound must be positive");
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid("confidence must lie in (0,1)");
    }
    let z = norm_quantile(0.5 + confidence / 2.0);
    let ratio = match rounding {
        PlanRounding::ThreeSignificant => round3(z / epsilon),
        PlanRounding::Full => z / epsilon,
    };
    let n = (ratio * ratio * variance_bound).ceil();
    Ok(McPlan { epsilon, confidence, variance_bound, z, n_required: n as usize, rounding })
}

/// √(1 − x⁴) on [0, 1].
pub fn sqrt_quartic(x: f64) -> f64 {
    (1.0 - x.powi(4)).max(0.0).sqrt()
}

/// Variance bound 4/5 − (π/4)² for √(1 − x⁴), from I ≥ π/4 and E f² = 4/5.
pub fn sqrt_quartic_variance_bound() -> f64 {
    0.8 - (std::f64::consts::PI / 4.0).powi(2)
}

/// ∫₀¹ √(1 − x⁴) dx by adaptive quadrature.
pub fn sqrt_quartic_integral() -> f64 {
    integrate(sqrt_quartic, 0.0, 1.0, 1e-13)
}

/// Named one-dimensional integrands on [0, 1].
pub fn builtin_integrand(name: &str) -> Result<fn(f64) -> f64> {
    Ok(match name {
        "sqrt_quartic" => sqrt_quartic,
        "identity" => |x| x,
        "square" => |x| x * x,
        "one" => |_| 1.0,
        _ => return Err(Error::InvalidArgument(format!("unknown integrand '{name}'"))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub runs: usize,
    pub inside: usize,
    pub fraction: f64,
}

/// Runs the plan on seeds seed0..seed0+runs and counts |estimate − truth| ≤ ε.
pub fn coverage<F>(f: F, domain: &BoxDomain, plan: &McPlan, truth: f64, runs: usize, seed0: u64) -> Result<CoverageReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut inside = 0;
    for s in 0..runs as u64 {
        let e = mc_integrate(&f, domain, plan.n_required, seed0 + s, McMode::Mean)?;
        inside += ((e.estimate - truth).abs() <= plan.epsilon) as usize;
    }
    Ok(CoverageReport { runs, inside, fraction: inside as f64 / runs.max(1) as f64 })
}

/// M = N(n − h)/h from h marked fish among n catches, N marked in total.
pub fn capture_recapture(marked: u64, catches: u64, hits: u64) -> Result<f64> {
    if hits == 0 {
        return Err(Error::InfiniteEstimate("no marked fish recaptured".into()));
    }
    if hits > catches {
        return invalid("more marked hits than catches");
    }
    Ok(marked as f64 * (catches - hits) as f64 / hits as f64)
}

/// Catches with replacement from a pond of `marked` marked and `unmarked`
/// unmarked fish; returns the number of marked hits.
pub fn simulate_pond(marked: u64, unmarked: u64, catches: u64, seed: u64) -> Result<u64> {
    if marked == 0 {
        return invalid("need at least one marked fish");
    }
    let p = marked as f64 / (marked + unmarked) as f64;
    let mut rng = rng_from_seed(seed);
    Ok((0..catches).filter(|_| open_unit(&mut rng) < p).count() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_examples() {
        assert_eq!(plan_sample_size(0.01, 0.98, 0.18315).unwrap().n_required, 9944);
        assert_eq!(plan_sample_size(0.01, 0.98, sqrt_quartic_variance_bound()).unwrap().n_required, 9944);
        assert_eq!(plan_sample_size_with(0.01, 0.98, 0.18315, PlanRounding::Full).unwrap().n_required, 9912);
        let p = plan_sample_size(0.01, 0.98, 0.18315).unwrap();
        assert!((p.z - 2.326348).abs() < 1e-6);
        let a = plan_sample_size_with(0.01, 0.98, 0.1, PlanRounding::Full).unwrap().n_required as f64;
        let b = plan_sample_size_with(0.01, 0.98, 0.4, PlanRounding::Full).unwrap().n_required as f64;
        assert!((b / a - 4.0).abs() < 1e-3);
        assert!(plan_sample_size(0.0, 0.9, 1.0).is_err());
        assert!(plan_sample_size(0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn integral_oracle() {
        assert!((sqrt_quartic_integral() - 0.874019).abs() < 1e-6);
        assert!((sqrt_quartic_variance_bound() - 0.18315).abs() < 1e-5);
    }

    #[test]
    fn constant_and_linear() {
        let e = mc_integrate(|_| 0.1, &BoxDomain::unit(1), 10_000, 0, McMode::Mean).unwrap();
        assert_eq!((e.estimate, e.stderr), (0.1, 0.0));
        let e = mc_integrate(|x| x[0], &BoxDomain::unit(1), 100_000, 3, McMode::Mean).unwrap();
        assert!((e.estimate - 0.5).abs() <= 0.003);
        let d = BoxDomain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let e = mc_integrate(|_| 1.5, &d, 100, 0, McMode::Mean).unwrap();
        assert_eq!(e.estimate, 6.0);
    }

    #[test]
    fn nonfinite_counted() {
        let e = mc_integrate(|x| if x[0] < 0.25 { f64::NAN } else { 1.0 }, &BoxDomain::unit(1), 20_000, 1, McMode::Mean).unwrap();
        assert!(e.nonfinite > 4000 && e.nonfinite < 6000);
        assert_eq!(e.n + e.nonfinite, 20_000);
    }

    #[test]
    fn hit_or_miss() {
        let e = mc_integrate(|x| sqrt_quartic(x[0]), &BoxDomain::unit(1), 200_000, 2, McMode::HitOrMiss { upper: 1.0 }).unwrap();
        assert!((e.estimate - 0.874019).abs() < 4.0 * e.stderr);
    }

    #[test]
    fn deterministic_across_calls() {
        let a = mc_integrate(|x| sqrt_quartic(x[0]), &BoxDomain::unit(1), 50_000, 9, McMode::Mean).unwrap();
        let b = mc_integrate(|x| sqrt_quartic(x[0]), &BoxDomain::unit(1), 50_000, 9, McMode::Mean).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn capture_examples() {
        assert_eq!(capture_recapture(100, 50, 25).unwrap(), 100.0);
        assert_eq!(capture_recapture(100, 50, 50).unwrap(), 0.0);
        assert!(matches!(capture_recapture(100, 50, 0), Err(Error::InfiniteEstimate(_))));
        let ok = (0..10)
            .filter(|&s| {
                let h = simulate_pond(100, 900, 10_000, s).unwrap();
                (capture_recapture(100, 10_000, h).unwrap() - 900.0).abs() <= 90.0
            })
            .count();
        assert!(ok >= 9, "{ok}");
    }
}
