//! Robbins–Monro and Kiefer–Wolfowitz procedures, projections, quantile
//! tracking and step-plan diagnostics.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{classify_nonnegative, partial_sums, ConditionReport, TrendConfig};
use crate::error::{invalid, Error, Result};
use crate::numerics::sample_variance;
use crate::processes::{mix_seed, rng_from_seed, standard_normal, DistributionSpec, SimRng};
use crate::summability::StepSequence;
use crate::trace::Trace;

/// Divergence cutoff on ‖x_n‖.
pub const DIVERGENCE_NORM: f64 = 1e12;

pub type DriftFn = Arc<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>;
pub type NoiseOracle = Arc<dyn Fn(usize, &[f64], &mut SimRng) -> Vec<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type IndexFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// How ξ_{n+1} is produced.
#[derive(Clone)]
pub enum Noise {
    None,
    /// iid draws per coordinate.
    Additive(DistributionSpec),
    /// An explicit stream; element n is ξ_{n+1}.
    Sequence(Arc<Vec<Vec<f64>>>),
    /// Callback receiving (n, x_n, rng).
    StateDependent(NoiseOracle),
}

impl Noise {
    fn draw(&self, n: usize, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(match self {
            Noise::None => vec![0.0; x.len()],
            Noise::Additive(d) => (0..x.len()).map(|_| d.sample(rng)).collect(),
            Noise::Sequence(s) => s.get(n).cloned().ok_or(Error::OutOfRange { index: n, len: s.len() })?,
            Noise::StateDependent(f) => f(n, x, rng),
        })
    }
}

#[derive(Clone)]
pub struct SaProblem {
    pub dimension: usize,
    pub drift: DriftFn,
    pub noise: Noise,
    pub theta: Option<Vec<f64>>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub delta: Option<f64>,
}

impl fmt::Debug for SaProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SaProblem").field("dimension", &self.dimension).field("theta", &self.theta).finish()
    }
}

impl SaProblem {
    /// A stationary drift f(x) with the given noise.
    pub fn stationary<F>(dimension: usize, f: F, noise: Noise) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        SaProblem {
            dimension,
            drift: Arc::new(move |_, x| f(x)),
            noise,
            theta: None,
            kappa1: None,
            kappa2: None,
            delta: None,
        }
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return invalid("dimension must be positive");
        }
        for (name, v) in [("kappa1", self.kappa1), ("kappa2", self.kappa2), ("delta", self.delta)] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return invalid(format!("{name} must be nonnegative"));
                }
            }
        }
        if let Some(t) = &self.theta {
            if t.len() != self.dimension {
                return invalid("theta dimension mismatch");
            }
        }
        Ok(())
    }
}

/// Named test functions: drift f for Robbins–Monro and value ψ for
/// Kiefer–Wolfowitz, applied coordinatewise around θ.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// f = g(x − θ), ψ = g(x − θ)²/2.
    Linear { theta: Vec<f64>, #[serde(default = "one")] gain: f64 },
    /// f = (x − θ)e^{−r(x − θ)}.
    ExpDamped { theta: Vec<f64>, rate: f64 },
    /// ψ = (x − θ)², f = 2(x − θ).
    Quadratic { theta: Vec<f64> },
    /// f = clamp(x − θ, −1, 1), ψ the matching Huber function.
    Piecewise { theta: Vec<f64> },
    /// ψ ≡ value, f ≡ 0.
    Constant { dimension: usize, value: f64 },
}

fn one() -> f64 {
    1.0
}

impl TestFunction {
    pub fn dimension(&self) -> usize {
        match self {
            TestFunction::Linear { theta, .. }
            | TestFunction::ExpDamped { theta, .. }
            | TestFunction::Quadratic { theta }
            | TestFunction::Piecewise { theta } => theta.len(),
            TestFunction::Constant { dimension, .. } => *dimension,
        }
    }

    pub fn theta(&self) -> Option<Vec<f64>> {
        match self {
            TestFunction::Linear { theta, .. }
            | TestFunction::ExpDamped { theta, .. }
            | TestFunction::Quadratic { theta }
            | TestFunction::Piecewise { theta } => Some(theta.clone()),
            TestFunction::Constant { .. } => None,
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let th = self.theta().unwrap_or_else(|| vec![0.0; x.len()]);
        x.iter()
            .zip(&th)
            .map(|(x, t)| {
                let d = x - t;
                match self {
                    TestFunction::Linear { gain, .. } => gain * d,
                    TestFunction::ExpDamped { rate, .. } => d * (-rate * d).exp(),
                    TestFunction::Quadratic { .. } => 2.0 * d,
                    TestFunction::Piecewise { .. } => d.clamp(-1.0, 1.0),
                    TestFunction::Constant { .. } => 0.0,
                }
            })
            .collect()
    }

    /// ψ at a scalar point (first coordinate of θ).
    pub fn value(&self, x: f64) -> f64 {
        let t = self.theta().map(|t| t[0]).unwrap_or(0.0);
        let d = x - t;
        match self {
            TestFunction::Linear { gain, .. } => 0.5 * gain * d * d,
            TestFunction::ExpDamped { rate, .. } => {
                // Antiderivative of d·e^{−rd}, zero at d = 0.
                (1.0 - (1.0 + rate * d) * (-rate * d).exp()) / (rate * rate)
            }
            TestFunction::Quadratic { .. } => d * d,
            TestFunction::Piecewise { .. } => {
                if d.abs() <= 1.0 {
                    0.5 * d * d
                } else {
                    d.abs() - 0.5
                }
            }
            TestFunction::Constant { value, .. } => *value,
        }
    }

    pub fn into_problem(self, noise: Noise) -> SaProblem {
        let dim = self.dimension();
        let theta = self.theta();
        let f = self.clone();
        let mut p = SaProblem::stationary(dim, move |x| f.drift(x), noise);
        p.theta = theta;
        p
    }
}

/// A positive gain sequence indexed from n = 0. Unlike [`StepSequence`] it
/// does not pin the first value to 1, so plans like a/(n+1) with a > 1 fit.
#[derive(Clone)]
pub struct Gains {
    f: IndexFn,
    label: String,
}

impl fmt::Debug for Gains {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gains({})", self.label)
    }
}

impl Gains {
    pub fn from_fn<F: Fn(usize) -> f64 + Send + Sync + 'static>(label: impl Into<String>, f: F) -> Self {
        Gains { f: Arc::new(f), label: label.into() }
    }

    /// a/(n+1).
    pub fn harmonic(a: f64) -> Self {
        Self::from_fn(format!("{a}/(n+1)"), move |n| a / (n + 1) as f64)
    }

    /// a·(n+1)^{−γ}.
    pub fn power(a: f64, gamma: f64) -> Self {
        Self::from_fn(format!("{a}(n+1)^-{gamma}"), move |n| a * ((n + 1) as f64).powf(-gamma))
    }

    pub fn constant(a: f64) -> Self {
        Self::from_fn(format!("const:{a}"), move |_| a)
    }

    pub fn from_steps(s: StepSequence) -> Self {
        let label = s.label().to_string();
        Self::from_fn(label, move |n| s.value(n).unwrap_or(f64::NAN))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The n-th gain; errors unless positive and finite.
    pub fn at(&self, n: usize) -> Result<f64> {
        let v = (self.f)(n);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            invalid(format!("gain {} at index {n} is {v}, not positive", self.label))
        }
    }
}

/// Declarative form of common gain sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainsSpec {
    /// a/(n+1).
    Harmonic { a: f64 },
    /// a(n+1)^{−γ}.
    Power { a: f64, gamma: f64 },
    Constant { a: f64 },
}

impl GainsSpec {
    pub fn build(self) -> Result<Gains> {
        let (a, g) = match self {
            GainsSpec::Harmonic { a } => (a, 1.0),
            GainsSpec::Power { a, gamma } => (a, gamma),
            GainsSpec::Constant { a } => (a, 0.0),
        };
        if !(a > 0.0 && a.is_finite() && g.is_finite()) {
            return invalid(format!("invalid gains {self:?}"));
        }
        Ok(match self {
            GainsSpec::Harmonic { a } => Gains::harmonic(a),
            GainsSpec::Power { a, gamma } => Gains::power(a, gamma),
            GainsSpec::Constant { a } => Gains::constant(a),
        })
    }
}

/// Declarative projection set (custom projectors are code-only).
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProjectionSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ProjectionSpec {
    pub fn build(&self) -> Result<ProjectionSet> {
        match self {
            ProjectionSpec::Ball { center, radius } => ProjectionSet::ball(center.clone(), *radius),
            ProjectionSpec::Box { lo, hi } => ProjectionSet::boxed(lo.clone(), hi.clone()),
        }
    }
}

impl From<StepSequence> for Gains {
    fn from(s: StepSequence) -> Self {
        Gains::from_steps(s)
    }
}

#[derive(Debug, Clone)]
pub struct StepPlan {
    pub mu: Gains,
    /// Kiefer–Wolfowitz spacing.
    pub c: Option<Gains>,
}

impl StepPlan {
    pub fn new(mu: impl Into<Gains>) -> Self {
        StepPlan { mu: mu.into(), c: None }
    }

    pub fn with_spacing(mut self, c: Gains) -> Self {
        self.c = Some(c);
        self
    }

    /// μ_n = 1/(n+1), c_n = (n+1)^{−1/4}.
    pub fn kiefer_wolfowitz_default() -> Self {
        StepPlan { mu: Gains::harmonic(1.0), c: Some(Gains::power(1.0, 0.25)) }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist_to(x: &[f64], t: &[f64]) -> f64 {
    x.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn sa_loop(
    problem: &SaProblem,
    plan: &StepPlan,
    x0: &[f64],
    horizon: usize,
    seed: u64,
    project: Option<&ProjectionSet>,
) -> Result<Trace> {
    problem.validate()?;
    if x0.len() != problem.dimension {
        return invalid("x0 dimension mismatch");
    }
    let keys: &[&str] = if problem.theta.is_some() { &["err"] } else { &[] };
    let mut trace = Trace::with_capacity(problem.dimension, keys, horizon + 1);
    let aux = |x: &[f64]| problem.theta.as_ref().map(|t| vec![dist_to(x, t)]).unwrap_or_default();
    let mut x = x0.to_vec();
    trace.push(0, &x, &aux(&x));
    let mut rng = rng_from_seed(seed);
    for n in 0..horizon {
        let mu = plan.mu.at(n)?;
        let f = (problem.drift)(n, &x);
        let xi = problem.noise.draw(n, &x, &mut rng)?;
        if f.len() != x.len() || xi.len() != x.len() {
            return invalid("drift or noise dimension mismatch");
        }
        for ((xi_, fi), ei) in x.iter_mut().zip(&f).zip(&xi) {
            *xi_ -= mu * (fi + ei);
        }
        if let Some(p) = project {
            x = p.project(&x);
        }
        if !(norm(&x) <= DIVERGENCE_NORM) {
            trace.mark_diverged(n + 1);
            break;
        }
        if !trace.push(n + 1, &x, &aux(&x)) {
            break;
        }
    }
    Ok(trace)
}

/// x_{n+1} = x_n − μ_n(F_n(x_n) + ξ_{n+1}). Aux `err` = ‖x_n − θ‖ when θ is known.
pub fn robbins_monro(problem: &SaProblem, plan: &StepPlan, x0: &[f64], horizon: usize, seed: u64) -> Result<Trace> {
    sa_loop(problem, plan, x0, horizon, seed, None)
}

pub type Projector = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum ProjectionSet {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Custom(Projector),
}

impl fmt::Debug for ProjectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionSet::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            ProjectionSet::Box { lo, hi } => write!(f, "Box({lo:?}, {hi:?})"),
            ProjectionSet::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ProjectionSet {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid("ball radius must be positive");
        }
        Ok(ProjectionSet::Ball { center, radius })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return invalid("box needs lo ≤ hi elementwise");
        }
        Ok(ProjectionSet::Box { lo, hi })
    }

    /// Accepts a projector only if 100 random probes show it idempotent and
    /// non-expansive; convexity itself cannot be checked.
    pub fn custom<F>(dimension: usize, f: F, seed: u64) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let mut rng = rng_from_seed(seed);
        let mut probe = || (0..dimension).map(|_| 10.0 * standard_normal(&mut rng)).collect::<Vec<f64>>();
        for i in 0..100 {
            let (x, y) = (probe(), probe());
            let (px, py) = (f(&x), f(&y));
            if px.len() != dimension {
                return invalid("projector changed the dimension");
            }
            let ppx = f(&px);
            if dist_to(&ppx, &px) > 1e-12 * (1.0 + norm(&px)) {
                return invalid(format!("projector is not idempotent (probe {i})"));
            }
            if dist_to(&px, &py) > dist_to(&x, &y) * (1.0 + 1e-12) + 1e-12 {
                return invalid(format!("projector is expansive (probe {i})"));
            }
        }
        Ok(ProjectionSet::Custom(Arc::new(f)))
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ProjectionSet::Ball { center, radius } => {
                let d = dist_to(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    center.iter().zip(x).map(|(c, v)| c + (v - c) * radius / d).collect()
                }
            }
            ProjectionSet::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect(),
            ProjectionSet::Custom(f) => f(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist_to(&self.project(x), x) <= 1e-12 * (1.0 + norm(x))
    }
}

/// Robbins–Monro with an orthogonal projection after every step.
pub fn projected_run(problem: &SaProblem, plan: &StepPlan, set: &ProjectionSet, x0: &[f64], horizon: usize, seed: u64) -> Result<Trace> {
    if !set.contains(x0) {
        return invalid("x0 must lie inside the projection set");
    }
    sa_loop(problem, plan, x0, horizon, seed, Some(set))
}

/// Scalar Kiefer–Wolfowitz:
/// x_{n+1} = x_n − μ_n(Ψ_{2n+1}(x_n + c_n) − Ψ_{2n}(x_n − c_n))/(2c_n),
/// with Ψ_k(x) = ψ(x) + e_k for iid e_k (draw 2n first, then 2n+1).
/// Aux `grad` is the finite-difference estimate; `err` = |x_n − θ| when known.
pub fn kiefer_wolfowitz(
    psi: &dyn Fn(f64) -> f64,
    noise: Option<&DistributionSpec>,
    plan: &StepPlan,
    x0: f64,
    theta: Option<f64>,
    horizon: usize,
    seed: u64,
) -> Result<Trace> {
    let Some(c) = &plan.c else {
        return invalid("Kiefer–Wolfowitz needs a spacing sequence c");
    };
    if let Some(d) = noise {
        d.validate()?;
    }
    let keys: &[&str] = if theta.is_some() { &["grad", "err"] } else { &["grad"] };
    let mut trace = Trace::with_capacity(1, keys, horizon + 1);
    let aux = |g: f64, x: f64| match theta {
        Some(t) => vec![g, (x - t).abs()],
        None => vec![g],
    };
    let mut rng = rng_from_seed(seed);
    let draw = |rng: &mut SimRng| noise.map(|d| d.sample(rng)).unwrap_or(0.0);
    let mut x = x0;
    trace.push(0, &[x], &aux(f64::NAN, x));
    for n in 0..horizon {
        let (mu, cn) = (plan.mu.at(n)?, c.at(n)?);
        let lower = psi(x - cn) + draw(&mut rng);
        let upper = psi(x + cn) + draw(&mut rng);
        let g = (upper - lower) / (2.0 * cn);
        x -= mu * g;
        if !(x.abs() <= DIVERGENCE_NORM) {
            trace.mark_diverged(n + 1);
            break;
        }
        if !trace.push(n + 1, &[x], &aux(g, x)) {
            break;
        }
    }
    Ok(trace)
}

/// z_i = z_{i−1} − μ_i(1(ξ_i ≤ z_{i−1}) − α), i = 1..=horizon.
pub fn quantile_track(dist: &DistributionSpec, alpha: f64, gains: &Gains, z0: f64, horizon: usize, seed: u64) -> Result<Trace> {
    dist.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid("alpha must lie in (0,1)");
    }
    let mut rng = rng_from_seed(seed);
    let mut trace = Trace::with_capacity(1, &[], horizon + 1);
    let mut z = z0;
    trace.push(0, &[z], &[]);
    for i in 1..=horizon {
        let xi = dist.sample(&mut rng);
        let ind = if xi <= z { 1.0 } else { 0.0 };
        z -= gains.at(i)? * (ind - alpha);
        trace.push(i, &[z], &[]);
    }
    Ok(trace)
}

/// Partial sums over n = 1..=horizon of Σμ², Σμ and, with a spacing,
/// Σ(μ/c)² and Σμc.
pub fn check_step_plan(plan: &StepPlan, horizon: usize) -> Result<ConditionReport> {
    let mu = (1..=horizon).map(|n| plan.mu.at(n)).collect::<Result<Vec<_>>>()?;
    let tc = TrendConfig::default();
    let mut rep = ConditionReport::new(horizon);
    rep.insert("sum_mu", classify_nonnegative(&partial_sums(mu.iter().copied()), tc));
    rep.insert("sum_mu_sq", classify_nonnegative(&partial_sums(mu.iter().map(|m| m * m)), tc));
    if let Some(c) = &plan.c {
        let c = (1..=horizon).map(|n| c.at(n)).collect::<Result<Vec<_>>>()?;
        rep.insert("sum_mu_over_c_sq", classify_nonnegative(&partial_sums(mu.iter().zip(&c).map(|(m, c)| (m / c).powi(2))), tc));
        rep.insert("sum_mu_c", classify_nonnegative(&partial_sums(mu.iter().zip(&c).map(|(m, c)| m * c)), tc));
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymptoticVarianceRecord {
    pub empirical: f64,
    pub theoretical: f64,
    pub relative_error: f64,
    pub replicas: usize,
    pub horizon: usize,
}

/// Runs X_{n+1} = X_n − (a/(n+1))(B(X_n − θ) + ξ_{n+1}), ξ ~ N(0, σ²), θ = 0,
/// X_0 = θ, over independent replicas, and compares the sample variance of
/// √horizon·X_horizon with a²σ²/(2aB − 1).
pub fn asymptotic_variance_check(b: f64, a: f64, sigma: f64, replicas: usize, horizon: usize, seed: u64) -> Result<AsymptoticVarianceRecord> {
    if !(a * b > 0.5) {
        return invalid(format!("need aB > 1/2, got {}", a * b));
    }
    if replicas < 2 || horizon == 0 || !(sigma >= 0.0) {
        return invalid("need ≥ 2 replicas, a positive horizon and σ ≥ 0");
    }
    let finals: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(mix_seed(seed, r as u64));
            let mut x = 0.0;
            for n in 0..horizon {
                let xi = sigma * standard_normal(&mut rng);
                x -= a / (n + 1) as f64 * (b * x + xi);
            }
            (horizon as f64).sqrt() * x
        })
        .collect();
    let empirical = sample_variance(&finals);
    let theoretical = a * a * sigma * sigma / (2.0 * a * b - 1.0);
    let relative_error = if theoretical > 0.0 { (empirical - theoretical).abs() / theoretical } else { empirical };
    Ok(AsymptoticVarianceRecord { empirical, theoretical, relative_error, replicas, horizon })
}
