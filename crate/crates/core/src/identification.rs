//! Parametric identification by estimating-function driven stochastic
//! approximation, and nonparametric identification by recursive regression.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{Bandwidth, Kernel};
use crate::processes::{rng_from_seed, standard_normal, ProcessSpec, SampleStream};
use crate::regression::{evaluate_ratio, recursive_regression, RegressionEstimate};
use crate::sa::Gains;
use crate::trace::Trace;

/// Condition number above which M_i counts as singular.
pub const COND_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentRun {
    pub estimates: Trace,
    pub truth: Option<Vec<f64>>,
    pub final_error: Option<f64>,
    pub flags: Vec<String>,
}

impl IdentRun {
    fn finish(estimates: Trace, truth: Option<Vec<f64>>, flags: Vec<String>) -> Self {
        let final_error = match (&truth, estimates.last_state()) {
            (Some(t), Some(last)) => Some(l2(last, t)),
            _ => None,
        };
        IdentRun { estimates, truth, final_error, flags }
    }

    pub fn last(&self) -> &[f64] {
        self.estimates.last_state().unwrap_or(&[])
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// v_i = (y_{i+q−1}, …, y_i).
pub fn lagged(series: &[f64], i: usize, q: usize) -> Vec<f64> {
    (0..q).map(|j| series[i + q - 1 - j]).collect()
}

fn check_series(series: &[f64], q: usize, p0: &[f64], horizon: usize) -> Result<()> {
    if q == 0 || p0.len() != q {
        return invalid(format!("order {q} does not match initial estimate of length {}", p0.len()));
    }
    if series.len() < horizon + q {
        return invalid(format!("series of length {} is shorter than horizon + order = {}", series.len(), horizon + q));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return invalid("series must be finite");
    }
    Ok(())
}

fn error_aux(truth: Option<&[f64]>, b: &[f64]) -> Vec<f64> {
    truth.map(|t| vec![l2(b, t)]).unwrap_or_default()
}

/// b_{i+1} = b_i + μ_i v_i(y_{i+q} − b_iᵀv_i), i = 0..horizon.
pub fn identify_lms(series: &[f64], q: usize, gains: &Gains, b0: &[f64], horizon: usize, truth: Option<&[f64]>) -> Result<IdentRun> {
    check_series(series, q, b0, horizon)?;
    let keys: &[&str] = if truth.is_some() { &["error"] } else { &[] };
    let mut trace = Trace::with_capacity(q, keys, horizon + 1);
    let mut b = b0.to_vec();
    trace.push(0, &b, &error_aux(truth, &b));
    for i in 0..horizon {
        let v = lagged(series, i, q);
        let r = series[i + q] - dot(&b, &v);
        let mu = gains.at(i)?;
        for (bj, vj) in b.iter_mut().zip(&v) {
            *bj += mu * (vj * r);
        }
        if !trace.push(i + 1, &b, &error_aux(truth, &b)) {
            break;
        }
    }
    Ok(IdentRun::finish(trace, truth.map(<[f64]>::to_vec), vec![]))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Step used while M_i is numerically singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Minimum-norm solve on the range of M_i. Bounded for any data scale.
    PseudoInverse,
    /// Plain LMS step with the supplied gains; overshoots when μ‖v‖² > 2.
    Lms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedConfig {
    /// Numerator c in c/(i+1).
    pub scale: f64,
    pub cond_limit: f64,
    /// Steps after which a singular M_i flags the run.
    pub warmup: usize,
    pub fallback: Fallback,
}

impl Default for NormalizedConfig {
    fn default() -> Self {
        NormalizedConfig { scale: 2.0, cond_limit: COND_LIMIT, warmup: 100, fallback: Fallback::PseudoInverse }
    }
}

/// a_{i+1} = a_i + (c/(i+1))M_i⁻¹v_i(y_{i+q} − a_iᵀv_i) with
/// M_i = (1/(i+1))Σ_{k≤i} v_k v_kᵀ. While M_i is numerically singular the
/// step follows `cfg.fallback`; the gains are used only by the LMS fallback. Aux: `m_min_eig`,
/// `fallback` (1 on fallback steps) and `error` when the truth is known.
pub fn identify_normalized(
    series: &[f64],
    q: usize,
    gains: &Gains,
    a0: &[f64],
    horizon: usize,
    truth: Option<&[f64]>,
    cfg: NormalizedConfig,
) -> Result<IdentRun> {
    check_series(series, q, a0, horizon)?;
    let keys: &[&str] = if truth.is_some() { &["m_min_eig", "fallback", "error"] } else { &["m_min_eig", "fallback"] };
    let mut trace = Trace::with_capacity(q, keys, horizon + 1);
    let aux = |eig: f64, fb: bool, a: &[f64]| {
        let mut v = vec![eig, fb as u8 as f64];
        v.extend(error_aux(truth, a));
        v
    };
    let mut a = a0.to_vec();
    trace.push(0, &a, &aux(0.0, false, &a));
    let mut s = DMatrix::<f64>::zeros(q, q);
    let mut flags = Vec::new();
    let mut late_fallbacks = 0usize;
    for i in 0..horizon {
        let v = DVector::from_vec(lagged(series, i, q));
        s += &v * v.transpose();
        let m = &s / (i + 1) as f64;
        let eig = m.clone().symmetric_eigen().eigenvalues;
        let (min_eig, max_eig) = (eig.min(), eig.max());
        assert!(min_eig >= -1e-9 * max_eig.abs().max(1e-300), "M_i lost positive semidefiniteness at step {i}");
        let r = series[i + q] - a.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>();
        let svd = m.clone().svd(true, true);
        let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
        let singular = !(smin > 0.0) || smax / smin > cfg.cond_limit;
        if singular && cfg.fallback == Fallback::Lms {
            let mu = gains.at(i)?;
            for (aj, vj) in a.iter_mut().zip(v.iter()) {
                *aj += mu * vj * r;
            }
        } else {
            let eps = if singular { smax / cfg.cond_limit } else { 0.0 };
            let dir = svd.solve(&v, eps).map_err(|e| crate::error::Error::InvalidMatrix(e.to_string()))?;
            let c = cfg.scale / (i + 1) as f64;
            for (aj, dj) in a.iter_mut().zip(dir.iter()) {
                *aj += c * dj * r;
            }
        }
        if singular && i >= cfg.warmup {
            late_fallbacks += 1;
        }
        if !trace.push(i + 1, &a, &aux(min_eig, singular, &a)) {
            flags.push(format!("estimates became non-finite at step {}", i + 1));
            break;
        }
    }
    if late_fallbacks > 0 {
        flags.push(format!("M_i stayed singular on {late_fallbacks} steps after warm-up"));
    }
    Ok(IdentRun::finish(trace, truth.map(<[f64]>::to_vec), flags))
}

/// Batch least-squares AR(q) fit: solves (Σ v_k v_kᵀ)a = Σ v_k y_{k+q}.
pub fn least_squares_ar(series: &[f64], q: usize) -> Result<Vec<f64>> {
    if q == 0 || series.len() < 2 * q + 1 {
        return invalid("series too short for the requested order");
    }
    let n = series.len() - q;
    let x = DMatrix::from_fn(n, q, |i, j| series[i + q - 1 - j]);
    let y = DVector::from_fn(n, |i, _| series[i + q]);
    let svd = x.svd(true, true);
    let sol = svd.solve(&y, 1e-12).map_err(|e| crate::error::Error::InvalidMatrix(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

/// f(x; p) = px for x < p and p²/2 + px/2 otherwise.
pub fn scalar_drift(x: f64, p: f64) -> f64 {
    if x < p {
        p * x
    } else {
        0.5 * p * p + 0.5 * p * x
    }
}

/// χ with (q − p)(f(x;q) − f(x;p)) = |p − q|²χ(x; p, q).
pub fn chi(x: f64, p: f64, q: f64) -> f64 {
    let (lo, hi) = (p.min(q), p.max(q));
    if x < lo {
        x
    } else if x < hi {
        x / 2.0 + (p + q) / 2.0 + hi * (x - hi) / (2.0 * (hi - lo))
    } else {
        x / 2.0 + (p + q) / 2.0
    }
}

/// Lower bound η ≤ χ.
pub fn eta(x: f64, p: f64, q: f64) -> f64 {
    let (lo, hi) = (p.min(q), p.max(q));
    if x < lo {
        x
    } else if x < hi {
        (x + lo) / 2.0
    } else {
        x / 2.0 + (p + q) / 2.0
    }
}

/// y_0 = 0, y_{i+1} = f(y_i; p) + ζ_i with ζ drawn from `noise`.
pub fn scalar_system_series(p: f64, noise: &ProcessSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut z = SampleStream::new(noise.clone(), seed)?;
    let mut y = Vec::with_capacity(n + 1);
    y.push(0.0);
    for i in 0..n {
        y.push(scalar_drift(y[i], p) + z.next_value());
    }
    Ok(y)
}

/// Default ARMA(2,2) noise for the scalar example.
pub fn default_scalar_noise() -> ProcessSpec {
    ProcessSpec::arma(vec![0.5, -0.2], vec![0.3, 0.1], crate::processes::DistributionSpec::normal(0.0, 1.0))
}

/// q_{i+1} = q_i − μ_i(y_{i+1} − f(y_i; q_i)). With the true p supplied the
/// aux column `eta_mean` carries the running mean of η(y_i, p, q_i).
pub fn identify_scalar_nonlinear(series: &[f64], gains: &Gains, q0: f64, horizon: usize, truth: Option<f64>) -> Result<IdentRun> {
    if series.len() < horizon + 1 {
        return invalid("series shorter than horizon + 1");
    }
    let keys: &[&str] = if truth.is_some() { &["eta_mean"] } else { &[] };
    let mut trace = Trace::with_capacity(1, keys, horizon + 1);
    let mut q = q0;
    let mut eta_sum = 0.0;
    trace.push(0, &[q], &truth.map(|_| vec![0.0]).unwrap_or_default());
    for i in 0..horizon {
        if let Some(p) = truth {
            eta_sum += eta(series[i], p, q);
        }
        q -= gains.at(i)? * (series[i + 1] - scalar_drift(series[i], q));
        let aux = truth.map(|_| vec![eta_sum / (i + 1) as f64]).unwrap_or_default();
        if !trace.push(i + 1, &[q], &aux) {
            break;
        }
    }
    Ok(IdentRun::finish(trace, truth.map(|p| vec![p]), vec![]))
}

/// Recovers f in x_{i+1} = f(x_i) + ξ_i by regressing the next observation
/// on the previous one over the first `horizon` transitions.
pub fn identify_nonparametric(series: &[f64], kernel: Kernel, bandwidth: Bandwidth, grid: Vec<f64>, horizon: usize) -> Result<RegressionEstimate> {
    if series.len() < 2 {
        return invalid("need at least two observations");
    }
    let n = horizon.min(series.len() - 1);
    let pairs: Vec<(f64, f64)> = (0..n).map(|i| (series[i], series[i + 1])).collect();
    identify_nonparametric_pairs(&pairs, kernel, bandwidth, grid)
}

/// Same as [`identify_nonparametric`] for transitions pooled from several runs.
pub fn identify_nonparametric_pairs(pairs: &[(f64, f64)], kernel: Kernel, bandwidth: Bandwidth, grid: Vec<f64>) -> Result<RegressionEstimate> {
    let st = recursive_regression(pairs, kernel, bandwidth, grid)?;
    Ok(evaluate_ratio(&st).estimate)
}

/// Noise laws for the nonparametric examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionNoise {
    /// Independent N(0, 1 + sin²i).
    SineVariance,
    /// ξ_n = ζ_n + 0.3ζ_{n−1} − 0.2ζ_{n−2}, ζ iid N(0,1).
    MovingAverage,
    /// Iid N(0, 1.13): the moving-average marginal without the dependence.
    Independent,
}

/// x_0 = 0, x_{i+1} = f(x_i) + ξ_{i+1}.
pub fn transition_series(f: &dyn Fn(f64) -> f64, noise: TransitionNoise, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let (mut z1, mut z2) = (0.0, 0.0);
    let mut x = Vec::with_capacity(n + 1);
    x.push(0.0);
    for i in 1..=n {
        let z = standard_normal(&mut rng);
        let xi = match noise {
            TransitionNoise::SineVariance => (1.0 + (i as f64).sin().powi(2)).sqrt() * z,
            TransitionNoise::MovingAverage => z + 0.3 * z1 - 0.2 * z2,
            TransitionNoise::Independent => 1.13f64.sqrt() * z,
        };
        z2 = z1;
        z1 = z;
        x.push(f(x[i - 1]) + xi);
    }
    x
}

/// Four-segment target of the second nonparametric example.
pub fn piecewise_target(x: f64) -> f64 {
    if x < -2.0 {
        0.8 * x
    } else if x < 0.0 {
        -0.4 - 0.8 * (x + 2.0)
    } else if x <= 0.5 {
        1.0
    } else {
        1.0 - 0.9 * x
    }
}

/// a_N = Σ X_i X_{i+1} / Σ X_i² for an AR(1) series.
pub fn ar1_ratio_estimate(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return invalid("need at least two observations");
    }
    let num: f64 = series.windows(2).map(|w| w[0] * w[1]).sum();
    let den: f64 = series[..series.len() - 1].iter().map(|x| x * x).sum();
    if den == 0.0 {
        return invalid("all observations are zero");
    }
    Ok(num / den)
}

pub type ResidualFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type WeightFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

/// Residual F(window, p̂) with an optional weighting matrix; the update is
/// p̂_{i+1} = p̂_i + μ_i W F over windows of `window_length` observations.
#[derive(Clone)]
pub struct EstimatingFunctionSpec {
    pub residual: ResidualFn,
    pub weight: Option<WeightFn>,
    pub window_length: usize,
    pub dimension: usize,
}

impl fmt::Debug for EstimatingFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatingFunctionSpec")
            .field("window_length", &self.window_length)
            .field("dimension", &self.dimension)
            .field("weighted", &self.weight.is_some())
            .finish()
    }
}

impl EstimatingFunctionSpec {
    /// v(y − pᵀv) for an AR(q) model; window is (y_i, …, y_{i+q}).
    pub fn autoregressive(q: usize) -> Self {
        EstimatingFunctionSpec {
            residual: Arc::new(move |w: &[f64], p: &[f64]| {
                let v: Vec<f64> = (0..q).map(|j| w[q - 1 - j]).collect();
                let r = w[q] - dot(p, &v);
                v.iter().map(|x| x * r).collect()
            }),
            weight: None,
            window_length: q + 1,
            dimension: q,
        }
    }
}

pub fn identify_estimating(series: &[f64], spec: &EstimatingFunctionSpec, gains: &Gains, p0: &[f64], horizon: usize, truth: Option<&[f64]>) -> Result<IdentRun> {
    if p0.len() != spec.dimension || spec.window_length == 0 {
        return invalid("initial estimate does not match the estimating function");
    }
    if series.len() < horizon + spec.window_length - 1 {
        return invalid("series too short for the horizon");
    }
    let keys: &[&str] = if truth.is_some() { &["error"] } else { &[] };
    let mut trace = Trace::with_capacity(spec.dimension, keys, horizon + 1);
    let mut p = p0.to_vec();
    trace.push(0, &p, &error_aux(truth, &p));
    for i in 0..horizon {
        let w = &series[i..i + spec.window_length];
        let mut f = (spec.residual)(w, &p);
        if f.len() != spec.dimension {
            return invalid("estimating function output dimension mismatch");
        }
        if let Some(wf) = &spec.weight {
            f = (wf(w, &p) * DVector::from_vec(f)).iter().copied().collect();
        }
        let mu = gains.at(i)?;
        for (pj, fj) in p.iter_mut().zip(&f) {
            *pj += mu * fj;
        }
        if !trace.push(i + 1, &p, &error_aux(truth, &p)) {
            break;
        }
    }
    Ok(IdentRun::finish(trace, truth.map(<[f64]>::to_vec), vec![]))
}
