//! Laws of large numbers, CLT, LIL and almost-sure CLT simulations, and
//! numeric reports on the series conditions behind them.

use std::sync::Arc;

use serde::Serialize;

use crate::conditions::{
    classify_nonnegative, classify_terms, partial_sums, trailing_oscillation, ConditionEntry, ConditionReport,
    OscillationConfig, TrendConfig, Verdict,
};
use crate::error::{invalid, Result};
use crate::numerics::norm_cdf;
use crate::processes::{open_unit, rng_from_seed, standard_normal, DistributionSpec, ProcessSpec, SampleStream};
use crate::summability::{conjugate_weights, StepSequence, WeightSequence};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Center {
    Known(f64),
    None,
}

pub type RateFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct LlnConfig {
    pub process: ProcessSpec,
    pub weights: WeightSequence,
    pub center: Center,
    /// Optional χ_n multiplying Y_n.
    pub scaling: Option<RateFn>,
    pub horizon: usize,
    pub thin: usize,
}

impl LlnConfig {
    pub fn new(process: ProcessSpec, weights: WeightSequence, horizon: usize) -> Self {
        LlnConfig { process, weights, center: Center::None, scaling: None, horizon, thin: 1 }
    }
}

/// Y_n = Σ_{i<n} α_i (X_{i+1} − c) / Σ_{i<n} α_i, optionally times χ_n,
/// emitted every `thin` steps and at the horizon.
pub fn lln_trace(cfg: &LlnConfig, seed: u64) -> Result<Trace> {
    if cfg.horizon == 0 || cfg.thin == 0 {
        return invalid("horizon and thin must be at least 1");
    }
    let mut stream = SampleStream::new(cfg.process.clone(), seed)?;
    let c = match cfg.center {
        Center::Known(m) => m,
        Center::None => 0.0,
    };
    let mut trace = Trace::with_capacity(1, &[], cfg.horizon / cfg.thin + 1);
    let (mut y, mut cum) = (0.0f64, 0.0f64);
    for i in 0..cfg.horizon {
        let a = cfg.weights.value(i)?;
        if !(a >= 0.0 && a.is_finite()) || (i == 0 && a != 1.0) {
            return invalid(format!("invalid weight α_{i} = {a}"));
        }
        cum += a;
        let mu = if i == 0 { 1.0 } else { a / cum };
        y = (1.0 - mu) * y + mu * (stream.next_value() - c);
        let n = i + 1;
        if n % cfg.thin == 0 || n == cfg.horizon {
            let out = match &cfg.scaling {
                Some(chi) => y * chi(n),
                None => y,
            };
            if !trace.push(n, &[out], &[]) {
                break;
            }
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JamisonPoint {
    pub x: f64,
    pub count: usize,
    pub ratio: f64,
}

/// N(x) = #{1 ≤ n ≤ horizon : Σ_{i<n} α_i / α_{n−1} ≤ x}.
pub fn jamison_capacity(weights: &WeightSequence, x_grid: &[f64], horizon: usize) -> Result<Vec<JamisonPoint>> {
    if x_grid.iter().any(|x| !(*x > 0.0)) {
        return invalid("x grid must be positive");
    }
    let alpha = weights.prefix(horizon)?;
    let mut cum = 0.0;
    let mut r: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            cum += a;
            if a > 0.0 {
                cum / a
            } else {
                f64::INFINITY
            }
        })
        .collect();
    r.sort_by(|a, b| a.total_cmp(b));
    Ok(x_grid
        .iter()
        .map(|&x| {
            let count = r.partition_point(|v| *v <= x);
            JamisonPoint { x, count, ratio: count as f64 / x }
        })
        .collect())
}

/// Σ P(|X_n| > K), Σ E X_n^K and Σ var(X_n^K) over n = 1..=horizon, where
/// X^K = X·1(|X| ≤ K).
pub fn three_series_report<F>(family: F, k: f64, horizon: usize) -> Result<ConditionReport>
where
    F: Fn(usize) -> DistributionSpec,
{
    if !(k > 0.0) {
        return invalid("truncation level K must be positive");
    }
    let mut tail = Vec::with_capacity(horizon);
    let mut mean = Vec::with_capacity(horizon);
    let mut var = Vec::with_capacity(horizon);
    let mut fallback = None;
    for n in 1..=horizon {
        let d = family(n);
        d.validate()?;
        let t = d.truncated_moments(k);
        if !t.closed_form && fallback.is_none() {
            fallback = Some(format!("{d:?}"));
        }
        tail.push(t.tail_prob);
        mean.push(t.mean);
        var.push(t.variance());
    }
    let mut rep = ConditionReport::new(horizon);
    let (tc, oc) = (TrendConfig::default(), OscillationConfig::default());
    rep.insert("tail_probability", classify_terms(&tail, tc, oc));
    rep.insert("truncated_mean", classify_terms(&mean, tc, oc));
    rep.insert("truncated_variance", classify_terms(&var, tc, oc));
    if let Some(d) = fallback {
        rep.warnings.push(format!("no closed form for {d}; used quadrature"));
    }
    Ok(rep)
}

pub type CovFn = Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>;

/// Where var(X_n) and var(X̄_n) come from.
#[derive(Clone)]
pub enum VarianceProfile {
    /// Both given in closed form, indexed from n = 1.
    Analytic { var: RateFn, var_mean: RateFn },
    /// cov(X_i, X_j) for |i − j| ≤ band, zero beyond; X̄_n is the Riesz
    /// mean under the weights conjugate to the steps.
    Covariance { cov: CovFn, band: usize },
    /// Both estimated over independent replicas of a process.
    Replicated { process: ProcessSpec, replicas: usize, seed: u64 },
}

/// Σ_n μ_n² var(X_{n+1}) and Σ_n μ_n √(var(X_{n+1}) var(X̄_n)), n = 1..horizon.
pub fn variance_condition_report(profile: &VarianceProfile, steps: &StepSequence, horizon: usize) -> Result<ConditionReport> {
    if horizon < 2 {
        return invalid("horizon must be at least 2");
    }
    let mu = steps.prefix(horizon + 1)?;
    let mut rep = ConditionReport::new(horizon);
    // var_x[n] = var(X_n), var_bar[n] = var(X̄_n), n = 0..=horizon+1
    let (var_x, var_bar): (Vec<f64>, Vec<f64>) = match profile {
        VarianceProfile::Analytic { var, var_mean } => (
            (0..=horizon + 1).map(|n| if n == 0 { 0.0 } else { var(n) }).collect(),
            (0..=horizon + 1).map(|n| if n == 0 { 0.0 } else { var_mean(n) }).collect(),
        ),
        VarianceProfile::Covariance { cov, band } => {
            let alpha = conjugate_weights(steps, horizon + 1)?.prefix(horizon + 1)?;
            let mut vx = vec![0.0; horizon + 2];
            let mut vb = vec![0.0; horizon + 2];
            let (mut t, mut w) = (0.0, 0.0);
            for n in 1..=horizon + 1 {
                vx[n] = cov(n, n);
                // X̄_n uses α_0..α_{n−1} on X_1..X_n.
                let a = alpha[n - 1];
                let mut cross = 0.0;
                for j in n.saturating_sub(*band).max(1)..n {
                    cross += alpha[j - 1] * cov(n, j);
                }
                t += a * a * cov(n, n) + 2.0 * a * cross;
                w += a;
                vb[n] = t / (w * w);
            }
            (vx, vb)
        }
        VarianceProfile::Replicated { process, replicas, seed } => {
            let r = *replicas;
            if r < 2 {
                return invalid("need at least two replicas");
            }
            let alpha = conjugate_weights(steps, horizon + 1)?.prefix(horizon + 1)?;
            let m = horizon + 2;
            let (mut s1, mut s2, mut b1, mut b2) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            for rep_i in 0..r {
                let mut st = SampleStream::new(process.clone(), crate::processes::mix_seed(*seed, rep_i as u64))?;
                let (mut num, mut w) = (0.0, 0.0);
                for n in 1..=horizon + 1 {
                    let x = st.next_value();
                    s1[n] += x;
                    s2[n] += x * x;
                    num += alpha[n - 1] * x;
                    w += alpha[n - 1];
                    let xb = num / w;
                    b1[n] += xb;
                    b2[n] += xb * xb;
                }
            }
            let rf = r as f64;
            let v = |a: f64, b: f64| ((b - a * a / rf) / (rf - 1.0)).max(0.0);
            let vx: Vec<f64> = (0..m).map(|n| v(s1[n], s2[n])).collect();
            let vb: Vec<f64> = (0..m).map(|n| v(b1[n], b2[n])).collect();
            rep.warnings.push(format!(
                "variances estimated over {r} replicas; relative standard error ≈ {:.3}",
                (2.0 / (rf - 1.0)).sqrt()
            ));
            (vx, vb)
        }
    };
    let first: Vec<f64> = (1..=horizon).map(|n| mu[n] * mu[n] * var_x[n + 1]).collect();
    let second: Vec<f64> = (1..=horizon).map(|n| mu[n] * (var_x[n + 1] * var_bar[n]).max(0.0).sqrt()).collect();
    let tc = TrendConfig::default();
    rep.insert("mu2_var", classify_nonnegative(&partial_sums(first), tc));
    rep.insert("mu_sqrt_var_var_mean", classify_nonnegative(&partial_sums(second), tc));
    Ok(rep)
}

/// log₊x = max(log₂ x, 1).
fn log2_plus(x: f64) -> f64 {
    if x > 0.0 {
        x.log2().max(1.0)
    } else {
        1.0
    }
}

/// log₊(a/b): log₂(a/b) when a/b ≥ 2, else 1 (also when b = 0).
fn log2_plus_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 1.0;
    }
    let r = a / b;
    if r >= 2.0 {
        r.log2()
    } else {
        1.0
    }
}

/// Partial sums of the orthogonal-series coefficient conditions, logs base 2:
/// Σ c_i² log²i, Σ_{k≥3} c_k² log k log₊(1/c_k²), and the dyadic block sum
/// Σ_n Σ_{k∈Z(n)} c_k² (log k)^ε (log₊(2A_n/c_k²))^{2−ε} for each ε given.
pub fn orthogonal_coeff_conditions<C>(c: C, horizon: usize, epsilons: &[f64]) -> Result<ConditionReport>
where
    C: Fn(usize) -> f64,
{
    if horizon < 8 {
        return invalid("horizon must be at least 8");
    }
    if epsilons.iter().any(|e| !(*e > 0.0 && *e <= 2.0)) {
        return invalid("block-condition ε must lie in (0, 2]");
    }
    let coef: Vec<f64> = (0..=horizon).map(|i| if i == 0 { 0.0 } else { c(i) }).collect();
    let c2 = |k: usize| coef[k] * coef[k];
    let tc = TrendConfig::default();
    let mut rep = ConditionReport::new(horizon);
    let rm = partial_sums((1..=horizon).map(|i| c2(i) * (i as f64).log2().powi(2)));
    rep.insert("rademacher_menchoff", classify_nonnegative(&rm, tc));
    let tandori = partial_sums((1..=horizon).map(|k| {
        if k < 3 || c2(k) == 0.0 {
            0.0
        } else {
            c2(k) * (k as f64).log2() * log2_plus(1.0 / c2(k))
        }
    }));
    rep.insert("tandori", classify_nonnegative(&tandori, tc));
    // Complete dyadic blocks only: Z(n) = {2^n+1, …, 2^{n+1}}.
    let mut blocks = 0;
    while (1usize << (blocks + 1)) <= horizon {
        blocks += 1;
    }
    for &eps in epsilons {
        let mut terms = vec![0.0];
        for n in 0..blocks {
            let (lo, hi) = ((1usize << n) + 1, 1usize << (n + 1));
            let a_n: f64 = (lo..=hi).map(c2).sum();
            for k in lo..=hi {
                let v = c2(k);
                terms.push(if v == 0.0 {
                    0.0
                } else {
                    v * (k as f64).log2().powf(eps) * log2_plus_ratio(2.0 * a_n, v).powf(2.0 - eps)
                });
            }
        }
        rep.insert(&format!("moricz_tandori_eps{eps}"), classify_nonnegative(&partial_sums(terms), tc));
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OrthoSystem {
    /// X_i iid standard normal.
    IidNormal,
    /// X_i = ε_i·Y_i/√(E Y²) with Rademacher ε_i and iid Y_i.
    SignedIid(DistributionSpec),
}

/// S_n = Σ_{i≤n} c_i X_i with aux `running_max` = max_{k≤n}|S_k| and
/// `block_max` = max |S_k| over the current dyadic block 2^m ≤ k ≤ n.
pub fn orthogonal_series_trace<C>(c: C, system: &OrthoSystem, seed: u64, horizon: usize) -> Result<Trace>
where
    C: Fn(usize) -> f64,
{
    let scale = match system {
        OrthoSystem::IidNormal => 1.0,
        OrthoSystem::SignedIid(d) => {
            d.validate()?;
            let m = d.mean().unwrap_or(f64::NAN);
            let v = d.variance().unwrap_or(f64::NAN);
            let s = (v + m * m).sqrt();
            if !(s.is_finite() && s > 0.0) {
                return invalid("signed system needs a finite nonzero second moment");
            }
            s
        }
    };
    let mut rng = rng_from_seed(seed);
    let mut trace = Trace::with_capacity(1, &["running_max", "block_max"], horizon);
    let (mut s, mut run_max, mut block_max) = (0.0f64, 0.0f64, 0.0f64);
    for n in 1..=horizon {
        let x = match system {
            OrthoSystem::IidNormal => standard_normal(&mut rng),
            OrthoSystem::SignedIid(d) => {
                let sign = if open_unit(&mut rng) < 0.5 { -1.0 } else { 1.0 };
                sign * d.sample(&mut rng) / scale
            }
        };
        s += c(n) * x;
        if n.is_power_of_two() {
            block_max = 0.0;
        }
        run_max = run_max.max(s.abs());
        block_max = block_max.max(s.abs());
        if !trace.push(n, &[s], &[run_max, block_max]) {
            break;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockHistogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub normal_masses: Vec<f64>,
    pub total_variation: f64,
    /// Standardized sums that fell outside [−4, 4] and were folded into the end bins.
    pub clipped: usize,
}

/// Standardized block sums η = (Σ block − bμ)/(σ√b) over equal-width bins
/// on [−4, 4]; out-of-range values land in the end bins, the normal
/// reference masses likewise absorb the tails.
pub fn clt_block_histogram(dist: &DistributionSpec, block: usize, blocks: usize, bins: usize, seed: u64) -> Result<BlockHistogram> {
    dist.validate()?;
    if block == 0 || blocks == 0 || bins == 0 {
        return invalid("block, blocks and bins must be positive");
    }
    let (Some(m), Some(v)) = (dist.mean(), dist.variance()) else {
        return invalid("block histogram needs a finite mean and variance");
    };
    let sd = v.sqrt() * (block as f64).sqrt();
    let edges = crate::numerics::linspace(-4.0, 4.0, bins + 1);
    let width = 8.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut clipped = 0;
    let mut rng = rng_from_seed(seed);
    for _ in 0..blocks {
        let s: f64 = (0..block).map(|_| dist.sample(&mut rng)).sum();
        let eta = (s - block as f64 * m) / sd;
        let raw = ((eta + 4.0) / width).floor();
        if !(0.0..bins as f64).contains(&raw) {
            clipped += 1;
        }
        counts[raw.clamp(0.0, (bins - 1) as f64) as usize] += 1;
    }
    let masses: Vec<f64> = counts.iter().map(|c| *c as f64 / blocks as f64).collect();
    let cdf_at = |i: usize| match i {
        0 => 0.0,
        i if i == bins => 1.0,
        i => norm_cdf(edges[i]),
    };
    let normal_masses: Vec<f64> = (0..bins).map(|i| cdf_at(i + 1) - cdf_at(i)).collect();
    let total_variation = 0.5 * masses.iter().zip(&normal_masses).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(BlockHistogram { edges, masses, normal_masses, total_variation, clipped })
}

#[derive(Debug, Clone, Serialize)]
pub struct LilReport {
    pub horizon: usize,
    pub epsilon: f64,
    pub sigma: f64,
    /// n ∈ [3, horizon] with |S_n| above the (1+ε) envelope.
    pub exceedances: usize,
    pub last_exceedance: Option<usize>,
    /// Exceedance counts per decade: [3,10), [10,100), [100,1000), …
    pub decade_counts: Vec<usize>,
    /// Fraction of n ∈ [3, horizon] with |S_n| above the (1−ε) envelope.
    pub lower_band_fraction: f64,
}

impl LilReport {
    pub fn exceedances_after(&self, n: usize) -> usize {
        // Whole decades strictly beyond n; n should be a power of ten.
        let d = (n as f64).log10().round() as usize;
        self.decade_counts.iter().skip(d).sum()
    }
}

/// σ√(2n log log n) with log log clamped at 0 for n < e.
pub fn lil_envelope(n: usize, sigma: f64) -> f64 {
    let ll = (n as f64).max(std::f64::consts::E).ln().ln();
    sigma * (2.0 * n as f64 * ll).sqrt()
}

/// Partial sums of centered draws against the (1 ± ε) LIL envelopes.
/// `sigma` overrides the law's standard deviation (needed when it has none).
pub fn lil_envelope_report(dist: &DistributionSpec, sigma: Option<f64>, horizon: usize, epsilon: f64, seed: u64) -> Result<LilReport> {
    dist.validate()?;
    let Some(sigma) = sigma.or_else(|| dist.variance().map(f64::sqrt)) else {
        return invalid("distribution has no variance; pass sigma explicitly");
    };
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid("epsilon must lie in (0,1)");
    }
    let center = dist.mean().unwrap_or(0.0);
    let mut rng = rng_from_seed(seed);
    let decades = (horizon as f64).log10().floor() as usize + 1;
    let mut decade_counts = vec![0usize; decades];
    let (mut s, mut exceed, mut last, mut lower) = (0.0, 0usize, None, 0usize);
    for n in 1..=horizon {
        s += dist.sample(&mut rng) - center;
        if n < 3 {
            continue;
        }
        let env = lil_envelope(n, sigma);
        if s.abs() > (1.0 + epsilon) * env {
            exceed += 1;
            last = Some(n);
            decade_counts[(n as f64).log10().floor() as usize] += 1;
        }
        if s.abs() > (1.0 - epsilon) * env {
            lower += 1;
        }
    }
    Ok(LilReport {
        horizon,
        epsilon,
        sigma,
        exceedances: exceed,
        last_exceedance: last,
        decade_counts,
        lower_band_fraction: lower as f64 / (horizon.saturating_sub(2)).max(1) as f64,
    })
}

pub type WindowFn = Arc<dyn Fn(usize) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
pub enum GcltWindow {
    /// α_k = −∞, β_k = xσ√k.
    HalfLine(f64),
    /// Arbitrary [α_k, β_k).
    Custom(WindowFn),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GcltWeight {
    /// η_k/k.
    Harmonic,
    /// a_k = log₊^ν(k)/k with log₊ = max(ln, 1), normalized by A_n = Σ a_k.
    LogPower(f64),
}

/// Normalizer for the harmonic weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GcltNorm {
    /// 1/ln n (from n = 2).
    Log,
    /// 1/Σ_{k≤n} 1/k.
    Harmonic,
}

#[derive(Clone)]
pub struct GcltConfig {
    pub dist: DistributionSpec,
    pub window: GcltWindow,
    pub weight: GcltWeight,
    pub norm: GcltNorm,
    pub horizon: usize,
    pub thin: usize,
    /// Replace every η_k by 1 (diagnostic of the normalizer alone).
    pub force_unit_eta: bool,
}

impl GcltConfig {
    pub fn half_line(dist: DistributionSpec, x: f64, horizon: usize) -> Self {
        GcltConfig {
            dist,
            window: GcltWindow::HalfLine(x),
            weight: GcltWeight::Harmonic,
            norm: GcltNorm::Log,
            horizon,
            thin: 1,
            force_unit_eta: false,
        }
    }
}

/// Whether p_k came from the exact law of S_k or the normal surrogate.
pub fn gclt_exact_law(dist: &DistributionSpec) -> bool {
    matches!(dist, DistributionSpec::Normal { .. })
}

/// The weighted average of η_k = 1(α_k ≤ S_k < β_k)/p_k (η_k = 1 when
/// p_k = 0). Aux `p` holds p_n; aux `exact` is 1 when p_n is exact.
pub fn gclt_as_trace(cfg: &GcltConfig, seed: u64) -> Result<Trace> {
    cfg.dist.validate()?;
    if cfg.horizon < 2 || cfg.thin == 0 {
        return invalid("horizon must be at least 2 and thin positive");
    }
    let Some(var) = cfg.dist.variance() else {
        return invalid("the almost-sure CLT needs a finite variance");
    };
    let sigma = var.sqrt();
    let mean = cfg.dist.mean().unwrap_or(0.0);
    let exact = gclt_exact_law(&cfg.dist);
    let mut rng = rng_from_seed(seed);
    let mut trace = Trace::with_capacity(1, &["p", "exact"], cfg.horizon / cfg.thin + 1);
    let (mut s, mut acc, mut wsum) = (0.0f64, 0.0f64, 0.0f64);
    for k in 1..=cfg.horizon {
        s += cfg.dist.sample(&mut rng);
        let kf = k as f64;
        let (lo, hi) = match &cfg.window {
            GcltWindow::HalfLine(x) => (f64::NEG_INFINITY, x * sigma * kf.sqrt()),
            GcltWindow::Custom(f) => f(k),
        };
        // S_k ~ N(k·mean, k·σ²) exactly for normal increments; otherwise the CLT surrogate.
        let z = |b: f64| if b.is_infinite() { b.signum() * f64::INFINITY } else { (b - kf * mean) / (sigma * kf.sqrt()) };
        let cdf = |t: f64| if t == f64::NEG_INFINITY { 0.0 } else if t == f64::INFINITY { 1.0 } else { norm_cdf(t) };
        let p = (cdf(z(hi)) - cdf(z(lo))).max(0.0);
        let eta = if cfg.force_unit_eta || p == 0.0 {
            1.0
        } else if s >= lo && s < hi {
            1.0 / p
        } else {
            0.0
        };
        let w = match cfg.weight {
            GcltWeight::Harmonic => 1.0 / kf,
            GcltWeight::LogPower(nu) => kf.ln().max(1.0).powf(nu) / kf,
        };
        acc += w * eta;
        wsum += w;
        let norm = match (cfg.weight, cfg.norm) {
            (GcltWeight::Harmonic, GcltNorm::Log) => kf.ln(),
            _ => wsum,
        };
        if norm > 0.0 && (k % cfg.thin == 0 || k == cfg.horizon) && !trace.push(k, &[acc / norm], &[p, if exact { 1.0 } else { 0.0 }]) {
            break;
        }
    }
    Ok(trace)
}

/// Verdict helper used by reports on simulated partial sums.
pub fn oscillation_entry(partial: &[f64], cfg: OscillationConfig) -> ConditionEntry {
    let osc = trailing_oscillation(partial, cfg.window_frac);
    ConditionEntry {
        value: partial.last().copied().unwrap_or(0.0),
        trend: osc,
        verdict: if osc < cfg.tau { Verdict::Converging } else { Verdict::Diverging },
        method: "trailing-oscillation",
    }
}
