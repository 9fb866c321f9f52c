//! Seeded random sources: iid families and AR/ARMA series.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{integrate, norm_cdf, norm_pdf};

/// The generator behind every stream: ChaCha8 seeded from a 64-bit seed.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of replica `r` under base `seed` (splitmix64 finalizer).
pub fn mix_seed(seed: u64, r: u64) -> u64 {
    let mut z = seed ^ r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0,1).
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by the Marsaglia polar method (second variate dropped).
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = 2.0 * open_unit(rng) - 1.0;
        let v = 2.0 * open_unit(rng) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Normal { mean: f64, stddev: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    /// cdf 1 − x^{−γ} on [1, ∞).
    Pareto { gamma: f64 },
    /// Pareto magnitude with an independent fair sign.
    SignedPareto { gamma: f64 },
    /// sgn(C)·√|C| for standard Cauchy C.
    SqrtCauchy,
    Discrete { points: Vec<f64>, probs: Vec<f64> },
    NormalMixture { weights: Vec<f64>, means: Vec<f64>, stddevs: Vec<f64> },
}

/// Truncated quantities for the three-series test at level K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedMoments {
    /// P(|X| > K)
    pub tail_prob: f64,
    /// E[X·1(|X| ≤ K)]
    pub mean: f64,
    /// E[X²·1(|X| ≤ K)]
    pub second: f64,
    /// False when computed by quadrature.
    pub closed_form: bool,
}

impl TruncatedMoments {
    pub fn variance(&self) -> f64 {
        (self.second - self.mean * self.mean).max(0.0)
    }
}

fn check_probs(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return invalid(format!("{what} must be nonnegative and nonempty"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return invalid(format!("{what} sum to {s}, not 1"));
    }
    Ok(())
}

impl DistributionSpec {
    pub fn normal(mean: f64, stddev: f64) -> Self {
        DistributionSpec::Normal { mean, stddev }
    }

    pub fn validate(&self) -> Result<()> {
        use DistributionSpec::*;
        match self {
            Normal { mean, stddev } => {
                if !mean.is_finite() || !(*stddev > 0.0 && stddev.is_finite()) {
                    return invalid("normal needs finite mean and stddev > 0");
                }
            }
            Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return invalid("exponential rate must be > 0");
                }
            }
            Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return invalid("uniform needs lo < hi");
                }
            }
            Pareto { gamma } | SignedPareto { gamma } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return invalid("Pareto gamma must be > 0");
                }
            }
            SqrtCauchy => {}
            Discrete { points, probs } => {
                if points.len() != probs.len() || points.iter().any(|p| !p.is_finite()) {
                    return invalid("discrete points and probs must match and be finite");
                }
                check_probs(probs, "discrete probabilities")?;
            }
            NormalMixture { weights, means, stddevs } => {
                if weights.len() != means.len() || weights.len() != stddevs.len() {
                    return invalid("mixture component lists must have equal length");
                }
                if stddevs.iter().any(|s| !(*s > 0.0)) || means.iter().any(|m| !m.is_finite()) {
                    return invalid("mixture needs finite means and stddevs > 0");
                }
                check_probs(weights, "mixture weights")?;
            }
        }
        Ok(())
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        use DistributionSpec::*;
        match self {
            Normal { mean, stddev } => mean + stddev * standard_normal(rng),
            Exponential { rate } => -open_unit(rng).ln() / rate,
            Uniform { lo, hi } => lo + (hi - lo) * open_unit(rng),
            Pareto { gamma } => open_unit(rng).powf(-1.0 / gamma),
            SignedPareto { gamma } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * open_unit(rng).powf(-1.0 / gamma)
            }
            SqrtCauchy => {
                let c = (PI * (open_unit(rng) - 0.5)).tan();
                c.signum() * c.abs().sqrt()
            }
            Discrete { points, probs } => points[pick(probs, open_unit(rng))],
            NormalMixture { weights, means, stddevs } => {
                let k = pick(weights, open_unit(rng));
                means[k] + stddevs[k] * standard_normal(rng)
            }
        }
    }

    /// Expectation when it exists.
    pub fn mean(&self) -> Option<f64> {
        use DistributionSpec::*;
        match self {
            Normal { mean, .. } => Some(*mean),
            Exponential { rate } => Some(1.0 / rate),
            Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            Pareto { gamma } => (*gamma > 1.0).then(|| gamma / (gamma - 1.0)),
            SignedPareto { gamma } => (*gamma > 1.0).then_some(0.0),
            SqrtCauchy => Some(0.0),
            Discrete { points, probs } => Some(points.iter().zip(probs).map(|(x, p)| x * p).sum()),
            NormalMixture { weights, means, .. } => Some(weights.iter().zip(means).map(|(w, m)| w * m).sum()),
        }
    }

    /// Variance when it is finite.
    pub fn variance(&self) -> Option<f64> {
        use DistributionSpec::*;
        match self {
            Normal { stddev, .. } => Some(stddev * stddev),
            Exponential { rate } => Some(1.0 / (rate * rate)),
            Uniform { lo, hi } => Some((hi - lo).powi(2) / 12.0),
            Pareto { gamma } => (*gamma > 2.0).then(|| gamma / ((gamma - 1.0).powi(2) * (gamma - 2.0))),
            SignedPareto { gamma } => (*gamma > 2.0).then(|| gamma / (gamma - 2.0)),
            SqrtCauchy => None,
            Discrete { points, probs } => {
                let m = self.mean()?;
                Some(points.iter().zip(probs).map(|(x, p)| p * (x - m).powi(2)).sum())
            }
            NormalMixture { weights, means, stddevs } => {
                let m = self.mean()?;
                Some(
                    weights
                        .iter()
                        .zip(means.iter().zip(stddevs))
                        .map(|(w, (mu, s))| w * (s * s + (mu - m).powi(2)))
                        .sum(),
                )
            }
        }
    }

    /// Density; `None` for the discrete family.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        use DistributionSpec::*;
        Some(match self {
            Normal { mean, stddev } => norm_pdf((x - mean) / stddev) / stddev,
            Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Pareto { gamma } => {
                if x < 1.0 {
                    0.0
                } else {
                    gamma * x.powf(-gamma - 1.0)
                }
            }
            SignedPareto { gamma } => {
                if x.abs() < 1.0 {
                    0.0
                } else {
                    0.5 * gamma * x.abs().powf(-gamma - 1.0)
                }
            }
            SqrtCauchy => 2.0 * x.abs() / (PI * (1.0 + x.powi(4))),
            Discrete { .. } => return None,
            NormalMixture { weights, means, stddevs } => weights
                .iter()
                .zip(means.iter().zip(stddevs))
                .map(|(w, (m, s))| w * norm_pdf((x - m) / s) / s)
                .sum(),
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        use DistributionSpec::*;
        match self {
            Normal { mean, stddev } => norm_cdf((x - mean) / stddev),
            Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
            Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Pareto { gamma } => {
                if x < 1.0 {
                    0.0
                } else {
                    1.0 - x.powf(-gamma)
                }
            }
            SignedPareto { gamma } => {
                if x <= -1.0 {
                    0.5 * (-x).powf(-gamma)
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0 - 0.5 * x.powf(-gamma)
                }
            }
            SqrtCauchy => 0.5 + (x.signum() * x * x).atan() / PI,
            Discrete { points, probs } => points.iter().zip(probs).filter(|(p, _)| **p <= x).map(|(_, q)| q).sum(),
            NormalMixture { weights, means, stddevs } => weights
                .iter()
                .zip(means.iter().zip(stddevs))
                .map(|(w, (m, s))| w * norm_cdf((x - m) / s))
                .sum(),
        }
    }

    /// Truncated moments at level K > 0, in closed form for the normal,
    /// exponential, uniform, Pareto and discrete families; otherwise by
    /// quadrature of the density (`closed_form = false`).
    pub fn truncated_moments(&self, k: f64) -> TruncatedMoments {
        use DistributionSpec::*;
        let closed = |tail_prob, mean, second| TruncatedMoments { tail_prob, mean, second, closed_form: true };
        match self {
            Normal { mean, stddev } => {
                let (a, b) = ((-k - mean) / stddev, (k - mean) / stddev);
                let p_in = norm_cdf(b) - norm_cdf(a);
                let (pa, pb) = (norm_pdf(a), norm_pdf(b));
                let ez = pa - pb;
                let ez2 = p_in + a * pa - b * pb;
                closed(
                    1.0 - p_in,
                    mean * p_in + stddev * ez,
                    mean * mean * p_in + 2.0 * mean * stddev * ez + stddev * stddev * ez2,
                )
            }
            Exponential { rate } => {
                let l = *rate;
                let e = (-l * k).exp();
                closed(e, (1.0 - e * (1.0 + l * k)) / l, (2.0 - e * (l * l * k * k + 2.0 * l * k + 2.0)) / (l * l))
            }
            Uniform { lo, hi } => {
                let (a, b) = (lo.max(-k), hi.min(k));
                let w = hi - lo;
                if a >= b {
                    closed(1.0, 0.0, 0.0)
                } else {
                    closed(1.0 - (b - a) / w, (b * b - a * a) / (2.0 * w), (b.powi(3) - a.powi(3)) / (3.0 * w))
                }
            }
            Pareto { gamma } => {
                let g = *gamma;
                if k < 1.0 {
                    return closed(1.0, 0.0, 0.0);
                }
                let m1 = if (g - 1.0).abs() < 1e-12 { g * k.ln() } else { g * (k.powf(1.0 - g) - 1.0) / (1.0 - g) };
                let m2 = if (g - 2.0).abs() < 1e-12 { g * k.ln() } else { g * (k.powf(2.0 - g) - 1.0) / (2.0 - g) };
                closed(k.powf(-g), m1, m2)
            }
            Discrete { points, probs } => {
                let mut t = closed(0.0, 0.0, 0.0);
                for (x, p) in points.iter().zip(probs) {
                    if x.abs() > k {
                        t.tail_prob += p;
                    } else {
                        t.mean += p * x;
                        t.second += p * x * x;
                    }
                }
                t
            }
            SignedPareto { .. } | SqrtCauchy | NormalMixture { .. } => {
                let f = |x: f64| self.pdf(x).unwrap_or(0.0);
                let cuts = [-k, -1.0f64.min(k), 0.0, 1.0f64.min(k), k];
                let mut mass = 0.0;
                let mut m1 = 0.0;
                let mut m2 = 0.0;
                for w in cuts.windows(2) {
                    if w[1] > w[0] {
                        mass += integrate(f, w[0], w[1], 1e-12);
                        m1 += integrate(|x| x * f(x), w[0], w[1], 1e-12);
                        m2 += integrate(|x| x * x * f(x), w[0], w[1], 1e-12);
                    }
                }
                TruncatedMoments { tail_prob: (1.0 - mass).max(0.0), mean: m1, second: m2, closed_form: false }
            }
        }
    }
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn default_zero() -> usize {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Iid {
        dist: DistributionSpec,
    },
    /// y_t = Σ_j coeffs[j]·y_{t−1−j} + e_t.
    Ar {
        coeffs: Vec<f64>,
        noise: DistributionSpec,
        /// y_{−q}..y_{−1}, oldest first; zeros when absent.
        #[serde(default)]
        init: Option<Vec<f64>>,
        #[serde(default = "default_zero")]
        burn_in: usize,
    },
    /// y_t = Σ_j ar[j]·y_{t−1−j} + e_t + Σ_j ma[j]·e_{t−1−j}; past noise starts at 0.
    Arma {
        ar: Vec<f64>,
        ma: Vec<f64>,
        noise: DistributionSpec,
        #[serde(default)]
        init: Option<Vec<f64>>,
        #[serde(default = "default_zero")]
        burn_in: usize,
    },
}

impl ProcessSpec {
    pub fn iid(dist: DistributionSpec) -> Self {
        ProcessSpec::Iid { dist }
    }

    pub fn ar(coeffs: Vec<f64>, noise: DistributionSpec) -> Self {
        ProcessSpec::Ar { coeffs, noise, init: None, burn_in: 0 }
    }

    pub fn arma(ar: Vec<f64>, ma: Vec<f64>, noise: DistributionSpec) -> Self {
        ProcessSpec::Arma { ar, ma, noise, init: None, burn_in: 0 }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ProcessSpec = serde_json::from_str(s).map_err(|e| crate::error::Error::Config {
            key: "spec".into(),
            msg: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::Iid { dist } => dist.validate(),
            ProcessSpec::Ar { coeffs, noise, init, .. } => {
                check_coeffs(coeffs, init.as_deref(), coeffs.len())?;
                noise.validate()
            }
            ProcessSpec::Arma { ar, ma, noise, init, .. } => {
                check_coeffs(ar, init.as_deref(), ar.len())?;
                if ma.iter().any(|v| !v.is_finite()) {
                    return invalid("MA coefficients must be finite");
                }
                noise.validate()
            }
        }
    }
}

fn check_coeffs(c: &[f64], init: Option<&[f64]>, order: usize) -> Result<()> {
    if c.iter().any(|v| !v.is_finite()) {
        return invalid("AR coefficients must be finite");
    }
    if let Some(i) = init {
        if i.len() != order {
            return invalid(format!("init has length {} but the AR order is {order}", i.len()));
        }
    }
    Ok(())
}

/// A stateful, single-consumer stream of draws from a process.
#[derive(Debug, Clone)]
pub struct SampleStream {
    spec: ProcessSpec,
    seed: u64,
    position: u64,
    rng: SimRng,
    // Most recent values last.
    past_y: Vec<f64>,
    past_e: Vec<f64>,
}

impl SampleStream {
    pub fn new(spec: ProcessSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (past_y, past_e, burn) = match &spec {
            ProcessSpec::Iid { .. } => (vec![], vec![], 0),
            ProcessSpec::Ar { coeffs, init, burn_in, .. } => {
                (init.clone().unwrap_or_else(|| vec![0.0; coeffs.len()]), vec![], *burn_in)
            }
            ProcessSpec::Arma { ar, ma, init, burn_in, .. } => {
                (init.clone().unwrap_or_else(|| vec![0.0; ar.len()]), vec![0.0; ma.len()], *burn_in)
            }
        };
        let mut s = SampleStream { spec, seed, position: 0, rng: rng_from_seed(seed), past_y, past_e };
        for _ in 0..burn {
            s.draw();
        }
        s.position = 0;
        Ok(s)
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    fn draw(&mut self) -> f64 {
        self.position += 1;
        match &self.spec {
            ProcessSpec::Iid { dist } => dist.sample(&mut self.rng),
            ProcessSpec::Ar { coeffs, noise, .. } => {
                let e = noise.sample(&mut self.rng);
                let q = coeffs.len();
                let mut y = e;
                for (j, c) in coeffs.iter().enumerate() {
                    y += c * self.past_y[q - 1 - j];
                }
                if q > 0 {
                    self.past_y.remove(0);
                    self.past_y.push(y);
                }
                y
            }
            ProcessSpec::Arma { ar, ma, noise, .. } => {
                let e = noise.sample(&mut self.rng);
                let (p, q) = (ar.len(), ma.len());
                let mut y = e;
                for (j, c) in ar.iter().enumerate() {
                    y += c * self.past_y[p - 1 - j];
                }
                for (j, c) in ma.iter().enumerate() {
                    y += c * self.past_e[q - 1 - j];
                }
                if p > 0 {
                    self.past_y.remove(0);
                    self.past_y.push(y);
                }
                if q > 0 {
                    self.past_e.remove(0);
                    self.past_e.push(e);
                }
                y
            }
        }
    }

    pub fn next_value(&mut self) -> f64 {
        self.draw()
    }

    /// The next `n` values.
    pub fn sample(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw()).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub stationary: bool,
    pub root_moduli: Vec<f64>,
    pub warning: Option<String>,
}

/// Roots of x^q − γ_0 x^{q−1} − … − γ_{q−1} as eigenvalues of the
/// companion matrix; stationary iff every modulus is below 1.
pub fn ar_stationarity(coeffs: &[f64]) -> Result<StationarityReport> {
    let q = coeffs.len();
    if q == 0 {
        return invalid("need at least one AR coefficient");
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return invalid("AR coefficients must be finite");
    }
    let mut m = DMatrix::<f64>::zeros(q, q);
    for (j, c) in coeffs.iter().enumerate() {
        m[(0, j)] = *c;
    }
    for i in 1..q {
        m[(i, i - 1)] = 1.0;
    }
    let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let warning = if q > 25 || scale > 1e8 || moduli.iter().any(|v| !v.is_finite()) {
        Some(format!("companion matrix of order {q} with coefficient scale {scale:e} may be ill-conditioned"))
    } else {
        None
    };
    Ok(StationarityReport { stationary: moduli.iter().all(|r| *r < 1.0), root_moduli: moduli, warning })
}

/// K̂(k) = (1/(n−k)) Σ (x_i − x̄)(x_{i+k} − x̄), k = 0..=max_lag.
pub fn empirical_autocovariance(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag >= n {
        return invalid(format!("max_lag {max_lag} must be below the length {n}"));
    }
    let m = x.iter().sum::<f64>() / n as f64;
    Ok((0..=max_lag)
        .map(|k| (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / (n - k) as f64)
        .collect())
}

/// Strict running-maximum records as (1-based index, value).
pub fn record_table(x: &[f64]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, &v) in x.iter().enumerate() {
        if out.last().is_none_or(|&(_, m)| v > m) {
            out.push((i + 1, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_discrete() {
        let mut s = SampleStream::new(
            ProcessSpec::iid(DistributionSpec::Discrete { points: vec![0.0], probs: vec![1.0] }),
            3,
        )
        .unwrap();
        assert_eq!(s.sample(5), vec![0.0; 5]);
        assert_eq!(s.position(), 5);
    }

    #[test]
    fn heavy_and_light_means() {
        let mut s = SampleStream::new(ProcessSpec::iid(DistributionSpec::Pareto { gamma: 1.25 }), 1).unwrap();
        let m = s.sample(1_000_000).iter().sum::<f64>() / 1e6;
        assert!((m - 5.0).abs() <= 0.5, "pareto mean {m}");
        let mut s = SampleStream::new(ProcessSpec::iid(DistributionSpec::Exponential { rate: 1.0 }), 2).unwrap();
        let m = s.sample(100_000).iter().sum::<f64>() / 1e5;
        assert!((m - 1.0).abs() <= 0.02);
    }

    #[test]
    fn mixture_mean() {
        let d = DistributionSpec::NormalMixture { weights: vec![0.25, 0.75], means: vec![0.0, 4.0], stddevs: vec![1.0, 0.5] };
        let mut s = SampleStream::new(ProcessSpec::iid(d), 4).unwrap();
        let m = s.sample(100_000).iter().sum::<f64>() / 1e5;
        assert!((m - 3.0).abs() <= 0.05);
    }

    #[test]
    fn pareto_support_and_sign_balance() {
        let mut s = SampleStream::new(ProcessSpec::iid(DistributionSpec::Pareto { gamma: 0.7 }), 5).unwrap();
        assert!(s.sample(100_000).iter().all(|v| *v >= 1.0));
        let mut s = SampleStream::new(ProcessSpec::iid(DistributionSpec::SignedPareto { gamma: 1.05 }), 6).unwrap();
        let pos = s.sample(1_000_000).iter().filter(|v| **v > 0.0).count() as f64 / 1e6;
        assert!((pos - 0.5).abs() <= 3.0 / 1000.0);
    }

    #[test]
    fn stationarity_examples() {
        let r = ar_stationarity(&[0.0]).unwrap();
        assert!(r.stationary && r.root_moduli[0] == 0.0);
        assert!(ar_stationarity(&[1.6, -1.475, 0.7605]).unwrap().stationary);
        let r = ar_stationarity(&[2.0]).unwrap();
        assert!(!r.stationary && (r.root_moduli[0] - 2.0).abs() < 1e-12);
        assert!(ar_stationarity(&[]).is_err());
    }

    #[test]
    fn autocovariance_examples() {
        assert!(empirical_autocovariance(&[2.0; 50], 5).unwrap().iter().all(|v| *v == 0.0));
        let mut s = SampleStream::new(ProcessSpec::iid(DistributionSpec::normal(0.0, 1.0)), 7).unwrap();
        let k = empirical_autocovariance(&s.sample(100_000), 5).unwrap();
        assert!((k[0] - 1.0).abs() <= 0.05);
        assert!(k[1..].iter().all(|v| v.abs() <= 0.02));
        let mut s = SampleStream::new(ProcessSpec::ar(vec![0.5], DistributionSpec::normal(0.0, 1.0)), 8).unwrap();
        let k = empirical_autocovariance(&s.sample(100_000), 1).unwrap();
        assert!((k[1] / k[0] - 0.5).abs() <= 0.03);
        assert!(empirical_autocovariance(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn records() {
        assert_eq!(record_table(&[1.0, 2.0, 3.0]), vec![(1, 1.0), (2, 2.0), (3, 3.0)]);
        assert_eq!(record_table(&[3.0, 1.0, 4.0, 1.0, 5.0]), vec![(1, 3.0), (3, 4.0), (5, 5.0)]);
        assert_eq!(record_table(&[5.0, 4.0, 3.0]), vec![(1, 5.0)]);
    }

    #[test]
    fn ar_replays_noise() {
        let noise = DistributionSpec::normal(0.0, 1.0);
        let coeffs = vec![1.6, -1.475, 0.7605];
        let init = vec![0.3, -0.2, 0.1];
        let spec = ProcessSpec::Ar { coeffs: coeffs.clone(), noise: noise.clone(), init: Some(init.clone()), burn_in: 0 };
        let y = SampleStream::new(spec, 11).unwrap().sample(2000);
        let e = SampleStream::new(ProcessSpec::iid(noise), 11).unwrap().sample(2000);
        let mut hist = init;
        for t in 0..2000 {
            let q = hist.len();
            let pred: f64 = coeffs.iter().enumerate().map(|(j, c)| c * hist[q - 1 - j]).sum::<f64>() + e[t];
            assert!((pred - y[t]).abs() <= 1e-12 * (1.0 + y[t].abs()));
            hist.push(y[t]);
        }
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let spec = ProcessSpec::arma(vec![0.5, -0.2], vec![0.3, 0.1], DistributionSpec::normal(0.0, 1.0));
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(ProcessSpec::from_json(&s).unwrap(), spec);
        assert!(ProcessSpec::from_json(r#"{"kind":"iid","dist":{"family":"normal","mean":0,"stddev":-1}}"#).is_err());
        assert!(ProcessSpec::from_json(r#"{"kind":"iid","dist":{"family":"normal","mean":0,"stddev":1,"extra":2}}"#).is_err());
        assert!(ProcessSpec::from_json(r#"{"kind":"ar","coeffs":[0.5],"noise":{"family":"sqrt_cauchy"},"init":[1,2]}"#).is_err());
    }

    #[test]
    fn truncated_moments_match_quadrature() {
        let k = 1.7;
        for d in [
            DistributionSpec::normal(0.4, 1.3),
            DistributionSpec::Exponential { rate: 0.8 },
            DistributionSpec::Uniform { lo: -3.0, hi: 1.0 },
            DistributionSpec::Pareto { gamma: 1.5 },
        ] {
            let t = d.truncated_moments(k);
            assert!(t.closed_form);
            let f = |x: f64| d.pdf(x).unwrap();
            let cuts = [-k, -1.0, 0.0, 1.0, k];
            let (mut p, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for w in cuts.windows(2) {
                p += integrate(f, w[0], w[1], 1e-13);
                m1 += integrate(|x| x * f(x), w[0], w[1], 1e-13);
                m2 += integrate(|x| x * x * f(x), w[0], w[1], 1e-13);
            }
            assert!((t.tail_prob - (1.0 - p)).abs() < 1e-8, "{d:?}");
            assert!((t.mean - m1).abs() < 1e-8, "{d:?}");
            assert!((t.second - m2).abs() < 1e-8, "{d:?}");
        }
        assert!(!DistributionSpec::SqrtCauchy.truncated_moments(2.0).closed_form);
    }

    #[test]
    fn cdfs_are_consistent_with_densities() {
        for d in [
            DistributionSpec::SqrtCauchy,
            DistributionSpec::SignedPareto { gamma: 1.5 },
            DistributionSpec::NormalMixture { weights: vec![0.25, 0.75], means: vec![0.0, 4.0], stddevs: vec![1.0, 0.5] },
        ] {
            let (a, b) = (1.2, 3.4);
            let mass = integrate(|x| d.pdf(x).unwrap(), a, b, 1e-12);
            assert!((d.cdf(b) - d.cdf(a) - mass).abs() < 1e-8, "{d:?}");
        }
    }

    #[test]
    fn mix_seed_distinct() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|r| mix_seed(42, r)).collect();
        assert_eq!(s.len(), 1000);
        assert_eq!(mix_seed(42, 3), mix_seed(42, 3));
    }
}
