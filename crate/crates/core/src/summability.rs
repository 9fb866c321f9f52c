//! Cesàro and Riesz means, and the conjugacy between Riesz weights
//! {α_i} and recursion steps {μ_i}.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::Tolerance;
use crate::trace::Trace;

type IndexFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Generator(IndexFn),
    Prefix(Arc<[f64]>),
}

impl Source {
    fn get(&self, i: usize) -> Result<f64> {
        match self {
            Source::Generator(f) => Ok(f(i)),
            Source::Prefix(v) => v
                .get(i)
                .copied()
                .ok_or(Error::OutOfRange { index: i, len: v.len() }),
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Source::Generator(_) => None,
            Source::Prefix(v) => Some(v.len()),
        }
    }
}

/// Riesz weights α_0 = 1, α_i ≥ 0. Either a pure index generator or a
/// finite prefix; values are only materialized up to an explicit horizon.
#[derive(Clone)]
pub struct WeightSequence {
    source: Source,
    label: String,
}

impl fmt::Debug for WeightSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightSequence({})", self.label)
    }
}

impl WeightSequence {
    /// α ≡ 1.
    pub fn constant() -> Self {
        Self::from_fn("const", |_| 1.0)
    }

    /// α_i = i + 1.
    pub fn linear() -> Self {
        Self::from_fn("linear", |i| (i + 1) as f64)
    }

    /// α_i = (i + 1)².
    pub fn square() -> Self {
        Self::from_fn("square", |i| ((i + 1) as f64).powi(2))
    }

    /// α_i = (i + 1)^p, p ≥ 0.
    pub fn power(p: f64) -> Self {
        Self::from_fn(format!("power:{p}"), move |i| ((i + 1) as f64).powf(p))
    }

    /// α_i = e^{a i}. Overflows once a·i exceeds ~709.
    pub fn exponential(a: f64) -> Self {
        Self::from_fn(format!("exp:{a}"), move |i| (a * i as f64).exp())
    }

    /// The weights conjugate to the constant step q: (1, q/(1−q), q/(1−q)², …).
    pub fn geometric(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return invalid(format!("geometric ratio must lie in (0,1), got {q}"));
        }
        Ok(Self::from_fn(format!("geom:{q}"), move |i| {
            if i == 0 {
                1.0
            } else {
                q / (1.0 - q).powi(i as i32)
            }
        }))
    }

    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        WeightSequence { source: Source::Generator(Arc::new(f)), label: label.into() }
    }

    /// A finite prefix; validated eagerly.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        validate_weights(&values)?;
        Ok(WeightSequence { source: Source::Prefix(values.into()), label: "values".into() })
    }

    /// Parses the CLI family syntax: `const`, `linear`, `square`, `exp:a`, `geom:q`, `power:p`.
    pub fn parse_family(spec: &str) -> Result<Self> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::InvalidArgument(format!("family `{name}` needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad parameter in `{spec}`: {e}")))
        };
        match name {
            "const" => Ok(Self::constant()),
            "linear" => Ok(Self::linear()),
            "square" => Ok(Self::square()),
            "exp" => Ok(Self::exponential(num(arg)?)),
            "geom" => Self::geometric(num(arg)?),
            "power" => Ok(Self::power(num(arg)?)),
            _ => invalid(format!("unknown weight family `{spec}`")),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Length of a finite prefix, `None` for generators.
    pub fn len_hint(&self) -> Option<usize> {
        self.source.len()
    }

    pub fn value(&self, i: usize) -> Result<f64> {
        self.source.get(i)
    }

    /// Materializes α_0..α_{n−1}, checking the invariants.
    pub fn prefix(&self, n: usize) -> Result<Vec<f64>> {
        let v = (0..n).map(|i| self.source.get(i)).collect::<Result<Vec<_>>>()?;
        validate_weights(&v)?;
        Ok(v)
    }
}

fn validate_weights(v: &[f64]) -> Result<()> {
    if let Some(&a0) = v.first() {
        if a0 != 1.0 {
            return invalid(format!("α_0 must equal 1, got {a0}"));
        }
    }
    for (i, &a) in v.iter().enumerate() {
        if !a.is_finite() || a < 0.0 {
            return invalid(format!("α_{i} = {a} is not a finite nonnegative weight"));
        }
    }
    Ok(())
}

/// Steps μ_0 = 1, μ_i ∈ (0,1) for i ≥ 1.
#[derive(Clone)]
pub struct StepSequence {
    source: Source,
    label: String,
}

impl fmt::Debug for StepSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StepSequence({})", self.label)
    }
}

impl StepSequence {
    /// μ_i = 1/(i+1).
    pub fn harmonic() -> Self {
        Self::from_fn("harmonic", |i| 1.0 / (i + 1) as f64)
    }

    /// μ_i = (i+1)^{−γ}, γ > 0.
    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return invalid(format!("step exponent must be positive, got {gamma}"));
        }
        Ok(Self::from_fn(format!("power:{gamma}"), move |i| ((i + 1) as f64).powf(-gamma)))
    }

    /// μ_0 = 1, then μ_i = q.
    pub fn constant(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return invalid(format!("constant step must lie in (0,1), got {q}"));
        }
        Ok(Self::from_fn(format!("const:{q}"), move |i| if i == 0 { 1.0 } else { q }))
    }

    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        StepSequence { source: Source::Generator(Arc::new(f)), label: label.into() }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        validate_steps(&values)?;
        Ok(StepSequence { source: Source::Prefix(values.into()), label: "values".into() })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len_hint(&self) -> Option<usize> {
        self.source.len()
    }

    pub fn value(&self, i: usize) -> Result<f64> {
        self.source.get(i)
    }

    pub fn prefix(&self, n: usize) -> Result<Vec<f64>> {
        let v = (0..n).map(|i| self.source.get(i)).collect::<Result<Vec<_>>>()?;
        validate_steps(&v)?;
        Ok(v)
    }
}

fn validate_steps(v: &[f64]) -> Result<()> {
    if let Some(&m0) = v.first() {
        if m0 != 1.0 {
            return invalid(format!("μ_0 must equal 1, got {m0}"));
        }
    }
    for (i, &m) in v.iter().enumerate().skip(1) {
        if m == 0.0 || m == 1.0 {
            return Err(Error::DegenerateStep(i));
        }
        if !(m > 0.0 && m < 1.0) {
            return invalid(format!("μ_{i} = {m} is outside (0,1)"));
        }
    }
    Ok(())
}

/// A_n^α by the product recurrence A_n = A_{n−1}(n+α)/n.
pub fn cesaro_coefficient(n: usize, alpha: f64) -> Result<f64> {
    if alpha < 0.0 && alpha.fract() == 0.0 {
        return Err(Error::CesaroPole(alpha));
    }
    Ok(cesaro_row(n, alpha)[n])
}

// A_0^a..A_n^a, valid at poles too (where the binomial is still defined).
fn cesaro_row(n: usize, a: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut c = 1.0;
    out.push(c);
    for m in 1..=n {
        c *= (m as f64 + a) / m as f64;
        out.push(c);
    }
    out
}

/// The (C, α) mean Q_n^α = (1/A_n^α) Σ_{k≤n} A_{n−k}^{α−1} q_k.
pub fn cesaro_mean(seq: &[f64], alpha: f64, n: usize) -> Result<f64> {
    if n >= seq.len() {
        return Err(Error::OutOfRange { index: n, len: seq.len() });
    }
    if alpha <= -1.0 {
        return invalid(format!("Cesàro order must exceed −1, got {alpha}"));
    }
    let lower = cesaro_row(n, alpha - 1.0);
    let top = cesaro_row(n, alpha)[n];
    let s: f64 = (0..=n).map(|k| lower[n - k] * seq[k]).sum();
    Ok(s / top)
}

/// Riesz means x̄_n, n = 1..len, via the conjugate recursion. The state
/// column is the recursive value; aux `quotient` is the direct weighted
/// quotient for comparison.
pub fn riesz_mean_trace(seq: &[f64], weights: &WeightSequence) -> Result<Trace> {
    if seq.is_empty() {
        return invalid("Riesz mean needs at least one term");
    }
    let alpha = weights.prefix(seq.len())?;
    let mut trace = Trace::new(1, &["quotient"]);
    let (mut xbar, mut cum, mut num) = (0.0, 0.0, 0.0);
    for (n, (&a, &x)) in alpha.iter().zip(seq).enumerate() {
        cum += a;
        num += a * x;
        let mu = if n == 0 { 1.0 } else { a / cum };
        xbar = (1.0 - mu) * xbar + mu * x;
        trace.push(n + 1, &[xbar], &[num / cum]);
    }
    Ok(trace)
}

/// μ_i = α_i / Σ_{k≤i} α_k for i < horizon.
pub fn conjugate_steps(weights: &WeightSequence, horizon: usize) -> Result<StepSequence> {
    if horizon == 0 {
        return invalid("horizon must be at least 1");
    }
    let alpha = weights.prefix(horizon)?;
    let mut cum = 0.0;
    let mut mu = Vec::with_capacity(horizon);
    for (i, &a) in alpha.iter().enumerate() {
        cum += a;
        if cum <= 0.0 {
            return invalid(format!("zero cumulative weight at index {i}"));
        }
        mu.push(if i == 0 { 1.0 } else { a / cum });
    }
    Ok(StepSequence { source: Source::Prefix(mu.into()), label: format!("conj({})", weights.label) })
}

/// α_0 = 1, α_i = μ_i / Π_{j=1}^{i}(1 − μ_j) for i < horizon.
pub fn conjugate_weights(steps: &StepSequence, horizon: usize) -> Result<WeightSequence> {
    if horizon == 0 {
        return invalid("horizon must be at least 1");
    }
    let mu = steps.prefix(horizon)?;
    let mut alpha = Vec::with_capacity(horizon);
    alpha.push(1.0);
    let mut prod = 1.0;
    for &m in &mu[1..] {
        prod *= 1.0 - m;
        alpha.push(m / prod);
    }
    Ok(WeightSequence { source: Source::Prefix(alpha.into()), label: format!("conj({})", steps.label) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularityVerdict {
    Plausible,
    Violated,
}

/// Finite-prefix check of the two regularity conditions. Heuristic: it
/// can only refute, never prove.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub horizon: usize,
    pub row_sum_deviation: f64,
    pub max_column_tail: f64,
    pub verdict: RegularityVerdict,
}

#[derive(Debug, Clone, Copy)]
pub struct RegularityConfig {
    /// Columns 0..=columns are probed.
    pub columns: usize,
    pub row_tolerance: f64,
    /// Column entries below this count as vanished.
    pub column_tolerance: f64,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        RegularityConfig { columns: 5, row_tolerance: 1e-6, column_tolerance: 1e-3 }
    }
}

/// `rows(n)` returns the finitely supported row t_{n,0}, t_{n,1}, ….
pub fn check_toeplitz_regularity<F>(rows: F, horizon: usize, cfg: RegularityConfig) -> Result<RegularityReport>
where
    F: Fn(usize) -> Vec<f64>,
{
    if horizon < 4 {
        return invalid("regularity probe needs horizon ≥ 4");
    }
    let probe = |n: usize| -> Result<Vec<f64>> {
        let r = rows(n);
        if let Some((k, v)) = r.iter().enumerate().find(|(_, v)| **v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("entry t[{n},{k}] = {v}")));
        }
        Ok(r)
    };
    let last = probe(horizon)?;
    let mid = probe(horizon / 2)?;
    let col = |r: &[f64], k: usize| r.get(k).copied().unwrap_or(0.0);
    let row_sum_deviation = (last.iter().sum::<f64>() - 1.0).abs();
    let max_column_tail = (0..=cfg.columns).map(|k| col(&last, k)).fold(0.0, f64::max);
    let stuck_column = (0..=cfg.columns).any(|k| {
        let now = col(&last, k);
        now > cfg.column_tolerance && now >= col(&mid, k)
    });
    let verdict = if row_sum_deviation > cfg.row_tolerance || stuck_column {
        RegularityVerdict::Violated
    } else {
        RegularityVerdict::Plausible
    };
    Ok(RegularityReport { horizon, row_sum_deviation, max_column_tail, verdict })
}

/// Row n of the Riesz method: t_{nk} = α_k / Σ_{j≤n} α_j, k ≤ n.
pub fn riesz_row(weights: &WeightSequence, n: usize) -> Result<Vec<f64>> {
    let a = weights.prefix(n + 1)?;
    let total: f64 = a.iter().sum();
    Ok(a.into_iter().map(|v| v / total).collect())
}

/// Row n of the (C, α) method: t_{nk} = A_{n−k}^{α−1} / A_n^α.
pub fn cesaro_row_entries(alpha: f64, n: usize) -> Result<Vec<f64>> {
    if alpha <= -1.0 {
        return invalid("Cesàro order must exceed −1");
    }
    let lower = cesaro_row(n, alpha - 1.0);
    let top = cesaro_row(n, alpha)[n];
    Ok((0..=n).map(|k| lower[n - k] / top).collect())
}

/// The four auxiliary sequences of the Riesz identity lemma and the
/// largest scaled deviation of its two identities.
#[derive(Debug, Clone, Serialize)]
pub struct RieszIdentityRecord {
    /// x̄_0..x̄_L
    pub x_bar: Vec<f64>,
    /// s_0..s_L
    pub s: Vec<f64>,
    /// s̄_0..s̄_L
    pub s_bar: Vec<f64>,
    /// ŝ_0..ŝ_L
    pub s_hat: Vec<f64>,
    /// max |ŝ_i − s̄_i| / (1 + scale)
    pub hat_bar_deviation: f64,
    /// max |s_{n+1} − ŝ_n − x̄_{n+1}| / (1 + scale)
    pub step_deviation: f64,
}

impl RieszIdentityRecord {
    pub fn holds(&self, tol: Tolerance) -> bool {
        self.hat_bar_deviation <= tol.rel.max(tol.abs) && self.step_deviation <= tol.rel.max(tol.abs)
    }
}

/// `x` holds x_1..x_L.
pub fn riesz_identity_check(x: &[f64], weights: &WeightSequence) -> Result<RieszIdentityRecord> {
    let l = x.len();
    if l < 2 {
        return invalid("identity check needs at least two terms");
    }
    let alpha = weights.prefix(l + 1)?;
    let mu = conjugate_steps(weights, l + 1)?.prefix(l + 1)?;

    let mut x_bar = vec![0.0; l + 1];
    let mut s = vec![0.0; l + 1];
    let (mut cum, mut num) = (0.0, 0.0);
    for i in 1..=l {
        cum += alpha[i - 1];
        num += alpha[i - 1] * x[i - 1];
        x_bar[i] = num / cum;
        s[i] = s[i - 1] + mu[i - 1] * x[i - 1];
    }
    let mut s_bar = vec![0.0; l + 1];
    let mut s_hat = vec![0.0; l + 1];
    let (mut cum, mut num, mut hat) = (0.0, 0.0, 0.0);
    for i in 0..=l {
        cum += alpha[i];
        num += alpha[i] * s[i];
        s_bar[i] = num / cum;
        hat += mu[i] * x_bar[i];
        s_hat[i] = hat;
    }
    let scaled = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    let hat_bar_deviation = (0..=l).map(|i| scaled(s_hat[i], s_bar[i])).fold(0.0, f64::max);
    let step_deviation = (0..l)
        .map(|n| scaled(s[n + 1], s_hat[n] + x_bar[n + 1]))
        .fold(0.0, f64::max);
    Ok(RieszIdentityRecord { x_bar, s, s_bar, s_hat, hat_bar_deviation, step_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn cesaro_coefficient_examples() {
        assert_eq!(cesaro_coefficient(5, 0.0).unwrap(), 1.0);
        assert!(close(cesaro_coefficient(5, 1.0).unwrap(), 6.0, 1e-14));
        assert!(close(cesaro_coefficient(3, 2.0).unwrap(), 10.0, 1e-14));
        assert!(matches!(cesaro_coefficient(3, -2.0), Err(Error::CesaroPole(_))));
    }

    #[test]
    fn cesaro_coefficient_large_n_no_overflow() {
        let a = cesaro_coefficient(1_000_000, 1.0).unwrap();
        assert!(close(a, 1_000_001.0, 1e-9));
    }

    #[test]
    fn cesaro_mean_examples() {
        let c = vec![2.5; 8];
        for n in 0..8 {
            assert!(close(cesaro_mean(&c, 1.0, n).unwrap(), 2.5, 1e-14));
        }
        let q = [1.0, 0.0, 0.0, 0.0];
        assert!(close(cesaro_mean(&q, 1.0, 3).unwrap(), 0.25, 1e-14));
        let r = [0.3, -1.0, 4.0, 2.0];
        for n in 0..4 {
            assert!(close(cesaro_mean(&r, 0.0, n).unwrap(), r[n], 1e-14));
        }
        assert!(cesaro_mean(&r, 1.0, 4).is_err());
        assert!(cesaro_mean(&r, -1.0, 2).is_err());
    }

    #[test]
    fn riesz_trace_examples() {
        let t = riesz_mean_trace(&[1.0, 2.0, 3.0], &WeightSequence::constant()).unwrap();
        assert_eq!(t.column(0), vec![1.0, 1.5, 2.0]);
        let t = riesz_mean_trace(&[1.0, 2.0, 3.0], &WeightSequence::linear()).unwrap();
        let want = [1.0, 5.0 / 3.0, 7.0 / 3.0];
        for (g, w) in t.column(0).iter().zip(want) {
            assert!(close(*g, w, 1e-15));
        }
        let t = riesz_mean_trace(&[4.0; 10], &WeightSequence::square()).unwrap();
        assert!(t.column(0).iter().all(|v| close(*v, 4.0, 1e-15)));
        assert!(riesz_mean_trace(&[], &WeightSequence::constant()).is_err());
    }

    #[test]
    fn conjugate_table() {
        let mu = conjugate_steps(&WeightSequence::constant(), 50).unwrap().prefix(50).unwrap();
        for (i, m) in mu.iter().enumerate() {
            assert!(close(*m, 1.0 / (i as f64 + 1.0), 1e-14));
        }
        let mu = conjugate_steps(&WeightSequence::linear(), 50).unwrap().prefix(50).unwrap();
        for (i, m) in mu.iter().enumerate() {
            assert!(close(*m, 2.0 / (i as f64 + 2.0), 1e-14));
        }
        let mu = conjugate_steps(&WeightSequence::square(), 50).unwrap().prefix(50).unwrap();
        for (i, m) in mu.iter().enumerate() {
            let i = i as f64;
            assert!(close(*m, 6.0 * (i + 1.0) / ((i + 2.0) * (2.0 * i + 3.0)), 1e-13));
        }
    }

    #[test]
    fn conjugate_weights_examples() {
        let a = conjugate_weights(&StepSequence::harmonic(), 40).unwrap().prefix(40).unwrap();
        assert!(a.iter().all(|v| close(*v, 1.0, 1e-13)));
        let q = 0.3;
        let a = conjugate_weights(&StepSequence::constant(q).unwrap(), 20).unwrap().prefix(20).unwrap();
        assert_eq!(a[0], 1.0);
        for (i, v) in a.iter().enumerate().skip(1) {
            assert!(close(*v, q / (1.0 - q).powi(i as i32), 1e-13));
        }
        let al = 0.4f64;
        let mu = conjugate_steps(&WeightSequence::exponential(al), 30).unwrap().prefix(30).unwrap();
        for (i, m) in mu.iter().enumerate().skip(1) {
            let want = (al.exp() - 1.0) / (al.exp() - (-(i as f64) * al).exp());
            assert!(close(*m, want, 1e-13));
        }
    }

    #[test]
    fn degenerate_steps_rejected() {
        let s = StepSequence::from_fn("bad", |i| if i == 3 { 1.0 } else { 1.0 / (i + 1) as f64 });
        assert!(matches!(conjugate_weights(&s, 10), Err(Error::DegenerateStep(3))));
        assert!(StepSequence::from_values(vec![1.0, 0.0]).is_err());
        assert!(WeightSequence::from_values(vec![2.0, 1.0]).is_err());
        assert!(WeightSequence::from_values(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn toeplitz_examples() {
        let cfg = RegularityConfig::default();
        let r = check_toeplitz_regularity(|n| vec![1.0 / (n + 1) as f64; n + 1], 2000, cfg).unwrap();
        assert_eq!(r.verdict, RegularityVerdict::Plausible);
        assert!(r.row_sum_deviation < 1e-12);
        let w = WeightSequence::square();
        let r = check_toeplitz_regularity(|n| riesz_row(&w, n).unwrap(), 2000, cfg).unwrap();
        assert_eq!(r.verdict, RegularityVerdict::Plausible);
        // The identity method is regular: every fixed column vanishes.
        let identity = |n: usize| {
            let mut r = vec![0.0; n + 1];
            r[n] = 1.0;
            r
        };
        let r = check_toeplitz_regularity(identity, 2000, cfg).unwrap();
        assert_eq!(r.verdict, RegularityVerdict::Plausible);
        // All mass pinned to column 0 never forgets the first term.
        let r = check_toeplitz_regularity(|_| vec![1.0], 2000, cfg).unwrap();
        assert_eq!(r.verdict, RegularityVerdict::Violated);
        let r = check_toeplitz_regularity(|n| vec![0.5 / (n + 1) as f64; n + 1], 2000, cfg).unwrap();
        assert_eq!(r.verdict, RegularityVerdict::Violated);
        let bad = check_toeplitz_regularity(|_| vec![-1.0, 2.0], 100, cfg);
        assert!(matches!(bad, Err(Error::InvalidMatrix(_))));
        let r = check_toeplitz_regularity(|n| cesaro_row_entries(1.0, n).unwrap(), 500, cfg).unwrap();
        assert_eq!(r.verdict, RegularityVerdict::Plausible);
    }

    #[test]
    fn riesz_identity_examples() {
        let r = riesz_identity_check(&[0.0; 6], &WeightSequence::constant()).unwrap();
        assert!(r.s.iter().chain(&r.s_bar).chain(&r.s_hat).chain(&r.x_bar).all(|v| *v == 0.0));
        assert_eq!(r.hat_bar_deviation, 0.0);
        let r = riesz_identity_check(&[1.0, -1.0, 1.0, -1.0], &WeightSequence::constant()).unwrap();
        assert!(r.hat_bar_deviation <= 1e-12 && r.step_deviation <= 1e-12);
        let x: Vec<f64> = (0..200).map(|i| ((i * 7919) % 211) as f64 / 13.0 - 8.0).collect();
        let r = riesz_identity_check(&x, &WeightSequence::square()).unwrap();
        assert!(r.holds(Tolerance::default()));
    }

    #[test]
    fn family_parsing() {
        assert_eq!(WeightSequence::parse_family("geom:0.5").unwrap().value(2).unwrap(), 2.0);
        assert!(WeightSequence::parse_family("exp").is_err());
        assert!(WeightSequence::parse_family("nope").is_err());
    }
}
