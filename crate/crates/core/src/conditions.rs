//! Horizon-bounded verdicts on whether a series converges. These are
//! heuristics over a finite prefix and are labeled as such in reports.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converging,
    Diverging,
    Inconclusive,
}

/// One named condition: the partial sum at the horizon, the measured
/// trend, and the verdict drawn from it.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionEntry {
    pub value: f64,
    pub trend: f64,
    pub verdict: Verdict,
    pub method: &'static str,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConditionReport {
    pub horizon: usize,
    pub conditions: BTreeMap<String, ConditionEntry>,
    pub warnings: Vec<String>,
    pub heuristic: bool,
}

impl ConditionReport {
    pub fn new(horizon: usize) -> Self {
        ConditionReport { horizon, conditions: BTreeMap::new(), warnings: Vec::new(), heuristic: true }
    }

    pub fn insert(&mut self, name: &str, entry: ConditionEntry) {
        self.conditions.insert(name.to_string(), entry);
    }

    pub fn verdict(&self, name: &str) -> Option<Verdict> {
        self.conditions.get(name).map(|e| e.verdict)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.conditions.get(name).map(|e| e.value)
    }
}

/// Thresholds for the log-index slope test on nonnegative-term series.
///
/// The trend is the ratio of partial-sum growth over the last two
/// dyadic windows (H/4, H/2] and (H/2, H], each of width ln 2 in log-index
/// coordinates. Terms ~ n^{−p} give 2^{1−p}: below 1 for p > 1, at least 1
/// for p ≤ 1.
#[derive(Debug, Clone, Copy)]
pub struct TrendConfig {
    pub converging_below: f64,
    pub diverging_above: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig { converging_below: 0.97, diverging_above: 0.99 }
    }
}

/// `partial[k]` is the partial sum through term k+1 (so length = horizon).
pub fn classify_nonnegative(partial: &[f64], cfg: TrendConfig) -> ConditionEntry {
    let h = partial.len();
    let value = partial.last().copied().unwrap_or(0.0);
    if h < 8 {
        return ConditionEntry { value, trend: f64::NAN, verdict: Verdict::Inconclusive, method: "log-slope" };
    }
    let at = |n: usize| partial[n - 1];
    let recent = at(h) - at(h / 2);
    let earlier = at(h / 2) - at(h / 4);
    let scale = value.abs().max(f64::MIN_POSITIVE);
    let negligible = |d: f64| d.abs() <= 1e-15 * scale || d == 0.0;
    let (trend, verdict) = if !value.is_finite() {
        (f64::INFINITY, Verdict::Diverging)
    } else if negligible(recent) {
        (0.0, Verdict::Converging)
    } else if negligible(earlier) {
        (f64::INFINITY, Verdict::Inconclusive)
    } else {
        let r = recent / earlier;
        let v = if r < cfg.converging_below {
            Verdict::Converging
        } else if r >= cfg.diverging_above {
            Verdict::Diverging
        } else {
            Verdict::Inconclusive
        };
        (r, v)
    };
    ConditionEntry { value, trend, verdict, method: "log-slope" }
}

/// Thresholds for the Cauchy-style test on signed series: the series is
/// taken as converging when the partial sums oscillate by less than `tau`
/// over the trailing `window_frac` of the horizon.
#[derive(Debug, Clone, Copy)]
pub struct OscillationConfig {
    pub window_frac: f64,
    pub tau: f64,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        OscillationConfig { window_frac: 0.1, tau: 1e-3 }
    }
}

/// Max minus min of the trailing window.
pub fn trailing_oscillation(partial: &[f64], window_frac: f64) -> f64 {
    if partial.is_empty() {
        return 0.0;
    }
    let w = ((partial.len() as f64 * window_frac).ceil() as usize).clamp(1, partial.len());
    let tail = &partial[partial.len() - w..];
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

pub fn classify_oscillation(partial: &[f64], cfg: OscillationConfig) -> ConditionEntry {
    let value = partial.last().copied().unwrap_or(0.0);
    let osc = trailing_oscillation(partial, cfg.window_frac);
    let verdict = if !osc.is_finite() {
        Verdict::Diverging
    } else if osc < cfg.tau {
        Verdict::Converging
    } else {
        Verdict::Diverging
    };
    ConditionEntry { value, trend: osc, verdict, method: "trailing-oscillation" }
}

/// Picks the test by sign pattern: one-signed terms go through the
/// log-slope test on |partial sums|, mixed signs through the oscillation test.
pub fn classify_terms(terms: &[f64], trend: TrendConfig, osc: OscillationConfig) -> ConditionEntry {
    let partial = partial_sums(terms.iter().copied());
    let nonneg = terms.iter().all(|t| *t >= 0.0);
    let nonpos = terms.iter().all(|t| *t <= 0.0);
    if nonneg || nonpos {
        let abs: Vec<f64> = partial.iter().map(|v| v.abs()).collect();
        let mut e = classify_nonnegative(&abs, trend);
        e.value = partial.last().copied().unwrap_or(0.0);
        e
    } else {
        classify_oscillation(&partial, osc)
    }
}

/// Running sums of `terms`.
pub fn partial_sums(terms: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    terms
        .into_iter()
        .map(|t| {
            acc += t;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p_series(p: f64, h: usize) -> Vec<f64> {
        partial_sums((1..=h).map(|n| (n as f64).powf(-p)))
    }

    #[test]
    fn p_series_verdicts() {
        let cfg = TrendConfig::default();
        assert_eq!(classify_nonnegative(&p_series(1.0, 100_000), cfg).verdict, Verdict::Diverging);
        assert_eq!(classify_nonnegative(&p_series(0.5, 100_000), cfg).verdict, Verdict::Diverging);
        assert_eq!(classify_nonnegative(&p_series(1.5, 100_000), cfg).verdict, Verdict::Converging);
        assert_eq!(classify_nonnegative(&p_series(8.0 / 7.0, 100_000), cfg).verdict, Verdict::Converging);
        assert_eq!(classify_nonnegative(&vec![0.0; 100], cfg).verdict, Verdict::Converging);
    }

    #[test]
    fn oscillation_verdicts() {
        let alt = partial_sums((1..=10_000).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).powi(2)));
        assert_eq!(classify_oscillation(&alt, OscillationConfig::default()).verdict, Verdict::Converging);
        let harm = p_series(1.0, 10_000);
        assert_eq!(classify_oscillation(&harm, OscillationConfig::default()).verdict, Verdict::Diverging);
    }
}
