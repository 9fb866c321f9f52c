//! Batch and recursive kernel regression with explicit masking where the
//! kernel denominator vanishes.

use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{check_grid, Bandwidth, DensityState, Kernel};
use crate::trace::GridFunction;

/// Relative denominator threshold: points with φ ≤ DEN_THRESHOLD·mean(φ)
/// are masked.
pub const DEN_THRESHOLD: f64 = 1e-8;

/// Regression functions used by the examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTruth {
    /// x².
    Square,
    /// x clamped to [−1, 1].
    ClippedIdentity,
    /// sin x on [−π/2, π/2], continued linearly with slope 0.2.
    ClippedSine,
}

impl RegressionTruth {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            RegressionTruth::Square => x * x,
            RegressionTruth::ClippedIdentity => x.clamp(-1.0, 1.0),
            RegressionTruth::ClippedSine => {
                if x < -FRAC_PI_2 {
                    -1.0 + 0.2 * (x + FRAC_PI_2)
                } else if x > FRAC_PI_2 {
                    1.0 + 0.2 * (x - FRAC_PI_2)
                } else {
                    x.sin()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegressionTruth::Square => "square",
            RegressionTruth::ClippedIdentity => "clipped_identity",
            RegressionTruth::ClippedSine => "clipped_sine",
        }
    }
}

impl FromStr for RegressionTruth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [RegressionTruth::Square, RegressionTruth::ClippedIdentity, RegressionTruth::ClippedSine]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown regression function '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionEstimate {
    pub function: GridFunction,
    pub warnings: Vec<String>,
}

fn ratio_with_mask(grid: &[f64], num: &[f64], den: &[f64]) -> RegressionEstimate {
    let scale = den.iter().sum::<f64>() / den.len() as f64;
    let tau = DEN_THRESHOLD * scale;
    let mask: Vec<bool> = den.iter().map(|d| !(*d > tau) || *d <= 0.0).collect();
    let values = num.iter().zip(den).zip(&mask).map(|((q, d), m)| if *m { 0.0 } else { q / d }).collect();
    let mut warnings = Vec::new();
    if mask.iter().all(|m| *m) {
        warnings.push("every grid point is masked: the kernel denominator vanishes".to_string());
    }
    RegressionEstimate { function: GridFunction::masked(grid.to_vec(), values, mask), warnings }
}

fn check_pairs(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return invalid("pairs must be finite");
    }
    Ok(())
}

/// r̂(x) = Σ Y_i K((x − X_i)/h) / Σ K((x − X_i)/h), masked where the
/// denominator is negligible.
pub fn batch_regression(pairs: &[(f64, f64)], kernel: Kernel, h: f64, grid: &[f64]) -> Result<RegressionEstimate> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid("h must be positive");
    }
    check_pairs(pairs)?;
    check_grid(grid)?;
    let n = pairs.len().max(1) as f64;
    let (num, den): (Vec<f64>, Vec<f64>) = grid
        .par_iter()
        .map(|&g| {
            pairs.iter().fold((0.0, 0.0), |(q, p), (x, y)| {
                let k = kernel.pdf((g - x) / h);
                (q + y * k, p + k)
            })
        })
        .map(|(q, p)| (q / (n * h), p / (n * h)))
        .unzip();
    Ok(ratio_with_mask(grid, &num, &den))
}

/// Recursive estimate R̂_n = Q_n/φ_n. φ is a [`DensityState`]; Q follows the
/// same recursion with Y-weighted kernel terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionState {
    density: DensityState,
    q: Vec<f64>,
    weighted_form_deviation: f64,
}

impl RegressionState {
    pub fn new(grid: Vec<f64>, kernel: Kernel, bandwidth: Bandwidth) -> Result<Self> {
        let n = grid.len();
        Ok(RegressionState { density: DensityState::new(grid, kernel, bandwidth)?, q: vec![0.0; n], weighted_form_deviation: 0.0 })
    }

    /// Q_{n+1} = (1 − μ_n)Q_n + μ_n Y K((· − X)/h)/h with μ_n = 1/(n+1), and
    /// φ updated as a density estimate. Also checks the weighted-mean form
    /// R̂_{n+1} = (1 − M_n)R̂_n + M_n Y with M_n = μ_n K_h/φ_{n+1}.
    pub fn update(&mut self, x: f64, y: f64) -> Result<()> {
        if !x.is_finite() || !y.is_finite() {
            return invalid("non-finite pair");
        }
        let n1 = self.density.count() + 1;
        let mu = 1.0 / n1 as f64;
        let h = self.density.bandwidth().at(n1);
        let kernel = self.density.kernel();
        let old_phi = self.density.values().to_vec();
        let tau_old = self.tau();
        self.density.update(x)?;
        let tau_new = self.tau();
        let grid = self.density.grid();
        let phi = self.density.values();
        for i in 0..grid.len() {
            let kh = kernel.pdf((grid[i] - x) / h) / h;
            let old_q = self.q[i];
            self.q[i] = (1.0 - mu) * old_q + mu * y * kh;
            let old_ok = old_phi[i] == 0.0 || old_phi[i] > tau_old;
            if phi[i] > tau_new && old_ok {
                let m = mu * kh / phi[i];
                let old_r = if old_phi[i] == 0.0 { 0.0 } else { old_q / old_phi[i] };
                let direct = self.q[i] / phi[i];
                let weighted = (1.0 - m) * old_r + m * y;
                let dev = (direct - weighted).abs() / (1.0 + direct.abs());
                self.weighted_form_deviation = self.weighted_form_deviation.max(dev);
            }
        }
        Ok(())
    }

    fn tau(&self) -> f64 {
        let phi = self.density.values();
        DEN_THRESHOLD * phi.iter().sum::<f64>() / phi.len() as f64
    }

    pub fn count(&self) -> usize {
        self.density.count()
    }

    pub fn grid(&self) -> &[f64] {
        self.density.grid()
    }

    pub fn numerator(&self) -> &[f64] {
        &self.q
    }

    pub fn denominator(&self) -> &[f64] {
        self.density.values()
    }

    /// Largest scaled gap |direct − weighted|/(1 + |direct|) seen so far.
    pub fn weighted_form_deviation(&self) -> f64 {
        self.weighted_form_deviation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEvaluation {
    pub estimate: RegressionEstimate,
    pub weighted_form_deviation: f64,
}

pub fn evaluate_ratio(state: &RegressionState) -> RatioEvaluation {
    RatioEvaluation {
        estimate: ratio_with_mask(state.grid(), state.numerator(), state.denominator()),
        weighted_form_deviation: state.weighted_form_deviation,
    }
}

pub fn recursive_regression(pairs: &[(f64, f64)], kernel: Kernel, bandwidth: Bandwidth, grid: Vec<f64>) -> Result<RegressionState> {
    let mut st = RegressionState::new(grid, kernel, bandwidth)?;
    for &(x, y) in pairs {
        st.update(x, y)?;
    }
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionError {
    /// Trapezoid ∫|r̂ − r| over defined neighbours.
    pub l1: f64,
    /// Mean of |r̂ − r| over defined grid points.
    pub mean_abs: f64,
    pub sup: f64,
    pub defined: usize,
}

/// Errors of an estimate restricted to [lo, hi]; masked points are skipped.
pub fn regression_error(est: &GridFunction, truth: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> RegressionError {
    let (mut l1, mut sum, mut sup, mut cnt) = (0.0, 0.0, 0.0f64, 0);
    for i in 0..est.len() {
        if est.x[i] < lo || est.x[i] > hi || !est.is_defined(i) {
            continue;
        }
        let e = (est.values[i] - truth(est.x[i])).abs();
        sup = sup.max(e);
        sum += e;
        cnt += 1;
        if i + 1 < est.len() && est.x[i + 1] <= hi && est.is_defined(i + 1) {
            let e2 = (est.values[i + 1] - truth(est.x[i + 1])).abs();
            l1 += 0.5 * (est.x[i + 1] - est.x[i]) * (e + e2);
        }
    }
    let mean_abs = if cnt > 0 { sum / cnt as f64 } else { f64::NAN };
    RegressionError { l1, mean_abs, sup, defined: cnt }
}
