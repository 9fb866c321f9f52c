//! Kernels, batch and recursive density estimators, kernel cdf estimates,
//! histograms and bandwidth theory.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{linspace, trapezoid};
use crate::trace::GridFunction;

/// Cauchy evaluation cutoff: beyond it the pdf is below 1e-12 of its peak.
pub const CAUCHY_CUTOFF: f64 = 1e6;
/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 512;

const SQRT5: f64 = 2.236_067_977_499_79;
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Triangular,
    Cauchy,
    Epanechnikov,
    Rectangular,
    Gaussian,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [Kernel::Triangular, Kernel::Cauchy, Kernel::Epanechnikov, Kernel::Rectangular, Kernel::Gaussian];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Triangular => "triangular",
            Kernel::Cauchy => "cauchy",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Rectangular => "rectangular",
            Kernel::Gaussian => "gaussian",
        }
    }

    pub fn pdf(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            Kernel::Triangular => (1.0 - a).max(0.0),
            Kernel::Cauchy => {
                if a > CAUCHY_CUTOFF {
                    0.0
                } else {
                    1.0 / (PI * (1.0 + t * t))
                }
            }
            Kernel::Epanechnikov => {
                if a <= SQRT5 {
                    0.75 / SQRT5 * (1.0 - t * t / 5.0)
                } else {
                    0.0
                }
            }
            Kernel::Rectangular => {
                if a <= SQRT3 {
                    0.5 / SQRT3
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * t * t).exp() / (2.0 * PI).sqrt(),
        }
    }

    pub fn cdf(self, t: f64) -> f64 {
        match self {
            Kernel::Triangular => {
                if t <= -1.0 {
                    0.0
                } else if t <= 0.0 {
                    0.5 * (1.0 + t).powi(2)
                } else if t < 1.0 {
                    1.0 - 0.5 * (1.0 - t).powi(2)
                } else {
                    1.0
                }
            }
            Kernel::Cauchy => 0.5 + t.atan() / PI,
            Kernel::Epanechnikov => {
                let u = t.clamp(-SQRT5, SQRT5);
                0.5 + 0.75 / SQRT5 * (u - u * u * u / 15.0)
            }
            Kernel::Rectangular => (0.5 + t.clamp(-SQRT3, SQRT3) * 0.5 / SQRT3).clamp(0.0, 1.0),
            Kernel::Gaussian => crate::numerics::norm_cdf(t),
        }
    }

    pub fn support_radius(self) -> f64 {
        match self {
            Kernel::Triangular => 1.0,
            Kernel::Epanechnikov => SQRT5,
            Kernel::Rectangular => SQRT3,
            Kernel::Cauchy | Kernel::Gaussian => f64::INFINITY,
        }
    }

    /// ∫t²K(t)dt; infinite for Cauchy.
    pub fn kappa2(self) -> f64 {
        match self {
            Kernel::Triangular => 1.0 / 6.0,
            Kernel::Cauchy => f64::INFINITY,
            _ => 1.0,
        }
    }

    /// ∫K(t)²dt.
    pub fn roughness(self) -> f64 {
        match self {
            Kernel::Triangular => 2.0 / 3.0,
            Kernel::Cauchy => 1.0 / (2.0 * PI),
            Kernel::Epanechnikov => 3.0 / (5.0 * SQRT5),
            Kernel::Rectangular => 0.5 / SQRT3,
            Kernel::Gaussian => 0.5 / PI.sqrt(),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel '{s}'")))
    }
}

pub fn builtin_kernel(name: &str) -> Result<Kernel> {
    name.parse()
}

/// h_i for the i-th sample (i ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Bandwidth {
    Fixed { h: f64 },
    /// h_i = c·i^{−β}.
    Rule { c: f64, beta: f64 },
}

impl Bandwidth {
    pub fn fixed(h: f64) -> Self {
        Bandwidth::Fixed { h }
    }

    pub fn rule(c: f64, beta: f64) -> Self {
        Bandwidth::Rule { c, beta }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Bandwidth::Fixed { h } if h > 0.0 && h.is_finite() => Ok(()),
            Bandwidth::Rule { c, beta } if c > 0.0 && c.is_finite() && beta.is_finite() => Ok(()),
            _ => invalid(format!("invalid bandwidth {self:?}")),
        }
    }

    pub fn at(&self, i: usize) -> f64 {
        match *self {
            Bandwidth::Fixed { h } => h,
            Bandwidth::Rule { c, beta } => c * (i.max(1) as f64).powf(-beta),
        }
    }
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return invalid("need at least one sample");
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return invalid("samples must be finite");
    }
    Ok(())
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
        return invalid("grid must be finite and strictly increasing");
    }
    Ok(())
}

/// `points` equally spaced values over the data range widened by 4h.
pub fn default_grid(samples: &[f64], h: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    linspace(lo - 4.0 * h, hi + 4.0 * h, points.max(2))
}

/// f_n(y) = (1/n)Σ(1/h)K((y − X_i)/h).
pub fn batch_density(samples: &[f64], kernel: Kernel, h: f64, grid: &[f64]) -> Result<GridFunction> {
    variable_bandwidth_density(samples, kernel, &Bandwidth::fixed(h), grid)
}

/// (1/n)Σ(1/h_i)K((y − X_i)/h_i) evaluated directly.
pub fn variable_bandwidth_density(samples: &[f64], kernel: Kernel, bw: &Bandwidth, grid: &[f64]) -> Result<GridFunction> {
    check_samples(samples)?;
    check_grid(grid)?;
    bw.validate()?;
    let hs: Vec<f64> = (1..=samples.len()).map(|i| bw.at(i)).collect();
    let n = samples.len() as f64;
    let values = grid
        .par_iter()
        .map(|&y| samples.iter().zip(&hs).map(|(x, h)| kernel.pdf((y - x) / h) / h).sum::<f64>() / n)
        .collect();
    Ok(GridFunction::new(grid.to_vec(), values))
}

/// Recursive density estimate on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    grid: Vec<f64>,
    values: Vec<f64>,
    count: usize,
    kernel: Kernel,
    bandwidth: Bandwidth,
}

impl DensityState {
    pub fn new(grid: Vec<f64>, kernel: Kernel, bandwidth: Bandwidth) -> Result<Self> {
        check_grid(&grid)?;
        bandwidth.validate()?;
        let values = vec![0.0; grid.len()];
        Ok(DensityState { grid, values, count: 0, kernel, bandwidth })
    }

    /// f̂_{n+1} = (1 − 1/(n+1))f̂_n + K((· − x)/h_{n+1})/((n+1)h_{n+1}).
    pub fn update(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return invalid("non-finite observation");
        }
        let n1 = self.count + 1;
        let h = self.bandwidth.at(n1);
        let mu = 1.0 / n1 as f64;
        let k = self.kernel;
        for (v, y) in self.values.iter_mut().zip(&self.grid) {
            *v = (1.0 - mu) * *v + mu * k.pdf((y - x) / h) / h;
        }
        self.count = n1;
        Ok(())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn estimate(&self) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.values.clone())
    }
}

/// Feeds every sample through [`DensityState::update`].
pub fn recursive_density(samples: &[f64], kernel: Kernel, bandwidth: Bandwidth, grid: Vec<f64>) -> Result<DensityState> {
    let mut st = DensityState::new(grid, kernel, bandwidth)?;
    for &x in samples {
        st.update(x)?;
    }
    Ok(st)
}

/// (1/n)Σ F_K((x − X_i)/h_i).
pub fn cdf_estimate(samples: &[f64], kernel: Kernel, bw: &Bandwidth, grid: &[f64]) -> Result<GridFunction> {
    check_samples(samples)?;
    check_grid(grid)?;
    bw.validate()?;
    let hs: Vec<f64> = (1..=samples.len()).map(|i| bw.at(i)).collect();
    let n = samples.len() as f64;
    let values = grid
        .par_iter()
        .map(|&y| samples.iter().zip(&hs).map(|(x, h)| kernel.cdf((y - x) / h)).sum::<f64>() / n)
        .collect();
    Ok(GridFunction::new(grid.to_vec(), values))
}

/// Cell masses n_j/N. Cell 0 is (−∞, e_0), cell j is [e_{j−1}, e_j) and the
/// last is [e_last, ∞).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub masses: Vec<f64>,
}

impl Histogram {
    /// Masses of the bounded cells only.
    pub fn inner(&self) -> &[f64] {
        &self.masses[1..self.masses.len() - 1]
    }
}

pub fn histogram(samples: &[f64], edges: &[f64]) -> Result<Histogram> {
    check_samples(samples)?;
    check_grid(edges)?;
    let mut counts = vec![0usize; edges.len() + 1];
    for x in samples {
        counts[edges.partition_point(|e| e <= x)] += 1;
    }
    let n = samples.len() as f64;
    let masses = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(Histogram { edges: edges.to_vec(), counts, masses })
}

/// Asymptotic MISE R/(nh) + h⁴κ⁴C/4 for curvature C = ∫(f″)².
pub fn amise(roughness: f64, kappa2: f64, n: usize, h: f64, curvature: f64) -> f64 {
    roughness / (n as f64 * h) + h.powi(4) * kappa2 * kappa2 * curvature / 4.0
}

/// h_min = (R/(nκ⁴C))^{1/5} from explicit kernel constants.
pub fn optimal_bandwidth_from(roughness: f64, kappa2: f64, n: usize, curvature: f64) -> Result<f64> {
    if !(curvature > 0.0) || !curvature.is_finite() {
        return Err(Error::UndefinedBandwidth(format!("curvature must be positive and finite, got {curvature}")));
    }
    if n == 0 {
        return invalid("n must be at least 1");
    }
    if !(kappa2 > 0.0 && kappa2.is_finite()) {
        return Err(Error::UndefinedBandwidth(format!("kernel second moment {kappa2} is not positive and finite")));
    }
    Ok((roughness / (n as f64 * kappa2 * kappa2 * curvature)).powf(0.2))
}

pub fn optimal_bandwidth(kernel: Kernel, n: usize, curvature: f64) -> Result<f64> {
    optimal_bandwidth_from(kernel.roughness(), kernel.kappa2(), n, curvature)
}

/// (3/(5√5))/(κ·∫K²); zero when κ is infinite.
pub fn kernel_efficiency(kernel: Kernel) -> Result<f64> {
    let kappa = kernel.kappa2().sqrt();
    if kappa == 0.0 {
        return invalid("kernel with zero spread");
    }
    Ok(3.0 / (5.0 * SQRT5) / (kappa * kernel.roughness()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityError {
    pub l1: f64,
    pub l2: f64,
    pub sup: f64,
}

/// Trapezoid ∫|f̂ − f| and ∫(f̂ − f)² over the estimate's grid; masked
/// points contribute zero.
pub fn density_error(estimate: &GridFunction, truth: &dyn Fn(f64) -> f64) -> Result<DensityError> {
    check_grid(&estimate.x)?;
    let diff: Vec<f64> = (0..estimate.len())
        .map(|i| if estimate.is_defined(i) { estimate.values[i] - truth(estimate.x[i]) } else { 0.0 })
        .collect();
    let abs: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    Ok(DensityError {
        l1: trapezoid(&estimate.x, &abs),
        l2: trapezoid(&estimate.x, &sq),
        sup: abs.iter().copied().fold(0.0, f64::max),
    })
}

/// Product-kernel estimate on a rectangular grid; values are row-major with
/// rows indexed by x.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction2 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction2 {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y.len() + j]
    }

    /// Iterated trapezoid integral.
    pub fn integral(&self) -> f64 {
        let rows: Vec<f64> = (0..self.x.len()).map(|i| trapezoid(&self.y, &self.values[i * self.y.len()..(i + 1) * self.y.len()])).collect();
        trapezoid(&self.x, &rows)
    }
}

/// (1/n)Σ K((x − X_i)/h_x)K((y − Y_i)/h_y)/(h_x h_y).
pub fn batch_density_2d(samples: &[(f64, f64)], kernel: Kernel, h: (f64, f64), gx: &[f64], gy: &[f64]) -> Result<GridFunction2> {
    if samples.is_empty() {
        return invalid("need at least one sample");
    }
    if !(h.0 > 0.0 && h.1 > 0.0) {
        return invalid("bandwidths must be positive");
    }
    check_grid(gx)?;
    check_grid(gy)?;
    let n = samples.len() as f64;
    let values = gx
        .par_iter()
        .flat_map_iter(|&x| {
            gy.iter().map(move |&y| {
                samples.iter().map(|(a, b)| kernel.pdf((x - a) / h.0) * kernel.pdf((y - b) / h.1)).sum::<f64>() / (n * h.0 * h.1)
            })
        })
        .collect();
    Ok(GridFunction2 { x: gx.to_vec(), y: gy.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;
    use crate::processes::{rng_from_seed, DistributionSpec};

    fn moment(k: Kernel, f: impl Fn(f64) -> f64) -> f64 {
        if k.support_radius().is_finite() {
            let r = k.support_radius();
            integrate(|t| f(t) * k.pdf(t), -r, r, 1e-12)
        } else if k == Kernel::Gaussian {
            integrate(|t| f(t) * k.pdf(t), -40.0, 40.0, 1e-12)
        } else {
            let lim = CAUCHY_CUTOFF.atan();
            integrate(|u| { let t = u.tan(); f(t) * k.pdf(t) / u.cos().powi(2) }, -lim, lim, 1e-12)
        }
    }

    #[test]
    fn kernel_constants_match_quadrature() {
        for k in Kernel::ALL {
            assert!((moment(k, |_| 1.0) - 1.0).abs() < 1e-6, "{k}");
            if k != Kernel::Cauchy {
                assert!(moment(k, |t| t).abs() < 1e-6, "{k}");
                assert!((moment(k, |t| t * t) - k.kappa2()).abs() < 1e-6, "{k}");
            }
            assert!((moment(k, |t| k.pdf(t)) - k.roughness()).abs() < 1e-6, "{k}");
            let r = k.support_radius().min(40.0);
            for t in linspace(-r, r, 41) {
                let lower = if k == Kernel::Cauchy { k.cdf(-r) } else { 0.0 };
                let direct = lower + integrate(|s| k.pdf(s), -r, t, 1e-12);
                assert!((k.cdf(t) - direct).abs() < 1e-6, "{k} {t}");
            }
            if k.support_radius().is_finite() {
                assert_eq!(k.cdf(-k.support_radius()), 0.0);
                assert_eq!(k.cdf(k.support_radius()), 1.0);
            }
        }
        assert!((Kernel::Epanechnikov.roughness() - 0.268328).abs() < 1e-6);
    }

    #[test]
    fn names() {
        assert_eq!(builtin_kernel("Epanechnikov").unwrap(), Kernel::Epanechnikov);
        assert!(builtin_kernel("biweight").is_err());
    }

    #[test]
    fn efficiencies() {
        assert!((kernel_efficiency(Kernel::Epanechnikov).unwrap() - 1.0).abs() < 1e-12);
        assert!((kernel_efficiency(Kernel::Rectangular).unwrap() - 0.9295).abs() < 1e-4);
        for k in Kernel::ALL {
            assert!(kernel_efficiency(k).unwrap() <= 1.0 + 1e-12);
        }
        assert_eq!(kernel_efficiency(Kernel::Cauchy).unwrap(), 0.0);
    }

    #[test]
    fn bandwidth_scaling() {
        let c = 3.0 / (8.0 * PI.sqrt());
        let h = optimal_bandwidth(Kernel::Epanechnikov, 1000, c).unwrap();
        assert!((optimal_bandwidth(Kernel::Epanechnikov, 32_000, c).unwrap() / h - 0.5).abs() < 1e-12);
        let r = Kernel::Epanechnikov.roughness();
        let h2 = optimal_bandwidth_from(r, 4.0, 1000, c).unwrap();
        assert!((h2 / h - 2f64.powf(-0.8)).abs() < 1e-12);
        assert!(matches!(optimal_bandwidth(Kernel::Gaussian, 10, 0.0), Err(Error::UndefinedBandwidth(_))));
        let hs = linspace(0.5 * h, 2.0 * h, 30_001);
        let best = hs.iter().copied().min_by(|a, b| amise(r, 1.0, 1000, *a, c).total_cmp(&amise(r, 1.0, 1000, *b, c))).unwrap();
        assert!((best / h - 1.0).abs() < 0.01);
    }

    #[test]
    fn single_sample_density() {
        let f = batch_density(&[0.3], Kernel::Triangular, 0.5, &[0.3, 1.0]).unwrap();
        assert_eq!(f.values[0], 2.0);
        let st = recursive_density(&[0.3], Kernel::Gaussian, Bandwidth::rule(1.0, 0.35), vec![-1.0, 0.3]).unwrap();
        assert!((st.values()[1] - Kernel::Gaussian.pdf(0.0)).abs() < 1e-15);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = rng_from_seed(4);
        let d = DistributionSpec::Exponential { rate: 2.0 };
        let xs: Vec<f64> = (0..200).map(|_| d.sample(&mut rng)).collect();
        for k in [Kernel::Triangular, Kernel::Epanechnikov, Kernel::Gaussian, Kernel::Rectangular] {
            let f = batch_density(&xs, k, 0.1, &default_grid(&xs, 0.1, 4096)).unwrap();
            assert!((trapezoid(&f.x, &f.values) - 1.0).abs() < 0.02, "{k}");
        }
    }

    #[test]
    fn recursive_matches_direct() {
        let mut rng = rng_from_seed(8);
        let d = DistributionSpec::normal(1.0, 2.0);
        let xs: Vec<f64> = (0..300).map(|_| d.sample(&mut rng)).collect();
        let bw = Bandwidth::rule(1.0, 0.35);
        let grid = linspace(-6.0, 8.0, 101);
        for k in Kernel::ALL {
            let st = recursive_density(&xs, k, bw, grid.clone()).unwrap();
            let direct = variable_bandwidth_density(&xs, k, &bw, &grid).unwrap();
            for (a, b) in st.values().iter().zip(&direct.values) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn concentrated_mass() {
        let grid = linspace(-3.0, 3.0, 61);
        let mut st = DensityState::new(grid.clone(), Kernel::Epanechnikov, Bandwidth::rule(1.0, 0.5)).unwrap();
        for _ in 0..200 {
            st.update(1.03).unwrap();
        }
        let arg = (0..61).max_by(|&a, &b| st.values()[a].total_cmp(&st.values()[b])).unwrap();
        assert!((grid[arg] - 1.0).abs() < 1e-12);
        assert!(st.update(f64::NAN).is_err());
    }

    #[test]
    fn cdf_examples() {
        let f = cdf_estimate(&[0.5], Kernel::Epanechnikov, &Bandwidth::fixed(2.0), &[-1.0, 0.5, 2.0]).unwrap();
        for (x, v) in f.x.iter().zip(&f.values) {
            assert!((v - Kernel::Epanechnikov.cdf((x - 0.5) / 2.0)).abs() < 1e-15);
        }
        let xs = [0.0, 1.0, 1.0, 2.5];
        let f = cdf_estimate(&xs, Kernel::Gaussian, &Bandwidth::fixed(1e-6), &[-1.0, 0.5, 1.5, 3.0]).unwrap();
        assert_eq!(f.values, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn histogram_cells() {
        let h = histogram(&[0.5, 0.6, 0.55], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.masses, vec![0.0, 1.0, 0.0, 0.0]);
        let h = histogram(&[-5.0, 0.0, 1.0, 7.0], &[0.0, 1.0]).unwrap();
        assert_eq!(h.counts, vec![1, 1, 2]);
        assert_eq!(h.masses.iter().sum::<f64>(), 1.0);
        let mut rng = rng_from_seed(0);
        let u = DistributionSpec::Uniform { lo: 0.0, hi: 1.0 };
        let xs: Vec<f64> = (0..100_000).map(|_| u.sample(&mut rng)).collect();
        let h = histogram(&xs, &linspace(0.0, 1.0, 11)).unwrap();
        assert!(h.inner().iter().all(|m| (m - 0.1).abs() <= 0.01));
    }

    #[test]
    fn error_examples() {
        let grid = linspace(-10.0, 10.0, 2001);
        let truth = |x: f64| crate::numerics::norm_pdf(x);
        let exact = GridFunction::new(grid.clone(), grid.iter().map(|x| truth(*x)).collect());
        let e = density_error(&exact, &truth).unwrap();
        assert_eq!((e.l1, e.l2), (0.0, 0.0));
        let zero = GridFunction::new(grid.clone(), vec![0.0; grid.len()]);
        assert!((density_error(&zero, &truth).unwrap().l1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn product_kernel_2d() {
        let g = linspace(-5.0, 5.0, 201);
        let f = batch_density_2d(&[(0.0, 0.0), (1.0, -1.0)], Kernel::Epanechnikov, (0.5, 0.7), &g, &g).unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-3);
    }
}
