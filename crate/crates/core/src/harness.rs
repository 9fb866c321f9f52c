//! Experiment registry, configuration and deterministic replication.
//!
//! Every experiment takes a typed parameter block with defaults, runs for a
//! base seed (replica r uses seed + r) and returns a primary CSV plus a JSON
//! summary `{id, config, per_replica, aggregate, pass}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::conditions::ConditionReport;
use crate::error::{Error, Result};
use crate::identification::{
    ar1_ratio_estimate, default_scalar_noise, identify_lms, identify_nonparametric, identify_normalized,
    identify_scalar_nonlinear, piecewise_target, scalar_drift, scalar_system_series, transition_series, NormalizedConfig,
    TransitionNoise,
};
use crate::kernel::{batch_density, cdf_estimate, density_error, histogram, recursive_density, Bandwidth, Kernel};
use crate::lln::{clt_block_histogram, gclt_as_trace, jamison_capacity, lil_envelope_report, lln_trace, orthogonal_coeff_conditions, three_series_report, Center, GcltConfig, GcltNorm, LlnConfig};
use crate::monte_carlo::{
    builtin_integrand, capture_recapture, mc_integrate, plan_sample_size_with, simulate_pond, sqrt_quartic_integral,
    sqrt_quartic_variance_bound, BoxDomain, McMode, PlanRounding,
};
use crate::numerics::{linspace, median, norm_quantile};
use crate::processes::{rng_from_seed, standard_normal, DistributionSpec, ProcessSpec, SampleStream};
use crate::recursion::{recur_trace, verify_basic_identity};
use crate::regression::{batch_regression, evaluate_ratio, recursive_regression, regression_error, RegressionTruth};
use crate::sa::{asymptotic_variance_check, check_step_plan, kiefer_wolfowitz, projected_run, quantile_track, robbins_monro, GainsSpec, Noise, ProjectionSpec, StepPlan, TestFunction};
use crate::summability::{cesaro_coefficient, cesaro_mean, conjugate_steps, conjugate_weights, StepSequence, WeightSequence};
use crate::trace::GridFunction;

/// Environment variable consulted when no seed flag is given.
pub const SEED_ENV: &str = "ITERLAB_SEED";

/// A resolved request to run one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub id: String,
    /// Parameter overrides as given (file merged with flags); defaults are
    /// filled in when the experiment parses them.
    pub params: Value,
    pub seed: u64,
    pub replicas: Option<usize>,
    pub out: PathBuf,
    /// `key=value` flag overrides applied on top of the file.
    pub overrides: Vec<String>,
}

/// Builds a config from an optional JSON file and `key=value` overrides.
/// Dotted keys address nested objects; values parse as JSON, falling back
/// to a plain string. An empty file means "all defaults".
pub fn parse_config(
    id: &str,
    file: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    replicas: Option<usize>,
    out: impl Into<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut params = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            if text.trim().is_empty() {
                Value::Object(Map::new())
            } else {
                serde_json::from_str(&text).map_err(|e| Error::Config { key: "<file>".into(), msg: e.to_string() })?
            }
        }
        None => Value::Object(Map::new()),
    };
    if !params.is_object() {
        return Err(Error::Config { key: "<file>".into(), msg: "top level must be a JSON object".into() });
    }
    for o in overrides {
        apply_override(&mut params, o)?;
    }
    let seed = match seed {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| Error::Config { key: SEED_ENV.into(), msg: format!("not an unsigned integer: {v}") })?,
            Err(_) => 0,
        },
    };
    Ok(ExperimentConfig { id: id.to_string(), params, seed, replicas, out: out.into(), overrides: overrides.to_vec() })
}

fn apply_override(params: &mut Value, o: &str) -> Result<()> {
    let Some((key, raw)) = o.split_once('=') else {
        return Err(Error::Config { key: o.into(), msg: "override must look like key=value".into() });
    };
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = params;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| Error::Config { key: key.into(), msg: "cannot descend into a non-object".into() })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Raw result of an experiment body.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub csv: String,
    pub params: Value,
    pub per_replica: Vec<Value>,
    pub aggregate: Map<String, Value>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub id: String,
    pub config: Value,
    pub per_replica: Vec<Value>,
    pub aggregate: Map<String, Value>,
    pub pass: Option<bool>,
    #[serde(skip)]
    pub csv: String,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Input handed to an experiment body.
pub struct Ctx<'a> {
    pub params: &'a Value,
    pub seed: u64,
    pub replicas: Option<usize>,
}

impl Ctx<'_> {
    fn replicas_or(&self, d: usize) -> usize {
        self.replicas.unwrap_or(d).max(1)
    }
}

type Body = fn(&Ctx) -> Result<ExperimentOutput>;

pub struct Experiment {
    pub id: &'static str,
    pub description: &'static str,
    pub anchor: &'static str,
    body: Body,
}

/// Parses a parameter block, naming the offending key on failure.
fn params<P: DeserializeOwned + Serialize>(v: &Value) -> Result<(P, Value)> {
    let p: P = serde_path_to_error::deserialize(v.clone()).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let key = if path == "." { unknown_key(&inner).unwrap_or(path) } else { path };
        Error::Config { key, msg: inner }
    })?;
    let resolved = serde_json::to_value(&p).map_err(|e| Error::Config { key: ".".into(), msg: e.to_string() })?;
    Ok((p, resolved))
}

fn unknown_key(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest.split('`').next()?.to_string())
}

fn replicate<T, F>(seed: u64, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..n as u64).into_par_iter().map(|r| f(seed.wrapping_add(r))).collect()
}

fn out(csv: String, params: Value, per_replica: Vec<Value>, aggregate: Value, pass: Option<bool>) -> Result<ExperimentOutput> {
    let aggregate = match aggregate {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    };
    Ok(ExperimentOutput { csv, params, per_replica, aggregate, pass })
}

fn rows_csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn mixture() -> DistributionSpec {
    DistributionSpec::NormalMixture { weights: vec![0.25, 0.75], means: vec![0.0, 4.0], stddevs: vec![1.0, 0.5] }
}

// ---------------------------------------------------------------- summability

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SummSequenceParams {
    family: String,
    horizon: usize,
}

impl Default for SummSequenceParams {
    fn default() -> Self {
        SummSequenceParams { family: "linear".into(), horizon: 20 }
    }
}

fn summ_sequence(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<SummSequenceParams>(ctx.params)?;
    let w = WeightSequence::parse_family(&p.family)?;
    let alpha = w.prefix(p.horizon)?;
    let mu = conjugate_steps(&w, p.horizon)?.prefix(p.horizon)?;
    let back = conjugate_weights(&StepSequence::from_values(mu.clone())?, p.horizon)?.prefix(p.horizon)?;
    let err = alpha.iter().zip(&back).map(|(a, b)| (a - b).abs() / (1.0 + a.abs())).fold(0.0, f64::max);
    let csv = rows_csv("index,alpha,mu,alpha_back", (0..p.horizon).map(|i| vec![i.to_string(), f(alpha[i]), f(mu[i]), f(back[i])]));
    out(csv, resolved, vec![], json!({ "max_roundtrip_error": err }), Some(err <= 1e-9))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CesaroParams {
    alphas: Vec<f64>,
    betas: Vec<f64>,
    n: usize,
}

impl Default for CesaroParams {
    fn default() -> Self {
        CesaroParams { alphas: vec![0.0, 1.0, 2.0], betas: vec![1.0, 2.0], n: 60 }
    }
}

/// Max scaled deviations of Σ_{k≤n}A_k^α = A_n^{α+1} and of the mean
/// composition identity Q^{α+β} = Σ A^{β−1}_{n−k}A^α_k Q^α_k / A^{α+β}_n.
pub fn cesaro_identity_deviation(alpha: f64, beta: f64, x: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() - 1;
    let mut dev_ii = 0.0f64;
    for m in 0..=n {
        let lhs: f64 = (0..=m).map(|k| cesaro_coefficient(k, alpha)).sum::<Result<f64>>()?;
        let rhs = cesaro_coefficient(m, alpha + 1.0)?;
        dev_ii = dev_ii.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    let q: Vec<f64> = (0..=n).map(|k| cesaro_mean(x, alpha, k)).collect::<Result<_>>()?;
    let mut dev_iv = 0.0f64;
    for m in 0..=n {
        let direct = cesaro_mean(x, alpha + beta, m)?;
        let mut s = 0.0;
        for (k, qk) in q.iter().enumerate().take(m + 1) {
            // A^{-1}_j is the unit impulse at j = 0
            let a = cesaro_coefficient(m - k, beta - 1.0).unwrap_or(if m == k { 1.0 } else { 0.0 });
            s += a * cesaro_coefficient(k, alpha)? * qk;
        }
        let composed = s / cesaro_coefficient(m, alpha + beta)?;
        dev_iv = dev_iv.max((direct - composed).abs() / (1.0 + direct.abs()));
    }
    Ok((dev_ii, dev_iv))
}

fn summ_cesaro(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<CesaroParams>(ctx.params)?;
    let mut rng = rng_from_seed(ctx.seed);
    let x: Vec<f64> = (0..=p.n).map(|_| standard_normal(&mut rng)).collect();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &a in &p.alphas {
        for &b in &p.betas {
            let (ii, iv) = cesaro_identity_deviation(a, b, &x)?;
            worst = worst.max(ii).max(iv);
            rows.push(vec![f(a), f(b), f(ii), f(iv)]);
        }
    }
    out(rows_csv("alpha,beta,dev_sum,dev_composition", rows), resolved, vec![], json!({ "max_deviation": worst }), Some(worst <= 1e-9))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IdentityParams {
    horizon: usize,
    gamma: f64,
}

impl Default for IdentityParams {
    fn default() -> Self {
        IdentityParams { horizon: 100_000, gamma: 1.0 }
    }
}

fn recursion_identity(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<IdentityParams>(ctx.params)?;
    let steps = StepSequence::power(p.gamma)?;
    let mut rng = rng_from_seed(ctx.seed);
    let b: Vec<f64> = (0..p.horizon).map(|_| standard_normal(&mut rng)).collect();
    let trace = recur_trace(|n| b[n], &steps, 0.0, p.horizon)?;
    let h = p.horizon;
    let pairs = [(0, h - 1), (1, h / 2), (h / 3, h - 1), (h / 2, h / 2), (10, 1000.min(h - 1))];
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (n, m) in pairs {
        let r = verify_basic_identity(&trace, &b, &steps, n, m)?;
        worst = worst.max(r);
        rows.push(vec![n.to_string(), m.to_string(), f(r)]);
    }
    out(rows_csv("n,m,residual", rows), resolved, vec![], json!({ "max_residual": worst }), Some(worst <= 1e-8))
}

// ------------------------------------------------------------------------ lln

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LlnParams {
    process: ProcessSpec,
    family: String,
    center: Option<f64>,
    horizon: usize,
    thin: usize,
}

impl Default for LlnParams {
    fn default() -> Self {
        LlnParams { process: ProcessSpec::iid(DistributionSpec::normal(1.0, 1.0)), family: "linear".into(), center: Some(1.0), horizon: 10_000, thin: 10 }
    }
}

fn lln_riesz(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<LlnParams>(ctx.params)?;
    let mut cfg = LlnConfig::new(p.process, WeightSequence::parse_family(&p.family)?, p.horizon);
    cfg.center = p.center.map_or(Center::None, Center::Known);
    cfg.thin = p.thin;
    let t = lln_trace(&cfg, ctx.seed)?;
    let last = t.last_state().map(|s| s[0]).unwrap_or(f64::NAN);
    out(t.to_csv_string(), resolved, vec![], json!({ "final": last }), None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct JamisonParams {
    family: String,
    horizon: usize,
    grid: Vec<f64>,
}

impl Default for JamisonParams {
    fn default() -> Self {
        JamisonParams { family: "const".into(), horizon: 1000, grid: vec![0.5, 1.0, 1.5, 2.25, 7.0, 10.75, 99.5, 250.0, 999.5] }
    }
}

fn lln_jamison(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<JamisonParams>(ctx.params)?;
    let w = WeightSequence::parse_family(&p.family)?;
    let pts = jamison_capacity(&w, &p.grid, p.horizon)?;
    let constant = p.family == "const";
    let exact = pts.iter().all(|q| q.count == (q.x.floor() as usize).min(p.horizon));
    let csv = rows_csv("x,count,floor", pts.iter().map(|q| vec![f(q.x), q.count.to_string(), f(q.x.floor())]));
    out(csv, resolved, vec![], json!({ "matches_floor": exact }), constant.then_some(exact))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CltParams {
    dist: DistributionSpec,
    block: usize,
    blocks: usize,
    bins: usize,
    tolerance: f64,
}

impl Default for CltParams {
    fn default() -> Self {
        CltParams { dist: DistributionSpec::Exponential { rate: 1.0 }, block: 100, blocks: 1000, bins: 40, tolerance: 0.15 }
    }
}

fn clt_hist(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<CltParams>(ctx.params)?;
    let h = clt_block_histogram(&p.dist, p.block, p.blocks, p.bins, ctx.seed)?;
    let csv = rows_csv("lo,hi,mass,normal_mass", (0..h.masses.len()).map(|i| vec![f(h.edges[i]), f(h.edges[i + 1]), f(h.masses[i]), f(h.normal_masses[i])]));
    let pass = h.total_variation <= p.tolerance;
    out(csv, resolved, vec![], json!({ "total_variation": h.total_variation, "clipped": h.clipped }), Some(pass))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LilParams {
    dist: DistributionSpec,
    sigma: Option<f64>,
    epsilon: f64,
    horizon: usize,
    /// Exceedances are "late" beyond this power of ten.
    after: usize,
    /// "none": pass when late exceedances vanish; "persistent": pass when they occur.
    expect: String,
    required: usize,
}

impl Default for LilParams {
    fn default() -> Self {
        LilParams { dist: DistributionSpec::normal(0.0, 1.0), sigma: None, epsilon: 0.5, horizon: 1_000_000, after: 10_000, expect: "none".into(), required: 9 }
    }
}

fn lil_common(ctx: &Ctx, p: LilParams, resolved: Value) -> Result<ExperimentOutput> {
    let reps = ctx.replicas_or(10);
    let reports = replicate(ctx.seed, reps, |s| lil_envelope_report(&p.dist, p.sigma, p.horizon, p.epsilon, s))?;
    let late: Vec<usize> = reports.iter().map(|r| r.exceedances_after(p.after)).collect();
    let hits = match p.expect.as_str() {
        "none" => late.iter().filter(|&&l| l == 0).count(),
        "persistent" => late.iter().filter(|&&l| l > 0).count(),
        other => return Err(Error::Config { key: "expect".into(), msg: format!("expected none|persistent, got {other}") }),
    };
    let r0 = &reports[0];
    let csv = rows_csv("decade,exceedances", r0.decade_counts.iter().enumerate().map(|(d, c)| vec![d.to_string(), c.to_string()]));
    let per: Vec<Value> = reports.iter().zip(&late).enumerate().map(|(i, (r, l))| json!({ "seed": ctx.seed + i as u64, "exceedances": r.exceedances, "late_exceedances": l, "last_exceedance": r.last_exceedance, "lower_band_fraction": r.lower_band_fraction })).collect();
    out(csv, resolved, per, json!({ "replicas_matching": hits, "replicas": reps }), Some(hits >= p.required.min(reps)))
}

fn lil_normal(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<LilParams>(ctx.params)?;
    lil_common(ctx, p, resolved)
}

fn lil_cauchy(ctx: &Ctx) -> Result<ExperimentOutput> {
    let mut v = ctx.params.clone();
    let obj = v.as_object_mut().ok_or_else(|| Error::Config { key: ".".into(), msg: "expected an object".into() })?;
    obj.entry("dist").or_insert(json!({ "family": "sqrt_cauchy" }));
    obj.entry("sigma").or_insert(json!(1.0));
    obj.entry("expect").or_insert(json!("persistent"));
    let (p, resolved) = params::<LilParams>(&v)?;
    lil_common(ctx, p, resolved)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GcltParams {
    dist: DistributionSpec,
    x: f64,
    horizon: usize,
    thin: usize,
    /// "log" or "harmonic".
    norm: String,
    tolerance: f64,
}

impl Default for GcltParams {
    fn default() -> Self {
        GcltParams { dist: DistributionSpec::normal(0.0, 1.0), x: 1.0, horizon: 100_000, thin: 1000, norm: "log".into(), tolerance: 0.15 }
    }
}

fn gclt(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<GcltParams>(ctx.params)?;
    let mut cfg = GcltConfig::half_line(p.dist.clone(), p.x, p.horizon);
    cfg.thin = p.thin.max(1);
    cfg.norm = match p.norm.as_str() {
        "log" => GcltNorm::Log,
        "harmonic" => GcltNorm::Harmonic,
        other => return Err(Error::Config { key: "norm".into(), msg: format!("expected log|harmonic, got {other}") }),
    };
    let reps = ctx.replicas_or(10);
    let traces = replicate(ctx.seed, reps, |s| gclt_as_trace(&cfg, s))?;
    let finals: Vec<f64> = traces.iter().map(|t| t.last_state().map(|s| s[0]).unwrap_or(f64::NAN)).collect();
    let med = median(&finals);
    let per = finals.iter().enumerate().map(|(i, v)| json!({ "seed": ctx.seed + i as u64, "final": v })).collect();
    out(traces[0].to_csv_string(), resolved, per, json!({ "median_final": med }), Some((med - 1.0).abs() <= p.tolerance))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ConditionsParams {
    /// Iid copies of one law.
    ThreeSeries { dist: DistributionSpec, k: f64, horizon: usize },
    /// c_i = i^{−p}(log₂(i+1))^{−q}.
    Orthogonal { p: f64, q: f64, horizon: usize, epsilons: Vec<f64> },
    StepPlan { mu: GainsSpec, c: Option<GainsSpec>, horizon: usize },
}

impl Default for ConditionsParams {
    fn default() -> Self {
        ConditionsParams::StepPlan { mu: GainsSpec::Harmonic { a: 1.0 }, c: Some(GainsSpec::Power { a: 1.0, gamma: 0.25 }), horizon: 100_000 }
    }
}

fn report_csv(rep: &ConditionReport) -> String {
    rows_csv("condition,value,trend,verdict", rep.conditions.iter().map(|(k, e)| vec![k.clone(), f(e.value), f(e.trend), format!("{:?}", e.verdict)]))
}

fn conditions(ctx: &Ctx) -> Result<ExperimentOutput> {
    let v = if ctx.params.as_object().is_some_and(|o| o.is_empty()) { serde_json::to_value(ConditionsParams::default()).expect("default serializes") } else { ctx.params.clone() };
    let (p, resolved) = params::<ConditionsParams>(&v)?;
    let rep = match p {
        ConditionsParams::ThreeSeries { dist, k, horizon } => three_series_report(|_| dist.clone(), k, horizon)?,
        ConditionsParams::Orthogonal { p, q, horizon, epsilons } => orthogonal_coeff_conditions(|i| (i as f64).powf(-p) * ((i + 1) as f64).log2().powf(-q), horizon, &epsilons)?,
        ConditionsParams::StepPlan { mu, c, horizon } => {
            let mut plan = StepPlan::new(mu.build()?);
            if let Some(c) = c {
                plan = plan.with_spacing(c.build()?);
            }
            check_step_plan(&plan, horizon)?
        }
    };
    let report = serde_json::to_value(&rep).map_err(|e| Error::Config { key: ".".into(), msg: e.to_string() })?;
    out(report_csv(&rep), resolved, vec![], json!({ "report": report }), None)
}

// ------------------------------------------------------------------------- sa

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SaParams {
    drift: TestFunction,
    noise: Option<DistributionSpec>,
    gains: GainsSpec,
    x0: Vec<f64>,
    horizon: usize,
    projection: Option<ProjectionSpec>,
    band: f64,
    /// "near": final within band of θ; "far": final farther than band.
    expect: String,
    required: usize,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            drift: TestFunction::ExpDamped { theta: vec![3.0], rate: 0.1 },
            noise: Some(DistributionSpec::normal(0.0, 2.0)),
            gains: GainsSpec::Harmonic { a: 1.0 },
            x0: vec![0.0],
            horizon: 5000,
            projection: None,
            band: 0.2,
            expect: "near".into(),
            required: 8,
        }
    }
}

fn sa_common(ctx: &Ctx, p: SaParams, resolved: Value) -> Result<ExperimentOutput> {
    let theta = p.drift.theta();
    let noise = p.noise.clone().map_or(Noise::None, Noise::Additive);
    let problem = p.drift.clone().into_problem(noise);
    let plan = StepPlan::new(p.gains.build()?);
    let set = p.projection.as_ref().map(ProjectionSpec::build).transpose()?;
    let reps = ctx.replicas_or(10);
    let traces = replicate(ctx.seed, reps, |s| match &set {
        Some(v) => projected_run(&problem, &plan, v, &p.x0, p.horizon, s),
        None => robbins_monro(&problem, &plan, &p.x0, p.horizon, s),
    })?;
    let errs: Vec<Option<f64>> = traces
        .iter()
        .map(|t| match (&theta, t.diverged()) {
            (Some(th), None) => t.last_state().map(|x| x.iter().zip(th).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()),
            _ => None,
        })
        .collect();
    let hits = match p.expect.as_str() {
        "near" => errs.iter().filter(|e| e.is_some_and(|e| e <= p.band)).count(),
        "far" => errs.iter().filter(|e| e.is_none_or(|e| e > p.band)).count(),
        other => return Err(Error::Config { key: "expect".into(), msg: format!("expected near|far, got {other}") }),
    };
    let per = traces.iter().zip(&errs).enumerate().map(|(i, (t, e))| json!({ "seed": ctx.seed + i as u64, "final": t.last_state(), "error": e, "diverged_at": t.diverged() })).collect();
    let pass = theta.as_ref().map(|_| hits >= p.required.min(reps));
    out(traces[0].to_csv_string(), resolved, per, json!({ "replicas_matching": hits, "replicas": reps }), pass)
}

fn sa_rm(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<SaParams>(ctx.params)?;
    sa_common(ctx, p, resolved)
}

fn sa_plateau(ctx: &Ctx) -> Result<ExperimentOutput> {
    let mut v = ctx.params.clone();
    let obj = v.as_object_mut().ok_or_else(|| Error::Config { key: ".".into(), msg: "expected an object".into() })?;
    obj.entry("drift").or_insert(json!({ "name": "exp_damped", "theta": [3.0], "rate": 1.0 }));
    obj.entry("x0").or_insert(json!([1.0]));
    obj.entry("band").or_insert(json!(1.0));
    obj.entry("expect").or_insert(json!("far"));
    obj.entry("required").or_insert(json!(6));
    let (p, resolved) = params::<SaParams>(&v)?;
    sa_common(ctx, p, resolved)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SaCltParams {
    b: f64,
    a: f64,
    sigma: f64,
    replicas: usize,
    horizon: usize,
    tolerance: f64,
}

impl Default for SaCltParams {
    fn default() -> Self {
        SaCltParams { b: 1.0, a: 1.0, sigma: 1.0, replicas: 1000, horizon: 10_000, tolerance: 0.15 }
    }
}

fn sa_clt(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<SaCltParams>(ctx.params)?;
    let r = asymptotic_variance_check(p.b, p.a, p.sigma, p.replicas, p.horizon, ctx.seed)?;
    let csv = rows_csv("empirical,theoretical,relative_error", [vec![f(r.empirical), f(r.theoretical), f(r.relative_error)]]);
    let rec = serde_json::to_value(r).expect("record serializes");
    out(csv, resolved, vec![], rec, Some(r.relative_error <= p.tolerance))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct KwParams {
    psi: TestFunction,
    noise: Option<DistributionSpec>,
    mu: GainsSpec,
    c: GainsSpec,
    x0: f64,
    horizon: usize,
    band: f64,
    required: usize,
}

impl Default for KwParams {
    fn default() -> Self {
        KwParams {
            psi: TestFunction::Quadratic { theta: vec![2.0] },
            noise: Some(DistributionSpec::normal(0.0, 1.0)),
            mu: GainsSpec::Harmonic { a: 1.0 },
            c: GainsSpec::Power { a: 1.0, gamma: 0.25 },
            x0: 0.0,
            horizon: 10_000,
            band: 0.2,
            required: 8,
        }
    }
}

fn kw(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<KwParams>(ctx.params)?;
    let plan = StepPlan::new(p.mu.build()?).with_spacing(p.c.build()?);
    let theta = p.psi.theta().map(|t| t[0]);
    let psi = |x: f64| p.psi.value(x);
    let reps = ctx.replicas_or(10);
    let traces = replicate(ctx.seed, reps, |s| kiefer_wolfowitz(&psi, p.noise.as_ref(), &plan, p.x0, theta, p.horizon, s))?;
    let finals: Vec<f64> = traces.iter().map(|t| t.last_state().map(|s| s[0]).unwrap_or(f64::NAN)).collect();
    let hits = theta.map(|t| finals.iter().filter(|x| (*x - t).abs() <= p.band).count());
    let per = finals.iter().enumerate().map(|(i, x)| json!({ "seed": ctx.seed + i as u64, "final": x })).collect();
    out(traces[0].to_csv_string(), resolved, per, json!({ "replicas_matching": hits, "replicas": reps }), hits.map(|h| h >= p.required.min(reps)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct QuantileParams {
    dist: DistributionSpec,
    alpha: f64,
    gains: GainsSpec,
    /// Second plan whose median error must be strictly larger.
    compare: Option<GainsSpec>,
    z0: f64,
    horizon: usize,
    target: Option<f64>,
    band: f64,
}

impl Default for QuantileParams {
    fn default() -> Self {
        QuantileParams {
            dist: DistributionSpec::normal(0.0, 2.0),
            alpha: 0.85,
            gains: GainsSpec::Power { a: 1.0, gamma: 0.75 },
            compare: Some(GainsSpec::Harmonic { a: 1.0 }),
            z0: 0.0,
            horizon: 5000,
            target: None,
            band: 0.08,
        }
    }
}

fn quantile(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (mut p, _) = params::<QuantileParams>(ctx.params)?;
    if p.target.is_none() {
        if let DistributionSpec::Normal { mean, stddev } = p.dist {
            p.target = Some(mean + stddev * norm_quantile(p.alpha));
        }
    }
    let resolved = serde_json::to_value(&p).expect("params serialize");
    let reps = ctx.replicas_or(20);
    let g = p.gains.build()?;
    let traces = replicate(ctx.seed, reps, |s| quantile_track(&p.dist, p.alpha, &g, p.z0, p.horizon, s))?;
    let finals: Vec<f64> = traces.iter().map(|t| t.last_state().map(|s| s[0]).unwrap_or(f64::NAN)).collect();
    let mut agg = Map::new();
    let mut per: Vec<Value> = finals.iter().enumerate().map(|(i, z)| json!({ "seed": ctx.seed + i as u64, "final": z })).collect();
    let mut pass = None;
    if let Some(t) = p.target {
        let med = median(&finals.iter().map(|z| (z - t).abs()).collect::<Vec<_>>());
        agg.insert("target".into(), json!(t));
        agg.insert("median_error".into(), json!(med));
        let mut ok = med <= p.band;
        if let Some(c) = p.compare {
            let gc = c.build()?;
            let other = replicate(ctx.seed, reps, |s| quantile_track(&p.dist, p.alpha, &gc, p.z0, p.horizon, s))?;
            let of: Vec<f64> = other.iter().map(|t| t.last_state().map(|s| s[0]).unwrap_or(f64::NAN)).collect();
            let med_c = median(&of.iter().map(|z| (z - t).abs()).collect::<Vec<_>>());
            agg.insert("compare_median_error".into(), json!(med_c));
            for (v, z) in per.iter_mut().zip(&of) {
                v["compare_final"] = json!(z);
            }
            ok &= med_c > med;
        }
        pass = Some(ok);
    }
    out(traces[0].to_csv_string(), resolved, per, Value::Object(agg), pass)
}

// -------------------------------------------------------------------- kernels

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DensityParams {
    /// "batch" or "recursive".
    mode: String,
    kernel: Kernel,
    dist: DistributionSpec,
    n: usize,
    c: f64,
    beta: f64,
    grid: Option<(f64, f64, usize)>,
}

impl Default for DensityParams {
    fn default() -> Self {
        DensityParams { mode: "recursive".into(), kernel: Kernel::Cauchy, dist: mixture(), n: 3000, c: 1.0, beta: 0.35, grid: Some((-5.0, 8.0, 1024)) }
    }
}

fn draw(dist: &DistributionSpec, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

fn density_estimate(p: &DensityParams, xs: &[f64]) -> Result<GridFunction> {
    let h_n = p.c * (p.n.max(1) as f64).powf(-p.beta);
    let grid = match p.grid {
        Some((lo, hi, m)) => linspace(lo, hi, m),
        None => crate::kernel::default_grid(xs, h_n, crate::kernel::DEFAULT_GRID_POINTS),
    };
    match p.mode.as_str() {
        "batch" => batch_density(xs, p.kernel, h_n, &grid),
        "recursive" => Ok(recursive_density(xs, p.kernel, Bandwidth::rule(p.c, p.beta), grid)?.estimate()),
        other => Err(Error::Config { key: "mode".into(), msg: format!("expected batch|recursive, got {other}") }),
    }
}

fn density(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<DensityParams>(ctx.params)?;
    let xs = draw(&p.dist, p.n, ctx.seed);
    let est = density_estimate(&p, &xs)?;
    let mut agg = Map::new();
    if p.dist.pdf(0.0).is_some() {
        let e = density_error(&est, &|x| p.dist.pdf(x).unwrap_or(0.0))?;
        agg.insert("l1".into(), json!(e.l1));
        agg.insert("l2".into(), json!(e.l2));
    }
    out(est.to_csv_string(), resolved, vec![], Value::Object(agg), None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConsistencyParams {
    n_small: usize,
    n_large: usize,
    kernel: Kernel,
    beta: f64,
    ratio_limit: f64,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        ConsistencyParams { n_small: 300, n_large: 3000, kernel: Kernel::Cauchy, beta: 0.35, ratio_limit: 1.5 }
    }
}

/// Median L1 errors over replicas of the recursive estimator at two sample
/// sizes and of the batch estimator (h = N^{−β}) at the larger one.
pub fn density_consistency(seed: u64, replicas: usize, n_small: usize, n_large: usize, kernel: Kernel, beta: f64) -> Result<(f64, f64, f64)> {
    let dist = mixture();
    let truth = |x: f64| dist.pdf(x).unwrap_or(0.0);
    let grid = linspace(-5.0, 8.0, 1024);
    let errs = replicate(seed, replicas, |s| {
        let xs = draw(&dist, n_large, s);
        let bw = Bandwidth::rule(1.0, beta);
        let small = recursive_density(&xs[..n_small], kernel, bw, grid.clone())?.estimate();
        let large = recursive_density(&xs, kernel, bw, grid.clone())?.estimate();
        let batch = batch_density(&xs, kernel, (n_large as f64).powf(-beta), &grid)?;
        Ok((density_error(&small, &truth)?.l1, density_error(&large, &truth)?.l1, density_error(&batch, &truth)?.l1))
    })?;
    let col = |k: usize| median(&errs.iter().map(|e| [e.0, e.1, e.2][k]).collect::<Vec<_>>());
    Ok((col(0), col(1), col(2)))
}

fn density_consistency_exp(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<ConsistencyParams>(ctx.params)?;
    let reps = ctx.replicas_or(20);
    let (small, large, batch) = density_consistency(ctx.seed, reps, p.n_small, p.n_large, p.kernel, p.beta)?;
    let pass = large < small && large <= p.ratio_limit * batch;
    let csv = rows_csv("estimator,n,median_l1", [vec!["recursive".into(), p.n_small.to_string(), f(small)], vec!["recursive".into(), p.n_large.to_string(), f(large)], vec!["batch".into(), p.n_large.to_string(), f(batch)]]);
    out(csv, resolved, vec![], json!({ "median_l1_small": small, "median_l1_large": large, "median_l1_batch": batch }), Some(pass))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CdfParams {
    dist: DistributionSpec,
    kernel: Kernel,
    n: usize,
    beta: f64,
    at: f64,
    target: Option<f64>,
    band: f64,
    grid: (f64, f64, usize),
}

impl Default for CdfParams {
    fn default() -> Self {
        CdfParams {
            dist: DistributionSpec::Discrete { points: vec![-1.0, 0.0, 2.0, 3.0], probs: vec![0.125, 0.5, 0.25, 0.125] },
            kernel: Kernel::Epanechnikov,
            n: 6000,
            beta: 0.4,
            at: 1.0,
            target: Some(0.625),
            band: 0.05,
            grid: (-2.0, 4.0, 601),
        }
    }
}

fn cdf(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<CdfParams>(ctx.params)?;
    let xs = draw(&p.dist, p.n, ctx.seed);
    let bw = Bandwidth::fixed((p.n as f64).powf(-p.beta));
    let est = cdf_estimate(&xs, p.kernel, &bw, &linspace(p.grid.0, p.grid.1, p.grid.2))?;
    let at = cdf_estimate(&xs, p.kernel, &bw, &[p.at])?.values[0];
    out(est.to_csv_string(), resolved, vec![], json!({ "value_at": at }), p.target.map(|t| (at - t).abs() <= p.band))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HistParams {
    dist: DistributionSpec,
    n: usize,
    edges: Vec<f64>,
}

impl Default for HistParams {
    fn default() -> Self {
        HistParams { dist: DistributionSpec::Uniform { lo: 0.0, hi: 1.0 }, n: 100_000, edges: linspace(0.0, 1.0, 11) }
    }
}

fn hist(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<HistParams>(ctx.params)?;
    let h = histogram(&draw(&p.dist, p.n, ctx.seed), &p.edges)?;
    let k = h.edges.len();
    let rows = (0..=k).map(|j| {
        let lo = if j == 0 { f64::NEG_INFINITY } else { h.edges[j - 1] };
        let hi = if j == k { f64::INFINITY } else { h.edges[j] };
        let expected = p.dist.cdf(hi) - p.dist.cdf(lo);
        vec![j.to_string(), f(lo), f(hi), h.counts[j].to_string(), f(h.masses[j]), f(expected)]
    });
    let max_dev = (0..=k)
        .map(|j| {
            let lo = if j == 0 { f64::NEG_INFINITY } else { h.edges[j - 1] };
            let hi = if j == k { f64::INFINITY } else { h.edges[j] };
            (h.masses[j] - (p.dist.cdf(hi) - p.dist.cdf(lo))).abs()
        })
        .fold(0.0, f64::max);
    out(rows_csv("cell,lo,hi,count,mass,expected", rows), resolved, vec![], json!({ "max_deviation": max_dev }), None)
}

// ----------------------------------------------------------------- regression

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegressParams {
    mode: String,
    truth: RegressionTruth,
    n: usize,
    kernel: Kernel,
    beta: f64,
    design: DistributionSpec,
    noise: DistributionSpec,
    noise_scale: f64,
    grid: (f64, f64, usize),
    /// Error window; `None` uses the points where the design density is at
    /// least `density_fraction` of its grid maximum.
    window: Option<(f64, f64)>,
    density_fraction: f64,
    /// Pass when recursive error ≤ ratio_limit × batch error (recursive mode).
    ratio_limit: Option<f64>,
}

impl Default for RegressParams {
    fn default() -> Self {
        RegressParams {
            mode: "batch".into(),
            truth: RegressionTruth::Square,
            n: 1000,
            kernel: Kernel::Epanechnikov,
            beta: 0.4,
            design: DistributionSpec::normal(0.0, 2.0),
            noise: DistributionSpec::normal(0.0, 2.0),
            noise_scale: 0.5,
            grid: (-2.0, 2.0, 161),
            window: Some((-2.0, 2.0)),
            density_fraction: 0.1,
            ratio_limit: None,
        }
    }
}

fn regression_pairs(p: &RegressParams, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng_from_seed(seed);
    (0..p.n)
        .map(|_| {
            let x = p.design.sample(&mut rng);
            (x, p.truth.eval(x) + p.noise_scale * p.noise.sample(&mut rng))
        })
        .collect()
}

fn windowed(est: &GridFunction, p: &RegressParams) -> GridFunction {
    let keep: Vec<bool> = match p.window {
        Some((lo, hi)) => est.x.iter().map(|x| *x >= lo && *x <= hi).collect(),
        None => {
            let d: Vec<f64> = est.x.iter().map(|x| p.design.pdf(*x).unwrap_or(0.0)).collect();
            let top = d.iter().copied().fold(0.0, f64::max);
            d.iter().map(|v| *v >= p.density_fraction * top).collect()
        }
    };
    let mask = (0..est.len()).map(|i| !keep[i] || !est.is_defined(i)).collect();
    GridFunction::masked(est.x.clone(), est.values.clone(), mask)
}

fn regress(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<RegressParams>(ctx.params)?;
    let pairs = regression_pairs(&p, ctx.seed);
    let grid = linspace(p.grid.0, p.grid.1, p.grid.2);
    let h_n = (p.n as f64).powf(-p.beta);
    let batch = batch_regression(&pairs, p.kernel, h_n, &grid)?;
    let truth = |x: f64| p.truth.eval(x);
    let (lo, hi) = (p.grid.0, p.grid.1);
    let eb = regression_error(&windowed(&batch.function, &p), &truth, lo, hi);
    let mut agg = json!({ "batch_l1": eb.l1, "batch_mean_abs": eb.mean_abs, "batch_sup": eb.sup, "warnings": batch.warnings });
    let (est, pass) = match p.mode.as_str() {
        "batch" => (batch.function, None),
        "recursive" => {
            let st = recursive_regression(&pairs, p.kernel, Bandwidth::rule(1.0, p.beta), grid)?;
            let ev = evaluate_ratio(&st);
            let er = regression_error(&windowed(&ev.estimate.function, &p), &truth, lo, hi);
            agg["recursive_l1"] = json!(er.l1);
            agg["recursive_mean_abs"] = json!(er.mean_abs);
            agg["recursive_sup"] = json!(er.sup);
            agg["weighted_form_deviation"] = json!(ev.weighted_form_deviation);
            (ev.estimate.function, p.ratio_limit.map(|r| er.l1 <= r * eb.l1))
        }
        other => return Err(Error::Config { key: "mode".into(), msg: format!("expected batch|recursive, got {other}") }),
    };
    out(est.to_csv_string(), resolved, vec![], agg, pass)
}

fn regress_sine(ctx: &Ctx) -> Result<ExperimentOutput> {
    let mut v = ctx.params.clone();
    let obj = v.as_object_mut().ok_or_else(|| Error::Config { key: ".".into(), msg: "expected an object".into() })?;
    for (k, d) in [
        ("mode", json!("recursive")),
        ("truth", json!("clipped_sine")),
        ("n", json!(5000)),
        ("kernel", json!("cauchy")),
        ("beta", json!(0.35)),
        ("design", serde_json::to_value(mixture()).expect("serializes")),
        ("noise", json!({ "family": "normal", "mean": 0.0, "stddev": 1.0 })),
        ("noise_scale", json!(1.0)),
        ("grid", json!([-4.0, 7.0, 221])),
        ("window", Value::Null),
        ("ratio_limit", json!(1.5)),
    ] {
        obj.entry(k).or_insert(d);
    }
    regress(&Ctx { params: &v, seed: ctx.seed, replicas: ctx.replicas })
}

// ------------------------------------------------------------- identification

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Ar3Params {
    /// "lms" or "normalized".
    method: String,
    coeffs: Vec<f64>,
    noise: DistributionSpec,
    /// Defaults: harmonic for the normalized method, 0.02(n+1)^{-0.6} for LMS.
    gains: Option<GainsSpec>,
    horizon: usize,
    band: f64,
    required: usize,
    thin: usize,
}

impl Default for Ar3Params {
    fn default() -> Self {
        Ar3Params {
            method: "normalized".into(),
            coeffs: vec![1.6, -1.475, 0.7605],
            noise: DistributionSpec::normal(0.0, 1.0),
            gains: None,
            horizon: 30_000,
            band: 0.1,
            required: 8,
            thin: 10,
        }
    }
}

fn ident_ar3(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (mut p, _) = params::<Ar3Params>(ctx.params)?;
    if p.gains.is_none() {
        p.gains = Some(match p.method.as_str() {
            "lms" => GainsSpec::Power { a: 0.02, gamma: 0.6 },
            _ => GainsSpec::Harmonic { a: 1.0 },
        });
    }
    let resolved = serde_json::to_value(&p).expect("params serialize");
    let q = p.coeffs.len();
    let g = p.gains.as_ref().expect("filled above").build()?;
    let reps = ctx.replicas_or(10);
    let runs = replicate(ctx.seed, reps, |s| {
        let y = SampleStream::new(ProcessSpec::ar(p.coeffs.clone(), p.noise.clone()), s)?.sample(p.horizon + q);
        match p.method.as_str() {
            "lms" => identify_lms(&y, q, &g, &vec![0.0; q], p.horizon, Some(&p.coeffs)),
            "normalized" => identify_normalized(&y, q, &g, &vec![0.0; q], p.horizon, Some(&p.coeffs), NormalizedConfig::default()),
            other => Err(Error::Config { key: "method".into(), msg: format!("expected lms|normalized, got {other}") }),
        }
    })?;
    let hits = runs.iter().filter(|r| r.final_error.is_some_and(|e| e <= p.band)).count();
    let per = runs.iter().enumerate().map(|(i, r)| json!({ "seed": ctx.seed + i as u64, "final": r.last(), "final_error": r.final_error, "flags": r.flags })).collect();
    let thin = p.thin.max(1);
    let t = &runs[0].estimates;
    let mut csv = String::from("step");
    for d in 0..q {
        let _ = write!(csv, ",b_{d}");
    }
    csv.push('\n');
    for r in (0..t.len()).filter(|r| r % thin == 0 || *r + 1 == t.len()) {
        let _ = write!(csv, "{}", t.step(r));
        for v in t.state(r) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    out(csv, resolved, per, json!({ "final_error": runs[0].final_error, "replicas_matching": hits, "replicas": reps }), (p.method == "normalized").then_some(hits >= p.required.min(reps)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Ar1Params {
    alpha: f64,
    noise: DistributionSpec,
    n: usize,
    band: f64,
}

impl Default for Ar1Params {
    fn default() -> Self {
        Ar1Params { alpha: 0.99, noise: DistributionSpec::normal(0.0, 3.0), n: 300_000, band: 0.01 }
    }
}

fn ident_ar1(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<Ar1Params>(ctx.params)?;
    let y = SampleStream::new(ProcessSpec::ar(vec![p.alpha], p.noise.clone()), ctx.seed)?.sample(p.n);
    let checkpoints: Vec<usize> = [1_000, 10_000, 100_000, p.n].into_iter().filter(|&k| k <= p.n).collect();
    let mut rows = Vec::new();
    let mut last = f64::NAN;
    for k in checkpoints {
        last = ar1_ratio_estimate(&y[..k])?;
        rows.push(vec![k.to_string(), f(last)]);
    }
    out(rows_csv("n,estimate", rows), resolved, vec![], json!({ "estimate": last, "error": (last - p.alpha).abs() }), Some((last - p.alpha).abs() <= p.band))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScalarParams {
    p: f64,
    noise: ProcessSpec,
    gains: GainsSpec,
    q0: f64,
    horizon: usize,
    band: f64,
    required: usize,
}

impl Default for ScalarParams {
    fn default() -> Self {
        ScalarParams { p: 0.9, noise: default_scalar_noise(), gains: GainsSpec::Harmonic { a: 1.0 }, q0: 0.0, horizon: 5000, band: 0.1, required: 7 }
    }
}

fn ident_scalar(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<ScalarParams>(ctx.params)?;
    let g = p.gains.build()?;
    let reps = ctx.replicas_or(10);
    let runs = replicate(ctx.seed, reps, |s| {
        let y = scalar_system_series(p.p, &p.noise, p.horizon, s)?;
        identify_scalar_nonlinear(&y, &g, p.q0, p.horizon, Some(p.p))
    })?;
    let hits = runs.iter().filter(|r| r.final_error.is_some_and(|e| e <= p.band)).count();
    let per = runs.iter().enumerate().map(|(i, r)| json!({ "seed": ctx.seed + i as u64, "final": r.last(), "final_error": r.final_error, "eta_mean": r.estimates.aux_value(r.estimates.len() - 1, "eta_mean") })).collect();
    out(runs[0].estimates.to_csv_string(), resolved, per, json!({ "replicas_matching": hits, "replicas": reps }), Some(hits >= p.required.min(reps)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct NonparamParams {
    /// "scalar" (f(·; p)) or "piecewise".
    target: String,
    p: f64,
    noise: TransitionNoise,
    n: usize,
    kernel: Kernel,
    beta: f64,
    grid: (f64, f64, usize),
}

impl Default for NonparamParams {
    fn default() -> Self {
        NonparamParams { target: "scalar".into(), p: 0.9, noise: TransitionNoise::SineVariance, n: 6000, kernel: Kernel::Cauchy, beta: 0.5, grid: (-8.0, 4.0, 241) }
    }
}

/// Occupancy window: the 10% and 90% sample quantiles of the series.
pub fn occupancy_window(series: &[f64]) -> (f64, f64) {
    let mut v = series.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |t: f64| v[((v.len() - 1) as f64 * t).round() as usize];
    (q(0.1), q(0.9))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonparametricOutcome {
    pub estimate: GridFunction,
    pub l1: f64,
    pub sup: f64,
    /// Occupancy window the errors are taken over.
    pub window: (f64, f64),
}

/// Runs one nonparametric identification and scores it on the occupancy window.
#[allow(clippy::too_many_arguments)]
pub fn nonparametric_run(target: &str, p: f64, noise: TransitionNoise, n: usize, kernel: Kernel, beta: f64, grid: (f64, f64, usize), seed: u64) -> Result<NonparametricOutcome> {
    let f: Box<dyn Fn(f64) -> f64 + Sync> = match target {
        "scalar" => Box::new(move |x| scalar_drift(x, p)),
        "piecewise" => Box::new(piecewise_target),
        other => return Err(Error::Config { key: "target".into(), msg: format!("expected scalar|piecewise, got {other}") }),
    };
    let series = transition_series(&*f, noise, n, seed);
    let est = identify_nonparametric(&series, kernel, Bandwidth::rule(1.0, beta), linspace(grid.0, grid.1, grid.2), n)?;
    let (lo, hi) = occupancy_window(&series[..n]);
    let e = regression_error(&est.function, &*f, lo, hi);
    Ok(NonparametricOutcome { estimate: est.function, l1: e.l1, sup: e.sup, window: (lo, hi) })
}

fn ident_nonparam(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<NonparamParams>(ctx.params)?;
    let r = nonparametric_run(&p.target, p.p, p.noise, p.n, p.kernel, p.beta, p.grid, ctx.seed)?;
    out(r.estimate.to_csv_string(), resolved, vec![], json!({ "l1": r.l1, "sup": r.sup, "window": [r.window.0, r.window.1] }), None)
}

// ---------------------------------------------------------------- monte carlo

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct McParams {
    integrand: String,
    epsilon: f64,
    confidence: f64,
    variance_bound: Option<f64>,
    rounding: PlanRounding,
    hit_or_miss: bool,
}

impl Default for McParams {
    fn default() -> Self {
        McParams { integrand: "sqrt_quartic".into(), epsilon: 0.01, confidence: 0.98, variance_bound: None, rounding: PlanRounding::ThreeSignificant, hit_or_miss: false }
    }
}

fn integrand_truth(name: &str) -> Option<f64> {
    match name {
        "sqrt_quartic" => Some(sqrt_quartic_integral()),
        "identity" => Some(0.5),
        "square" => Some(1.0 / 3.0),
        "one" => Some(1.0),
        _ => None,
    }
}

type McSetup = (fn(f64) -> f64, crate::monte_carlo::McPlan, Option<f64>);

fn mc_setup(p: &McParams) -> Result<McSetup> {
    let g = builtin_integrand(&p.integrand)?;
    let v = match p.variance_bound {
        Some(v) => v,
        None if p.integrand == "sqrt_quartic" => sqrt_quartic_variance_bound(),
        None => return Err(Error::Config { key: "variance_bound".into(), msg: "required for this integrand".into() }),
    };
    let plan = plan_sample_size_with(p.epsilon, p.confidence, v, p.rounding)?;
    Ok((g, plan, integrand_truth(&p.integrand)))
}

fn mc_sqrt(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<McParams>(ctx.params)?;
    let (g, plan, truth) = mc_setup(&p)?;
    let mode = if p.hit_or_miss { McMode::HitOrMiss { upper: 1.0 } } else { McMode::Mean };
    let e = mc_integrate(|x| g(x[0]), &BoxDomain::unit(1), plan.n_required, ctx.seed, mode)?;
    let csv = rows_csv("n,estimate,stderr,truth", [vec![e.n.to_string(), f(e.estimate), f(e.stderr), truth.map_or("NA".into(), f)]]);
    let agg = json!({ "plan": plan, "estimate": e.estimate, "stderr": e.stderr, "nonfinite": e.nonfinite, "truth": truth });
    out(csv, resolved, vec![], agg, truth.map(|t| (e.estimate - t).abs() <= p.epsilon))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CoverageParams {
    #[serde(flatten)]
    mc: McParams,
    runs: usize,
    required: usize,
}

impl Default for CoverageParams {
    fn default() -> Self {
        CoverageParams { mc: McParams::default(), runs: 100, required: 95 }
    }
}

fn mc_coverage(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<CoverageParams>(ctx.params)?;
    let (g, plan, truth) = mc_setup(&p.mc)?;
    let truth = truth.ok_or_else(|| Error::Config { key: "integrand".into(), msg: "coverage needs a known integral".into() })?;
    let ests = replicate(ctx.seed, p.runs, |s| mc_integrate(|x| g(x[0]), &BoxDomain::unit(1), plan.n_required, s, McMode::Mean))?;
    let inside = ests.iter().filter(|e| (e.estimate - truth).abs() <= plan.epsilon).count();
    let csv = rows_csv("seed,estimate,inside", ests.iter().enumerate().map(|(i, e)| vec![(ctx.seed + i as u64).to_string(), f(e.estimate), (((e.estimate - truth).abs() <= plan.epsilon) as u8).to_string()]));
    out(csv, resolved, vec![], json!({ "plan": plan, "inside": inside, "runs": p.runs, "truth": truth }), Some(inside >= p.required))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PondParams {
    marked: u64,
    unmarked: u64,
    catches: u64,
    band: f64,
    required: usize,
}

impl Default for PondParams {
    fn default() -> Self {
        PondParams { marked: 100, unmarked: 900, catches: 10_000, band: 0.1, required: 9 }
    }
}

fn mc_pond(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<PondParams>(ctx.params)?;
    let reps = ctx.replicas_or(10);
    let ests = replicate(ctx.seed, reps, |s| capture_recapture(p.marked, p.catches, simulate_pond(p.marked, p.unmarked, p.catches, s)?))?;
    let target = p.unmarked as f64;
    let hits = ests.iter().filter(|m| (*m - target).abs() <= p.band * target).count();
    let csv = rows_csv("seed,estimate", ests.iter().enumerate().map(|(i, m)| vec![(ctx.seed + i as u64).to_string(), f(*m)]));
    out(csv, resolved, vec![], json!({ "replicas_matching": hits, "replicas": reps }), Some(hits >= p.required.min(reps)))
}

// ------------------------------------------------------------------ processes

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleParams {
    spec: ProcessSpec,
    n: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams { spec: ProcessSpec::iid(DistributionSpec::normal(0.0, 1.0)), n: 1000 }
    }
}

fn sample(ctx: &Ctx) -> Result<ExperimentOutput> {
    let (p, resolved) = params::<SampleParams>(ctx.params)?;
    let xs = SampleStream::new(p.spec, ctx.seed)?.sample(p.n);
    let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let mut buf = Vec::new();
    crate::trace::write_sequence_csv(&xs, &mut buf)?;
    out(String::from_utf8(buf).expect("ascii"), resolved, vec![], json!({ "mean": mean }), None)
}

// ------------------------------------------------------------------- registry

macro_rules! exp {
    ($id:literal, $body:expr, $desc:literal, $anchor:literal) => {
        Experiment { id: $id, description: $desc, anchor: $anchor, body: $body }
    };
}

static REGISTRY: &[Experiment] = &[
    exp!("summ-sequence", summ_sequence, "weight family, conjugate steps and round trip", "ch2: Riesz conjugacy"),
    exp!("summ-cesaro", summ_cesaro, "Cesaro coefficient and mean composition identities", "ch2: Cesaro lemma ii/iv"),
    exp!("recursion-identity", recursion_identity, "basic identity of the averaging recursion over 1e5 steps", "ch2: basic recursion identity"),
    exp!("lln-riesz", lln_riesz, "Riesz-weighted running mean of a process", "ch3: weighted law of large numbers"),
    exp!("lln-jamison", lln_jamison, "Jamison counting function N(x)", "ch3: Jamison criterion"),
    exp!("clt-hist", clt_block_histogram_exp, "standardized block sums against the normal law", "ch1: CLT histogram"),
    exp!("lil-normal", lil_normal, "partial sums inside the LIL envelope", "ch1: LIL envelope simulation"),
    exp!("lil-sqrt-cauchy", lil_cauchy, "infinite-variance sums leave the envelope", "ch1: LIL envelope simulation"),
    exp!("gclt", gclt, "almost sure global CLT average at x", "ch3: almost sure CLT"),
    exp!("sa-rm", sa_rm, "Robbins-Monro on the exp-damped drift", "ch4: first SA example"),
    exp!("sa-rm-plateau", sa_plateau, "Robbins-Monro stalls on a flat drift", "ch4: small-function example"),
    exp!("sa-clt", sa_clt, "asymptotic variance of Robbins-Monro", "ch4: SA central limit theorem"),
    exp!("kw", kw, "Kiefer-Wolfowitz on a noisy quadratic", "ch4: Kiefer-Wolfowitz procedure"),
    exp!("quantile", quantile, "stochastic approximation of a quantile", "ch4: quantile example"),
    exp!("density", density, "batch or recursive kernel density estimate", "ch5: recursive density example"),
    exp!("density-consistency", density_consistency_exp, "L1 consistency of the recursive density estimate", "ch5: recursive density example"),
    exp!("cdf", cdf, "kernel estimate of a discrete cdf", "ch5: kernel cdf remark"),
    exp!("hist", hist, "histogram with unbounded end cells", "ch5: histogram remark"),
    exp!("regress", regress, "batch or recursive kernel regression", "ch5: regression example"),
    exp!("regress-sine", regress_sine, "recursive regression of a clipped sine", "ch5: recursive regression example"),
    exp!("ident-ar3", ident_ar3, "AR(3) identification by LMS or normalized SA", "ch6: AR(3) identification"),
    exp!("ident-ar1", ident_ar1, "AR(1) ratio estimator", "ch1: identification example"),
    exp!("ident-scalar", ident_scalar, "kink location of a scalar nonlinear system", "ch6: scalar nonlinear example"),
    exp!("ident-nonparam", ident_nonparam, "nonparametric identification of a transition map", "ch6: nonparametric identification"),
    exp!("mc-sqrt", mc_sqrt, "planned Monte Carlo integral of sqrt(1-x^4)", "ch3: Monte Carlo section"),
    exp!("mc-coverage", mc_coverage, "coverage of the planned Monte Carlo band", "ch3: Monte Carlo section"),
    exp!("mc-pond", mc_pond, "capture-recapture on a simulated pond", "ch1: capture-recapture example"),
    exp!("conditions", conditions, "convergence-condition report", "ch3-4: series conditions"),
    exp!("sample", sample, "draws from a process spec", "ch3: process sources"),
];

fn clt_block_histogram_exp(ctx: &Ctx) -> Result<ExperimentOutput> {
    clt_hist(ctx)
}

/// Registered experiments in stable order.
pub fn list_experiments() -> &'static [Experiment] {
    REGISTRY
}

pub fn find_experiment(id: &str) -> Option<&'static Experiment> {
    REGISTRY.iter().find(|e| e.id == id)
}

/// Tab-separated `id  description  anchor` listing.
pub fn listing() -> String {
    let w = REGISTRY.iter().map(|e| e.id.len()).max().unwrap_or(0);
    let mut s = String::new();
    for e in REGISTRY {
        let _ = writeln!(s, "{:w$}  {}  [{}]", e.id, e.description, e.anchor);
    }
    s
}

/// Runs an experiment in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let e = find_experiment(&cfg.id).ok_or_else(|| Error::UnknownExperiment(cfg.id.clone()))?;
    let ctx = Ctx { params: &cfg.params, seed: cfg.seed, replicas: cfg.replicas };
    let o = (e.body)(&ctx)?;
    let config = json!({ "id": cfg.id, "params": o.params, "seed": cfg.seed, "replicas": cfg.replicas, "overrides": cfg.overrides });
    Ok(RunSummary { id: cfg.id.clone(), config, per_replica: o.per_replica, aggregate: o.aggregate, pass: o.pass, csv: o.csv })
}

/// Runs an experiment and writes `<out>/<id>.csv` and `<out>/<id>.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let s = execute(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join(format!("{}.csv", cfg.id)), &s.csv)?;
    fs::write(cfg.out.join(format!("{}.json", cfg.id)), s.to_json())?;
    Ok(s)
}

/// Writes the CSV to `path` and the summary next to it with a `.json`
/// extension (or both to stdout when `path` is None).
pub fn write_outputs(s: &RunSummary, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, &s.csv)?;
            fs::write(p.with_extension("json"), s.to_json())?;
        }
        None => print!("{}", s.csv),
    }
    Ok(())
}

/// Unit check used by tests: all builtin kernel efficiencies.
pub fn kernel_efficiencies() -> Vec<(Kernel, f64)> {
    Kernel::ALL.iter().map(|k| (*k, crate::kernel::kernel_efficiency(*k).unwrap_or(f64::NAN))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(id: &str, params: Value) -> ExperimentConfig {
        ExperimentConfig { id: id.into(), params, seed: 0, replicas: None, out: PathBuf::new(), overrides: vec![] }
    }

    #[test]
    fn registry_shape() {
        assert!(REGISTRY.len() >= 15);
        let mut ids: Vec<&str> = REGISTRY.iter().map(|e| e.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), REGISTRY.len());
        assert!(REGISTRY.iter().all(|e| !e.anchor.is_empty()));
        assert_eq!(listing(), listing());
    }

    #[test]
    fn defaults_and_schema_errors() {
        let s = execute(&cfg("summ-sequence", json!({}))).unwrap();
        assert_eq!(s.config["params"]["horizon"], json!(20));
        match execute(&cfg("summ-sequence", json!({ "horizon": "many" }))) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "horizon"),
            other => panic!("{other:?}"),
        }
        match execute(&cfg("summ-sequence", json!({ "horizn": 3 }))) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "horizn"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(execute(&cfg("nope", json!({}))), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        fs::write(&file, r#"{"horizon": 5, "family": "square"}"#).unwrap();
        let c = parse_config("summ-sequence", Some(&file), &["horizon=7".into()], Some(1), None, dir.path()).unwrap();
        let s = execute(&c).unwrap();
        assert_eq!(s.config["params"]["horizon"], json!(7));
        assert_eq!(s.config["params"]["family"], json!("square"));
        assert_eq!(s.config["overrides"], json!(["horizon=7"]));
        let empty = dir.path().join("e.json");
        fs::write(&empty, "").unwrap();
        assert!(parse_config("summ-sequence", Some(&empty), &[], None, None, dir.path()).is_ok());
    }

    #[test]
    fn nested_override() {
        let mut v = json!({});
        apply_override(&mut v, "dist.family=normal").unwrap();
        apply_override(&mut v, "dist.stddev=2").unwrap();
        assert_eq!(v, json!({ "dist": { "family": "normal", "stddev": 2 } }));
    }

    #[test]
    fn cheap_experiments_pass() {
        for id in ["summ-sequence", "summ-cesaro", "lln-jamison", "cdf", "mc-sqrt", "mc-pond"] {
            let s = execute(&cfg(id, json!({}))).unwrap();
            assert_eq!(s.pass, Some(true), "{id}: {:?}", s.aggregate);
        }
    }

    #[test]
    fn run_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig { out: dir.path().to_path_buf(), ..cfg("summ-sequence", json!({})) };
        run_experiment(&c).unwrap();
        assert!(dir.path().join("summ-sequence.csv").exists());
        let js: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summ-sequence.json")).unwrap()).unwrap();
        for k in ["id", "config", "per_replica", "aggregate", "pass"] {
            assert!(js.get(k).is_some(), "{k}");
        }
    }
}
