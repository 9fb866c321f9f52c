use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use iterlab::harness::{execute, find_experiment, listing, parse_config, write_outputs, RunSummary};
use iterlab::Error;

/// Iterative estimation and stochastic approximation experiments.
///
/// `iterlab <experiment-id> [--config f.json] [--seed S] [--replicas R] [--out dir] [--assert]`
/// runs a registered experiment; `iterlab list` prints the registry. The
/// short forms (summ, sample, lln, clt, lil, gclt, conditions, sa, kw,
/// quantile, density, cdf, hist, regress, ident, mc) map onto experiments.
#[derive(Parser, Debug)]
#[command(name = "iterlab", version)]
struct Cli {
    /// Experiment id, `list`, or a short form.
    command: String,
    /// JSON parameter file (an empty file means defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; replica r uses seed + r. Falls back to ITERLAB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory, or a `.csv` file path (summary goes next to it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit nonzero when the experiment reports failure.
    #[arg(long = "assert")]
    assert_pass: bool,
    /// Parameter override `key=value` (dotted keys nest); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    /// JSON file with a process or distribution spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    truth: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "fn")]
    integrand: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    conf: Option<f64>,
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn spec_json(p: &Path) -> Result<String, Error> {
    let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config { key: "spec".into(), msg: e.to_string() })?;
    Ok(v.to_string())
}

/// Resolves a short form into (experiment id, extra overrides).
fn resolve(cli: &Cli) -> Result<(String, Vec<String>), Error> {
    let mut sets = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            sets.push(format!("{k}={v}"));
        }
    };
    let id = match cli.command.as_str() {
        "summ" => {
            push("family", cli.family.as_deref().map(quoted));
            push("horizon", cli.horizon.map(|h| h.to_string()));
            "summ-sequence"
        }
        "sample" => {
            push("spec", cli.spec.as_deref().map(spec_json).transpose()?);
            push("n", cli.n.map(|n| n.to_string()));
            "sample"
        }
        "lln" => "lln-riesz",
        "clt" => "clt-hist",
        "lil" => "lil-normal",
        "gclt" | "conditions" | "kw" | "quantile" | "cdf" | "hist" => cli.command.as_str(),
        "sa" => "sa-rm",
        "density" => {
            push("mode", cli.mode.as_deref().map(quoted));
            push("kernel", cli.kernel.as_deref().map(quoted));
            push("dist", cli.spec.as_deref().map(spec_json).transpose()?);
            push("n", cli.n.map(|n| n.to_string()));
            push("beta", cli.beta.map(|b| b.to_string()));
            "density"
        }
        "regress" => {
            push("mode", cli.mode.as_deref().map(quoted));
            push("truth", cli.truth.as_deref().map(quoted));
            push("n", cli.n.map(|n| n.to_string()));
            push("kernel", cli.kernel.as_deref().map(quoted));
            push("beta", cli.beta.map(|b| b.to_string()));
            "regress"
        }
        "ident" => match cli.method.as_deref().unwrap_or("rls") {
            "lms" => {
                push("method", Some(quoted("lms")));
                "ident-ar3"
            }
            "rls" => {
                push("method", Some(quoted("normalized")));
                "ident-ar3"
            }
            "scalar" => "ident-scalar",
            "nonparam" => "ident-nonparam",
            other => return Err(Error::Config { key: "method".into(), msg: format!("expected lms|rls|scalar|nonparam, got {other}") }),
        },
        "mc" => {
            push("integrand", cli.integrand.as_deref().map(quoted));
            push("epsilon", cli.eps.map(|e| e.to_string()));
            push("confidence", cli.conf.map(|c| c.to_string()));
            "mc-sqrt"
        }
        other => other,
    };
    Ok((id.to_string(), sets))
}

fn report(s: &RunSummary) {
    eprintln!("{}: pass={}", s.id, s.pass.map_or("n/a".to_string(), |p| p.to_string()));
    eprintln!("{}", serde_json::to_string(&s.aggregate).unwrap_or_default());
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    if cli.command == "list" {
        print!("{}", listing());
        return Ok(ExitCode::SUCCESS);
    }
    let (id, mut sets) = resolve(cli)?;
    if find_experiment(&id).is_none() {
        eprintln!("unknown experiment `{id}`; registered experiments:");
        eprint!("{}", listing());
        return Ok(ExitCode::from(2));
    }
    sets.extend(cli.sets.iter().cloned());
    let out_dir = match &cli.out {
        Some(p) if p.extension().is_some() => p.parent().map(Path::to_path_buf).unwrap_or_default(),
        Some(p) => p.clone(),
        None => PathBuf::from("."),
    };
    let cfg = parse_config(&id, cli.config.as_deref(), &sets, cli.seed, cli.replicas, out_dir)?;
    let s = execute(&cfg)?;
    match &cli.out {
        Some(p) if p.extension().is_some() => write_outputs(&s, Some(p))?,
        Some(p) => write_outputs(&s, Some(&p.join(format!("{id}.csv"))))?,
        None => {
            write_outputs(&s, None)?;
        }
    }
    report(&s);
    if cli.command == "mc" || cli.command == "conditions" {
        println!("{}", s.to_json());
    }
    if cli.assert_pass && s.pass == Some(false) {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
