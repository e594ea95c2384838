use std::path::PathBuf;

use clap::Args as ClapArgs;
use robustcov::io::{matrix_to_csv, read_matrix_file, read_sample_file};
use robustcov::linalg::PsdMatrix;
use robustcov::p4::{estimate_cov_p4, fit_minmax_psd, fit_with_scale, P4Config, ScaleInfo};
use robustcov::pgt4::{estimate_cov_pgt4, Pgt4Config};
use robustcov::simulation::add_gaussian_noise;
use robustcov::{effective_rank, Exec, Sample};
use serde::Deserialize;

use crate::{CmdResult, Failure};

#[derive(ClapArgs)]
pub struct Args {
    /// Input sample, one row per observation.
    pub input: PathBuf,
    /// L4–L2 estimator (default).
    #[arg(long, conflicts_with = "pgt4")]
    pub p4: bool,
    /// Lp–L2 estimator for p > 4.
    #[arg(long)]
    pub pgt4: bool,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// κ(4) for --p4, κ(p) for --pgt4.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Seeds the direction search and --jitter.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Known covariance (CSV) whose trace and operator norm replace the
    /// plug-in scale estimates.
    #[arg(long)]
    pub oracle_scale: Option<PathBuf>,
    /// Subtract the column means first.
    #[arg(long)]
    pub center: bool,
    /// Add N(0, σ²) noise to every entry.
    #[arg(long, value_name = "SIGMA")]
    pub jitter: Option<f64>,
    /// Use this truncation level and fit on the whole sample.
    #[arg(long)]
    pub lambda_override: Option<f64>,
    /// TOML file with any of the numeric options above; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the matrix here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOptions {
    eta: Option<f64>,
    delta: Option<f64>,
    kappa: Option<f64>,
    p: Option<f64>,
    seed: Option<u64>,
    jitter: Option<f64>,
    lambda_override: Option<f64>,
}

struct Options {
    eta: f64,
    delta: f64,
    kappa: Option<f64>,
    p: Option<f64>,
    seed: Option<u64>,
    jitter: Option<f64>,
    lambda_override: Option<f64>,
}

fn merge(a: &Args) -> Result<Options, Failure> {
    let file = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            toml::from_str::<FileOptions>(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        None => FileOptions::default(),
    };
    Ok(Options {
        eta: a.eta.or(file.eta).unwrap_or(0.0),
        delta: a.delta.or(file.delta).unwrap_or(0.1),
        kappa: a.kappa.or(file.kappa),
        p: a.p.or(file.p),
        seed: a.seed.or(file.seed),
        jitter: a.jitter.or(file.jitter),
        lambda_override: a.lambda_override.or(file.lambda_override),
    })
}

struct Outcome {
    estimate: PsdMatrix,
    summary: String,
}

pub fn run(a: Args) -> CmdResult {
    let o = merge(&a)?;
    let mut s = read_sample_file(&a.input).map_err(|e| Failure::input(format!("{}: {e}", a.input.display())))?;
    if a.center {
        s = s.centered();
    }
    if let Some(sigma) = o.jitter {
        s = add_gaussian_noise(&s, sigma, o.seed.unwrap_or(0))?;
    }
    let scale = match &a.oracle_scale {
        Some(path) => Some(ScaleInfo::oracle(&PsdMatrix::try_from_sym(read_matrix_file(path)?)?)?),
        None => None,
    };
    let out = if a.pgt4 { run_pgt4(&s, &o, scale)? } else { run_p4(&s, &o, scale)? };
    let rank = effective_rank(&out.estimate).map_or_else(|_| "undefined".to_string(), |r| format!("{r:.4}"));
    eprintln!("{} effective_rank={rank}", out.summary);
    let csv = matrix_to_csv(&out.estimate);
    match &a.output {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_p4(s: &Sample, o: &Options, scale: Option<ScaleInfo>) -> Result<Outcome, Failure> {
    let mut cfg = P4Config { eta: o.eta, delta: o.delta, lambda_override: o.lambda_override, ..Default::default() };
    if let Some(k) = o.kappa {
        cfg.kappa = k;
    }
    if let Some(seed) = o.seed {
        cfg.search = cfg.search.with_seed(seed);
    }
    let exec = Exec::Parallel;
    if let Some(scale) = scale {
        let r = fit_with_scale(s, scale, &cfg, exec)?;
        let summary = format!(
            "residual={:.6e} radius={:.6e} feasible={} lambda={:.6e}",
            r.fit.residual, r.radius, r.feasible, r.lambda
        );
        return Ok(Outcome { estimate: r.estimate, summary });
    }
    if let Some(lambda) = o.lambda_override {
        // Without a scale there is no feasibility radius to check against.
        let fit = fit_minmax_psd(s, lambda, &cfg, exec)?;
        let summary = format!("residual={:.6e} radius=none feasible=unchecked lambda={lambda:.6e}", fit.residual);
        return Ok(Outcome { estimate: fit.a, summary });
    }
    let r = estimate_cov_p4(s, &cfg, exec)?;
    let summary = format!(
        "residual={:.6e} radius={:.6e} feasible={} lambda={:.6e}",
        r.fit.residual, r.radius, r.feasible, r.lambda
    );
    Ok(Outcome { estimate: r.estimate, summary })
}

fn run_pgt4(s: &Sample, o: &Options, scale: Option<ScaleInfo>) -> Result<Outcome, Failure> {
    if o.lambda_override.is_some() {
        return Err(Failure::input("--lambda-override applies to --p4 only"));
    }
    let mut cfg = Pgt4Config { eta: o.eta, delta: o.delta, scale, ..Default::default() };
    if let Some(p) = o.p {
        cfg.p = p;
    }
    if let Some(k) = o.kappa {
        cfg.kappa_p = k;
    }
    if let Some(seed) = o.seed {
        cfg.search = cfg.search.with_seed(seed);
    }
    let r = estimate_cov_pgt4(s, &cfg, Exec::Parallel)?;
    let residual = r.levels.iter().find(|l| Some(l.q) == r.chosen_q).map(|l| l.fit.residual);
    let summary = format!(
        "residual={} eps={:.6e} feasible={} q={}",
        residual.map_or("none".into(), |x| format!("{x:.6e}")),
        r.eps,
        r.feasible,
        r.chosen_q.map_or("none".into(), |q| format!("{q:.6e}"))
    );
    Ok(Outcome { estimate: r.estimate, summary })
}
