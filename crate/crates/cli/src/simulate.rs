use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use robustcov::simulation::experiment::{median, records_to_csv, ExperimentRecord};
use robustcov::simulation::{run_experiment, ExperimentConfig};
use robustcov::Exec;

use crate::svg::{log_log_plot, Series};
use crate::{CmdResult, Failure};

#[derive(ClapArgs)]
pub struct Args {
    /// TOML experiment description.
    pub config: PathBuf,
    /// Overrides the config's output path; `-` writes to stdout.
    #[arg(long, short)]
    pub output: Option<String>,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Directory for SVG plots of median error against each swept axis.
    #[arg(long, value_name = "DIR")]
    pub plot: Option<PathBuf>,
    /// Append a wall-time column.
    #[arg(long)]
    pub timing: bool,
}

pub fn run(a: Args) -> CmdResult {
    let mut cfg = ExperimentConfig::from_file(&a.config).map_err(|e| Failure::input(format!("{}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    cfg.timing |= a.timing;
    let records = run_experiment(&cfg, Exec::Parallel).map_err(|e| Failure::input(e.to_string()))?;
    let csv = records_to_csv(&records, cfg.timing);
    match a.output.as_deref().or(cfg.output.as_deref()) {
        None | Some("-") => print!("{csv}"),
        Some(path) => std::fs::write(path, csv)?,
    }
    if let Some(dir) = &a.plot {
        std::fs::create_dir_all(dir)?;
        if cfg.n.len() > 1 {
            let series = sweep(&records, |r| r.n as f64, |r| format!("{}/{} eta={}", r.distribution, r.adversary, r.eta));
            std::fs::write(dir.join("error_vs_n.svg"), log_log_plot("median error vs N", "N", "error", &series))?;
        }
        if cfg.eta.iter().filter(|&&e| e > 0.0).count() > 1 {
            let positive: Vec<ExperimentRecord> = records.iter().filter(|r| r.eta > 0.0).cloned().collect();
            let series = sweep(&positive, |r| r.eta, |r| format!("{}/{} n={}", r.distribution, r.adversary, r.n));
            std::fs::write(dir.join("error_vs_eta.svg"), log_log_plot("median error vs eta", "eta", "error", &series))?;
        }
    }
    Ok(())
}

type Metric = (&'static str, fn(&ExperimentRecord) -> Option<f64>);

const METRICS: [Metric; 3] =
    [("sample_cov", |r| r.err_sample_cov), ("p4", |r| r.err_p4), ("pgt4", |r| r.err_pgt4)];

/// One series per estimator and fixed setting of the other axes; points are
/// medians over trials.
fn sweep(
    records: &[ExperimentRecord],
    x: impl Fn(&ExperimentRecord) -> f64,
    group: impl Fn(&ExperimentRecord) -> String,
) -> Vec<Series> {
    let mut out = Vec::new();
    for (name, metric) in METRICS {
        let mut cells: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
        for r in records {
            if let Some(e) = metric(r) {
                let xv = x(r);
                cells.entry(group(r)).or_default().entry(xv.to_bits()).or_insert((xv, Vec::new())).1.push(e);
            }
        }
        for (label, pts) in cells {
            let mut points: Vec<(f64, f64)> =
                pts.into_values().filter_map(|(xv, es)| median(es).map(|m| (xv, m))).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            if !points.is_empty() {
                out.push(Series { label: format!("{name} {label}"), points });
            }
        }
    }
    out
}
