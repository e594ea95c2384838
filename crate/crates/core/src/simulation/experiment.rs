//! Monte Carlo experiment runner.
//!
//! A sweep is the product `distributions × adversaries × n × eta × trials`.
//! Trial `k` in that order draws its data from ChaCha8 stream `2k` and its
//! contamination from stream `2k + 1` of the master seed, so the output does
//! not depend on how trials are scheduled.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{sample_covariance, PsdMatrix, Sample, SymMatrix};
use crate::opnorm::estimate_opnorm;
use crate::p4::{estimate_cov_p4, P4Config, ScaleInfo};
use crate::pgt4::{estimate_cov_pgt4, Pgt4Config};
use crate::simulation::contamination::{contaminate_with, Adversary, ContaminationSpec};
use crate::simulation::samplers::{sample_with, DistributionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    SampleCov,
    P4,
    Pgt4,
    Trace,
    Opnorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(flatten)]
    pub kind: DistributionKind,
    pub dim: usize,
    /// Diagonal of Σ; identity when both this and `sigma` are absent.
    #[serde(default)]
    pub sigma_diag: Option<Vec<f64>>,
    /// Full Σ, row by row.
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
}

impl DistributionSpec {
    pub fn sigma(&self) -> Result<PsdMatrix> {
        let m = match (&self.sigma, &self.sigma_diag) {
            (Some(_), Some(_)) => return Err(Error::Config("give either sigma or sigma_diag, not both".into())),
            (Some(rows), None) => PsdMatrix::try_from_sym(SymMatrix::from_rows(rows)?)?,
            (None, Some(diag)) => PsdMatrix::from_diag(diag)?,
            (None, None) => PsdMatrix::identity(self.dim),
        };
        if m.dim() != self.dim {
            return Err(Error::Config(format!("sigma is {0}x{0} but dim = {1}", m.dim(), self.dim)));
        }
        Ok(m)
    }
}

/// How the pgt4 estimator picks `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PChoice {
    Fixed(f64),
    Rule(PRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PRule {
    /// `p = log(1/η)`, kept inside `(4, 64]`.
    LogInvEta,
}

impl PChoice {
    pub fn resolve(self, eta: f64) -> f64 {
        match self {
            PChoice::Fixed(p) => p,
            PChoice::Rule(PRule::LogInvEta) => {
                let p = if eta > 0.0 { (1.0 / eta).ln() } else { f64::INFINITY };
                p.clamp(4.0 + 1e-6, 64.0)
            }
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

fn default_adversaries() -> Vec<Adversary> {
    vec![Adversary::None]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// Per-split sample sizes `N`.
    pub n: Vec<usize>,
    pub eta: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub distributions: Vec<DistributionSpec>,
    #[serde(default = "default_adversaries")]
    pub adversaries: Vec<Adversary>,
    pub estimators: Vec<EstimatorKind>,
    /// Feed the distribution's analytic κ to the estimators.
    #[serde(default)]
    pub oracle_kappa: bool,
    /// Give pgt4 the true `tr(Σ)` and `‖Σ‖` instead of plug-in estimates.
    #[serde(default)]
    pub oracle_scale: bool,
    #[serde(default)]
    pub pgt4_p: Option<PChoice>,
    #[serde(default)]
    pub p4: P4Config,
    #[serde(default)]
    pub pgt4: Pgt4Config,
    #[serde(default)]
    pub output: Option<String>,
    /// Adds a wall-time column (makes the CSV nondeterministic).
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.n.is_empty() || self.eta.is_empty() {
            return Err(Error::Config("trials, n and eta must be nonempty".into()));
        }
        if self.distributions.is_empty() || self.adversaries.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("distributions, adversaries and estimators must be nonempty".into()));
        }
        if self.n.iter().any(|&n| n < 2) {
            return Err(Error::Config("every n must be at least 2".into()));
        }
        if self.eta.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::Config("eta values must lie in [0, 1]".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        for d in &self.distributions {
            d.kind.validate().map_err(|e| Error::Config(e.to_string()))?;
            d.sigma().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Number of records the sweep produces.
    pub fn len(&self) -> usize {
        self.distributions.len() * self.adversaries.len() * self.n.len() * self.eta.len() * self.trials
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows_per_split(&self) -> usize {
        let mut m = 1;
        if self.estimators.contains(&EstimatorKind::P4) {
            m = m.max(3);
        }
        if self.estimators.contains(&EstimatorKind::Pgt4) {
            m = m.max(if self.oracle_scale { 2 } else { 4 });
        }
        m
    }
}

/// One trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentRecord {
    pub trial_id: usize,
    pub seed: u64,
    pub distribution: String,
    pub adversary: String,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub delta: f64,
    pub kappa4: Option<f64>,
    pub err_sample_cov: Option<f64>,
    pub err_p4: Option<f64>,
    pub err_pgt4: Option<f64>,
    pub trace_hat: Option<f64>,
    pub err_trace: Option<f64>,
    pub opnorm_hat: Option<f64>,
    pub err_opnorm: Option<f64>,
    pub p4_feasible: Option<bool>,
    pub pgt4_feasible: Option<bool>,
    pub pgt4_q: Option<f64>,
    pub status: String,
    pub wall_ms: Option<f64>,
}

pub const CSV_HEADER: &str = "trial_id,seed,distribution,adversary,n,d,eta,delta,kappa4,err_sample_cov,err_p4,\
err_pgt4,trace_hat,err_trace,opnorm_hat,err_opnorm,p4_feasible,pgt4_feasible,pgt4_q,status";

struct Cell<'a> {
    dist: &'a DistributionSpec,
    adversary: &'a Adversary,
    n: usize,
    eta: f64,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell<'_>> {
    let mut out = Vec::with_capacity(cfg.len());
    for dist in &cfg.distributions {
        for adversary in &cfg.adversaries {
            for &n in &cfg.n {
                for &eta in &cfg.eta {
                    for _ in 0..cfg.trials {
                        out.push(Cell { dist, adversary, n, eta });
                    }
                }
            }
        }
    }
    out
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn err_vs(est: &SymMatrix, sigma: &PsdMatrix) -> f64 {
    est.sub(sigma).op_norm()
}

fn run_cell(cfg: &ExperimentConfig, k: usize, cell: &Cell<'_>, exec: Exec) -> ExperimentRecord {
    let start = Instant::now();
    let mut rec = ExperimentRecord {
        trial_id: k,
        seed: cfg.seed,
        distribution: cell.dist.kind.tag(),
        adversary: cell.adversary.tag(),
        n: cell.n,
        d: cell.dist.dim,
        eta: cell.eta,
        delta: cfg.delta,
        kappa4: cell.dist.kind.kappa(4.0),
        status: "ok".into(),
        ..Default::default()
    };
    let mut failures: Vec<String> = Vec::new();
    let outcome = (|| -> Result<()> {
        let sigma = cell.dist.sigma()?;
        let rows = cfg.rows_per_split() * cell.n;
        let clean = sample_with(&cell.dist.kind, &sigma, rows, &mut stream_rng(cfg.seed, 2 * k as u64))?;
        let spec = ContaminationSpec { adversary: cell.adversary.resolved(sigma.trace()), eta: cell.eta };
        let data = contaminate_with(&clean, &spec, &mut stream_rng(cfg.seed, 2 * k as u64 + 1))?;
        run_estimators(cfg, cell, &sigma, &data, &mut rec, &mut failures, exec)
    })();
    if let Err(e) = outcome {
        failures.push(format!("cell: {e}"));
    }
    if !failures.is_empty() {
        rec.status = format!("error: {}", failures.join(" | ")).replace(',', ";").replace('\n', " ");
    }
    if cfg.timing {
        rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    rec
}

fn run_estimators(
    cfg: &ExperimentConfig,
    cell: &Cell<'_>,
    sigma: &PsdMatrix,
    data: &Sample,
    rec: &mut ExperimentRecord,
    failures: &mut Vec<String>,
    exec: Exec,
) -> Result<()> {
    let n = cell.n;
    let first = data.slice_rows(0, n)?;
    let kappa4 = if cfg.oracle_kappa { cell.dist.kind.kappa(4.0) } else { None };
    let mut p4cfg = P4Config { eta: cell.eta, delta: cfg.delta, ..cfg.p4.clone() };
    if let Some(k) = kappa4 {
        p4cfg.kappa = k.max(1.0);
    }
    for est in &cfg.estimators {
        match est {
            EstimatorKind::SampleCov => {
                rec.err_sample_cov = Some(err_vs(&sample_covariance(&first), sigma));
            }
            EstimatorKind::Trace => {
                match crate::p4::trace_for_pipeline(&first, cell.eta, cfg.delta) {
                    Ok(t) => {
                        rec.trace_hat = Some(t);
                        rec.err_trace = Some((t - sigma.trace()).abs());
                    }
                    Err(e) => failures.push(format!("trace: {e}")),
                }
            }
            EstimatorKind::Opnorm => match estimate_opnorm(&first, &p4cfg.opnorm_config(), exec) {
                Ok(o) => {
                    rec.opnorm_hat = Some(o.value);
                    rec.err_opnorm = Some((o.value - sigma.op_norm()).abs());
                }
                Err(e) => failures.push(format!("opnorm: {e}")),
            },
            EstimatorKind::P4 => match estimate_cov_p4(&data.slice_rows(0, 3 * n)?, &p4cfg, exec) {
                Ok(r) => {
                    rec.err_p4 = Some(err_vs(&r.estimate, sigma));
                    rec.p4_feasible = Some(r.feasible);
                }
                Err(e) => failures.push(format!("p4: {e}")),
            },
            EstimatorKind::Pgt4 => {
                let mut pc = Pgt4Config { eta: cell.eta, delta: cfg.delta, ..cfg.pgt4.clone() };
                if let Some(choice) = cfg.pgt4_p {
                    pc.p = choice.resolve(cell.eta);
                }
                if cfg.oracle_kappa {
                    match cell.dist.kind.kappa(pc.p) {
                        Some(k) => pc.kappa_p = k.max(1.0),
                        None => {
                            failures.push(format!("pgt4: kappa({}) is infinite for this distribution", pc.p));
                            continue;
                        }
                    }
                    if let Some(k) = kappa4 {
                        pc.kappa4 = k.max(1.0);
                    }
                }
                let rows = if cfg.oracle_scale {
                    pc.scale = Some(ScaleInfo::oracle(sigma)?);
                    2 * n
                } else {
                    4 * n
                };
                match estimate_cov_pgt4(&data.slice_rows(0, rows)?, &pc, exec) {
                    Ok(r) => {
                        rec.err_pgt4 = Some(err_vs(&r.estimate, sigma));
                        rec.pgt4_feasible = Some(r.feasible);
                        rec.pgt4_q = r.chosen_q;
                    }
                    Err(e) => failures.push(format!("pgt4: {e}")),
                }
            }
        }
    }
    Ok(())
}

/// Runs every trial; records come back in trial order.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let cells = cells(cfg);
    let inner = if exec.is_parallel() { Exec::Sequential } else { exec };
    Ok(exec.map(cells.len(), |k| run_cell(cfg, k, &cells[k], inner)))
}

fn opt<T: std::fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or(String::new(), |v| v.to_string())
}

pub fn records_to_csv(records: &[ExperimentRecord], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    if timing {
        out.push_str(",wall_ms");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial_id,
            r.seed,
            r.distribution,
            r.adversary,
            r.n,
            r.d,
            r.eta,
            r.delta,
            opt(&r.kappa4),
            opt(&r.err_sample_cov),
            opt(&r.err_p4),
            opt(&r.err_pgt4),
            opt(&r.trace_hat),
            opt(&r.err_trace),
            opt(&r.opnorm_hat),
            opt(&r.err_opnorm),
            opt(&r.p4_feasible),
            opt(&r.pgt4_feasible),
            opt(&r.pgt4_q),
            r.status
        );
        if timing {
            let _ = write!(out, ",{}", opt(&r.wall_ms));
        }
        out.push('\n');
    }
    out
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
}
