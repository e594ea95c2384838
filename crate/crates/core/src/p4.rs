//! The covariance estimator for the L4–L2 regime.
//!
//! The corrupted sample of size `3N` is split in order into thirds: the first
//! estimates `tr(Σ)`, the second `‖Σ‖`, the third is fit. With
//!
//! ```text
//! λ = (1/(κ²‖Σ̂‖)) √((r̂ + log(1/δ) + ηN)/N)
//! ```
//!
//! the estimate is the PSD min-max fit of `v ↦ (1/(λN)) Σ ψ(λ⟨x_i,v⟩²)`,
//! kept if its residual is within `C λ κ⁴ ‖Σ̂‖² / 2` and replaced by zero
//! otherwise.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::directions::{seed_directions, SearchConfig, TruncatedTarget};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{PsdMatrix, Sample, SymMatrix};
use crate::minmax::{fit_minmax, FitConfig, FitResult};
use crate::opnorm::{estimate_opnorm, OpNormConfig};
use crate::scalar::{trace_epsilon, trimmed_mean};
use crate::truncation::TruncationLevel;

/// Plug-in scale estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo {
    pub trace_hat: f64,
    pub opnorm_hat: f64,
    pub r_hat: f64,
}

impl ScaleInfo {
    /// A trace estimate below the operator-norm estimate is raised to it, so
    /// that `r̂ ≥ 1`.
    pub fn new(trace_hat: f64, opnorm_hat: f64) -> Result<Self> {
        if !(opnorm_hat > 0.0 && opnorm_hat.is_finite()) || !trace_hat.is_finite() {
            return Err(Error::UndefinedScale);
        }
        let trace_hat = if trace_hat < opnorm_hat {
            warn!("trace estimate {trace_hat:.4e} below operator-norm estimate {opnorm_hat:.4e}; raising it");
            opnorm_hat
        } else {
            trace_hat
        };
        Ok(ScaleInfo { trace_hat, opnorm_hat, r_hat: trace_hat / opnorm_hat })
    }

    /// Scale of a known covariance.
    pub fn oracle(sigma: &PsdMatrix) -> Result<Self> {
        ScaleInfo::new(sigma.trace(), sigma.op_norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct P4Config {
    pub eta: f64,
    pub delta: f64,
    /// κ = κ(4).
    pub kappa: f64,
    /// The radius constant of the feasibility set.
    pub c_gamma: f64,
    /// The constant `c` of the operator-norm sub-estimator.
    pub c_catoni: f64,
    pub fit: FitConfig,
    pub search: SearchConfig,
    /// Replaces the computed truncation level.
    pub lambda_override: Option<f64>,
}

impl Default for P4Config {
    fn default() -> Self {
        P4Config {
            eta: 0.0,
            delta: 0.1,
            kappa: 1.5,
            c_gamma: 2.0,
            c_catoni: 1.0,
            fit: FitConfig::default(),
            search: SearchConfig::default(),
            lambda_override: None,
        }
    }
}

impl P4Config {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::param(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.kappa >= 1.0) || !(self.c_gamma > 0.0) {
            return Err(Error::param("need kappa >= 1 and c_gamma > 0"));
        }
        if let Some(l) = self.lambda_override {
            TruncationLevel::new(l)?;
        }
        Ok(())
    }

    pub fn opnorm_config(&self) -> OpNormConfig {
        OpNormConfig {
            eta: self.eta,
            delta: self.delta,
            kappa: self.kappa,
            c_catoni: self.c_catoni,
            search: self.search,
            ..OpNormConfig::default()
        }
    }
}

/// `(1/(κ²‖Σ̂‖)) √((r̂ + log(1/δ) + ηN)/N)`.
pub fn lambda_p4(scale: &ScaleInfo, cfg: &P4Config, n: usize) -> f64 {
    let n = n as f64;
    let num = scale.r_hat + (1.0 / cfg.delta).ln() + cfg.eta * n;
    (num / n).sqrt() / (cfg.kappa * cfg.kappa * scale.opnorm_hat)
}

/// `C λ κ⁴ ‖Σ̂‖² / 2`.
pub fn gamma_radius(lambda: f64, scale: &ScaleInfo, cfg: &P4Config) -> f64 {
    cfg.c_gamma * lambda * cfg.kappa.powi(4) * scale.opnorm_hat * scale.opnorm_hat / 2.0
}

/// Min-max PSD fit of the truncated process at level `lambda`.
pub fn fit_minmax_psd(s: &Sample, lambda: f64, cfg: &P4Config, exec: Exec) -> Result<FitResult> {
    let level = TruncationLevel::new(lambda)?;
    let d = s.dim();
    let seeds = seed_directions(s, &SymMatrix::zeros(d), cfg.search.budget_for(d), cfg.search.seed)?;
    let target = TruncatedTarget { sample: s, level };
    fit_minmax(&target, &seeds, &[], &cfg.fit, &cfg.search, exec)
}

/// Trace estimate with the trimming fraction capped at the largest value the
/// trimmed mean admits (the median) when `8η + 12 log(4/δ)/N` exceeds it.
pub fn trace_for_pipeline(s: &Sample, eta: f64, delta: f64) -> Result<f64> {
    let n = s.n() - s.n() % 2;
    if n < 2 {
        return Err(Error::DegenerateSample("trace split needs at least two rows".into()));
    }
    let m = n / 2;
    let mut eps = trace_epsilon(eta, delta, m);
    let k_max = m.div_ceil(2).max(1);
    if (eps * m as f64).ceil() as usize > k_max {
        warn!("trace trimming fraction {eps:.3} too large for {m} rows per half; trimming to the median");
        eps = (k_max as f64 - 0.5) / m as f64;
    }
    let norms: Vec<f64> = s.row_norms_sq().into_iter().take(n).collect();
    Ok(trimmed_mean(&norms, eps)?.max(0.0))
}

/// Everything the p=4 pipeline computed.
#[derive(Debug, Clone, PartialEq)]
pub struct P4Report {
    pub estimate: PsdMatrix,
    pub scale: ScaleInfo,
    pub lambda: f64,
    pub radius: f64,
    pub fit: FitResult,
    pub feasible: bool,
    pub n_fit: usize,
}

fn split_thirds(s: &Sample) -> Result<(Sample, Sample, Sample)> {
    let n = s.n() / 3;
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 6 rows for the three-way split, got {}", s.n())));
    }
    if s.n() % 3 != 0 {
        warn!("dropping {} trailing rows so the sample splits into thirds", s.n() % 3);
    }
    Ok((s.slice_rows(0, n)?, s.slice_rows(n, 2 * n)?, s.slice_rows(2 * n, 3 * n)?))
}

/// Scale estimation on the first two thirds.
pub fn estimate_scale(trace_split: &Sample, op_split: &Sample, cfg: &P4Config, exec: Exec) -> Result<ScaleInfo> {
    let trace = trace_for_pipeline(trace_split, cfg.eta, cfg.delta)?;
    let op = estimate_opnorm(op_split, &cfg.opnorm_config(), exec)?.value;
    ScaleInfo::new(trace, op)
}

/// The fit stage with given scale estimates.
pub fn fit_with_scale(s_fit: &Sample, scale: ScaleInfo, cfg: &P4Config, exec: Exec) -> Result<P4Report> {
    cfg.validate()?;
    let n = s_fit.n();
    if (n as f64) < 10.0 * (scale.r_hat + (1.0 / cfg.delta).ln()) {
        warn!("fit split of {n} rows is small relative to r = {:.2} and log(1/delta)", scale.r_hat);
    }
    let lambda = cfg.lambda_override.unwrap_or_else(|| lambda_p4(&scale, cfg, n));
    let radius = gamma_radius(lambda, &scale, cfg);
    let fit = fit_minmax_psd(s_fit, lambda, cfg, exec)?;
    let feasible = fit.residual <= radius;
    let estimate = if feasible { fit.a.clone() } else { PsdMatrix::zeros(s_fit.dim()) };
    Ok(P4Report { estimate, scale, lambda, radius, fit, feasible, n_fit: n })
}

/// Full pipeline on a corrupted sample of size `3N`. An all-zero sample
/// yields the zero matrix.
pub fn estimate_cov_p4(corrupted: &Sample, cfg: &P4Config, exec: Exec) -> Result<P4Report> {
    cfg.validate()?;
    let (t, o, f) = split_thirds(corrupted)?;
    if corrupted.is_zero() {
        return zero_report(&f, cfg, exec);
    }
    let scale = estimate_scale(&t, &o, cfg, exec)?;
    fit_with_scale(&f, scale, cfg, exec)
}

fn zero_report(f: &Sample, cfg: &P4Config, exec: Exec) -> Result<P4Report> {
    let lambda = cfg.lambda_override.unwrap_or(1.0);
    let fit = fit_minmax_psd(f, lambda, cfg, exec)?;
    Ok(P4Report {
        estimate: PsdMatrix::zeros(f.dim()),
        scale: ScaleInfo { trace_hat: 0.0, opnorm_hat: 0.0, r_hat: 1.0 },
        lambda,
        radius: 0.0,
        feasible: fit.residual <= 0.0,
        fit,
        n_fit: f.n(),
    })
}
