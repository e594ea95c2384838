//! The covariance estimator for Lp–L2 norm equivalence with `p > 4`.
//!
//! Both halves of the sample are norm-truncated at `R = (N tr ‖Σ‖)^{1/4}`.
//! The first half supplies directional quantiles `q_v`; the second half is
//! fit with the one-sided truncation level `λ_v(Q) = 1/(q_v + Q)` for dyadic
//! `Q`, and a level is feasible when the min-max residual is within `4εQ`.
//! The smallest feasible level is returned.
//!
//! Only levels with `Q ≥ 2 Q̂₀` are eligible, where
//!
//! ```text
//! Q̂₀ = c_q0 · max( (‖Σ̂‖/ε) √((r̂ + log(2/δ))/N),  ε^{-2/p} κ(p)² ‖Σ̂‖ )
//! ```
//!
//! Below `2Q₀` the feasibility sets are not nested and a feasible fit can be
//! far from `Σ`. Setting `c_q0 = 0` makes every grid level eligible.

use std::collections::HashMap;
use std::sync::Mutex;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::directions::{seed_directions, SearchConfig, Target};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{check_unit, sample_covariance, PsdMatrix, Sample, SymMatrix};
use crate::minmax::{fit_minmax, FitConfig, FitResult};
use crate::p4::{estimate_scale, P4Config, ScaleInfo};
use crate::truncation::{capped_second_moment, norm_truncate, truncation_radius};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pgt4Config {
    pub eta: f64,
    pub delta: f64,
    pub p: f64,
    pub kappa_p: f64,
    /// κ(4), used only for plug-in scale estimation.
    pub kappa4: f64,
    /// Known scale; when absent it is estimated on a held-out prefix.
    pub scale: Option<ScaleInfo>,
    /// Explicit `(i_min, i_max)` for the grid `Q = 2^i`.
    pub q_grid: Option<(i32, i32)>,
    pub c_q0: f64,
    pub fit: FitConfig,
    pub search: SearchConfig,
}

impl Default for Pgt4Config {
    fn default() -> Self {
        Pgt4Config {
            eta: 0.0,
            delta: 0.1,
            p: 8.0,
            // κ(8) of the standard Gaussian, 105^{1/8}.
            kappa_p: 105f64.powf(0.125),
            kappa4: 1.5,
            scale: None,
            q_grid: None,
            c_q0: 1.0,
            fit: FitConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

impl Pgt4Config {
    fn validate(&self) -> Result<()> {
        if !(self.p > 4.0) {
            return Err(Error::param(format!("p must exceed 4, got {}", self.p)));
        }
        if !(self.kappa_p >= 1.0) {
            return Err(Error::param("kappa_p must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.eta) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("invalid eta/delta: {}, {}", self.eta, self.delta)));
        }
        if !(self.c_q0 >= 0.0) {
            return Err(Error::param("c_q0 must be nonnegative"));
        }
        if let Some((lo, hi)) = self.q_grid {
            if lo > hi {
                return Err(Error::param(format!("empty Q grid [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// `max(20η, 560 log(2/δ)/N)`.
pub fn epsilon_pgt4(eta: f64, delta: f64, n: usize) -> f64 {
    (20.0 * eta).max(560.0 * (2.0 / delta).ln() / n as f64)
}

/// `k`-th largest value (1-based) of `values`; consumes the buffer.
fn kth_largest(values: &mut [f64], k: usize) -> f64 {
    let idx = k - 1;
    let (_, x, _) = values.select_nth_unstable_by(idx, |a, b| b.total_cmp(a));
    *x
}

fn quantile_index(n: usize, eps: f64) -> Result<usize> {
    let k = (n as f64 * eps / 2.0).ceil() as usize;
    if k < 1 || k > n {
        return Err(Error::param(format!("quantile index {k} outside [1, {n}] (eps = {eps})")));
    }
    Ok(k)
}

/// `q_v`: the `⌈Nε/2⌉`-th largest of `⟨z_i, v⟩²`.
pub fn directional_quantile(zhalf: &Sample, v: &[f64], eps: f64) -> Result<f64> {
    if v.len() != zhalf.dim() {
        return Err(Error::DimensionMismatch { expected: zhalf.dim(), found: v.len() });
    }
    check_unit(v)?;
    let k = quantile_index(zhalf.n(), eps)?;
    let mut sq: Vec<f64> = zhalf.project(v).iter().map(|p| p * p).collect();
    Ok(kth_largest(&mut sq, k))
}

/// `q_v` memoized by direction, quantized at `1e-12`. Values are a pure
/// function of the direction, so concurrent fills are deterministic.
pub struct QuantileMemo<'a> {
    zhalf: &'a Sample,
    k: usize,
    cache: Mutex<HashMap<Vec<i64>, f64>>,
}

impl<'a> QuantileMemo<'a> {
    pub fn new(zhalf: &'a Sample, eps: f64) -> Result<Self> {
        Ok(QuantileMemo { zhalf, k: quantile_index(zhalf.n(), eps)?, cache: Mutex::new(HashMap::new()) })
    }

    pub fn from_projections(&self, zproj: &[f64]) -> f64 {
        let mut sq: Vec<f64> = zproj.iter().map(|p| p * p).collect();
        kth_largest(&mut sq, self.k)
    }

    pub fn get(&self, v: &[f64]) -> f64 {
        let key: Vec<i64> = v.iter().map(|x| (x * 1e12).round() as i64).collect();
        if let Some(q) = self.cache.lock().expect("memo lock").get(&key) {
            return *q;
        }
        let q = self.from_projections(&self.zhalf.project(v));
        self.cache.lock().expect("memo lock").insert(key, q);
        q
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("memo lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `t_Q(v) = (1/(λ_v N)) Σ ψ(λ_v ⟨x_i,v⟩²)` with `λ_v = 1/(q_v + Q)`.
pub struct OneSidedTarget<'a> {
    pub xhalf: &'a Sample,
    pub memo: &'a QuantileMemo<'a>,
    pub q: f64,
}

impl Target for OneSidedTarget<'_> {
    fn samples(&self) -> Vec<&Sample> {
        vec![self.xhalf, self.memo.zhalf]
    }
    fn dim(&self) -> usize {
        self.xhalf.dim()
    }
    fn target(&self, _v: &[f64], proj: &[Vec<f64>]) -> f64 {
        let qv = self.memo.from_projections(&proj[1]);
        capped_second_moment(&proj[0], qv + self.q)
    }
    fn target_at(&self, v: &[f64]) -> f64 {
        let qv = self.memo.get(v);
        capped_second_moment(&self.xhalf.project(v), qv + self.q)
    }
    fn reference(&self) -> Option<SymMatrix> {
        Some(sample_covariance(self.xhalf).into_sym())
    }
}

/// One grid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelFit {
    pub q: f64,
    pub fit: FitResult,
    pub band: f64,
    pub feasible: bool,
}

/// Min-max fit at level `q`; feasible when the residual is within `4εQ`.
pub fn fit_gamma_q(
    xhalf: &Sample,
    q: f64,
    memo: &QuantileMemo<'_>,
    eps: f64,
    cfg: &Pgt4Config,
    exec: Exec,
) -> Result<LevelFit> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::param(format!("Q must be positive, got {q}")));
    }
    let d = xhalf.dim();
    let seeds = seed_directions(xhalf, &SymMatrix::zeros(d), cfg.search.budget_for(d), cfg.search.seed)?;
    let target = OneSidedTarget { xhalf, memo, q };
    let fit = fit_minmax(&target, &seeds, &[], &cfg.fit, &cfg.search, exec)?;
    let band = 4.0 * eps * q;
    let feasible = fit.residual <= band;
    Ok(LevelFit { q, fit, band, feasible })
}

fn grid_range(zhalf: &Sample, scale: &ScaleInfo) -> (i32, i32) {
    let max_norm = zhalf.row_norms_sq().into_iter().fold(0.0, f64::max);
    let lo = scale.opnorm_hat.log2().floor() as i32 - 2;
    let hi = (max_norm + scale.opnorm_hat).log2().ceil() as i32 + 1;
    (lo, hi.max(lo + 3))
}

/// Dyadic levels `2^i` for `i` from `⌊log₂ ‖Σ̂‖⌋ − 2` to
/// `⌈log₂(max ‖z_i‖² + ‖Σ̂‖)⌉ + 1`.
pub fn q_grid_auto(zhalf: &Sample, scale: &ScaleInfo) -> Vec<f64> {
    let (lo, hi) = grid_range(zhalf, scale);
    (lo..=hi).map(|i| 2f64.powi(i)).collect()
}

/// `Q̂₀` with the configured constant.
pub fn q0_hat(scale: &ScaleInfo, eps: f64, n: usize, cfg: &Pgt4Config) -> f64 {
    let stat = scale.opnorm_hat / eps * ((scale.r_hat + (2.0 / cfg.delta).ln()) / n as f64).sqrt();
    let tail = eps.powf(-2.0 / cfg.p) * cfg.kappa_p * cfg.kappa_p * scale.opnorm_hat;
    cfg.c_q0 * stat.max(tail)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pgt4Report {
    pub estimate: PsdMatrix,
    pub scale: ScaleInfo,
    pub radius: f64,
    pub eps: f64,
    pub q0: f64,
    pub grid: Vec<f64>,
    /// Levels actually fit, ascending.
    pub levels: Vec<LevelFit>,
    pub chosen_q: Option<f64>,
    pub feasible: bool,
    /// The chosen level is the top of the grid (no smaller level was feasible).
    pub top_fallback: bool,
    pub n_half: usize,
}

/// Runs the estimator on `zhalf | xhalf` (before norm truncation) with given
/// scale.
pub fn estimate_with_scale(z_raw: &Sample, x_raw: &Sample, scale: ScaleInfo, cfg: &Pgt4Config, exec: Exec) -> Result<Pgt4Report> {
    cfg.validate()?;
    let n = z_raw.n();
    if x_raw.n() != n || x_raw.dim() != z_raw.dim() {
        return Err(Error::InvalidInput("the two halves must have equal shape".into()));
    }
    let radius = truncation_radius(n, scale.trace_hat, scale.opnorm_hat);
    let zhalf = norm_truncate(z_raw, radius)?;
    let xhalf = norm_truncate(x_raw, radius)?;

    let mut eps = epsilon_pgt4(cfg.eta, cfg.delta, n);
    if eps >= 1.0 {
        warn!("eps = {eps:.3} is not below 1; using eps = 1 for the quantile index and band");
        eps = 1.0;
    }
    let grid: Vec<f64> = match cfg.q_grid {
        Some((lo, hi)) => (lo..=hi).map(|i| 2f64.powi(i)).collect(),
        None => q_grid_auto(&zhalf, &scale),
    };
    let q0 = q0_hat(&scale, eps, n, cfg);
    let top = *grid.last().expect("grid is nonempty");
    let mut eligible: Vec<f64> = grid.iter().copied().filter(|&q| q >= 2.0 * q0).collect();
    if eligible.is_empty() {
        warn!("2 Q0 = {:.3e} lies above the grid; only the top level {top:.3e} is tried", 2.0 * q0);
        eligible.push(top);
    }

    let memo = QuantileMemo::new(&zhalf, eps)?;
    let mut levels = Vec::new();
    let mut chosen = None;
    for &q in &eligible {
        let lf = fit_gamma_q(&xhalf, q, &memo, eps, cfg, exec)?;
        debug!("pgt4 level Q = {q:.4e}: residual {:.4e}, band {:.4e}", lf.fit.residual, lf.band);
        let ok = lf.feasible;
        levels.push(lf);
        if ok {
            chosen = Some(levels.len() - 1);
            break;
        }
    }
    let (estimate, chosen_q, feasible, top_fallback) = match chosen {
        Some(i) => (levels[i].fit.a.clone(), Some(levels[i].q), true, levels[i].q == top && eligible.len() > 1),
        None => (PsdMatrix::zeros(z_raw.dim()), None, false, false),
    };
    Ok(Pgt4Report {
        estimate,
        scale,
        radius,
        eps,
        q0,
        grid,
        levels,
        chosen_q,
        feasible,
        top_fallback,
        n_half: n,
    })
}

/// Full pipeline. With `cfg.scale` set the sample is split into halves;
/// otherwise into quarters `trace | opnorm | Z | X`, the first two feeding
/// the scalar scale estimators. An all-zero sample yields the zero matrix.
pub fn estimate_cov_pgt4(corrupted: &Sample, cfg: &Pgt4Config, exec: Exec) -> Result<Pgt4Report> {
    cfg.validate()?;
    let n_total = corrupted.n();
    if corrupted.is_zero() {
        let n = n_total / 2;
        return Ok(Pgt4Report {
            estimate: PsdMatrix::zeros(corrupted.dim()),
            scale: ScaleInfo { trace_hat: 0.0, opnorm_hat: 0.0, r_hat: 1.0 },
            radius: 0.0,
            eps: epsilon_pgt4(cfg.eta, cfg.delta, n.max(1)).min(1.0),
            q0: 0.0,
            grid: Vec::new(),
            levels: Vec::new(),
            chosen_q: None,
            feasible: false,
            top_fallback: false,
            n_half: n,
        });
    }
    match cfg.scale {
        Some(scale) => {
            if n_total % 2 != 0 {
                return Err(Error::InvalidInput(format!("sample size must be even, got {n_total}")));
            }
            let n = n_total / 2;
            if n < 2 {
                return Err(Error::InvalidInput("need at least four rows".into()));
            }
            estimate_with_scale(&corrupted.slice_rows(0, n)?, &corrupted.slice_rows(n, 2 * n)?, scale, cfg, exec)
        }
        None => {
            let n = n_total / 4;
            if n < 2 {
                return Err(Error::InvalidInput("need at least eight rows".into()));
            }
            if n_total % 4 != 0 {
                warn!("dropping {} trailing rows so the sample splits into quarters", n_total % 4);
            }
            let p4 = P4Config { eta: cfg.eta, delta: cfg.delta, kappa: cfg.kappa4, search: cfg.search, ..P4Config::default() };
            let scale = estimate_scale(&corrupted.slice_rows(0, n)?, &corrupted.slice_rows(n, 2 * n)?, &p4, exec)?;
            estimate_with_scale(
                &corrupted.slice_rows(2 * n, 3 * n)?,
                &corrupted.slice_rows(3 * n, 4 * n)?,
                scale,
                cfg,
                exec,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sample::from_row_major(n, d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn epsilon_formula() {
        let delta = 2.0 / std::f64::consts::E;
        assert!((epsilon_pgt4(0.0, delta, 5600) - 0.1).abs() < 1e-15);
        assert!((epsilon_pgt4(0.01, 0.1, 100_000_000) - 0.2).abs() < 1e-15);
        assert!(epsilon_pgt4(0.02, 0.1, 1000) >= epsilon_pgt4(0.01, 0.1, 1000));
        assert!(epsilon_pgt4(0.0, 0.01, 1000) >= epsilon_pgt4(0.0, 0.1, 1000));
    }

    #[test]
    fn quantile_examples() {
        let s = Sample::from_rows(&[vec![3.0], vec![-2.0], vec![1.0], vec![0.0]]).unwrap();
        // k = ⌈4·ε/2⌉ = 2.
        assert_eq!(directional_quantile(&s, &[1.0], 1.0).unwrap(), 4.0);
        assert_eq!(directional_quantile(&s, &[1.0], 2.0).unwrap(), 0.0);
        let c = Sample::from_rows(&[vec![2.0], vec![-2.0], vec![2.0]]).unwrap();
        assert_eq!(directional_quantile(&c, &[1.0], 0.5).unwrap(), 4.0);
        assert!(directional_quantile(&s, &[1.0], 0.0).is_err());
        assert!(directional_quantile(&s, &[1.0], 3.0).is_err());
    }

    #[test]
    fn quantile_is_two_homogeneous() {
        let s = gaussian(101, 3, 4);
        let v = [0.6, 0.0, 0.8];
        let base = directional_quantile(&s, &v, 0.3).unwrap();
        for &t in &[0.5, 3.0] {
            let scaled = directional_quantile(&s.scaled(t), &v, 0.3).unwrap();
            assert!((scaled - t * t * base).abs() <= 1e-12 * scaled.max(1.0));
        }
    }

    #[test]
    fn memo_agrees_with_direct_quantile() {
        let s = gaussian(50, 2, 9);
        let memo = QuantileMemo::new(&s, 0.2).unwrap();
        let v = [0.28, 0.96];
        assert_eq!(memo.get(&v), directional_quantile(&s, &v, 0.2).unwrap());
        assert_eq!(memo.get(&v), memo.get(&v));
        assert_eq!(memo.len(), 1);
    }

    #[test]
    fn grid_examples() {
        let z = Sample::from_rows(&[vec![7f64.sqrt(), 0.0], vec![0.0, 1.0]]).unwrap();
        let scale = ScaleInfo::new(1.0, 1.0).unwrap();
        assert_eq!(grid_range(&z, &scale), (-2, 4));
        assert_eq!(q_grid_auto(&z, &scale).first(), Some(&0.25));
        assert_eq!(q_grid_auto(&z, &scale).last(), Some(&16.0));
        assert_eq!(grid_range(&Sample::zeros(3, 2), &scale), (-2, 1));
        assert!(q_grid_auto(&Sample::zeros(3, 2), &scale).len() >= 4);
    }

    #[test]
    fn one_dimensional_level_is_exact() {
        let z = gaussian(40, 1, 1);
        let x = gaussian(40, 1, 2);
        let memo = QuantileMemo::new(&z, 0.5).unwrap();
        let lf = fit_gamma_q(&x, 0.5, &memo, 0.5, &Pgt4Config::default(), Exec::Sequential).unwrap();
        assert!(lf.fit.residual < 1e-12 && lf.feasible);
    }

    #[test]
    fn huge_level_reproduces_sample_covariance() {
        let z = gaussian(300, 3, 11);
        let x = gaussian(300, 3, 12);
        let memo = QuantileMemo::new(&z, 0.5).unwrap();
        let lf = fit_gamma_q(&x, 1e9, &memo, 0.5, &Pgt4Config::default(), Exec::Sequential).unwrap();
        assert!(lf.fit.a.max_abs_diff(&sample_covariance(&x)) < 1e-6);
        assert!(lf.fit.residual < 1e-6 && lf.feasible);
        let zero_band = fit_gamma_q(&x, 1e9, &memo, 0.0, &Pgt4Config::default(), Exec::Sequential).unwrap();
        assert_eq!(zero_band.feasible, zero_band.fit.residual == 0.0);
    }

    #[test]
    fn zero_sample_gives_zero_matrix() {
        let r = estimate_cov_pgt4(&Sample::zeros(40, 3), &Pgt4Config::default(), Exec::Sequential).unwrap();
        assert!(r.estimate.is_zero() && !r.feasible);
    }

    #[test]
    fn gaussian_oracle_scale() {
        let d = 5;
        let s = gaussian(4000, d, 123);
        let cfg = Pgt4Config { scale: Some(ScaleInfo::new(d as f64, 1.0).unwrap()), ..Default::default() };
        let r = estimate_cov_pgt4(&s, &cfg, Exec::Sequential).unwrap();
        assert!(r.feasible);
        let err = r.estimate.sub(&SymMatrix::identity(d)).op_norm();
        assert!(err <= 0.4, "{err}");
    }
}
