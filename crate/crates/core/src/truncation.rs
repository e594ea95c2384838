//! The truncation function ψ and the truncated quadratic processes built on it.
//!
//! For a nonnegative argument, `ψ(λ y) / λ = min(y, 1/λ)`. The processes below
//! are evaluated in the `min` form so that the untruncated regime reproduces
//! the plain empirical second moment bit-for-bit.

use crate::error::{Error, Result};
use crate::linalg::{check_unit, Sample};

/// `x` on `[-1, 1]`, `sign(x)` outside.
#[inline]
pub fn psi(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Clamp to an arbitrary interval `[lo, hi]`.
#[inline]
pub fn clamp_interval(x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    x.max(lo).min(hi)
}

/// Two-sided truncation with levels `lambda1 ≥ lambda2 > 0`: identity on
/// `[-1/lambda1, 1/lambda2]`, constant outside. Agrees with `ψ(λx)/λ` when
/// both levels equal `λ`.
pub fn psi_band(x: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    if !(lambda2 > 0.0 && lambda1.is_finite() && lambda1 >= lambda2) {
        return Err(Error::param(format!(
            "psi_band needs lambda1 >= lambda2 > 0, got ({lambda1}, {lambda2})"
        )));
    }
    Ok(clamp_interval(x, -1.0 / lambda1, 1.0 / lambda2))
}

/// A positive, finite truncation level λ.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TruncationLevel(f64);

impl TruncationLevel {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(TruncationLevel(lambda))
        } else {
            Err(Error::param(format!("truncation level must be positive and finite, got {lambda}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The clipping threshold `1/λ` on squared projections.
    pub fn cap(self) -> f64 {
        1.0 / self.0
    }
}

/// `(1/N) Σ min(p_i², cap)` over precomputed projections.
#[inline]
pub fn capped_second_moment(proj: &[f64], cap: f64) -> f64 {
    let sum: f64 = proj.iter().map(|p| (p * p).min(cap)).sum();
    sum / proj.len() as f64
}

/// `(1/(λN)) Σ ψ(λ⟨x_i, v⟩²)`; lies in `[0, 1/λ]`.
pub fn truncated_process(s: &Sample, v: &[f64], level: TruncationLevel) -> Result<f64> {
    check_dir(s, v)?;
    Ok(capped_second_moment(&s.project(v), level.cap()))
}

/// The one-sided process with direction-dependent level
/// `λ_v = 1/(q_v + Q)`; lies in `[0, q_v + Q]`.
pub fn one_sided_process(s: &Sample, v: &[f64], q_v: f64, q: f64) -> Result<f64> {
    check_dir(s, v)?;
    if !(q > 0.0 && q.is_finite()) || !(q_v >= 0.0 && q_v.is_finite()) {
        return Err(Error::param(format!("need Q > 0 and q_v >= 0, got Q={q}, q_v={q_v}")));
    }
    Ok(capped_second_moment(&s.project(v), q_v + q))
}

/// `λ_v(Q) = (q_v + Q)^{-1}`.
pub fn one_sided_level(q_v: f64, q: f64) -> f64 {
    1.0 / (q_v + q)
}

/// Replaces every row with Euclidean norm greater than `r` by the zero row.
pub fn norm_truncate(s: &Sample, r: f64) -> Result<Sample> {
    if !(r > 0.0) {
        return Err(Error::param(format!("truncation radius must be positive, got {r}")));
    }
    let r2 = r * r;
    let mut out = s.clone();
    for i in 0..s.n() {
        let row = out.row_mut(i);
        if row.iter().map(|x| x * x).sum::<f64>() > r2 {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    Ok(out)
}

/// Norm-truncation radius `R = (N · tr(Σ) · ‖Σ‖)^{1/4}`.
pub fn truncation_radius(n: usize, trace: f64, opnorm: f64) -> f64 {
    (n as f64 * trace * opnorm).powf(0.25)
}

fn check_dir(s: &Sample, v: &[f64]) -> Result<()> {
    if v.len() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: v.len() });
    }
    check_unit(v)
}
