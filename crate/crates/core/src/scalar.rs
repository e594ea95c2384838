//! Scalar robust statistics: distribution quantiles, the split-sample trimmed
//! mean, the trace estimator built on it, and the lower-bound functional
//! `ε(X̄, η)` for mean estimation under contamination.

use crate::error::{Error, Result};
use crate::linalg::Sample;

/// Slack used when comparing tail probabilities against `1 − q`.
const PROB_TOL: f64 = 1e-12;

/// A finitely supported distribution on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    /// Atoms are `(value, probability)`; probabilities must be nonnegative and
    /// sum to one within `1e-12`. Atoms are stored sorted by value.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("distribution needs at least one atom".into()));
        }
        if atoms.iter().any(|(v, p)| !v.is_finite() || !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput("atoms need finite values and nonnegative probabilities".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(DiscreteDistribution { atoms })
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        Self::new(vec![(value, 1.0)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * v * p).sum()
    }

    /// `P(X ≥ m)`.
    pub fn tail(&self, m: f64) -> f64 {
        self.atoms.iter().filter(|(v, _)| *v >= m).map(|a| a.1).sum()
    }

    /// The distribution of `c · X`.
    pub fn scaled(&self, c: f64) -> Self {
        let atoms = self.atoms.iter().map(|&(v, p)| (c * v, p)).collect();
        Self::new(atoms).expect("scaling preserves validity")
    }

    pub fn shifted(&self, c: f64) -> Self {
        let atoms = self.atoms.iter().map(|&(v, p)| (v + c, p)).collect();
        Self::new(atoms).expect("shifting preserves validity")
    }
}

/// The four-point variable taking `±1/√η` with probability `η/2` each and
/// `±1` with probability `(1−η)/2` each. Requires `η ∈ (0, 1/4]`.
pub fn fourpoint(eta: f64) -> Result<DiscreteDistribution> {
    if !(eta > 0.0 && eta <= 0.25) {
        return Err(Error::param(format!("four-point construction needs 0 < eta <= 1/4, got {eta}")));
    }
    let big = 1.0 / eta.sqrt();
    DiscreteDistribution::new(vec![
        (-big, eta / 2.0),
        (-1.0, (1.0 - eta) / 2.0),
        (1.0, (1.0 - eta) / 2.0),
        (big, eta / 2.0),
    ])
}

/// The four-point variable rescaled to second moment `σ⁴`: `σ²/√(2−η) · Y₁`.
pub fn fourpoint_scaled(eta: f64, sigma_sq: f64) -> Result<DiscreteDistribution> {
    if !(sigma_sq > 0.0) {
        return Err(Error::param("sigma^2 must be positive"));
    }
    Ok(fourpoint(eta)?.scaled(sigma_sq / (2.0 - eta).sqrt()))
}

/// Closed-form `ε(Y₁, η) = √η/2 − η/2` for the four-point variable.
pub fn fourpoint_epsilon_closed_form(eta: f64) -> f64 {
    eta.sqrt() / 2.0 - eta / 2.0
}

/// `Q_q(X) = sup{M : P(X ≥ M) ≥ 1 − q}`: the largest atom whose upper tail
/// still carries probability `1 − q`.
pub fn quantile_q(d: &DiscreteDistribution, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let need = 1.0 - q - PROB_TOL;
    let mut tail = 0.0;
    let mut i = d.atoms.len();
    // Walk down from the largest value, accumulating P(X ≥ atom).
    while i > 0 {
        i -= 1;
        let v = d.atoms[i].0;
        tail += d.atoms[i].1;
        while i > 0 && d.atoms[i - 1].0 == v {
            i -= 1;
            tail += d.atoms[i].1;
        }
        if tail >= need {
            return Ok(v);
        }
    }
    Ok(d.atoms[0].0)
}

/// `ε(X̄, η)`: the larger of the two tail first moments of the centered
/// variable beyond its `η/2` and `1 − η/2` quantiles.
pub fn epsilon_lower_bound(d: &DiscreteDistribution, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::param(format!("eta must lie in (0, 1), got {eta}")));
    }
    let centered = d.shifted(-d.mean());
    let lo = quantile_q(&centered, eta / 2.0)?;
    let hi = quantile_q(&centered, 1.0 - eta / 2.0)?;
    let lower: f64 = centered.atoms.iter().filter(|(v, _)| *v <= lo).map(|(v, p)| p * (v - lo).abs()).sum();
    let upper: f64 = centered.atoms.iter().filter(|(v, _)| *v >= hi).map(|(v, p)| p * (v - hi).abs()).sum();
    Ok(lower.max(upper))
}

/// Split-sample trimmed mean.
///
/// With `k = max(1, ⌈ε m⌉)`, the clamp interval is `[α, β]` where `α` is the
/// `k`-th smallest and `β` the `k`-th largest value of the first half; the
/// result is the mean of the second half clamped to that interval.
pub fn trimmed_mean(values: &[f64], eps: f64) -> Result<f64> {
    let len = values.len();
    if len < 2 || len % 2 != 0 {
        return Err(Error::param(format!("trimmed mean needs an even number (>= 2) of values, got {len}")));
    }
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::param(format!("trimming fraction must lie in [0, 1), got {eps}")));
    }
    let m = len / 2;
    let k = ((eps * m as f64).ceil() as usize).max(1);
    if 2 * k > m + 1 {
        return Err(Error::param(format!("trimming fraction {eps} too large for {m} values per half")));
    }
    let mut first = values[..m].to_vec();
    first.sort_by(f64::total_cmp);
    let (alpha, beta) = (first[k - 1], first[m - k]);
    let sum: f64 = values[m..].iter().map(|x| x.clamp(alpha, beta)).sum();
    Ok(sum / m as f64)
}

/// `ε = 8η + 12 log(4/δ) / N` for a sample of size `2N`.
pub fn trace_epsilon(eta: f64, delta: f64, n_half: usize) -> f64 {
    8.0 * eta + 12.0 * (4.0 / delta).ln() / n_half as f64
}

/// Robust estimate of `tr(Σ)`: the trimmed mean of the squared row norms.
/// The whole sample is used as the `2N` trimmed-mean points.
pub fn estimate_trace(s: &Sample, eta: f64, delta: f64) -> Result<f64> {
    if s.n() % 2 != 0 {
        return Err(Error::param(format!("trace estimation needs an even sample size, got {}", s.n())));
    }
    if !(delta > 0.0 && delta < 1.0) || !(0.0..=1.0).contains(&eta) {
        return Err(Error::param(format!("need delta in (0,1) and eta in [0,1], got {delta}, {eta}")));
    }
    let eps = trace_epsilon(eta, delta, s.n() / 2);
    Ok(trimmed_mean(&s.row_norms_sq(), eps)?.max(0.0))
}
