//! Adversaries for the strong contamination model: exactly `⌊ηN⌋` rows are
//! replaced, all others are left bit-identical.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalize, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adversary {
    None,
    /// Replaces rows by `magnitude · u` (`u = e₁` by default). With
    /// `relative_to_trace` the magnitude is multiplied by `√tr(Σ)`.
    FixedOutlier {
        magnitude: f64,
        #[serde(default)]
        direction: Option<Vec<f64>>,
        #[serde(default)]
        relative_to_trace: bool,
    },
    /// Multiplies rows by `factor`.
    VarianceInflation { factor: f64 },
    /// Replaces the largest-norm rows by `q · e₁`, where `q` is the largest
    /// norm among the rows left untouched.
    QuantileReplace,
}

impl Adversary {
    pub fn tag(&self) -> String {
        match self {
            Adversary::None => "none".into(),
            Adversary::FixedOutlier { magnitude, relative_to_trace, .. } => {
                format!("outlier{magnitude}{}", if *relative_to_trace { "rt" } else { "" })
            }
            Adversary::VarianceInflation { factor } => format!("inflate{factor}"),
            Adversary::QuantileReplace => "quantile".into(),
        }
    }

    /// Resolves a trace-relative magnitude against `tr(Σ)`.
    pub fn resolved(&self, trace: f64) -> Adversary {
        match self {
            Adversary::FixedOutlier { magnitude, direction, relative_to_trace: true } => Adversary::FixedOutlier {
                magnitude: magnitude * trace.sqrt(),
                direction: direction.clone(),
                relative_to_trace: false,
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub adversary: Adversary,
    pub eta: f64,
}

/// `⌊ηN⌋`, guarded against `η·N` landing a hair below an integer.
pub fn budget(eta: f64, n: usize) -> usize {
    ((eta * n as f64) + 1e-9).floor() as usize
}

pub fn contaminate(s: &Sample, spec: &ContaminationSpec, seed: u64) -> Result<Sample> {
    contaminate_with(s, spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn contaminate_with<R: Rng>(s: &Sample, spec: &ContaminationSpec, rng: &mut R) -> Result<Sample> {
    if !(0.0..=1.0).contains(&spec.eta) {
        return Err(Error::param(format!("eta must lie in [0, 1], got {}", spec.eta)));
    }
    let n = s.n();
    let d = s.dim();
    let m = budget(spec.eta, n);
    let mut out = s.clone();
    if m == 0 {
        return Ok(out);
    }
    match &spec.adversary {
        Adversary::None => {}
        Adversary::FixedOutlier { magnitude, direction, relative_to_trace } => {
            if *relative_to_trace {
                return Err(Error::param("resolve the trace-relative magnitude before contaminating"));
            }
            let mut u = direction.clone().unwrap_or_else(|| {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            });
            if u.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: u.len() });
            }
            if normalize(&mut u) == 0.0 {
                return Err(Error::param("outlier direction must be nonzero"));
            }
            let row: Vec<f64> = u.iter().map(|x| x * magnitude).collect();
            for i in index::sample(rng, n, m) {
                out.row_mut(i).copy_from_slice(&row);
            }
        }
        Adversary::VarianceInflation { factor } => {
            if !(*factor > 0.0 && *factor != 1.0 && factor.is_finite()) {
                return Err(Error::param(format!("inflation factor must be positive and not 1, got {factor}")));
            }
            for i in index::sample(rng, n, m) {
                out.row_mut(i).iter_mut().for_each(|x| *x *= factor);
            }
        }
        Adversary::QuantileReplace => {
            let norms = s.row_norms_sq();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
            let q = order.get(m).map_or(0.0, |&i| norms[i].sqrt());
            let mut row = vec![0.0; d];
            row[0] = q;
            for &i in &order[..m] {
                out.row_mut(i).copy_from_slice(&row);
            }
        }
    }
    Ok(out)
}

/// Number of rows that differ between `a` and `b`.
pub fn changed_rows(a: &Sample, b: &Sample) -> usize {
    a.rows().zip(b.rows()).filter(|(x, y)| x != y).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::PsdMatrix;
    use crate::simulation::samplers::sample_gaussian;

    #[test]
    fn zero_budget_is_identity() {
        let s = sample_gaussian(&PsdMatrix::identity(3), 50, 1).unwrap();
        let spec = ContaminationSpec { adversary: Adversary::QuantileReplace, eta: 0.0 };
        assert_eq!(contaminate(&s, &spec, 0).unwrap(), s);
    }

    #[test]
    fn fixed_outliers_are_placed_exactly() {
        let s = sample_gaussian(&PsdMatrix::identity(2), 100, 2).unwrap();
        let spec = ContaminationSpec {
            adversary: Adversary::FixedOutlier { magnitude: 100.0, direction: None, relative_to_trace: false },
            eta: 0.1,
        };
        let c = contaminate(&s, &spec, 3).unwrap();
        assert_eq!(c.rows().filter(|r| *r == [100.0, 0.0]).count(), 10);
        assert_eq!(changed_rows(&s, &c), 10);
    }

    #[test]
    fn quantile_replace_targets_largest_rows() {
        let s = Sample::from_rows(&[vec![1.0, 0.0], vec![0.0, 5.0], vec![2.0, 0.0], vec![0.0, -3.0]]).unwrap();
        let spec = ContaminationSpec { adversary: Adversary::QuantileReplace, eta: 0.5 };
        let c = contaminate(&s, &spec, 0).unwrap();
        assert_eq!(c.row(1), &[2.0, 0.0]);
        assert_eq!(c.row(3), &[2.0, 0.0]);
        assert_eq!(c.row(0), s.row(0));
    }

    #[test]
    fn budget_rounds_down() {
        assert_eq!(budget(0.05, 100), 5);
        assert_eq!(budget(0.07, 10), 0);
        assert_eq!(budget(0.3, 10), 3);
    }
}
