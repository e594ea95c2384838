//! Seeded samplers for the distributions used in experiments, with their
//! analytic norm-equivalence constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{PsdMatrix, Sample, SymMatrix};
use crate::scalar::fourpoint;

/// Marginal law of the sampled vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    Gaussian,
    /// Multivariate t with `nu > 4` degrees of freedom, scaled to covariance Σ.
    EllipticalT { nu: f64 },
    /// One-dimensional `σ²/√(2−η)·Y₁` with `Y₁` the four-point variable.
    Fourpoint { eta: f64, sigma_sq: f64 },
    /// `R·Σ^{1/2} g/√(2−η)` with `R = 1/√η` w.p. `η`, else `1`.
    FourpointMixture { eta: f64 },
}

impl DistributionKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistributionKind::Gaussian => Ok(()),
            DistributionKind::EllipticalT { nu } if nu > 4.0 && nu.is_finite() => Ok(()),
            DistributionKind::EllipticalT { nu } => {
                Err(Error::param(format!("elliptical t needs nu > 4 for a finite fourth moment, got {nu}")))
            }
            DistributionKind::Fourpoint { eta, sigma_sq } => {
                fourpoint(eta)?;
                if sigma_sq > 0.0 {
                    Ok(())
                } else {
                    Err(Error::param("sigma_sq must be positive"))
                }
            }
            DistributionKind::FourpointMixture { eta } => fourpoint(eta).map(|_| ()),
        }
    }

    pub fn tag(&self) -> String {
        match *self {
            DistributionKind::Gaussian => "gaussian".into(),
            DistributionKind::EllipticalT { nu } => format!("t{nu}"),
            DistributionKind::Fourpoint { eta, sigma_sq } => format!("fourpoint{eta}s{sigma_sq}"),
            DistributionKind::FourpointMixture { eta } => format!("fpmix{eta}"),
        }
    }

    /// `κ(p) = sup_v ‖⟨X,v⟩‖_p / ‖⟨X,v⟩‖_2`, in closed form. `None` when the
    /// p-th moment is infinite.
    pub fn kappa(&self, p: f64) -> Option<f64> {
        let gauss_ln = gaussian_abs_moment_ln(p);
        let ln_moment = match *self {
            DistributionKind::Gaussian => gauss_ln,
            DistributionKind::EllipticalT { nu } => {
                if p >= nu {
                    return None;
                }
                // E|X|^p for t_ν rescaled to unit variance.
                0.5 * p * (nu - 2.0).ln() + ln_gamma((p + 1.0) / 2.0) + ln_gamma((nu - p) / 2.0)
                    - 0.5 * std::f64::consts::PI.ln()
                    - ln_gamma(nu / 2.0)
            }
            DistributionKind::Fourpoint { eta, .. } => radial_ln_moment(eta, p),
            DistributionKind::FourpointMixture { eta } => radial_ln_moment(eta, p) + gauss_ln,
        };
        Some((ln_moment / p).exp())
    }
}

/// `ln E|g|^p` for a standard normal `g`.
fn gaussian_abs_moment_ln(p: f64) -> f64 {
    0.5 * p * 2f64.ln() + ln_gamma((p + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln()
}

/// `ln E|R|^p` for `R ∈ {1/√η, 1}` normalized to `E R² = 1`.
fn radial_ln_moment(eta: f64, p: f64) -> f64 {
    let raw = eta * eta.powf(-p / 2.0) + (1.0 - eta);
    raw.ln() - 0.5 * p * (2.0 - eta).ln()
}

pub(crate) fn standard_normals<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

fn apply_root(root: &SymMatrix, g: &[f64], out: &mut [f64]) {
    let d = root.dim();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &root.as_slice()[i * d..(i + 1) * d];
        *o = row.iter().zip(g).map(|(a, b)| a * b).sum();
    }
}

/// Draws `n` rows of `kind` with covariance `sigma` from `rng`.
pub fn sample_with<R: Rng>(kind: &DistributionKind, sigma: &PsdMatrix, n: usize, rng: &mut R) -> Result<Sample> {
    kind.validate()?;
    let d = sigma.dim();
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    if let DistributionKind::Fourpoint { eta, sigma_sq } = *kind {
        if d != 1 {
            return Err(Error::param("the four-point sampler is one-dimensional"));
        }
        let dist = fourpoint(eta)?;
        let scale = sigma_sq / (2.0 - eta).sqrt();
        let data = (0..n).map(|_| scale * draw_atom(dist.atoms(), rng)).collect();
        return Sample::from_row_major(n, 1, data);
    }
    let root = sigma.sqrt();
    let mut data = vec![0.0; n * d];
    let chi = match *kind {
        DistributionKind::EllipticalT { nu } => Some(ChiSquared::new(nu).map_err(|e| Error::param(e.to_string()))?),
        _ => None,
    };
    for row in data.chunks_mut(d) {
        let g = standard_normals(rng, d);
        apply_root(&root, &g, row);
        let factor = match *kind {
            DistributionKind::Gaussian => 1.0,
            DistributionKind::EllipticalT { nu } => {
                let w: f64 = chi.as_ref().expect("t sampler").sample(rng);
                ((nu - 2.0) / w).sqrt()
            }
            DistributionKind::FourpointMixture { eta } => {
                let r = if rng.random::<f64>() < eta { 1.0 / eta.sqrt() } else { 1.0 };
                r / (2.0 - eta).sqrt()
            }
            DistributionKind::Fourpoint { .. } => unreachable!(),
        };
        if factor != 1.0 {
            row.iter_mut().for_each(|x| *x *= factor);
        }
    }
    Sample::from_row_major(n, d, data)
}

fn draw_atom<R: Rng>(atoms: &[(f64, f64)], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(v, p) in atoms {
        acc += p;
        if u < acc {
            return v;
        }
    }
    atoms.last().expect("nonempty").0
}

pub fn sample_gaussian(sigma: &PsdMatrix, n: usize, seed: u64) -> Result<Sample> {
    sample_with(&DistributionKind::Gaussian, sigma, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_elliptical_t(sigma: &PsdMatrix, nu: f64, n: usize, seed: u64) -> Result<Sample> {
    sample_with(&DistributionKind::EllipticalT { nu }, sigma, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_fourpoint(eta: f64, sigma_sq: f64, n: usize, seed: u64) -> Result<Sample> {
    sample_with(
        &DistributionKind::Fourpoint { eta, sigma_sq },
        &PsdMatrix::identity(1),
        n,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

pub fn sample_fourpoint_mixture(sigma: &PsdMatrix, eta: f64, n: usize, seed: u64) -> Result<Sample> {
    sample_with(&DistributionKind::FourpointMixture { eta }, sigma, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Adds independent `N(0, sigma²)` noise to every entry.
pub fn add_gaussian_noise(s: &Sample, sigma: f64, seed: u64) -> Result<Sample> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("noise level must be nonnegative, got {sigma}")));
    }
    let noise = standard_normals(&mut ChaCha8Rng::seed_from_u64(seed), s.n() * s.dim());
    let data = s.as_slice().iter().zip(noise).map(|(x, g)| x + sigma * g).collect();
    Sample::from_row_major(s.n(), s.dim(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_covariance;

    #[test]
    fn noise_is_seeded_and_zero_level_is_identity() {
        let s = sample_gaussian(&PsdMatrix::identity(2), 50, 4).unwrap();
        assert_eq!(add_gaussian_noise(&s, 0.0, 1).unwrap(), s);
        assert_eq!(add_gaussian_noise(&s, 0.1, 1).unwrap(), add_gaussian_noise(&s, 0.1, 1).unwrap());
        assert!(add_gaussian_noise(&s, -1.0, 1).is_err());
    }

    #[test]
    fn zero_covariance_gives_zero_sample() {
        assert!(sample_gaussian(&PsdMatrix::zeros(3), 20, 1).unwrap().is_zero());
    }

    #[test]
    fn gaussian_second_moments() {
        let s = sample_gaussian(&PsdMatrix::from_diag(&[4.0]).unwrap(), 100_000, 3).unwrap();
        let m2 = sample_covariance(&s).get(0, 0);
        assert!((m2 - 4.0).abs() < 0.2, "{m2}");

        let sigma = PsdMatrix::from_diag(&[3.0, 1.0]).unwrap();
        let s = sample_gaussian(&sigma, 100_000, 4).unwrap();
        assert!(sample_covariance(&s).sub(&sigma).op_norm() <= 0.1);
    }

    #[test]
    fn t_sampler_moments() {
        let sigma = PsdMatrix::from_diag(&[2.0, 1.0]).unwrap();
        let s = sample_elliptical_t(&sigma, 9.0, 100_000, 5).unwrap();
        assert!(sample_covariance(&s).sub(&sigma).op_norm() <= 0.1);

        let one = sample_elliptical_t(&PsdMatrix::identity(1), 9.0, 1_000_000, 6).unwrap();
        let m4: f64 = one.as_slice().iter().map(|x| x.powi(4)).sum::<f64>() / 1e6;
        assert!((m4 - 4.2).abs() <= 0.42, "{m4}");

        let big_nu = sample_elliptical_t(&sigma, 1e6, 100_000, 7).unwrap();
        let gauss = sample_gaussian(&sigma, 100_000, 7).unwrap();
        let diff = sample_covariance(&big_nu).sub(&sample_covariance(&gauss)).op_norm();
        assert!(diff <= 0.05 * sigma.op_norm(), "{diff}");
        assert!(sample_elliptical_t(&sigma, 4.0, 10, 1).is_err());
    }

    #[test]
    fn kappa_closed_forms() {
        let g = DistributionKind::Gaussian.kappa(4.0).unwrap();
        assert!((g - 3f64.powf(0.25)).abs() < 1e-12);
        for nu in [6.0, 9.0, 20.0] {
            let k = DistributionKind::EllipticalT { nu }.kappa(4.0).unwrap();
            let expected = (3.0 * (nu - 2.0) / (nu - 4.0)).powf(0.25);
            assert!((k - expected).abs() < 1e-10, "nu={nu}: {k} vs {expected}");
        }
        assert!(DistributionKind::EllipticalT { nu: 9.0 }.kappa(9.5).is_none());
        // Y₁: E Y⁴ / (E Y²)² = (1/η + 1 − η)/(2 − η)².
        let eta = 0.04;
        let k4 = DistributionKind::Fourpoint { eta, sigma_sq: 1.0 }.kappa(4.0).unwrap().powi(4);
        assert!((k4 - (1.0 / eta + 1.0 - eta) / (2.0 - eta).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn t_empirical_kappa() {
        for nu in [6.0, 9.0, 20.0] {
            let s = sample_elliptical_t(&PsdMatrix::identity(1), nu, 1_000_000, 11).unwrap();
            let m2: f64 = s.as_slice().iter().map(|x| x * x).sum::<f64>() / 1e6;
            let m4: f64 = s.as_slice().iter().map(|x| x.powi(4)).sum::<f64>() / 1e6;
            let emp = (m4 / (m2 * m2)).powf(0.25);
            let exact = DistributionKind::EllipticalT { nu }.kappa(4.0).unwrap();
            assert!((emp - exact).abs() <= 0.05 * exact, "nu={nu}: {emp} vs {exact}");
        }
    }

    #[test]
    fn fourpoint_draws() {
        let eta = 0.04;
        let s = sample_fourpoint(eta, 2.0f64.sqrt(), 1_000_000, 8).unwrap();
        let n = 1e6;
        let mean: f64 = s.as_slice().iter().sum::<f64>() / n;
        assert!(mean.abs() < 0.01);
        let scale = 2.0f64.sqrt() / (2.0 - eta).sqrt();
        let big = s.as_slice().iter().filter(|x| (x.abs() / scale - 5.0).abs() < 1e-9).count() as f64 / n;
        assert!((big - eta).abs() < 0.005, "{big}");
        // E Y₁² = 2 − η.
        let y1 = sample_fourpoint(eta, (2.0 - eta).sqrt(), 1_000_000, 9).unwrap();
        let m2: f64 = y1.as_slice().iter().map(|x| x * x).sum::<f64>() / n;
        assert!((m2 - (2.0 - eta)).abs() < 0.01 * (2.0 - eta));
    }

    #[test]
    fn mixture_covariance() {
        let sigma = PsdMatrix::identity(3);
        let s = sample_fourpoint_mixture(&sigma, 0.1, 200_000, 2).unwrap();
        assert!(sample_covariance(&s).sub(&sigma).op_norm() < 0.1);
    }

    #[test]
    fn samplers_are_deterministic() {
        let sigma = PsdMatrix::identity(2);
        assert_eq!(sample_elliptical_t(&sigma, 9.0, 50, 1).unwrap(), sample_elliptical_t(&sigma, 9.0, 50, 1).unwrap());
        assert_ne!(sample_gaussian(&sigma, 50, 1).unwrap(), sample_gaussian(&sigma, 50, 2).unwrap());
    }
}
