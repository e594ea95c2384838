//! Approximate suprema over the unit sphere.
//!
//! Every estimator needs `sup_v F(v)` for some function of the projections
//! `⟨x_i, v⟩`. The sphere is probed with a seeded direction set (random
//! Gaussian directions, eigenvectors of a residual matrix, coordinate axes)
//! and the best probes are polished by coordinate ascent along great
//! circles. A move along the great circle through `v` toward axis `e_j`
//! updates every projection in O(1), so a full sweep costs O(N·d).
//!
//! The returned value is always attained at a concrete direction, so it is a
//! lower bound on the true supremum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, normalize, sample_covariance, Sample, SymMatrix, UNIT_TOL};
use crate::truncation::{capped_second_moment, psi, TruncationLevel};

/// Search budget shared by every sup-over-sphere computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Number of random probes; `None` means `max(256, 32·d)`.
    pub budget: Option<usize>,
    /// Coordinate-ascent sweeps per refined direction.
    pub refine_steps: usize,
    /// How many of the best probes get refined.
    pub refine_top: usize,
    /// Sweeps stop once the relative gain falls below this.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { budget: None, refine_steps: 50, refine_top: 8, rel_tol: 1e-8, seed: 0x5eed }
    }
}

impl SearchConfig {
    pub fn budget_for(&self, dim: usize) -> usize {
        self.budget.unwrap_or_else(|| default_budget(dim))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub fn default_budget(dim: usize) -> usize {
    256.max(32 * dim)
}

/// A finite set of unit vectors standing in for the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    pub budget: usize,
    pub refine_steps: usize,
}

impl DirectionSet {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>, refine_steps: usize) -> Result<Self> {
        let mut ds = DirectionSet { dim, vectors: Vec::new(), budget: 0, refine_steps };
        for v in vectors {
            ds.push(v)?;
        }
        if ds.vectors.is_empty() {
            return Err(Error::param("direction set is empty"));
        }
        Ok(ds)
    }

    /// The `d` coordinate axes.
    pub fn axes(dim: usize) -> Self {
        let vectors = (0..dim).map(|j| axis(dim, j)).collect();
        DirectionSet { dim, vectors, budget: 0, refine_steps: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Adds `v` (normalized, sign-canonicalized) unless it duplicates an
    /// existing direction up to sign. Returns whether it was added.
    pub fn push(&mut self, mut v: Vec<f64>) -> Result<bool> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        if normalize(&mut v) == 0.0 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("cannot add a zero or non-finite direction"));
        }
        canonical_sign(&mut v);
        if self.vectors.iter().any(|w| dot(w, &v).abs() >= 1.0 - 1e-12) {
            return Ok(false);
        }
        self.vectors.push(v);
        Ok(true)
    }

    pub fn extend(&mut self, other: &DirectionSet) {
        for v in &other.vectors {
            let _ = self.push(v.clone());
        }
    }
}

fn axis(dim: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[j] = 1.0;
    e
}

fn canonical_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-14) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `count` seeded uniform random unit vectors.
pub fn random_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if normalize(&mut v) > 1e-12 {
            out.push(v);
        }
    }
    out
}

/// Random probes, the eigenvectors of `sample_covariance(s) − a`, and the
/// coordinate axes, deduplicated up to sign.
pub fn seed_directions(s: &Sample, a: &SymMatrix, budget: usize, rng_seed: u64) -> Result<DirectionSet> {
    if budget == 0 {
        return Err(Error::param("direction budget must be at least 1"));
    }
    if a.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: a.dim() });
    }
    let dim = s.dim();
    let residual = sample_covariance(s).sub(a);
    let mut ds = DirectionSet { dim, vectors: Vec::new(), budget, refine_steps: SearchConfig::default().refine_steps };
    for v in random_directions(dim, budget, rng_seed) {
        ds.push(v)?;
    }
    for v in residual.eigen().vectors {
        ds.push(v)?;
    }
    for j in 0..dim {
        ds.push(axis(dim, j))?;
    }
    Ok(ds)
}

/// A scalar function of a direction, computable from the projections of a
/// fixed list of samples onto that direction.
pub trait Objective: Sync {
    fn samples(&self) -> Vec<&Sample>;
    fn dim(&self) -> usize;
    fn eval(&self, v: &[f64], proj: &[Vec<f64>]) -> f64;

    fn eval_at(&self, v: &[f64]) -> f64 {
        let proj: Vec<Vec<f64>> = self.samples().iter().map(|s| s.project(v)).collect();
        self.eval(v, &proj)
    }
}

/// The best direction found and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub dir: Vec<f64>,
}

/// Local coordinate ascent on the sphere starting at `start`.
///
/// Each sweep tries a rotation by `±h` toward every coordinate axis and keeps
/// strict improvements; `h` halves after a sweep without progress. The
/// objective never decreases across accepted moves.
pub fn refine<O: Objective + ?Sized>(obj: &O, start: &[f64], steps: usize, rel_tol: f64) -> Probe {
    let samples = obj.samples();
    let d = obj.dim();
    let mut v = start.to_vec();
    normalize(&mut v);
    let mut proj: Vec<Vec<f64>> = samples.iter().map(|s| s.project(&v)).collect();
    let mut f = obj.eval(&v, &proj);
    let mut h = 0.25_f64;
    let mut b: Vec<Vec<f64>> = samples.iter().map(|s| vec![0.0; s.n()]).collect();
    let mut trial_proj: Vec<Vec<f64>> = b.clone();
    let mut trial_v = vec![0.0; d];
    let mut u = vec![0.0; d];

    for _ in 0..steps {
        let sweep_start = f;
        let mut moved = false;
        for j in 0..d {
            let vj = v[j];
            let nu2 = 1.0 - vj * vj;
            if nu2 < 1e-20 {
                continue;
            }
            let nu = nu2.sqrt();
            for (k, x) in u.iter_mut().enumerate() {
                *x = -vj * v[k] / nu;
            }
            u[j] += 1.0 / nu;
            for (si, s) in samples.iter().enumerate() {
                let a = &proj[si];
                for (i, bi) in b[si].iter_mut().enumerate() {
                    *bi = (s.get(i, j) - vj * a[i]) / nu;
                }
            }
            let mut best: Option<(f64, f64)> = None;
            for theta in [h, -h] {
                let (sn, cs) = theta.sin_cos();
                for k in 0..d {
                    trial_v[k] = cs * v[k] + sn * u[k];
                }
                for si in 0..samples.len() {
                    for ((t, a), bb) in trial_proj[si].iter_mut().zip(&proj[si]).zip(&b[si]) {
                        *t = cs * a + sn * bb;
                    }
                }
                let ft = obj.eval(&trial_v, &trial_proj);
                if ft > best.map_or(f, |(bf, _)| bf) {
                    best = Some((ft, theta));
                }
            }
            if let Some((ft, theta)) = best {
                debug_assert!(ft >= f);
                let (sn, cs) = theta.sin_cos();
                for k in 0..d {
                    v[k] = cs * v[k] + sn * u[k];
                }
                for si in 0..samples.len() {
                    for (a, bb) in proj[si].iter_mut().zip(&b[si]) {
                        *a = cs * *a + sn * bb;
                    }
                }
                f = ft;
                moved = true;
            }
        }
        // Keep v on the sphere; projections scale with it.
        let nv = normalize(&mut v);
        if (nv - 1.0).abs() > 1e-15 {
            for p in proj.iter_mut() {
                p.iter_mut().for_each(|x| *x /= nv);
            }
            f = obj.eval(&v, &proj);
        }
        if !moved {
            h *= 0.5;
            if h < 1e-9 {
                break;
            }
        } else if f - sweep_start <= rel_tol * sweep_start.abs().max(1e-300) {
            break;
        }
    }
    debug_assert!((crate::linalg::norm(&v) - 1.0).abs() < UNIT_TOL);
    Probe { value: f, dir: v }
}

/// Maximizes `obj` over `dirs` given their precomputed values: the best
/// `top` probes are refined and the overall best is returned. Ties resolve to
/// the lowest index, so the result does not depend on scheduling.
pub fn best_with_refinement<O: Objective + ?Sized>(
    obj: &O,
    dirs: &[Vec<f64>],
    values: &[f64],
    top: usize,
    cfg: &SearchConfig,
    exec: Exec,
) -> Probe {
    assert_eq!(dirs.len(), values.len());
    assert!(!dirs.is_empty());
    let mut order: Vec<usize> = (0..dirs.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let picked: Vec<usize> = order.into_iter().take(top.min(dirs.len())).collect();

    let mut best = {
        let i = argmax(values);
        Probe { value: values[i], dir: dirs[i].clone() }
    };
    if cfg.refine_steps == 0 || picked.is_empty() {
        return best;
    }
    let refined =
        exec.map(picked.len(), |k| refine(obj, &dirs[picked[k]], cfg.refine_steps, cfg.rel_tol));
    for p in refined {
        if p.value > best.value {
            best = p;
        }
    }
    best
}

/// Evaluates `obj` at every direction.
pub fn evaluate_all<O: Objective + ?Sized>(obj: &O, dirs: &[Vec<f64>], exec: Exec) -> Vec<f64> {
    exec.map(dirs.len(), |k| obj.eval_at(&dirs[k]))
}

/// Evaluates, refines, and reduces over a direction set.
pub fn search<O: Objective + ?Sized>(obj: &O, ds: &DirectionSet, cfg: &SearchConfig, exec: Exec) -> Probe {
    let values = evaluate_all(obj, ds.vectors(), exec);
    let cfg = SearchConfig { refine_steps: ds.refine_steps, ..*cfg };
    best_with_refinement(obj, ds.vectors(), &values, cfg.refine_top, &cfg, exec)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// A direction-dependent target value `t(v)`, the left-hand side of a
/// quadratic-form fit `t(v) ≈ vᵀ A v`.
pub trait Target: Sync {
    fn samples(&self) -> Vec<&Sample>;
    fn dim(&self) -> usize;
    fn target(&self, v: &[f64], proj: &[Vec<f64>]) -> f64;

    /// An untruncated analogue of the fit (typically a sample second-moment
    /// matrix); eigenvectors of `reference − A` seed the residual search.
    fn reference(&self) -> Option<SymMatrix> {
        None
    }

    fn target_at(&self, v: &[f64]) -> f64 {
        let proj: Vec<Vec<f64>> = self.samples().iter().map(|s| s.project(v)).collect();
        self.target(v, &proj)
    }
}

/// `t(v) = (1/(λN)) Σ ψ(λ⟨x_i, v⟩²)`.
pub struct TruncatedTarget<'a> {
    pub sample: &'a Sample,
    pub level: TruncationLevel,
}

impl Target for TruncatedTarget<'_> {
    fn samples(&self) -> Vec<&Sample> {
        vec![self.sample]
    }
    fn dim(&self) -> usize {
        self.sample.dim()
    }
    fn target(&self, _v: &[f64], proj: &[Vec<f64>]) -> f64 {
        capped_second_moment(&proj[0], self.level.cap())
    }
    fn reference(&self) -> Option<SymMatrix> {
        Some(sample_covariance(self.sample).into_sym())
    }
}

/// `|t(v) − vᵀ A v|`.
pub struct Residual<'a, T: Target + ?Sized> {
    pub target: &'a T,
    pub a: &'a SymMatrix,
}

impl<T: Target + ?Sized> Objective for Residual<'_, T> {
    fn samples(&self) -> Vec<&Sample> {
        self.target.samples()
    }
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn eval(&self, v: &[f64], proj: &[Vec<f64>]) -> f64 {
        (self.target.target(v, proj) - self.a.quad_form(v)).abs()
    }
}

/// `(1/N) Σ ψ(α² ⟨x_i, v⟩²)`.
pub struct TruncatedMass<'a> {
    pub sample: &'a Sample,
    pub alpha: f64,
}

impl TruncatedMass<'_> {
    pub fn from_projections(proj: &[f64], alpha: f64) -> f64 {
        let a2 = alpha * alpha;
        proj.iter().map(|p| psi(a2 * p * p)).sum::<f64>() / proj.len() as f64
    }
}

impl Objective for TruncatedMass<'_> {
    fn samples(&self) -> Vec<&Sample> {
        vec![self.sample]
    }
    fn dim(&self) -> usize {
        self.sample.dim()
    }
    fn eval(&self, _v: &[f64], proj: &[Vec<f64>]) -> f64 {
        Self::from_projections(&proj[0], self.alpha)
    }
}

fn check_ds(s: &Sample, ds: &DirectionSet) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::param("direction set is empty"));
    }
    if ds.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: ds.dim() });
    }
    Ok(())
}

/// `max_v |(1/(λN)) Σ ψ(λ⟨x_i,v⟩²) − vᵀ A v|` over the refined direction set,
/// with the maximizing direction.
pub fn max_residual(
    s: &Sample,
    a: &SymMatrix,
    level: TruncationLevel,
    ds: &DirectionSet,
    cfg: &SearchConfig,
    exec: Exec,
) -> Result<Probe> {
    check_ds(s, ds)?;
    if a.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: a.dim() });
    }
    let target = TruncatedTarget { sample: s, level };
    Ok(search(&Residual { target: &target, a }, ds, cfg, exec))
}

/// `max_v (1/N) Σ ψ(α²⟨x_i,v⟩²)` over the refined direction set; in `[0, 1]`.
pub fn sup_truncated_mass(s: &Sample, alpha: f64, ds: &DirectionSet, cfg: &SearchConfig, exec: Exec) -> Result<f64> {
    check_ds(s, ds)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    Ok(search(&TruncatedMass { sample: s, alpha }, ds, cfg, exec).value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{op_norm, psd_project};
    use crate::truncation::truncated_process;

    fn rand_sample(n: usize, d: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d)
            .map(|k| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * (1.0 + (k % d) as f64 * 0.5)
            })
            .collect();
        Sample::from_row_major(n, d, data).unwrap()
    }

    fn angle(t: f64) -> Vec<f64> {
        vec![t.cos(), t.sin()]
    }

    #[test]
    fn one_dimensional_sphere_has_a_single_direction() {
        let s = Sample::from_rows(&[vec![2.0], vec![-1.0]]).unwrap();
        let ds = seed_directions(&s, &SymMatrix::zeros(1), 16, 1).unwrap();
        assert_eq!(ds.vectors(), &[vec![1.0]]);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let s = Sample::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(seed_directions(&s, &SymMatrix::zeros(2), 0, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn degenerate_residual_still_yields_axes() {
        let s = rand_sample(20, 3, 4);
        let a = sample_covariance(&s);
        let ds = seed_directions(&s, &a, 1, 9).unwrap();
        assert!(ds.len() >= 3);
        for v in ds.vectors() {
            assert!((crate::linalg::norm(v) - 1.0).abs() < UNIT_TOL);
        }
    }

    #[test]
    fn seeding_is_deterministic() {
        let s = rand_sample(30, 4, 2);
        let a = SymMatrix::identity(4);
        assert_eq!(seed_directions(&s, &a, 64, 7).unwrap(), seed_directions(&s, &a, 64, 7).unwrap());
    }

    #[test]
    fn untruncated_residual_matches_eigen_oracle() {
        let s = rand_sample(200, 4, 11);
        let a = psd_project(&SymMatrix::from_diag(&[0.5, 2.0, 1.0, 3.0]));
        let lvl = TruncationLevel::new(1e-12).unwrap();
        let mut ds = seed_directions(&s, &a, 32, 3).unwrap();
        ds.refine_steps = 0;
        let got = max_residual(&s, &a, lvl, &ds, &SearchConfig::default(), Exec::Sequential).unwrap();
        let oracle = op_norm(&sample_covariance(&s).sub(&a));
        assert!((got.value - oracle).abs() < 1e-9 * oracle, "{} vs {oracle}", got.value);
    }

    #[test]
    fn single_direction_case_is_exact() {
        let s = Sample::from_rows(&[vec![3.0], vec![0.5], vec![-2.0]]).unwrap();
        let a = SymMatrix::from_diag(&[0.7]);
        let lvl = TruncationLevel::new(0.2).unwrap();
        let ds = seed_directions(&s, &a, 8, 1).unwrap();
        let got = max_residual(&s, &a, lvl, &ds, &SearchConfig::default(), Exec::Sequential).unwrap();
        let exact = (truncated_process(&s, &[1.0], lvl).unwrap() - 0.7).abs();
        assert_eq!(got.value, exact);
    }

    fn grid_max(f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..3600)
            .map(|k| f(&angle(std::f64::consts::PI * k as f64 / 3600.0)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn planar_residual_close_to_angular_grid() {
        for seed in 0..10 {
            let s = rand_sample(60, 2, 100 + seed);
            let a = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.4]]).unwrap();
            let lvl = TruncationLevel::new(0.4).unwrap();
            let mut ds = seed_directions(&s, &a, 256, seed).unwrap();
            ds.refine_steps = 50;
            let got = max_residual(&s, &a, lvl, &ds, &SearchConfig::default(), Exec::Sequential).unwrap();
            let target = TruncatedTarget { sample: &s, level: lvl };
            let oracle = grid_max(|v| Residual { target: &target, a: &a }.eval_at(v));
            assert!(got.value >= 0.99 * oracle, "seed {seed}: {} vs {oracle}", got.value);
            // The grid spacing is 0.05°, so the grid can miss the true peak by a
            // Lipschitz-sized sliver.
            assert!(got.value <= oracle * (1.0 + 5e-3));
        }
    }

    #[test]
    fn planar_mass_close_to_angular_grid() {
        let s = rand_sample(80, 2, 5);
        let mut ds = seed_directions(&s, &SymMatrix::zeros(2), 256, 5).unwrap();
        ds.refine_steps = 50;
        for &alpha in &[0.2, 0.5, 1.3] {
            let got = sup_truncated_mass(&s, alpha, &ds, &SearchConfig::default(), Exec::Sequential).unwrap();
            let oracle = grid_max(|v| TruncatedMass { sample: &s, alpha }.eval_at(v));
            assert!(got >= 0.99 * oracle && got <= 1.0);
        }
    }

    #[test]
    fn mass_limits() {
        let s = rand_sample(40, 3, 8);
        let ds = seed_directions(&s, &SymMatrix::zeros(3), 32, 8).unwrap();
        let cfg = SearchConfig::default();
        let tiny = sup_truncated_mass(&s, 1e-9, &ds, &cfg, Exec::Sequential).unwrap();
        assert!(tiny < 1e-12);
        let huge = sup_truncated_mass(&s, 1e9, &ds, &cfg, Exec::Sequential).unwrap();
        assert_eq!(huge, 1.0);
    }

    #[test]
    fn refinement_never_decreases_objective() {
        let s = rand_sample(50, 3, 21);
        let a = SymMatrix::identity(3);
        let target = TruncatedTarget { sample: &s, level: TruncationLevel::new(0.3).unwrap() };
        let obj = Residual { target: &target, a: &a };
        for v in random_directions(3, 20, 4) {
            let start = obj.eval_at(&v);
            let mut prev = start;
            for steps in 1..8 {
                let p = refine(&obj, &v, steps, 0.0);
                assert!(p.value >= prev - 1e-15);
                assert!((p.value - obj.eval_at(&p.dir)).abs() < 1e-12);
                prev = p.value;
            }
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let s = rand_sample(100, 5, 3);
        let a = SymMatrix::identity(5);
        let lvl = TruncationLevel::new(0.2).unwrap();
        let mut ds = seed_directions(&s, &a, 64, 3).unwrap();
        ds.refine_steps = 20;
        let cfg = SearchConfig::default();
        let p = max_residual(&s, &a, lvl, &ds, &cfg, Exec::Parallel).unwrap();
        let q = max_residual(&s, &a, lvl, &ds, &cfg, Exec::Sequential).unwrap();
        assert_eq!(p, q);
    }
}
