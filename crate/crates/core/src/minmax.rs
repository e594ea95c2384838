//! Min-max PSD fitting of direction-dependent targets:
//!
//! ```text
//! minimize over A ⪰ 0:  sup_{‖v‖=1} | t(v) − vᵀ A v |
//! ```
//!
//! Cutting-plane scheme. A working set `V` of directions carries cached
//! targets. The inner problem over `V` is a Chebyshev fit, solved by Lawson's
//! reweighted least squares (unconstrained) and then by projected
//! subgradient steps with a Polyak-type level rule. The outer step searches
//! the sphere for the worst direction at the current fit and adds it to `V`.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::directions::{argmax, refine, Objective, DirectionSet, Probe, Residual, SearchConfig, Target};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{psd_project, PsdMatrix, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub lawson_iters: usize,
    /// Outer loop stops once the sphere residual exceeds the working-set
    /// residual by less than this fraction.
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { outer_iters: 20, inner_iters: 500, lawson_iters: 60, tolerance: 1e-3 }
    }
}

/// Reweighted least squares is skipped above this many free parameters.
const LAWSON_MAX_PARAMS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub a: PsdMatrix,
    /// Residual at `a` over the searched sphere; a lower bound on the true sup.
    pub residual: f64,
    /// Residual at `a` over the final working set.
    pub inner_residual: f64,
    pub worst_dir: Vec<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub working_set: usize,
}

/// Upper-triangle coordinates of `v vᵀ` weighted so that `⟨feat(v), a⟩ = vᵀ A v`.
fn features(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut f = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        f.push(v[i] * v[i]);
        for j in i + 1..d {
            f.push(2.0 * v[i] * v[j]);
        }
    }
    f
}

fn to_upper(m: &SymMatrix) -> Vec<f64> {
    let d = m.dim();
    let mut a = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            a.push(m.get(i, j));
        }
    }
    a
}

fn from_upper(d: usize, a: &[f64]) -> SymMatrix {
    let mut data = vec![0.0; d * d];
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            data[i * d + j] = a[k];
            data[j * d + i] = a[k];
            k += 1;
        }
    }
    SymMatrix::from_row_major(d, data).expect("finite entries")
}

struct WorkingSet {
    dirs: Vec<Vec<f64>>,
    feats: Vec<Vec<f64>>,
    targets: Vec<f64>,
    index: DirectionSet,
}

impl WorkingSet {
    fn new<T: Target + ?Sized>(target: &T, seeds: &DirectionSet, exec: Exec) -> Result<Self> {
        let first = seeds.vectors()[0].clone();
        let mut ws = WorkingSet {
            dirs: Vec::new(),
            feats: Vec::new(),
            targets: Vec::new(),
            index: DirectionSet::new(seeds.dim(), vec![first.clone()], 0)?,
        };
        let t = target.target_at(&first);
        ws.add(first, t);
        ws.extend(target, seeds.vectors()[1..].to_vec(), exec);
        Ok(ws)
    }

    fn add(&mut self, v: Vec<f64>, t: f64) {
        self.feats.push(features(&v));
        self.dirs.push(v);
        self.targets.push(t);
    }

    /// Adds directions not already present (up to sign), computing targets.
    fn extend<T: Target + ?Sized>(&mut self, target: &T, vs: Vec<Vec<f64>>, exec: Exec) -> usize {
        let mut fresh = Vec::new();
        for v in vs {
            let before = self.index.len();
            let _ = self.index.push(v);
            if self.index.len() > before {
                fresh.push(self.index.vectors()[before].clone());
            }
        }
        let ts = exec.map(fresh.len(), |k| target.target_at(&fresh[k]));
        let added = fresh.len();
        for (v, t) in fresh.into_iter().zip(ts) {
            self.add(v, t);
        }
        added
    }

    fn residuals(&self, a: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.feats.iter().zip(&self.targets).map(|(f, t)| t - dot(f, a)));
    }

    fn max_abs(&self, a: &[f64]) -> (f64, usize) {
        let mut best = (0.0, 0);
        for (k, (f, t)) in self.feats.iter().zip(&self.targets).enumerate() {
            let r = (t - dot(f, a)).abs();
            if r > best.0 {
                best = (r, k);
            }
        }
        best
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lawson's algorithm for the unconstrained Chebyshev fit; returns the best
/// iterate by max residual.
fn lawson(ws: &WorkingSet, iters: usize) -> Option<Vec<f64>> {
    let m = ws.dirs.len();
    let p = ws.feats[0].len();
    if p > LAWSON_MAX_PARAMS || iters == 0 {
        return None;
    }
    let mut w = vec![1.0 / m as f64; m];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut r = Vec::with_capacity(m);
    let mut stalled = 0;
    for _ in 0..iters {
        let mut g = DMatrix::<f64>::zeros(p, p);
        let mut h = DVector::<f64>::zeros(p);
        for k in 0..m {
            // Weights of points off the active set decay geometrically;
            // below this they no longer move the solve.
            if w[k] < 1e-16 {
                continue;
            }
            let f = &ws.feats[k];
            for i in 0..p {
                let wi = w[k] * f[i];
                h[i] += wi * ws.targets[k];
                for j in i..p {
                    g[(i, j)] += wi * f[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        let svd = g.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max();
        let a: Vec<f64> = match svd.solve(&h, eps) {
            Ok(x) => x.iter().copied().collect(),
            Err(_) => break,
        };
        if a.iter().any(|x| !x.is_finite()) {
            break;
        }
        ws.residuals(&a, &mut r);
        let f = r.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if best.as_ref().is_none_or(|(bf, _)| f < *bf * (1.0 - 1e-9)) {
            best = Some((f, a));
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 10 {
                break;
            }
        }
        let mut total = 0.0;
        for k in 0..m {
            w[k] *= r[k].abs();
            total += w[k];
        }
        if !(total > 1e-300) {
            break;
        }
        w.iter_mut().for_each(|x| *x /= total);
    }
    best.map(|(_, a)| a)
}

/// Projected subgradient on `max_k |t_k − ⟨f_k, a⟩|` over PSD matrices,
/// started at `start`. Returns the best iterate and its value; the tracked
/// best value never increases.
fn polyak(ws: &WorkingSet, start: PsdMatrix, iters: usize, floor: f64) -> (PsdMatrix, f64) {
    let mut a_mat = start;
    let mut a = to_upper(&a_mat);
    let (mut f_best, _) = ws.max_abs(&a);
    let mut best = a_mat.clone();
    let mut delta = 0.25 * f_best;
    let mut since_progress = 0;
    let mut anchor = f_best;
    for _ in 0..iters {
        if f_best <= floor || delta <= 1e-12 * f_best {
            break;
        }
        let (f, k) = ws.max_abs(&a);
        if f < f_best {
            debug_assert!(f <= f_best);
            f_best = f;
            best = a_mat.clone();
        }
        if f_best <= anchor - 0.5 * delta {
            anchor = f_best;
            since_progress = 0;
            delta *= 1.5;
        } else {
            since_progress += 1;
            if since_progress >= 25 {
                delta *= 0.5;
                since_progress = 0;
                anchor = f_best;
                a_mat = best.clone();
                a = to_upper(&a_mat);
                continue;
            }
        }
        let level = f_best - delta;
        let r = ws.targets[k] - dot(&ws.feats[k], &a);
        let step = (f - level).max(0.0) * r.signum();
        let mut m = a_mat.into_sym();
        m.add_outer(step, &ws.dirs[k]);
        m.symmetrize();
        a_mat = if step >= 0.0 { PsdMatrix::try_from_sym(m.clone()).unwrap_or_else(|_| psd_project(&m)) } else { psd_project(&m) };
        a = to_upper(&a_mat);
    }
    let (f, _) = ws.max_abs(&a);
    if f < f_best {
        return (a_mat, f);
    }
    (best, f_best)
}

/// Refines the `top` directions with largest residual at `a`; returns every
/// refined probe, in index order of the starting directions.
fn refine_top<T: Target + ?Sized>(
    target: &T,
    a: &SymMatrix,
    starts: &[Vec<f64>],
    values: &[f64],
    cfg: &SearchConfig,
    exec: Exec,
) -> Vec<Probe> {
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]).then(x.cmp(&y)));
    order.truncate(cfg.refine_top.min(starts.len()));
    order.sort_unstable();
    let obj = Residual { target, a };
    exec.map(order.len(), |k| refine(&obj, &starts[order[k]], cfg.refine_steps, cfg.rel_tol))
}

/// Fits `A ⪰ 0` to `target` by the cutting-plane min-max scheme.
///
/// `seeds` initializes the working set; `warm` lists extra starting points
/// for the inner solver (the best one over the working set is used).
pub fn fit_minmax<T: Target + ?Sized>(
    target: &T,
    seeds: &DirectionSet,
    warm: &[SymMatrix],
    fit: &FitConfig,
    search: &SearchConfig,
    exec: Exec,
) -> Result<FitResult> {
    let d = target.dim();
    if seeds.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: seeds.dim() });
    }
    if seeds.is_empty() {
        return Err(Error::param("direction set is empty"));
    }
    let reference = target.reference();
    let mut ws = WorkingSet::new(target, seeds, exec)?;

    let mut candidates: Vec<SymMatrix> = warm.to_vec();
    if let Some(r) = &reference {
        candidates.push(r.clone());
    }
    let scale = ws.targets.iter().fold(0.0_f64, |m, t| m.max(t.abs())).max(f64::MIN_POSITIVE);
    let floor = 1e-14 * scale;

    let mut current: Option<PsdMatrix> = None;
    let mut outcome = None;
    for outer in 0..fit.outer_iters.max(1) {
        // Inner solve over the working set.
        let mut starts: Vec<PsdMatrix> = candidates.iter().map(psd_project).collect();
        if let Some(c) = &current {
            starts.push(c.clone());
        }
        if let Some(a) = lawson(&ws, fit.lawson_iters) {
            starts.push(psd_project(&from_upper(d, &a)));
        }
        if starts.is_empty() {
            starts.push(PsdMatrix::zeros(d));
        }
        let start = starts
            .into_iter()
            .map(|m| {
                let f = ws.max_abs(&to_upper(&m)).0;
                (f, m)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .map(|(_, m)| m)
            .expect("nonempty");
        let (a, f_in) = polyak(&ws, start, fit.inner_iters, floor);
        current = Some(a.clone());

        // Outer search for the worst direction at `a`.
        let mut probes: Vec<Vec<f64>> = ws.dirs.clone();
        let mut values: Vec<f64> = {
            let au = to_upper(&a);
            let mut r = Vec::new();
            ws.residuals(&au, &mut r);
            r.iter().map(|x| x.abs()).collect()
        };
        if let Some(r) = &reference {
            let eig = r.sub(&a).eigen().vectors;
            let obj = Residual { target, a: a.as_sym() };
            let vals = exec.map(eig.len(), |k| obj.eval_at(&eig[k]));
            probes.extend(eig);
            values.extend(vals);
        }
        let mut best = {
            let i = argmax(&values);
            Probe { value: values[i], dir: probes[i].clone() }
        };
        let refined = if search.refine_steps > 0 {
            refine_top(target, a.as_sym(), &probes, &values, search, exec)
        } else {
            Vec::new()
        };
        let mut new_dirs: Vec<Vec<f64>> = Vec::new();
        for p in &refined {
            if p.value > best.value {
                best = p.clone();
            }
            if p.value > f_in {
                new_dirs.push(p.dir.clone());
            }
        }
        for (v, val) in probes.iter().zip(&values).skip(ws.dirs.len()) {
            if *val > f_in {
                new_dirs.push(v.clone());
            }
        }
        let gap_ok = best.value - f_in <= fit.tolerance * f_in + floor.max(1e-12 * scale);
        debug!("minmax outer {outer}: inner {f_in:.6e}, sphere {:.6e}, |V| = {}", best.value, ws.dirs.len());
        let done = gap_ok || outer + 1 >= fit.outer_iters.max(1);
        if done {
            outcome = Some(FitResult {
                a,
                residual: best.value.max(f_in),
                inner_residual: f_in,
                worst_dir: best.dir,
                converged: gap_ok,
                outer_iterations: outer + 1,
                working_set: ws.dirs.len(),
            });
            break;
        }
        if ws.extend(target, new_dirs, exec) == 0 {
            outcome = Some(FitResult {
                a,
                residual: best.value.max(f_in),
                inner_residual: f_in,
                worst_dir: best.dir,
                converged: false,
                outer_iterations: outer + 1,
                working_set: ws.dirs.len(),
            });
            break;
        }
    }
    Ok(outcome.expect("at least one outer iteration"))
}
