//! Desk-scale oracles: the sparse-supremum statistic `f(k, [N])` and the
//! peaky/spread split of the quadratic process.

use crate::directions::{search, DirectionSet, Objective, SearchConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, Sample, SymMatrix};
use crate::truncation::capped_second_moment;

/// Largest number of subsets the brute-force statistic will enumerate.
pub const BRUTE_FORCE_CAP: u64 = 1_000_000;

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// `λ_max` of the Gram matrix of the rows in `idx`.
pub fn gram_lambda_max(s: &Sample, idx: &[usize]) -> f64 {
    let k = idx.len();
    if k == 0 {
        return 0.0;
    }
    if k == 1 {
        let r = s.row(idx[0]);
        return dot(r, r);
    }
    let mut g = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let v = dot(s.row(idx[a]), s.row(idx[b]));
            g[a * k + b] = v;
            g[b * k + a] = v;
        }
    }
    SymMatrix::from_row_major(k, g).map(|m| m.op_norm()).unwrap_or(0.0)
}

fn check_k(s: &Sample, k: usize) -> Result<()> {
    if k == 0 || k > s.n() {
        return Err(Error::param(format!("need 1 <= k <= N = {}, got k = {k}", s.n())));
    }
    Ok(())
}

/// Exact `f(k) = max_{|I| ≤ k} λ_max(Gram(I))`.
///
/// Enlarging `I` cannot lower `λ_max` (the old Gram matrix is a principal
/// submatrix of the new one), so only subsets of size exactly `k` are
/// enumerated. Refuses when there are more than [`BRUTE_FORCE_CAP`] of them.
pub fn f_stat_bruteforce(s: &Sample, k: usize, exec: Exec) -> Result<f64> {
    check_k(s, k)?;
    let n = s.n();
    let count = binomial(n, k);
    if count > BRUTE_FORCE_CAP {
        return Err(Error::Infeasible(format!("C({n}, {k}) = {count} subsets exceeds the cap of {BRUTE_FORCE_CAP}")));
    }
    // One task per leading index; each walks the remaining combinations in
    // lexicographic order.
    let per_first = exec.map(n - k + 1, |first| {
        let mut idx: Vec<usize> = (first..first + k).collect();
        let mut best = 0.0f64;
        loop {
            best = best.max(gram_lambda_max(s, &idx));
            // Advance positions 1..k; position 0 stays at `first`.
            let mut pos = k;
            loop {
                if pos <= 1 {
                    return best;
                }
                pos -= 1;
                if idx[pos] < n - (k - pos) {
                    break;
                }
            }
            idx[pos] += 1;
            for j in pos + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    });
    Ok(per_first.into_iter().fold(0.0, f64::max))
}

/// Greedy forward selection: start from the longest row and repeatedly add
/// the row that maximizes `λ_max` of the growing Gram matrix. Ties go to the
/// lowest index. Never exceeds [`f_stat_bruteforce`].
pub fn f_stat_greedy(s: &Sample, k: usize) -> Result<f64> {
    Ok(*f_stat_greedy_path(s, k)?.last().unwrap_or(&0.0))
}

/// Greedy values for every size `1..=k`.
pub fn f_stat_greedy_path(s: &Sample, k: usize) -> Result<Vec<f64>> {
    check_k(s, k)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut used = vec![false; s.n()];
    let mut path = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for i in 0..s.n() {
            if used[i] {
                continue;
            }
            // Sorted so that a subset evaluates exactly as in the brute force.
            let mut trial = chosen.clone();
            trial.push(i);
            trial.sort_unstable();
            let v = gram_lambda_max(s, &trial);
            if v > best.0 {
                best = (v, i);
            }
        }
        used[best.1] = true;
        chosen.push(best.1);
        path.push(best.0);
    }
    Ok(path)
}

/// The three per-direction quantities of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakySpread {
    /// `(1/N) Σ ⟨x_i,v⟩² 1{λ⟨x_i,v⟩² > 1}`
    pub peaky: f64,
    /// `|(1/(Nλ)) Σ ψ(λ⟨x_i,v⟩²) − vᵀ R v|`
    pub spread: f64,
    /// `|(1/N) Σ ⟨x_i,v⟩² − vᵀ R v|`
    pub total: f64,
}

impl PeakySpread {
    fn from_projections(proj: &[f64], lambda: f64, reference: f64) -> Self {
        let n = proj.len() as f64;
        let mut plain = 0.0;
        let mut peaky = 0.0;
        for p in proj {
            let p2 = p * p;
            plain += p2;
            if lambda * p2 > 1.0 {
                peaky += p2;
            }
        }
        let clipped = capped_second_moment(proj, 1.0 / lambda);
        PeakySpread { peaky: peaky / n, spread: (clipped - reference).abs(), total: (plain / n - reference).abs() }
    }

    fn component(&self, which: usize) -> f64 {
        match which {
            0 => self.peaky,
            1 => self.spread,
            _ => self.total,
        }
    }
}

struct Component<'a> {
    s: &'a Sample,
    lambda: f64,
    reference: &'a SymMatrix,
    which: usize,
}

impl Objective for Component<'_> {
    fn samples(&self) -> Vec<&Sample> {
        vec![self.s]
    }

    fn dim(&self) -> usize {
        self.s.dim()
    }

    fn eval(&self, v: &[f64], proj: &[Vec<f64>]) -> f64 {
        PeakySpread::from_projections(&proj[0], self.lambda, self.reference.quad_form(v)).component(self.which)
    }
}

/// Suprema of the three parts over one shared direction set.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub peaky: f64,
    pub spread: f64,
    pub total: f64,
    /// `ds` plus the refined maximizer of each part.
    pub directions: DirectionSet,
    pub per_direction: Vec<PeakySpread>,
}

/// Searches for the maximizer of each part starting from `ds`, adds the three
/// refined directions to the set, and reports all three suprema over that
/// common set. Per direction, `total ≤ peaky + spread` holds exactly.
pub fn peaky_spread_decompose(
    s: &Sample,
    lambda: f64,
    reference: &SymMatrix,
    ds: &DirectionSet,
    cfg: &SearchConfig,
    exec: Exec,
) -> Result<Decomposition> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    if reference.dim() != s.dim() || ds.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: reference.dim().max(ds.dim()) });
    }
    let mut directions = ds.clone();
    for which in 0..3 {
        let obj = Component { s, lambda, reference, which };
        let best = search(&obj, ds, cfg, exec);
        directions.push(best.dir)?;
    }
    let per_direction = exec.map(directions.len(), |k| {
        let v = &directions.vectors()[k];
        PeakySpread::from_projections(&s.project(v), lambda, reference.quad_form(v))
    });
    let sup = |f: fn(&PeakySpread) -> f64| per_direction.iter().map(f).fold(0.0, f64::max);
    Ok(Decomposition {
        peaky: sup(|p| p.peaky),
        spread: sup(|p| p.spread),
        total: sup(|p| p.total),
        directions,
        per_direction,
    })
}
