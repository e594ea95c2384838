//! Dense symmetric matrices, samples, and the spectral primitives shared by
//! every estimator.
//!
//! Eigen-decompositions are delegated to nalgebra's symmetric solver
//! (Householder tridiagonalization followed by implicit QR), which is exact to
//! working precision at the dimensions this crate targets (d up to a few
//! hundred).

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance on the unit norm of a direction vector.
pub const UNIT_TOL: f64 = 1e-10;

/// A real symmetric `dim × dim` matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymMatrix")
            .field("dim", &self.dim)
            .field("rows", &self.to_rows())
            .finish()
    }
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, averaging with the transpose so
    /// that the result is exactly symmetric.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite matrix entry {bad}")));
        }
        let mut m = SymMatrix { dim, data: entries };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
        }
        Self::from_row_major(dim, rows.concat())
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &x) in diag.iter().enumerate() {
            m.data[i * dim + i] = x;
        }
        m
    }

    /// Sum of `weight · v vᵀ` terms; used for rank-one builds in tests and
    /// samplers.
    pub fn outer(v: &[f64]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = v[i] * v[j];
            }
        }
        m
    }

    pub(crate) fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * v[j];
            }
            acc += v[i] * s;
        }
        acc
    }

    /// `uᵀ M v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            let s: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            acc += u[i] * s;
        }
        acc
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix { dim: self.dim, data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matrix subtraction");
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matrix addition");
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// `self + c · v vᵀ`, in place.
    pub fn add_outer(&mut self, c: f64, v: &[f64]) {
        let d = self.dim;
        for i in 0..d {
            let ci = c * v[i];
            for j in 0..d {
                self.data[i * d + j] += ci * v[j];
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub(crate) fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Full symmetric eigen-decomposition with eigenvalues in ascending order.
    pub fn eigen(&self) -> Eigen {
        let d = self.dim;
        let se = SymmetricEigen::new(self.to_dmatrix());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
        let vectors = order
            .iter()
            .map(|&k| {
                let mut v: Vec<f64> = se.eigenvectors.column(k).iter().copied().collect();
                normalize(&mut v);
                v
            })
            .collect();
        Eigen { values, vectors }
    }

    pub fn op_norm(&self) -> f64 {
        let se = SymmetricEigen::new(self.to_dmatrix());
        se.eigenvalues.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}

/// Eigenpairs of a symmetric matrix, ascending by eigenvalue.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Eigen {
    /// `Σ_k f(λ_k) u_k u_kᵀ`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.values.len();
        let mut m = SymMatrix::zeros(d);
        for (lam, u) in self.values.iter().zip(&self.vectors) {
            let w = f(*lam);
            if w != 0.0 {
                m.add_outer(w, u);
            }
        }
        m.symmetrize();
        m
    }
}

/// A symmetric matrix known to be positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(SymMatrix);

impl Deref for PsdMatrix {
    type Target = SymMatrix;
    fn deref(&self) -> &SymMatrix {
        &self.0
    }
}

impl PsdMatrix {
    pub fn zeros(dim: usize) -> Self {
        PsdMatrix(SymMatrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        PsdMatrix(SymMatrix::identity(dim))
    }

    /// Accepts `m` if its smallest eigenvalue is at least `-1e-10 · ‖m‖`.
    pub fn try_from_sym(m: SymMatrix) -> Result<Self> {
        let eig = m.eigen();
        let norm = eig.values.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let min = eig.values.first().copied().unwrap_or(0.0);
        if min < -1e-10 * norm {
            return Err(Error::InvalidInput(format!(
                "matrix is not positive semi-definite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(PsdMatrix(m))
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidInput("diagonal entries must be finite and nonnegative".into()));
        }
        Ok(PsdMatrix(SymMatrix::from_diag(diag)))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0, "PSD matrices are only closed under nonnegative scaling");
        PsdMatrix(self.0.scaled(c))
    }

    /// Symmetric square root `S^{1/2}`.
    pub fn sqrt(&self) -> SymMatrix {
        self.0.eigen().reconstruct(|l| l.max(0.0).sqrt())
    }
}

/// Operator (spectral) norm: the largest eigenvalue magnitude.
pub fn op_norm(m: &SymMatrix) -> f64 {
    m.op_norm()
}

/// Frobenius-nearest PSD matrix: negative eigenvalues are clipped to zero.
pub fn psd_project(m: &SymMatrix) -> PsdMatrix {
    let eig = m.eigen();
    if eig.values.first().is_none_or(|&l| l >= 0.0) {
        return PsdMatrix(m.clone());
    }
    PsdMatrix(eig.reconstruct(|l| l.max(0.0)))
}

/// `tr(S) / ‖S‖`, a value in `[1, d]`.
pub fn effective_rank(s: &PsdMatrix) -> Result<f64> {
    let norm = s.op_norm();
    if norm == 0.0 {
        return Err(Error::UndefinedScale);
    }
    Ok((s.trace() / norm).max(1.0))
}

/// An `n × dim` matrix of observations, one per row.
#[derive(Clone, PartialEq)]
pub struct Sample {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sample {{ n: {}, dim: {} }}", self.n, self.dim)
    }
}

impl Sample {
    pub fn from_row_major(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidInput("sample must have at least one row and column".into()));
        }
        if data.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, found: data.len() });
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample entry {bad}")));
        }
        Ok(Sample { n, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
        }
        Self::from_row_major(rows.len(), dim, rows.concat())
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        assert!(n > 0 && dim > 0);
        Sample { n, dim, data: vec![0.0; n * dim] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Rows `start..end` as a new sample.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Sample> {
        if start >= end || end > self.n {
            return Err(Error::param(format!("row range {start}..{end} invalid for {} rows", self.n)));
        }
        Ok(Sample {
            n: end - start,
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        })
    }

    pub fn scaled(&self, t: f64) -> Sample {
        Sample { n: self.n, dim: self.dim, data: self.data.iter().map(|x| t * x).collect() }
    }

    /// Projections `⟨x_i, v⟩` for every row.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        self.rows().map(|r| dot(r, v)).collect()
    }

    pub fn row_norms_sq(&self) -> Vec<f64> {
        self.rows().map(|r| dot(r, r)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Subtracts the column means from every row.
    pub fn centered(&self) -> Sample {
        let mut mean = vec![0.0; self.dim];
        for r in self.rows() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        let mut out = self.clone();
        for i in 0..self.n {
            for (x, m) in out.row_mut(i).iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        out
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Sample { n: self.n + other.n, dim: self.dim, data })
    }
}

/// Uncentered second-moment matrix `(1/N) Σ x_i x_iᵀ`.
pub fn sample_covariance(s: &Sample) -> PsdMatrix {
    let d = s.dim();
    let mut acc = vec![0.0; d * d];
    for r in s.rows() {
        for i in 0..d {
            let ri = r[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..d {
                acc[i * d + j] += ri * r[j];
            }
        }
    }
    let inv_n = 1.0 / s.n() as f64;
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] * inv_n;
            acc[i * d + j] = v;
            acc[j * d + i] = v;
        }
    }
    PsdMatrix(SymMatrix { dim: d, data: acc })
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit length in place; returns the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

pub(crate) fn check_unit(v: &[f64]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidDirection { norm: n });
    }
    Ok(())
}
