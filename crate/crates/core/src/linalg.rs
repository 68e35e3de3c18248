//! Dense square-matrix kernels used throughout the crate.
//!
//! Matrices are stored full and row-major. Most of the matrices handled here
//! (covariances, shrinkage estimators, their inverses) are symmetric; the
//! intermediates of the column-wise inverse chain are not, so [`Matrix`] does
//! not enforce symmetry itself. Results that are symmetric in exact arithmetic
//! are passed through [`Matrix::symmetrize`] by the code producing them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `p × p` matrix of `f64`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row vectors; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    /// `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Result<Self> {
        check_dim(u.len(), v.len())?;
        Ok(Self::from_fn(u.len(), |i, j| u[i] * v[j]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let p = self.dim;
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (self.data[i * p + j] + self.data[j * p + i]);
                self.data[i * p + j] = avg;
                self.data[j * p + i] = avg;
            }
        }
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let p = self.dim;
        let mut worst = 0.0_f64;
        for i in 0..p {
            for j in (i + 1)..p {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Squared Frobenius norm.
    pub fn frob_norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm2().sqrt()
    }

    /// `⟨A, B⟩ = Tr(Aᵀ B)`.
    pub fn inner(&self, other: &Matrix) -> Result<f64> {
        check_dim(self.dim, other.dim)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.dim, other.dim)?;
        let p = self.dim;
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..p {
                let a = self.data[i * p + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix { dim: p, data: out })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok((0..self.dim).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self + c·I`.
    pub fn add_identity(&self, c: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += c;
        }
        out
    }

    /// `self ← self + c·u vᵀ`.
    pub fn add_outer_assign(&mut self, c: f64, u: &[f64], v: &[f64]) -> Result<()> {
        check_dim(self.dim, u.len())?;
        check_dim(self.dim, v.len())?;
        let p = self.dim;
        for (i, &ui) in u.iter().enumerate() {
            let cu = c * ui;
            for (o, &vj) in self.data[i * p..(i + 1) * p].iter_mut().zip(v) {
                *o += cu * vj;
            }
        }
        Ok(())
    }

    /// `self ← self + c·u uᵀ`, written so that the added term is bit-symmetric.
    pub fn add_sym_outer_assign(&mut self, c: f64, u: &[f64]) -> Result<()> {
        check_dim(self.dim, u.len())?;
        let p = self.dim;
        for i in 0..p {
            let cu = c * u[i];
            for j in i..p {
                let v = cu * u[j];
                self.data[i * p + j] += v;
                if i != j {
                    self.data[j * p + i] += v;
                }
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        check_dim(self.dim, other.dim)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `‖A − B‖_F / ‖B‖_F` (absolute difference when `B` is zero).
    pub fn rel_frob_diff(&self, reference: &Matrix) -> Result<f64> {
        let diff = self.sub(reference)?.frob_norm();
        let scale = reference.frob_norm();
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        check_dim(self.dim, other.dim)?;
        Ok(Matrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    lower: Matrix,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let p = self.dim();
        let l = &self.lower;
        let mut out = Matrix::from_fn(p, |i, j| {
            let k_max = i.min(j);
            (0..=k_max).map(|k| l.get(i, k) * l.get(j, k)).sum()
        });
        out.symmetrize();
        out
    }
}

/// Cholesky–Banachiewicz factorization. Only the lower triangle of `a` is read.
pub fn cholesky(a: &Matrix) -> Result<CholFactor> {
    let p = a.dim();
    if p == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut l = Matrix::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let pivot = a.get(i, i) - s;
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return Err(Error::NotPositiveDefinite { index: i, pivot });
                }
                l.set(i, i, pivot.sqrt());
            } else {
                l.set(i, j, (a.get(i, j) - s) / l.get(j, j));
            }
        }
    }
    Ok(CholFactor { lower: l })
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn inv_spd(a: &Matrix) -> Result<Matrix> {
    let chol = cholesky(a)?;
    let l = chol.lower();
    let p = l.dim();

    // W = L⁻¹ by forward substitution, column by column.
    let mut w = Matrix::zeros(p);
    for col in 0..p {
        for i in col..p {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l.get(i, k) * w.get(k, col);
            }
            w.set(i, col, s / l.get(i, i));
        }
    }

    // A⁻¹ = Wᵀ W; W is lower triangular.
    let mut inv = Matrix::from_fn(p, |i, j| {
        let start = i.max(j);
        (start..p).map(|k| w.get(k, i) * w.get(k, j)).sum()
    });
    inv.symmetrize();
    Ok(inv)
}

/// Maps standard normal draws `z` to `L z`, a zero-mean draw with covariance `L Lᵀ`.
pub fn sample_gaussian(chol: &CholFactor, standard_normals: &[f64]) -> Result<Vec<f64>> {
    let p = chol.dim();
    check_dim(p, standard_normals.len())?;
    let l = chol.lower();
    Ok((0..p)
        .map(|i| dot(&l.row(i)[..=i], &standard_normals[..=i]))
        .collect())
}

/// `‖A B − I‖_F / √p`, the normalized residual used for inverse checks.
pub fn normalized_residual(a: &Matrix, b: &Matrix) -> Result<f64> {
    let p = a.dim();
    let prod = a.matmul(b)?;
    Ok(prod.add_identity(-1.0).frob_norm() / (p as f64).sqrt())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
