//! Running sample mean, sample covariance and shrinkage target.
//!
//! The target `T = (Tr(S)/p)·I` is kept as its scalar scale only.

use crate::error::{Error, Result};
use crate::linalg::{check_dim, norm2, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    n: usize,
    mean: Vec<f64>,
    cov: Matrix,
    target_scale: f64,
}

/// Result of feeding one observation into a [`StreamState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: StreamState,
    /// `d = x − m` against the mean before the update.
    pub innovation: Vec<f64>,
}

impl StreamState {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self {
            n: 0,
            mean: vec![0.0; p],
            cov: Matrix::zeros(p),
            target_scale: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    /// `Tr(S)/p`.
    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    /// The target `(Tr(S)/p)·I` as a matrix.
    pub fn target(&self) -> Matrix {
        Matrix::scaled_identity(self.dim(), self.target_scale)
    }

    /// Adds one observation.
    ///
    /// With `d = x − mₙ`:
    /// `m ← m + d/(n+1)`, `S ← ((n−1)/n)·S + d dᵀ/(n+1)` and
    /// `t ← ((n−1)/n)·t + ‖d‖²/((n+1)p)`. The first observation sets the
    /// mean and leaves `S = 0`, which makes the recursion exact from `n = 2`.
    pub fn observe(&self, x: &[f64]) -> Result<Observation> {
        check_dim(self.dim(), x.len())?;
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(bad));
        }
        let p = self.dim() as f64;
        let n = self.n as f64;
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();

        let next = if self.n == 0 {
            StreamState {
                n: 1,
                mean: x.to_vec(),
                cov: Matrix::zeros(self.dim()),
                target_scale: 0.0,
            }
        } else {
            let mean = self
                .mean
                .iter()
                .zip(&d)
                .map(|(m, di)| m + di / (n + 1.0))
                .collect();
            let decay = (n - 1.0) / n;
            let mut cov = self.cov.scale(decay);
            cov.add_sym_outer_assign(1.0 / (n + 1.0), &d)?;
            let target_scale = decay * self.target_scale + norm2(&d) / ((n + 1.0) * p);
            StreamState {
                n: self.n + 1,
                mean,
                cov,
                target_scale,
            }
        };
        Ok(Observation {
            state: next,
            innovation: d,
        })
    }
}

/// Arithmetic mean of the samples.
pub fn batch_mean(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = samples.first().ok_or(Error::EmptyInput)?;
    let p = first.len();
    let mut mean = vec![0.0; p];
    for x in samples {
        check_dim(p, x.len())?;
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    let n = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Unbiased sample covariance `1/(n−1) Σ (xᵢ − m)(xᵢ − m)ᵀ`.
pub fn batch_cov(samples: &[Vec<f64>]) -> Result<Matrix> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: samples.len(),
        });
    }
    let mean = batch_mean(samples)?;
    let p = mean.len();
    let mut cov = Matrix::zeros(p);
    for x in samples {
        let c: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
        cov.add_sym_outer_assign(1.0, &c)?;
    }
    Ok(cov.scale(1.0 / (samples.len() as f64 - 1.0)))
}

/// `(Tr(S)/p)·I`.
pub fn batch_target(cov: &Matrix) -> Matrix {
    Matrix::scaled_identity(cov.dim(), cov.trace() / cov.dim() as f64)
}
