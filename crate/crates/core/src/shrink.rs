//! Shrinkage coefficient estimation and sequential maintenance of the
//! shrinkage estimator `Σ̂(λ) = (1−λ)·S + λ·T`.

use crate::error::{Error, Result};
use crate::linalg::{check_dim, norm2, Matrix};
use crate::stream::StreamState;

/// A scalar coefficient plus a flag marking the conventional value returned
/// for a degenerate (zero) denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub degenerate: bool,
}

impl Estimate {
    pub(crate) fn regular(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    pub(crate) fn degenerate(value: f64) -> Self {
        Self {
            value,
            degenerate: true,
        }
    }
}

/// Plug-in value of the MSE-optimal coefficient when the true covariance is known:
/// `clamp₀¹(⟨T−S, Σ−S⟩ / ‖T−S‖²_F)`.
///
/// If `S` is already spherical every `λ` is optimal; `0` is returned with the
/// degenerate flag set.
pub fn oracle_lambda_plugin(s: &Matrix, target_scale: f64, sigma_true: &Matrix) -> Result<Estimate> {
    check_dim(s.dim(), sigma_true.dim())?;
    let target_minus_s = s.scale(-1.0).add_identity(target_scale);
    let denom = target_minus_s.frob_norm2();
    if denom < 1e-300 {
        return Ok(Estimate::degenerate(0.0));
    }
    let numer = target_minus_s.inner(&sigma_true.sub(s)?)?;
    Ok(Estimate::regular((numer / denom).clamp(0.0, 1.0)))
}

/// Streaming shrinkage coefficient from `Tr(S)`, `Tr(S²)`, `n` and `p`
/// (oracle-approximating form):
///
/// `λ̂ = min(1, [(1 − 2/p)·Tr(S²) + Tr²(S)] / [(n + 1 − 2/p)·(Tr(S²) − Tr²(S)/p)])`
///
/// A spherical `S` (including `S = 0`) yields `1`.
pub fn estimate_lambda(s: &Matrix, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: n,
        });
    }
    let p = s.dim() as f64;
    let n = n as f64;
    let tr = s.trace();
    // S is symmetric, so Tr(S²) = ‖S‖²_F.
    let tr2 = s.frob_norm2();
    let spread = tr2 - tr * tr / p;
    if !(spread > 1e-12 * tr2) {
        return Ok(1.0);
    }
    let numer = (1.0 - 2.0 / p) * tr2 + tr * tr;
    let denom = (n + 1.0 - 2.0 / p) * spread;
    Ok((numer / denom).clamp(0.0, 1.0))
}

/// `(1−λ)·S + λ·t·I`.
pub fn shrinkage_matrix(s: &Matrix, target_scale: f64, lambda: f64) -> Result<Matrix> {
    check_lambda(lambda)?;
    Ok(s.scale(1.0 - lambda).add_identity(lambda * target_scale))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::LambdaOutOfRange(lambda))
    }
}

/// Current shrinkage coefficient and estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkState {
    n: usize,
    lambda: f64,
    sigma_hat: Matrix,
}

impl ShrinkState {
    /// Evaluates `Σ̂(λ)` directly from the stream.
    pub fn from_stream(stream: &StreamState, lambda: f64) -> Result<Self> {
        Ok(Self {
            n: stream.n(),
            lambda,
            sigma_hat: shrinkage_matrix(stream.cov(), stream.target_scale(), lambda)?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_hat(&self) -> &Matrix {
        &self.sigma_hat
    }

    /// Next state from a split built for this state: `Σ̂(λₙ₊₁) = G + F`.
    pub fn advance(&self, split: &GfSplit) -> Result<Self> {
        Ok(Self {
            n: self.n + 1,
            lambda: split.lambda_next,
            sigma_hat: split.recombine()?,
        })
    }
}

/// `Σ̂(λₙ₊₁) = G + F`, where `G` differs from a scaled `Σ̂(λₙ)` by a rank-one
/// term and `F` collects the target growth and the change in `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GfSplit {
    pub g: Matrix,
    pub f: Matrix,
    /// Scale `c` of the simplified correction `F̃ = c·I`, which drops the
    /// `(λₙ − λₙ₊₁)` term of `F`.
    pub f_simplified: f64,
    pub lambda_next: f64,
}

impl GfSplit {
    pub fn recombine(&self) -> Result<Matrix> {
        let mut sum = self.g.add(&self.f)?;
        sum.symmetrize();
        Ok(sum)
    }

    pub fn f_simplified_matrix(&self) -> Matrix {
        Matrix::scaled_identity(self.g.dim(), self.f_simplified)
    }
}

/// Splits the next estimator given the previous state, the stream before the
/// observation and its innovation `d`:
///
/// * `G = ((n−1)/n)·Σ̂(λₙ) + (1−λₙ₊₁)·d dᵀ/(n+1)`
/// * `F = λₙ₊₁‖d‖²/((n+1)p)·I + ((n−1)/n)(λₙ − λₙ₊₁)(Sₙ − Tₙ)`
pub fn gf_split(
    prev: &ShrinkState,
    stream_prev: &StreamState,
    d: &[f64],
    lambda_next: f64,
) -> Result<GfSplit> {
    let n_count = stream_prev.n();
    if n_count == 0 {
        return Err(Error::InsufficientSamples {
            required: 1,
            actual: 0,
        });
    }
    if prev.n != n_count {
        return Err(Error::InvalidParameter(format!(
            "shrink state is at n={} but stream is at n={n_count}",
            prev.n
        )));
    }
    check_lambda(lambda_next)?;
    check_dim(stream_prev.dim(), d.len())?;

    let n = n_count as f64;
    let p = stream_prev.dim() as f64;
    let decay = (n - 1.0) / n;

    let mut g = prev.sigma_hat.scale(decay);
    g.add_sym_outer_assign((1.0 - lambda_next) / (n + 1.0), d)?;

    let f_simplified = lambda_next * norm2(d) / ((n + 1.0) * p);
    let lambda_drift = decay * (prev.lambda - lambda_next);
    let f = stream_prev
        .cov()
        .add_identity(-stream_prev.target_scale())
        .scale(lambda_drift)
        .add_identity(f_simplified);

    Ok(GfSplit {
        g,
        f,
        f_simplified,
        lambda_next,
    })
}
