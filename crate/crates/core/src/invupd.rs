//! Sequential inverse updates for the shrinkage estimator.
//!
//! Every step first carries the inverse through the rank-one part `G` of the
//! split `Σ̂(λₙ₊₁) = G + F` with a Sherman–Morrison update. The correction `F`
//! is then absorbed in one of three ways:
//!
//! * [`Variant::ExactChain`]: `p` further rank-one updates, one per column of
//!   `F`. Exact up to rounding.
//! * [`Variant::Approx1`]: `G⁻¹ − α·G⁻¹ F G⁻¹` with `α` fitted to minimize the
//!   reconstruction error `‖(·)Σ̂ − I‖²_F`.
//! * [`Variant::Approx2`]: as `Approx1` but with `F` replaced by its scaled
//!   identity part `F̃ = c·I`, which drops the `λ`-drift term.
//!
//! The approximations feed their own previous output back in, so their error
//! can accumulate from step to step.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, dot, inv_spd, norm2, Matrix};
use crate::shrink::{Estimate, GfSplit, ShrinkState};
use crate::stream::StreamState;

/// Which inverse is being carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Approx1,
    Approx2,
    ExactChain,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Approx1, Variant::Approx2, Variant::ExactChain];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Approx1 => "approx1",
            Variant::Approx2 => "approx2",
            Variant::ExactChain => "exact_chain",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "approx1" => Ok(Variant::Approx1),
            "approx2" => Ok(Variant::Approx2),
            "exact_chain" | "exact" => Ok(Variant::ExactChain),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{other}' (expected approx1, approx2 or exact_chain)"
            ))),
        }
    }
}

/// `(n/(n−1))·(A − u uᵀ/(coupling + dᵀu))` with `u = A d`.
fn scaled_rank_one_inverse(inv: &Matrix, d: &[f64], n: f64, coupling: f64) -> Result<Matrix> {
    let u = inv.matvec(d)?;
    let denom = coupling + dot(d, &u);
    if !denom.is_finite() || denom == 0.0 {
        return Err(Error::NonFiniteDenominator);
    }
    let mut out = inv.clone();
    out.add_sym_outer_assign(-1.0 / denom, &u)?;
    Ok(out.scale(n / (n - 1.0)))
}

fn check_count(n: usize) -> Result<f64> {
    if n < 2 {
        Err(Error::InsufficientSamples {
            required: 2,
            actual: n,
        })
    } else {
        Ok(n as f64)
    }
}

/// Inverse of the next sample covariance from the inverse of the current one:
///
/// `Sₙ₊₁⁻¹ = (n/(n−1))·(Sₙ⁻¹ − Sₙ⁻¹ d dᵀ Sₙ⁻¹ / ((n²−1)/n + dᵀ Sₙ⁻¹ d))`.
///
/// Only meaningful when `Sₙ` is invertible, i.e. `n > p`; that is left to the caller.
pub fn smw_sample_inverse_update(s_inv: &Matrix, d: &[f64], n: usize) -> Result<Matrix> {
    let n = check_count(n)?;
    scaled_rank_one_inverse(s_inv, d, n, (n * n - 1.0) / n)
}

/// `G⁻¹` from an inverse of `Σ̂(λₙ)`:
///
/// `(n/(n−1))·(Σ̂⁻¹ − Σ̂⁻¹ d dᵀ Σ̂⁻¹ / ((n²−1)/(n(1−λₙ₊₁)) + dᵀ Σ̂⁻¹ d))`.
///
/// With `λₙ₊₁ = 0` the arithmetic is identical to [`smw_sample_inverse_update`].
pub fn g_inverse_update(sigma_inv: &Matrix, d: &[f64], n: usize, lambda_next: f64) -> Result<Matrix> {
    let n = check_count(n)?;
    if lambda_next >= 1.0 {
        return Err(Error::DegenerateLambda);
    }
    if !(lambda_next >= 0.0) {
        return Err(Error::LambdaOutOfRange(lambda_next));
    }
    scaled_rank_one_inverse(sigma_inv, d, n, (n * n - 1.0) / (n * (1.0 - lambda_next)))
}

/// Inverse of `G + F` from `G⁻¹` by `p` rank-one updates
/// `(G + fᵢ eᵢᵀ)⁻¹ = G⁻¹ − G⁻¹ fᵢ eᵢᵀ G⁻¹ / (1 + eᵢᵀ G⁻¹ fᵢ)`, columns taken in
/// ascending order. Intermediates are not symmetric; the result is symmetrized.
pub fn exact_inverse_chain(g_inv: &Matrix, f: &Matrix) -> Result<Matrix> {
    let p = g_inv.dim();
    check_dim(p, f.dim())?;
    let mut m = g_inv.clone();
    for i in 0..p {
        let fi = f.column(i);
        if fi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let u = m.matvec(&fi)?;
        let pivot = 1.0 + u[i];
        if !(pivot.abs() >= 1e-12) {
            return Err(Error::PivotBlowup { column: i, pivot });
        }
        let row_i = m.row(i).to_vec();
        m.add_outer_assign(-1.0 / pivot, &u, &row_i)?;
    }
    m.symmetrize();
    Ok(m)
}

/// `α` minimizing `‖(G⁻¹ − α·K)Σ̂ − I‖²_F` for a given correction `K`:
/// `α = ⟨KΣ̂, G⁻¹Σ̂ − I⟩ / ‖KΣ̂‖²_F`.
fn fit_alpha(g_inv: &Matrix, correction: &Matrix, sigma_next: &Matrix) -> Result<Estimate> {
    let k_sigma = correction.matmul(sigma_next)?;
    let denom = k_sigma.frob_norm2();
    if !(denom >= 1e-300) {
        return Ok(Estimate::degenerate(0.0));
    }
    let residual = g_inv.matmul(sigma_next)?.add_identity(-1.0);
    Ok(Estimate::regular(k_sigma.inner(&residual)? / denom))
}

fn sandwich(g_inv: &Matrix, middle: &Matrix) -> Result<Matrix> {
    let mut k = g_inv.matmul(middle)?.matmul(g_inv)?;
    k.symmetrize();
    Ok(k)
}

/// Reconstruction-optimal weight for the correction `G⁻¹ F G⁻¹`:
///
/// `α = ⟨G⁻¹FG⁻¹Σ̂, G⁻¹Σ̂ − I⟩ / ‖G⁻¹FG⁻¹Σ̂‖²_F`.
///
/// A vanishing denominator (`F ≈ 0`) yields `α = 0` flagged degenerate.
pub fn alpha_opt(g_inv: &Matrix, f: &Matrix, sigma_next: &Matrix) -> Result<Estimate> {
    fit_alpha(g_inv, &sandwich(g_inv, f)?, sigma_next)
}

/// Weight for the simplified correction `F̃ = λₙ₊₁‖d‖²/((n+1)p)·I`:
///
/// `α′ = (n+1)p·⟨G⁻²Σ̂, G⁻¹Σ̂ − I⟩ / (λₙ₊₁‖d‖²·‖G⁻²Σ̂‖²_F)`.
pub fn alpha_simplified(
    g_inv: &Matrix,
    n: usize,
    lambda_next: f64,
    d_norm2: f64,
    sigma_next: &Matrix,
) -> Result<Estimate> {
    let scale = lambda_next * d_norm2;
    if !(scale > 0.0) {
        return Ok(Estimate::degenerate(0.0));
    }
    let g_inv2 = sandwich(g_inv, &Matrix::identity(g_inv.dim()))?;
    let fit = fit_alpha(g_inv, &g_inv2, sigma_next)?;
    if fit.degenerate {
        return Ok(fit);
    }
    let np = (n as f64 + 1.0) * g_inv.dim() as f64;
    Ok(Estimate::regular(np * fit.value / scale))
}

/// `(1/p)·‖A Σ̂ − I‖²_F`.
pub fn reconstruction_error(inv: &Matrix, sigma_hat: &Matrix) -> Result<f64> {
    let p = inv.dim() as f64;
    Ok(inv.matmul(sigma_hat)?.add_identity(-1.0).frob_norm2() / p)
}

/// Divergence threshold used when none is configured: `10·p`.
pub fn default_divergence_threshold(p: usize) -> f64 {
    10.0 * p as f64
}

/// G-inverse update for the step functions. At `λₙ₊₁ = 1` the rank-one term of
/// `G` vanishes and `G = ((n−1)/n)·Σ̂(λₙ)`, so the update is its limit
/// `(n/(n−1))·Σ̂⁻¹`.
fn step_g_inverse(inv: &Matrix, inputs: &StepInputs<'_>) -> Result<Matrix> {
    match g_inverse_update(inv, inputs.d, inputs.n, inputs.lambda_next()) {
        Err(Error::DegenerateLambda) => {
            let n = inputs.n as f64;
            Ok(inv.scale(n / (n - 1.0)))
        }
        other => other,
    }
}

/// Per-step quantities shared by all variants tracking one stream.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    /// Innovation `d = xₙ₊₁ − mₙ`.
    pub d: &'a [f64],
    /// Observation count before the step.
    pub n: usize,
    pub lambda_now: f64,
    pub split: &'a GfSplit,
    /// `Σ̂(λₙ₊₁)`.
    pub sigma_next: &'a Matrix,
}

impl StepInputs<'_> {
    pub fn lambda_next(&self) -> f64 {
        self.split.lambda_next
    }
}

/// One sequentially maintained inverse of the shrinkage estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseState {
    variant: Variant,
    inv: Matrix,
    n: usize,
    last_alpha: Option<f64>,
}

impl InverseState {
    /// Seeds the recursion with one direct inversion of `Σ̂(λₙ)`.
    pub fn seed(stream: &StreamState, shrink: &ShrinkState, variant: Variant) -> Result<Self> {
        if stream.n() < 2 {
            return Err(Error::InsufficientSamples {
                required: 2,
                actual: stream.n(),
            });
        }
        Ok(Self {
            variant,
            inv: inv_spd(shrink.sigma_hat())?,
            n: stream.n(),
            last_alpha: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn inv(&self) -> &Matrix {
        &self.inv
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn last_alpha(&self) -> Option<f64> {
        self.last_alpha
    }

    pub fn step(&self, inputs: &StepInputs<'_>) -> Result<Self> {
        match self.variant {
            Variant::ExactChain => exact_chain_step(self, inputs),
            Variant::Approx1 => approx1_step(self, inputs),
            Variant::Approx2 => approx2_step(self, inputs),
        }
    }

    fn expect(&self, variant: Variant, inputs: &StepInputs<'_>) -> Result<()> {
        if self.variant != variant {
            return Err(Error::WrongVariant {
                expected: variant.name(),
                actual: self.variant.name(),
            });
        }
        if self.n != inputs.n {
            return Err(Error::InvalidParameter(format!(
                "inverse state is at n={} but step inputs are at n={}",
                self.n, inputs.n
            )));
        }
        Ok(())
    }
}

/// `Σ̂⁻¹(λₙ₊₁)` from `Σ̂⁻¹(λₙ)`: G-inverse update followed by the column chain.
pub fn exact_chain_step(state: &InverseState, inputs: &StepInputs<'_>) -> Result<InverseState> {
    state.expect(Variant::ExactChain, inputs)?;
    let g_inv = step_g_inverse(&state.inv, inputs)?;
    Ok(InverseState {
        variant: Variant::ExactChain,
        inv: exact_inverse_chain(&g_inv, &inputs.split.f)?,
        n: inputs.n + 1,
        last_alpha: None,
    })
}

/// `G̃⁻¹ − α·G̃⁻¹ F G̃⁻¹`, where `G̃⁻¹` comes from the previous approximation.
pub fn approx1_step(state: &InverseState, inputs: &StepInputs<'_>) -> Result<InverseState> {
    state.expect(Variant::Approx1, inputs)?;
    let g_inv = step_g_inverse(&state.inv, inputs)?;
    let correction = sandwich(&g_inv, &inputs.split.f)?;
    let alpha = fit_alpha(&g_inv, &correction, inputs.sigma_next)?;
    let mut inv = g_inv.sub(&correction.scale(alpha.value))?;
    inv.symmetrize();
    Ok(InverseState {
        variant: Variant::Approx1,
        inv,
        n: inputs.n + 1,
        last_alpha: Some(alpha.value),
    })
}

/// `G̃′⁻¹ − α′·c·G̃′⁻²` with `F̃ = c·I`.
pub fn approx2_step(state: &InverseState, inputs: &StepInputs<'_>) -> Result<InverseState> {
    state.expect(Variant::Approx2, inputs)?;
    let lambda_next = inputs.lambda_next();
    let g_inv = step_g_inverse(&state.inv, inputs)?;
    let alpha = alpha_simplified(&g_inv, inputs.n, lambda_next, norm2(inputs.d), inputs.sigma_next)?;
    let c = inputs.split.f_simplified;
    let inv = if alpha.value == 0.0 || c == 0.0 {
        g_inv
    } else {
        let g_inv2 = sandwich(&g_inv, &Matrix::identity(g_inv.dim()))?;
        let mut inv = g_inv.sub(&g_inv2.scale(alpha.value * c))?;
        inv.symmetrize();
        inv
    };
    Ok(InverseState {
        variant: Variant::Approx2,
        inv,
        n: inputs.n + 1,
        last_alpha: Some(alpha.value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalized_residual;
    use crate::linalg::testing::{random_spd, random_symmetric};
    use crate::shrink::{estimate_lambda, gf_split, shrinkage_matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut impl Rng, p: usize) -> Vec<f64> {
        (0..p).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn stream_of(rng: &mut impl Rng, n: usize, p: usize) -> StreamState {
        (0..n).fold(StreamState::new(p).unwrap(), |s, _| {
            s.observe(&gaussian(rng, p)).unwrap().state
        })
    }

    /// Golden-section minimizer on `[lo, hi]`; test-only oracle.
    fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut a = hi - ratio * (hi - lo);
        let mut b = lo + ratio * (hi - lo);
        let (mut fa, mut fb) = (f(a), f(b));
        while hi - lo > 1e-12 * (1.0 + lo.abs()) {
            if fa < fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - ratio * (hi - lo);
                fa = f(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + ratio * (hi - lo);
                fb = f(b);
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn smw_zero_innovation_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s_inv = random_spd(&mut rng, 4, 0.5);
        let out = smw_sample_inverse_update(&s_inv, &[0.0; 4], 6).unwrap();
        assert!(out.rel_frob_diff(&s_inv.scale(6.0 / 5.0)).unwrap() < 1e-15);
    }

    #[test]
    fn smw_scalar_case() {
        // p = 1, S₃ = 2, d = 1: S₄ = (2/3)·2 + 1/4 = 19/12.
        let out = smw_sample_inverse_update(&Matrix::diagonal(&[0.5]), &[1.0], 3).unwrap();
        assert!((out.get(0, 0) - 12.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn smw_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = 10;
        let stream = stream_of(&mut rng, 60, p);
        let obs = stream.observe(&gaussian(&mut rng, p)).unwrap();
        let s_inv = inv_spd(stream.cov()).unwrap();
        let next = smw_sample_inverse_update(&s_inv, &obs.innovation, 60).unwrap();
        let direct = inv_spd(obs.state.cov()).unwrap();
        assert!(next.rel_frob_diff(&direct).unwrap() < 1e-8);
    }

    #[test]
    fn g_inverse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = random_spd(&mut rng, 2, 0.5);
        let sigma_inv = inv_spd(&sigma).unwrap();

        let zero = g_inverse_update(&sigma_inv, &[0.0, 0.0], 5, 0.3).unwrap();
        assert!(zero.rel_frob_diff(&sigma_inv.scale(5.0 / 4.0)).unwrap() < 1e-15);

        // Residual against G built directly.
        let d = [0.7, -1.3];
        let (n, lam) = (5.0, 0.3);
        let mut g = sigma.scale((n - 1.0) / n);
        g.add_sym_outer_assign((1.0 - lam) / (n + 1.0), &d).unwrap();
        let g_inv = g_inverse_update(&sigma_inv, &d, 5, lam).unwrap();
        assert!(g_inv.matmul(&g).unwrap().max_abs_diff(&Matrix::identity(2)).unwrap() < 1e-12);

        assert_eq!(
            g_inverse_update(&sigma_inv, &d, 5, 0.0).unwrap(),
            smw_sample_inverse_update(&sigma_inv, &d, 5).unwrap()
        );
        assert_eq!(g_inverse_update(&sigma_inv, &d, 5, 1.0), Err(Error::DegenerateLambda));
        assert!(matches!(
            g_inverse_update(&sigma_inv, &d, 1, 0.5),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn chain_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g_inv = random_spd(&mut rng, 5, 0.2);
        assert_eq!(exact_inverse_chain(&g_inv, &Matrix::zeros(5)).unwrap(), g_inv);

        let out = exact_inverse_chain(&Matrix::identity(2), &Matrix::scaled_identity(2, 0.25)).unwrap();
        assert!(out.max_abs_diff(&Matrix::scaled_identity(2, 0.8)).unwrap() < 1e-15);

        let p = 8;
        let g = random_spd(&mut rng, p, 0.5);
        let f = random_symmetric(&mut rng, p).scale(0.05);
        let out = exact_inverse_chain(&inv_spd(&g).unwrap(), &f).unwrap();
        let direct = g.add(&f).unwrap();
        assert!(normalized_residual(&out, &direct).unwrap() < 1e-8);
    }

    #[test]
    fn chain_reports_singular_intermediate() {
        // G = I, F = −I: the first column update annihilates the pivot.
        let err = exact_inverse_chain(&Matrix::identity(2), &Matrix::scaled_identity(2, -1.0));
        assert!(matches!(err, Err(Error::PivotBlowup { column: 0, .. })));
    }

    #[test]
    fn alpha_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g_inv = random_spd(&mut rng, 3, 0.5);
        let sigma = random_spd(&mut rng, 3, 0.5);
        let a = alpha_opt(&g_inv, &Matrix::zeros(3), &sigma).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.value, 0.0);

        // p = 1: the fitted correction reaches the exact inverse.
        let (gi, f, s) = (Matrix::diagonal(&[0.4]), Matrix::diagonal(&[0.3]), Matrix::diagonal(&[2.2]));
        let alpha = alpha_opt(&gi, &f, &s).unwrap().value;
        let approx = gi.sub(&gi.matmul(&f).unwrap().matmul(&gi).unwrap().scale(alpha)).unwrap();
        assert!(reconstruction_error(&approx, &s).unwrap() < 1e-14);
    }

    #[test]
    fn alpha_matches_golden_section() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let p = 6;
            let sigma = random_spd(&mut rng, p, 0.5);
            let f = random_symmetric(&mut rng, p).scale(0.1);
            let g_inv = inv_spd(&sigma.sub(&f).unwrap().add_identity(0.05)).unwrap();
            let k = g_inv.matmul(&f).unwrap().matmul(&g_inv).unwrap();
            let objective = |a: f64| {
                g_inv.sub(&k.scale(a)).unwrap().matmul(&sigma).unwrap().add_identity(-1.0).frob_norm2()
            };
            let alpha = alpha_opt(&g_inv, &f, &sigma).unwrap().value;
            let oracle = golden_section(objective, alpha - 50.0, alpha + 50.0);
            assert!((alpha - oracle).abs() < 1e-6, "{alpha} vs {oracle}");
        }
    }

    #[test]
    fn simplified_alpha_is_alpha_for_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = 5;
        let g_inv = random_spd(&mut rng, p, 0.3);
        let sigma = random_spd(&mut rng, p, 0.3);
        let (n, lam, dn2) = (9usize, 0.6, 3.7);
        let c = lam * dn2 / ((n as f64 + 1.0) * p as f64);
        let a1 = alpha_opt(&g_inv, &Matrix::scaled_identity(p, c), &sigma).unwrap().value;
        let a2 = alpha_simplified(&g_inv, n, lam, dn2, &sigma).unwrap().value;
        assert!((a1 - a2).abs() < 1e-10 * a1.abs().max(1.0));
        assert!(alpha_simplified(&g_inv, n, 0.0, dn2, &sigma).unwrap().degenerate);
    }

    #[test]
    fn reconstruction_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigma = random_spd(&mut rng, 4, 0.3);
        let inv = inv_spd(&sigma).unwrap();
        assert!(reconstruction_error(&inv, &sigma).unwrap() < 1e-12);
        assert_eq!(reconstruction_error(&Matrix::zeros(4), &sigma).unwrap(), 1.0);

        let a = random_symmetric(&mut rng, 4);
        let mut brute = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| a.get(i, k) * sigma.get(k, j)).sum::<f64>()
                    - if i == j { 1.0 } else { 0.0 };
                brute += v * v;
            }
        }
        assert!((reconstruction_error(&a, &sigma).unwrap() - brute / 4.0).abs() < 1e-12);
    }

    struct Tracker {
        stream: StreamState,
        shrink: ShrinkState,
    }

    impl Tracker {
        fn new(rng: &mut impl Rng, p: usize, lambda: impl Fn(&StreamState) -> f64) -> Self {
            let stream = stream_of(rng, 2, p);
            let shrink = ShrinkState::from_stream(&stream, lambda(&stream)).unwrap();
            Self { stream, shrink }
        }

        fn advance(
            &mut self,
            x: &[f64],
            lambda: impl Fn(&StreamState) -> f64,
            states: &mut [InverseState],
        ) {
            let obs = self.stream.observe(x).unwrap();
            let lam_next = lambda(&obs.state);
            let split = gf_split(&self.shrink, &self.stream, &obs.innovation, lam_next).unwrap();
            let next_shrink = self.shrink.advance(&split).unwrap();
            let inputs = StepInputs {
                d: &obs.innovation,
                n: self.stream.n(),
                lambda_now: self.shrink.lambda(),
                split: &split,
                sigma_next: next_shrink.sigma_hat(),
            };
            for s in states.iter_mut() {
                *s = s.step(&inputs).unwrap();
            }
            self.stream = obs.state;
            self.shrink = next_shrink;
        }
    }

    fn oas(s: &StreamState) -> f64 {
        estimate_lambda(s.cov(), s.n()).unwrap()
    }

    #[test]
    fn seed_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let stream = stream_of(&mut rng, 2, 3);
        let shrink = ShrinkState::from_stream(&stream, 0.5).unwrap();
        let state = InverseState::seed(&stream, &shrink, Variant::Approx1).unwrap();
        assert!(state.inv().matmul(shrink.sigma_hat()).unwrap().max_abs_diff(&Matrix::identity(3)).unwrap() < 1e-10);

        let singular = ShrinkState::from_stream(&stream, 0.0).unwrap();
        assert!(matches!(
            InverseState::seed(&stream, &singular, Variant::Approx1),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn exact_chain_tracks_direct_inverse_and_replays() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = 6;
        let mut t = Tracker::new(&mut rng, p, oas);
        let mut states = [InverseState::seed(&t.stream, &t.shrink, Variant::ExactChain).unwrap()];
        let mut late: Option<(Tracker, [InverseState; 1])> = None;
        for k in 0..25 {
            let x = gaussian(&mut rng, p);
            t.advance(&x, oas, &mut states);
            let direct = shrinkage_matrix(t.stream.cov(), t.stream.target_scale(), t.shrink.lambda()).unwrap();
            assert!(normalized_residual(states[0].inv(), &direct).unwrap() < 1e-8);
            assert!(states[0].inv().asymmetry() <= 1e-10);

            if let Some((lt, ls)) = late.as_mut() {
                lt.advance(&x, oas, ls);
                let diff = ls[0].inv().rel_frob_diff(states[0].inv()).unwrap();
                assert!(diff < 1e-9, "late-seeded chain differs by {diff}");
            } else if k == 9 {
                let seeded = [InverseState::seed(&t.stream, &t.shrink, Variant::ExactChain).unwrap()];
                let tracker = Tracker {
                    stream: t.stream.clone(),
                    shrink: t.shrink.clone(),
                };
                late = Some((tracker, seeded));
            }
        }
    }

    #[test]
    fn approx1_is_exact_in_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = Tracker::new(&mut rng, 1, oas);
        let mut states = [InverseState::seed(&t.stream, &t.shrink, Variant::Approx1).unwrap()];
        for _ in 0..20 {
            let x = gaussian(&mut rng, 1);
            t.advance(&x, |s| 0.3 + 0.01 * s.n() as f64, &mut states);
            assert!(reconstruction_error(states[0].inv(), t.shrink.sigma_hat()).unwrap() < 1e-14);
        }
    }

    #[test]
    fn approx1_exact_when_f_vanishes() {
        // λ ≡ 0 makes F = 0, so the step is the G-inverse update alone.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = 3;
        let mut t = Tracker::new(&mut rng, p, |_| 0.0);
        for _ in 0..4 {
            t.stream = t.stream.observe(&gaussian(&mut rng, p)).unwrap().state;
        }
        t.shrink = ShrinkState::from_stream(&t.stream, 0.0).unwrap();
        let mut states = [InverseState::seed(&t.stream, &t.shrink, Variant::Approx1).unwrap()];
        t.advance(&gaussian(&mut rng, p), |_| 0.0, &mut states);
        assert!(normalized_residual(states[0].inv(), t.shrink.sigma_hat()).unwrap() < 1e-10);
        assert_eq!(states[0].last_alpha(), Some(0.0));
    }

    #[test]
    fn approx_variants_agree_for_constant_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = 5;
        let mut t = Tracker::new(&mut rng, p, |_| 0.45);
        let mut states = [
            InverseState::seed(&t.stream, &t.shrink, Variant::Approx1).unwrap(),
            InverseState::seed(&t.stream, &t.shrink, Variant::Approx2).unwrap(),
        ];
        for _ in 0..10 {
            t.advance(&gaussian(&mut rng, p), |_| 0.45, &mut states);
            let diff = states[0].inv().rel_frob_diff(states[1].inv()).unwrap();
            assert!(diff < 1e-10, "approx1/approx2 differ by {diff}");
        }
    }

    #[test]
    fn approx2_without_shrinkage_is_g_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = 2;
        let mut t = Tracker::new(&mut rng, p, |_| 0.5);
        let mut states = [InverseState::seed(&t.stream, &t.shrink, Variant::Approx2).unwrap()];
        let before = states[0].inv().clone();
        let x = gaussian(&mut rng, p);
        let obs = t.stream.observe(&x).unwrap();
        t.advance(&x, |_| 0.0, &mut states);
        let g_inv = g_inverse_update(&before, &obs.innovation, 2, 0.0).unwrap();
        assert_eq!(states[0].inv(), &g_inv);
    }

    #[test]
    fn step_rejects_mismatched_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let t = Tracker::new(&mut rng, 2, oas);
        let state = InverseState::seed(&t.stream, &t.shrink, Variant::Approx2).unwrap();
        let split = GfSplit {
            g: Matrix::identity(2),
            f: Matrix::zeros(2),
            f_simplified: 0.0,
            lambda_next: 0.5,
        };
        let inputs = StepInputs {
            d: &[0.0, 0.0],
            n: 2,
            lambda_now: 0.5,
            split: &split,
            sigma_next: &split.g,
        };
        assert!(matches!(approx1_step(&state, &inputs), Err(Error::WrongVariant { .. })));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("approx3".parse::<Variant>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn updates_stay_symmetric(seed in any::<u64>(), p in 1usize..=10, steps in 1usize..=15) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut t = Tracker::new(&mut rng, p, oas);
                let mut states = Variant::ALL.map(|v| InverseState::seed(&t.stream, &t.shrink, v).unwrap());
                for _ in 0..steps {
                    let x = gaussian(&mut rng, p);
                    t.advance(&x, oas, &mut states);
                    for s in &states {
                        prop_assert!(s.inv().asymmetry() <= 1e-10);
                    }
                }
            }

            #[test]
            fn g_update_specializes_to_sample_update(seed in any::<u64>(), p in 1usize..=8, extra in 1usize..=20) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = p + extra;
                let stream = stream_of(&mut rng, n, p);
                let obs = stream.observe(&gaussian(&mut rng, p)).unwrap();
                let s_inv = inv_spd(stream.cov()).unwrap();
                prop_assert_eq!(
                    g_inverse_update(&s_inv, &obs.innovation, n, 0.0).unwrap(),
                    smw_sample_inverse_update(&s_inv, &obs.innovation, n).unwrap()
                );
            }
        }
    }
}
