//! AR(1) Monte-Carlo benchmark for the sequential inverse updates.
//!
//! Each trial draws `n_max` zero-mean Gaussian vectors with covariance
//! `σᵢⱼ = r^|i−j|`, streams them through the estimator and records the
//! reconstruction error `(1/p)·‖A·Σ̂(λₙ) − I‖²_F` of every tracked inverse `A`
//! for `n = 2..=n_max`. The recursion is seeded with a direct inversion at
//! `n = 2`, the first count at which `Σ̂` can be invertible.
//!
//! Trials draw from `ChaCha20` seeded with the experiment seed and switched to
//! stream number `trial_index`, so results do not depend on scheduling.

mod boxplot;

pub use boxplot::{box_summary, quantile_sorted, BoxSummary};

use std::collections::BTreeMap;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invupd::{default_divergence_threshold, reconstruction_error, InverseState, StepInputs, Variant};
use crate::linalg::{cholesky, sample_gaussian, Matrix};
use crate::shrink::{estimate_lambda, gf_split, oracle_lambda_plugin, ShrinkState};
use crate::stream::StreamState;

/// Name of the generator recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha20Rng::seed_from_u64(seed), stream = trial index";

/// First observation count with a recorded error.
pub const FIRST_N: usize = 2;

/// How `λₙ` is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Plug-in oracle using the known true covariance.
    OraclePlugin,
    /// Streaming sample estimate from `Tr(S)`, `Tr(S²)`, `n`, `p`.
    SampleEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p: usize,
    pub r: f64,
    pub n_max: usize,
    pub reps: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub lambda_mode: LambdaMode,
    /// Reconstruction error above which a tracked inverse is abandoned;
    /// `None` disables the check (non-finite errors still count).
    pub divergence_threshold: Option<f64>,
}

impl ExperimentConfig {
    /// Reference AR(1) benchmark: `p = 50`, `r = 0.5`,
    /// `n` up to 30, 200 repetitions, both approximations.
    pub fn benchmark_defaults(seed: u64) -> Self {
        Self {
            p: 50,
            r: 0.5,
            n_max: 30,
            reps: 200,
            seed,
            variants: vec![Variant::Approx1, Variant::Approx2],
            lambda_mode: LambdaMode::SampleEstimate,
            divergence_threshold: Some(default_divergence_threshold(50)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(self.r.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("AR coefficient must satisfy |r| < 1, got {}", self.r)));
        }
        if self.n_max < FIRST_N {
            return Err(Error::InvalidParameter(format!("n_max must be at least 2, got {}", self.n_max)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidParameter("no variants selected".into()));
        }
        if let Some(t) = self.divergence_threshold {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("divergence threshold must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// `σᵢⱼ = r^|i−j|`.
pub fn ar1_cov(p: usize, r: f64) -> Result<Matrix> {
    if p == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if !(r.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("AR coefficient must satisfy |r| < 1, got {r}")));
    }
    Ok(Matrix::from_fn(p, |i, j| r.powi(i.abs_diff(j) as i32)))
}

/// Error trace of one variant within one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantTrace {
    pub variant: Variant,
    /// `errors[k]` belongs to `n = k + 2`; `None` once the variant was abandoned.
    pub errors: Vec<Option<f64>>,
    /// Count at which the variant diverged or failed.
    pub diverged_at: Option<usize>,
}

impl VariantTrace {
    pub fn error_at(&self, n: usize) -> Option<f64> {
        n.checked_sub(FIRST_N).and_then(|k| self.errors.get(k).copied().flatten())
    }

    pub fn diverged_by(&self, n: usize) -> bool {
        self.diverged_at.is_some_and(|at| at <= n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial_index: u64,
    pub traces: Vec<VariantTrace>,
}

impl TrialTrace {
    pub fn variant(&self, v: Variant) -> Option<&VariantTrace> {
        self.traces.iter().find(|t| t.variant == v)
    }

    /// Flattens the trace into one record per `(variant, n)`.
    pub fn records(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.traces.iter().flat_map(move |t| {
            t.errors.iter().enumerate().map(move |(k, e)| TraceRecord {
                variant: t.variant,
                trial: self.trial_index,
                n: k + FIRST_N,
                error: *e,
                diverged: t.diverged_by(k + FIRST_N),
            })
        })
    }
}

/// One raw `(variant, trial, n)` observation of the reconstruction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub variant: Variant,
    pub trial: u64,
    pub n: usize,
    pub error: Option<f64>,
    /// The variant diverged at or before this `n`.
    pub diverged: bool,
}

struct Tracked {
    state: Option<InverseState>,
    trace: VariantTrace,
}

impl Tracked {
    fn abandon(&mut self, n: usize, trial: u64, why: &str) {
        debug!("trial {trial}: {} abandoned at n={n}: {why}", self.trace.variant);
        self.state = None;
        self.trace.diverged_at.get_or_insert(n);
    }

    /// Records the error of a fresh state and keeps it unless it diverged.
    fn record(&mut self, state: InverseState, sigma: &Matrix, threshold: Option<f64>, trial: u64) {
        let n = state.n();
        match reconstruction_error(state.inv(), sigma) {
            Ok(e) if e.is_finite() => {
                self.trace.errors.push(Some(e));
                if threshold.is_some_and(|t| e > t) {
                    self.abandon(n, trial, &format!("reconstruction error {e:e} above threshold"));
                } else {
                    self.state = Some(state);
                }
            }
            Ok(_) | Err(_) => {
                self.trace.errors.push(None);
                self.abandon(n, trial, "non-finite reconstruction error");
            }
        }
    }

    fn skip(&mut self, n: usize, trial: u64, why: &str) {
        self.trace.errors.push(None);
        self.abandon(n, trial, why);
    }
}

/// Runs one trial; deterministic in `(config.seed, trial_index)`.
///
/// Numerical failures never abort the trial: the affected variant is marked
/// diverged and its remaining errors are `None`.
pub fn run_trial(config: &ExperimentConfig, trial_index: u64) -> Result<TrialTrace> {
    config.validate()?;
    let p = config.p;
    let sigma_true = ar1_cov(p, config.r)?;
    let chol = cholesky(&sigma_true)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(trial_index);
    let mut draw = move || -> Result<Vec<f64>> {
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        sample_gaussian(&chol, &z)
    };
    let lambda_of = |s: &StreamState| -> Result<f64> {
        match config.lambda_mode {
            LambdaMode::SampleEstimate => estimate_lambda(s.cov(), s.n()),
            LambdaMode::OraclePlugin => Ok(oracle_lambda_plugin(s.cov(), s.target_scale(), &sigma_true)?.value),
        }
    };

    let mut variants: Vec<Variant> = config.variants.clone();
    variants.sort();
    variants.dedup();
    let mut tracked: Vec<Tracked> = variants
        .iter()
        .map(|&variant| Tracked {
            state: None,
            trace: VariantTrace {
                variant,
                errors: Vec::with_capacity(config.n_max - 1),
                diverged_at: None,
            },
        })
        .collect();

    let mut stream = StreamState::new(p)?;
    for _ in 0..FIRST_N {
        stream = stream.observe(&draw()?)?.state;
    }
    let mut shrink = match lambda_of(&stream).and_then(|l| ShrinkState::from_stream(&stream, l)) {
        Ok(s) => Some(s),
        Err(e) => {
            for t in &mut tracked {
                t.skip(FIRST_N, trial_index, &e.to_string());
            }
            None
        }
    };
    if let Some(sh) = &shrink {
        for t in &mut tracked {
            match InverseState::seed(&stream, sh, t.trace.variant) {
                Ok(state) => t.record(state, sh.sigma_hat(), config.divergence_threshold, trial_index),
                Err(e) => t.skip(FIRST_N, trial_index, &e.to_string()),
            }
        }
    }

    for _ in FIRST_N..config.n_max {
        let x = draw()?;
        let obs = stream.observe(&x)?;
        let n_next = obs.state.n();
        let advanced = shrink.as_ref().map(|sh| -> Result<_> {
            let lambda_next = lambda_of(&obs.state)?;
            let split = gf_split(sh, &stream, &obs.innovation, lambda_next)?;
            let next = sh.advance(&split)?;
            Ok((split, next))
        });
        match advanced {
            Some(Ok((split, next_shrink))) => {
                let sh = shrink.as_ref().expect("advanced implies a shrink state");
                let inputs = StepInputs {
                    d: &obs.innovation,
                    n: stream.n(),
                    lambda_now: sh.lambda(),
                    split: &split,
                    sigma_next: next_shrink.sigma_hat(),
                };
                for t in &mut tracked {
                    match t.state.take() {
                        Some(state) => match state.step(&inputs) {
                            Ok(next) => t.record(next, next_shrink.sigma_hat(), config.divergence_threshold, trial_index),
                            Err(e) => t.skip(n_next, trial_index, &e.to_string()),
                        },
                        None => t.trace.errors.push(None),
                    }
                }
                shrink = Some(next_shrink);
            }
            Some(Err(e)) => {
                for t in &mut tracked {
                    if t.state.is_some() {
                        t.skip(n_next, trial_index, &e.to_string());
                    } else {
                        t.trace.errors.push(None);
                    }
                }
                shrink = None;
            }
            None => tracked.iter_mut().for_each(|t| t.trace.errors.push(None)),
        }
        stream = obs.state;
    }

    Ok(TrialTrace {
        trial_index,
        traces: tracked.into_iter().map(|t| t.trace).collect(),
    })
}

/// Runs all trials on the current rayon pool, in trial-index order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialTrace>> {
    config.validate()?;
    (0..config.reps as u64)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect()
}

/// Per-`n` aggregate of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub n: usize,
    /// Box statistics over the finite recorded errors; `None` if there are none.
    pub stats: Option<BoxSummary>,
    pub mean: Option<f64>,
    pub samples: usize,
    /// Trials that diverged at or before `n`.
    pub diverged_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub steps: Vec<StepSummary>,
}

impl VariantSummary {
    pub fn at(&self, n: usize) -> Option<&StepSummary> {
        self.steps.iter().find(|s| s.n == n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub variants: Vec<VariantSummary>,
}

impl ExperimentSummary {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }
}

/// Groups raw records by `(variant, n)` and summarizes each group. Within a
/// group, values keep their input order, so the means are reproducible.
pub fn summarize_records<I>(records: I) -> Result<ExperimentSummary>
where
    I: IntoIterator<Item = TraceRecord>,
{
    let mut groups: BTreeMap<Variant, BTreeMap<usize, (Vec<f64>, usize)>> = BTreeMap::new();
    for rec in records {
        let (values, diverged) = groups.entry(rec.variant).or_default().entry(rec.n).or_default();
        if let Some(e) = rec.error.filter(|e| e.is_finite()) {
            values.push(e);
        }
        if rec.diverged {
            *diverged += 1;
        }
    }
    let mut variants = Vec::with_capacity(groups.len());
    for (variant, by_n) in groups {
        let mut steps = Vec::with_capacity(by_n.len());
        for (n, (values, diverged_count)) in by_n {
            let (stats, mean) = if values.is_empty() {
                (None, None)
            } else {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                (Some(box_summary(&values)?), Some(mean))
            };
            steps.push(StepSummary {
                n,
                stats,
                mean,
                samples: values.len(),
                diverged_count,
            });
        }
        variants.push(VariantSummary { variant, steps });
    }
    Ok(ExperimentSummary { variants })
}

pub fn summarize_traces(traces: &[TrialTrace]) -> Result<ExperimentSummary> {
    summarize_records(traces.iter().flat_map(TrialTrace::records))
}

/// Runs the full experiment and summarizes it per variant and `n`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    summarize_traces(&run_trials(config)?)
}

/// Trials of `variant` that diverged or produced a box-plot outlier at any `n`.
pub fn anomalous_trials(traces: &[TrialTrace], summary: &ExperimentSummary, variant: Variant) -> usize {
    let Some(vs) = summary.variant(variant) else {
        return 0;
    };
    traces
        .iter()
        .filter_map(|t| t.variant(variant))
        .filter(|vt| {
            vt.diverged_at.is_some()
                || vs.steps.iter().any(|step| {
                    let value = vt.error_at(step.n);
                    matches!((value, &step.stats), (Some(e), Some(stats)) if stats.is_outlier(e))
                })
        })
        .count()
}
