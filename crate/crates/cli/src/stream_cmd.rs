//! Online estimation over a CSV stream of observations.

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use shrinkcov::invupd::{default_divergence_threshold, reconstruction_error};
use shrinkcov::shrink::{estimate_lambda, gf_split};
use shrinkcov::{InverseState, Matrix, ShrinkState, StepInputs, StreamState, Variant};

use crate::output::fmt_f64;

/// Reconstruction-error limit beyond which a tracked inverse is abandoned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// `10p`.
    Default,
    Value(f64),
    Disabled,
}

impl Threshold {
    pub fn resolve(self, p: usize) -> Option<f64> {
        match self {
            Threshold::Default => Some(default_divergence_threshold(p)),
            Threshold::Value(v) => Some(v),
            Threshold::Disabled => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub variant: Variant,
    /// Re-seed by direct inversion once the reconstruction error exceeds this.
    pub divergence_threshold: Threshold,
    pub diagnostics: bool,
}

#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub p: usize,
    pub n: usize,
    pub lambda: Option<f64>,
    pub sigma_hat: Option<Matrix>,
    pub inverse: Option<Matrix>,
    pub error: Option<f64>,
    pub reseeds: usize,
}

fn parse_rows<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

struct Tracker {
    opts: StreamOptions,
    stream: StreamState,
    shrink: Option<ShrinkState>,
    inverse: Option<InverseState>,
    error: Option<f64>,
    reseeds: usize,
    warned_degenerate: bool,
}

impl Tracker {
    fn warn(msg: impl std::fmt::Display) {
        eprintln!("warning: {msg}");
    }

    fn seed(&mut self, stream: &StreamState, shrink: &ShrinkState) {
        match InverseState::seed(stream, shrink, self.opts.variant) {
            Ok(state) => {
                if self.warned_degenerate {
                    log::info!("seeded inverse at n={}", stream.n());
                }
                self.warned_degenerate = false;
                self.inverse = Some(state);
            }
            Err(e) => {
                if !self.warned_degenerate {
                    let detail = if stream.cov().trace() == 0.0 {
                        "sample covariance has zero trace".to_string()
                    } else {
                        e.to_string()
                    };
                    Self::warn(format_args!("degenerate data at n={}: {detail}; inverse not available yet", stream.n()));
                    self.warned_degenerate = true;
                }
                self.inverse = None;
            }
        }
    }

    fn observe(&mut self, x: &[f64]) -> Result<()> {
        let obs = self.stream.observe(x)?;
        let n_next = obs.state.n();
        if n_next < 2 {
            self.stream = obs.state;
            return Ok(());
        }
        let lambda_next = estimate_lambda(obs.state.cov(), n_next)?;

        let stepped = match (&self.shrink, &self.inverse) {
            (Some(sh), Some(inv)) => {
                let split = gf_split(sh, &self.stream, &obs.innovation, lambda_next)?;
                let next_shrink = sh.advance(&split)?;
                let inputs = StepInputs {
                    d: &obs.innovation,
                    n: self.stream.n(),
                    lambda_now: sh.lambda(),
                    split: &split,
                    sigma_next: next_shrink.sigma_hat(),
                };
                let result = inv.step(&inputs);
                Some((next_shrink, result))
            }
            _ => None,
        };

        let next_shrink = match stepped {
            Some((next_shrink, Ok(state))) => {
                self.inverse = Some(state);
                next_shrink
            }
            Some((next_shrink, Err(e))) => {
                Self::warn(format_args!("update failed at n={n_next} ({e}); re-seeding by direct inversion"));
                self.reseeds += 1;
                self.seed(&obs.state, &next_shrink);
                next_shrink
            }
            None => {
                let next_shrink = ShrinkState::from_stream(&obs.state, lambda_next)?;
                self.seed(&obs.state, &next_shrink);
                next_shrink
            }
        };

        self.error = match &self.inverse {
            Some(inv) => Some(reconstruction_error(inv.inv(), next_shrink.sigma_hat())?),
            None => None,
        };
        if let Some(err) = self.error {
            let limit = self.opts.divergence_threshold.resolve(self.stream.dim()).unwrap_or(f64::INFINITY);
            if !err.is_finite() || err > limit {
                Self::warn(format_args!(
                    "reconstruction error {} at n={n_next} exceeds {}; re-seeding by direct inversion",
                    fmt_f64(err),
                    fmt_f64(limit)
                ));
                self.reseeds += 1;
                self.seed(&obs.state, &next_shrink);
                self.error = match &self.inverse {
                    Some(inv) => Some(reconstruction_error(inv.inv(), next_shrink.sigma_hat())?),
                    None => None,
                };
            }
        }

        self.shrink = Some(next_shrink);
        self.stream = obs.state;
        Ok(())
    }
}

/// Reads observations (one CSV row of `p` numbers each; `#` starts a
/// comment) and tracks the shrinkage estimate and its inverse online.
pub fn run_stream<R: Read>(input: R, opts: &StreamOptions, mut diagnostics: impl Write) -> Result<StreamOutcome> {
    let mut reader = parse_rows(input);
    let mut tracker: Option<Tracker> = None;
    if opts.diagnostics {
        writeln!(diagnostics, "n,lambda,trace,error")?;
    }

    for (index, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("row {}: unreadable CSV", index + 1))?;
        let row = rec.position().map_or(index as u64 + 1, |p| p.line());
        let x = rec
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field
                    .parse::<f64>()
                    .with_context(|| format!("row {row}, column {}: invalid number '{field}'", col + 1))
            })
            .collect::<Result<Vec<f64>>>()?;

        if tracker.is_none() {
            if x.is_empty() {
                bail!("row {row}: empty observation");
            }
            tracker = Some(Tracker {
                opts: opts.clone(),
                stream: StreamState::new(x.len())?,
                shrink: None,
                inverse: None,
                error: None,
                reseeds: 0,
                warned_degenerate: false,
            });
        }
        let t = tracker.as_mut().expect("tracker initialized above");
        if x.len() != t.stream.dim() {
            bail!("row {row}: expected {} values, found {}", t.stream.dim(), x.len());
        }
        t.observe(&x).with_context(|| format!("row {row}"))?;

        if opts.diagnostics {
            if let Some(sh) = &t.shrink {
                writeln!(
                    diagnostics,
                    "{},{},{},{}",
                    t.stream.n(),
                    fmt_f64(sh.lambda()),
                    fmt_f64(sh.sigma_hat().trace()),
                    t.error.map(fmt_f64).unwrap_or_default()
                )?;
            }
        }
    }

    let Some(t) = tracker else {
        bail!("no observations in input");
    };
    Ok(StreamOutcome {
        p: t.stream.dim(),
        n: t.stream.n(),
        lambda: t.shrink.as_ref().map(ShrinkState::lambda),
        sigma_hat: t.shrink.as_ref().map(|s| s.sigma_hat().clone()),
        inverse: t.inverse.as_ref().map(|s| s.inv().clone()),
        error: t.error,
        reseeds: t.reseeds,
    })
}

pub fn write_matrix_csv<W: Write>(mut out: W, m: &Matrix) -> Result<()> {
    for row in m.to_rows() {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
