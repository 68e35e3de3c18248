use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shrinkcov::sim::{run_trials, summarize_records, summarize_traces, TraceRecord};
use shrinkcov::{ExperimentConfig, LambdaMode, Variant};
use shrinkcov_cli::output::{
    fmt_f64, read_raw, summary_rows, write_raw_csv, write_summary_csv, Metadata, OutputRecord, RawOutput, RecordKind,
};
use shrinkcov_cli::stream_cmd::{run_stream, write_matrix_csv, StreamOptions, Threshold};

#[derive(Parser)]
#[command(name = "shrinkcov", version, about = "Online shrinkage covariance estimation and inverse tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo experiment on AR(1) Gaussian data.
    Simulate(SimulateArgs),
    /// Track the estimate and its inverse over observations read from CSV.
    Stream(StreamArgs),
    /// Pool raw trace files and summarize them.
    Summarize(SummarizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaArg {
    /// Plug-in oracle using the true covariance.
    Oracle,
    /// Closed-form estimate from the sample covariance.
    Estimate,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    out: OutFormat,
    /// Write to this file instead of stdout. CSV output also gets a
    /// `<path>.meta.json` sidecar with the run metadata.
    #[arg(long = "output-path")]
    output_path: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Dimension.
    #[arg(long, default_value_t = 50, value_parser = parse_positive)]
    p: usize,
    /// AR(1) correlation coefficient, |r| < 1.
    #[arg(long, default_value_t = 0.5, value_parser = parse_ar_coefficient, allow_hyphen_values = true)]
    r: f64,
    /// Last sample count to evaluate.
    #[arg(long = "n-max", default_value_t = 30, value_parser = parse_n_max)]
    n_max: usize,
    /// Independent trials.
    #[arg(long, default_value_t = 200, value_parser = parse_positive)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated: approx1, approx2, exact_chain.
    #[arg(long, value_delimiter = ',', default_value = "approx1,approx2")]
    variants: Vec<Variant>,
    #[arg(long, value_enum, default_value_t = LambdaArg::Estimate)]
    lambda: LambdaArg,
    /// Emit per-trial errors instead of summaries.
    #[arg(long)]
    raw: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, value_parser = parse_positive)]
    threads: Option<usize>,
    /// Reconstruction error beyond which a trial counts as diverged
    /// (default 10p; `none` disables).
    #[arg(long = "divergence-threshold", value_parser = parse_threshold)]
    divergence_threshold: Option<Threshold>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct StreamArgs {
    /// CSV file of observations, one row each; stdin if omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "approx1")]
    variant: Variant,
    /// Print `n,lambda,trace,error` for every step to stdout.
    #[arg(long)]
    diagnostics: bool,
    /// Error beyond which the inverse is re-seeded (default 10p; `none` disables).
    #[arg(long = "divergence-threshold", value_parser = parse_threshold)]
    divergence_threshold: Option<Threshold>,
    /// Prefix for `<prefix>.sigma.csv` and `<prefix>.inverse.csv`.
    #[arg(long = "output-path", default_value = "shrinkcov_stream")]
    output_path: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Raw trace file (CSV or JSON); repeat to pool several.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        Ok(_) => Err("must be at least 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_n_max(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        Ok(_) => Err("must be at least 2".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_ar_coefficient(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if r.is_finite() && r.abs() < 1.0 {
        Ok(r)
    } else {
        Err(format!("{s} is outside (-1, 1)"))
    }
}

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    match s.to_ascii_lowercase().as_str() {
        "none" | "off" | "inf" => Ok(Threshold::Disabled),
        _ => match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Threshold::Value(v)),
            Ok(_) => Err("must be a positive number or `none`".into()),
            Err(e) => Err(e.to_string()),
        },
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Writes summary rows (or raw records) in the requested format.
fn emit(output: &OutputArgs, metadata: Metadata, summary: Option<&shrinkcov::ExperimentSummary>, raw: &[TraceRecord]) -> Result<()> {
    let mut out = open_output(output.output_path.as_deref())?;
    match (output.out, summary) {
        (OutFormat::Csv, Some(s)) => write_summary_csv(&mut out, &summary_rows(s))?,
        (OutFormat::Csv, None) => write_raw_csv(&mut out, raw)?,
        (OutFormat::Json, Some(s)) => write_json(&mut out, &OutputRecord { metadata: metadata.clone(), rows: summary_rows(s) })?,
        (OutFormat::Json, None) => write_json(&mut out, &RawOutput { metadata: metadata.clone(), records: raw.to_vec() })?,
    }
    out.flush()?;
    if let (OutFormat::Csv, Some(path)) = (output.out, &output.output_path) {
        let meta = with_suffix(path, ".meta.json");
        let mut file = BufWriter::new(File::create(&meta).with_context(|| format!("cannot create {}", meta.display()))?);
        write_json(&mut file, &metadata)?;
        file.flush()?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = ExperimentConfig {
        p: args.p,
        r: args.r,
        n_max: args.n_max,
        reps: args.reps,
        seed: args.seed,
        variants: args.variants,
        lambda_mode: match args.lambda {
            LambdaArg::Oracle => LambdaMode::OraclePlugin,
            LambdaArg::Estimate => LambdaMode::SampleEstimate,
        },
        divergence_threshold: args.divergence_threshold.unwrap_or(Threshold::Default).resolve(args.p),
    };
    config.validate()?;
    log::info!("running {} trials at p={}, n_max={}", config.reps, config.p, config.n_max);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .context("cannot start worker threads")?;
    let traces = pool.install(|| run_trials(&config))?;

    if args.raw {
        let records: Vec<TraceRecord> = traces.iter().flat_map(|t| t.records()).collect();
        emit(&args.output, Metadata::new(RecordKind::Raw, Some(config)), None, &records)
    } else {
        let summary = summarize_traces(&traces)?;
        emit(&args.output, Metadata::new(RecordKind::Summary, Some(config)), Some(&summary), &[])
    }
}

fn summarize(args: SummarizeArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &args.input {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        records.extend(read_raw(file).with_context(|| format!("reading {}", path.display()))?);
    }
    let summary = summarize_records(records)?;
    emit(&args.output, Metadata::new(RecordKind::Summary, None), Some(&summary), &[])
}

fn stream(args: StreamArgs) -> Result<()> {
    let input: Box<dyn io::Read> = match &args.input {
        Some(p) => Box::new(File::open(p).with_context(|| format!("cannot open {}", p.display()))?),
        None => Box::new(io::stdin().lock()),
    };
    let opts = StreamOptions {
        variant: args.variant,
        divergence_threshold: args.divergence_threshold.unwrap_or(Threshold::Default),
        diagnostics: args.diagnostics,
    };
    let stdout = io::stdout();
    let outcome = run_stream(input, &opts, BufWriter::new(stdout.lock()))?;

    let sigma_path = with_suffix(&args.output_path, ".sigma.csv");
    let inverse_path = with_suffix(&args.output_path, ".inverse.csv");
    if let Some(sigma) = &outcome.sigma_hat {
        let mut f = BufWriter::new(File::create(&sigma_path).with_context(|| format!("cannot create {}", sigma_path.display()))?);
        write_matrix_csv(&mut f, sigma)?;
        f.flush()?;
    } else {
        eprintln!("warning: fewer than two observations; no estimate written");
    }
    if let Some(inv) = &outcome.inverse {
        let mut f = BufWriter::new(File::create(&inverse_path).with_context(|| format!("cannot create {}", inverse_path.display()))?);
        write_matrix_csv(&mut f, inv)?;
        f.flush()?;
    } else if outcome.sigma_hat.is_some() {
        eprintln!("warning: estimate is singular; no inverse written");
    }
    eprintln!(
        "observations: {}, p: {}, lambda: {}, reconstruction error: {}, re-seeds: {}",
        outcome.n,
        outcome.p,
        outcome.lambda.map_or("-".into(), fmt_f64),
        outcome.error.map_or("-".into(), fmt_f64),
        outcome.reseeds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHRINKCOV_LOG", "off")).init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Stream(a) => stream(a),
        Command::Summarize(a) => summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
