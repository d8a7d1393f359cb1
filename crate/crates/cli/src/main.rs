//! `hrvnl`: batch front end for RR-interval nonlinearity analysis.

// parameter checks are negated so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hrv_nonlin::nltest::calibration_for;
use hrv_nonlin::pipeline::{
    ingest_series, preprocess, run_cohort, run_subject, write_report, CohortManifest,
    PreprocessConfig,
};
use hrv_nonlin::series::{normalize, AnalysisParams, CalibrationSettings};
use hrv_nonlin::surrogates::make_labeled_ensemble;
use hrv_nonlin::synth::{generate, ProcessKind, ProcessSpec, StaticTransform};

#[derive(Parser)]
#[command(
    name = "hrvnl",
    version,
    about = "Surrogate-based nonlinearity tests for RR-interval series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run NCI, IS and GLC tests on one RR file and print the records as JSON.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        prep: PrepArgs,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze every row of a cohort manifest and write the report files.
    Cohort {
        manifest: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        prep: PrepArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an IAAFT surrogate ensemble of one RR file.
    Surrogate {
        input: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        prep: PrepArgs,
        /// Only normalize the input; skip windowing and detrending.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic RR series.
    Synth(SynthArgs),
    /// Emit the GLC calibration curve of one RR file as a two-column table.
    Calibrate {
        input: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        prep: PrepArgs,
        /// AR1 coefficients on the calibration grid.
        #[arg(long, default_value_t = 199)]
        n_phi: usize,
        /// Realizations per coefficient.
        #[arg(long, default_value_t = 25)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// Embedding order.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Tolerance in standard deviations.
    #[arg(long, default_value_t = 0.2)]
    r: f64,
    /// Neighbors for information storage.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Largest GLC lag.
    #[arg(long, default_value_t = 2)]
    lmax: usize,
    /// Surrogates per test.
    #[arg(long, default_value_t = 100)]
    ns: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Master seed; every random draw derives from it.
    #[arg(long)]
    seed: u64,
}

impl ParamArgs {
    fn params(&self) -> Result<AnalysisParams> {
        let p = AnalysisParams {
            m: self.m,
            r: self.r,
            k: self.k,
            l_max: self.lmax,
            n_s: self.ns,
            alpha: self.alpha,
            seed: self.seed,
            ..AnalysisParams::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long, default_value_t = 0)]
    window_start: usize,
    #[arg(long, default_value_t = 300)]
    window_len: usize,
    /// High-pass corner in cycles per beat.
    #[arg(long, default_value_t = 0.03)]
    hp_cutoff: f64,
}

impl PrepArgs {
    fn config(&self) -> PreprocessConfig {
        PreprocessConfig {
            window_start: self.window_start,
            window_len: self.window_len,
            hp_cutoff: self.hp_cutoff,
            min_samples: self.window_len,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    White,
    Ar1,
    Static,
    Bilinear,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// AR1 coefficient (ar1, static).
    #[arg(long, default_value_t = 0.5)]
    phi: f64,
    /// Static transform: square, cube or exp.
    #[arg(long, default_value = "cube")]
    transform: String,
    /// Bilinear linear coefficient.
    #[arg(long, default_value_t = 0.4)]
    a: f64,
    /// Bilinear coupling coefficient.
    #[arg(long, default_value_t = 0.4)]
    b: f64,
    /// Mean RR interval in ms.
    #[arg(long, default_value_t = 800.0)]
    rr_mean: f64,
    /// RR standard deviation in ms.
    #[arg(long, default_value_t = 40.0)]
    rr_sd: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn synth(args: &SynthArgs) -> Result<String> {
    let kind = match args.kind {
        Kind::White => ProcessKind::WhiteGaussian,
        Kind::Ar1 => ProcessKind::Ar1 { phi: args.phi },
        Kind::Static => ProcessKind::StaticTransform {
            phi: args.phi,
            transform: args.transform.parse::<StaticTransform>()?,
        },
        Kind::Bilinear => ProcessKind::Bilinear {
            a: args.a,
            b: args.b,
        },
    };
    if !(args.rr_sd > 0.0) {
        bail!("--rr-sd must be positive");
    }
    let z = generate(&ProcessSpec::new(kind, args.n, args.seed))?;
    let mut text = String::from("rr_ms\n");
    for v in z {
        let rr = args.rr_mean + args.rr_sd * v;
        if rr <= 0.0 {
            bail!("generated non-positive RR interval {rr}; raise --rr-mean or lower --rr-sd");
        }
        text.push_str(&format!("{rr}\n"));
    }
    Ok(text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            input,
            params,
            prep,
            out,
        } => {
            let series =
                ingest_series(&input).with_context(|| format!("reading {}", input.display()))?;
            let params = params.params()?;
            let config = prep.config();
            let outcome = run_subject(&series, &params, &config)?;
            let doc = serde_json::json!({
                "subject": series.label,
                "params": params,
                "preprocess": config,
                "outcome": outcome,
            });
            emit(
                out.as_deref(),
                &(serde_json::to_string_pretty(&doc)? + "\n"),
            )
        }
        Command::Cohort {
            manifest,
            params,
            prep,
            out,
        } => {
            let m = CohortManifest::load(&manifest)
                .with_context(|| format!("loading {}", manifest.display()))?;
            let report = run_cohort(&m, &params.params()?, &prep.config())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_report(&report, &out)?;
            eprintln!(
                "wrote {} records to {}",
                report.records.len(),
                out.display()
            );
            Ok(())
        }
        Command::Surrogate {
            input,
            params,
            prep,
            raw,
            out,
        } => {
            let series =
                ingest_series(&input).with_context(|| format!("reading {}", input.display()))?;
            let params = params.params()?;
            let normalized = if raw {
                normalize(series.values())?
            } else {
                preprocess(&series, &prep.config())?
            };
            let ensemble = make_labeled_ensemble(
                &normalized,
                &series.label,
                params.n_s,
                params.iaaft_max_iter,
                params.seed,
            )?;
            ensemble.write_dir(&out)?;
            Ok(())
        }
        Command::Synth(args) => emit(args.out.as_deref(), &synth(&args)?),
        Command::Calibrate {
            input,
            params,
            prep,
            n_phi,
            reps,
            out,
        } => {
            let series =
                ingest_series(&input).with_context(|| format!("reading {}", input.display()))?;
            let params = AnalysisParams {
                calibration: CalibrationSettings { n_phi, reps },
                ..params.params()?
            };
            let normalized = preprocess(&series, &prep.config())?;
            // same seed stream as the GLC test of `analyze`
            let curve = calibration_for(&normalized, &params)?;
            emit(out.as_deref(), &curve.to_table())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn run_args(args: &[&str]) -> Result<()> {
        run(Cli::try_parse_from(
            std::iter::once("hrvnl").chain(args.iter().copied()),
        )?)
    }

    fn path_str(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    fn synth_file(dir: &Path, name: &str, kind: &str, n: usize, seed: u64) -> PathBuf {
        let path = dir.join(name);
        let (n, seed) = (n.to_string(), seed.to_string());
        run_args(&[
            "synth",
            "--kind",
            kind,
            "--n",
            &n,
            "--seed",
            &seed,
            "--out",
            path_str(&path),
        ])
        .unwrap();
        path
    }

    fn analyze_json(input: &Path, dir: &Path) -> serde_json::Value {
        let out = dir.join("analysis.json");
        run_args(&[
            "analyze",
            path_str(input),
            "--ns",
            "20",
            "--seed",
            "9",
            "--out",
            path_str(&out),
        ])
        .unwrap();
        serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap()
    }

    #[test]
    fn synth_is_reproducible_and_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let read = |p: PathBuf| fs::read_to_string(p).unwrap();
        let a = read(synth_file(dir.path(), "a.txt", "ar1", 50, 3));
        let b = read(synth_file(dir.path(), "b.txt", "ar1", 50, 3));
        let c = read(synth_file(dir.path(), "c.txt", "ar1", 50, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut lines = a.lines();
        assert_eq!(lines.next(), Some("rr_ms"));
        assert_eq!(lines.count(), 50);
    }

    #[test]
    fn analyze_reports_three_measures() {
        let dir = tempfile::tempdir().unwrap();
        let input = synth_file(dir.path(), "s.txt", "bilinear", 320, 5);
        let doc = analyze_json(&input, dir.path());
        assert_eq!(doc["subject"], "s");
        assert_eq!(doc["outcome"]["status"], "analyzed");
        let results = doc["outcome"]["results"].as_array().unwrap();
        assert_eq!(results.len(), 3);
        for r in results {
            assert_eq!(r["surrogate_values"].as_array().unwrap().len(), 20);
        }
    }

    #[test]
    fn short_recording_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let input = synth_file(dir.path(), "short.txt", "white", 120, 1);
        let doc = analyze_json(&input, dir.path());
        assert_eq!(doc["outcome"]["status"], "skipped");
    }

    #[test]
    fn surrogate_writes_one_file_per_surrogate() {
        let dir = tempfile::tempdir().unwrap();
        let input = synth_file(dir.path(), "s.txt", "ar1", 300, 2);
        let out = dir.path().join("surr");
        run_args(&[
            "surrogate",
            path_str(&input),
            "--ns",
            "20",
            "--seed",
            "4",
            "--out",
            path_str(&out),
        ])
        .unwrap();
        let csvs = fs::read_dir(&out)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension() == Some("csv".as_ref()))
            .count();
        assert_eq!(csvs, 20);
        assert!(out.join("manifest.json").exists());
    }

    #[test]
    fn calibrate_emits_monotone_table() {
        let dir = tempfile::tempdir().unwrap();
        let input = synth_file(dir.path(), "s.txt", "static", 300, 6);
        let out = dir.path().join("curve.tsv");
        run_args(&[
            "calibrate",
            path_str(&input),
            "--n-phi",
            "60",
            "--reps",
            "3",
            "--seed",
            "2",
            "--out",
            path_str(&out),
        ])
        .unwrap();
        let text = fs::read_to_string(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bin_center\tc_value"));
        let values: Vec<f64> = lines
            .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(values.len() > 20);
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(run_args(&["analyze", "/nonexistent/rr.txt", "--seed", "1"]).is_err());
        assert!(run_args(&["analyze", "x.txt"]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.csv");
        fs::write(
            &manifest,
            "subject_id,group,condition,path\na,g,rest,missing.txt\n",
        )
        .unwrap();
        let out = dir.path().join("out");
        assert!(run_args(&[
            "cohort",
            path_str(&manifest),
            "--seed",
            "1",
            "--out",
            path_str(&out)
        ])
        .is_err());
    }
}
