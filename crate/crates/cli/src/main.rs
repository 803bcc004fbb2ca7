//! Command-line surface: offline defense construction (`learn`), threshold
//! tuning (`tune-eps`), per-sample detection (`detect`), dataset evaluation
//! (`eval`), and kernel benchmarking (`bench`).
//!
//! Exit codes: 0 success, 1 trojan detected under `--exit-on-trojan`,
//! 2 usage or data error.

mod bench;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use sparse_shield_core::config::DefenseConfig;
use sparse_shield_core::image::{image_to_tensor, load_image};
use sparse_shield_core::linalg::Matrix;
use sparse_shield_core::outlier::tune_epsilon;
use sparse_shield_core::pipeline::{
    build_defense_timed, dct_analyze, evaluate, feature_analyze, load_defense, save_defense,
    DatasetManifest,
};
use sparse_shield_core::tensor::{read_tensor, Tensor};

#[derive(Parser)]
#[command(name = "sparse-shield", version, about = "Unsupervised trojan trigger detector")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a defense bundle from a benign corpus.
    Learn {
        /// Directory of clean images (.pgm/.ppm/.clnt); scanned sorted by name
        #[arg(long)]
        corpus: PathBuf,
        /// Rank-2 CLNT tensor of clean feature vectors, one row per sample
        #[arg(long)]
        features: PathBuf,
        /// key=value config file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output bundle directory
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to SPARSE_SHIELD_THREADS, then 1
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the config false-positive target used for threshold tuning
        #[arg(long)]
        target_fpr: Option<f64>,
    },
    /// Print the squared outlier threshold for a false-positive budget.
    TuneEps {
        /// Residual dimensionality
        #[arg(long)]
        dim: usize,
        /// Patches per image
        #[arg(long)]
        patches: usize,
        #[arg(long)]
        target_fpr: f64,
    },
    /// Run both analyzers on one sample.
    Detect {
        #[arg(long)]
        bundle: PathBuf,
        /// Image file (.pgm/.ppm/.clnt)
        #[arg(long)]
        image: PathBuf,
        /// Rank-1 CLNT feature vector
        #[arg(long)]
        feature: PathBuf,
        /// Emit a JSON object instead of a text line
        #[arg(long)]
        json: bool,
        /// Exit 1 when the sample is flagged
        #[arg(long)]
        exit_on_trojan: bool,
    },
    /// Evaluate a bundle over a dataset manifest and print metrics JSON.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Include the per-sample report, not just the metrics
        #[arg(long)]
        json: bool,
    },
    /// Time a numeric kernel and print a latency table.
    Bench {
        /// One of: mvm, omp, qr, dct, defense
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = 48)]
        cols: usize,
        #[arg(long, default_value_t = 5)]
        lambda: usize,
        /// Timed iterations (minimum 100)
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        threads: Option<usize>,
        /// Machine-readable CSV instead of an aligned table
        #[arg(long)]
        csv: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t.max(1));
    }
    match std::env::var("SPARSE_SHIELD_THREADS") {
        Ok(v) => {
            let t: usize = v
                .parse()
                .with_context(|| format!("SPARSE_SHIELD_THREADS={v} is not a thread count"))?;
            Ok(t.max(1))
        }
        Err(_) => Ok(1),
    }
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Learn {
            corpus,
            features,
            config,
            out,
            seed,
            threads,
            target_fpr,
        } => {
            let threads = resolve_threads(threads)?;
            let mut cfg = match &config {
                Some(p) => DefenseConfig::from_file(p)
                    .with_context(|| format!("loading config {}", p.display()))?,
                None => DefenseConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(f) = target_fpr {
                cfg.target_fpr = Some(f);
            }
            cmd_learn(&corpus, &features, &cfg, &out, threads)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::TuneEps {
            dim,
            patches,
            target_fpr,
        } => {
            let eps2 = tune_epsilon(dim, patches, target_fpr)?;
            println!("{eps2}");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Detect {
            bundle,
            image,
            feature,
            json,
            exit_on_trojan,
        } => cmd_detect(&bundle, &image, &feature, json, exit_on_trojan),
        Cmd::Eval {
            bundle,
            manifest,
            json,
        } => {
            cmd_eval(&bundle, &manifest, json)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench {
            kernel,
            rows,
            cols,
            lambda,
            runs,
            threads,
            csv,
        } => {
            let threads = resolve_threads(threads)?;
            let report = bench::run_kernel(&kernel, rows, cols, lambda, runs.max(100), threads)?;
            bench::print_report(&report, csv);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_image_tensor(path: &Path) -> Result<Tensor> {
    if path.extension().and_then(|e| e.to_str()) == Some("clnt") {
        Ok(read_tensor(path)?)
    } else {
        Ok(image_to_tensor(&load_image(path)?))
    }
}

fn cmd_learn(
    corpus: &Path,
    features: &Path,
    cfg: &DefenseConfig,
    out: &Path,
    threads: usize,
) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus)
        .with_context(|| format!("reading corpus directory {}", corpus.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm") | Some("clnt")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no corpus images (.pgm/.ppm/.clnt) in {}", corpus.display());
    }
    let images: Vec<Tensor> = paths
        .iter()
        .map(|p| load_image_tensor(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<_>>()?;

    let feats = read_tensor(features)?;
    if feats.shape().len() != 2 {
        bail!(
            "{}: expected a rank-2 feature tensor, got rank {}",
            features.display(),
            feats.shape().len()
        );
    }
    let (n, d) = (feats.shape()[0], feats.shape()[1]);
    // one sample per row on disk, one per column in memory
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|i| feats.data()[i * d..(i + 1) * d].to_vec())
        .collect();
    let feature_cols = Matrix::from_cols(&rows)?;

    let (defense, timings) = build_defense_timed(&images, &feature_cols, cfg, threads)?;
    save_defense(&defense, out)?;

    println!("{:<22}{:>10}", "stage", "seconds");
    let mut total = 0.0;
    for (name, dur) in timings.rows() {
        let s = dur.as_secs_f64();
        total += s;
        println!("{name:<22}{s:>10.3}");
    }
    println!("{:<22}{total:>10.3}", "total");
    println!("bundle written to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct DetectOutput {
    d_da: bool,
    d_fa: bool,
    trojan: bool,
    /// Fraction of image pixels covered by the refined trigger mask.
    mask_coverage: f64,
}

fn cmd_detect(
    bundle: &Path,
    image: &Path,
    feature: &Path,
    json: bool,
    exit_on_trojan: bool,
) -> Result<ExitCode> {
    let defense = load_defense(bundle)?;
    let img = load_image_tensor(image)?;
    let feat = read_tensor(feature)?;
    let da = dct_analyze(&img, &defense.dct)?;
    let fa = feature_analyze(feat.data(), &defense.feature)?;
    let pixels = img.shape()[1] * img.shape()[2];
    let out = DetectOutput {
        d_da: da.flagged,
        d_fa: fa.flagged,
        trojan: da.flagged || fa.flagged,
        mask_coverage: da.image_mask.popcount() as f64 / pixels as f64,
    };
    if json {
        println!("{}", serde_json::to_string(&out)?);
    } else {
        println!(
            "trojan={} d_da={} d_fa={} mask_coverage={:.4}",
            out.trojan, out.d_da, out.d_fa, out.mask_coverage
        );
    }
    if exit_on_trojan && out.trojan {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(bundle: &Path, manifest_path: &Path, full: bool) -> Result<()> {
    let defense = load_defense(bundle)?;
    let manifest = DatasetManifest::from_file(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let report = evaluate(&defense, &manifest, base)?;
    if full {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    }
    Ok(())
}
