//! Kernel timing harness. Every kernel reports mean/stddev latency over the
//! requested runs plus a checksum of its numeric output so runs with
//! different thread counts can be compared for bit-identical results.

use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparse_shield_core::config::{AnalyzerParams, DefenseConfig};
use sparse_shield_core::dct::extract_dct;
use sparse_shield_core::linalg::{mgs_qr, mvm, Matrix, MvmPlan};
use sparse_shield_core::outlier::{classify_patches, mahalanobis, refine_mask};
use sparse_shield_core::pipeline::build_defense;
use sparse_shield_core::sparse::OmpState;
use sparse_shield_core::tensor::Tensor;

pub struct BenchRow {
    pub name: String,
    pub runs: usize,
    pub mean_us: f64,
    pub stddev_us: f64,
    /// Fraction of the total row's mean latency.
    pub share: f64,
    pub checksum: f64,
}

pub struct BenchReport {
    pub kernel: String,
    pub threads: usize,
    pub rows: Vec<BenchRow>,
}

fn stats(samples: &[Duration]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|d| d.as_secs_f64()).sum::<f64>() / n * 1e6;
    let var = samples
        .iter()
        .map(|d| (d.as_secs_f64() * 1e6 - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn random_dictionary(rng: &mut ChaCha8Rng, l: usize, m: usize) -> Matrix {
    let mut d = random_matrix(rng, l, m);
    for j in 0..m {
        let n: f64 = d.col(j).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        for i in 0..l {
            let v = (d.get(i, j) as f64 / n) as f32;
            d.set(i, j, v);
        }
    }
    d
}

pub fn run_kernel(
    kernel: &str,
    rows: usize,
    cols: usize,
    lambda: usize,
    runs: usize,
    threads: usize,
) -> Result<BenchReport> {
    let rows_out = match kernel {
        "mvm" => bench_mvm(rows, cols, runs, threads)?,
        "omp" => bench_omp(cols, rows, lambda, runs)?,
        "qr" => bench_qr(rows, cols.min(rows), runs)?,
        "dct" => bench_dct(runs)?,
        "defense" => bench_defense(lambda, runs)?,
        other => bail!("unknown kernel {other:?}; expected mvm, omp, qr, dct, or defense"),
    };
    Ok(BenchReport {
        kernel: kernel.to_string(),
        threads,
        rows: rows_out,
    })
}

fn single_row(name: &str, samples: Vec<Duration>, checksum: f64) -> Vec<BenchRow> {
    let (mean_us, stddev_us) = stats(&samples);
    vec![BenchRow {
        name: name.to_string(),
        runs: samples.len(),
        mean_us,
        stddev_us,
        share: 1.0,
        checksum,
    }]
}

fn bench_mvm(rows: usize, cols: usize, runs: usize, threads: usize) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0);
    let m = random_matrix(&mut rng, rows, cols);
    let x: Vec<f32> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let plan = MvmPlan::with_threads(threads);
    let mut samples = Vec::with_capacity(runs);
    let mut checksum = 0.0f64;
    for _ in 0..runs {
        let t = Instant::now();
        let y = mvm(&m, &x, &plan)?;
        samples.push(t.elapsed());
        checksum = y.iter().map(|&v| v as f64).sum();
    }
    Ok(single_row("mvm", samples, checksum))
}

fn bench_qr(rows: usize, cols: usize, runs: usize) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1);
    let m = random_matrix(&mut rng, rows, cols);
    let mut samples = Vec::with_capacity(runs);
    let mut checksum = 0.0f64;
    for _ in 0..runs {
        let t = Instant::now();
        let (_, r) = mgs_qr(&m)?;
        samples.push(t.elapsed());
        checksum = (0..cols).map(|i| r.get(i, i).abs() as f64).sum();
    }
    Ok(single_row("qr", samples, checksum))
}

fn bench_dct(runs: usize) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB2);
    let basis = sparse_shield_core::dct::build_dct_basis(4);
    let data: Vec<f32> = (0..3 * 32 * 32).map(|_| rng.gen_range(0.0..1.0)).collect();
    let img = Tensor::new(vec![3, 32, 32], data)?;
    let mut samples = Vec::with_capacity(runs);
    let mut checksum = 0.0f64;
    for _ in 0..runs {
        let t = Instant::now();
        let grid = extract_dct(&img, &basis)?;
        samples.push(t.elapsed());
        checksum = grid.coeffs.data().iter().map(|&v| v as f64).sum();
    }
    Ok(single_row("dct", samples, checksum))
}

/// Times sparse recovery split into its phases: atom selection, incremental
/// QR update, and the final back-substitution.
fn bench_omp(l: usize, m: usize, lambda: usize, runs: usize) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB3);
    let atoms = random_dictionary(&mut rng, l, m);
    let x: Vec<f32> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut sel = Vec::with_capacity(runs);
    let mut qr = Vec::with_capacity(runs);
    let mut back = Vec::with_capacity(runs);
    let mut total = Vec::with_capacity(runs);
    let mut checksum = 0.0f64;
    for _ in 0..runs {
        let t_total = Instant::now();
        let mut state = OmpState::new(&x);
        let (mut t_sel, mut t_qr) = (Duration::ZERO, Duration::ZERO);
        for _ in 0..lambda {
            if state.converged() {
                break;
            }
            let t = Instant::now();
            let j = state.select_atom(&atoms);
            t_sel += t.elapsed();
            let Some(j) = j else { break };
            let t = Instant::now();
            state.step(&atoms, j)?;
            t_qr += t.elapsed();
        }
        let t = Instant::now();
        let code = state.finish(&atoms);
        back.push(t.elapsed());
        total.push(t_total.elapsed());
        sel.push(t_sel);
        qr.push(t_qr);
        checksum = code.residual_norm();
    }

    let (total_mean, total_sd) = stats(&total);
    let mut out = Vec::new();
    for (name, samples) in [
        ("omp_select", sel),
        ("omp_qr_update", qr),
        ("omp_backsolve", back),
    ] {
        let (mean_us, stddev_us) = stats(&samples);
        out.push(BenchRow {
            name: name.to_string(),
            runs,
            mean_us,
            stddev_us,
            share: mean_us / total_mean,
            checksum,
        });
    }
    out.push(BenchRow {
        name: "total".into(),
        runs,
        mean_us: total_mean,
        stddev_us: total_sd,
        share: 1.0,
        checksum,
    });
    Ok(out)
}

/// Times one full online defense pass per run, broken down by stage, over a
/// defense trained on synthetic data at small-image parameters (4x4 patches,
/// 48 coefficients, 1000 dictionary columns).
fn bench_defense(lambda: usize, runs: usize) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB4);
    let cfg = DefenseConfig {
        patch_size: 4,
        dct: AnalyzerParams {
            dict_cols: 1000,
            lambda,
            eps2: Some(5e-4),
        },
        feature: AnalyzerParams {
            dict_cols: 100,
            lambda,
            eps2: Some(5e-4),
        },
        target_fpr: None,
        svd_energy_fraction: 0.95,
        morph_kernel: 3,
        dict_init_cols: None,
        dict_growth: 25,
        seed: 7,
    };
    // 20 images x 64 patches = 1280 candidate columns for the 1000-atom
    // dictionary
    let images: Vec<Tensor> = (0..20)
        .map(|_| {
            let data: Vec<f32> = (0..3 * 32 * 32).map(|_| rng.gen_range(0.0..1.0)).collect();
            Tensor::new(vec![3, 32, 32], data)
        })
        .collect::<sparse_shield_core::Result<_>>()?;
    let features = random_matrix(&mut rng, 64, 200);
    let defense = build_defense(&images, &features, &cfg, 1)?;

    let sample: Vec<f32> = (0..3 * 32 * 32).map(|_| rng.gen_range(0.0..1.0)).collect();
    let sample = Tensor::new(vec![3, 32, 32], sample)?;
    let feat_sample: Vec<f32> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let names = [
        "dct_extract",
        "sparse_recovery",
        "outlier_classify",
        "morphology",
        "suppression",
        "feature_project",
        "feature_sparse_recovery",
        "feature_classify",
    ];
    let mut stage: Vec<Vec<Duration>> = vec![Vec::with_capacity(runs); names.len()];
    let mut total = Vec::with_capacity(runs);
    let mut checksum = 0.0f64;
    let plan = MvmPlan::default();
    for _ in 0..runs {
        let t_total = Instant::now();

        let t = Instant::now();
        let grid = extract_dct(&sample, &defense.dct.basis)?;
        stage[0].push(t.elapsed());

        let t = Instant::now();
        let mut residual_rows = Matrix::zeros(grid.n_patches(), grid.dim());
        for k in 0..grid.n_patches() {
            let code = sparse_shield_core::sparse::omp(
                defense.dct.dictionary.atoms(),
                grid.coeffs.row(k),
                defense.dct.lambda,
            )?;
            for (j, &v) in code.residual.iter().enumerate() {
                residual_rows.set(k, j, v);
            }
        }
        stage[1].push(t.elapsed());

        let t = Instant::now();
        let raw = classify_patches(
            &defense.dct.model,
            &residual_rows,
            grid.n_patches_y,
            grid.n_patches_x,
        )?;
        stage[2].push(t.elapsed());

        let t = Instant::now();
        let refined = refine_mask(&raw, &defense.dct.kernel);
        stage[3].push(t.elapsed());

        let t = Instant::now();
        let pixel_mask =
            sparse_shield_core::dct::upsample_mask(&refined, defense.dct.patch_size);
        let suppressed = sparse_shield_core::dct::suppress(
            &sample,
            &pixel_mask,
            Some(&defense.dct.channel_means),
        )?;
        stage[4].push(t.elapsed());

        let t = Instant::now();
        let projected = mvm(&defense.feature.projection.transpose(), &feat_sample, &plan)?;
        stage[5].push(t.elapsed());

        let t = Instant::now();
        let code = sparse_shield_core::sparse::omp(
            defense.feature.dictionary.atoms(),
            &projected,
            defense.feature.lambda,
        )?;
        stage[6].push(t.elapsed());

        let t = Instant::now();
        let dist = mahalanobis(&defense.feature.model, &code.residual)?;
        stage[7].push(t.elapsed());

        total.push(t_total.elapsed());
        checksum = suppressed.data().iter().map(|&v| v as f64).sum::<f64>() + dist;
    }

    let (total_mean, total_sd) = stats(&total);
    let mut out = Vec::new();
    for (name, samples) in names.iter().zip(stage) {
        let (mean_us, stddev_us) = stats(&samples);
        out.push(BenchRow {
            name: name.to_string(),
            runs,
            mean_us,
            stddev_us,
            share: mean_us / total_mean,
            checksum,
        });
    }
    out.push(BenchRow {
        name: "total".into(),
        runs,
        mean_us: total_mean,
        stddev_us: total_sd,
        share: 1.0,
        checksum,
    });
    Ok(out)
}

pub fn print_report(report: &BenchReport, csv: bool) {
    if csv {
        println!("kernel,threads,stage,runs,mean_us,stddev_us,share,checksum");
        for r in &report.rows {
            println!(
                "{},{},{},{},{:.3},{:.3},{:.4},{:.6e}",
                report.kernel, report.threads, r.name, r.runs, r.mean_us, r.stddev_us, r.share,
                r.checksum
            );
        }
    } else {
        println!("kernel: {} (threads={})", report.kernel, report.threads);
        println!(
            "{:<26}{:>6}{:>12}{:>12}{:>8}  {}",
            "stage", "runs", "mean_us", "stddev_us", "share", "checksum"
        );
        for r in &report.rows {
            println!(
                "{:<26}{:>6}{:>12.3}{:>12.3}{:>8.4}  {:.6e}",
                r.name, r.runs, r.mean_us, r.stddev_us, r.share, r.checksum
            );
        }
    }
}
