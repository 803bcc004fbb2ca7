//! Two-analyzer defense pipeline: offline construction from benign data,
//! per-sample detection with mask-based trigger suppression, decision
//! aggregation, and dataset-level metric reporting. The victim model is
//! abstracted away: its class predictions and penultimate features arrive as
//! files listed in the dataset manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::DefenseConfig;
use crate::dct::{
    build_dct_basis, extract_dct, suppress, upsample_mask, BinaryMask, DctBasis,
};
use crate::dict::{learn_dictionary, DictLearnConfig, Dictionary};
use crate::error::{Error, Result};
use crate::image::{image_to_tensor, load_image};
use crate::linalg::{mvm, Matrix, MvmPlan};
use crate::outlier::{
    classify_patches, fit_moments, mahalanobis, refine_mask, tune_epsilon, MorphKernel,
    OutlierModel,
};
use crate::sparse::{batch_reconstruct, omp};
use crate::tensor::{read_tensor, write_tensor, Tensor};

/// Trained DCT-domain analyzer.
#[derive(Debug, Clone)]
pub struct DctBundle {
    pub patch_size: usize,
    pub basis: DctBasis,
    pub dictionary: Dictionary,
    pub lambda: usize,
    pub model: OutlierModel,
    pub kernel: MorphKernel,
    /// Benign-corpus per-channel means; suppression fallback for fully
    /// masked channels.
    pub channel_means: Vec<f32>,
    pub channels: usize,
    /// Patches per image in the training corpus (threshold tuning context).
    pub patches_per_image: usize,
}

/// Trained latent-feature analyzer.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    /// Columns are the retained left singular vectors (input_dim x rank).
    pub projection: Matrix,
    pub singulars: Vec<f32>,
    pub dictionary: Dictionary,
    pub lambda: usize,
    pub model: OutlierModel,
}

impl FeatureBundle {
    pub fn input_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn rank(&self) -> usize {
        self.projection.cols()
    }
}

/// Complete trained defense.
#[derive(Debug, Clone)]
pub struct Defense {
    pub dct: DctBundle,
    pub feature: FeatureBundle,
    pub seed: u64,
}

/// Per-sample DCT analyzer output.
#[derive(Debug, Clone)]
pub struct DctDecision {
    pub flagged: bool,
    pub patch_mask: BinaryMask,
    pub image_mask: BinaryMask,
    pub suppressed: Tensor,
}

/// Per-sample feature analyzer output.
#[derive(Debug, Clone)]
pub struct FeatureDecision {
    pub flagged: bool,
    pub denoised: Vec<f32>,
}

/// Aggregated verdict for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub d_da: bool,
    pub d_fa: bool,
    pub trojan: bool,
    /// The attack-success indicator: both analyzers silent and the model
    /// output hit the target class. None when no target class was supplied.
    pub attack_success: Option<bool>,
}

/// Wall-clock spent in each offline construction stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildTimings {
    pub dct_extraction: std::time::Duration,
    pub dct_dictionary: std::time::Duration,
    pub dct_residuals: std::time::Duration,
    pub dct_moments: std::time::Duration,
    pub feature_svd: std::time::Duration,
    pub feature_dictionary: std::time::Duration,
    pub feature_residuals: std::time::Duration,
    pub feature_moments: std::time::Duration,
}

impl BuildTimings {
    /// (stage name, duration) rows in pipeline order.
    pub fn rows(&self) -> Vec<(&'static str, std::time::Duration)> {
        vec![
            ("dct_extraction", self.dct_extraction),
            ("dct_dictionary", self.dct_dictionary),
            ("dct_residuals", self.dct_residuals),
            ("dct_moments", self.dct_moments),
            ("feature_svd", self.feature_svd),
            ("feature_dictionary", self.feature_dictionary),
            ("feature_residuals", self.feature_residuals),
            ("feature_moments", self.feature_moments),
        ]
    }
}

/// Builds both analyzers from unlabeled benign data. `clean_features` holds
/// one feature vector per column.
pub fn build_defense(
    clean_images: &[Tensor],
    clean_features: &Matrix,
    cfg: &DefenseConfig,
    threads: usize,
) -> Result<Defense> {
    build_defense_timed(clean_images, clean_features, cfg, threads).map(|(d, _)| d)
}

/// [`build_defense`] plus per-stage wall-clock timings. `threads` bounds the
/// worker count for batch sparse recovery; results are identical for any
/// value.
pub fn build_defense_timed(
    clean_images: &[Tensor],
    clean_features: &Matrix,
    cfg: &DefenseConfig,
    threads: usize,
) -> Result<(Defense, BuildTimings)> {
    cfg.validate()?;
    let threads = threads.max(1);
    let mut timings = BuildTimings::default();
    let dct = build_dct_bundle(clean_images, cfg, threads, &mut timings)?;
    let feature = build_feature_bundle(clean_features, cfg, threads, &mut timings)?;
    Ok((
        Defense {
            dct,
            feature,
            seed: cfg.seed,
        },
        timings,
    ))
}

fn build_dct_bundle(
    clean_images: &[Tensor],
    cfg: &DefenseConfig,
    threads: usize,
    timings: &mut BuildTimings,
) -> Result<DctBundle> {
    if clean_images.is_empty() {
        return Err(Error::InsufficientData("no clean images".into()));
    }
    let p = cfg.patch_size;
    let basis = build_dct_basis(p);
    let channels = clean_images[0].shape()[0];

    let t0 = std::time::Instant::now();
    let mut columns: Vec<Vec<f32>> = Vec::new();
    let mut channel_sums = vec![0.0f64; channels];
    let mut channel_counts = vec![0usize; channels];
    let mut patches_per_image = 0usize;
    for img in clean_images {
        if img.shape()[0] != channels {
            return Err(Error::DimensionMismatch {
                context: "corpus channel count",
                expected: channels,
                got: img.shape()[0],
            });
        }
        let grid = extract_dct(img, &basis)?;
        patches_per_image = grid.n_patches();
        for k in 0..grid.n_patches() {
            columns.push(grid.coeffs.row(k).to_vec());
        }
        let (h, w) = (img.shape()[1], img.shape()[2]);
        for ch in 0..channels {
            let plane = &img.data()[ch * h * w..(ch + 1) * h * w];
            channel_sums[ch] += plane.iter().map(|&v| v as f64).sum::<f64>();
            channel_counts[ch] += plane.len();
        }
    }
    let channel_means: Vec<f32> = channel_sums
        .iter()
        .zip(&channel_counts)
        .map(|(&s, &c)| (s / c as f64) as f32)
        .collect();

    let x = Matrix::from_cols(&columns)?;
    timings.dct_extraction = t0.elapsed();

    let t0 = std::time::Instant::now();
    let m = cfg.dct.dict_cols;
    let learn_cfg = DictLearnConfig {
        target_cols: m,
        init_cols: cfg.dict_init_cols.unwrap_or((m / 20).max(1)),
        growth: cfg.dict_growth,
        seed: cfg.seed,
    };
    let dictionary = learn_dictionary(&x, &learn_cfg)?;
    timings.dct_dictionary = t0.elapsed();

    let t0 = std::time::Instant::now();
    let batch = batch_reconstruct(dictionary.atoms(), &x, cfg.dct.lambda, threads)?;
    let residual_rows = batch.residuals.transpose();
    timings.dct_residuals = t0.elapsed();
    let t0 = std::time::Instant::now();
    let mut model = fit_moments(&residual_rows)?;
    let d = x.rows();
    let eps2 = match cfg.dct.eps2 {
        Some(e) => e,
        None => {
            let target = cfg.target_fpr.ok_or_else(|| {
                Error::Config("neither dct_eps2 nor target_fpr configured".into())
            })?;
            tune_epsilon(d, patches_per_image, target)?
        }
    };
    model.set_threshold(eps2)?;
    timings.dct_moments = t0.elapsed();

    Ok(DctBundle {
        patch_size: p,
        basis,
        dictionary,
        lambda: cfg.dct.lambda,
        model,
        kernel: MorphKernel::square(cfg.morph_kernel)?,
        channel_means,
        channels,
        patches_per_image,
    })
}

fn build_feature_bundle(
    clean_features: &Matrix,
    cfg: &DefenseConfig,
    threads: usize,
    timings: &mut BuildTimings,
) -> Result<FeatureBundle> {
    if clean_features.cols() < 2 {
        return Err(Error::InsufficientData(
            "feature corpus needs >= 2 samples".into(),
        ));
    }
    let t0 = std::time::Instant::now();
    let (projection, singulars, rank) =
        crate::linalg::truncated_svd(clean_features, cfg.svd_energy_fraction)?;
    // project all features into the reduced space: U^T X
    let projected = projection.transpose().matmul(clean_features)?;
    timings.feature_svd = t0.elapsed();

    let t0 = std::time::Instant::now();
    let m = cfg.feature.dict_cols.min(clean_features.cols());
    let learn_cfg = DictLearnConfig {
        target_cols: m,
        init_cols: cfg.dict_init_cols.unwrap_or((m / 20).max(1)).min(m),
        growth: cfg.dict_growth,
        seed: cfg.seed.wrapping_add(1),
    };
    let dictionary = learn_dictionary(&projected, &learn_cfg)?;
    timings.feature_dictionary = t0.elapsed();

    let t0 = std::time::Instant::now();
    let batch = batch_reconstruct(dictionary.atoms(), &projected, cfg.feature.lambda, threads)?;
    let residual_rows = batch.residuals.transpose();
    timings.feature_residuals = t0.elapsed();
    let t0 = std::time::Instant::now();
    let mut model = fit_moments(&residual_rows)?;
    let eps2 = match cfg.feature.eps2 {
        Some(e) => e,
        None => {
            let target = cfg.target_fpr.ok_or_else(|| {
                Error::Config("neither feature_eps2 nor target_fpr configured".into())
            })?;
            // one feature vector per image
            tune_epsilon(rank, 1, target)?
        }
    };
    model.set_threshold(eps2)?;
    timings.feature_moments = t0.elapsed();

    Ok(FeatureBundle {
        projection,
        singulars,
        dictionary,
        lambda: cfg.feature.lambda,
        model,
    })
}

/// Runs the DCT analyzer on one image: patch DCT, per-patch sparse-recovery
/// residuals, outlier mask, morphological refinement, upsampling, and
/// suppression.
pub fn dct_analyze(img: &Tensor, bundle: &DctBundle) -> Result<DctDecision> {
    let grid = extract_dct(img, &bundle.basis)?;
    let n = grid.n_patches();
    let mut residual_rows = Matrix::zeros(n, grid.dim());
    for k in 0..n {
        let code = omp(bundle.dictionary.atoms(), grid.coeffs.row(k), bundle.lambda)?;
        for (j, &v) in code.residual.iter().enumerate() {
            residual_rows.set(k, j, v);
        }
    }
    let raw_mask = classify_patches(
        &bundle.model,
        &residual_rows,
        grid.n_patches_y,
        grid.n_patches_x,
    )?;
    let refined = refine_mask(&raw_mask, &bundle.kernel);
    let flagged = refined.any();
    let mut image_mask = upsample_mask(&refined, bundle.patch_size);
    // cropping may have shrunk the grid; pad the pixel mask back out with
    // zeros so it matches the input image
    let (h, w) = (img.shape()[1], img.shape()[2]);
    if image_mask.height != h || image_mask.width != w {
        let mut full = BinaryMask::zeros(h, w);
        for y in 0..image_mask.height {
            for x in 0..image_mask.width {
                if image_mask.get(y, x) {
                    full.set(y, x, true);
                }
            }
        }
        image_mask = full;
    }
    let suppressed = suppress(img, &image_mask, Some(&bundle.channel_means))?;
    Ok(DctDecision {
        flagged,
        patch_mask: refined,
        image_mask,
        suppressed,
    })
}

/// Runs the feature analyzer on one feature vector: project, sparse-recover,
/// threshold the residual, and restore the denoised feature to the input
/// dimensionality.
pub fn feature_analyze(feat: &[f32], bundle: &FeatureBundle) -> Result<FeatureDecision> {
    if feat.len() != bundle.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "feature vector length",
            expected: bundle.input_dim(),
            got: feat.len(),
        });
    }
    let plan = MvmPlan::default();
    let projected = mvm(&bundle.projection.transpose(), feat, &plan)?;
    let code = omp(bundle.dictionary.atoms(), &projected, bundle.lambda)?;
    let dist = mahalanobis(&bundle.model, &code.residual)?;
    let flagged = dist >= bundle.model.threshold()?;
    let denoised = mvm(&bundle.projection, &code.reconstruction, &plan)?;
    Ok(FeatureDecision { flagged, denoised })
}

/// Aggregates the analyzer decisions; the sample is a trojan if either
/// analyzer fires. `predicted_class`/`target_class` feed the attack-success
/// indicator.
pub fn detect(
    d_da: bool,
    d_fa: bool,
    predicted_class: u32,
    target_class: Option<u32>,
) -> Verdict {
    Verdict {
        d_da,
        d_fa,
        trojan: d_da || d_fa,
        attack_success: target_class.map(|ct| !d_da && !d_fa && predicted_class == ct),
    }
}

/// One entry of a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub image_path: String,
    pub feature_path: String,
    pub predicted_class: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_class_after_suppression: Option<u32>,
    pub true_label: u32,
    pub is_trojan: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<u32>,
}

/// Dataset manifest: clean and trojan samples with external-model outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-sample entry of a detection report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleReport {
    pub d_da: bool,
    pub d_fa: bool,
    pub trojan: bool,
    pub mask_popcount: usize,
    pub predicted_class: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_class_after_suppression: Option<u32>,
    pub is_trojan: bool,
}

/// Dataset-level metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr_da: f64,
    pub tpr_fa: f64,
    pub fpr_da: f64,
    pub fpr_fa: f64,
    /// Factored attack success rate: (1-TPR_DA)(1-TPR_FA) x target hit rate.
    pub asr_formula: f64,
    /// Attack success rate counted directly from per-sample indicators.
    pub asr_counted: f64,
    /// Set when the factored and counted rates differ beyond 1e-9: the
    /// analyzer decisions were not independent of the model output on this
    /// dataset.
    pub asr_divergence: bool,
    pub acc_c: f64,
    pub tgr: f64,
}

/// Full detection report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_sample: Vec<SampleReport>,
    pub metrics: Metrics,
}

/// Evaluates the defense over a dataset manifest. Relative paths resolve
/// against `base_dir`.
pub fn evaluate(
    defense: &Defense,
    manifest: &DatasetManifest,
    base_dir: impl AsRef<Path>,
) -> Result<DetectionReport> {
    let base = base_dir.as_ref();
    let mut per_sample = Vec::with_capacity(manifest.samples.len());

    let mut n_trojan = 0usize;
    let mut n_clean = 0usize;
    let mut da_hits_trojan = 0usize;
    let mut fa_hits_trojan = 0usize;
    let mut da_hits_clean = 0usize;
    let mut fa_hits_clean = 0usize;
    let mut target_hits = 0usize;
    let mut counted_success = 0usize;
    let mut clean_correct = 0usize;
    let mut tgr_hits = 0usize;

    for sample in &manifest.samples {
        let img = load_sample_image(base, &sample.image_path)?;
        let feat = load_sample_feature(base, &sample.feature_path)?;
        let da = dct_analyze(&img, &defense.dct)?;
        let fa = feature_analyze(&feat, &defense.feature)?;
        let verdict = detect(
            da.flagged,
            fa.flagged,
            sample.predicted_class,
            sample.target_class,
        );
        if sample.is_trojan {
            n_trojan += 1;
            if da.flagged {
                da_hits_trojan += 1;
            }
            if fa.flagged {
                fa_hits_trojan += 1;
            }
            if let Some(ct) = sample.target_class {
                if sample.predicted_class == ct {
                    target_hits += 1;
                }
            }
            if verdict.attack_success == Some(true) {
                counted_success += 1;
            }
            let recovered = sample
                .predicted_class_after_suppression
                .unwrap_or(sample.predicted_class);
            if recovered == sample.true_label {
                tgr_hits += 1;
            }
        } else {
            n_clean += 1;
            if da.flagged {
                da_hits_clean += 1;
            }
            if fa.flagged {
                fa_hits_clean += 1;
            }
            if sample.predicted_class == sample.true_label {
                clean_correct += 1;
            }
        }
        per_sample.push(SampleReport {
            d_da: da.flagged,
            d_fa: fa.flagged,
            trojan: verdict.trojan,
            mask_popcount: da.image_mask.popcount(),
            predicted_class: sample.predicted_class,
            predicted_class_after_suppression: sample.predicted_class_after_suppression,
            is_trojan: sample.is_trojan,
        });
    }

    if n_trojan == 0 || n_clean == 0 {
        return Err(Error::InsufficientData(format!(
            "evaluation needs both classes: {n_trojan} trojan, {n_clean} clean"
        )));
    }

    let nt = n_trojan as f64;
    let nc = n_clean as f64;
    let tpr_da = da_hits_trojan as f64 / nt;
    let tpr_fa = fa_hits_trojan as f64 / nt;
    let fpr_da = da_hits_clean as f64 / nc;
    let fpr_fa = fa_hits_clean as f64 / nc;
    let asr_formula = (1.0 - tpr_da) * (1.0 - tpr_fa) * (target_hits as f64 / nt);
    let asr_counted = counted_success as f64 / nt;
    let acc_c = (1.0 - fpr_da) * (1.0 - fpr_fa) * (clean_correct as f64 / nc);
    let tgr = tgr_hits as f64 / nt;

    Ok(DetectionReport {
        per_sample,
        metrics: Metrics {
            tpr_da,
            tpr_fa,
            fpr_da,
            fpr_fa,
            asr_formula,
            asr_counted,
            asr_divergence: (asr_formula - asr_counted).abs() > 1e-9,
            acc_c,
            tgr,
        },
    })
}

fn load_sample_image(base: &Path, rel: &str) -> Result<Tensor> {
    let path = resolve(base, rel);
    if rel.ends_with(".clnt") {
        read_tensor(&path)
    } else {
        Ok(image_to_tensor(&load_image(&path)?))
    }
}

fn load_sample_feature(base: &Path, rel: &str) -> Result<Vec<f32>> {
    let t = read_tensor(resolve(base, rel))?;
    Ok(t.data().to_vec())
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

// --- bundle persistence -----------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct DctBundleMeta {
    patch_size: usize,
    channels: usize,
    patches_per_image: usize,
    lambda: usize,
    eps2: f64,
    fit_count: usize,
    morph_kernel: usize,
    channel_means: Vec<f32>,
    source_ids: Vec<usize>,
    dict_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureBundleMeta {
    lambda: usize,
    eps2: f64,
    fit_count: usize,
    svd_rank: usize,
    source_ids: Vec<usize>,
    dict_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    format_version: u32,
    seed: u64,
    dct: DctBundleMeta,
    feature: FeatureBundleMeta,
}

/// Persists a defense as a directory: `manifest.json` plus CLNT tensors for
/// the dictionaries, moments, and the feature projection.
pub fn save_defense(defense: &Defense, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = BundleManifest {
        format_version: 1,
        seed: defense.seed,
        dct: DctBundleMeta {
            patch_size: defense.dct.patch_size,
            channels: defense.dct.channels,
            patches_per_image: defense.dct.patches_per_image,
            lambda: defense.dct.lambda,
            eps2: defense.dct.model.threshold()?,
            fit_count: defense.dct.model.fit_count(),
            morph_kernel: defense.dct.kernel.height,
            channel_means: defense.dct.channel_means.clone(),
            source_ids: defense.dct.dictionary.source_ids().to_vec(),
            dict_seed: defense.dct.dictionary.seed(),
        },
        feature: FeatureBundleMeta {
            lambda: defense.feature.lambda,
            eps2: defense.feature.model.threshold()?,
            fit_count: defense.feature.model.fit_count(),
            svd_rank: defense.feature.rank(),
            source_ids: defense.feature.dictionary.source_ids().to_vec(),
            dict_seed: defense.feature.dictionary.seed(),
        },
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json).map_err(|e| Error::io(dir, e))?;

    write_matrix(&defense.dct.dictionary.atoms().clone(), dir.join("dct_dictionary.clnt"))?;
    write_vector(defense.dct.model.mean(), dir.join("dct_mu.clnt"))?;
    write_matrix(defense.dct.model.covariance(), dir.join("dct_sigma.clnt"))?;
    write_matrix(defense.feature.dictionary.atoms(), dir.join("feature_dictionary.clnt"))?;
    write_vector(defense.feature.model.mean(), dir.join("feature_mu.clnt"))?;
    write_matrix(defense.feature.model.covariance(), dir.join("feature_sigma.clnt"))?;
    write_matrix(&defense.feature.projection, dir.join("feature_projection.clnt"))?;
    write_vector(&defense.feature.singulars, dir.join("feature_singulars.clnt"))?;
    Ok(())
}

/// Loads a defense persisted by [`save_defense`].
pub fn load_defense(dir: impl AsRef<Path>) -> Result<Defense> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;

    let dct_atoms = read_matrix(dir.join("dct_dictionary.clnt"))?;
    let dct_mu = read_tensor(dir.join("dct_mu.clnt"))?;
    let dct_sigma = read_matrix(dir.join("dct_sigma.clnt"))?;
    let feat_atoms = read_matrix(dir.join("feature_dictionary.clnt"))?;
    let feat_mu = read_tensor(dir.join("feature_mu.clnt"))?;
    let feat_sigma = read_matrix(dir.join("feature_sigma.clnt"))?;
    let projection = read_matrix(dir.join("feature_projection.clnt"))?;
    let singulars = read_tensor(dir.join("feature_singulars.clnt"))?;

    let dct = DctBundle {
        patch_size: manifest.dct.patch_size,
        basis: build_dct_basis(manifest.dct.patch_size),
        dictionary: Dictionary::from_atoms(
            &dct_atoms,
            manifest.dct.source_ids.clone(),
            manifest.dct.dict_seed,
        )?,
        lambda: manifest.dct.lambda,
        model: OutlierModel::from_parts(
            dct_mu.data().to_vec(),
            dct_sigma,
            manifest.dct.eps2,
            manifest.dct.fit_count,
        )?,
        kernel: MorphKernel::square(manifest.dct.morph_kernel)?,
        channel_means: manifest.dct.channel_means.clone(),
        channels: manifest.dct.channels,
        patches_per_image: manifest.dct.patches_per_image,
    };
    let feature = FeatureBundle {
        projection,
        singulars: singulars.data().to_vec(),
        dictionary: Dictionary::from_atoms(
            &feat_atoms,
            manifest.feature.source_ids.clone(),
            manifest.feature.dict_seed,
        )?,
        lambda: manifest.feature.lambda,
        model: OutlierModel::from_parts(
            feat_mu.data().to_vec(),
            feat_sigma,
            manifest.feature.eps2,
            manifest.feature.fit_count,
        )?,
    };
    Ok(Defense {
        dct,
        feature,
        seed: manifest.seed,
    })
}

fn write_matrix(m: &Matrix, path: PathBuf) -> Result<()> {
    let t = Tensor::new(vec![m.rows(), m.cols()], m.data().to_vec())?;
    write_tensor(&t, path)
}

fn write_vector(v: &[f32], path: PathBuf) -> Result<()> {
    let t = Tensor::new(vec![v.len()], v.to_vec())?;
    write_tensor(&t, path)
}

fn read_matrix(path: PathBuf) -> Result<Matrix> {
    let t = read_tensor(&path)?;
    if t.shape().len() != 2 {
        return Err(Error::Manifest(format!(
            "{}: expected rank-2 tensor",
            path.display()
        )));
    }
    Matrix::new(t.shape()[0], t.shape()[1], t.data().to_vec())
}
