//! Outlier detection over reconstruction-error vectors: empirical moments,
//! Mahalanobis scoring, a distribution-free threshold from the multivariate
//! Chebyshev inequality, threshold tuning from a target false-positive rate,
//! and binary-mask morphology.

use crate::dct::BinaryMask;
use crate::error::{Error, Result};
use crate::linalg::{default_ridge, mvm, sym_inverse, Matrix, MvmPlan};

/// Empirical mean/covariance of benign error vectors with the squared
/// distance threshold.
#[derive(Debug, Clone)]
pub struct OutlierModel {
    mean: Vec<f32>,
    covariance: Matrix,
    precision: Matrix,
    ridge: f64,
    eps2: Option<f64>,
    fit_count: usize,
}

impl OutlierModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn fit_count(&self) -> usize {
        self.fit_count
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn set_threshold(&mut self, eps2: f64) -> Result<()> {
        if eps2 <= 0.0 {
            return Err(Error::Config("threshold eps2 must be > 0".into()));
        }
        self.eps2 = Some(eps2);
        Ok(())
    }

    pub fn threshold(&self) -> Result<f64> {
        self.eps2
            .ok_or_else(|| Error::Config("outlier model has no threshold set".into()))
    }

    /// Rebuilds a model from persisted moments.
    pub fn from_parts(mean: Vec<f32>, covariance: Matrix, eps2: f64, fit_count: usize) -> Result<Self> {
        let ridge = default_ridge(&covariance);
        let precision = sym_inverse(&covariance, ridge)?;
        let mut model = OutlierModel {
            mean,
            covariance,
            precision,
            ridge,
            eps2: None,
            fit_count,
        };
        model.set_threshold(eps2)?;
        Ok(model)
    }
}

/// All-ones structuring element with odd extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MorphKernel {
    pub height: usize,
    pub width: usize,
}

impl MorphKernel {
    pub fn square(k: usize) -> Result<Self> {
        MorphKernel::new(k, k)
    }

    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 1 || width < 1 || height % 2 == 0 || width % 2 == 0 {
            return Err(Error::Config(format!(
                "morphology kernel extents must be odd and >= 1, got {height}x{width}"
            )));
        }
        Ok(MorphKernel { height, width })
    }
}

/// Fits mean and covariance (1/(N-1) normalization) over the rows of `r`
/// (N x d). The precision matrix uses the default trace-scaled ridge. The
/// threshold is left unset.
pub fn fit_moments(r: &Matrix) -> Result<OutlierModel> {
    let (n, d) = (r.rows(), r.cols());
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "moment fitting needs N >= 2, got {n}"
        )));
    }
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += r.get(i, j) as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut acc = 0.0f64;
            for i in 0..n {
                acc += (r.get(i, a) as f64 - mean[a]) * (r.get(i, b) as f64 - mean[b]);
            }
            let v = (acc / (n - 1) as f64) as f32;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    let ridge = default_ridge(&cov);
    let precision = sym_inverse(&cov, ridge)?;
    Ok(OutlierModel {
        mean: mean.iter().map(|&m| m as f32).collect(),
        covariance: cov,
        precision,
        ridge,
        eps2: None,
        fit_count: n,
    })
}

/// Squared Mahalanobis distance `(x - mu) P (x - mu)^T` with the fitted
/// precision P; clamped at zero against rounding.
pub fn mahalanobis(model: &OutlierModel, x: &[f32]) -> Result<f64> {
    let d = model.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            context: "mahalanobis input dimension",
            expected: d,
            got: x.len(),
        });
    }
    let centered: Vec<f32> = x.iter().zip(&model.mean).map(|(a, b)| a - b).collect();
    let y = mvm(&model.precision, &centered, &MvmPlan::default())?;
    let dist: f64 = centered.iter().zip(&y).map(|(a, b)| *a as f64 * *b as f64).sum();
    Ok(dist.max(0.0))
}

/// Distribution-free tail bound: `min{1, d (N^2 - 1 + N eps2) / (N^2 eps2)}`.
pub fn chebyshev_bound(d: usize, n: u64, eps2: f64) -> f64 {
    let d = d as f64;
    let n = n as f64;
    (d * (n * n - 1.0 + n * eps2) / (n * n * eps2)).min(1.0)
}

/// Smallest squared threshold whose image-level false-positive bound
/// `1 - (1 - d/eps2)^{K^2}` stays at or below `target_fpr`:
/// `eps2 = d / (1 - (1 - target_fpr)^{1/K^2})`.
pub fn tune_epsilon(d: usize, patches_per_image: usize, target_fpr: f64) -> Result<f64> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::Config(format!(
            "target_fpr must be in (0,1), got {target_fpr}"
        )));
    }
    if patches_per_image < 1 {
        return Err(Error::Config("patches_per_image must be >= 1".into()));
    }
    let per_patch = 1.0 - (1.0 - target_fpr).powf(1.0 / patches_per_image as f64);
    Ok(d as f64 / per_patch)
}

/// Image-level false-positive bound for a given per-patch dimension and
/// threshold.
pub fn image_fpr_bound(d: usize, patches_per_image: usize, eps2: f64) -> f64 {
    let per_patch = (d as f64 / eps2).min(1.0);
    1.0 - (1.0 - per_patch).powi(patches_per_image as i32)
}

/// Thresholds each row of `r` (K^2 x d) at the model's eps2; the boundary
/// counts as an outlier. Returns a patch-grid mask of the given dimensions.
pub fn classify_patches(
    model: &OutlierModel,
    r: &Matrix,
    grid_h: usize,
    grid_w: usize,
) -> Result<BinaryMask> {
    if r.rows() != grid_h * grid_w {
        return Err(Error::DimensionMismatch {
            context: "classify_patches row count",
            expected: grid_h * grid_w,
            got: r.rows(),
        });
    }
    let eps2 = model.threshold()?;
    let mut mask = BinaryMask::zeros(grid_h, grid_w);
    for y in 0..grid_h {
        for x in 0..grid_w {
            let dist = mahalanobis(model, r.row(y * grid_w + x))?;
            if dist >= eps2 {
                mask.set(y, x, true);
            }
        }
    }
    Ok(mask)
}

/// Binary erosion with zero-padded borders: output bit set iff every bit
/// under the window is set.
pub fn erode(mask: &BinaryMask, k: &MorphKernel) -> BinaryMask {
    morph(mask, k, true)
}

/// Binary dilation with zero-padded borders: output bit set iff any bit
/// under the window is set.
pub fn dilate(mask: &BinaryMask, k: &MorphKernel) -> BinaryMask {
    morph(mask, k, false)
}

/// Morphological opening: erosion then dilation. Removes small isolated
/// regions while keeping dense ones.
pub fn refine_mask(mask: &BinaryMask, k: &MorphKernel) -> BinaryMask {
    dilate(&erode(mask, k), k)
}

fn morph(mask: &BinaryMask, k: &MorphKernel, all: bool) -> BinaryMask {
    let (h, w) = (mask.height, mask.width);
    let (rh, rw) = (k.height as isize / 2, k.width as isize / 2);
    let mut out = BinaryMask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = all;
            'window: for dy in -rh..=rh {
                for dx in -rw..=rw {
                    let yy = y as isize + dy;
                    let xx = x as isize + dx;
                    let bit = if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        false
                    } else {
                        mask.get(yy as usize, xx as usize)
                    };
                    if all != bit {
                        acc = bit;
                        break 'window;
                    }
                }
            }
            out.set(y, x, acc);
        }
    }
    out
}
