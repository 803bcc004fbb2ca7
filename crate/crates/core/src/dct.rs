//! Frequency-domain front end: per-patch 2-D DCT with orthonormal scaling,
//! zigzag coefficient ordering, patch-grid masks, and trigger suppression.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{dot_fixed_tree, Matrix};
use crate::tensor::Tensor;

/// Flattened 2-D cosine basis for P x P patches. Row (u*P + v) holds the
/// orthonormally scaled basis function over pixel coordinates (i, j).
#[derive(Debug, Clone)]
pub struct DctBasis {
    p: usize,
    basis: Matrix,
}

impl DctBasis {
    pub fn patch_size(&self) -> usize {
        self.p
    }

    pub fn matrix(&self) -> &Matrix {
        &self.basis
    }
}

/// Builds the orthonormal type-II DCT basis: entry ((u,v),(i,j)) is
/// `alpha(u) alpha(v) cos(u pi (i+1/2)/P) cos(v pi (j+1/2)/P)` with
/// `alpha(0) = sqrt(1/P)` and `alpha(k>0) = sqrt(2/P)`.
pub fn build_dct_basis(p: usize) -> DctBasis {
    assert!(p >= 1, "patch size must be >= 1");
    let n = p * p;
    let mut basis = Matrix::zeros(n, n);
    let alpha = |k: usize| -> f64 {
        if k == 0 {
            (1.0 / p as f64).sqrt()
        } else {
            (2.0 / p as f64).sqrt()
        }
    };
    for u in 0..p {
        for v in 0..p {
            let scale = alpha(u) * alpha(v);
            for i in 0..p {
                for j in 0..p {
                    let ci = (u as f64 * PI / p as f64) * (i as f64 + 0.5);
                    let cj = (v as f64 * PI / p as f64) * (j as f64 + 0.5);
                    basis.set(u * p + v, i * p + j, (scale * ci.cos() * cj.cos()) as f32);
                }
            }
        }
    }
    DctBasis { p, basis }
}

/// JPEG-style zigzag traversal of a P x P grid: anti-diagonals starting at
/// (0,0), alternating direction. Returns the linear index (i*P + j) of each
/// visited cell.
pub fn zigzag_order(p: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(p * p);
    for d in 0..(2 * p - 1) {
        let lo = d.saturating_sub(p - 1);
        let hi = d.min(p - 1);
        if d % 2 == 0 {
            // up-right: start at the bottom-left cell of the diagonal
            for i in (lo..=hi).rev() {
                order.push(i * p + (d - i));
            }
        } else {
            for i in lo..=hi {
                order.push(i * p + (d - i));
            }
        }
    }
    order
}

/// Per-patch DCT coefficient vectors for one image. Row k of `coeffs` holds
/// the channel-major, zigzag-ordered coefficients of patch k (row-major
/// patch order).
#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub n_patches_y: usize,
    pub n_patches_x: usize,
    pub channels: usize,
    pub patch_size: usize,
    /// (n_patches_y * n_patches_x) x (channels * P^2)
    pub coeffs: Matrix,
}

impl PatchGrid {
    pub fn n_patches(&self) -> usize {
        self.n_patches_y * self.n_patches_x
    }

    pub fn dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }
}

/// Patch-level or pixel-level binary mask; 1 marks a suspected trigger
/// region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                found: bits.len(),
            });
        }
        Ok(BinaryMask {
            height,
            width,
            bits,
        })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Applies the patch DCT to a planar [C,H,W] image tensor. The image is
/// cropped (bottom/right) to multiples of P; per-channel coefficients are
/// zigzag-ordered and concatenated channel-major.
pub fn extract_dct(img: &Tensor, basis: &DctBasis) -> Result<PatchGrid> {
    let shape = img.shape();
    if shape.len() != 3 {
        return Err(Error::DimensionMismatch {
            context: "extract_dct expects rank-3 [C,H,W]",
            expected: 3,
            got: shape.len(),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let p = basis.p;
    if h < p || w < p {
        return Err(Error::InsufficientData(format!(
            "image {h}x{w} smaller than one {p}x{p} patch"
        )));
    }
    let ny = h / p;
    let nx = w / p;
    let zigzag = zigzag_order(p);
    let dim = c * p * p;
    let data = img.data();
    let mut coeffs = Matrix::zeros(ny * nx, dim);
    let mut patch = vec![0.0f32; p * p];
    let mut raw = vec![0.0f32; p * p];
    for py in 0..ny {
        for px in 0..nx {
            let patch_idx = py * nx + px;
            for ch in 0..c {
                let plane = &data[ch * h * w..(ch + 1) * h * w];
                for i in 0..p {
                    let row = (py * p + i) * w + px * p;
                    patch[i * p..(i + 1) * p].copy_from_slice(&plane[row..row + p]);
                }
                for (k, value) in raw.iter_mut().enumerate() {
                    *value = dot_fixed_tree(basis.basis.row(k), &patch) as f32;
                }
                for (k, &src) in zigzag.iter().enumerate() {
                    coeffs.set(patch_idx, ch * p * p + k, raw[src]);
                }
            }
        }
    }
    Ok(PatchGrid {
        n_patches_y: ny,
        n_patches_x: nx,
        channels: c,
        patch_size: p,
        coeffs,
    })
}

/// Inverse of [`extract_dct`] on the cropped region: undoes the zigzag and
/// applies the transposed (orthonormal) basis.
pub fn reconstruct_image(grid: &PatchGrid, basis: &DctBasis) -> Result<Tensor> {
    let p = grid.patch_size;
    if basis.p != p {
        return Err(Error::DimensionMismatch {
            context: "basis patch size",
            expected: p,
            got: basis.p,
        });
    }
    let (c, ny, nx) = (grid.channels, grid.n_patches_y, grid.n_patches_x);
    let (h, w) = (ny * p, nx * p);
    let zigzag = zigzag_order(p);
    let bt = basis.basis.transpose();
    let mut data = vec![0.0f32; c * h * w];
    let mut raw = vec![0.0f32; p * p];
    for py in 0..ny {
        for px in 0..nx {
            let row = grid.coeffs.row(py * nx + px);
            for ch in 0..c {
                for (k, &dst) in zigzag.iter().enumerate() {
                    raw[dst] = row[ch * p * p + k];
                }
                for i in 0..p {
                    for j in 0..p {
                        let v = dot_fixed_tree(bt.row(i * p + j), &raw) as f32;
                        data[ch * h * w + (py * p + i) * w + px * p + j] = v;
                    }
                }
            }
        }
    }
    Tensor::new(vec![c, h, w], data)
}

/// Nearest-neighbor upsampling of a patch-level mask: each bit becomes a
/// P x P pixel block.
pub fn upsample_mask(mask: &BinaryMask, p: usize) -> BinaryMask {
    let mut out = BinaryMask::zeros(mask.height * p, mask.width * p);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(y, x) {
                for dy in 0..p {
                    for dx in 0..p {
                        out.set(y * p + dy, x * p + dx, true);
                    }
                }
            }
        }
    }
    out
}

/// Replaces masked pixels with the per-channel mean of the unmasked pixels.
/// When an entire channel is masked, `fallback_means` (benign-corpus channel
/// means) fills the channel instead.
pub fn suppress(img: &Tensor, mask: &BinaryMask, fallback_means: Option<&[f32]>) -> Result<Tensor> {
    let shape = img.shape();
    if shape.len() != 3 {
        return Err(Error::DimensionMismatch {
            context: "suppress expects rank-3 [C,H,W]",
            expected: 3,
            got: shape.len(),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if mask.height != h || mask.width != w {
        return Err(Error::DimensionMismatch {
            context: "mask height",
            expected: h,
            got: mask.height,
        });
    }
    let mut out = img.data().to_vec();
    for ch in 0..c {
        let plane = &img.data()[ch * h * w..(ch + 1) * h * w];
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for y in 0..h {
            for x in 0..w {
                if !mask.get(y, x) {
                    sum += plane[y * w + x] as f64;
                    count += 1;
                }
            }
        }
        let fill = if count > 0 {
            (sum / count as f64) as f32
        } else {
            match fallback_means {
                Some(means) if ch < means.len() => means[ch],
                _ => {
                    return Err(Error::InsufficientData(
                        "all-ones mask and no fallback channel means".into(),
                    ))
                }
            }
        };
        for y in 0..h {
            for x in 0..w {
                if mask.get(y, x) {
                    out[ch * h * w + y * w + x] = fill;
                }
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}
