//! Defense configuration: flat `key=value` files with `#` comments.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-analyzer sparse-recovery and threshold settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnalyzerParams {
    /// Number of dictionary columns (m).
    pub dict_cols: usize,
    /// Sparsity level: OMP iteration count.
    pub lambda: usize,
    /// Explicit squared distance threshold; when absent it is tuned from
    /// `target_fpr`.
    pub eps2: Option<f64>,
}

/// Full offline-defense configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DefenseConfig {
    /// DCT patch size P; 4 or 8.
    pub patch_size: usize,
    pub dct: AnalyzerParams,
    pub feature: AnalyzerParams,
    /// Desired image-level false positive rate when eps2 is not given.
    pub target_fpr: Option<f64>,
    /// Fraction of spectral energy the feature projection must keep.
    pub svd_energy_fraction: f64,
    /// Structuring-element size (square, odd) for mask opening.
    pub morph_kernel: usize,
    /// Initial number of dictionary columns; defaults to max(1, m/20).
    pub dict_init_cols: Option<usize>,
    /// Columns appended per learning round.
    pub dict_growth: usize,
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            patch_size: 4,
            dct: AnalyzerParams {
                dict_cols: 1000,
                lambda: 5,
                eps2: None,
            },
            feature: AnalyzerParams {
                dict_cols: 420,
                lambda: 80,
                eps2: None,
            },
            target_fpr: Some(0.05),
            svd_energy_fraction: 0.90,
            morph_kernel: 3,
            dict_init_cols: None,
            dict_growth: 1,
            seed: 0,
        }
    }
}

impl DefenseConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }

        let mut cfg = DefenseConfig::default();
        for (key, value) in &map {
            let bad = |what: &str| Error::Config(format!("{key}: invalid {what}: {value}"));
            match key.as_str() {
                "patch_size" => cfg.patch_size = value.parse().map_err(|_| bad("integer"))?,
                "dct_dict_cols" => cfg.dct.dict_cols = value.parse().map_err(|_| bad("integer"))?,
                "dct_lambda" => cfg.dct.lambda = value.parse().map_err(|_| bad("integer"))?,
                "dct_eps2" => cfg.dct.eps2 = Some(value.parse().map_err(|_| bad("number"))?),
                "feature_dict_cols" => {
                    cfg.feature.dict_cols = value.parse().map_err(|_| bad("integer"))?
                }
                "feature_lambda" => {
                    cfg.feature.lambda = value.parse().map_err(|_| bad("integer"))?
                }
                "feature_eps2" => {
                    cfg.feature.eps2 = Some(value.parse().map_err(|_| bad("number"))?)
                }
                "target_fpr" => cfg.target_fpr = Some(value.parse().map_err(|_| bad("number"))?),
                "svd_energy_fraction" => {
                    cfg.svd_energy_fraction = value.parse().map_err(|_| bad("number"))?
                }
                "morph_kernel" => cfg.morph_kernel = value.parse().map_err(|_| bad("integer"))?,
                "dict_init_cols" => {
                    cfg.dict_init_cols = Some(value.parse().map_err(|_| bad("integer"))?)
                }
                "dict_growth" => cfg.dict_growth = value.parse().map_err(|_| bad("integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                _ => return Err(Error::Config(format!("unknown key: {key}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size != 4 && self.patch_size != 8 {
            return Err(Error::Config(format!(
                "patch_size must be 4 or 8, got {}",
                self.patch_size
            )));
        }
        for (name, p) in [("dct", &self.dct), ("feature", &self.feature)] {
            if p.lambda < 1 {
                return Err(Error::Config(format!("{name}_lambda must be >= 1")));
            }
            if p.dict_cols < 1 {
                return Err(Error::Config(format!("{name}_dict_cols must be >= 1")));
            }
            if let Some(e) = p.eps2 {
                if e <= 0.0 {
                    return Err(Error::Config(format!("{name}_eps2 must be > 0")));
                }
            }
        }
        if let Some(f) = self.target_fpr {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config("target_fpr must be in (0,1)".into()));
            }
        }
        if !(self.svd_energy_fraction > 0.0 && self.svd_energy_fraction <= 1.0) {
            return Err(Error::Config("svd_energy_fraction must be in (0,1]".into()));
        }
        if self.morph_kernel < 1 || self.morph_kernel % 2 == 0 {
            return Err(Error::Config("morph_kernel must be odd and >= 1".into()));
        }
        if self.dict_growth < 1 {
            return Err(Error::Config("dict_growth must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_values_with_comments() {
        let cfg = DefenseConfig::parse(
            "# gtsrb-like\npatch_size = 4\ndct_dict_cols = 400\ndct_lambda = 5\ndct_eps2 = 5e-4\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.patch_size, 4);
        assert_eq!(cfg.dct.dict_cols, 400);
        assert_eq!(cfg.dct.eps2, Some(5e-4));
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn rejects_bad_patch_size() {
        assert!(DefenseConfig::parse("patch_size = 5\n").is_err());
    }

    #[test]
    fn rejects_unknown_key() {
        assert!(DefenseConfig::parse("frobnicate = 1\n").is_err());
    }

    #[test]
    fn rejects_even_kernel() {
        assert!(DefenseConfig::parse("morph_kernel = 2\n").is_err());
    }
}
