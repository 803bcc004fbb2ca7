//! Unsupervised trojan-trigger detection for image classifiers.
//!
//! The defense pairs two analyzers trained only on benign data: a DCT-domain
//! analyzer that sparse-codes per-patch frequency coefficients and flags
//! patches whose recovery residual is a Mahalanobis outlier, and a latent
//! analyzer that does the same for dimensionality-reduced feature vectors.
//! A sample is reported as trojaned when either analyzer fires; flagged
//! image regions are additionally suppressed so the classifier can be
//! re-queried on a cleaned input.

pub mod config;
pub mod dct;
pub mod dict;
pub mod error;
pub mod image;
pub mod linalg;
pub mod outlier;
pub mod pipeline;
pub mod sparse;
pub mod tensor;

pub use config::{AnalyzerParams, DefenseConfig};
pub use dct::{BinaryMask, DctBasis, PatchGrid};
pub use dict::{Dictionary, DictLearnConfig};
pub use error::{Error, Result};
pub use image::ImageU8;
pub use linalg::{Matrix, MvmPlan};
pub use outlier::{MorphKernel, OutlierModel};
pub use pipeline::{
    BuildTimings, DatasetManifest, Defense, DetectionReport, Metrics, SampleRecord, Verdict,
};
pub use sparse::SparseCode;
pub use tensor::Tensor;
