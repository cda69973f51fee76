//! Iris recognition from eye images: preprocessing, segmentation, rubber-sheet
//! normalization, a 252-value texture feature pool, kernel-PCA reduction and a
//! two-hidden-layer MLP classifier, plus feature diagnostics.

pub mod analysis;
pub mod bundle;
pub mod classify;
pub mod config;
pub mod dataset;
pub mod edges;
pub mod error;
pub mod features;
pub mod fourier;
pub mod imaging;
pub mod linalg;
pub mod normalization;
pub mod pipeline;
pub mod preprocess;
pub mod reduce;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
