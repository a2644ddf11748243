//! Blood-smear white-cell classification pipeline.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`dataset`]: ingest class-per-directory trees, merge source classes into
//!   `Normal`/`Cancer`, validate counts and build stratified splits.
//! - [`segmentation`]: HSV thresholding, mask morphology and background removal.
//! - [`augmentation`]: seeded geometric transforms, mosaic, random erasing and
//!   RandAugment.
//! - [`training`]: pluggable classifier backends, a built-in reference CNN and
//!   the AdamW fine-tuning loop.
//! - [`metrics`]: confusion counts, accuracy / precision / recall / F1 /
//!   specificity and confusion matrices.
//! - [`pipeline`]: configuration, on-disk stage orchestration and report
//!   artifacts used by the `blastscan` binary.

pub mod augmentation;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod training;
mod util;

pub use error::{Error, Result};

/// Version string recorded in manifests and run metadata.
pub const TOOL_VERSION: &str = concat!("blastscan ", env!("CARGO_PKG_VERSION"));
