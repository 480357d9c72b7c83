//! Toolkit for label-aligned hyperspectral and RGB image cubes.
//!
//! * [`cube`], [`io`], [`preprocess`], [`manifest`]: data model, file formats,
//!   white/dark calibration, l1 normalization and RGB rendering.
//! * [`augment`]: seedable batch augmentations, including Organ Transplantation.
//! * [`ood`]: isolation/removal dataset synthesis and occlusion filtering.
//! * [`metrics`]: per-class DSC and NSD.
//! * [`analysis`]: hierarchical aggregation, neighbourhood matrices, bootstrap ranking.
//! * [`commands`]: the subcommands behind the `geoshift` binary.
//! * [`toy`]: small synthetic datasets for examples and tests.

pub mod analysis;
pub mod augment;
pub mod commands;
pub mod cube;
pub mod error;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod ood;
pub mod preprocess;
pub mod toy;

pub use cube::{HsiCube, LabelMap, SegmentationMask, INVALID_LABEL};
pub use error::{Error, Result};
