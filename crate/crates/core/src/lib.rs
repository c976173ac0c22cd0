//! Automated image analysis for two-phase liquid-phase-sintered microstructures.
//!
//! The pipeline binarizes a micrograph, removes salt-and-pepper noise with a
//! majority filter, separates necked particles by detecting concave binding
//! points on their chain-coded boundaries and joining matched pairs with
//! neck lines, and finally estimates stereological parameters (particle size,
//! binder fraction, tungsten-tungsten and tungsten-binder interface counts and
//! contiguity) by counting phase toggles along a mesh of test lines.
//!
//! [`synthgen`] renders synthetic microstructures with analytic ground truth
//! and is used by [`validate`] to score the pipeline.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binarize;
pub mod boundary;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod morphology;
mod par;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod stereology;
pub mod synthgen;
pub mod validate;

pub use error::{Error, Result};
pub use geometry::Point;
pub use pipeline::{analyze_gray, Analysis, PipelineConfig};
pub use raster::{BinaryRaster, GrayRaster, LabeledRaster};

/// Default pixel scale: a 2259 px wide field of view spanning 215 µm.
pub const DEFAULT_SCALE_UM_PER_PX: f64 = 215.0 / 2259.0;
