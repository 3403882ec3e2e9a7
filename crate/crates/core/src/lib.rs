//! Non-neural stages of a pulmonary-artery CT segmentation pipeline.
//!
//! * [`nifti`]: NIfTI-1 volume I/O, plain or gzip-compressed.
//! * [`volume_ops`]: HU clipping, slice cropping, augmentation, projections.
//! * [`patching`]: patch grids and overlap-averaged stitching.
//! * [`ensemble`]: dice-proportional weights and thresholded weighted fusion.
//! * [`morphology`]: connected components, distance transform, thinning,
//!   main-trunk / branch decomposition.
//! * [`metrics`]: dice and multi-level dice evaluation.
//! * [`synth`]: synthetic vessel phantoms and mock model predictions.
//! * [`cli`]: the `pulmofuse` command line.

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod morphology;
pub mod nifti;
pub mod patching;
pub mod synth;
pub mod volume;
pub mod volume_ops;

pub use error::{Error, Result};
pub use volume::{Dims, ElementKind, Volume, VoxelData};
