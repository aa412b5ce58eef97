//! Detector-agnostic building blocks for cluster-guided tiny-object
//! detection.
//!
//! * [`geometry`]: boxes, IoU, Gaussian Wasserstein distance and the losses
//!   built on it, with analytical gradients.
//! * [`heatmap`]: center heatmaps, Gaussian smoothing, peak decoding,
//!   binarization.
//! * [`lsm`]: dense-region selection on a binarized heatmap.
//! * [`fusion`]: mapping crop detections back and merging them with the
//!   global pass.
//! * [`evaluation`]: COCO-style AP.
//! * [`synthetic`]: seeded clustered scenes and a pseudo-detector for
//!   end-to-end checks.
//! * [`io`]: annotation, JSON and binary heatmap formats.

pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod lsm;
pub mod synthetic;

pub use error::{FormatError, GeometryError, HeatmapError, LsmError, SyntheticError};
pub use evaluation::{evaluate, EvalParams, EvalReport, GroundTruth, ImageRecords};
pub use fusion::{fuse, to_global, CropTransform, Detection};
pub use geometry::{BBox, GaussianBox, LossConfig};
pub use heatmap::{BinaryMask, Heatmap, Peak};
pub use lsm::{ClusterRegion, LsmConfig};
pub use synthetic::{PipelineMode, PseudoDetectorConfig, SceneConfig};
