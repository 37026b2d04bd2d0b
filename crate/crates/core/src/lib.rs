//! Cascades of pixel-intensity-comparison decision trees for sliding-window
//! object detection.
//!
//! The pipeline is split the same way a detector is built and used:
//!
//! - [`imgcore`]: 8-bit gray images, square windows, fixed-point test
//!   coordinates and rotation look-up tables.
//! - [`tree`]: regression trees whose internal nodes compare two pixels.
//! - [`cascade`]: GentleBoost stages, threshold calibration, hard-negative
//!   mining and cascaded classification.
//! - [`scanner`] and [`cluster`]: multi-scale, multi-orientation scanning and
//!   grouping of raw detections.
//! - [`model_io`]: the `.pct` binary model format.
//! - [`dataset`] and [`eval`]: annotations, augmentation, synthetic corpora,
//!   ROC curves, noise sweeps and timing.

pub mod cascade;
pub mod cluster;
pub mod dataset;
pub mod eval;
pub mod imgcore;
pub mod model_io;
pub mod rng;
pub mod scanner;
pub mod tree;

pub use cascade::{Cascade, Outcome, Stage, StageConfig};
pub use cluster::{cluster_detections, FinalDetection};
pub use imgcore::{GrayImage, NormLoc, OrientationTable, Window};
pub use scanner::{Detector, RawDetection, ScanParams};
pub use tree::{CompTest, DecisionTree, Sample, TreeParams};
