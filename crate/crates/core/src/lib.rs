//! From-scratch tiny-YOLO object detection.
//!
//! The crate covers the full loop: model-graph parsing and weights I/O
//! ([`netdef`]), forward/backward layer math ([`layers`]), box decoding and
//! non-maximum suppression ([`postprocess`]), dataset handling and synthetic
//! scene generation ([`dataset`]), detection-quality metrics ([`metrics`]),
//! and training with grid search ([`trainer`]).
//!
//! All numeric kernels accumulate in fixed order, so every entry point is
//! bit-reproducible given the same inputs and seeds.

pub mod dataset;
pub mod detector;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod netdef;
pub mod postprocess;
pub mod presets;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
