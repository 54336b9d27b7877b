//! Gait representation pipeline over 2D pose sequences.
//!
//! The crate covers the full path from per-frame skeleton detections to
//! identity-discriminative embeddings:
//!
//! - [`skeleton`]: domain types and height/translation-invariant
//!   normalization of tracked pose sequences.
//! - [`tracking`]: SORT-style Kalman tracking of detections into tracklets.
//! - [`quality`]: admission filters (confidence, feet visibility, length,
//!   walking activity).
//! - [`augment`]: random 54-frame training views (pace, shuffle, squeeze,
//!   flip, mirror, dropout).
//! - [`model`]: a spatio-temporal graph-convolutional embedding network with
//!   a built-in reverse-mode gradient engine.
//! - [`supcon`]: supervised contrastive loss over labeled unit-norm
//!   embeddings.
//! - [`train`]: batch sampling, Adam optimization, retrieval evaluation and
//!   dataset statistics.
//! - [`synth`]: parametric synthetic walkers for end-to-end testing.
//!
//! All randomness flows from explicit seeds via [`rng::DetRng`]; every
//! pipeline stage is a deterministic function of its inputs.

pub mod assignment;
pub mod augment;
pub mod graph;
pub mod model;
pub mod quality;
pub mod rng;
pub mod skeleton;
pub mod supcon;
pub mod synth;
pub mod train;
pub mod tracking;

pub use augment::{make_views, AugmentConfig};
pub use quality::{run_filters, FilterConfig, FilterReport, RejectReason, Verdict};
pub use rng::DetRng;
pub use skeleton::{
    derived_joints, normalize_skeleton, normalize_tracklet, Keypoint, NormalizedSequence,
    Skeleton, Tracklet, NUM_JOINTS,
};
pub use tracking::{track_stream, BBox, Detection, TrackerConfig};
