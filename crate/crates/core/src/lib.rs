//! Post-network stages for multi-person pose estimation in crowded video.
//!
//! The crate starts from detector boxes and per-joint heatmaps and covers
//! multi-scale heatmap fusion, crowd-aware box and pose suppression,
//! pyramidal Lucas-Kanade flow, temporal pose smoothing, track association
//! and AP / miss-rate evaluation.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod config;
pub mod detection;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod render;
pub mod smoothing;
pub mod synth;
pub mod tracking;

pub use detection::{iou, nms, set_nms, weighted_box_fusion, DetectionBox};
pub use error::{Error, Result};
pub use geometry::AffineTransform;
pub use heatmap::{decode_keypoints, flip_heatmap, fuse_heatmaps, Heatmap};
pub use pose::{oks, pose_nms, Keypoint, OksParams, Pose, Skeleton};
pub use config::PipelineConfig;
pub use pipeline::run_pipeline;
pub use smoothing::{smooth_video, temporal_smooth, SmoothingParams};
