//! On-disk formats: heatmap tensors, JSON Lines records and frame images.

pub mod frames;
pub mod jsonl;
pub mod tensor;

pub use frames::{read_frame, read_frame_rgb, write_pgm, write_ppm, FrameDir};
pub use jsonl::{
    read_detections, read_poses, write_detections, write_poses, DetectionRecord, HeatmapRef, PoseFile, PoseRecord,
};
pub use tensor::{read_tensor, write_tensor, Tensor};
