//! Poses, skeletons, OKS similarity and pose-level NMS.

use serde::{Deserialize, Serialize};

use crate::detection::{score_order, DetectionBox};
use crate::error::{Error, Result};

pub const DEFAULT_POSE_NMS_OKS: f64 = 0.7;
pub const DEFAULT_MIN_INSTANCE_SCORE: f64 = 0.05;
pub const DEFAULT_SIGMA: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl Keypoint {
    /// Score is clamped into `[0, 1]`.
    pub fn new(x: f64, y: f64, score: f64) -> Self {
        Keypoint {
            x,
            y,
            score: clamp_score(score),
        }
    }
}

pub(crate) fn clamp_score(s: f64) -> f64 {
    if s.is_nan() {
        0.0
    } else {
        s.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub keypoints: Vec<Keypoint>,
    pub score: f64,
    pub track_id: Option<u64>,
    pub frame: Option<usize>,
}

impl Pose {
    pub fn new(keypoints: Vec<Keypoint>, score: f64) -> Self {
        Pose {
            keypoints,
            score: clamp_score(score),
            track_id: None,
            frame: None,
        }
    }

    /// Instance score is the mean joint score.
    pub fn from_keypoints(keypoints: Vec<Keypoint>) -> Self {
        let score = if keypoints.is_empty() {
            0.0
        } else {
            keypoints.iter().map(|k| k.score).sum::<f64>() / keypoints.len() as f64
        };
        Pose::new(keypoints, score)
    }

    pub fn with_frame(mut self, frame: usize) -> Self {
        self.frame = Some(frame);
        self
    }

    pub fn with_track(mut self, id: u64) -> Self {
        self.track_id = Some(id);
        self
    }

    pub fn joints(&self) -> usize {
        self.keypoints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .keypoints
            .iter()
            .any(|k| !k.x.is_finite() || !k.y.is_finite())
        {
            return Err(Error::invalid("pose has non-finite joint coordinates"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!("instance score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }

    /// Tight box around all joints, `(x0, y0, x1, y1)`.
    pub fn keypoint_bounds(&self) -> (f64, f64, f64, f64) {
        self.keypoints.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), k| (x0.min(k.x), y0.min(k.y), x1.max(k.x), y1.max(k.y)),
        )
    }

    /// Object area used for OKS: the keypoint bounding box area, floored at 1 px².
    pub fn area(&self) -> f64 {
        if self.keypoints.is_empty() {
            return 1.0;
        }
        let (x0, y0, x1, y1) = self.keypoint_bounds();
        ((x1 - x0) * (y1 - y0)).max(1.0)
    }

    /// Box around the joints, padded so it is never degenerate.
    pub fn bounding_box(&self) -> DetectionBox {
        let (x0, y0, x1, y1) = self.keypoint_bounds();
        let (x1, y1) = (x1.max(x0 + 1.0), y1.max(y0 + 1.0));
        DetectionBox {
            x0,
            y0,
            x1,
            y1,
            score: self.score,
            ..Default::default()
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose {
        let mut p = self.clone();
        for k in &mut p.keypoints {
            k.x += dx;
            k.y += dy;
        }
        p
    }
}

/// Joint layout shared by every stage of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub names: Vec<String>,
    /// Left/right channel pairs swapped by horizontal flips.
    pub flip_pairs: Vec<(usize, usize)>,
    /// Limb edges used for drawing.
    pub edges: Vec<(usize, usize)>,
}

impl Skeleton {
    /// 14-joint layout used by default. The ordering is a convention of this
    /// toolkit; datasets with another ordering configure their own skeleton.
    pub fn default_14() -> Self {
        let names = [
            "right_ankle",
            "right_knee",
            "right_hip",
            "left_hip",
            "left_knee",
            "left_ankle",
            "right_wrist",
            "right_elbow",
            "right_shoulder",
            "left_shoulder",
            "left_elbow",
            "left_wrist",
            "neck",
            "head_top",
        ];
        Skeleton {
            names: names.iter().map(|s| s.to_string()).collect(),
            flip_pairs: vec![(0, 5), (1, 4), (2, 3), (6, 11), (7, 10), (8, 9)],
            edges: vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (6, 7),
                (7, 8),
                (8, 12),
                (9, 12),
                (9, 10),
                (10, 11),
                (12, 13),
                (2, 8),
                (3, 9),
            ],
        }
    }

    pub fn joints(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joints();
        if j == 0 {
            return Err(Error::invalid("skeleton has no joints"));
        }
        let mut seen = vec![false; j];
        for &(a, b) in &self.flip_pairs {
            for idx in [a, b] {
                if idx >= j {
                    return Err(Error::invalid(format!("flip pair index {idx} out of range")));
                }
                if seen[idx] {
                    return Err(Error::invalid(format!("joint {idx} appears in two flip pairs")));
                }
                seen[idx] = true;
            }
        }
        if let Some(&(a, b)) = self.edges.iter().find(|&&(a, b)| a >= j || b >= j) {
            return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
        }
        Ok(())
    }
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton::default_14()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OksParams {
    pub sigmas: Vec<f64>,
    /// Joints of the reference pose scoring below this are ignored.
    pub visibility_threshold: f64,
}

impl OksParams {
    pub fn uniform(joints: usize, sigma: f64) -> Self {
        OksParams {
            sigmas: vec![sigma; joints],
            visibility_threshold: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("OKS sigmas must be positive"));
        }
        Ok(())
    }
}

/// Object keypoint similarity of `b` against reference pose `a`.
///
/// Mean over the joints of `a` scoring at least the visibility threshold of
/// `exp(−d² / (2·area·(2σ)²))`; 0 when no joint qualifies.
pub fn oks(a: &Pose, b: &Pose, area: f64, params: &OksParams) -> Result<f64> {
    if a.joints() != b.joints() || a.joints() != params.sigmas.len() {
        return Err(Error::invalid(format!(
            "joint count mismatch: {} vs {} with {} sigmas",
            a.joints(),
            b.joints(),
            params.sigmas.len()
        )));
    }
    if !(area > 0.0) {
        return Err(Error::invalid(format!("OKS area must be positive, got {area}")));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((ka, kb), sigma) in a.keypoints.iter().zip(&b.keypoints).zip(&params.sigmas) {
        if ka.score < params.visibility_threshold {
            continue;
        }
        let d2 = (ka.x - kb.x).powi(2) + (ka.y - kb.y).powi(2);
        let k = 2.0 * sigma;
        sum += (-d2 / (2.0 * area * k * k)).exp();
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Drops poses under `min_instance_score`, then greedily suppresses any pose
/// whose OKS against an already kept, higher-scoring pose exceeds
/// `oks_threshold`. The kept pose's keypoint area normalizes the OKS.
pub fn pose_nms(
    poses: &[Pose],
    oks_threshold: f64,
    min_instance_score: f64,
    params: &OksParams,
) -> Result<Vec<Pose>> {
    Ok(pose_nms_keep(poses, oks_threshold, min_instance_score, params)?
        .into_iter()
        .map(|i| poses[i].clone())
        .collect())
}

/// Indices kept by [`pose_nms`], in output order.
pub fn pose_nms_keep(
    poses: &[Pose],
    oks_threshold: f64,
    min_instance_score: f64,
    params: &OksParams,
) -> Result<Vec<usize>> {
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(poses, |p| p.score) {
        let cand = &poses[i];
        if cand.score < min_instance_score {
            continue;
        }
        let mut suppressed = false;
        for &k in &kept {
            if oks(&poses[k], cand, poses[k].area(), params)? > oks_threshold {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept)
}
