//! Pipeline configuration: a single TOML document with a schema version.
//! Relative paths resolve against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::{DEFAULT_FUSION_IOU, DEFAULT_NMS_IOU};
use crate::error::{Error, Result};
use crate::heatmap::DEFAULT_SCALES;
use crate::metrics::{default_oks_thresholds, DEFAULT_MMR_POINTS};
use crate::pose::{OksParams, Skeleton, DEFAULT_MIN_INSTANCE_SCORE, DEFAULT_POSE_NMS_OKS, DEFAULT_SIGMA};
use crate::smoothing::VideoSmoothingParams;
use crate::tracking::AssociationParams;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Box fusion across models followed by (set) NMS.
    Detpost,
    /// Heatmap fusion and decoding.
    Fuse,
    Posenms,
    Track,
    Smooth,
    Eval,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Detpost => "detpost",
            Stage::Fuse => "fuse",
            Stage::Posenms => "posenms",
            Stage::Track => "track",
            Stage::Smooth => "smooth",
            Stage::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Kp,
    Det,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    pub scales: Vec<f64>,
    /// Target box aspect as `[width, height]`.
    pub aspect: [u32; 2],
    /// Network input crop as `[width, height]`.
    pub crop: [u32; 2],
    /// Shift un-flipped heatmaps by one cell to undo mirror misalignment.
    pub flip_shift: bool,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        HeatmapConfig {
            scales: DEFAULT_SCALES.to_vec(),
            aspect: [3, 4],
            crop: [192, 256],
            flip_shift: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub nms_iou: f64,
    pub fusion_iou: f64,
    /// Use Set NMS (same-proposal exemption) instead of plain NMS.
    pub set_nms: bool,
    /// Ensemble weight per model id; missing ids weigh 1.
    pub model_weights: Vec<f64>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            nms_iou: DEFAULT_NMS_IOU,
            fusion_iou: DEFAULT_FUSION_IOU,
            set_nms: true,
            model_weights: Vec::new(),
        }
    }
}

impl DetectionConfig {
    pub fn model_weight(&self, model_id: Option<i64>) -> f64 {
        model_id
            .and_then(|m| usize::try_from(m).ok())
            .and_then(|m| self.model_weights.get(m).copied())
            .unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseNmsConfig {
    pub oks_threshold: f64,
    pub min_score: f64,
    /// Per-joint falloff constants; uniform `sigma` when absent.
    pub sigmas: Option<Vec<f64>>,
    pub sigma: f64,
    pub visibility_threshold: f64,
}

impl Default for PoseNmsConfig {
    fn default() -> Self {
        PoseNmsConfig {
            oks_threshold: DEFAULT_POSE_NMS_OKS,
            min_score: DEFAULT_MIN_INSTANCE_SCORE,
            sigmas: None,
            sigma: DEFAULT_SIGMA,
            visibility_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub task: EvalTask,
    pub oks_thresholds: Vec<f64>,
    pub iou_threshold: f64,
    pub mmr_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            task: EvalTask::Kp,
            oks_thresholds: default_oks_thresholds(),
            iou_threshold: 0.5,
            mmr_points: DEFAULT_MMR_POINTS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw detections feeding `detpost` or `fuse`.
    pub detections: Option<PathBuf>,
    /// Predictions for runs that start after detection (poses or boxes).
    pub predictions: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    /// Per-video weights for `eval`, JSON `{video: weight}`.
    pub weights: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub skeleton: Skeleton,
    pub heatmap: HeatmapConfig,
    pub detection: DetectionConfig,
    pub pose_nms: PoseNmsConfig,
    pub tracking: AssociationParams,
    pub smoothing: VideoSmoothingParams,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            seed: 0,
            stages: vec![
                Stage::Detpost,
                Stage::Fuse,
                Stage::Posenms,
                Stage::Track,
                Stage::Smooth,
                Stage::Eval,
            ],
            skeleton: Skeleton::default_14(),
            heatmap: HeatmapConfig::default(),
            detection: DetectionConfig::default(),
            pose_nms: PoseNmsConfig::default(),
            tracking: AssociationParams::default(),
            smoothing: VideoSmoothingParams::default(),
            eval: EvalConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve_against(base);
        Ok(cfg)
    }

    pub fn oks_params(&self) -> OksParams {
        let j = self.skeleton.joints();
        OksParams {
            sigmas: self
                .pose_nms
                .sigmas
                .clone()
                .unwrap_or_else(|| vec![self.pose_nms.sigma; j]),
            visibility_threshold: self.pose_nms.visibility_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.skeleton.validate()?;
        let h = &self.heatmap;
        if h.scales.is_empty() || h.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("scale factors must be positive"));
        }
        if h.aspect.contains(&0) || h.crop.contains(&0) {
            return Err(Error::invalid("aspect and crop sizes must be positive"));
        }
        let unit = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} {v} outside [0, 1]")))
            }
        };
        unit(self.detection.nms_iou, "nms_iou")?;
        unit(self.detection.fusion_iou, "fusion_iou")?;
        if self.detection.model_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("model weights must be positive"));
        }
        unit(self.pose_nms.oks_threshold, "oks_threshold")?;
        unit(self.pose_nms.min_score, "min_score")?;
        let oks = self.oks_params();
        oks.validate()?;
        if oks.sigmas.len() != self.skeleton.joints() {
            return Err(Error::invalid(format!(
                "{} sigmas for a {}-joint skeleton",
                oks.sigmas.len(),
                self.skeleton.joints()
            )));
        }
        self.tracking.validate()?;
        self.smoothing.smoothing.validate()?;
        self.smoothing.flow.validate()?;
        self.smoothing.association.validate()?;
        if self.eval.oks_thresholds.is_empty()
            || self.eval.oks_thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0))
        {
            return Err(Error::invalid("OKS thresholds must lie in (0, 1)"));
        }
        unit(self.eval.iou_threshold, "eval iou_threshold")?;
        if self.eval.mmr_points < 2 {
            return Err(Error::invalid("mmr_points must be at least 2"));
        }
        Ok(())
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.detections,
            &mut self.predictions,
            &mut self.frames,
            &mut self.gt,
            &mut self.weights,
            &mut self.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
