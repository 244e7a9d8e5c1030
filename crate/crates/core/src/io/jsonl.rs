//! Line-delimited JSON records for detections, poses and flow dumps.
//!
//! Writers are canonical: keys sorted, reals printed with six decimals, one
//! record per line. Readers ignore unknown fields but reject anything that
//! violates the schema, naming the offending line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use crate::detection::DetectionBox;
use crate::error::{Error, Result};
use crate::pose::{Keypoint, Pose};

pub const DETECTIONS_SCHEMA: &str = "detections";
pub const DETECTIONS_VERSION: u64 = 1;

/// Canonical JSON object builder.
#[derive(Default)]
pub(crate) struct Obj(BTreeMap<&'static str, String>);

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.6}")
}

impl Obj {
    pub fn real(mut self, k: &'static str, v: f64) -> Self {
        self.0.insert(k, fmt_real(v));
        self
    }

    pub fn int(mut self, k: &'static str, v: impl Into<i128>) -> Self {
        self.0.insert(k, v.into().to_string());
        self
    }

    pub fn boolean(mut self, k: &'static str, v: bool) -> Self {
        self.0.insert(k, v.to_string());
        self
    }

    pub fn string(mut self, k: &'static str, v: &str) -> Self {
        self.0.insert(k, serde_json::to_string(v).expect("string serializes"));
        self
    }

    pub fn reals(mut self, k: &'static str, v: &[f64]) -> Self {
        let items: Vec<String> = v.iter().map(|x| fmt_real(*x)).collect();
        self.0.insert(k, format!("[{}]", items.join(",")));
        self
    }

    pub fn raw(mut self, k: &'static str, json: String) -> Self {
        self.0.insert(k, json);
        self
    }

    pub fn finish(self) -> String {
        let fields: Vec<String> = self
            .0
            .into_iter()
            .map(|(k, v)| format!("{}:{v}", serde_json::to_string(k).unwrap()))
            .collect();
        format!("{{{}}}", fields.join(","))
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines with 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reference to one heatmap stored in a `.ht` file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct HeatmapRef {
    pub path: String,
    /// Leading-axis index for rank-4 files.
    #[serde(default)]
    pub index: usize,
    #[serde(default = "one")]
    pub weight: f64,
    /// Box scale the heatmap was produced at; the 1.0 map defines the fusion grid.
    #[serde(default = "one")]
    pub scale: f64,
    /// The heatmap came from a horizontally flipped crop.
    #[serde(default)]
    pub flipped: bool,
}

fn one() -> f64 {
    1.0
}

impl HeatmapRef {
    fn to_json(&self) -> String {
        Obj::default()
            .string("path", &self.path)
            .int("index", self.index as u64)
            .real("weight", self.weight)
            .real("scale", self.scale)
            .boolean("flipped", self.flipped)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame: usize,
    pub video: Option<String>,
    pub bbox: DetectionBox,
    pub track_id: Option<u64>,
    pub heatmaps: Vec<HeatmapRef>,
}

impl DetectionRecord {
    pub fn new(frame: usize, bbox: DetectionBox) -> Self {
        DetectionRecord {
            frame,
            video: None,
            bbox,
            track_id: None,
            heatmaps: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let b = &self.bbox;
        let mut o = Obj::default()
            .int("frame", self.frame as u64)
            .real("x0", b.x0)
            .real("y0", b.y0)
            .real("x1", b.x1)
            .real("y1", b.y1)
            .real("score", b.score);
        if let Some(p) = b.proposal_id {
            o = o.int("proposal_id", p);
        }
        if let Some(m) = b.model_id {
            o = o.int("model_id", m);
        }
        if let Some(f) = &b.feature {
            o = o.reals("feature", f);
        }
        if let Some(t) = self.track_id {
            o = o.int("track_id", t);
        }
        if let Some(v) = &self.video {
            o = o.string("video", v);
        }
        if !self.heatmaps.is_empty() {
            let items: Vec<String> = self.heatmaps.iter().map(HeatmapRef::to_json).collect();
            o = o.raw("heatmaps", format!("[{}]", items.join(",")));
        }
        o.finish()
    }
}

#[derive(Deserialize)]
struct RawDetection {
    frame: usize,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    score: f64,
    proposal_id: Option<i64>,
    model_id: Option<i64>,
    feature: Option<Vec<f64>>,
    track_id: Option<u64>,
    video: Option<String>,
    #[serde(default)]
    heatmaps: Vec<HeatmapRef>,
}

fn detections_header() -> String {
    Obj::default()
        .string("schema", DETECTIONS_SCHEMA)
        .int("version", DETECTIONS_VERSION)
        .finish()
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    let mut feature_dim: Option<usize> = None;
    for (n, line) in lines(text) {
        let value: Value = serde_json::from_str(line).map_err(|e| parse_err(path, n, e.to_string()))?;
        if let Some(schema) = value.get("schema") {
            let version = value.get("version").and_then(Value::as_u64);
            if !out.is_empty() || schema != DETECTIONS_SCHEMA || version != Some(DETECTIONS_VERSION) {
                return Err(parse_err(
                    path,
                    n,
                    format!("unsupported detections header (schema {schema}, version {version:?})"),
                ));
            }
            continue;
        }
        let raw: RawDetection = serde_json::from_value(value).map_err(|e| parse_err(path, n, e.to_string()))?;
        let bbox = DetectionBox {
            x0: raw.x0,
            y0: raw.y0,
            x1: raw.x1,
            y1: raw.y1,
            score: raw.score,
            proposal_id: raw.proposal_id,
            model_id: raw.model_id,
            feature: raw.feature,
        };
        bbox.validate().map_err(|e| parse_err(path, n, e.to_string()))?;
        if let Some(f) = &bbox.feature {
            match feature_dim {
                Some(d) if d != f.len() => {
                    return Err(parse_err(path, n, format!("feature has {} dims, expected {d}", f.len())))
                }
                _ => feature_dim = Some(f.len()),
            }
        }
        out.push(DetectionRecord {
            frame: raw.frame,
            video: raw.video,
            bbox,
            track_id: raw.track_id,
            heatmaps: raw.heatmaps,
        });
    }
    Ok(out)
}

pub fn format_detections(records: &[DetectionRecord]) -> String {
    let mut s = detections_header();
    s.push('\n');
    for r in records {
        s.push_str(&r.to_json());
        s.push('\n');
    }
    s
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    parse_detections(&read_text(path)?, path)
}

pub fn write_detections(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    write_text(path, &format_detections(records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub pose: Pose,
    pub video: Option<String>,
    /// Person box the pose was estimated in.
    pub bbox: Option<[f64; 4]>,
    pub feature: Option<Vec<f64>>,
}

impl PoseRecord {
    pub fn new(pose: Pose) -> Self {
        PoseRecord {
            pose,
            video: None,
            bbox: None,
            feature: None,
        }
    }

    pub fn frame(&self) -> usize {
        self.pose.frame.unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let flat: Vec<f64> = self
            .pose
            .keypoints
            .iter()
            .flat_map(|k| [k.x, k.y, k.score])
            .collect();
        let mut o = Obj::default()
            .int("frame", self.frame() as u64)
            .real("score", self.pose.score)
            .reals("keypoints", &flat);
        if let Some(t) = self.pose.track_id {
            o = o.int("track_id", t);
        }
        if let Some(v) = &self.video {
            o = o.string("video", v);
        }
        if let Some(b) = &self.bbox {
            o = o.reals("box", b);
        }
        if let Some(f) = &self.feature {
            o = o.reals("feature", f);
        }
        o.finish()
    }

    /// Person box, falling back to the keypoint bounds, carrying the feature.
    pub fn detection_box(&self) -> DetectionBox {
        let mut b = match self.bbox {
            Some([x0, y0, x1, y1]) if x1 > x0 && y1 > y0 => DetectionBox {
                x0,
                y0,
                x1,
                y1,
                score: self.pose.score,
                ..Default::default()
            },
            _ => self.pose.bounding_box(),
        };
        b.feature = self.feature.clone();
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFile {
    pub joints: usize,
    pub records: Vec<PoseRecord>,
}

impl PoseFile {
    pub fn new(joints: usize, records: Vec<PoseRecord>) -> Self {
        PoseFile { joints, records }
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.records.iter().map(|r| r.pose.clone()).collect()
    }
}

#[derive(Deserialize)]
struct RawPose {
    frame: usize,
    score: f64,
    keypoints: Vec<f64>,
    track_id: Option<u64>,
    video: Option<String>,
    #[serde(rename = "box")]
    bbox: Option<[f64; 4]>,
    feature: Option<Vec<f64>>,
}

pub fn parse_poses(text: &str, path: &Path) -> Result<PoseFile> {
    let mut it = lines(text);
    let (n, header) = it
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing {\"skeleton\": J} header"))?;
    let header: Value = serde_json::from_str(header).map_err(|e| parse_err(path, n, e.to_string()))?;
    let joints = header
        .get("skeleton")
        .and_then(Value::as_u64)
        .filter(|&j| j > 0)
        .ok_or_else(|| parse_err(path, n, "first line must be a {\"skeleton\": J} header"))? as usize;
    let mut records = Vec::new();
    for (n, line) in it {
        let raw: RawPose = serde_json::from_str(line).map_err(|e| parse_err(path, n, e.to_string()))?;
        if raw.keypoints.len() != 3 * joints {
            return Err(parse_err(
                path,
                n,
                format!("expected {} keypoint values, got {}", 3 * joints, raw.keypoints.len()),
            ));
        }
        if !(0.0..=1.0).contains(&raw.score) {
            return Err(parse_err(path, n, format!("instance score {} outside [0, 1]", raw.score)));
        }
        let keypoints: Vec<Keypoint> = raw
            .keypoints
            .chunks_exact(3)
            .map(|c| Keypoint::new(c[0], c[1], c[2]))
            .collect();
        let mut pose = Pose::new(keypoints, raw.score).with_frame(raw.frame);
        pose.track_id = raw.track_id;
        pose.validate().map_err(|e| parse_err(path, n, e.to_string()))?;
        records.push(PoseRecord {
            pose,
            video: raw.video,
            bbox: raw.bbox,
            feature: raw.feature,
        });
    }
    Ok(PoseFile { joints, records })
}

pub fn format_poses(file: &PoseFile) -> String {
    let mut s = Obj::default().int("skeleton", file.joints as u64).finish();
    s.push('\n');
    for r in &file.records {
        s.push_str(&r.to_json());
        s.push('\n');
    }
    s
}

pub fn read_poses(path: &Path) -> Result<PoseFile> {
    parse_poses(&read_text(path)?, path)
}

pub fn write_poses(path: &Path, file: &PoseFile) -> Result<()> {
    write_text(path, &format_poses(file))
}

/// True when the first non-blank line is a pose file header.
pub fn is_pose_file(path: &Path) -> Result<bool> {
    let text = read_text(path)?;
    let first = lines(&text).next().map(|(_, l)| l.to_string());
    Ok(first
        .and_then(|l| serde_json::from_str::<Value>(&l).ok())
        .is_some_and(|v| v.get("skeleton").is_some()))
}

/// One flow sample at a joint, as dumped for debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    /// Frame the joint is carried into.
    pub frame: usize,
    /// Frame the joint was taken from.
    pub source: usize,
    pub track: u64,
    pub joint: usize,
    pub dx: f64,
    pub dy: f64,
    pub valid: bool,
}

impl FlowRecord {
    pub fn to_json(&self) -> String {
        Obj::default()
            .int("frame", self.frame as u64)
            .int("source", self.source as u64)
            .int("track", self.track)
            .int("joint", self.joint as u64)
            .real("dx", self.dx)
            .real("dy", self.dy)
            .boolean("valid", self.valid)
            .finish()
    }
}

pub fn write_flow_dump(path: &Path, records: &[FlowRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_json());
        s.push('\n');
    }
    write_text(path, &s)
}
