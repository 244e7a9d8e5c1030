//! Seeded synthetic videos: textured rectangles ("persons") moving over a
//! textured background, with ground truth, multi-model detections and
//! optional ideal heatmaps.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{iou, DetectionBox};
use crate::error::{Error, Result};
use crate::flow::GrayImage;
use crate::heatmap::{box_to_crop_transform, flip_heatmap, heatmap_transform, Heatmap, JointFlipPairs};
use crate::io::frames::{write_pgm, FrameDir};
use crate::io::jsonl::{write_detections, write_poses, DetectionRecord, HeatmapRef, PoseFile, PoseRecord};
use crate::io::tensor::{write_tensor, Tensor};
use crate::pose::{Keypoint, Pose, Skeleton};

/// Joint positions as fractions of the person box, in default skeleton order.
pub const JOINT_OFFSETS: [(f64, f64); 14] = [
    (0.30, 0.97),
    (0.32, 0.75),
    (0.36, 0.52),
    (0.64, 0.52),
    (0.68, 0.75),
    (0.70, 0.97),
    (0.10, 0.50),
    (0.15, 0.35),
    (0.25, 0.20),
    (0.75, 0.20),
    (0.85, 0.35),
    (0.90, 0.50),
    (0.50, 0.17),
    (0.50, 0.02),
];

pub const FEATURE_DIM: usize = 32;
pub const VIDEO_NAME: &str = "synth";
/// Pixels per frame; faster motion outruns the default flow pyramid.
pub const MAX_CROSSING_SPEED: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPerson {
    pub id: u64,
    /// Top-left corner at frame 0.
    pub start: (f64, f64),
    pub size: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub amplitude: (f64, f64),
    /// Frames per oscillation.
    pub period: f64,
    pub phase: f64,
}

impl SynthPerson {
    /// Box at frame `t`: `start + v·t + amp·sin(2πt/period + phase)`.
    pub fn bbox(&self, t: usize) -> DetectionBox {
        let t = t as f64;
        let s = (2.0 * std::f64::consts::PI * t / self.period + self.phase).sin();
        let x0 = self.start.0 + self.velocity.0 * t + self.amplitude.0 * s;
        let y0 = self.start.1 + self.velocity.1 * t + self.amplitude.1 * s;
        DetectionBox {
            x0,
            y0,
            x1: x0 + self.size.0,
            y1: y0 + self.size.1,
            score: 1.0,
            ..Default::default()
        }
    }

    pub fn pose(&self, t: usize) -> Pose {
        let b = self.bbox(t);
        let kps = JOINT_OFFSETS
            .iter()
            .map(|&(fx, fy)| Keypoint::new(b.x0 + fx * self.size.0, b.y0 + fy * self.size.1, 1.0))
            .collect();
        Pose::new(kps, 1.0).with_frame(t).with_track(self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthHeatmaps {
    /// Grid size as `[width, height]`.
    pub grid: [usize; 2],
    /// Gaussian spread in grid cells.
    pub sigma: f64,
    pub scales: Vec<f64>,
    /// Also emit a horizontally flipped map at scale 1.0.
    pub flipped: bool,
}

impl Default for SynthHeatmaps {
    fn default() -> Self {
        SynthHeatmaps {
            grid: [24, 32],
            sigma: 1.5,
            scales: vec![0.7, 1.0, 1.3],
            flipped: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub persons: Vec<SynthPerson>,
    /// Number of detector models; each emits one jittered box per person.
    pub models: usize,
    pub box_jitter: f64,
    pub heatmaps: Option<SynthHeatmaps>,
}

impl SynthConfig {
    /// `persons` people on alternating left/right courses, stacked 50 px
    /// apart vertically so neighbors cross with partial overlap. Speed is
    /// capped at [`MAX_CROSSING_SPEED`].
    pub fn crossing(seed: u64, persons: usize, frames: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let (width, height) = (320usize, 240usize);
        let size = (48.0, 96.0);
        let span = width as f64 - 40.0 - size.0;
        let steps = frames.saturating_sub(1).max(1) as f64;
        // short clips show a partial crossing rather than motion flow cannot follow
        let speed = (span / steps).min(MAX_CROSSING_SPEED);
        let people = (0..persons)
            .map(|i| {
                let rightward = i % 2 == 0;
                let x = if rightward { 20.0 } else { 20.0 + span };
                let v = if rightward { speed } else { -speed };
                SynthPerson {
                    id: i as u64,
                    start: (x, 22.0 + (i % 3) as f64 * 50.0 + (i / 3) as f64 * 4.0),
                    size,
                    velocity: (v, 0.0),
                    amplitude: (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.5)),
                    period: rng.gen_range(15.0..40.0),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        SynthConfig {
            seed,
            width,
            height,
            frames,
            persons: people,
            models: 2,
            box_jitter: 1.5,
            heatmaps: Some(SynthHeatmaps::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 || self.frames == 0 {
            return Err(Error::invalid("synthetic video needs at least 16×16 pixels and one frame"));
        }
        let mut ids = HashSet::new();
        for p in &self.persons {
            if !ids.insert(p.id) {
                return Err(Error::invalid(format!("duplicate person id {}", p.id)));
            }
            if !(p.size.0 > 0.0 && p.size.1 > 0.0 && p.period > 0.0) {
                return Err(Error::invalid(format!("person {} has a degenerate size or period", p.id)));
            }
        }
        if self.models == 0 {
            return Err(Error::invalid("at least one detector model is required"));
        }
        if let Some(h) = &self.heatmaps {
            if h.grid[0] < 2 || h.grid[1] < 2 || !(h.sigma > 0.0) || h.scales.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::invalid("bad synthetic heatmap settings"));
            }
        }
        Ok(())
    }
}

/// Tiling value noise: a random lattice sampled bilinearly.
struct Texture {
    cell: f64,
    cols: usize,
    rows: usize,
    values: Vec<f64>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, cell: f64, cols: usize, rows: usize) -> Self {
        Texture {
            cell,
            cols,
            rows,
            values: (0..cols * rows).map(|_| rng.gen::<f64>()).collect(),
        }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x / self.cell, y / self.cell);
        let (fu, fv) = (u.floor(), v.floor());
        let (tu, tv) = (u - fu, v - fv);
        let at = |i: f64, j: f64| {
            let c = (i as i64).rem_euclid(self.cols as i64) as usize;
            let r = (j as i64).rem_euclid(self.rows as i64) as usize;
            self.values[r * self.cols + c]
        };
        let top = at(fu, fv) * (1.0 - tu) + at(fu + 1.0, fv) * tu;
        let bottom = at(fu, fv + 1.0) * (1.0 - tu) + at(fu + 1.0, fv + 1.0) * tu;
        top * (1.0 - tv) + bottom * tv
    }
}

/// Everything a synthetic run produces, in memory.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub frames: Vec<GrayImage>,
    /// Ground-truth poses, frame-major.
    pub gt: Vec<PoseRecord>,
    pub gt_boxes: Vec<DetectionRecord>,
    pub detections: Vec<DetectionRecord>,
    /// `(file name, tensor)` for every heatmap file the detections refer to.
    pub heatmaps: Vec<(String, Tensor)>,
}

fn render_frames(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<GrayImage>> {
    let bg_coarse = Texture::new(rng, 16.0, 32, 32);
    let bg_fine = Texture::new(rng, 5.0, 64, 64);
    let people: Vec<(Texture, Texture, f64)> = cfg
        .persons
        .iter()
        .map(|_| {
            let coarse = Texture::new(rng, 7.0, 16, 16);
            let fine = Texture::new(rng, 3.0, 32, 32);
            (coarse, fine, rng.gen_range(-0.1..0.1))
        })
        .collect();
    (0..cfg.frames)
        .map(|t| {
            let boxes: Vec<DetectionBox> = cfg.persons.iter().map(|p| p.bbox(t)).collect();
            GrayImage::from_fn(cfg.width, cfg.height, |x, y| {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                // later persons are drawn in front
                for (b, (coarse, fine, offset)) in boxes.iter().zip(&people).rev() {
                    if px >= b.x0 && px < b.x1 && py >= b.y0 && py < b.y1 {
                        let (lx, ly) = (px - b.x0, py - b.y0);
                        return (0.45 + 0.3 * coarse.sample(lx, ly) + 0.2 * fine.sample(lx, ly) + offset)
                            .clamp(0.0, 1.0);
                    }
                }
                0.1 + 0.3 * bg_coarse.sample(px, py) + 0.15 * bg_fine.sample(px, py)
            })
        })
        .collect()
}

/// Ideal heatmap of `pose` on the grid for `bbox` at `scale`.
pub fn ideal_heatmap(pose: &Pose, bbox: &DetectionBox, spec: &SynthHeatmaps, scale: f64) -> Result<Heatmap> {
    let [gw, gh] = spec.grid;
    let crop = box_to_crop_transform(bbox, 3, 4, 192, 256, scale)?;
    let t = heatmap_transform(&crop, 192, 256, gw, gh)?;
    let inv = t.inverse();
    let mut h = Heatmap::zeros(pose.joints(), gh, gw, t)?;
    let s2 = 2.0 * spec.sigma * spec.sigma;
    for (j, kp) in pose.keypoints.iter().enumerate() {
        let (cx, cy) = inv.apply(kp.x, kp.y);
        for y in 0..gh {
            for x in 0..gw {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                h.set(j, y, x, (-d2 / s2).exp());
            }
        }
    }
    Ok(h)
}

/// Persons whose boxes overlap share a proposal id within a frame.
fn proposal_ids(boxes: &[DetectionBox], frame: usize) -> Vec<i64> {
    let n = boxes.len();
    let mut group: Vec<usize> = (0..n).collect();
    fn root(g: &mut [usize], mut i: usize) -> usize {
        while g[i] != i {
            g[i] = g[g[i]];
            i = g[i];
        }
        i
    }
    for a in 0..n {
        for b in a + 1..n {
            if iou(&boxes[a], &boxes[b]) > 0.0 {
                let (ra, rb) = (root(&mut group, a), root(&mut group, b));
                group[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    (0..n)
        .map(|i| (frame * 1000 + root(&mut group, i)) as i64)
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthVideo> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let frames = render_frames(cfg, &mut rng)?;
    let features: Vec<Vec<f64>> = cfg
        .persons
        .iter()
        .map(|_| (0..FEATURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let pairs = JointFlipPairs::new(Skeleton::default_14().flip_pairs)?;

    let mut out = SynthVideo {
        frames,
        gt: Vec::new(),
        gt_boxes: Vec::new(),
        detections: Vec::new(),
        heatmaps: Vec::new(),
    };
    for t in 0..cfg.frames {
        let boxes: Vec<DetectionBox> = cfg.persons.iter().map(|p| p.bbox(t)).collect();
        let proposals = proposal_ids(&boxes, t);
        for (i, p) in cfg.persons.iter().enumerate() {
            let pose = p.pose(t);
            let b = &boxes[i];
            out.gt.push(PoseRecord {
                pose: pose.clone(),
                video: Some(VIDEO_NAME.into()),
                bbox: Some([b.x0, b.y0, b.x1, b.y1]),
                feature: Some(features[i].clone()),
            });
            let mut gt_box = DetectionRecord::new(t, b.clone());
            gt_box.video = Some(VIDEO_NAME.into());
            gt_box.track_id = Some(p.id);
            out.gt_boxes.push(gt_box);

            for m in 0..cfg.models {
                let mut jitter = || rng.gen_range(-cfg.box_jitter..=cfg.box_jitter);
                let det = DetectionBox {
                    x0: b.x0 + jitter(),
                    y0: b.y0 + jitter(),
                    x1: b.x1 + jitter(),
                    y1: b.y1 + jitter(),
                    score: 0.9 - 0.1 * m as f64 + rng.gen_range(0.0..0.05),
                    proposal_id: Some(proposals[i]),
                    model_id: Some(m as i64),
                    feature: Some(features[i].clone()),
                };
                let mut rec = DetectionRecord::new(t, det);
                rec.video = Some(VIDEO_NAME.into());
                if m == 0 {
                    if let Some(spec) = &cfg.heatmaps {
                        for &scale in &spec.scales {
                            let h = ideal_heatmap(&pose, &rec.bbox, spec, scale)?;
                            let name = format!("f{t:06}_p{}_s{scale:.2}.ht", p.id);
                            let mut maps = vec![h];
                            rec.heatmaps.push(HeatmapRef {
                                path: format!("heatmaps/{name}"),
                                index: 0,
                                weight: 1.0,
                                scale,
                                flipped: false,
                            });
                            if spec.flipped && scale == 1.0 {
                                maps.push(flip_heatmap(&maps[0], &pairs, false)?);
                                rec.heatmaps.push(HeatmapRef {
                                    path: format!("heatmaps/{name}"),
                                    index: 1,
                                    weight: 1.0,
                                    scale,
                                    flipped: true,
                                });
                            }
                            out.heatmaps.push((name, Tensor::from_heatmaps(&maps)?));
                        }
                    }
                }
                out.detections.push(rec);
            }
        }
    }
    Ok(out)
}

/// Files written by [`write_synth`], relative to its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub frames: PathBuf,
    pub gt_poses: PathBuf,
    pub gt_boxes: PathBuf,
    pub detections: PathBuf,
    pub config: PathBuf,
}

/// Writes frames, ground truth, detections, heatmaps and a matching run
/// config (`run.toml`) under `dir`.
pub fn write_synth(dir: &Path, cfg: &SynthConfig) -> Result<SynthPaths> {
    let video = generate(cfg)?;
    let paths = SynthPaths {
        frames: dir.join("frames"),
        gt_poses: dir.join("gt_poses.jsonl"),
        gt_boxes: dir.join("gt_boxes.jsonl"),
        detections: dir.join("detections.jsonl"),
        config: dir.join("run.toml"),
    };
    fs::create_dir_all(&paths.frames).map_err(|e| Error::io(&paths.frames, e))?;
    for (t, img) in video.frames.iter().enumerate() {
        write_pgm(&paths.frames.join(FrameDir::file_name(t)), img)?;
    }
    let joints = JOINT_OFFSETS.len();
    write_poses(&paths.gt_poses, &PoseFile::new(joints, video.gt))?;
    write_detections(&paths.gt_boxes, &video.gt_boxes)?;
    write_detections(&paths.detections, &video.detections)?;
    if !video.heatmaps.is_empty() {
        let hm_dir = dir.join("heatmaps");
        fs::create_dir_all(&hm_dir).map_err(|e| Error::io(&hm_dir, e))?;
        for (name, tensor) in &video.heatmaps {
            write_tensor(&hm_dir.join(name), tensor)?;
        }
    }
    let run = format!(
        "version = 1\nseed = {}\n\n[heatmap]\nflip_shift = false\n\n[paths]\ndetections = \"detections.jsonl\"\nframes = \"frames\"\ngt = \"gt_poses.jsonl\"\nout_dir = \"out\"\n",
        cfg.seed
    );
    fs::write(&paths.config, run).map_err(|e| Error::io(&paths.config, e))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::decode_keypoints;

    #[test]
    fn crossing_speed_is_capped() {
        for frames in [2, 12, 60, 200] {
            let cfg = SynthConfig::crossing(0, 2, frames);
            assert!(cfg.persons.iter().all(|p| p.velocity.0.abs() <= MAX_CROSSING_SPEED));
        }
        // long clips still cross fully
        let cfg = SynthConfig::crossing(0, 2, 60);
        assert!(cfg.persons[0].velocity.0 > 3.5);
    }

    fn small() -> SynthConfig {
        let mut cfg = SynthConfig::crossing(3, 2, 4);
        cfg.width = 320;
        cfg
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.detections, b.detections);
        assert_eq!(a.detections.len(), 2 * 2 * 4);
        assert_eq!(a.gt.len(), 8);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut cfg = small();
        cfg.persons[1].id = cfg.persons[0].id;
        assert!(matches!(generate(&cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ideal_heatmaps_decode_near_truth() {
        let cfg = small();
        let p = cfg.persons[0].pose(0);
        let b = cfg.persons[0].bbox(0);
        let h = ideal_heatmap(&p, &b, &SynthHeatmaps::default(), 1.0).unwrap();
        let d = decode_keypoints(&h).unwrap();
        for (a, g) in d.keypoints.iter().zip(&p.keypoints) {
            assert!((a.x - g.x).abs() < 2.0 && (a.y - g.y).abs() < 2.0);
            assert!(a.score > 0.8);
        }
    }

    #[test]
    fn overlapping_persons_share_proposals() {
        let a = DetectionBox::new(0.0, 0.0, 10.0, 10.0, 1.0).unwrap();
        let b = DetectionBox::new(5.0, 5.0, 15.0, 15.0, 1.0).unwrap();
        let c = DetectionBox::new(50.0, 50.0, 60.0, 60.0, 1.0).unwrap();
        let ids = proposal_ids(&[a, b, c], 2);
        assert_eq!(ids[0], ids[1]);
        assert_ne!(ids[0], ids[2]);
    }
}
