//! File-to-file stages and the chained run driven by a [`PipelineConfig`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::config::{DetectionConfig, EvalConfig, EvalTask, HeatmapConfig, PipelineConfig, Stage};
use crate::detection::{fuse_box_clusters, nms_keep, set_nms_keep, DetectionBox};
use crate::error::{Error, Result};
use crate::heatmap::{decode_keypoints, flip_heatmap, fuse_heatmaps, resample_heatmap, Heatmap, JointFlipPairs};
use crate::io::frames::{read_frame_rgb, write_ppm, FrameDir};
use crate::io::jsonl::{
    is_pose_file, read_detections, read_poses, write_detections, write_flow_dump, write_poses, DetectionRecord,
    FlowRecord, PoseFile, PoseRecord,
};
use crate::io::tensor::read_tensor;
use crate::metrics::{
    detection_eval, keypoint_eval, log_average_miss_rate, miss_rate_curve, weighted_ap, EvalReport, VideoReport,
    DEFAULT_FPPI_RANGE,
};
use crate::pose::{pose_nms_keep, OksParams, Pose, Skeleton};
use crate::render::render_overlay;
use crate::smoothing::{smooth_video_traced, VideoSmoothingParams};
use crate::tracking::{build_tracks, AssociationParams, TrackInstance};

type GroupKey = (Option<String>, usize);

fn group_indices<T>(items: &[T], key: impl Fn(&T) -> GroupKey) -> BTreeMap<GroupKey, Vec<usize>> {
    let mut out: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        out.entry(key(it)).or_default().push(i);
    }
    out
}

fn video_key(v: &Option<String>) -> String {
    v.clone().unwrap_or_default()
}

// ---------------------------------------------------------------- detpost

/// Fuses boxes across models (when the input holds more than one model id),
/// then applies Set NMS or plain NMS within every frame. Fused boxes keep the
/// proposal id, feature, track id and heatmap references of their highest
/// scoring member.
pub fn detpost_records(records: &[DetectionRecord], cfg: &DetectionConfig) -> Result<Vec<DetectionRecord>> {
    let models: BTreeSet<i64> = records.iter().filter_map(|r| r.bbox.model_id).collect();
    let fuse = models.len() > 1;
    let mut out = Vec::new();
    for ((video, frame), idx) in group_indices(records, |r| (r.video.clone(), r.frame)) {
        let mut group: Vec<DetectionRecord> = if fuse {
            let model_index: BTreeMap<i64, usize> = models.iter().enumerate().map(|(i, m)| (*m, i)).collect();
            let mut outputs: Vec<(f64, Vec<DetectionBox>)> =
                models.iter().map(|&m| (cfg.model_weight(Some(m)), Vec::new())).collect();
            let mut origin: Vec<Vec<usize>> = vec![Vec::new(); models.len()];
            for &i in &idx {
                let m = records[i].bbox.model_id.ok_or_else(|| {
                    Error::invalid(format!("frame {frame}: box without model_id in a multi-model file"))
                })?;
                let slot = model_index[&m];
                outputs[slot].1.push(records[i].bbox.clone());
                origin[slot].push(i);
            }
            fuse_box_clusters(&outputs, cfg.fusion_iou)?
                .into_iter()
                .map(|c| {
                    let (m, k) = c.members[0];
                    let seed = &records[origin[m][k]];
                    let mut rec = seed.clone();
                    rec.bbox = DetectionBox {
                        proposal_id: seed.bbox.proposal_id,
                        feature: seed.bbox.feature.clone(),
                        model_id: None,
                        ..c.fused
                    };
                    rec
                })
                .collect()
        } else {
            idx.iter().map(|&i| records[i].clone()).collect()
        };
        let boxes: Vec<DetectionBox> = group.iter().map(|r| r.bbox.clone()).collect();
        let keep = if cfg.set_nms {
            set_nms_keep(&boxes, cfg.nms_iou)
        } else {
            nms_keep(&boxes, cfg.nms_iou)
        };
        let mut slots: Vec<Option<DetectionRecord>> = group.drain(..).map(Some).collect();
        for k in keep {
            let mut rec = slots[k].take().expect("indices are unique");
            rec.video = video.clone();
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn run_detpost(input: &Path, output: &Path, cfg: &DetectionConfig) -> Result<usize> {
    let records = read_detections(input)?;
    let out = detpost_records(&records, cfg)?;
    write_detections(output, &out)?;
    Ok(out.len())
}

// ---------------------------------------------------------------- fuse

fn load_ref_maps(rec: &DetectionRecord, root: &Path, cfg: &HeatmapConfig, pairs: &JointFlipPairs) -> Result<Vec<(f64, f64, Heatmap)>> {
    let mut cache: HashMap<PathBuf, Vec<Heatmap>> = HashMap::new();
    let mut maps = Vec::new();
    for r in &rec.heatmaps {
        if !cfg.scales.iter().any(|s| (s - r.scale).abs() < 1e-9) {
            continue;
        }
        let path = root.join(&r.path);
        if !cache.contains_key(&path) {
            let t = read_tensor(&path)?;
            cache.insert(path.clone(), t.heatmaps()?);
        }
        let variants = &cache[&path];
        let h = variants.get(r.index).ok_or_else(|| {
            Error::invalid(format!(
                "{}: index {} out of range ({} maps)",
                path.display(),
                r.index,
                variants.len()
            ))
        })?;
        let h = if r.flipped {
            flip_heatmap(h, pairs, cfg.flip_shift)?
        } else {
            h.clone()
        };
        maps.push((r.scale, r.weight, h));
    }
    Ok(maps)
}

/// Heatmaps of one detection fused on the grid of its scale-1.0 map (the
/// first map when there is none) and decoded to an image-space pose.
pub fn fuse_detection(rec: &DetectionRecord, root: &Path, cfg: &HeatmapConfig, skeleton: &Skeleton) -> Result<Pose> {
    let pairs = JointFlipPairs::new(skeleton.flip_pairs.clone())?;
    let maps = load_ref_maps(rec, root, cfg, &pairs)?;
    if maps.is_empty() {
        return Err(Error::MissingInput(format!(
            "detection in frame {} has no heatmaps at the configured scales",
            rec.frame
        )));
    }
    if let Some((_, _, h)) = maps.iter().find(|m| m.2.joints() != skeleton.joints()) {
        return Err(Error::invalid(format!(
            "heatmap has {} joints, skeleton has {}",
            h.joints(),
            skeleton.joints()
        )));
    }
    let reference = maps
        .iter()
        .position(|m| (m.0 - 1.0).abs() < 1e-9)
        .unwrap_or(0);
    let grid = &maps[reference].2;
    let (t, gh, gw) = (*grid.transform(), grid.height(), grid.width());
    let mut aligned = Vec::with_capacity(maps.len());
    let mut weights = Vec::with_capacity(maps.len());
    for (_, w, h) in &maps {
        let h = if h.transform().approx_eq(&t, 1e-9) && h.height() == gh && h.width() == gw {
            h.clone()
        } else {
            resample_heatmap(h, &t, gh, gw)?
        };
        aligned.push(h);
        weights.push(*w);
    }
    decode_keypoints(&fuse_heatmaps(&aligned, &weights)?)
}

/// One pose per detection. Relative heatmap paths resolve against `root`.
pub fn fuse_records(
    records: &[DetectionRecord],
    root: &Path,
    cfg: &HeatmapConfig,
    skeleton: &Skeleton,
) -> Result<Vec<PoseRecord>> {
    records
        .par_iter()
        .map(|rec| {
            let mut pose = fuse_detection(rec, root, cfg, skeleton)?.with_frame(rec.frame);
            pose.track_id = rec.track_id;
            let b = &rec.bbox;
            Ok(PoseRecord {
                pose,
                video: rec.video.clone(),
                bbox: Some([b.x0, b.y0, b.x1, b.y1]),
                feature: b.feature.clone(),
            })
        })
        .collect()
}

pub fn run_fuse(input: &Path, root: Option<&Path>, output: &Path, cfg: &HeatmapConfig, skeleton: &Skeleton) -> Result<usize> {
    let records = read_detections(input)?;
    let root = root
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    let poses = fuse_records(&records, &root, cfg, skeleton)?;
    write_poses(output, &PoseFile::new(skeleton.joints(), poses.clone()))?;
    Ok(poses.len())
}

// ---------------------------------------------------------------- posenms

/// Pose NMS within every frame. Survivors keep their input order.
pub fn posenms_records(
    records: &[PoseRecord],
    oks_threshold: f64,
    min_score: f64,
    params: &OksParams,
) -> Result<Vec<PoseRecord>> {
    let mut keep = vec![false; records.len()];
    for (_, idx) in group_indices(records, |r| (r.video.clone(), r.frame())) {
        let poses: Vec<Pose> = idx.iter().map(|&i| records[i].pose.clone()).collect();
        for k in pose_nms_keep(&poses, oks_threshold, min_score, params)? {
            keep[idx[k]] = true;
        }
    }
    Ok(records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect())
}

pub fn run_posenms(input: &Path, output: &Path, cfg: &PipelineConfig) -> Result<usize> {
    let file = read_poses(input)?;
    let params = cfg.oks_params();
    if params.sigmas.len() != file.joints {
        return Err(Error::invalid(format!(
            "{} has {} joints, configured skeleton has {}",
            input.display(),
            file.joints,
            params.sigmas.len()
        )));
    }
    let out = posenms_records(&file.records, cfg.pose_nms.oks_threshold, cfg.pose_nms.min_score, &params)?;
    let n = out.len();
    write_poses(output, &PoseFile::new(file.joints, out))?;
    Ok(n)
}

// ---------------------------------------------------------------- track

fn assign_tracks<T>(
    items: &[T],
    key: impl Fn(&T) -> GroupKey,
    instance: impl Fn(&T) -> TrackInstance,
    params: &AssociationParams,
) -> Result<Vec<u64>> {
    let mut ids = vec![0u64; items.len()];
    let mut per_video: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        per_video.entry(key(it).0).or_default().push(i);
    }
    for (_, idx) in per_video {
        let last = idx.iter().map(|&i| key(&items[i]).1).max().unwrap_or(0);
        let mut frames: Vec<Vec<TrackInstance>> = vec![Vec::new(); last + 1];
        let mut slots = Vec::with_capacity(idx.len());
        for &i in &idx {
            let f = key(&items[i]).1;
            slots.push((i, f, frames[f].len()));
            frames[f].push(instance(&items[i]));
        }
        let tracking = build_tracks(&frames, params)?;
        for (i, f, k) in slots {
            ids[i] = tracking.ids[f][k];
        }
    }
    Ok(ids)
}

/// Links poses into tracks per video using their boxes and features.
pub fn track_pose_records(records: &[PoseRecord], params: &AssociationParams) -> Result<Vec<PoseRecord>> {
    let ids = assign_tracks(
        records,
        |r| (r.video.clone(), r.frame()),
        |r| TrackInstance {
            bbox: r.detection_box(),
            pose: Some(r.pose.clone()),
        },
        params,
    )?;
    Ok(records
        .iter()
        .zip(ids)
        .map(|(r, id)| {
            let mut r = r.clone();
            r.pose.track_id = Some(id);
            r
        })
        .collect())
}

pub fn track_detection_records(records: &[DetectionRecord], params: &AssociationParams) -> Result<Vec<DetectionRecord>> {
    let ids = assign_tracks(
        records,
        |r| (r.video.clone(), r.frame),
        |r| TrackInstance::from_box(r.bbox.clone()),
        params,
    )?;
    Ok(records
        .iter()
        .zip(ids)
        .map(|(r, id)| {
            let mut r = r.clone();
            r.track_id = Some(id);
            r
        })
        .collect())
}

/// Accepts a pose file or a detections file and writes the same kind back.
pub fn run_track(input: &Path, output: &Path, params: &AssociationParams) -> Result<usize> {
    if is_pose_file(input)? {
        let file = read_poses(input)?;
        let out = track_pose_records(&file.records, params)?;
        let n = out.len();
        write_poses(output, &PoseFile::new(file.joints, out))?;
        Ok(n)
    } else {
        let out = track_detection_records(&read_detections(input)?, params)?;
        write_detections(output, &out)?;
        Ok(out.len())
    }
}

// ---------------------------------------------------------------- smooth

/// Frames of `video`: `<frames>/<video>/` when that directory exists,
/// `<frames>/` otherwise.
pub fn frames_for_video(frames: &Path, video: Option<&str>) -> FrameDir {
    match video.map(|v| frames.join(v)).filter(|d| d.is_dir()) {
        Some(d) => FrameDir::new(d),
        None => FrameDir::new(frames),
    }
}

pub fn smooth_records(
    records: &[PoseRecord],
    frames: &Path,
    params: &VideoSmoothingParams,
) -> Result<(Vec<PoseRecord>, Vec<FlowRecord>)> {
    let mut out = records.to_vec();
    let mut trace = Vec::new();
    let mut per_video: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        per_video.entry(r.video.clone()).or_default().push(i);
    }
    for (video, idx) in per_video {
        let source = frames_for_video(frames, video.as_deref());
        let poses: Vec<Pose> = idx.iter().map(|&i| records[i].pose.clone()).collect();
        let (smoothed, flows) = smooth_video_traced(&poses, &source, params)?;
        for (&i, p) in idx.iter().zip(smoothed) {
            out[i].pose = p;
        }
        trace.extend(flows);
    }
    Ok((out, trace))
}

pub fn run_smooth(
    input: &Path,
    frames: &Path,
    output: &Path,
    params: &VideoSmoothingParams,
    flow_dump: Option<&Path>,
) -> Result<usize> {
    let file = read_poses(input)?;
    let (out, trace) = smooth_records(&file.records, frames, params)?;
    let n = out.len();
    write_poses(output, &PoseFile::new(file.joints, out))?;
    if let Some(p) = flow_dump {
        write_flow_dump(p, &trace)?;
    }
    Ok(n)
}

// ---------------------------------------------------------------- eval

/// `{video: weight}` JSON object.
pub fn read_weights(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn finish_report(
    videos: BTreeMap<String, (VideoReport, usize)>,
    weights: Option<&BTreeMap<String, f64>>,
    mmr: Option<f64>,
) -> Result<EvalReport> {
    let mut entries = Vec::new();
    for (name, (rep, gt_frames)) in &videos {
        let w = match weights {
            Some(ws) => *ws
                .get(name)
                .ok_or_else(|| Error::invalid(format!("no weight given for video `{name}`")))?,
            None => *gt_frames as f64,
        };
        entries.push((rep.ap, w));
    }
    let weighted = if entries.is_empty() { 0.0 } else { weighted_ap(&entries)? };
    Ok(EvalReport {
        videos: videos.into_iter().map(|(k, (r, _))| (k, r)).collect(),
        weighted_ap: weighted,
        mmr,
    })
}

/// Keypoint AP per video; the default video weight is its number of ground
/// truth frames.
pub fn eval_keypoints(
    pred: &[PoseRecord],
    gt: &[PoseRecord],
    cfg: &EvalConfig,
    params: &OksParams,
    weights: Option<&BTreeMap<String, f64>>,
) -> Result<EvalReport> {
    let names: BTreeSet<String> = pred.iter().chain(gt).map(|r| video_key(&r.video)).collect();
    let mut videos = BTreeMap::new();
    for name in names {
        let p: Vec<Pose> = pred.iter().filter(|r| video_key(&r.video) == name).map(|r| r.pose.clone()).collect();
        let g: Vec<&PoseRecord> = gt.iter().filter(|r| video_key(&r.video) == name).collect();
        let gt_frames = g.iter().map(|r| r.frame()).collect::<BTreeSet<_>>().len();
        let g: Vec<Pose> = g.into_iter().map(|r| r.pose.clone()).collect();
        let e = keypoint_eval(&p, &g, &cfg.oks_thresholds, params)?;
        let rep = VideoReport {
            ap: e.ap,
            tp: e.counts.tp,
            fp: e.counts.fp,
            fn_: e.counts.fn_,
        };
        videos.insert(name, (rep, gt_frames));
    }
    finish_report(videos, weights, None)
}

/// Box AP per video plus the log-average miss rate over all frames that
/// hold a prediction or a ground-truth box.
pub fn eval_detections(
    pred: &[DetectionRecord],
    gt: &[DetectionRecord],
    cfg: &EvalConfig,
    weights: Option<&BTreeMap<String, f64>>,
) -> Result<EvalReport> {
    let names: BTreeSet<String> = pred.iter().chain(gt).map(|r| video_key(&r.video)).collect();
    let mut videos = BTreeMap::new();
    for name in &names {
        let pick = |rs: &[DetectionRecord]| -> Vec<(usize, DetectionBox)> {
            rs.iter()
                .filter(|r| &video_key(&r.video) == name)
                .map(|r| (r.frame, r.bbox.clone()))
                .collect()
        };
        let (p, g) = (pick(pred), pick(gt));
        let gt_frames = g.iter().map(|x| x.0).collect::<BTreeSet<_>>().len();
        let e = detection_eval(&p, &g, cfg.iou_threshold);
        let rep = VideoReport {
            ap: e.ap,
            tp: e.counts.tp,
            fp: e.counts.fp,
            fn_: e.counts.fn_,
        };
        videos.insert(name.clone(), (rep, gt_frames));
    }
    let frames = group_indices(pred, |r| (r.video.clone(), r.frame));
    let gframes = group_indices(gt, |r| (r.video.clone(), r.frame));
    let keys: BTreeSet<&GroupKey> = frames.keys().chain(gframes.keys()).collect();
    let empty = Vec::new();
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for k in keys {
        dets.push(frames.get(k).unwrap_or(&empty).iter().map(|&i| pred[i].bbox.clone()).collect());
        gts.push(gframes.get(k).unwrap_or(&empty).iter().map(|&i| gt[i].bbox.clone()).collect());
    }
    let mmr = if gt.is_empty() {
        None
    } else {
        let curve = miss_rate_curve(&dets, &gts, cfg.iou_threshold)?;
        Some(log_average_miss_rate(&curve, DEFAULT_FPPI_RANGE, cfg.mmr_points)?)
    };
    finish_report(videos, weights, mmr)
}

/// Pretty JSON with sorted keys.
pub fn report_json(report: &EvalReport) -> String {
    let v = serde_json::to_value(report).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub fn run_eval(
    pred: &Path,
    gt: &Path,
    report: Option<&Path>,
    cfg: &PipelineConfig,
    weights: Option<&Path>,
) -> Result<EvalReport> {
    let weights = weights.map(read_weights).transpose()?;
    let out = match cfg.eval.task {
        EvalTask::Kp => {
            let (p, g) = (read_poses(pred)?, read_poses(gt)?);
            if p.joints != g.joints {
                return Err(Error::invalid(format!(
                    "predictions have {} joints, ground truth {}",
                    p.joints, g.joints
                )));
            }
            let mut params = cfg.oks_params();
            if params.sigmas.len() != g.joints {
                params = OksParams::uniform(g.joints, cfg.pose_nms.sigma);
            }
            eval_keypoints(&p.records, &g.records, &cfg.eval, &params, weights.as_ref())?
        }
        EvalTask::Det => eval_detections(
            &read_detections(pred)?,
            &read_detections(gt)?,
            &cfg.eval,
            weights.as_ref(),
        )?,
    };
    if let Some(path) = report {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, report_json(&out)).map_err(|e| Error::io(path, e))?;
    }
    Ok(out)
}

// ---------------------------------------------------------------- overlay

/// Draws every pose of `video` (all videos when `None`) onto its frame and
/// writes `<out_dir>/<index:06>.ppm`. Returns the number of frames written.
pub fn run_overlay(poses: &Path, frames: &Path, out_dir: &Path, skeleton: &Skeleton, video: Option<&str>) -> Result<usize> {
    let file = read_poses(poses)?;
    let mut by_frame: BTreeMap<usize, Vec<&PoseRecord>> = BTreeMap::new();
    for r in file
        .records
        .iter()
        .filter(|r| video.is_none() || r.video.as_deref() == video)
    {
        by_frame.entry(r.frame()).or_default().push(r);
    }
    let source = frames_for_video(frames, video);
    for (f, recs) in &by_frame {
        let path = source
            .path(*f)
            .ok_or_else(|| Error::MissingInput(format!("frame {f} not found in {}", frames.display())))?;
        let img = read_frame_rgb(&path)?;
        let ps: Vec<Pose> = recs.iter().map(|r| r.pose.clone()).collect();
        let boxes: Vec<(DetectionBox, Option<u64>)> = recs
            .iter()
            .filter(|r| r.bbox.is_some())
            .map(|r| (r.detection_box(), r.pose.track_id))
            .collect();
        write_ppm(&out_dir.join(format!("{f:06}.ppm")), &render_overlay(&img, &ps, &boxes, skeleton))?;
    }
    Ok(by_frame.len())
}

// ---------------------------------------------------------------- run

/// What a full run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    /// `(stage, output file)` in execution order.
    pub outputs: Vec<(Stage, PathBuf)>,
    pub report: Option<EvalReport>,
}

fn need<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::MissingInput(format!("no {what} available")))
}

/// Runs the configured stages in order, each reading the previous stage's
/// output, with every output written under `paths.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out_dir = need(&cfg.paths.out_dir, "output directory (paths.out_dir)")?.clone();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut detections = cfg.paths.detections.clone();
    let heatmap_root = detections
        .as_ref()
        .and_then(|d| d.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let mut poses: Option<PathBuf> = None;
    if let Some(p) = &cfg.paths.predictions {
        if is_pose_file(p)? {
            poses = Some(p.clone());
        } else {
            detections = Some(p.clone());
        }
    }
    let mut summary = RunSummary::default();
    for &stage in &cfg.stages {
        let started = Instant::now();
        let wrap = |e: Error| Error::Stage {
            stage: stage.name().into(),
            source: Box::new(e),
        };
        let output = match stage {
            Stage::Detpost => {
                let input = need(&detections, "detections").map_err(wrap)?;
                let out = out_dir.join("detections_post.jsonl");
                run_detpost(input, &out, &cfg.detection).map_err(wrap)?;
                detections = Some(out.clone());
                out
            }
            Stage::Fuse => {
                let input = need(&detections, "detections").map_err(wrap)?;
                let out = out_dir.join("poses_fused.jsonl");
                run_fuse(input, Some(&heatmap_root), &out, &cfg.heatmap, &cfg.skeleton).map_err(wrap)?;
                poses = Some(out.clone());
                out
            }
            Stage::Posenms => {
                let input = need(&poses, "poses").map_err(wrap)?;
                let out = out_dir.join("poses_nms.jsonl");
                run_posenms(input, &out, cfg).map_err(wrap)?;
                poses = Some(out.clone());
                out
            }
            Stage::Track => match &poses {
                Some(input) => {
                    let out = out_dir.join("poses_tracked.jsonl");
                    run_track(input, &out, &cfg.tracking).map_err(wrap)?;
                    poses = Some(out.clone());
                    out
                }
                None => {
                    let input = need(&detections, "poses or detections").map_err(wrap)?;
                    let out = out_dir.join("detections_tracked.jsonl");
                    run_track(input, &out, &cfg.tracking).map_err(wrap)?;
                    detections = Some(out.clone());
                    out
                }
            },
            Stage::Smooth => {
                let input = need(&poses, "poses").map_err(wrap)?;
                let frames = need(&cfg.paths.frames, "frames directory (paths.frames)").map_err(wrap)?;
                let out = out_dir.join("poses_smoothed.jsonl");
                run_smooth(input, frames, &out, &cfg.smoothing, None).map_err(wrap)?;
                poses = Some(out.clone());
                out
            }
            Stage::Eval => {
                let gt = need(&cfg.paths.gt, "ground truth (paths.gt)").map_err(wrap)?;
                let pred = match cfg.eval.task {
                    EvalTask::Kp => need(&poses, "poses"),
                    EvalTask::Det => need(&detections, "detections"),
                }
                .map_err(wrap)?;
                let out = out_dir.join("report.json");
                let report = run_eval(pred, gt, Some(&out), cfg, cfg.paths.weights.as_deref()).map_err(wrap)?;
                summary.report = Some(report);
                out
            }
        };
        info!("{} -> {} ({:.2?})", stage.name(), output.display(), started.elapsed());
        summary.outputs.push((stage, output));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Keypoint;

    fn det(frame: usize, x: f64, score: f64, model: i64) -> DetectionRecord {
        DetectionRecord::new(frame, DetectionBox::new(x, 0.0, x + 10.0, 20.0, score).unwrap().with_model(model))
    }

    #[test]
    fn detpost_fuses_models_then_suppresses() {
        let recs = vec![det(0, 0.0, 0.9, 0), det(0, 0.5, 0.8, 1), det(0, 40.0, 0.7, 0), det(1, 0.0, 0.6, 1)];
        let out = detpost_records(&recs, &DetectionConfig::default()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].frame, 0);
        // both models agree on the first box
        assert!((out[0].bbox.score - 0.85).abs() < 1e-12);
        // single-model clusters are down-weighted by the model fraction
        assert!((out[1].bbox.score - 0.35).abs() < 1e-12);
        assert_eq!(out[2].frame, 1);
    }

    #[test]
    fn posenms_is_per_frame() {
        let p = |f: usize, s: f64| {
            PoseRecord::new(Pose::new(vec![Keypoint::new(1.0, 1.0, 1.0), Keypoint::new(30.0, 40.0, 1.0)], s).with_frame(f))
        };
        let recs = vec![p(0, 0.9), p(0, 0.8), p(1, 0.7)];
        let out = posenms_records(&recs, 0.7, 0.05, &OksParams::uniform(2, 0.08)).unwrap();
        assert_eq!(out, vec![recs[0].clone(), recs[2].clone()]);
    }

    #[test]
    fn tracks_follow_boxes() {
        let recs: Vec<DetectionRecord> = (0..3)
            .flat_map(|f| [det(f, f as f64, 0.9, 0), det(f, 100.0 - f as f64, 0.8, 0)])
            .collect();
        let out = track_detection_records(&recs, &AssociationParams::default()).unwrap();
        let ids: Vec<u64> = out.iter().map(|r| r.track_id.unwrap()).collect();
        assert_eq!(ids, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn detection_report_counts() {
        let gt = vec![det(0, 0.0, 1.0, 0), det(1, 0.0, 1.0, 0)];
        let pred = vec![det(0, 0.0, 0.9, 0), det(1, 50.0, 0.8, 0)];
        let r = eval_detections(&pred, &gt, &EvalConfig::default(), None).unwrap();
        let v = &r.videos[""];
        assert_eq!((v.tp, v.fp, v.fn_), (1, 1, 1));
        assert!((v.ap - 0.5).abs() < 1e-12);
        assert!(r.mmr.unwrap() > 0.0);
        let json = report_json(&r);
        assert!(json.find("\"mmr\"").unwrap() < json.find("\"videos\"").unwrap());
    }

    #[test]
    fn missing_weight_is_an_error() {
        let gt = vec![det(0, 0.0, 1.0, 0)];
        let w = BTreeMap::from([("other".to_string(), 1.0)]);
        assert!(eval_detections(&gt, &gt, &EvalConfig::default(), Some(&w)).is_err());
    }
}
