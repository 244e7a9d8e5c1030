//! Flow-based temporal smoothing of tracked poses.
//!
//! The pose of a track at frame `k` is replaced by
//! `α·P + α·N + (1 − 2α)·C`, where `P` is the frame `k−1` pose carried
//! forward along the flow into frame `k`, `N` is the frame `k+1` pose carried
//! backward, and `C` is the current estimate. Smoothing only happens when the
//! track has both neighbors and both clear the confidence gate.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::jsonl::FlowRecord;
use crate::flow::{max_levels, propagate_pose, track_points, FlowPyramid, FlowVector, GrayImage, PyramidParams};
use crate::pose::Pose;
use crate::tracking::{build_tracks, AssociationParams, TrackInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingParams {
    pub alpha: f64,
    /// Both neighbors' instance scores must reach this.
    pub confidence_threshold: f64,
    /// Drop individual neighbor joints whose propagated score is 0 and give
    /// their weight back to the current estimate.
    pub per_joint_gating: bool,
    /// Score factor for joints whose flow failed.
    pub failure_factor: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams {
            alpha: 0.25,
            confidence_threshold: 0.3,
            per_joint_gating: false,
            failure_factor: 0.0,
        }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 0.5]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::invalid(format!(
                "confidence threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

/// Three-term blend for one coordinate.
#[inline]
pub fn blend(alpha_prev: f64, prev: f64, alpha_next: f64, next: f64, current: f64) -> f64 {
    alpha_prev * prev + alpha_next * next + (1.0 - (alpha_prev + alpha_next)) * current
}

/// Smooths the frame-`k` pose of one track.
///
/// `flow_from_prev` holds `F(k−1 → k)` sampled at the previous pose's joints
/// and `flow_from_next` holds `F(k+1 → k)` sampled at the next pose's joints.
/// When the gate fails the current pose is returned unchanged and the flows
/// are not read.
pub fn temporal_smooth(
    prev: Option<&Pose>,
    current: &Pose,
    next: Option<&Pose>,
    flow_from_prev: &[FlowVector],
    flow_from_next: &[FlowVector],
    params: &SmoothingParams,
) -> Result<Pose> {
    params.validate()?;
    for neighbor in [prev, next].into_iter().flatten() {
        if let (Some(a), Some(b)) = (neighbor.track_id, current.track_id) {
            if a != b {
                return Err(Error::invalid(format!(
                    "cannot smooth track {b} with a pose from track {a}"
                )));
            }
        }
    }
    let (prev, next) = match (prev, next) {
        (Some(p), Some(n))
            if p.score >= params.confidence_threshold && n.score >= params.confidence_threshold =>
        {
            (p, n)
        }
        _ => return Ok(current.clone()),
    };
    if params.alpha == 0.0 {
        return Ok(current.clone());
    }
    let joints = current.joints();
    if prev.joints() != joints || next.joints() != joints {
        return Err(Error::invalid("neighbor poses have a different joint count"));
    }
    let forward = propagate_pose(prev, flow_from_prev, params.failure_factor)?;
    let backward = propagate_pose(next, flow_from_next, params.failure_factor)?;

    let alpha = params.alpha;
    let mut out = current.clone();
    for ((c, p), n) in out.keypoints.iter_mut().zip(&forward.keypoints).zip(&backward.keypoints) {
        let (wp, wn) = if params.per_joint_gating {
            (
                if p.score > 0.0 { alpha } else { 0.0 },
                if n.score > 0.0 { alpha } else { 0.0 },
            )
        } else {
            (alpha, alpha)
        };
        c.x = blend(wp, p.x, wn, n.x, c.x);
        c.y = blend(wp, p.y, wn, n.y, c.y);
    }
    Ok(out)
}

/// Random access to grayscale frames by index.
pub trait FrameSource: Sync {
    fn frame(&self, index: usize) -> Result<GrayImage>;
}

impl FrameSource for [GrayImage] {
    fn frame(&self, index: usize) -> Result<GrayImage> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::MissingInput(format!("frame {index}")))
    }
}

impl FrameSource for Vec<GrayImage> {
    fn frame(&self, index: usize) -> Result<GrayImage> {
        self.as_slice().frame(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoSmoothingParams {
    pub smoothing: SmoothingParams,
    pub flow: PyramidParams,
    /// Used only when the input poses carry no track ids.
    pub association: AssociationParams,
    pub passes: usize,
}

impl Default for VideoSmoothingParams {
    fn default() -> Self {
        VideoSmoothingParams {
            smoothing: SmoothingParams::default(),
            flow: PyramidParams::default(),
            association: AssociationParams::default(),
            passes: 1,
        }
    }
}

/// Track id of every pose: taken from the poses when all carry one, otherwise
/// derived by linking keypoint boxes frame to frame.
fn resolve_track_ids(poses: &[Pose], association: &AssociationParams) -> Result<Vec<u64>> {
    if poses.iter().all(|p| p.track_id.is_some()) {
        return Ok(poses.iter().map(|p| p.track_id.unwrap()).collect());
    }
    let Some(last) = poses.iter().filter_map(|p| p.frame).max() else {
        return Ok(Vec::new());
    };
    let mut frames: Vec<Vec<TrackInstance>> = vec![Vec::new(); last + 1];
    let mut slots = Vec::with_capacity(poses.len());
    for p in poses {
        let f = p.frame.unwrap_or(0);
        slots.push((f, frames[f].len()));
        frames[f].push(TrackInstance::from_pose(p.clone(), None));
    }
    let tracking = build_tracks(&frames, association)?;
    Ok(slots.into_iter().map(|(f, i)| tracking.ids[f][i]).collect())
}

/// Smooths every pose of a video whose track has gated neighbors in the
/// adjacent frames. Output has the same order, count, scores and track ids
/// as the input; only joint coordinates change.
pub fn smooth_video(poses: &[Pose], frames: &dyn FrameSource, params: &VideoSmoothingParams) -> Result<Vec<Pose>> {
    smooth_video_traced(poses, frames, params).map(|(p, _)| p)
}

/// Like [`smooth_video`], also returning the flow measured at every joint in
/// the last pass, sorted by frame, track, source frame and joint.
pub fn smooth_video_traced(
    poses: &[Pose],
    frames: &dyn FrameSource,
    params: &VideoSmoothingParams,
) -> Result<(Vec<Pose>, Vec<FlowRecord>)> {
    params.smoothing.validate()?;
    params.flow.validate()?;
    if let Some(i) = poses.iter().position(|p| p.frame.is_none()) {
        return Err(Error::invalid(format!("pose {i} has no frame index")));
    }
    let ids = resolve_track_ids(poses, &params.association)?;
    let mut cell: HashMap<(u64, usize), usize> = HashMap::new();
    for (i, (p, &id)) in poses.iter().zip(&ids).enumerate() {
        if cell.insert((id, p.frame.unwrap()), i).is_some() {
            return Err(Error::invalid(format!(
                "track {id} has two poses in frame {}",
                p.frame.unwrap()
            )));
        }
    }

    let mut current = poses.to_vec();
    let mut trace = Vec::new();
    for _ in 0..params.passes {
        // (pose, prev pose, next pose) for every gated cell
        let jobs: Vec<(usize, usize, usize)> = current
            .iter()
            .zip(&ids)
            .enumerate()
            .filter_map(|(i, (p, &id))| {
                let k = p.frame.unwrap();
                let prev = *cell.get(&(id, k.checked_sub(1)?))?;
                let next = *cell.get(&(id, k + 1))?;
                let thr = params.smoothing.confidence_threshold;
                (current[prev].score >= thr && current[next].score >= thr).then_some((i, prev, next))
            })
            .collect();
        if jobs.is_empty() || params.smoothing.alpha == 0.0 {
            break;
        }

        let needed: BTreeSet<usize> = jobs
            .iter()
            .flat_map(|&(i, _, _)| {
                let k = current[i].frame.unwrap();
                [k - 1, k, k + 1]
            })
            .collect();
        let pyramids: BTreeMap<usize, FlowPyramid> = needed
            .into_par_iter()
            .map(|f| {
                let img = frames.frame(f)?;
                let levels = max_levels(&img, params.flow.levels);
                Ok((f, FlowPyramid::new(&img, levels)?))
            })
            .collect::<Result<_>>()?;

        let smoothed: Vec<(usize, Pose, Vec<FlowRecord>)> = jobs
            .par_iter()
            .map(|&(i, pi, ni)| {
                let k = current[i].frame.unwrap();
                let joints = |p: &Pose| p.keypoints.iter().map(|kp| (kp.x, kp.y)).collect::<Vec<_>>();
                let f_prev = track_points(&pyramids[&(k - 1)], &pyramids[&k], &joints(&current[pi]), &params.flow)?;
                let f_next = track_points(&pyramids[&(k + 1)], &pyramids[&k], &joints(&current[ni]), &params.flow)?;
                let mut prev = current[pi].clone();
                let mut next = current[ni].clone();
                let mut cur = current[i].clone();
                // ids may have been derived rather than stored
                prev.track_id = Some(ids[pi]);
                next.track_id = Some(ids[ni]);
                cur.track_id = Some(ids[i]);
                let mut out = temporal_smooth(Some(&prev), &cur, Some(&next), &f_prev, &f_next, &params.smoothing)?;
                out.track_id = current[i].track_id;
                let track = ids[i];
                let records = [(k - 1, &f_prev), (k + 1, &f_next)]
                    .into_iter()
                    .flat_map(|(source, flows)| {
                        flows.iter().enumerate().map(move |(joint, f)| FlowRecord {
                            frame: k,
                            source,
                            track,
                            joint,
                            dx: f.dx,
                            dy: f.dy,
                            valid: f.valid,
                        })
                    })
                    .collect();
                Ok((i, out, records))
            })
            .collect::<Result<_>>()?;

        let mut out = current.clone();
        trace.clear();
        for (i, p, records) in smoothed {
            out[i] = p;
            trace.extend(records);
        }
        current = out;
    }
    trace.sort_by_key(|r| (r.frame, r.track, r.source, r.joint));
    Ok((current, trace))
}
