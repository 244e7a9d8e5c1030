//! Frame-to-frame identity association from appearance features with an IoU
//! fallback.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::hungarian_max;
use crate::detection::{iou, DetectionBox};
use crate::error::{Error, Result};
use crate::pose::Pose;

/// Cosine similarity of two appearance embeddings.
pub fn appearance_similarity(fa: &[f64], fb: &[f64]) -> Result<f64> {
    if fa.len() != fb.len() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: {} vs {}",
            fa.len(),
            fb.len()
        )));
    }
    let na = fa.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = fb.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::invalid("appearance feature is a zero vector"));
    }
    let dot: f64 = fa.iter().zip(fb).map(|(a, b)| a * b).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// One person instance in one frame. The appearance feature, when present,
/// travels in `bbox.feature`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackInstance {
    pub bbox: DetectionBox,
    pub pose: Option<Pose>,
}

impl TrackInstance {
    pub fn from_box(bbox: DetectionBox) -> Self {
        TrackInstance { bbox, pose: None }
    }

    /// Uses the pose's keypoint box, with an optional appearance feature.
    pub fn from_pose(pose: Pose, feature: Option<Vec<f64>>) -> Self {
        let mut bbox = pose.bounding_box();
        bbox.feature = feature;
        TrackInstance {
            bbox,
            pose: Some(pose),
        }
    }

    fn feature(&self) -> Option<&[f64]> {
        self.bbox
            .feature
            .as_deref()
            .filter(|f| f.iter().any(|v| *v != 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationParams {
    /// Matches with affinity below this are dropped.
    pub sim_threshold: f64,
    /// Share of the IoU term in the affinity.
    pub iou_weight: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        AssociationParams {
            sim_threshold: 0.4,
            iou_weight: 0.3,
        }
    }
}

impl AssociationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sim_threshold) || !(0.0..=1.0).contains(&self.iou_weight) {
            return Err(Error::invalid(
                "association threshold and IoU weight must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// `(1 − w)·cos + w·IoU`; pairs missing a feature on either side use IoU alone.
pub fn pair_affinity(a: &TrackInstance, b: &TrackInstance, iou_weight: f64) -> Result<f64> {
    let overlap = iou(&a.bbox, &b.bbox);
    match (a.feature(), b.feature()) {
        (Some(fa), Some(fb)) => {
            Ok((1.0 - iou_weight) * appearance_similarity(fa, fb)? + iou_weight * overlap)
        }
        _ => Ok(overlap),
    }
}

pub fn affinity_matrix(prev: &[TrackInstance], cur: &[TrackInstance], iou_weight: f64) -> Result<Vec<Vec<f64>>> {
    prev.iter()
        .map(|p| cur.iter().map(|c| pair_affinity(p, c, iou_weight)).collect())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(prev index, cur index)` pairs, ordered by prev index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_prev: Vec<usize>,
    pub unmatched_cur: Vec<usize>,
}

/// Maximum-affinity one-to-one matching between consecutive frames.
pub fn associate_frames(
    prev: &[TrackInstance],
    cur: &[TrackInstance],
    params: &AssociationParams,
) -> Result<Association> {
    params.validate()?;
    let affinity = affinity_matrix(prev, cur, params.iou_weight)?;
    let rows = if cur.is_empty() {
        vec![None; prev.len()]
    } else {
        hungarian_max(&affinity)
    };
    let mut out = Association::default();
    let mut cur_taken = vec![false; cur.len()];
    for (i, j) in rows.into_iter().enumerate() {
        match j {
            Some(j) if affinity[i][j] >= params.sim_threshold => {
                out.matches.push((i, j));
                cur_taken[j] = true;
            }
            _ => out.unmatched_prev.push(i),
        }
    }
    out.unmatched_cur = (0..cur.len()).filter(|&j| !cur_taken[j]).collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    /// Position of the instance within its frame.
    pub index: usize,
    pub instance: TrackInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub entries: BTreeMap<usize, TrackEntry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tracking {
    pub tracks: Vec<Track>,
    /// `ids[frame][instance]`.
    pub ids: Vec<Vec<u64>>,
}

/// Links instances frame by frame. Ids start at 0 and are handed out in
/// order of first appearance; an instance with no match in the immediately
/// preceding frame always starts a new track.
pub fn build_tracks(frames: &[Vec<TrackInstance>], params: &AssociationParams) -> Result<Tracking> {
    params.validate()?;
    let mut out = Tracking::default();
    let mut next_id = 0u64;
    let mut prev_ids: Vec<u64> = Vec::new();
    for (f, cur) in frames.iter().enumerate() {
        let mut ids = vec![u64::MAX; cur.len()];
        if f > 0 {
            let assoc = associate_frames(&frames[f - 1], cur, params)?;
            for (p, c) in assoc.matches {
                ids[c] = prev_ids[p];
            }
        }
        for id in ids.iter_mut().filter(|id| **id == u64::MAX) {
            *id = next_id;
            out.tracks.push(Track {
                id: next_id,
                entries: BTreeMap::new(),
            });
            next_id += 1;
        }
        for (index, (inst, &id)) in cur.iter().zip(&ids).enumerate() {
            out.tracks[id as usize].entries.insert(
                f,
                TrackEntry {
                    index,
                    instance: inst.clone(),
                },
            );
        }
        out.ids.push(ids.clone());
        prev_ids = ids;
    }
    Ok(out)
}
