//! Evaluation: greedy matching, average precision, keypoint AP over OKS
//! thresholds, detection AP, miss rate over FPPI and per-video weighting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::{iou, score_order, DetectionBox};
use crate::error::{Error, Result};
use crate::pose::{oks, OksParams, Pose};

/// OKS thresholds 0.50, 0.55, …, 0.95.
pub fn default_oks_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

pub const DEFAULT_MMR_POINTS: usize = 9;
pub const DEFAULT_FPPI_RANGE: (f64, f64) = (0.01, 100.0);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// `(prediction, ground truth, similarity)` in matching order.
    pub matches: Vec<(usize, usize, f64)>,
    /// Prediction indices by descending score, ties in input order.
    pub order: Vec<usize>,
    /// `is_tp[i]` for prediction `i`.
    pub is_tp: Vec<bool>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    /// TP/FP flags in descending score order.
    pub fn sorted_flags(&self) -> Vec<bool> {
        self.order.iter().map(|&i| self.is_tp[i]).collect()
    }
}

/// Predictions, by descending score, each claim the unclaimed ground-truth
/// item of highest similarity that reaches `threshold` (lowest index on ties).
pub fn match_greedy(
    scores: &[f64],
    gt_count: usize,
    similarity: impl Fn(usize, usize) -> f64,
    threshold: f64,
) -> MatchResult {
    let order = score_order(scores, |s| *s);
    let mut claimed = vec![false; gt_count];
    let mut out = MatchResult {
        is_tp: vec![false; scores.len()],
        ..Default::default()
    };
    for &p in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, taken) in claimed.iter().enumerate() {
            if *taken {
                continue;
            }
            let s = similarity(p, g);
            if s >= threshold && best.is_none_or(|(_, b)| s > b) {
                best = Some((g, s));
            }
        }
        match best {
            Some((g, s)) => {
                claimed[g] = true;
                out.is_tp[p] = true;
                out.matches.push((p, g, s));
            }
            None => out.false_positives.push(p),
        }
    }
    out.false_negatives = (0..gt_count).filter(|&g| !claimed[g]).collect();
    out.order = order;
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision, score threshold)`, recall non-decreasing.
    pub points: Vec<(f64, f64, f64)>,
}

/// Precision/recall after each prediction of a score-sorted list.
pub fn pr_curve(sorted: &[(f64, bool)], gt_count: usize) -> PrCurve {
    let mut tp = 0usize;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(i, &(score, hit))| {
            tp += hit as usize;
            let recall = if gt_count == 0 { 0.0 } else { tp as f64 / gt_count as f64 };
            (recall, tp as f64 / (i + 1) as f64, score)
        })
        .collect();
    PrCurve { points }
}

/// Area under the precision envelope of score-sorted TP/FP flags.
///
/// With no ground truth the result is 1 when there are also no predictions
/// and 0 otherwise.
pub fn average_precision(flags: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let n = flags.len();
    let mut recall = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &hit) in flags.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

fn group_by_frame<T>(items: &[T], frame: impl Fn(&T) -> usize) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        out.entry(frame(it)).or_default().push(i);
    }
    out
}

/// Match counts at one threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointEval {
    /// Mean of `per_threshold`.
    pub ap: f64,
    pub per_threshold: Vec<f64>,
    /// Counts at the first threshold.
    pub counts: MatchCounts,
}

/// Frame-wise greedy matching pooled into one score-sorted TP/FP list.
fn pooled_flags(
    pred_scores: &[f64],
    pred_frames: &BTreeMap<usize, Vec<usize>>,
    gt_frames: &BTreeMap<usize, Vec<usize>>,
    similarity: impl Fn(usize, usize) -> f64,
    threshold: f64,
) -> (Vec<bool>, MatchCounts) {
    let mut hits = vec![false; pred_scores.len()];
    let mut counts = MatchCounts::default();
    let empty = Vec::new();
    let frames: std::collections::BTreeSet<usize> = pred_frames.keys().chain(gt_frames.keys()).copied().collect();
    for f in frames {
        let preds = pred_frames.get(&f).unwrap_or(&empty);
        let gts = gt_frames.get(&f).unwrap_or(&empty);
        let scores: Vec<f64> = preds.iter().map(|&i| pred_scores[i]).collect();
        let m = match_greedy(&scores, gts.len(), |p, g| similarity(preds[p], gts[g]), threshold);
        for (local, &global) in preds.iter().enumerate() {
            hits[global] = m.is_tp[local];
        }
        counts.tp += m.matches.len();
        counts.fp += m.false_positives.len();
        counts.fn_ += m.false_negatives.len();
    }
    let order = score_order(pred_scores, |s| *s);
    (order.into_iter().map(|i| hits[i]).collect(), counts)
}

/// Keypoint AP averaged over OKS thresholds. Matching is per frame
/// (`Pose::frame`, absent = 0) with OKS normalized by the ground-truth
/// pose's keypoint area.
pub fn keypoint_eval(pred: &[Pose], gt: &[Pose], thresholds: &[f64], params: &OksParams) -> Result<KeypointEval> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::invalid("OKS thresholds must be a nonempty set in (0, 1)"));
    }
    params.validate()?;
    let joints = params.sigmas.len();
    if let Some(p) = pred.iter().chain(gt).find(|p| p.joints() != joints) {
        return Err(Error::invalid(format!(
            "pose with {} joints evaluated against a {joints}-joint skeleton",
            p.joints()
        )));
    }
    let pred_frames = group_by_frame(pred, |p| p.frame.unwrap_or(0));
    let gt_frames = group_by_frame(gt, |p| p.frame.unwrap_or(0));
    let mut sim: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (f, preds) in &pred_frames {
        for &g in gt_frames.get(f).map(Vec::as_slice).unwrap_or(&[]) {
            for &p in preds {
                sim.insert((p, g), oks(&gt[g], &pred[p], gt[g].area(), params)?);
            }
        }
    }
    let scores: Vec<f64> = pred.iter().map(|p| p.score).collect();
    let mut per_threshold = Vec::with_capacity(thresholds.len());
    let mut counts = MatchCounts::default();
    for (k, &t) in thresholds.iter().enumerate() {
        let (flags, c) = pooled_flags(&scores, &pred_frames, &gt_frames, |p, g| sim[&(p, g)], t);
        if k == 0 {
            counts = c;
        }
        per_threshold.push(average_precision(&flags, gt.len()));
    }
    let ap = per_threshold.iter().sum::<f64>() / per_threshold.len() as f64;
    Ok(KeypointEval {
        ap,
        per_threshold,
        counts,
    })
}

pub fn keypoint_ap(pred: &[Pose], gt: &[Pose], thresholds: &[f64], params: &OksParams) -> Result<f64> {
    Ok(keypoint_eval(pred, gt, thresholds, params)?.ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEval {
    pub ap: f64,
    pub counts: MatchCounts,
}

/// Box AP with per-frame IoU matching. Inputs are `(frame, box)`.
pub fn detection_eval(pred: &[(usize, DetectionBox)], gt: &[(usize, DetectionBox)], iou_threshold: f64) -> DetectionEval {
    let pred_frames = group_by_frame(pred, |p| p.0);
    let gt_frames = group_by_frame(gt, |g| g.0);
    let scores: Vec<f64> = pred.iter().map(|p| p.1.score).collect();
    let (flags, counts) = pooled_flags(
        &scores,
        &pred_frames,
        &gt_frames,
        |p, g| iou(&pred[p].1, &gt[g].1),
        iou_threshold,
    );
    DetectionEval {
        ap: average_precision(&flags, gt.len()),
        counts,
    }
}

/// `Σ wᵢ·APᵢ / Σ wᵢ` over `(ap, weight)` entries.
pub fn weighted_ap(per_video: &[(f64, f64)]) -> Result<f64> {
    if per_video.iter().any(|&(_, w)| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("video weights must be finite and nonnegative"));
    }
    let total: f64 = per_video.iter().map(|e| e.1).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("video weights sum to zero"));
    }
    Ok(per_video.iter().map(|&(ap, w)| ap * w).sum::<f64>() / total)
}

/// Miss rate against false positives per image, one point per distinct
/// prediction score, sorted by ascending FPPI. Detections and ground truth
/// are given per frame.
pub fn miss_rate_curve(
    detections: &[Vec<DetectionBox>],
    ground_truth: &[Vec<DetectionBox>],
    iou_threshold: f64,
) -> Result<Vec<(f64, f64)>> {
    if detections.is_empty() || detections.len() != ground_truth.len() {
        return Err(Error::invalid(format!(
            "need matching nonempty frame lists, got {} detection and {} ground-truth frames",
            detections.len(),
            ground_truth.len()
        )));
    }
    let gt_total: usize = ground_truth.iter().map(Vec::len).sum();
    if gt_total == 0 {
        return Err(Error::invalid("miss rate is undefined without ground truth"));
    }
    let frames = detections.len() as f64;
    // greedy matching in score order is prefix-stable, so one pass serves
    // every threshold
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for (dets, gts) in detections.iter().zip(ground_truth) {
        let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        let m = match_greedy(&scores, gts.len(), |p, g| iou(&dets[p], &gts[g]), iou_threshold);
        scored.extend(dets.iter().zip(&m.is_tp).map(|(d, &hit)| (d.score, hit)));
    }
    if scored.is_empty() {
        return Ok(vec![(0.0, 1.0)]);
    }
    let order = score_order(&scored, |s| s.0);
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        let (score, hit) = scored[i];
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_score = order.get(k + 1).is_none_or(|&j| scored[j].0 != score);
        if last_of_score {
            curve.push((fp as f64 / frames, (gt_total - tp) as f64 / gt_total as f64));
        }
    }
    Ok(curve)
}

/// Log-average miss rate in percent: the geometric mean of the miss rates
/// sampled at `points` log-spaced FPPI values spanning `fppi_range`. Each
/// sample takes the miss rate of the last curve point whose FPPI does not
/// exceed it, or 1 when there is none.
pub fn log_average_miss_rate(curve: &[(f64, f64)], fppi_range: (f64, f64), points: usize) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::invalid("empty miss-rate curve"));
    }
    if points < 2 {
        return Err(Error::invalid("log-average miss rate needs at least 2 sample points"));
    }
    let (lo, hi) = fppi_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid(format!("bad FPPI range [{lo}, {hi}]")));
    }
    let (llo, lhi) = (lo.log10(), hi.log10());
    let mut log_sum = 0.0;
    for i in 0..points {
        let sample = 10f64.powf(llo + (lhi - llo) * i as f64 / (points - 1) as f64);
        let mr = curve
            .iter()
            .rev()
            .find(|(fppi, _)| *fppi <= sample)
            .map_or(1.0, |p| p.1);
        log_sum += mr.ln();
    }
    Ok(100.0 * (log_sum / points as f64).exp())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub videos: BTreeMap<String, VideoReport>,
    pub weighted_ap: f64,
    pub mmr: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Keypoint;

    #[test]
    fn ap_worked_examples() {
        assert_eq!(average_precision(&[true, true], 2), 1.0);
        assert_eq!(average_precision(&[false, false], 2), 0.0);
        let ap = average_precision(&[true, false, true], 2);
        assert!((ap - (0.5 + 2.0 / 3.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn ap_vacuous_cases() {
        assert_eq!(average_precision(&[], 0), 1.0);
        assert_eq!(average_precision(&[false], 0), 0.0);
        assert_eq!(average_precision(&[], 3), 0.0);
    }

    #[test]
    fn greedy_matching_basics() {
        let m = match_greedy(&[0.9, 0.8], 2, |p, g| if p == g { 1.0 } else { 0.0 }, 0.5);
        assert_eq!(m.matches.len(), 2);
        let m = match_greedy(&[], 3, |_, _| 1.0, 0.5);
        assert_eq!(m.false_negatives, vec![0, 1, 2]);
    }

    #[test]
    fn keypoint_ap_threshold_split() {
        let sigma: f64 = 0.08;
        let gt = Pose::new(
            vec![Keypoint::new(0.0, 0.0, 1.0), Keypoint::new(40.0, 90.0, 1.0)],
            1.0,
        );
        let area = gt.area();
        // exp(−d²/(2·area·(2σ)²)) = 0.6
        let d = (-(0.6f64).ln() * 2.0 * area * (2.0 * sigma).powi(2)).sqrt();
        let pred = gt.translated(d, 0.0);
        let params = OksParams::uniform(2, sigma);
        assert!((oks(&gt, &pred, area, &params).unwrap() - 0.6).abs() < 1e-12);
        let e = keypoint_eval(&[pred], std::slice::from_ref(&gt), &[0.5, 0.75], &params).unwrap();
        assert_eq!(e.per_threshold, vec![1.0, 0.0]);
        assert!((e.ap - 0.5).abs() < 1e-12);
        assert_eq!(keypoint_ap(std::slice::from_ref(&gt), std::slice::from_ref(&gt), &default_oks_thresholds(), &params).unwrap(), 1.0);
        assert_eq!(keypoint_ap(&[], &[], &[0.5], &params).unwrap(), 1.0);
    }

    #[test]
    fn keypoint_ap_skeleton_mismatch() {
        let p = Pose::new(vec![Keypoint::new(0.0, 0.0, 1.0)], 1.0);
        assert!(keypoint_ap(std::slice::from_ref(&p), std::slice::from_ref(&p), &[0.5], &OksParams::uniform(2, 0.08)).is_err());
    }

    #[test]
    fn weighted_ap_examples() {
        assert_eq!(weighted_ap(&[(0.3, 5.0)]).unwrap(), 0.3);
        assert!((weighted_ap(&[(0.2, 1.0), (0.8, 1.0)]).unwrap() - 0.5).abs() < 1e-12);
        assert!((weighted_ap(&[(0.6, 100.0), (0.8, 300.0)]).unwrap() - 0.75).abs() < 1e-12);
        assert!(weighted_ap(&[(0.6, 0.0)]).is_err());
    }

    fn b(x: f64, s: f64) -> DetectionBox {
        DetectionBox::new(x, 0.0, x + 10.0, 10.0, s).unwrap()
    }

    #[test]
    fn miss_rate_trivial_curves() {
        let gt = vec![vec![b(0.0, 1.0)], vec![b(20.0, 1.0)]];
        let none = miss_rate_curve(&[vec![], vec![]], &gt, 0.5).unwrap();
        assert_eq!(none, vec![(0.0, 1.0)]);
        let perfect = miss_rate_curve(&[vec![b(0.0, 0.9)], vec![b(20.0, 0.8)]], &gt, 0.5).unwrap();
        assert_eq!(perfect.last(), Some(&(0.0, 0.0)));
        assert_eq!(log_average_miss_rate(&perfect, DEFAULT_FPPI_RANGE, 9).unwrap(), 0.0);
        assert!(miss_rate_curve(&[vec![]], &[vec![]], 0.5).is_err());
    }

    #[test]
    fn lamr_constant_curve() {
        let v = log_average_miss_rate(&[(0.0, 0.5)], DEFAULT_FPPI_RANGE, 9).unwrap();
        assert!((v - 50.0).abs() < 1e-9);
        assert!(log_average_miss_rate(&[], DEFAULT_FPPI_RANGE, 9).is_err());
    }
}
