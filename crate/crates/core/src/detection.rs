//! Box-level post-processing for crowded scenes.
//!
//! Suppression routines are greedy over a stable descending-score order, so
//! equal scores keep their input order and every routine is deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NMS_IOU: f64 = 0.5;
pub const DEFAULT_FUSION_IOU: f64 = 0.55;

/// Largest prediction set accepted by [`emd_set_distance`].
pub const EMD_MAX_SET: usize = 8;

/// Scored axis-aligned box in image pixels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub score: f64,
    /// Proposal the box was emitted from; boxes sharing one are exempt from
    /// suppressing each other in [`set_nms`].
    pub proposal_id: Option<i64>,
    pub model_id: Option<i64>,
    /// Appearance embedding.
    pub feature: Option<Vec<f64>>,
}

impl DetectionBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, score: f64) -> Result<Self> {
        let b = DetectionBox {
            x0,
            y0,
            x1,
            y1,
            score,
            ..Default::default()
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_proposal(mut self, id: i64) -> Self {
        self.proposal_id = Some(id);
        self
    }

    pub fn with_model(mut self, id: i64) -> Self {
        self.model_id = Some(id);
        self
    }

    pub fn with_feature(mut self, feature: Vec<f64>) -> Self {
        self.feature = Some(feature);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("box has non-finite coordinates"));
        }
        if !(self.x1 > self.x0 && self.y1 > self.y0) {
            return Err(Error::invalid(format!(
                "degenerate box ({}, {}, {}, {})",
                self.x0, self.y0, self.x1, self.y1
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!("box score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }
}

pub fn iou(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Indices sorted by descending score, ties in input order.
pub(crate) fn score_order<T>(items: &[T], score: impl Fn(&T) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&i, &j| score(&items[j]).total_cmp(&score(&items[i])));
    order
}

fn greedy_keep(
    boxes: &[DetectionBox],
    iou_threshold: f64,
    exempt: impl Fn(&DetectionBox, &DetectionBox) -> bool,
) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(boxes, |b| b.score) {
        let cand = &boxes[i];
        let suppressed = kept
            .iter()
            .any(|&k| !exempt(&boxes[k], cand) && iou(&boxes[k], cand) > iou_threshold);
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

fn same_proposal(a: &DetectionBox, b: &DetectionBox) -> bool {
    matches!((a.proposal_id, b.proposal_id), (Some(p), Some(q)) if p == q)
}

/// Indices kept by [`nms`], in output order.
pub fn nms_keep(boxes: &[DetectionBox], iou_threshold: f64) -> Vec<usize> {
    greedy_keep(boxes, iou_threshold, |_, _| false)
}

/// Indices kept by [`set_nms`], in output order.
pub fn set_nms_keep(boxes: &[DetectionBox], iou_threshold: f64) -> Vec<usize> {
    greedy_keep(boxes, iou_threshold, same_proposal)
}

/// Classic greedy NMS. Output is sorted by descending score.
pub fn nms(boxes: &[DetectionBox], iou_threshold: f64) -> Vec<DetectionBox> {
    nms_keep(boxes, iou_threshold).into_iter().map(|i| boxes[i].clone()).collect()
}

/// Greedy NMS that never lets a box suppress another box emitted by the same
/// proposal. Boxes without a proposal id are suppressed normally.
pub fn set_nms(boxes: &[DetectionBox], iou_threshold: f64) -> Vec<DetectionBox> {
    set_nms_keep(boxes, iou_threshold).into_iter().map(|i| boxes[i].clone()).collect()
}

/// Result of [`emd_set_distance`]: `assignment[i]` is the ground-truth index
/// matched to prediction `i`, or `None` for background.
#[derive(Debug, Clone, PartialEq)]
pub struct SetMatching {
    pub distance: f64,
    pub assignment: Vec<Option<usize>>,
}

/// `(1 − IoU)` for a matched pair, the prediction's score when it is matched
/// to background.
pub fn default_emd_cost(pred: &DetectionBox, gt: Option<&DetectionBox>) -> f64 {
    match gt {
        Some(g) => 1.0 - iou(pred, g),
        None => pred.score,
    }
}

/// Minimum total cost over all one-to-one assignments of predictions to the
/// ground truth padded with background entries up to the prediction count.
///
/// Solved exactly with a dynamic program over subsets of assignment slots.
/// Costs are accumulated in prediction order, so the optimum is the same
/// floating-point value an explicit permutation enumeration produces.
pub fn emd_set_distance<F>(
    predictions: &[DetectionBox],
    ground_truth: &[DetectionBox],
    cost: F,
) -> Result<SetMatching>
where
    F: Fn(&DetectionBox, Option<&DetectionBox>) -> f64,
{
    let k = predictions.len();
    if k > EMD_MAX_SET {
        return Err(Error::UnsupportedSize(format!(
            "set distance enumerates assignments of at most {EMD_MAX_SET} predictions, got {k}"
        )));
    }
    if ground_truth.len() > k {
        return Err(Error::invalid(format!(
            "{} ground-truth boxes cannot be matched by {k} predictions",
            ground_truth.len()
        )));
    }
    if k == 0 {
        return Ok(SetMatching {
            distance: 0.0,
            assignment: Vec::new(),
        });
    }

    // slot j < gt.len() is a real box, the rest are background
    let costs: Vec<Vec<f64>> = predictions
        .iter()
        .map(|p| {
            (0..k)
                .map(|j| cost(p, ground_truth.get(j)))
                .collect()
        })
        .collect();

    let full = 1usize << k;
    let mut best = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    best[0] = 0.0;
    for mask in 0..full {
        if !best[mask].is_finite() && mask != 0 {
            continue;
        }
        let i = mask.count_ones() as usize;
        if i == k {
            continue;
        }
        for (j, &c) in costs[i].iter().enumerate() {
            if mask & (1 << j) != 0 {
                continue;
            }
            let next = mask | (1 << j);
            let total = best[mask] + c;
            if total < best[next] {
                best[next] = total;
                choice[next] = j;
            }
        }
    }

    let mut slots = vec![0usize; k];
    let mut mask = full - 1;
    for i in (0..k).rev() {
        let j = choice[mask];
        slots[i] = j;
        mask &= !(1 << j);
    }
    let assignment = slots
        .into_iter()
        .map(|j| (j < ground_truth.len()).then_some(j))
        .collect();
    Ok(SetMatching {
        distance: best[full - 1],
        assignment,
    })
}

/// Ensemble fusion of several models' boxes.
///
/// Boxes from all models are visited in descending score order. Each joins
/// the existing cluster whose fused box overlaps it most (IoU ≥ threshold) or
/// seeds a new one. A cluster's coordinates are the mean of its members
/// weighted by `model weight × score`; its score is the model-weighted mean
/// score times the fraction of models that contributed to it.
pub fn weighted_box_fusion(
    model_outputs: &[(f64, Vec<DetectionBox>)],
    iou_threshold: f64,
) -> Result<Vec<DetectionBox>> {
    Ok(fuse_box_clusters(model_outputs, iou_threshold)?
        .into_iter()
        .map(|c| c.fused)
        .collect())
}

/// One output box of [`fuse_box_clusters`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusedCluster {
    pub fused: DetectionBox,
    /// `(model, box index)` of every member, highest score first.
    pub members: Vec<(usize, usize)>,
}

/// [`weighted_box_fusion`] that also reports which input boxes formed each
/// output box.
pub fn fuse_box_clusters(
    model_outputs: &[(f64, Vec<DetectionBox>)],
    iou_threshold: f64,
) -> Result<Vec<FusedCluster>> {
    if let Some((w, _)) = model_outputs.iter().find(|(w, _)| !(*w > 0.0)) {
        return Err(Error::invalid(format!("model weight {w} must be positive")));
    }
    let total_models = model_outputs.len();
    let entries: Vec<(usize, usize, f64, &DetectionBox)> = model_outputs
        .iter()
        .enumerate()
        .flat_map(|(m, (w, boxes))| boxes.iter().enumerate().map(move |(i, b)| (m, i, *w, b)))
        .collect();

    struct Cluster {
        fused: DetectionBox,
        members: Vec<(usize, f64, f64, [f64; 4])>,
        sources: Vec<(usize, usize)>,
    }

    impl Cluster {
        fn refresh(&mut self, total_models: usize) {
            let mut coord = [0.0; 4];
            let mut coord_w = 0.0;
            let mut score_sum = 0.0;
            let mut weight_sum = 0.0;
            let mut models: Vec<usize> = Vec::new();
            for &(m, w, s, c) in &self.members {
                for (acc, v) in coord.iter_mut().zip(c) {
                    *acc += w * s * v;
                }
                coord_w += w * s;
                score_sum += w * s;
                weight_sum += w;
                if !models.contains(&m) {
                    models.push(m);
                }
            }
            if coord_w > 0.0 {
                for v in coord.iter_mut() {
                    *v /= coord_w;
                }
            } else {
                // all-zero scores: fall back to the plain mean
                coord = [0.0; 4];
                for &(_, _, _, c) in &self.members {
                    for (acc, v) in coord.iter_mut().zip(c) {
                        *acc += v / self.members.len() as f64;
                    }
                }
            }
            let [x0, y0, x1, y1] = coord;
            let frac = models.len() as f64 / total_models as f64;
            self.fused = DetectionBox {
                x0,
                y0,
                x1,
                y1,
                score: (score_sum / weight_sum * frac).clamp(0.0, 1.0),
                ..Default::default()
            };
        }
    }

    let mut clusters: Vec<Cluster> = Vec::new();
    for idx in score_order(&entries, |e| e.3.score) {
        let (m, i, w, b) = entries[idx];
        let best = clusters
            .iter()
            .enumerate()
            .map(|(c, cl)| (c, iou(&cl.fused, b)))
            .filter(|&(_, o)| o >= iou_threshold)
            .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                Some(a) if a.1 >= cur.1 => Some(a),
                _ => Some(cur),
            });
        let member = (m, w, b.score, [b.x0, b.y0, b.x1, b.y1]);
        match best {
            Some((c, _)) => {
                clusters[c].members.push(member);
                clusters[c].sources.push((m, i));
                clusters[c].refresh(total_models);
            }
            None => {
                let mut cl = Cluster {
                    fused: b.clone(),
                    members: vec![member],
                    sources: vec![(m, i)],
                };
                cl.refresh(total_models);
                clusters.push(cl);
            }
        }
    }

    let order = score_order(&clusters, |c| c.fused.score);
    let mut slots: Vec<Option<Cluster>> = clusters.into_iter().map(Some).collect();
    Ok(order
        .into_iter()
        .map(|i| {
            let c = slots[i].take().expect("each cluster visited once");
            FusedCluster {
                fused: c.fused,
                members: c.sources,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64, s: f64) -> DetectionBox {
        DetectionBox::new(x0, y0, x1, y1, s).unwrap()
    }

    #[test]
    fn iou_worked_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0, 1.0)), 0.0);
        let v = iou(&a, &bx(1.0, 1.0, 3.0, 3.0, 1.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(DetectionBox::new(0.0, 0.0, 0.0, 1.0, 0.5).is_err());
        assert!(DetectionBox::new(0.0, 0.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn nms_keeps_higher_duplicate() {
        let out = nms(&[bx(0.0, 0.0, 4.0, 4.0, 0.8), bx(0.0, 0.0, 4.0, 4.0, 0.9)], 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
        assert_eq!(nms(&[bx(0.0, 0.0, 1.0, 1.0, 0.3)], 0.5).len(), 1);
    }

    #[test]
    fn set_nms_same_proposal_exempt() {
        // IoU 0.9: widths 10 vs 10, offset such that inter/union = 0.9
        let a = bx(0.0, 0.0, 10.0, 10.0, 0.9);
        let off = 10.0 - 2.0 * 10.0 * 0.9 / 1.9;
        let b = bx(off, 0.0, 10.0 + off, 10.0, 0.7);
        assert!((iou(&a, &b) - 0.9).abs() < 1e-9);
        let same = set_nms(&[a.clone().with_proposal(1), b.clone().with_proposal(1)], 0.5);
        assert_eq!(same.len(), 2);
        let diff = set_nms(&[a.clone().with_proposal(1), b.clone().with_proposal(2)], 0.5);
        assert_eq!(diff.len(), 1);
        let missing = set_nms(&[a.with_proposal(1), b], 0.5);
        assert_eq!(missing.len(), 1);
    }

    #[test]
    fn nms_ties_keep_input_order() {
        let a = bx(0.0, 0.0, 4.0, 4.0, 0.5).with_model(1);
        let b = bx(0.0, 0.0, 4.0, 4.0, 0.5).with_model(2);
        let out = nms(&[a, b], 0.5);
        assert_eq!(out[0].model_id, Some(1));
    }

    #[test]
    fn emd_perfect_match_is_zero() {
        let gt = vec![bx(0.0, 0.0, 2.0, 2.0, 1.0), bx(10.0, 10.0, 12.0, 12.0, 1.0)];
        let m = emd_set_distance(&gt, &gt, default_emd_cost).unwrap();
        assert_eq!(m.distance, 0.0);
        assert_eq!(m.assignment, vec![Some(0), Some(1)]);
    }

    #[test]
    fn emd_crossed_pairs_swap() {
        let gt = vec![bx(0.0, 0.0, 2.0, 2.0, 1.0), bx(10.0, 10.0, 12.0, 12.0, 1.0)];
        let preds = vec![bx(10.0, 10.0, 12.0, 12.5, 0.9), bx(0.0, 0.0, 2.0, 2.5, 0.8)];
        let m = emd_set_distance(&preds, &gt, default_emd_cost).unwrap();
        assert_eq!(m.assignment, vec![Some(1), Some(0)]);
        let identity = default_emd_cost(&preds[0], Some(&gt[0])) + default_emd_cost(&preds[1], Some(&gt[1]));
        assert!(m.distance < identity);
    }

    #[test]
    fn emd_low_score_goes_to_background() {
        let gt = vec![bx(0.0, 0.0, 2.0, 2.0, 1.0)];
        let preds = vec![bx(0.0, 0.0, 2.0, 2.2, 0.3), bx(0.0, 0.0, 2.0, 2.2, 0.9)];
        let m = emd_set_distance(&preds, &gt, default_emd_cost).unwrap();
        assert_eq!(m.assignment, vec![None, Some(0)]);
    }

    #[test]
    fn emd_size_limits() {
        let p = vec![bx(0.0, 0.0, 1.0, 1.0, 0.5); 9];
        assert!(matches!(
            emd_set_distance(&p, &[], default_emd_cost),
            Err(Error::UnsupportedSize(_))
        ));
        let gt = vec![bx(0.0, 0.0, 1.0, 1.0, 0.5); 2];
        assert!(emd_set_distance(&p[..1], &gt, default_emd_cost).is_err());
    }

    #[test]
    fn wbf_two_model_worked_example() {
        let out = weighted_box_fusion(
            &[
                (1.0, vec![bx(0.0, 0.0, 10.0, 10.0, 0.8)]),
                (1.0, vec![bx(2.0, 0.0, 12.0, 10.0, 0.4)]),
            ],
            0.5,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].x0 - 0.8 / 1.2).abs() < 1e-12);
        assert!((out[0].score - 0.6).abs() < 1e-12);
    }

    #[test]
    fn wbf_single_model_merges_identical() {
        let out = weighted_box_fusion(
            &[(
                1.0,
                vec![
                    bx(0.0, 0.0, 10.0, 10.0, 0.9),
                    bx(0.0, 0.0, 10.0, 10.0, 0.7),
                    bx(50.0, 50.0, 60.0, 60.0, 0.5),
                ],
            )],
            0.55,
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[0].score - 0.8).abs() < 1e-12);
        assert_eq!((out[1].x0, out[1].score), (50.0, 0.5));
    }

    #[test]
    fn wbf_identical_models_reproduce_boxes() {
        let boxes = vec![bx(0.0, 0.0, 10.0, 10.0, 0.9), bx(30.0, 0.0, 40.0, 10.0, 0.6)];
        let out = weighted_box_fusion(&[(1.0, boxes.clone()), (1.0, boxes.clone())], 0.55).unwrap();
        assert_eq!(out.len(), 2);
        for (o, b) in out.iter().zip(&boxes) {
            assert!((o.x0 - b.x0).abs() < 1e-12 && (o.score - b.score).abs() < 1e-12);
        }
    }

    #[test]
    fn wbf_rejects_nonpositive_weight() {
        assert!(weighted_box_fusion(&[(0.0, vec![])], 0.5).is_err());
    }
}
