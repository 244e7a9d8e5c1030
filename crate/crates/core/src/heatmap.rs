//! Heatmap fusion and decoding.
//!
//! A [`Heatmap`] stores `J` response planes on an `H × W` grid together with
//! the affine map from grid coordinates (column, row) to source-image pixels.
//! Responses are kept unclamped so fusion stays linear; clamping to `[0, 1]`
//! happens only when keypoint scores are read out.

use crate::detection::DetectionBox;
use crate::error::{Error, Result};
use crate::geometry::AffineTransform;
use crate::pose::{Keypoint, Pose};

/// Box rescale factors used for multi-scale testing.
pub const DEFAULT_SCALES: [f64; 3] = [0.7, 1.0, 1.3];

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    joints: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
    transform: AffineTransform,
}

impl Heatmap {
    pub fn new(
        joints: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
        transform: AffineTransform,
    ) -> Result<Self> {
        if joints < 1 || height < 2 || width < 2 {
            return Err(Error::invalid(format!(
                "heatmap needs J ≥ 1 and H, W ≥ 2, got {joints}×{height}×{width}"
            )));
        }
        if values.len() != joints * height * width {
            return Err(Error::invalid(format!(
                "heatmap expects {} values, got {}",
                joints * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("heatmap contains infinite values"));
        }
        Ok(Heatmap {
            joints,
            height,
            width,
            values,
            transform,
        })
    }

    pub fn zeros(joints: usize, height: usize, width: usize, transform: AffineTransform) -> Result<Self> {
        Self::new(joints, height, width, vec![0.0; joints * height * width], transform)
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transform(&self) -> &AffineTransform {
        &self.transform
    }

    pub fn with_transform(mut self, transform: AffineTransform) -> Self {
        self.transform = transform;
        self
    }

    #[inline]
    fn idx(&self, j: usize, y: usize, x: usize) -> usize {
        (j * self.height + y) * self.width + x
    }

    pub fn get(&self, j: usize, y: usize, x: usize) -> f64 {
        self.values[self.idx(j, y, x)]
    }

    pub fn set(&mut self, j: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(j, y, x);
        self.values[i] = v;
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[j * n..(j + 1) * n]
    }

    fn same_shape(&self, other: &Heatmap) -> bool {
        self.joints == other.joints && self.height == other.height && self.width == other.width
    }

    /// Bilinear sample of channel `j` at fractional grid position; `None`
    /// outside `[0, W−1] × [0, H−1]`.
    pub fn sample(&self, j: usize, x: f64, y: f64) -> Option<f64> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(j, y0, x0) * (1.0 - fx) + self.get(j, y0, x0 + 1) * fx;
        let bottom = self.get(j, y0 + 1, x0) * (1.0 - fx) + self.get(j, y0 + 1, x0 + 1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Left/right channel pairs exchanged by a horizontal flip.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointFlipPairs(Vec<(usize, usize)>);

impl JointFlipPairs {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &pairs {
            if a == b || !seen.insert(a) || !seen.insert(b) {
                return Err(Error::invalid(format!("flip pair ({a}, {b}) reuses a joint")));
            }
        }
        Ok(JointFlipPairs(pairs))
    }

    pub fn empty() -> Self {
        JointFlipPairs(Vec::new())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    /// Channel permutation: `partner[c]` is the channel that lands in `c`.
    fn partners(&self, joints: usize) -> Result<Vec<usize>> {
        let mut partner: Vec<usize> = (0..joints).collect();
        for &(a, b) in &self.0 {
            if a >= joints || b >= joints {
                return Err(Error::invalid(format!(
                    "flip pair ({a}, {b}) out of range for {joints} joints"
                )));
            }
            partner[a] = b;
            partner[b] = a;
        }
        Ok(partner)
    }
}

/// Mirrors columns and swaps paired channels. With `shift`, the mirrored map
/// is then moved one cell toward larger column indices, replicating the first
/// column. The transform is left unchanged.
pub fn flip_heatmap(h: &Heatmap, pairs: &JointFlipPairs, shift: bool) -> Result<Heatmap> {
    let partner = pairs.partners(h.joints)?;
    let (hh, ww) = (h.height, h.width);
    let mut out = h.clone();
    for (c, &src) in partner.iter().enumerate() {
        for y in 0..hh {
            for x in 0..ww {
                let mirrored_col = |col: usize| h.get(src, y, ww - 1 - col);
                let v = if shift {
                    mirrored_col(x.saturating_sub(1))
                } else {
                    mirrored_col(x)
                };
                out.set(c, y, x, v);
            }
        }
    }
    Ok(out)
}

/// Weighted elementwise mean. Weights are normalized to sum to one.
pub fn fuse_heatmaps(hs: &[Heatmap], weights: &[f64]) -> Result<Heatmap> {
    let first = hs
        .first()
        .ok_or_else(|| Error::invalid("no heatmaps to fuse"))?;
    if weights.len() != hs.len() {
        return Err(Error::invalid(format!(
            "{} heatmaps but {} weights",
            hs.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("fusion weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("fusion weights sum to zero"));
    }
    for h in &hs[1..] {
        if !first.same_shape(h) {
            return Err(Error::invalid(format!(
                "heatmap shape {}×{}×{} does not match {}×{}×{}",
                h.joints, h.height, h.width, first.joints, first.height, first.width
            )));
        }
        if !first.transform.approx_eq(&h.transform, 1e-9) {
            return Err(Error::invalid(
                "heatmaps live on different grids; resample before fusing",
            ));
        }
    }
    let norm: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut values = vec![0.0; first.values.len()];
    for (h, w) in hs.iter().zip(&norm) {
        if *w == 0.0 {
            continue;
        }
        for (acc, v) in values.iter_mut().zip(&h.values) {
            *acc += w * v;
        }
    }
    Heatmap::new(first.joints, first.height, first.width, values, first.transform)
}

/// Bilinear resampling onto another grid. Target cells that map outside the
/// source grid are 0.
pub fn resample_heatmap(
    h: &Heatmap,
    target_transform: &AffineTransform,
    target_h: usize,
    target_w: usize,
) -> Result<Heatmap> {
    if target_transform.determinant().abs() < 1e-12 || h.transform.determinant().abs() < 1e-12 {
        return Err(Error::invalid("resampling requires invertible transforms"));
    }
    // target grid -> image -> source grid
    let to_source = h.transform.inverse().compose(target_transform);
    let mut out = Heatmap::zeros(h.joints, target_h, target_w, *target_transform)?;
    for y in 0..target_h {
        for x in 0..target_w {
            let (sx, sy) = to_source.apply(x as f64, y as f64);
            for j in 0..h.joints {
                if let Some(v) = h.sample(j, sx, sy) {
                    out.set(j, y, x, v);
                }
            }
        }
    }
    Ok(out)
}

/// Grid-space peak of one channel: the argmax cell (lowest row-major index on
/// ties) nudged a quarter cell toward the larger neighbor on each axis.
/// Returns `(x, y, max_response)`.
pub fn refine_peak(h: &Heatmap, j: usize) -> Result<(f64, f64, f64)> {
    let plane = h.channel(j);
    if plane.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid(format!("heatmap channel {j} contains NaN")));
    }
    let mut best = 0;
    for (i, v) in plane.iter().enumerate() {
        if *v > plane[best] {
            best = i;
        }
    }
    let (w, hh) = (h.width, h.height);
    let (cx, cy) = (best % w, best / w);
    let quarter = |lo: f64, hi: f64| {
        if hi > lo {
            0.25
        } else if hi < lo {
            -0.25
        } else {
            0.0
        }
    };
    let mut x = cx as f64;
    let mut y = cy as f64;
    if cx > 0 && cx + 1 < w {
        x += quarter(plane[best - 1], plane[best + 1]);
    }
    if cy > 0 && cy + 1 < hh {
        y += quarter(plane[best - w], plane[best + w]);
    }
    Ok((x, y, plane[best]))
}

/// Decodes every channel to an image-space keypoint. Joint scores are the
/// peak responses clamped to `[0, 1]`; the instance score is their mean.
pub fn decode_keypoints(h: &Heatmap) -> Result<Pose> {
    let keypoints = (0..h.joints)
        .map(|j| {
            let (gx, gy, peak) = refine_peak(h, j)?;
            let (x, y) = h.transform.apply(gx, gy);
            Ok(Keypoint::new(x, y, peak))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pose::from_keypoints(keypoints))
}

/// Transform from crop pixels to image pixels for `bbox`.
///
/// The box is grown (never shrunk) about its center to `aspect_w:aspect_h`,
/// scaled by `scale` about its center, then stretched over a
/// `crop_w × crop_h` crop.
pub fn box_to_crop_transform(
    bbox: &DetectionBox,
    aspect_w: u32,
    aspect_h: u32,
    crop_w: u32,
    crop_h: u32,
    scale: f64,
) -> Result<AffineTransform> {
    let (w, h) = (bbox.x1 - bbox.x0, bbox.y1 - bbox.y0);
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::invalid(format!("degenerate box {w}×{h}")));
    }
    if aspect_w == 0 || aspect_h == 0 || crop_w == 0 || crop_h == 0 {
        return Err(Error::invalid("aspect and crop sizes must be positive"));
    }
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("scale {scale} must be positive")));
    }
    let target = aspect_w as f64 / aspect_h as f64;
    let (mut bw, mut bh) = (w, h);
    if bw / bh > target {
        bh = bw / target;
    } else {
        bw = bh * target;
    }
    bw *= scale;
    bh *= scale;
    let (cx, cy) = bbox.center();
    AffineTransform::scale_translate(
        bw / crop_w as f64,
        bh / crop_h as f64,
        cx - bw * 0.5,
        cy - bh * 0.5,
    )
}

/// Transform from heatmap grid cells to image pixels for a heatmap of
/// `grid_w × grid_h` cells covering a `crop_w × crop_h` crop.
pub fn heatmap_transform(
    crop_to_image: &AffineTransform,
    crop_w: u32,
    crop_h: u32,
    grid_w: usize,
    grid_h: usize,
) -> Result<AffineTransform> {
    let stride = AffineTransform::scale_translate(
        crop_w as f64 / grid_w as f64,
        crop_h as f64 / grid_h as f64,
        0.0,
        0.0,
    )?;
    Ok(crop_to_image.compose(&stride))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_row(vals: &[f64]) -> Heatmap {
        let w = vals.len();
        let mut v = vals.to_vec();
        v.extend_from_slice(vals);
        Heatmap::new(1, 2, w, v, AffineTransform::identity()).unwrap()
    }

    #[test]
    fn crop_transform_identity_case() {
        let b = DetectionBox::new(0.0, 0.0, 192.0, 256.0, 1.0).unwrap();
        let t = box_to_crop_transform(&b, 3, 4, 192, 256, 1.0).unwrap();
        assert_eq!(t.apply(0.0, 0.0), (0.0, 0.0));
        assert_eq!(t.apply(192.0, 256.0), (192.0, 256.0));
    }

    #[test]
    fn crop_transform_expands_width() {
        let b = DetectionBox::new(0.0, 0.0, 100.0, 256.0, 1.0).unwrap();
        let t = box_to_crop_transform(&b, 3, 4, 192, 256, 1.0).unwrap();
        let (x, y) = t.apply(0.0, 0.0);
        assert!((x + 46.0).abs() < 1e-12 && y.abs() < 1e-12);
        let (cx, cy) = t.apply(96.0, 128.0);
        assert!((cx - 50.0).abs() < 1e-12 && (cy - 128.0).abs() < 1e-12);
    }

    #[test]
    fn crop_transform_rejects_bad_scale() {
        let b = DetectionBox::new(0.0, 0.0, 10.0, 10.0, 1.0).unwrap();
        assert!(box_to_crop_transform(&b, 3, 4, 192, 256, 0.0).is_err());
    }

    #[test]
    fn flip_constant_is_unchanged() {
        let h = Heatmap::new(2, 3, 3, vec![0.4; 18], AffineTransform::identity()).unwrap();
        let f = flip_heatmap(&h, &JointFlipPairs::empty(), true).unwrap();
        assert_eq!(f, h);
    }

    #[test]
    fn flip_mirror_then_shift() {
        let h = single_row(&[1.0, 2.0, 3.0, 4.0]);
        let f = flip_heatmap(&h, &JointFlipPairs::empty(), true).unwrap();
        assert_eq!(&f.channel(0)[..4], &[4.0, 4.0, 3.0, 2.0]);
        let g = flip_heatmap(&h, &JointFlipPairs::empty(), false).unwrap();
        assert_eq!(&g.channel(0)[..4], &[4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn flip_swaps_pairs() {
        let vals: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let h = Heatmap::new(2, 2, 3, vals, AffineTransform::identity()).unwrap();
        let pairs = JointFlipPairs::new(vec![(0, 1)]).unwrap();
        let f = flip_heatmap(&h, &pairs, false).unwrap();
        let m = flip_heatmap(&h, &JointFlipPairs::empty(), false).unwrap();
        assert_eq!(f.channel(0), m.channel(1));
        assert_eq!(f.channel(1), m.channel(0));
        assert!(flip_heatmap(&h, &JointFlipPairs::new(vec![(0, 2)]).unwrap(), false).is_err());
    }

    #[test]
    fn flip_pairs_reject_reuse() {
        assert!(JointFlipPairs::new(vec![(0, 1), (1, 2)]).is_err());
        assert!(JointFlipPairs::new(vec![(3, 3)]).is_err());
    }

    #[test]
    fn fuse_identity_and_errors() {
        let h = single_row(&[0.1, 0.5, 0.2]);
        assert_eq!(fuse_heatmaps(std::slice::from_ref(&h), &[1.0]).unwrap(), h);
        assert_eq!(fuse_heatmaps(&[h.clone(), h.clone()], &[1.0, 1.0]).unwrap(), h);
        assert!(fuse_heatmaps(&[], &[]).is_err());
        assert!(fuse_heatmaps(std::slice::from_ref(&h), &[0.0]).is_err());
        let other = single_row(&[0.1, 0.5]);
        assert!(fuse_heatmaps(&[h.clone(), other], &[1.0, 1.0]).is_err());
        let moved = h.clone().with_transform(AffineTransform::identity().translated(1.0, 0.0));
        assert!(fuse_heatmaps(&[h, moved], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn fuse_two_models_is_mean() {
        let a = single_row(&[0.0, 1.0, 0.0]);
        let b = single_row(&[1.0, 0.0, 0.5]);
        let f = fuse_heatmaps(&[a, b], &[1.0, 1.0]).unwrap();
        assert_eq!(&f.channel(0)[..3], &[0.5, 0.5, 0.25]);
    }

    #[test]
    fn decode_symmetric_peak_has_no_shift() {
        let mut h = Heatmap::zeros(1, 12, 10, AffineTransform::identity()).unwrap();
        h.set(0, 7, 5, 1.0);
        let p = decode_keypoints(&h).unwrap();
        assert_eq!((p.keypoints[0].x, p.keypoints[0].y), (5.0, 7.0));
        assert_eq!(p.keypoints[0].score, 1.0);
    }

    #[test]
    fn decode_quarter_shift() {
        let mut h = Heatmap::zeros(1, 12, 10, AffineTransform::identity()).unwrap();
        h.set(0, 7, 5, 1.0);
        h.set(0, 7, 6, 0.6);
        h.set(0, 7, 4, 0.2);
        h.set(0, 8, 5, 0.5);
        h.set(0, 6, 5, 0.1);
        let p = decode_keypoints(&h).unwrap();
        assert_eq!((p.keypoints[0].x, p.keypoints[0].y), (5.25, 7.25));
    }

    #[test]
    fn decode_zero_channel_and_nan() {
        let t = AffineTransform::scale_translate(4.0, 4.0, 10.0, 20.0).unwrap();
        let h = Heatmap::zeros(1, 4, 4, t).unwrap();
        let p = decode_keypoints(&h).unwrap();
        assert_eq!((p.keypoints[0].x, p.keypoints[0].y, p.keypoints[0].score), (10.0, 20.0, 0.0));
        assert_eq!(p.score, 0.0);
        let mut bad = h.clone();
        bad.set(0, 1, 1, f64::NAN);
        assert!(decode_keypoints(&bad).is_err());
    }

    #[test]
    fn decode_clamps_scores_only_at_readout() {
        let mut h = Heatmap::zeros(1, 3, 3, AffineTransform::identity()).unwrap();
        h.set(0, 1, 1, 1.8);
        assert_eq!(decode_keypoints(&h).unwrap().keypoints[0].score, 1.0);
        assert_eq!(h.get(0, 1, 1), 1.8);
    }

    #[test]
    fn resample_identity_grid() {
        let vals: Vec<f64> = (0..20).map(|v| (v as f64 * 0.37).sin()).collect();
        let h = Heatmap::new(1, 4, 5, vals, AffineTransform::scale_translate(2.0, 2.0, 3.0, 1.0).unwrap()).unwrap();
        let r = resample_heatmap(&h, h.transform(), 4, 5).unwrap();
        for (a, b) in r.values().iter().zip(h.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resample_constant_interior() {
        let h = Heatmap::new(1, 6, 6, vec![0.3; 36], AffineTransform::identity()).unwrap();
        let target = AffineTransform::scale_translate(0.5, 0.5, 1.0, 1.0).unwrap();
        let r = resample_heatmap(&h, &target, 7, 7).unwrap();
        assert!(r.values().iter().all(|v| (v - 0.3).abs() < 1e-6));
        let outside = AffineTransform::scale_translate(1.0, 1.0, 100.0, 0.0).unwrap();
        let r = resample_heatmap(&h, &outside, 3, 3).unwrap();
        assert!(r.values().iter().all(|v| *v == 0.0));
    }
}
