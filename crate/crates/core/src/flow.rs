//! Sparse pyramidal Lucas-Kanade flow evaluated at joint locations, and pose
//! propagation along it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image must be at least 1×1"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image {width}×{height} expects {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite pixels"));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn from_gray8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(width, height, pixels.iter().map(|&p| p as f64 / 255.0).collect())
    }

    /// Luma conversion with weights 0.299 / 0.587 / 0.114.
    pub fn from_rgb8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::invalid("RGB buffer size does not match dimensions"));
        }
        let data = pixels
            .chunks_exact(3)
            .map(|c| (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64) / 255.0)
            .collect();
        Self::new(width, height, data)
    }

    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample with border replication.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xf = x.floor();
        let yf = y.floor();
        let fx = x - xf;
        let fy = y - yf;
        let (x0, y0) = (xf as isize, yf as isize);
        let a = self.get_clamped(x0, y0);
        let b = self.get_clamped(x0 + 1, y0);
        let c = self.get_clamped(x0, y0 + 1);
        let d = self.get_clamped(x0 + 1, y0 + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn blur_and_decimate(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width, img.height);
    // horizontal pass
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = BINOMIAL5
                .iter()
                .enumerate()
                .map(|(k, c)| c * img.get_clamped(x as isize + k as isize - 2, y as isize))
                .sum();
        }
    }
    let (nw, nh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            let (sx, sy) = (2 * x, 2 * y);
            let v: f64 = BINOMIAL5
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let yy = (sy as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                    c * tmp[yy * w + sx]
                })
                .sum();
            out.push(v);
        }
    }
    GrayImage {
        width: nw,
        height: nh,
        data: out,
    }
}

/// Level 0 is the input; each further level is the previous one smoothed by
/// a 5-tap binomial kernel (border replicated) and decimated by 2.
pub fn gaussian_pyramid(img: &GrayImage, levels: usize) -> Result<Vec<GrayImage>> {
    if levels == 0 {
        return Err(Error::invalid("pyramid needs at least one level"));
    }
    let min_side = 1usize << (levels - 1);
    if img.width < min_side || img.height < min_side {
        return Err(Error::invalid(format!(
            "{}×{} image is too small for {levels} pyramid levels",
            img.width, img.height
        )));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for _ in 1..levels {
        let next = blur_and_decimate(out.last().unwrap());
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowVector {
    pub dx: f64,
    pub dy: f64,
    pub valid: bool,
}

impl FlowVector {
    pub fn new(dx: f64, dy: f64) -> Self {
        FlowVector { dx, dy, valid: true }
    }

    pub fn invalid() -> Self {
        FlowVector {
            dx: 0.0,
            dy: 0.0,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidParams {
    pub levels: usize,
    pub window_radius: usize,
    pub max_iterations: usize,
    pub epsilon: f64,
    /// Threshold on the smallest eigenvalue of the window-averaged structure
    /// tensor.
    pub min_eigenvalue: f64,
}

impl Default for PyramidParams {
    fn default() -> Self {
        PyramidParams {
            levels: 3,
            window_radius: 10,
            max_iterations: 30,
            epsilon: 0.01,
            min_eigenvalue: 1e-4,
        }
    }
}

impl PyramidParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 || self.window_radius < 1 || !(self.epsilon > 0.0) {
            return Err(Error::invalid(
                "flow parameters need levels ≥ 1, window ≥ 1 and epsilon > 0",
            ));
        }
        Ok(())
    }
}

/// Image pyramid with central-difference gradients, built once per frame and
/// shareable across workers.
#[derive(Debug, Clone)]
pub struct FlowPyramid {
    levels: Vec<GrayImage>,
    grad_x: Vec<GrayImage>,
    grad_y: Vec<GrayImage>,
}

impl FlowPyramid {
    pub fn new(img: &GrayImage, levels: usize) -> Result<Self> {
        let levels = gaussian_pyramid(img, levels)?;
        let grad = |img: &GrayImage, horizontal: bool| {
            let mut out = img.clone();
            for y in 0..img.height {
                for x in 0..img.width {
                    let (xi, yi) = (x as isize, y as isize);
                    let v = if horizontal {
                        img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi)
                    } else {
                        img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1)
                    };
                    out.data[y * img.width + x] = 0.5 * v;
                }
            }
            out
        };
        let grad_x = levels.iter().map(|l| grad(l, true)).collect();
        let grad_y = levels.iter().map(|l| grad(l, false)).collect();
        Ok(FlowPyramid {
            levels,
            grad_x,
            grad_y,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn base(&self) -> &GrayImage {
        &self.levels[0]
    }
}

fn track_point(prev: &FlowPyramid, next: &FlowPyramid, px: f64, py: f64, params: &PyramidParams) -> FlowVector {
    let base = prev.base();
    if !px.is_finite() || !py.is_finite() || !base.contains(px, py) {
        return FlowVector::invalid();
    }
    let r = params.window_radius as isize;
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let levels = prev.levels().min(next.levels());
    let (mut gx, mut gy) = (0.0, 0.0);
    let mut patch: Vec<(f64, f64, f64)> = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);

    for level in (0..levels).rev() {
        let s = (1u32 << level) as f64;
        let (lx, ly) = (px / s, py / s);
        let img_i = &prev.levels[level];
        let img_j = &next.levels[level];

        patch.clear();
        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for wy in -r..=r {
            for wx in -r..=r {
                let (sx, sy) = (lx + wx as f64, ly + wy as f64);
                let ix = prev.grad_x[level].sample(sx, sy);
                let iy = prev.grad_y[level].sample(sx, sy);
                let iv = img_i.sample(sx, sy);
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
                patch.push((iv, ix, iy));
            }
        }
        let min_eig = ((gxx + gyy) - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt()) / (2.0 * n);
        let det = gxx * gyy - gxy * gxy;
        if min_eig < params.min_eigenvalue || det <= f64::EPSILON {
            if level == 0 {
                return FlowVector::invalid();
            }
            gx *= 2.0;
            gy *= 2.0;
            continue;
        }

        let (mut vx, mut vy) = (0.0, 0.0);
        for _ in 0..params.max_iterations {
            let (mut bx, mut by) = (0.0, 0.0);
            let mut k = 0;
            for wy in -r..=r {
                for wx in -r..=r {
                    let (iv, ix, iy) = patch[k];
                    k += 1;
                    let jv = img_j.sample(lx + gx + vx + wx as f64, ly + gy + vy + wy as f64);
                    let diff = iv - jv;
                    bx += diff * ix;
                    by += diff * iy;
                }
            }
            let ex = (gyy * bx - gxy * by) / det;
            let ey = (gxx * by - gxy * bx) / det;
            vx += ex;
            vy += ey;
            if ex * ex + ey * ey < params.epsilon * params.epsilon {
                break;
            }
        }
        if level == 0 {
            gx += vx;
            gy += vy;
        } else {
            gx = 2.0 * (gx + vx);
            gy = 2.0 * (gy + vy);
        }
    }

    if !gx.is_finite() || !gy.is_finite() || !base.contains(px + gx, py + gy) {
        return FlowVector::invalid();
    }
    FlowVector::new(gx, gy)
}

/// Tracks points between two prepared pyramids.
pub fn track_points(
    prev: &FlowPyramid,
    next: &FlowPyramid,
    points: &[(f64, f64)],
    params: &PyramidParams,
) -> Result<Vec<FlowVector>> {
    params.validate()?;
    let (a, b) = (prev.base(), next.base());
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "frame sizes differ: {}×{} vs {}×{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(points
        .iter()
        .map(|&(x, y)| track_point(prev, next, x, y, params))
        .collect())
}

/// Pyramidal iterative Lucas-Kanade at each point. Points leaving the image
/// or sitting on a poorly conditioned window are returned invalid.
pub fn lucas_kanade_at_points(
    prev: &GrayImage,
    next: &GrayImage,
    points: &[(f64, f64)],
    params: &PyramidParams,
) -> Result<Vec<FlowVector>> {
    params.validate()?;
    if prev.width != next.width || prev.height != next.height {
        return Err(Error::invalid(format!(
            "frame sizes differ: {}×{} vs {}×{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    let levels = max_levels(prev, params.levels);
    let p = FlowPyramid::new(prev, levels)?;
    let n = FlowPyramid::new(next, levels)?;
    track_points(&p, &n, points, params)
}

/// Requested level count reduced until the image is large enough.
pub fn max_levels(img: &GrayImage, requested: usize) -> usize {
    let mut levels = requested.max(1);
    while levels > 1 && (img.width < 1 << (levels - 1) || img.height < 1 << (levels - 1)) {
        levels -= 1;
    }
    levels
}

/// Score factor applied to joints whose flow is invalid.
pub const DEFAULT_PROPAGATION_FAILURE_FACTOR: f64 = 0.0;

/// Moves each joint along its flow vector. Joints with invalid flow stay put
/// and have their score multiplied by `failure_factor`.
pub fn propagate_pose(pose: &Pose, flow_at_joints: &[FlowVector], failure_factor: f64) -> Result<Pose> {
    if pose.keypoints.len() != flow_at_joints.len() {
        return Err(Error::invalid(format!(
            "{} joints but {} flow vectors",
            pose.keypoints.len(),
            flow_at_joints.len()
        )));
    }
    let mut out = pose.clone();
    for (k, f) in out.keypoints.iter_mut().zip(flow_at_joints) {
        if f.valid {
            k.x += f.dx;
            k.y += f.dy;
        } else {
            k.score = (k.score * failure_factor).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Keypoint;

    fn texture(x: f64, y: f64) -> f64 {
        0.5 + 0.2 * (0.31 * x + 0.17 * y).sin() + 0.15 * (0.23 * y - 0.11 * x).cos()
            + 0.1 * (0.07 * x * 1.3 + 0.41 * y).sin()
    }

    #[test]
    fn pyramid_single_level_and_constant() {
        let img = GrayImage::new(8, 8, vec![0.6; 64]).unwrap();
        assert_eq!(gaussian_pyramid(&img, 1).unwrap(), vec![img.clone()]);
        let p = gaussian_pyramid(&img, 3).unwrap();
        assert_eq!((p[2].width(), p[2].height()), (2, 2));
        assert!(p.iter().all(|l| l.data().iter().all(|v| (v - 0.6).abs() < 1e-9)));
    }

    #[test]
    fn pyramid_too_small() {
        let img = GrayImage::new(3, 8, vec![0.0; 24]).unwrap();
        assert!(gaussian_pyramid(&img, 3).is_err());
        assert!(gaussian_pyramid(&img, 0).is_err());
    }

    #[test]
    fn luma_weights() {
        let g = GrayImage::from_rgb8(1, 1, &[255, 0, 0]).unwrap();
        assert!((g.get(0, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn zero_motion() {
        let img = GrayImage::from_fn(64, 64, |x, y| texture(x as f64, y as f64)).unwrap();
        let pts = [(20.0, 20.0), (32.5, 40.25)];
        let flow = lucas_kanade_at_points(&img, &img, &pts, &PyramidParams::default()).unwrap();
        for f in flow {
            assert!(f.valid);
            assert!(f.dx.abs() < 0.01 && f.dy.abs() < 0.01);
        }
    }

    #[test]
    fn textureless_is_invalid() {
        let img = GrayImage::new(64, 64, vec![0.5; 64 * 64]).unwrap();
        let flow = lucas_kanade_at_points(&img, &img, &[(30.0, 30.0)], &PyramidParams::default()).unwrap();
        assert!(!flow[0].valid);
    }

    #[test]
    fn size_mismatch_and_out_of_bounds() {
        let a = GrayImage::new(8, 8, vec![0.5; 64]).unwrap();
        let b = GrayImage::new(8, 4, vec![0.5; 32]).unwrap();
        assert!(lucas_kanade_at_points(&a, &b, &[], &PyramidParams::default()).is_err());
        let img = GrayImage::from_fn(32, 32, |x, y| texture(x as f64, y as f64)).unwrap();
        let f = lucas_kanade_at_points(&img, &img, &[(-5.0, 3.0)], &PyramidParams::default()).unwrap();
        assert!(!f[0].valid);
    }

    #[test]
    fn propagate_rules() {
        let pose = Pose::from_keypoints(vec![Keypoint::new(1.0, 2.0, 0.9), Keypoint::new(5.0, 6.0, 0.8)]);
        let same = propagate_pose(&pose, &[FlowVector::new(0.0, 0.0); 2], 0.0).unwrap();
        assert_eq!(same, pose);
        let moved = propagate_pose(&pose, &[FlowVector::new(5.0, 5.0); 2], 0.0).unwrap();
        assert_eq!((moved.keypoints[1].x, moved.keypoints[1].y), (10.0, 11.0));
        let mixed = propagate_pose(&pose, &[FlowVector::new(1.0, -1.0), FlowVector::invalid()], 0.0).unwrap();
        assert_eq!(mixed.keypoints[0], Keypoint::new(2.0, 1.0, 0.9));
        assert_eq!(mixed.keypoints[1], Keypoint::new(5.0, 6.0, 0.0));
        assert!(propagate_pose(&pose, &[FlowVector::invalid()], 0.0).is_err());
    }
}
