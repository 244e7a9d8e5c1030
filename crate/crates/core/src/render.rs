//! Skeleton and box overlays for eyeballing results.

use image::{Rgb, RgbImage};

use crate::detection::DetectionBox;
use crate::pose::{Pose, Skeleton};

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// Fixed color per track; untracked items are white.
pub fn track_color(track: Option<u64>) -> Rgb<u8> {
    match track {
        Some(t) => Rgb(PALETTE[(t % PALETTE.len() as u64) as usize]),
        None => Rgb([255, 255, 255]),
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham segment, clipped per pixel.
pub fn draw_line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb<u8>) {
    if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
        return;
    }
    let (mut x, mut y) = (x0.round() as i64, y0.round() as i64);
    let (xe, ye) = (x1.round() as i64, y1.round() as i64);
    let dx = (xe - x).abs();
    let dy = -(ye - y).abs();
    let sx = if x < xe { 1 } else { -1 };
    let sy = if y < ye { 1 } else { -1 };
    let mut err = dx + dy;
    // long off-screen segments are bounded by the image diagonal anyway
    let limit = 4 * (img.width() as i64 + img.height() as i64) + dx - dy;
    for _ in 0..=limit {
        put(img, x, y, c);
        if x == xe && y == ye {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

pub fn draw_box(img: &mut RgbImage, b: &DetectionBox, c: Rgb<u8>) {
    let corners = [(b.x0, b.y0), (b.x1, b.y0), (b.x1, b.y1), (b.x0, b.y1)];
    for i in 0..4 {
        draw_line(img, corners[i], corners[(i + 1) % 4], c);
    }
}

/// Draws limbs between joints scoring above `min_score` and a small cross on
/// every such joint.
pub fn draw_pose(img: &mut RgbImage, pose: &Pose, skeleton: &Skeleton, min_score: f64) {
    let c = track_color(pose.track_id);
    let kp = &pose.keypoints;
    let shown = |j: usize| kp.get(j).is_some_and(|k| k.score > min_score);
    for &(a, b) in &skeleton.edges {
        if shown(a) && shown(b) {
            draw_line(img, (kp[a].x, kp[a].y), (kp[b].x, kp[b].y), c);
        }
    }
    for k in kp.iter().filter(|k| k.score > min_score) {
        draw_line(img, (k.x - 2.0, k.y), (k.x + 2.0, k.y), c);
        draw_line(img, (k.x, k.y - 2.0), (k.x, k.y + 2.0), c);
    }
}

/// Frame with every box and pose drawn in its track color.
pub fn render_overlay(
    frame: &RgbImage,
    poses: &[Pose],
    boxes: &[(DetectionBox, Option<u64>)],
    skeleton: &Skeleton,
) -> RgbImage {
    let mut img = frame.clone();
    for (b, track) in boxes {
        draw_box(&mut img, b, track_color(*track));
    }
    for p in poses {
        draw_pose(&mut img, p, skeleton, 0.0);
    }
    img
}
