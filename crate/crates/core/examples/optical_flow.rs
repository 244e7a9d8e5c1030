//! Pyramidal Lucas-Kanade on a textured image shifted by a known amount.

use crowdpose::flow::{lucas_kanade_at_points, GrayImage, PyramidParams};
use crowdpose::Result;

fn texture(x: f64, y: f64) -> f64 {
    0.5 + 0.2 * (0.21 * x).sin() * (0.17 * y).cos() + 0.15 * (0.05 * x + 0.11 * y).sin() + 0.1 * (0.33 * x - 0.07 * y).cos()
}

/// Mean endpoint error over a grid of points for a `(3.4, −2.2)` shift.
pub fn run_example() -> Result<f64> {
    let (dx, dy) = (3.4, -2.2);
    let prev = GrayImage::from_fn(128, 128, |x, y| texture(x as f64, y as f64))?;
    let next = GrayImage::from_fn(128, 128, |x, y| texture(x as f64 - dx, y as f64 - dy))?;
    let points: Vec<(f64, f64)> = (0..6)
        .flat_map(|i| (0..6).map(move |j| (24.0 + 16.0 * i as f64, 24.0 + 16.0 * j as f64)))
        .collect();
    let flows = lucas_kanade_at_points(&prev, &next, &points, &PyramidParams::default())?;
    let valid: Vec<f64> = flows
        .iter()
        .filter(|f| f.valid)
        .map(|f| (f.dx - dx).hypot(f.dy - dy))
        .collect();
    let epe = valid.iter().sum::<f64>() / valid.len().max(1) as f64;
    println!("{} of {} points valid, mean endpoint error {epe:.4}px", valid.len(), points.len());
    Ok(epe)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
