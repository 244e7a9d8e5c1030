//! Flow-guided temporal smoothing of jittery pose estimates.
//!
//! Ground-truth poses from a synthetic video get Gaussian noise; smoothing
//! with the neighbors carried along the optical flow pulls them back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crowdpose::smoothing::VideoSmoothingParams;
use crowdpose::synth::{generate, SynthConfig};
use crowdpose::{smooth_video, Pose, Result};

fn mean_error(a: &[Pose], b: &[Pose]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (p, q) in a.iter().zip(b) {
        for (k, g) in p.keypoints.iter().zip(&q.keypoints) {
            sum += (k.x - g.x).hypot(k.y - g.y);
            n += 1;
        }
    }
    sum / n as f64
}

/// Returns mean joint error before and after smoothing.
pub fn run_example() -> Result<(f64, f64)> {
    let mut cfg = SynthConfig::crossing(11, 2, 60);
    cfg.heatmaps = None;
    let video = generate(&cfg)?;
    let truth: Vec<Pose> = video.gt.iter().map(|r| r.pose.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 2.0).expect("valid sigma");
    let noisy: Vec<Pose> = truth
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for k in &mut q.keypoints {
                k.x += noise.sample(&mut rng);
                k.y += noise.sample(&mut rng);
            }
            q
        })
        .collect();
    let smoothed = smooth_video(&noisy, &video.frames, &VideoSmoothingParams::default())?;
    let (before, after) = (mean_error(&noisy, &truth), mean_error(&smoothed, &truth));
    println!("mean joint error {before:.3}px -> {after:.3}px");
    Ok((before, after))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
