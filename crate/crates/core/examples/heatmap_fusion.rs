//! Multi-scale and flip-test heatmap fusion for one person box.
//!
//! Heatmaps at box scales 0.7, 1.0 and 1.3 plus a mirrored crop are brought
//! onto the scale-1.0 grid, averaged and decoded back to image pixels.

use crowdpose::heatmap::{flip_heatmap, fuse_heatmaps, resample_heatmap, JointFlipPairs};
use crowdpose::synth::{ideal_heatmap, SynthConfig, SynthHeatmaps};
use crowdpose::{decode_keypoints, Result, Skeleton};

/// Returns the largest joint error in pixels after fusion.
pub fn run_example() -> Result<f64> {
    let person = &SynthConfig::crossing(1, 1, 10).persons[0];
    let truth = person.pose(4);
    let bbox = person.bbox(4);
    let spec = SynthHeatmaps::default();
    let pairs = JointFlipPairs::new(Skeleton::default_14().flip_pairs)?;

    let base = ideal_heatmap(&truth, &bbox, &spec, 1.0)?;
    let (grid, gh, gw) = (*base.transform(), base.height(), base.width());
    let mut maps = vec![base.clone()];
    for scale in [0.7, 1.3] {
        let h = ideal_heatmap(&truth, &bbox, &spec, scale)?;
        maps.push(resample_heatmap(&h, &grid, gh, gw)?);
    }
    // what a network would emit for the mirrored crop, then undone
    let mirrored = flip_heatmap(&base, &pairs, false)?;
    maps.push(flip_heatmap(&mirrored, &pairs, false)?);

    let fused = fuse_heatmaps(&maps, &[1.0, 1.0, 1.0, 1.0])?;
    let pose = decode_keypoints(&fused)?;
    let mut worst: f64 = 0.0;
    for (name, (d, t)) in Skeleton::default_14().names.iter().zip(pose.keypoints.iter().zip(&truth.keypoints)) {
        let err = (d.x - t.x).hypot(d.y - t.y);
        worst = worst.max(err);
        println!("{name:>15}: ({:7.2}, {:7.2}) score {:.3}  error {err:.2}px", d.x, d.y, d.score);
    }
    println!("instance score {:.3}, worst error {worst:.2}px", pose.score);
    Ok(worst)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
