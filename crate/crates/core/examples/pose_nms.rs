//! OKS-based pose suppression: near-duplicate skeletons collapse to the
//! highest scoring one, a nearby but distinct person survives.

use crowdpose::pose::{DEFAULT_MIN_INSTANCE_SCORE, DEFAULT_POSE_NMS_OKS, DEFAULT_SIGMA};
use crowdpose::synth::SynthConfig;
use crowdpose::{oks, pose_nms, OksParams, Pose, Result};

pub fn run_example() -> Result<Vec<Pose>> {
    let cfg = SynthConfig::crossing(3, 2, 30);
    let a = cfg.persons[0].pose(0);
    let b = cfg.persons[1].pose(0);
    let mut near_copy = a.translated(1.5, -1.0);
    near_copy.score = 0.8;
    let mut faint = b.translated(40.0, 0.0);
    faint.score = 0.01;
    let candidates = vec![near_copy, a.clone(), b, faint];

    let params = OksParams::uniform(14, DEFAULT_SIGMA);
    println!("OKS(a, copy) = {:.3}", oks(&a, &candidates[0], a.area(), &params)?);
    let kept = pose_nms(&candidates, DEFAULT_POSE_NMS_OKS, DEFAULT_MIN_INSTANCE_SCORE, &params)?;
    for p in &kept {
        let (x0, y0, x1, y1) = p.keypoint_bounds();
        println!("kept score {:.2} bounds [{x0:.0}, {y0:.0}, {x1:.0}, {y1:.0}]", p.score);
    }
    Ok(kept)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
