//! Crowd-aware box suppression.
//!
//! Two people standing close together come out of one detector proposal.
//! Plain NMS removes one of them; Set NMS keeps both because boxes from the
//! same proposal never suppress each other. The set distance then scores a
//! prediction set against ground truth.

use crowdpose::detection::{default_emd_cost, emd_set_distance, weighted_box_fusion};
use crowdpose::{nms, set_nms, DetectionBox, Result};

pub struct CrowdNmsOutcome {
    pub plain_kept: usize,
    pub set_kept: usize,
    pub fused: usize,
    pub distance: f64,
}

pub fn run_example() -> Result<CrowdNmsOutcome> {
    let front = DetectionBox::new(100.0, 50.0, 160.0, 200.0, 0.95)?.with_proposal(7);
    let behind = DetectionBox::new(108.0, 48.0, 170.0, 196.0, 0.80)?.with_proposal(7);
    let duplicate = DetectionBox::new(102.0, 52.0, 161.0, 203.0, 0.60)?.with_proposal(9);
    let boxes = vec![front.clone(), behind.clone(), duplicate];

    let plain = nms(&boxes, 0.5);
    let set = set_nms(&boxes, 0.5);
    println!("plain NMS keeps {} of {}", plain.len(), boxes.len());
    println!("Set NMS keeps {} of {}", set.len(), boxes.len());

    // a second model sees the same two people slightly shifted
    let other = vec![
        DetectionBox::new(101.0, 51.0, 159.0, 199.0, 0.9)?,
        DetectionBox::new(110.0, 47.0, 171.0, 197.0, 0.7)?,
    ];
    let fused = weighted_box_fusion(&[(1.0, set.clone()), (1.0, other)], 0.55)?;
    for b in &fused {
        println!("fused [{:.1}, {:.1}, {:.1}, {:.1}] score {:.3}", b.x0, b.y0, b.x1, b.y1, b.score);
    }

    let gt = vec![front, behind];
    let m = emd_set_distance(&set, &gt, default_emd_cost)?;
    println!("set distance {:.4}, assignment {:?}", m.distance, m.assignment);
    Ok(CrowdNmsOutcome {
        plain_kept: plain.len(),
        set_kept: set.len(),
        fused: fused.len(),
        distance: m.distance,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
