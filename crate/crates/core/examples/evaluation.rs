//! Average precision, keypoint AP over OKS thresholds and the log-average
//! miss rate.

use crowdpose::metrics::{
    average_precision, default_oks_thresholds, keypoint_ap, log_average_miss_rate, miss_rate_curve, weighted_ap,
    DEFAULT_FPPI_RANGE, DEFAULT_MMR_POINTS,
};
use crowdpose::synth::SynthConfig;
use crowdpose::{DetectionBox, OksParams, Result};

pub struct EvaluationOutcome {
    pub ap: f64,
    pub keypoint_ap: f64,
    pub mmr: f64,
    pub weighted: f64,
}

pub fn run_example() -> Result<EvaluationOutcome> {
    // ranked hits and misses against two ground-truth objects
    let ap = average_precision(&[true, false, true], 2);
    println!("AP of [TP, FP, TP] with 2 GT: {ap:.4}");

    let cfg = SynthConfig::crossing(2, 2, 3);
    let gt: Vec<_> = (0..3).flat_map(|t| cfg.persons.iter().map(move |p| p.pose(t))).collect();
    let pred: Vec<_> = gt
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut q = p.translated(0.5 * i as f64, 0.0);
            q.score = 1.0 - 0.1 * i as f64;
            q
        })
        .collect();
    let kap = keypoint_ap(&pred, &gt, &default_oks_thresholds(), &OksParams::uniform(14, 0.08))?;
    println!("keypoint AP {kap:.4}");

    let gt_boxes = vec![
        vec![DetectionBox::new(0.0, 0.0, 10.0, 20.0, 1.0)?],
        vec![DetectionBox::new(5.0, 5.0, 15.0, 25.0, 1.0)?],
    ];
    let dets = vec![
        vec![DetectionBox::new(0.0, 0.0, 10.0, 20.0, 0.9)?],
        vec![DetectionBox::new(40.0, 5.0, 50.0, 25.0, 0.8)?],
    ];
    let curve = miss_rate_curve(&dets, &gt_boxes, 0.5)?;
    let mmr = log_average_miss_rate(&curve, DEFAULT_FPPI_RANGE, DEFAULT_MMR_POINTS)?;
    println!("miss-rate curve {curve:?}, log-average miss rate {mmr:.2}%");

    let weighted = weighted_ap(&[(ap, 3.0), (kap, 1.0)])?;
    println!("weighted AP {weighted:.4}");
    Ok(EvaluationOutcome {
        ap,
        keypoint_ap: kap,
        mmr,
        weighted,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
