// Each example is compiled in here so its outcome can be checked, not just
// that it runs.

#[allow(dead_code)]
#[path = "../examples/heatmap_fusion.rs"]
mod heatmap_fusion;
#[allow(dead_code)]
#[path = "../examples/crowd_nms.rs"]
mod crowd_nms;
#[allow(dead_code)]
#[path = "../examples/pose_nms.rs"]
mod pose_nms;
#[allow(dead_code)]
#[path = "../examples/optical_flow.rs"]
mod optical_flow;
#[allow(dead_code)]
#[path = "../examples/temporal_smoothing.rs"]
mod temporal_smoothing;
#[allow(dead_code)]
#[path = "../examples/evaluation.rs"]
mod evaluation;
#[allow(dead_code)]
#[path = "../examples/synthetic_pipeline.rs"]
mod synthetic_pipeline;

#[test]
fn heatmap_fusion_recovers_joints() {
    let worst = heatmap_fusion::run_example().unwrap();
    assert!(worst < 2.0, "worst joint error {worst}");
}

#[test]
fn crowd_nms_keeps_the_pair() {
    let out = crowd_nms::run_example().unwrap();
    assert_eq!(out.plain_kept, 1);
    assert_eq!(out.set_kept, 2);
    assert_eq!(out.fused, 1);
    assert!(out.distance.abs() < 1e-12);
}

#[test]
fn pose_nms_drops_duplicates() {
    let kept = pose_nms::run_example().unwrap();
    assert_eq!(kept.len(), 2);
    assert!(kept[0].score >= kept[1].score);
}

#[test]
fn optical_flow_is_subpixel() {
    let epe = optical_flow::run_example().unwrap();
    assert!(epe < 0.1, "EPE {epe}");
}

#[test]
fn tracking_follows_identities_through_reordering() {
    let ids = tracking::run_example().unwrap();
    assert_eq!(ids.len(), 40);
    // the detector rotated its output by t % 3 each frame
    let person_ids: Vec<u64> = (0..3).map(|p| ids[0][p]).collect();
    for (t, frame) in ids.iter().enumerate() {
        for (i, id) in frame.iter().enumerate() {
            assert_eq!(*id, person_ids[(i + t % 3) % 3], "frame {t}");
        }
    }
    let mut distinct = person_ids.clone();
    distinct.sort();
    distinct.dedup();
    assert_eq!(distinct.len(), 3);
}

#[test]
fn smoothing_reduces_noise() {
    let (before, after) = temporal_smoothing::run_example().unwrap();
    assert!(after < 0.85 * before, "{before} -> {after}");
}

#[test]
fn evaluation_worked_numbers() {
    let out = evaluation::run_example().unwrap();
    assert!((out.ap - 5.0 / 6.0).abs() < 1e-9);
    assert_eq!(out.keypoint_ap, 1.0);
    assert!((out.mmr - 50.0).abs() < 1e-9);
    assert!((out.weighted - 0.875).abs() < 1e-9);
}

#[test]
fn synthetic_pipeline_scores_high() {
    let report = synthetic_pipeline::run_example().unwrap();
    assert!(report.weighted_ap >= 0.99, "AP {}", report.weighted_ap);
}
