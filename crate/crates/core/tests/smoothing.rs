use crowdpose::flow::{FlowVector, GrayImage};
use crowdpose::smoothing::{smooth_video_traced, VideoSmoothingParams};
use crowdpose::synth::{generate, SynthConfig};
use crowdpose::{smooth_video, temporal_smooth, Keypoint, Pose, SmoothingParams};
use proptest::prelude::*;

fn pose(x: f64, score: f64) -> Pose {
    Pose::new(vec![Keypoint::new(x, 10.0, 0.9), Keypoint::new(x + 5.0, 20.0, 0.9)], score)
}

fn zero_flow() -> Vec<FlowVector> {
    vec![FlowVector::new(0.0, 0.0); 2]
}

proptest! {
    #[test]
    fn blend_is_a_convex_combination(
        p in -100.0f64..100.0, c in -100.0f64..100.0, n in -100.0f64..100.0, alpha in 0.0f64..=0.5,
    ) {
        let params = SmoothingParams { alpha, ..Default::default() };
        let out = temporal_smooth(Some(&pose(p, 1.0)), &pose(c, 1.0), Some(&pose(n, 1.0)), &zero_flow(), &zero_flow(), &params).unwrap();
        let x = out.keypoints[0].x;
        prop_assert!(x >= p.min(c).min(n) - 1e-9 && x <= p.max(c).max(n) + 1e-9);
        // joint scores and instance score are left alone
        prop_assert_eq!(out.score, 1.0);
        prop_assert_eq!(out.keypoints[0].score, 0.9);
    }

    #[test]
    fn gate_blocks_low_confidence_neighbors(s in 0.0f64..0.3) {
        let params = SmoothingParams::default();
        let cur = pose(50.0, 1.0);
        let out = temporal_smooth(Some(&pose(0.0, s)), &cur, Some(&pose(100.0, 1.0)), &zero_flow(), &zero_flow(), &params).unwrap();
        prop_assert_eq!(out, cur);
    }
}

#[test]
fn missing_neighbors_leave_pose_unchanged() {
    let cur = pose(50.0, 1.0);
    let out = temporal_smooth(None, &cur, Some(&pose(0.0, 1.0)), &[], &zero_flow(), &SmoothingParams::default()).unwrap();
    assert_eq!(out, cur);
}

#[test]
fn failed_flow_joints_can_be_dropped_per_joint() {
    let params = SmoothingParams {
        per_joint_gating: true,
        ..Default::default()
    };
    let flows = vec![FlowVector::invalid(), FlowVector::new(0.0, 0.0)];
    let out = temporal_smooth(Some(&pose(0.0, 1.0)), &pose(40.0, 1.0), Some(&pose(80.0, 1.0)), &flows, &zero_flow(), &params).unwrap();
    // joint 0 loses its forward term: 0.25·80 + 0.75·40
    assert!((out.keypoints[0].x - 50.0).abs() < 1e-12);
    assert!((out.keypoints[1].x - 45.0).abs() < 1e-12);
}

#[test]
fn mixing_tracks_is_an_error() {
    let a = pose(0.0, 1.0).with_track(1);
    let b = pose(0.0, 1.0).with_track(2);
    assert!(temporal_smooth(Some(&a), &b, Some(&b), &zero_flow(), &zero_flow(), &SmoothingParams::default()).is_err());
}

#[test]
fn exact_poses_on_a_synthetic_video_barely_move() {
    let mut cfg = SynthConfig::crossing(9, 2, 20);
    cfg.heatmaps = None;
    let video = generate(&cfg).unwrap();
    let truth: Vec<Pose> = video.gt.iter().map(|r| r.pose.clone()).collect();
    let (smoothed, flows) = smooth_video_traced(&truth, &video.frames, &VideoSmoothingParams::default()).unwrap();
    assert_eq!(smoothed.len(), truth.len());
    let errors: Vec<f64> = smoothed
        .iter()
        .zip(&truth)
        .flat_map(|(s, t)| s.keypoints.iter().zip(&t.keypoints).map(|(a, b)| (a.x - b.x).hypot(a.y - b.y)))
        .collect();
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(sorted[sorted.len() / 2] < 0.1, "median drift {}", sorted[sorted.len() / 2]);
    assert!(!flows.is_empty());
    assert!(flows.windows(2).all(|w| (w[0].frame, w[0].track, w[0].source, w[0].joint) <= (w[1].frame, w[1].track, w[1].source, w[1].joint)));
}

#[test]
fn zero_alpha_is_the_identity_on_video() {
    let frames: Vec<GrayImage> = (0..4).map(|t| GrayImage::from_fn(32, 32, |x, y| ((x * y + t) % 7) as f64 / 7.0).unwrap()).collect();
    let poses: Vec<Pose> = (0..4).map(|t| pose(10.0 + t as f64, 1.0).with_frame(t).with_track(0)).collect();
    let mut params = VideoSmoothingParams::default();
    params.smoothing.alpha = 0.0;
    assert_eq!(smooth_video(&poses, &frames, &params).unwrap(), poses);
}
