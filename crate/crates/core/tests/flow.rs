use crowdpose::flow::{
    gaussian_pyramid, lucas_kanade_at_points, max_levels, propagate_pose, FlowVector, GrayImage, PyramidParams,
};
use crowdpose::{Keypoint, Pose};
use proptest::prelude::*;

/// Smooth aperiodic texture: a sum of incommensurate sinusoids.
fn texture(x: f64, y: f64) -> f64 {
    0.5 + 0.2 * (0.31 * x + 0.17 * y).sin() + 0.15 * (0.23 * y - 0.11 * x).cos() + 0.1 * (0.07 * x * 1.3 + 0.41 * y).sin()
}

fn shifted(dx: f64, dy: f64) -> GrayImage {
    GrayImage::from_fn(96, 96, |x, y| texture(x as f64 - dx, y as f64 - dy)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recovers_subpixel_translations(dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let prev = shifted(0.0, 0.0);
        let next = shifted(dx, dy);
        let flows = lucas_kanade_at_points(&prev, &next, &[(48.0, 48.0), (40.0, 56.0)], &PyramidParams::default()).unwrap();
        for f in flows {
            prop_assert!(f.valid);
            prop_assert!((f.dx - dx).hypot(f.dy - dy) < 0.05, "{:?} vs ({dx}, {dy})", f);
        }
    }

    #[test]
    fn forward_and_backward_flow_cancel(dx in -4.0f64..4.0, dy in -4.0f64..4.0) {
        let (a, b) = (shifted(0.0, 0.0), shifted(dx, dy));
        let p = PyramidParams::default();
        let fwd = lucas_kanade_at_points(&a, &b, &[(48.0, 48.0)], &p).unwrap()[0];
        let bwd = lucas_kanade_at_points(&b, &a, &[(48.0 + fwd.dx, 48.0 + fwd.dy)], &p).unwrap()[0];
        prop_assert!((fwd.dx + bwd.dx).abs() < 0.05 && (fwd.dy + bwd.dy).abs() < 0.05);
    }
}

#[test]
fn identical_frames_give_zero_flow() {
    let a = shifted(0.0, 0.0);
    let f = lucas_kanade_at_points(&a, &a, &[(30.0, 30.0)], &PyramidParams::default()).unwrap()[0];
    assert!(f.valid && f.dx.abs() < 1e-9 && f.dy.abs() < 1e-9);
}

#[test]
fn flat_regions_and_outside_points_are_invalid() {
    let flat = GrayImage::from_fn(64, 64, |_, _| 0.5).unwrap();
    let f = lucas_kanade_at_points(&flat, &flat, &[(32.0, 32.0)], &PyramidParams::default()).unwrap();
    assert!(!f[0].valid);
    let a = shifted(0.0, 0.0);
    let f = lucas_kanade_at_points(&a, &a, &[(-5.0, 10.0), (10.0, 500.0)], &PyramidParams::default()).unwrap();
    assert!(f.iter().all(|v| !v.valid));
}

#[test]
fn mismatched_frames_are_rejected() {
    let a = GrayImage::from_fn(32, 32, |_, _| 0.0).unwrap();
    let b = GrayImage::from_fn(32, 16, |_, _| 0.0).unwrap();
    assert!(lucas_kanade_at_points(&a, &b, &[], &PyramidParams::default()).is_err());
}

#[test]
fn pyramid_halves_each_level() {
    let img = GrayImage::from_fn(64, 40, |x, y| (x + y) as f64).unwrap();
    let p = gaussian_pyramid(&img, 3).unwrap();
    let sizes: Vec<_> = p.iter().map(|l| (l.width(), l.height())).collect();
    assert_eq!(sizes, vec![(64, 40), (32, 20), (16, 10)]);
    let tiny = GrayImage::from_fn(3, 3, |_, _| 0.0).unwrap();
    assert_eq!(max_levels(&tiny, 3), 2);
}

#[test]
fn propagation_moves_valid_joints_only() {
    let pose = Pose::new(vec![Keypoint::new(1.0, 2.0, 0.8), Keypoint::new(5.0, 5.0, 0.6)], 0.7);
    let moved = propagate_pose(&pose, &[FlowVector::new(1.5, -1.0), FlowVector::invalid()], 0.5).unwrap();
    assert_eq!((moved.keypoints[0].x, moved.keypoints[0].y), (2.5, 1.0));
    assert_eq!(moved.keypoints[0].score, 0.8);
    assert_eq!((moved.keypoints[1].x, moved.keypoints[1].y), (5.0, 5.0));
    assert_eq!(moved.keypoints[1].score, 0.3);
    assert!(propagate_pose(&pose, &[FlowVector::invalid()], 0.0).is_err());
}
