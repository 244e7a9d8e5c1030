use crowdpose::pose::pose_nms_keep;
use crowdpose::{oks, pose_nms, Keypoint, OksParams, Pose};
use itertools::Itertools;
use proptest::prelude::*;

const J: usize = 5;

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (
        prop::collection::vec((0.0f64..100.0, 0.0f64..100.0, 0.0f64..=1.0), J),
        0.0f64..=1.0,
    )
        .prop_map(|(kps, s)| Pose::new(kps.into_iter().map(|(x, y, c)| Keypoint::new(x, y, c)).collect(), s))
}

fn oracle_oks(a: &Pose, b: &Pose, area: f64, sigma: f64) -> f64 {
    let terms: Vec<f64> = a
        .keypoints
        .iter()
        .zip(&b.keypoints)
        .map(|(p, q)| {
            let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
            let k = 2.0 * sigma;
            (-d2 / (2.0 * area * k * k)).exp()
        })
        .collect();
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Greedy reference: score order, drop low scores, suppress on OKS measured
/// against the kept pose's own area.
fn oracle_nms(poses: &[Pose], thr: f64, min: f64, params: &OksParams) -> Vec<usize> {
    let order = (0..poses.len())
        .sorted_by(|&a, &b| poses[b].score.partial_cmp(&poses[a].score).unwrap().then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if poses[i].score < min {
            continue;
        }
        let suppressed = kept.iter().any(|&k| {
            let xs = poses[k].keypoints.iter().map(|p| p.x);
            let ys = poses[k].keypoints.iter().map(|p| p.y);
            let w = xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min);
            let h = ys.clone().fold(f64::NEG_INFINITY, f64::max) - ys.fold(f64::INFINITY, f64::min);
            oracle_oks(&poses[k], &poses[i], (w * h).max(1.0), params.sigmas[0]) > thr
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

proptest! {
    #[test]
    fn oks_matches_formula(a in pose_strategy(), b in pose_strategy(), area in 1.0f64..5000.0) {
        let params = OksParams::uniform(J, 0.08);
        let got = oks(&a, &b, area, &params).unwrap();
        prop_assert!((got - oracle_oks(&a, &b, area, 0.08)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert!((oks(&a, &a, area, &params).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oks_is_translation_invariant(a in pose_strategy(), b in pose_strategy(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let params = OksParams::uniform(J, 0.08);
        let x = oks(&a, &b, 900.0, &params).unwrap();
        let y = oks(&a.translated(dx, dy), &b.translated(dx, dy), 900.0, &params).unwrap();
        prop_assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn pose_nms_matches_oracle(poses in prop::collection::vec(pose_strategy(), 0..8), thr in 0.2f64..0.9) {
        let params = OksParams::uniform(J, 0.08);
        let got = pose_nms_keep(&poses, thr, 0.05, &params).unwrap();
        prop_assert_eq!(got, oracle_nms(&poses, thr, 0.05, &params));
    }
}

#[test]
fn duplicates_collapse_and_distant_people_survive() {
    let base: Vec<Keypoint> = (0..J).map(|i| Keypoint::new(10.0 + 10.0 * i as f64, 20.0 * i as f64, 0.9)).collect();
    let a = Pose::new(base.clone(), 0.9);
    let b = a.translated(0.5, 0.5);
    let b = Pose { score: 0.8, ..b };
    let far = Pose { score: 0.7, ..a.translated(300.0, 0.0) };
    let weak = Pose { score: 0.01, ..a.translated(600.0, 0.0) };
    let kept = pose_nms(&[b, a.clone(), far.clone(), weak], 0.7, 0.05, &OksParams::uniform(J, 0.08)).unwrap();
    assert_eq!(kept, vec![a, far]);
}

#[test]
fn oks_checks_shapes() {
    let a = Pose::new(vec![Keypoint::new(0.0, 0.0, 1.0); 3], 1.0);
    let b = Pose::new(vec![Keypoint::new(0.0, 0.0, 1.0); 4], 1.0);
    assert!(oks(&a, &b, 10.0, &OksParams::uniform(3, 0.08)).is_err());
    assert!(oks(&a, &a, 0.0, &OksParams::uniform(3, 0.08)).is_err());
}

#[test]
fn invisible_reference_joints_are_ignored() {
    let a = Pose::new(vec![Keypoint::new(0.0, 0.0, 1.0), Keypoint::new(0.0, 0.0, 0.0)], 1.0);
    let b = Pose::new(vec![Keypoint::new(0.0, 0.0, 1.0), Keypoint::new(99.0, 99.0, 1.0)], 1.0);
    let params = OksParams {
        visibility_threshold: 0.5,
        ..OksParams::uniform(2, 0.08)
    };
    assert_eq!(oks(&a, &b, 100.0, &params).unwrap(), 1.0);
}
