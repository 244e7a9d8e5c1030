use crowdpose::heatmap::{
    box_to_crop_transform, decode_keypoints, flip_heatmap, fuse_heatmaps, heatmap_transform, refine_peak,
    resample_heatmap, Heatmap, JointFlipPairs,
};
use crowdpose::{AffineTransform, DetectionBox, Skeleton};
use proptest::prelude::*;

fn heatmap_strategy() -> impl Strategy<Value = Heatmap> {
    (1usize..5, 2usize..9, 2usize..9).prop_flat_map(|(j, h, w)| {
        prop::collection::vec(0.0f64..1.0, j * h * w).prop_map(move |v| {
            Heatmap::new(j, h, w, v, AffineTransform::identity()).unwrap()
        })
    })
}

fn pairs_for(joints: usize) -> JointFlipPairs {
    let pairs = (0..joints / 2).map(|i| (2 * i, 2 * i + 1)).collect();
    JointFlipPairs::new(pairs).unwrap()
}

proptest! {
    #[test]
    fn unshifted_flip_is_an_involution(h in heatmap_strategy()) {
        let p = pairs_for(h.joints());
        let twice = flip_heatmap(&flip_heatmap(&h, &p, false).unwrap(), &p, false).unwrap();
        prop_assert_eq!(twice, h);
    }

    #[test]
    fn shifted_double_flip_only_touches_first_column(h in heatmap_strategy()) {
        let p = pairs_for(h.joints());
        let twice = flip_heatmap(&flip_heatmap(&h, &p, true).unwrap(), &p, true).unwrap();
        for j in 0..h.joints() {
            for y in 0..h.height() {
                prop_assert_eq!(twice.get(j, y, 0), h.get(j, y, 1));
                for x in 1..h.width() {
                    prop_assert_eq!(twice.get(j, y, x), h.get(j, y, x));
                }
            }
        }
    }

    #[test]
    fn fusion_of_copies_is_identity(h in heatmap_strategy(), w in 0.1f64..5.0) {
        let fused = fuse_heatmaps(&[h.clone(), h.clone()], &[w, 1.0]).unwrap();
        for (a, b) in fused.values().iter().zip(h.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_stays_within_elementwise_bounds(a in heatmap_strategy(), w in 0.0f64..3.0) {
        let b = Heatmap::new(a.joints(), a.height(), a.width(),
            a.values().iter().map(|v| 1.0 - v).collect(), *a.transform()).unwrap();
        let fused = fuse_heatmaps(&[a.clone(), b.clone()], &[w, 1.0]).unwrap();
        for ((f, x), y) in fused.values().iter().zip(a.values()).zip(b.values()) {
            prop_assert!(*f >= x.min(*y) - 1e-12 && *f <= x.max(*y) + 1e-12);
        }
    }

    #[test]
    fn peak_is_within_a_quarter_cell_of_the_argmax(h in heatmap_strategy()) {
        for j in 0..h.joints() {
            let (x, y, v) = refine_peak(&h, j).unwrap();
            let best = h.channel(j).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(v, best);
            let (cx, cy) = (x.round() as usize, y.round() as usize);
            prop_assert_eq!(h.get(j, cy, cx), best);
            prop_assert!((x - cx as f64).abs() <= 0.25 && (y - cy as f64).abs() <= 0.25);
        }
    }

    #[test]
    fn identity_resample_is_exact(h in heatmap_strategy()) {
        let r = resample_heatmap(&h, h.transform(), h.height(), h.width()).unwrap();
        for (a, b) in r.values().iter().zip(h.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn crop_keeps_aspect_and_covers_the_box(
        x in 0.0f64..500.0, y in 0.0f64..500.0, w in 1.0f64..300.0, h in 1.0f64..300.0, s in 0.5f64..2.0,
    ) {
        let b = DetectionBox::new(x, y, x + w, y + h, 1.0).unwrap();
        let t = box_to_crop_transform(&b, 3, 4, 192, 256, s).unwrap();
        let (x0, y0) = t.apply(0.0, 0.0);
        let (x1, y1) = t.apply(192.0, 256.0);
        let (cw, ch) = (x1 - x0, y1 - y0);
        prop_assert!(((cw / ch) - 0.75).abs() < 1e-9);
        prop_assert!(cw + 1e-9 >= w * s && ch + 1e-9 >= h * s);
        let (cx, cy) = b.center();
        prop_assert!(((x0 + x1) / 2.0 - cx).abs() < 1e-9 && ((y0 + y1) / 2.0 - cy).abs() < 1e-9);
    }
}

#[test]
fn flip_swaps_paired_channels() {
    let mut h = Heatmap::zeros(2, 3, 4, AffineTransform::identity()).unwrap();
    h.set(0, 1, 0, 1.0);
    let f = flip_heatmap(&h, &pairs_for(2), false).unwrap();
    assert_eq!(f.get(1, 1, 3), 1.0);
    assert_eq!(f.channel(0).iter().sum::<f64>(), 0.0);
}

#[test]
fn decode_maps_through_the_grid_transform() {
    let b = DetectionBox::new(100.0, 50.0, 148.0, 114.0, 1.0).unwrap();
    let crop = box_to_crop_transform(&b, 3, 4, 192, 256, 1.0).unwrap();
    let grid = heatmap_transform(&crop, 192, 256, 48, 64).unwrap();
    let mut h = Heatmap::zeros(1, 64, 48, grid).unwrap();
    h.set(0, 32, 24, 0.9);
    h.set(0, 32, 25, 0.5);
    let pose = decode_keypoints(&h).unwrap();
    let (ex, ey) = grid.apply(24.25, 32.0);
    assert!((pose.keypoints[0].x - ex).abs() < 1e-9 && (pose.keypoints[0].y - ey).abs() < 1e-9);
    assert_eq!(pose.keypoints[0].score, 0.9);
}

#[test]
fn ties_resolve_to_lowest_index() {
    let h = Heatmap::new(1, 2, 3, vec![0.5, 1.0, 1.0, 1.0, 0.0, 0.0], AffineTransform::identity()).unwrap();
    let (x, y, _) = refine_peak(&h, 0).unwrap();
    // three cells tie at 1.0; the first wins and leans toward its larger neighbor
    assert_eq!((x, y), (1.25, 0.0));
}

#[test]
fn fusion_rejects_mismatched_grids() {
    let a = Heatmap::zeros(1, 4, 4, AffineTransform::identity()).unwrap();
    let b = a.clone().with_transform(AffineTransform::scale_translate(2.0, 2.0, 0.0, 0.0).unwrap());
    assert!(fuse_heatmaps(&[a.clone(), b], &[1.0, 1.0]).is_err());
    assert!(fuse_heatmaps(std::slice::from_ref(&a), &[0.0]).is_err());
    assert!(fuse_heatmaps(&[], &[]).is_err());
}

#[test]
fn default_skeleton_pairs_are_valid() {
    let s = Skeleton::default_14();
    assert!(JointFlipPairs::new(s.flip_pairs.clone()).is_ok());
    assert!(JointFlipPairs::new(vec![(0, 99)]).is_ok_and(|p| flip_heatmap(
        &Heatmap::zeros(14, 2, 2, AffineTransform::identity()).unwrap(),
        &p,
        false
    )
    .is_err()));
}
