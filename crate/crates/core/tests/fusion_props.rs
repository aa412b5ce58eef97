use clustercrop::fusion::{detection_order, fuse, CropTransform};
use clustercrop::lsm::{crop_and_rescale, ClusterRegion};
use clustercrop::{BBox, Detection};
use proptest::prelude::*;

fn dets(max: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec(
        (
            0.0..1024.0f64,
            0.0..640.0f64,
            1.0..50.0f64,
            1.0..50.0f64,
            0usize..3,
            0.0..1.0f64,
        ),
        0..max,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(cx, cy, w, h, category, score)| Detection {
                bbox: BBox::new(cx, cy, w, h),
                category,
                score,
            })
            .collect()
    })
}

fn region() -> impl Strategy<Value = ClusterRegion> {
    (0.0..900.0f64, 0.0..500.0f64, 10.0..124.0f64, 10.0..140.0f64)
        .prop_map(|(l, t, w, h)| ClusterRegion::new(l, t, w, h, 1.0, 1))
}

proptest! {
    #[test]
    fn empty_crops_are_idempotent(global in dets(40), regions in prop::collection::vec(region(), 0..4)) {
        let crops: Vec<(CropTransform, Vec<Detection>)> = regions
            .iter()
            .map(|r| (crop_and_rescale(r, (1024.0, 640.0)).unwrap(), Vec::new()))
            .collect();
        let once = fuse(&global, &crops);
        prop_assert_eq!(fuse(&once, &crops), once);
    }

    #[test]
    fn permutation_invariant(global in dets(40), refined in dets(20), r in region(), rot in 0usize..40) {
        let t = crop_and_rescale(&r, (1024.0, 640.0)).unwrap();
        let a = fuse(&global, &[(t, refined.clone())]);
        let (mut g2, mut r2) = (global.clone(), refined.clone());
        if !g2.is_empty() { let n = g2.len(); g2.rotate_left(rot % n); }
        r2.reverse();
        prop_assert_eq!(&a, &fuse(&g2, &[(t, r2)]));
        prop_assert!(a.windows(2).all(|w| detection_order(&w[0], &w[1]).is_le()));
    }
}
