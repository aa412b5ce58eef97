use clustercrop::geometry::{gwd_loss, iou, wasserstein_closed, LossConfig};
use clustercrop::BBox;
use proptest::prelude::*;

fn any_box() -> impl Strategy<Value = BBox> {
    (0.0..1024.0f64, 0.0..1024.0f64, 0.5..256.0f64, 0.5..256.0f64)
        .prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h))
}

proptest! {
    #[test]
    fn loss_rises_while_iou_does_not(gt in any_box(), dir in prop::bool::ANY) {
        let cfg = LossConfig::default();
        let sign = if dir { 1.0 } else { -1.0 };
        let mut prev_loss = -1.0;
        let mut prev_iou = f64::INFINITY;
        for i in 0..200 {
            let dx = sign * 0.05 * gt.w * i as f64;
            let pred = BBox::new(gt.cx + dx, gt.cy, gt.w, gt.h);
            let (l, o) = (gwd_loss(&pred, &gt, &cfg), iou(&pred, &gt));
            prop_assert!(l > prev_loss);
            prop_assert!(o <= prev_iou);
            prev_loss = l;
            prev_iou = o;
        }
        // Beyond full separation IoU is flat at zero while the loss still grows.
        prop_assert_eq!(prev_iou, 0.0);
    }

    #[test]
    fn translation_invariance(a in any_box(), b in any_box(), tx in -500.0..500.0f64, ty in -500.0..500.0f64) {
        let shift = |x: &BBox| BBox::new(x.cx + tx, x.cy + ty, x.w, x.h);
        let w = wasserstein_closed(&a, &b);
        prop_assert!((wasserstein_closed(&shift(&a), &shift(&b)) - w).abs() <= 1e-9 * (1.0 + w));
    }
}
