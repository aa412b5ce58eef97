use clustercrop::evaluation::{evaluate, EvalParams, GroundTruth, ImageRecords};
use clustercrop::geometry::iou;
use clustercrop::{BBox, Detection};
use proptest::prelude::*;

/// Straightforward greedy matching and 101-point interpolation for one image
/// and one category with no ignored ground truth.
fn oracle_ap(dets: &[Detection], gts: &[GroundTruth], thresh: f64) -> f64 {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; gts.len()];
    let mut tp_flags = Vec::new();
    for &i in &order {
        let mut best = None;
        let mut best_iou = thresh;
        for (j, g) in gts.iter().enumerate() {
            let v = iou(&dets[i].bbox, &g.bbox);
            if !taken[j] && v >= best_iou && best.is_none_or(|_| v > best_iou) {
                best = Some(j);
                best_iou = v;
            }
        }
        if let Some(j) = best {
            taken[j] = true;
        }
        tp_flags.push(best.is_some());
    }
    let mut points = Vec::new();
    let mut tp = 0.0;
    for (n, &hit) in tp_flags.iter().enumerate() {
        tp += hit as u8 as f64;
        points.push((tp / (n + 1) as f64, tp / gts.len() as f64));
    }
    (0..=100)
        .map(|i| {
            let r = i as f64 / 100.0;
            points
                .iter()
                .filter(|p| p.1 >= r)
                .map(|p| p.0)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0
}

fn case() -> impl Strategy<Value = (Vec<GroundTruth>, Vec<Detection>)> {
    let bx = (0.0..200.0f64, 0.0..200.0f64, 20.0..60.0f64, 20.0..60.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h));
    let gts = prop::collection::vec(bx.clone(), 1..8).prop_map(|v| {
        v.into_iter()
            .map(|bbox| GroundTruth {
                bbox,
                category: 0,
                ignore: false,
            })
            .collect::<Vec<_>>()
    });
    let dets = prop::collection::vec((bx, 0.0..1.0f64), 0..=10).prop_map(|v| {
        v.into_iter()
            .map(|(bbox, score)| Detection {
                bbox,
                category: 0,
                score,
            })
            .collect::<Vec<_>>()
    });
    (gts, dets)
}

fn jitter_towards(gts: &[GroundTruth], dets: Vec<Detection>) -> Vec<Detection> {
    // Snap about half the detections onto ground truth so TPs are common.
    dets.into_iter()
        .enumerate()
        .map(|(i, d)| {
            if i % 2 == 0 {
                let g = gts[i % gts.len()].bbox;
                Detection {
                    bbox: BBox::new(g.cx + d.bbox.cx / 100.0, g.cy + d.bbox.cy / 100.0, g.w, g.h),
                    ..d
                }
            } else {
                d
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn agrees_with_brute_force((gts, dets) in case()) {
        let dets = jitter_towards(&gts, dets);
        let params = EvalParams::default();
        let report = evaluate(&[ImageRecords { gts: gts.clone(), dets: dets.clone() }], &params);
        let oracle: Vec<f64> = params.iou_thresholds.iter().map(|&t| oracle_ap(&dets, &gts, t)).collect();
        prop_assert!((report.ap50.unwrap() - oracle[0]).abs() <= 1e-6);
        let mean = oracle.iter().sum::<f64>() / oracle.len() as f64;
        prop_assert!((report.ap.unwrap() - mean).abs() <= 1e-6);
    }

    #[test]
    fn values_in_unit_interval_and_order_invariant((gts, dets) in case(), rot in 0usize..10) {
        let dets = jitter_towards(&gts, dets);
        let params = EvalParams::default();
        let a = evaluate(&[ImageRecords { gts: gts.clone(), dets: dets.clone() }], &params);
        let mut shuffled = dets.clone();
        if !shuffled.is_empty() {
            let n = shuffled.len();
            shuffled.rotate_left(rot % n);
        }
        let b = evaluate(&[ImageRecords { gts, dets: shuffled }], &params);
        prop_assert_eq!(&a, &b);
        for v in [a.ap, a.ap50, a.ap75, a.ap_small, a.ap_medium, a.ap_large].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
