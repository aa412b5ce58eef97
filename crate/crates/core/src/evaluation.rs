//! COCO-protocol box evaluation: greedy IoU matching per image and category,
//! 101-point interpolated AP averaged over IoU thresholds 0.50:0.05:0.95,
//! and small/medium/large buckets by ground-truth area.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fusion::Detection;
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub category: usize,
    /// Ignored ground truth absorbs matches without counting as TP or FN.
    #[serde(default)]
    pub ignore: bool,
}

/// Ground truth and detections for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageRecords {
    pub gts: Vec<GroundTruth>,
    pub dets: Vec<Detection>,
}

/// Half-open area range `[lo, hi)` in square pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaRange {
    pub lo: f64,
    pub hi: f64,
}

impl AreaRange {
    pub const ALL: AreaRange = AreaRange {
        lo: 0.0,
        hi: f64::INFINITY,
    };
    pub const SMALL: AreaRange = AreaRange {
        lo: 0.0,
        hi: 32.0 * 32.0,
    };
    pub const MEDIUM: AreaRange = AreaRange {
        lo: 32.0 * 32.0,
        hi: 96.0 * 96.0,
    };
    pub const LARGE: AreaRange = AreaRange {
        lo: 96.0 * 96.0,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, area: f64) -> bool {
        area >= self.lo && area < self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub iou_thresholds: Vec<f64>,
    /// Per image and category.
    pub max_dets: usize,
}

pub const DEFAULT_MAX_DETS: usize = 500;

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            max_dets: DEFAULT_MAX_DETS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    /// Matched an ignored ground truth, or unmatched and outside the area range.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedDet {
    pub score: f64,
    pub outcome: Outcome,
    /// Index of the matched ground truth, if any.
    pub gt: Option<usize>,
}

/// Matching of one image's detections against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Non-ignored ground truth count.
    pub num_gt: usize,
    /// Detections in processing order (score descending).
    pub dets: Vec<MatchedDet>,
}

/// Greedy matching of a single category stream with no area restriction.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> Matching {
    match_in_range(dets, gts, iou_thresh, AreaRange::ALL)
}

/// Greedy matching where ground truth outside `range` is treated as ignored
/// and unmatched detections outside `range` are dropped from scoring.
///
/// Detections are visited by score descending (stable on input order). Each
/// takes the unmatched non-ignored ground truth with the highest IoU ≥
/// `iou_thresh`, falling back to an ignored one; ties go to the lower index.
pub fn match_in_range(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
    range: AreaRange,
) -> Matching {
    let gt_ignored: Vec<bool> = gts
        .iter()
        .map(|g| g.ignore || !range.contains(g.bbox.area()))
        .collect();
    let num_gt = gt_ignored.iter().filter(|&&i| !i).count();
    let mut taken = vec![false; gts.len()];

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut matched = Vec::with_capacity(dets.len());
    for di in order {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for pass_ignored in [false, true] {
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] || gt_ignored[gi] != pass_ignored {
                    continue;
                }
                let v = iou(&d.bbox, &g.bbox);
                if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            if best.is_some() {
                break;
            }
        }
        let (outcome, gt) = match best {
            Some((gi, _)) => {
                taken[gi] = true;
                if gt_ignored[gi] {
                    (Outcome::Ignored, Some(gi))
                } else {
                    (Outcome::TruePositive, Some(gi))
                }
            }
            None if !range.contains(d.bbox.area()) => (Outcome::Ignored, None),
            None => (Outcome::FalsePositive, None),
        };
        matched.push(MatchedDet {
            score: d.score,
            outcome,
            gt,
        });
    }
    Matching {
        num_gt,
        dets: matched,
    }
}

/// 101-point interpolated AP over the pooled matchings of many images.
/// `None` when there is no non-ignored ground truth.
pub fn average_precision(matchings: &[Matching]) -> Option<f64> {
    let num_gt: usize = matchings.iter().map(|m| m.num_gt).sum();
    if num_gt == 0 {
        return None;
    }
    let mut pooled: Vec<&MatchedDet> = matchings
        .iter()
        .flat_map(|m| m.dets.iter())
        .filter(|d| d.outcome != Outcome::Ignored)
        .collect();
    pooled.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut recall = Vec::with_capacity(pooled.len());
    let mut precision = Vec::with_capacity(pooled.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for d in pooled {
        match d.outcome {
            Outcome::TruePositive => tp += 1,
            _ => fp += 1,
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let total: f64 = (0..=100)
        .map(|i| {
            let r = i as f64 / 100.0;
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(total / 101.0)
}

/// Summary metrics. `None` marks a bucket without ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub per_class: BTreeMap<usize, Option<f64>>,
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn by_category<T: Copy>(items: &[T], category: usize, cat_of: impl Fn(&T) -> usize) -> Vec<T> {
    items
        .iter()
        .filter(|x| cat_of(x) == category)
        .copied()
        .collect()
}

type PerCategory = (Vec<GroundTruth>, Vec<Detection>);

/// Full COCO-style evaluation over a set of images.
pub fn evaluate(images: &[ImageRecords], params: &EvalParams) -> EvalReport {
    let categories: BTreeSet<usize> = images
        .iter()
        .flat_map(|im| {
            im.gts
                .iter()
                .map(|g| g.category)
                .chain(im.dets.iter().map(|d| d.category))
        })
        .collect();

    // Per-image, per-category inputs with detections capped at max_dets.
    let split: Vec<BTreeMap<usize, PerCategory>> = images
        .iter()
        .map(|im| {
            categories
                .iter()
                .map(|&c| {
                    let gts = by_category(&im.gts, c, |g| g.category);
                    let mut dets = by_category(&im.dets, c, |d| d.category);
                    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
                    dets.truncate(params.max_dets);
                    (c, (gts, dets))
                })
                .collect()
        })
        .collect();

    let ap_for = |category: usize, thresh: f64, range: AreaRange| -> Option<f64> {
        let matchings: Vec<Matching> = split
            .iter()
            .map(|per_cat| {
                let (gts, dets) = &per_cat[&category];
                match_in_range(dets, gts, thresh, range)
            })
            .collect();
        average_precision(&matchings)
    };

    let thresholds = &params.iou_thresholds;
    let at = |target: f64| thresholds.iter().position(|t| (t - target).abs() < 1e-9);
    let over_thresholds = |range: AreaRange| {
        mean(
            categories
                .iter()
                .flat_map(|&c| thresholds.iter().map(move |&t| (c, t)))
                .map(|(c, t)| ap_for(c, t, range)),
        )
    };
    let single_threshold = |target: f64| {
        at(target).and_then(|i| {
            mean(
                categories
                    .iter()
                    .map(|&c| ap_for(c, thresholds[i], AreaRange::ALL)),
            )
        })
    };

    let per_class = categories
        .iter()
        .map(|&c| {
            (
                c,
                mean(thresholds.iter().map(|&t| ap_for(c, t, AreaRange::ALL))),
            )
        })
        .collect();

    EvalReport {
        ap: over_thresholds(AreaRange::ALL),
        ap50: single_threshold(0.5),
        ap75: single_threshold(0.75),
        ap_small: over_thresholds(AreaRange::SMALL),
        ap_medium: over_thresholds(AreaRange::MEDIUM),
        ap_large: over_thresholds(AreaRange::LARGE),
        per_class,
    }
}

impl EvalReport {
    /// Aligned plain-text table; undefined buckets print as `-`.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.4}", v));
        let mut s = String::new();
        let rows = [
            ("AP", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("AP_small", self.ap_small),
            ("AP_medium", self.ap_medium),
            ("AP_large", self.ap_large),
        ];
        for (name, v) in rows {
            let _ = writeln!(s, "{:<12}{:>8}", name, fmt(v));
        }
        for (c, v) in &self.per_class {
            let _ = writeln!(s, "{:<12}{:>8}", format!("class {c}"), fmt(*v));
        }
        s
    }
}
