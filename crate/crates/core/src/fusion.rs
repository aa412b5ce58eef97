//! Mapping crop detections back to the full image and merging them with the
//! global pass by region replacement. There is no IoU suppression anywhere
//! in this module.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::lsm::ClusterRegion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub category: usize,
    pub score: f64,
}

/// Affine map from global image coordinates to a detector canvas:
/// `q = p · scale + offset`, with `offset = −(left, top) · scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropTransform {
    pub region: ClusterRegion,
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl CropTransform {
    /// Identity view of a full `width × height` image.
    pub fn identity(width: f64, height: f64) -> Self {
        Self {
            region: ClusterRegion::new(0.0, 0.0, width, height, 0.0, 0),
            scale: [1.0, 1.0],
            offset: [0.0, 0.0],
        }
    }

    /// Global point to canvas point.
    pub fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.scale[0] + self.offset[0],
            p[1] * self.scale[1] + self.offset[1],
        ]
    }

    /// Canvas point to global point.
    pub fn inverse(&self, q: [f64; 2]) -> [f64; 2] {
        [
            (q[0] - self.offset[0]) / self.scale[0],
            (q[1] - self.offset[1]) / self.scale[1],
        ]
    }

    /// Box in global coordinates to canvas coordinates.
    pub fn box_forward(&self, b: &BBox) -> BBox {
        let [cx, cy] = self.forward([b.cx, b.cy]);
        BBox::new(cx, cy, b.w * self.scale[0], b.h * self.scale[1])
    }

    /// Box in canvas coordinates to global coordinates, unclamped.
    pub fn box_inverse(&self, b: &BBox) -> BBox {
        let [cx, cy] = self.inverse([b.cx, b.cy]);
        BBox::new(cx, cy, b.w / self.scale[0], b.h / self.scale[1])
    }
}

fn clamp_to_region(b: &BBox, r: &ClusterRegion) -> BBox {
    b.clamp_to(r.left, r.top, r.right(), r.bottom())
}

/// Maps crop-canvas detections to global coordinates, clamping each box to
/// the crop's region. Scores and categories pass through.
pub fn to_global(dets: &[Detection], t: &CropTransform) -> Vec<Detection> {
    dets.iter()
        .map(|d| Detection {
            bbox: clamp_to_region(&t.box_inverse(&d.bbox), &t.region),
            ..*d
        })
        .collect()
}

/// Score descending, then category and box coordinates.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.category.cmp(&b.category))
        .then_with(|| a.bbox.cx.total_cmp(&b.bbox.cx))
        .then_with(|| a.bbox.cy.total_cmp(&b.bbox.cy))
        .then_with(|| a.bbox.w.total_cmp(&b.bbox.w))
        .then_with(|| a.bbox.h.total_cmp(&b.bbox.h))
}

/// Replaces global results inside crop regions with the refined crop results.
///
/// * A global detection survives only if its center lies outside every region.
/// * A refined detection from crop `i` survives if its mapped center lies in
///   region `i` and in no region listed after `i`.
///
/// Region membership is the closed rectangle. Refined boxes keep their full
/// mapped extent, which may cross the region border; use
/// [`clamp_to_image`] to bound the result. Output is sorted by
/// [`detection_order`].
pub fn fuse(global: &[Detection], crops: &[(CropTransform, Vec<Detection>)]) -> Vec<Detection> {
    let mut out: Vec<Detection> = global
        .iter()
        .filter(|d| {
            !crops
                .iter()
                .any(|(t, _)| t.region.contains(d.bbox.cx, d.bbox.cy))
        })
        .copied()
        .collect();
    for (i, (t, dets)) in crops.iter().enumerate() {
        for d in dets {
            let mapped = t.box_inverse(&d.bbox);
            let owned = t.region.contains(mapped.cx, mapped.cy)
                && !crops[i + 1..]
                    .iter()
                    .any(|(later, _)| later.region.contains(mapped.cx, mapped.cy));
            if owned {
                out.push(Detection { bbox: mapped, ..*d });
            }
        }
    }
    out.sort_by(detection_order);
    out
}

/// Clamps every box to `[0, width] × [0, height]`.
pub fn clamp_to_image(dets: &mut [Detection], width: f64, height: f64) {
    for d in dets {
        d.bbox = d.bbox.clamp_to(0.0, 0.0, width, height);
    }
}
