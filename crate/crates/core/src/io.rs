//! On-disk formats: VisDrone-style annotation text, JSON detection and region
//! lists, and the `YHM1` binary heatmap container.
//!
//! Annotation files store boxes by top-left corner; everything else in the
//! crate uses center form. The conversion happens here only.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::evaluation::GroundTruth;
use crate::fusion::{detection_order, Detection};
use crate::geometry::BBox;
use crate::heatmap::Heatmap;
use crate::lsm::{region_order, ClusterRegion};

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| FormatError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| FormatError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| FormatError::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

// ---------------------------------------------------------------------------
// Annotations

/// One line of a VisDrone-style annotation file:
/// `left,top,width,height,score,category,truncation,occlusion`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationRecord {
    pub bbox_left: i64,
    pub bbox_top: i64,
    pub bbox_width: i64,
    pub bbox_height: i64,
    pub score: f64,
    pub category: u32,
    pub truncation: i64,
    pub occlusion: i64,
}

/// Category marking ignored regions in VisDrone ground truth.
pub const IGNORED_REGION_CATEGORY: u32 = 0;

impl AnnotationRecord {
    pub fn to_box(&self) -> BBox {
        BBox::from_ltwh(
            self.bbox_left as f64,
            self.bbox_top as f64,
            self.bbox_width as f64,
            self.bbox_height as f64,
        )
    }

    /// Ground truth with `ignore` set when the category is in `ignored`.
    pub fn to_ground_truth(&self, ignored: &[u32]) -> GroundTruth {
        GroundTruth {
            bbox: self.to_box(),
            category: self.category as usize,
            ignore: ignored.contains(&self.category),
        }
    }

    /// Record for a ground-truth box, corners rounded to whole pixels.
    pub fn from_ground_truth(g: &GroundTruth) -> Self {
        let left = g.bbox.left().round();
        let top = g.bbox.top().round();
        let right = g.bbox.right().round();
        let bottom = g.bbox.bottom().round();
        Self {
            bbox_left: left as i64,
            bbox_top: top as i64,
            bbox_width: (right - left).max(0.0) as i64,
            bbox_height: (bottom - top).max(0.0) as i64,
            score: if g.ignore { 0.0 } else { 1.0 },
            category: g.category as u32,
            truncation: 0,
            occlusion: 0,
        }
    }
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    name: &str,
    line: usize,
) -> Result<T, FormatError> {
    field.trim().parse().map_err(|_| FormatError::Annotation {
        line,
        message: format!("invalid {name} {:?}", field.trim()),
    })
}

/// Parses annotation text. Blank lines are skipped and a trailing comma is
/// tolerated.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let line = line.strip_suffix(',').unwrap_or(line);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(FormatError::Annotation {
                line: line_no,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let rec = AnnotationRecord {
            bbox_left: parse_field(fields[0], "bbox_left", line_no)?,
            bbox_top: parse_field(fields[1], "bbox_top", line_no)?,
            bbox_width: parse_field(fields[2], "bbox_width", line_no)?,
            bbox_height: parse_field(fields[3], "bbox_height", line_no)?,
            score: parse_field(fields[4], "score", line_no)?,
            category: parse_field(fields[5], "category", line_no)?,
            truncation: parse_field(fields[6], "truncation", line_no)?,
            occlusion: parse_field(fields[7], "occlusion", line_no)?,
        };
        if rec.bbox_width < 0 || rec.bbox_height < 0 {
            return Err(FormatError::Annotation {
                line: line_no,
                message: "negative box size".into(),
            });
        }
        if !rec.score.is_finite() {
            return Err(FormatError::Annotation {
                line: line_no,
                message: "non-finite score".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Canonical text form, one record per line with a trailing newline.
pub fn format_annotations(records: &[AnnotationRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}\n",
                r.bbox_left,
                r.bbox_top,
                r.bbox_width,
                r.bbox_height,
                r.score,
                r.category,
                r.truncation,
                r.occlusion
            )
        })
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, FormatError> {
    parse_annotations(&read_text(path)?)
}

pub fn write_annotations(records: &[AnnotationRecord], path: &Path) -> Result<(), FormatError> {
    write_atomic(path, format_annotations(records).as_bytes())
}

// ---------------------------------------------------------------------------
// Binary heatmaps

pub const HEATMAP_MAGIC: [u8; 4] = *b"YHM1";
pub const HEATMAP_HEADER_LEN: usize = 16;

pub fn encode_heatmap(hm: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEATMAP_HEADER_LEN + hm.values().len() * 4);
    out.extend_from_slice(&HEATMAP_MAGIC);
    for dim in [hm.channels(), hm.height(), hm.width()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in hm.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_heatmap(bytes: &[u8]) -> Result<Heatmap, FormatError> {
    if bytes.len() < HEATMAP_HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEATMAP_HEADER_LEN as u64,
            got: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != HEATMAP_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (channels, height, width) = (word(4), word(8), word(12));
    let overflow = FormatError::DimsOverflow {
        channels,
        height,
        width,
    };
    let payload = (channels as u64)
        .checked_mul(height as u64)
        .and_then(|v| v.checked_mul(width as u64))
        .and_then(|v| v.checked_mul(4))
        .filter(|&v| usize::try_from(v).is_ok())
        .ok_or(overflow)?;
    let expected = HEATMAP_HEADER_LEN as u64 + payload;
    let got = bytes.len() as u64;
    if got < expected {
        return Err(FormatError::Truncated { expected, got });
    }
    if got > expected {
        return Err(FormatError::TrailingBytes(got - expected));
    }
    let values = bytes[HEATMAP_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Heatmap::from_values(
        channels as usize,
        height as usize,
        width as usize,
        values,
    )?)
}

pub fn read_heatmap(path: &Path) -> Result<Heatmap, FormatError> {
    decode_heatmap(&read_bytes(path)?)
}

pub fn write_heatmap(hm: &Heatmap, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, &encode_heatmap(hm))
}

// ---------------------------------------------------------------------------
// JSON

/// Flat JSON form of a detection tagged with its image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub category: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl DetectionRecord {
    pub fn new(image_id: u64, d: &Detection) -> Self {
        Self {
            image_id,
            category: d.category,
            cx: d.bbox.cx,
            cy: d.bbox.cy,
            w: d.bbox.w,
            h: d.bbox.h,
            score: d.score,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection {
            bbox: BBox::new(self.cx, self.cy, self.w, self.h),
            category: self.category,
            score: self.score,
        }
    }

    fn validate(&self, index: usize) -> Result<(), FormatError> {
        let schema = |field: &str, message: &str| {
            Err(FormatError::Schema {
                field: format!("[{index}].{field}"),
                message: message.to_string(),
            })
        };
        for (name, v) in [("cx", self.cx), ("cy", self.cy)] {
            if !v.is_finite() {
                return schema(name, "must be finite");
            }
        }
        for (name, v) in [("w", self.w), ("h", self.h)] {
            if !(v.is_finite() && v >= 0.0) {
                return schema(name, "must be finite and >= 0");
            }
        }
        if !(0.0..=1.0).contains(&self.score) {
            return schema("score", "must be in [0, 1]");
        }
        Ok(())
    }
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        if inner.is_data() {
            FormatError::Schema {
                field: e.path().to_string(),
                message: inner.to_string(),
            }
        } else {
            FormatError::Json(inner.to_string())
        }
    })?;
    de.end().map_err(|e| FormatError::Json(e.to_string()))?;
    Ok(value)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn parse_detections_json(text: &str) -> Result<Vec<DetectionRecord>, FormatError> {
    let records: Vec<DetectionRecord> = parse_json(text)?;
    for (i, r) in records.iter().enumerate() {
        r.validate(i)?;
    }
    Ok(records)
}

/// Sorted by image, then score descending with the fusion tie-break.
pub fn format_detections_json(records: &[DetectionRecord]) -> String {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        a.image_id
            .cmp(&b.image_id)
            .then_with(|| detection_order(&a.detection(), &b.detection()))
    });
    to_json(&sorted)
}

pub fn read_detections_json(path: &Path) -> Result<Vec<DetectionRecord>, FormatError> {
    parse_detections_json(&read_text(path)?)
}

pub fn write_detections_json(records: &[DetectionRecord], path: &Path) -> Result<(), FormatError> {
    write_atomic(path, format_detections_json(records).as_bytes())
}

pub fn parse_regions_json(text: &str) -> Result<Vec<ClusterRegion>, FormatError> {
    let regions: Vec<ClusterRegion> = parse_json(text)?;
    for (i, r) in regions.iter().enumerate() {
        let fields = [
            ("left", r.left),
            ("top", r.top),
            ("width", r.width),
            ("height", r.height),
            ("density", r.density),
        ];
        for (name, v) in fields {
            let nonneg = matches!(name, "width" | "height" | "density");
            if !v.is_finite() || (nonneg && v < 0.0) {
                return Err(FormatError::Schema {
                    field: format!("[{i}].{name}"),
                    message: if nonneg {
                        "must be finite and >= 0"
                    } else {
                        "must be finite"
                    }
                    .into(),
                });
            }
        }
    }
    Ok(regions)
}

/// Sorted in LSM order: area descending, density descending, `(left, top)`.
pub fn format_regions_json(regions: &[ClusterRegion]) -> String {
    let mut sorted = regions.to_vec();
    sorted.sort_by(region_order);
    to_json(&sorted)
}

pub fn read_regions_json(path: &Path) -> Result<Vec<ClusterRegion>, FormatError> {
    parse_regions_json(&read_text(path)?)
}

pub fn write_regions_json(regions: &[ClusterRegion], path: &Path) -> Result<(), FormatError> {
    write_atomic(path, format_regions_json(regions).as_bytes())
}

/// Pretty JSON of any serializable value, newline-terminated.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, to_json(value).as_bytes())
}

pub fn json_string<T: Serialize>(value: &T) -> String {
    to_json(value)
}
