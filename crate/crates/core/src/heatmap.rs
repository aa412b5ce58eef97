//! Dense center heatmaps: Gaussian-blob encoding, smoothing, peak decoding
//! and binarization.

use serde::{Deserialize, Serialize};

use crate::error::HeatmapError;
use crate::fusion::Detection;
use crate::geometry::BBox;

/// Scores below this never count as peaks.
pub const PEAK_FLOOR: f32 = 1e-6;

/// Default smoothing applied before peak extraction.
pub const DEFAULT_SMOOTH_SIGMA: f64 = 1.0;

/// `C × H × W` grid of scores in `[0, 1]`, channel-major, row-major within a
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl Heatmap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self, HeatmapError> {
        check_dims(channels, height, width)?;
        Ok(Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        })
    }

    pub fn from_values(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f32>,
    ) -> Result<Self, HeatmapError> {
        check_dims(channels, height, width)?;
        let expected = channels * height * width;
        if values.len() != expected {
            return Err(HeatmapError::BufferLength {
                expected,
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(HeatmapError::InvalidValue { index, value });
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.values[self.index(c, y, x)]
    }

    fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    /// Sum of all values in one channel.
    pub fn channel_mass(&self, c: usize) -> f64 {
        self.channel(c).iter().map(|&v| v as f64).sum()
    }
}

fn check_dims(channels: usize, height: usize, width: usize) -> Result<(), HeatmapError> {
    let overflow = channels
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .is_none();
    if channels == 0 || height == 0 || width == 0 || overflow {
        return Err(HeatmapError::InvalidDims {
            channels,
            height,
            width,
        });
    }
    Ok(())
}

/// Blob standard deviation for an object of the given size.
pub fn blob_sigma(w: f64, h: f64) -> f64 {
    (w.min(h) / 6.0).max(1.0)
}

/// Renders one Gaussian blob per object into its category channel at
/// stride 1. Blobs peak at exactly 1.0 on the integer center pixel and
/// overlapping blobs combine by elementwise max.
pub fn encode(
    annotations: &[(BBox, usize)],
    channels: usize,
    height: usize,
    width: usize,
) -> Result<Heatmap, HeatmapError> {
    let mut hm = Heatmap::zeros(channels, height, width)?;
    for (bbox, category) in annotations {
        if *category >= channels {
            return Err(HeatmapError::CategoryOutOfRange {
                category: *category,
                channels,
            });
        }
        let px = clamp_pixel(bbox.cx, width);
        let py = clamp_pixel(bbox.cy, height);
        let sigma = blob_sigma(bbox.w, bbox.h);
        let radius = (3.0 * sigma).ceil() as isize;
        let inv = 1.0 / (2.0 * sigma * sigma);
        for dy in -radius..=radius {
            let y = py as isize + dy;
            if y < 0 || y >= height as isize {
                continue;
            }
            for dx in -radius..=radius {
                let x = px as isize + dx;
                if x < 0 || x >= width as isize {
                    continue;
                }
                let v = (-((dx * dx + dy * dy) as f64) * inv).exp() as f32;
                let i = hm.index(*category, y as usize, x as usize);
                if v > hm.values[i] {
                    hm.values[i] = v;
                }
            }
        }
    }
    Ok(hm)
}

fn clamp_pixel(v: f64, len: usize) -> usize {
    if !v.is_finite() || v < 0.0 {
        0
    } else {
        (v.floor() as usize).min(len - 1)
    }
}

/// Normalized 1-D Gaussian kernel with half-width `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let raw: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) * inv).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian smoothing per channel with edge replication; output is
/// clamped to `[0, 1]`. `sigma = 0` returns the input unchanged.
pub fn gaussian_filter(hm: &Heatmap, sigma: f64) -> Result<Heatmap, HeatmapError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(HeatmapError::InvalidParameter(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(hm.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = (hm.height, hm.width);
    let mut out = Vec::with_capacity(hm.values.len());
    let mut tmp = vec![0.0f64; h * w];
    for c in 0..hm.channels {
        let src = hm.channel(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, kv)| {
                        let sx = (x as isize + k as isize - radius).clamp(0, w as isize - 1);
                        kv * row[sx as usize] as f64
                    })
                    .sum();
            }
        }
        // Vertical pass row by row so memory is read contiguously.
        let mut acc = vec![0.0f64; w];
        for y in 0..h {
            acc.fill(0.0);
            for (k, kv) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                for (a, t) in acc.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                    *a += kv * t;
                }
            }
            out.extend(acc.iter().map(|v| v.clamp(0.0, 1.0) as f32));
        }
    }
    Ok(Heatmap { values: out, ..*hm })
}

/// Local maximum in a heatmap channel, pixel-index coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub channel: usize,
    pub x: usize,
    pub y: usize,
    pub score: f32,
}

fn peak_order(a: &Peak, b: &Peak) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| (a.channel, a.y, a.x).cmp(&(b.channel, b.y, b.x)))
}

/// Extracts up to `top_n` local maxima, optionally smoothing first.
///
/// A pixel is a peak when its score reaches [`PEAK_FLOOR`] and is ≥ all
/// eight neighbors; on plateaus only the pixel with no equal neighbor
/// earlier in `(y, x)` order is kept. Results are sorted by score
/// descending, then `(channel, y, x)`.
pub fn decode(hm: &Heatmap, top_n: usize, smooth_sigma: f64) -> Result<Vec<Peak>, HeatmapError> {
    let smoothed;
    let hm = if smooth_sigma > 0.0 {
        smoothed = gaussian_filter(hm, smooth_sigma)?;
        &smoothed
    } else {
        if smooth_sigma < 0.0 || smooth_sigma.is_nan() {
            return Err(HeatmapError::InvalidParameter(format!(
                "smooth_sigma must be >= 0, got {smooth_sigma}"
            )));
        }
        hm
    };
    let (h, w) = (hm.height as isize, hm.width as isize);
    let mut peaks = Vec::new();
    for c in 0..hm.channels {
        for y in 0..h {
            for x in 0..w {
                let v = hm.get(c, y as usize, x as usize);
                if v < PEAK_FLOOR {
                    continue;
                }
                let mut is_peak = true;
                'nbr: for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (ny, nx) = (y + dy, x + dx);
                        if ny < 0 || ny >= h || nx < 0 || nx >= w {
                            continue;
                        }
                        let n = hm.get(c, ny as usize, nx as usize);
                        let earlier = (ny, nx) < (y, x);
                        if n > v || (n == v && earlier) {
                            is_peak = false;
                            break 'nbr;
                        }
                    }
                }
                if is_peak {
                    peaks.push(Peak {
                        channel: c,
                        x: x as usize,
                        y: y as usize,
                        score: v,
                    });
                }
            }
        }
    }
    peaks.sort_by(peak_order);
    peaks.truncate(top_n);
    Ok(peaks)
}

/// Turns peaks into detections using externally supplied box sizes.
///
/// The size regressor is not part of this crate; `size_of` may look sizes
/// up from ground truth, an oracle, or return a constant.
pub fn peaks_to_detections<F>(
    peaks: &[Peak],
    mut size_of: F,
) -> Result<Vec<Detection>, HeatmapError>
where
    F: FnMut(&Peak) -> Option<(f64, f64)>,
{
    peaks
        .iter()
        .map(|p| {
            let (w, h) = size_of(p).ok_or(HeatmapError::MissingSize {
                channel: p.channel,
                x: p.x,
                y: p.y,
            })?;
            Ok(Detection {
                bbox: BBox::new(p.x as f64, p.y as f64, w, h),
                category: p.channel,
                score: p.score as f64,
            })
        })
        .collect()
}

/// Spatial boolean mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, HeatmapError> {
        check_dims(1, height, width)?;
        if bits.len() != height * width {
            return Err(HeatmapError::BufferLength {
                expected: height * width,
                got: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self, HeatmapError> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Sets a pixel when its maximum over channels reaches `threshold`.
pub fn binarize(hm: &Heatmap, threshold: f32) -> BinaryMask {
    let n = hm.height * hm.width;
    let bits = (0..n)
        .map(|i| {
            (0..hm.channels)
                .map(|c| hm.values[c * n + i])
                .fold(f32::NEG_INFINITY, f32::max)
                >= threshold
        })
        .collect();
    BinaryMask {
        height: hm.height,
        width: hm.width,
        bits,
    }
}

/// Penalty-reduced pixelwise focal loss (α = 2, β = 4) normalized by the
/// number of ground-truth peaks (pixels equal to 1), at least one.
pub fn focal_loss(pred: &Heatmap, gt: &Heatmap) -> Result<f64, HeatmapError> {
    if pred.shape() != gt.shape() {
        return Err(HeatmapError::ShapeMismatch(pred.shape(), gt.shape()));
    }
    const EPS: f64 = 1e-6;
    let mut total = 0.0;
    let mut positives = 0usize;
    for (&p, &g) in pred.values.iter().zip(&gt.values) {
        let p = (p as f64).clamp(EPS, 1.0 - EPS);
        let g = g as f64;
        if g >= 1.0 {
            positives += 1;
            total -= (1.0 - p).powi(2) * p.ln();
        } else {
            total -= (1.0 - g).powi(4) * p.powi(2) * (1.0 - p).ln();
        }
    }
    Ok(total / positives.max(1) as f64)
}
