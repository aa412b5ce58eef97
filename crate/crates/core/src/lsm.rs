//! Local scale module: picks a few dense crop regions from a binarized
//! center heatmap.
//!
//! The mask is split into a `grid_cols × grid_rows` grid of cells. Cells are
//! ranked by the number of set pixels, the `top_k` densest are kept, and
//! eight-connected groups of kept cells are merged into rectangles. The
//! largest `max_crops` rectangles are enlarged about their centers and
//! clamped to the image.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::LsmError;
use crate::fusion::CropTransform;
use crate::heatmap::{binarize, BinaryMask, Heatmap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsmConfig {
    /// Cells across the image width.
    pub grid_cols: usize,
    /// Cells down the image height.
    pub grid_rows: usize,
    pub top_k: usize,
    /// Maximum number of crops returned.
    pub max_crops: usize,
    /// Scale factor applied to each region about its center.
    pub enlarge: f64,
    /// Binarization threshold on the channel-max heatmap.
    pub threshold: f32,
}

impl Default for LsmConfig {
    fn default() -> Self {
        Self {
            grid_cols: 16,
            grid_rows: 10,
            top_k: 15,
            max_crops: 2,
            enlarge: 1.2,
            threshold: 0.1,
        }
    }
}

impl LsmConfig {
    pub fn validate(&self) -> Result<(), LsmError> {
        let bad = |m: String| Err(LsmError::InvalidConfig(m));
        if self.grid_cols == 0 || self.grid_rows == 0 {
            return bad(format!(
                "grid must be at least 1x1, got {}x{}",
                self.grid_cols, self.grid_rows
            ));
        }
        if self.top_k > self.grid_cols * self.grid_rows {
            return bad(format!(
                "top_k {} exceeds {} grid cells",
                self.top_k,
                self.grid_cols * self.grid_rows
            ));
        }
        if !(self.enlarge >= 1.0 && self.enlarge.is_finite()) {
            return bad(format!("enlarge must be >= 1, got {}", self.enlarge));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            ));
        }
        Ok(())
    }
}

/// Pixel rectangle with the aggregated density of its member cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterRegion {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub density: f64,
    #[serde(default)]
    pub cell_count: usize,
}

impl ClusterRegion {
    pub fn new(
        left: f64,
        top: f64,
        width: f64,
        height: f64,
        density: f64,
        cell_count: usize,
    ) -> Self {
        Self {
            left,
            top,
            width,
            height,
            density,
            cell_count,
        }
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Closed-rectangle membership.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.left && x <= self.right() && y >= self.top && y <= self.bottom()
    }

    /// Scales about the center by `factor`, then clamps to `[0, W] × [0, H]`.
    pub fn enlarged(&self, factor: f64, image_w: f64, image_h: f64) -> Self {
        let cx = self.left + self.width / 2.0;
        let cy = self.top + self.height / 2.0;
        let (hw, hh) = (self.width * factor / 2.0, self.height * factor / 2.0);
        let l = (cx - hw).max(0.0);
        let t = (cy - hh).max(0.0);
        let r = (cx + hw).min(image_w);
        let b = (cy + hh).min(image_h);
        Self {
            left: l,
            top: t,
            width: (r - l).max(0.0),
            height: (b - t).max(0.0),
            ..*self
        }
    }
}

/// Region ordering used for truncation: larger area first, then higher
/// density, then `(left, top)`.
pub fn region_order(a: &ClusterRegion, b: &ClusterRegion) -> Ordering {
    b.area()
        .total_cmp(&a.area())
        .then_with(|| b.density.total_cmp(&a.density))
        .then_with(|| a.left.total_cmp(&b.left))
        .then_with(|| a.top.total_cmp(&b.top))
}

/// Per-cell set-pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityGrid {
    pub cols: usize,
    pub rows: usize,
    /// `width`/`height` of the underlying mask.
    pub image_width: usize,
    pub image_height: usize,
    values: Vec<u64>,
}

impl DensityGrid {
    pub fn get(&self, col: usize, row: usize) -> u64 {
        self.values[row * self.cols + col]
    }

    /// Pixel span `[x0, x1) × [y0, y1)` of a cell. The last column and row
    /// absorb any remainder.
    pub fn cell_bounds(&self, col: usize, row: usize) -> (usize, usize, usize, usize) {
        let (x0, x1) = axis_span(col, self.cols, self.image_width);
        let (y0, y1) = axis_span(row, self.rows, self.image_height);
        (x0, y0, x1, y1)
    }
}

fn axis_span(i: usize, n: usize, len: usize) -> (usize, usize) {
    let step = len / n;
    let start = i * step;
    let end = if i + 1 == n { len } else { start + step };
    (start, end)
}

/// Counts set mask pixels in each grid cell.
pub fn grid_densities(mask: &BinaryMask, cfg: &LsmConfig) -> DensityGrid {
    let (cols, rows) = (cfg.grid_cols.max(1), cfg.grid_rows.max(1));
    let mut grid = DensityGrid {
        cols,
        rows,
        image_width: mask.width(),
        image_height: mask.height(),
        values: vec![0; cols * rows],
    };
    let col_step = mask.width() / cols;
    let row_step = mask.height() / rows;
    let cell_of =
        |p: usize, step: usize, n: usize| p.checked_div(step).map_or(n - 1, |i| i.min(n - 1));
    for y in 0..mask.height() {
        let row = cell_of(y, row_step, rows);
        for x in 0..mask.width() {
            if mask.get(y, x) {
                let col = cell_of(x, col_step, cols);
                grid.values[row * cols + col] += 1;
            }
        }
    }
    grid
}

/// The `top_k` densest non-empty cells as `(col, row)`, ties by `(col, row)`.
pub fn top_cells(grid: &DensityGrid, top_k: usize) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = (0..grid.cols)
        .flat_map(|c| (0..grid.rows).map(move |r| (c, r)))
        .filter(|&(c, r)| grid.get(c, r) > 0)
        .collect();
    cells.sort_by(|a, b| grid.get(b.0, b.1).cmp(&grid.get(a.0, a.1)).then(a.cmp(b)));
    cells.truncate(top_k);
    cells
}

/// All eight-connected components of the selected cells as pixel rectangles,
/// before truncation and enlargement, sorted by [`region_order`].
pub fn cluster_components(grid: &DensityGrid, top_k: usize) -> Vec<ClusterRegion> {
    let selected = top_cells(grid, top_k);
    let mut chosen = vec![false; grid.cols * grid.rows];
    for &(c, r) in &selected {
        chosen[r * grid.cols + c] = true;
    }
    let mut visited = vec![false; grid.cols * grid.rows];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for &(c0, r0) in &selected {
        if visited[r0 * grid.cols + c0] {
            continue;
        }
        visited[r0 * grid.cols + c0] = true;
        queue.push_back((c0, r0));
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut density = 0u64;
        let mut count = 0usize;
        while let Some((c, r)) = queue.pop_front() {
            let (cx0, cy0, cx1, cy1) = grid.cell_bounds(c, r);
            x0 = x0.min(cx0);
            y0 = y0.min(cy0);
            x1 = x1.max(cx1);
            y1 = y1.max(cy1);
            density += grid.get(c, r);
            count += 1;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nc, nr) = (c as isize + dc, r as isize + dr);
                    if nc < 0 || nr < 0 || nc >= grid.cols as isize || nr >= grid.rows as isize {
                        continue;
                    }
                    let idx = nr as usize * grid.cols + nc as usize;
                    if chosen[idx] && !visited[idx] {
                        visited[idx] = true;
                        queue.push_back((nc as usize, nr as usize));
                    }
                }
            }
        }
        regions.push(ClusterRegion::new(
            x0 as f64,
            y0 as f64,
            (x1 - x0) as f64,
            (y1 - y0) as f64,
            density as f64,
            count,
        ));
    }
    regions.sort_by(region_order);
    regions
}

/// Picks at most `cfg.max_crops` crop regions from a binary location mask.
pub fn select_regions(mask: &BinaryMask, cfg: &LsmConfig) -> Vec<ClusterRegion> {
    let grid = grid_densities(mask, cfg);
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    cluster_components(&grid, cfg.top_k)
        .into_iter()
        .take(cfg.max_crops)
        .map(|r| r.enlarged(cfg.enlarge, w, h))
        .collect()
}

/// Binarizes a heatmap and selects crop regions from it.
pub fn lsm_pipeline(hm: &Heatmap, cfg: &LsmConfig) -> Result<Vec<ClusterRegion>, LsmError> {
    cfg.validate()?;
    Ok(select_regions(&binarize(hm, cfg.threshold), cfg))
}

/// Transform that stretches `region` onto a `target` canvas, scaling each
/// axis independently.
pub fn crop_and_rescale(
    region: &ClusterRegion,
    target: (f64, f64),
) -> Result<CropTransform, LsmError> {
    let (tw, th) = target;
    if !(tw > 0.0 && th > 0.0 && tw.is_finite() && th.is_finite()) {
        return Err(LsmError::InvalidTarget(tw, th));
    }
    if !(region.width > 0.0 && region.height > 0.0) {
        return Err(LsmError::EmptyRegion);
    }
    let scale = [tw / region.width, th / region.height];
    Ok(CropTransform {
        region: *region,
        scale,
        offset: [-region.left * scale[0], -region.top * scale[1]],
    })
}
