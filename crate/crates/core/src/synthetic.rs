//! Seeded clustered scenes and a resolution-sensitive pseudo-detector used to
//! measure what crop-and-zoom buys over a single global pass.
//!
//! The pseudo-detector is an oracle standing in for a trained network: an
//! object whose effective on-canvas size is `s` is found with probability
//! `clamp(s / s0, 0, 1)` and its center is jittered by Gaussian noise with
//! standard deviation `noise_coeff / s` canvas pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SyntheticError;
use crate::evaluation::{evaluate, EvalParams, EvalReport, GroundTruth, ImageRecords};
use crate::fusion::{clamp_to_image, fuse, CropTransform, Detection};
use crate::geometry::BBox;
use crate::heatmap::encode;
use crate::lsm::{crop_and_rescale, lsm_pipeline, ClusterRegion, LsmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub n_clusters: usize,
    /// Standard deviation of member offsets from the cluster center, pixels.
    pub cluster_spread: f64,
    /// Inclusive range of members per cluster.
    pub objects_per_cluster: (usize, usize),
    pub n_sparse: usize,
    /// Side-length range for small objects, pixels.
    pub small_size: (f64, f64),
    /// Side-length range for the remaining objects, pixels.
    pub large_size: (f64, f64),
    /// Probability that an object is drawn from `small_size`.
    pub small_share: f64,
    pub categories: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            image_width: 1024,
            image_height: 640,
            n_clusters: 2,
            cluster_spread: 40.0,
            objects_per_cluster: (20, 40),
            n_sparse: 15,
            small_size: (6.0, 20.0),
            large_size: (32.0, 80.0),
            small_share: 0.85,
            categories: 3,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidScene(m));
        if self.image_width == 0 || self.image_height == 0 {
            return bad(format!(
                "image must be at least 1x1, got {}x{}",
                self.image_width, self.image_height
            ));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread >= 0.0) {
            return bad(format!(
                "cluster_spread must be finite and >= 0, got {}",
                self.cluster_spread
            ));
        }
        let (lo, hi) = self.objects_per_cluster;
        if lo > hi {
            return bad(format!("objects_per_cluster range is empty: {lo} > {hi}"));
        }
        for (name, (lo, hi)) in [
            ("small_size", self.small_size),
            ("large_size", self.large_size),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(format!(
                    "{name} must satisfy 0 < min <= max, got ({lo}, {hi})"
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.small_share) {
            return bad(format!(
                "small_share must be in [0, 1], got {}",
                self.small_share
            ));
        }
        if self.categories == 0 {
            return bad("categories must be >= 1".into());
        }
        Ok(())
    }
}

/// Objects of one generated scene. `cluster` is `None` for sparse singletons.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub objects: Vec<GroundTruth>,
    pub cluster_of: Vec<Option<usize>>,
    pub cluster_centers: Vec<[f64; 2]>,
}

impl Scene {
    pub fn ground_truth(&self) -> &[GroundTruth] {
        &self.objects
    }
}

fn sample_box<R: Rng>(rng: &mut R, cfg: &SceneConfig, cx: f64, cy: f64) -> BBox {
    let (lo, hi) = if rng.random::<f64>() < cfg.small_share {
        cfg.small_size
    } else {
        cfg.large_size
    };
    let side = if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    let aspect: f64 = rng.random_range(0.75..1.3333);
    let (w, h) = (side * aspect.sqrt(), side / aspect.sqrt());
    clamp_inside(
        BBox::new(cx, cy, w, h),
        cfg.image_width as f64,
        cfg.image_height as f64,
    )
}

/// Shrinks and shifts a box so it lies inside `[0, W] × [0, H]`.
fn clamp_inside(b: BBox, width: f64, height: f64) -> BBox {
    let w = b.w.min(width);
    let h = b.h.min(height);
    let cx = b.cx.clamp(w / 2.0, width - w / 2.0);
    let cy = b.cy.clamp(h / 2.0, height - h / 2.0);
    BBox::new(cx, cy, w, h)
}

/// Generates a deterministic clustered scene.
///
/// Cluster centers are uniform over the image inset by one spread; members
/// scatter around them with an isotropic Gaussian; sparse objects are
/// uniform. Every box is clamped inside the image.
pub fn generate_scene(cfg: &SceneConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.image_width as f64, cfg.image_height as f64);
    let categories = cfg.categories.max(1);
    let mut objects = Vec::new();
    let mut cluster_of = Vec::new();
    let mut centers = Vec::with_capacity(cfg.n_clusters);
    let inset_x = cfg.cluster_spread.min(w / 2.0);
    let inset_y = cfg.cluster_spread.min(h / 2.0);
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    let scatter = Normal::new(0.0, cfg.cluster_spread.max(0.0)).expect("finite spread");
    for ci in 0..cfg.n_clusters {
        let center = [
            uniform(&mut rng, inset_x, w - inset_x),
            uniform(&mut rng, inset_y, h - inset_y),
        ];
        centers.push(center);
        let (lo, hi) = cfg.objects_per_cluster;
        let n = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        for _ in 0..n {
            let cx = center[0] + scatter.sample(&mut rng);
            let cy = center[1] + scatter.sample(&mut rng);
            let bbox = sample_box(&mut rng, cfg, cx, cy);
            let category = rng.random_range(0..categories);
            objects.push(GroundTruth {
                bbox,
                category,
                ignore: false,
            });
            cluster_of.push(Some(ci));
        }
    }
    for _ in 0..cfg.n_sparse {
        let cx = uniform(&mut rng, 0.0, w);
        let cy = uniform(&mut rng, 0.0, h);
        let bbox = sample_box(&mut rng, cfg, cx, cy);
        let category = rng.random_range(0..categories);
        objects.push(GroundTruth {
            bbox,
            category,
            ignore: false,
        });
        cluster_of.push(None);
    }
    Scene {
        width: cfg.image_width,
        height: cfg.image_height,
        objects,
        cluster_of,
        cluster_centers: centers,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoDetectorConfig {
    /// Effective size `s0` at which recall saturates, pixels.
    pub size_floor: f64,
    /// Center noise numerator, canvas pixels squared.
    pub noise_coeff: f64,
    /// Relative score jitter in `[0, 1)`.
    pub score_jitter: f64,
    pub seed: u64,
}

impl Default for PseudoDetectorConfig {
    fn default() -> Self {
        Self {
            size_floor: 16.0,
            noise_coeff: 8.0,
            score_jitter: 0.1,
            seed: 0,
        }
    }
}

impl PseudoDetectorConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidDetector(m));
        if !(self.size_floor.is_finite() && self.size_floor > 0.0) {
            return bad(format!(
                "size_floor must be finite and > 0, got {}",
                self.size_floor
            ));
        }
        if !(self.noise_coeff.is_finite() && self.noise_coeff >= 0.0) {
            return bad(format!(
                "noise_coeff must be finite and >= 0, got {}",
                self.noise_coeff
            ));
        }
        if !(0.0..1.0).contains(&self.score_jitter) {
            return bad(format!(
                "score_jitter must be in [0, 1), got {}",
                self.score_jitter
            ));
        }
        Ok(())
    }
}

/// Effective on-canvas size of a box under a view.
pub fn effective_size(b: &BBox, view: &CropTransform) -> f64 {
    (b.w * view.scale[0]).min(b.h * view.scale[1])
}

/// Detection probability at effective size `s_eff`.
pub fn detection_probability(s_eff: f64, size_floor: f64) -> f64 {
    (s_eff / size_floor).clamp(0.0, 1.0)
}

/// Runs the pseudo-detector on the objects whose centers fall inside the
/// view. Output boxes are in canvas coordinates of the view.
pub fn pseudo_detect(
    gts: &[GroundTruth],
    view: &CropTransform,
    cfg: &PseudoDetectorConfig,
) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::new();
    for g in gts {
        if g.ignore || !view.region.contains(g.bbox.cx, g.bbox.cy) {
            continue;
        }
        // Fixed draws per object keep the stream aligned across views.
        let u: f64 = rng.random();
        let nx = unit.sample(&mut rng);
        let ny = unit.sample(&mut rng);
        let jitter: f64 = rng.random();

        let s_eff = effective_size(&g.bbox, view);
        let p = detection_probability(s_eff, cfg.size_floor);
        if s_eff <= 0.0 || u >= p {
            continue;
        }
        let sigma = cfg.noise_coeff / s_eff;
        let mut bbox = view.box_forward(&g.bbox);
        bbox.cx += sigma * nx;
        bbox.cy += sigma * ny;
        out.push(Detection {
            bbox,
            category: g.category,
            score: p * (1.0 - cfg.score_jitter * jitter),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PipelineMode {
    GlobalOnly,
    /// Global pass plus `crops` equal tiles.
    Uniform {
        crops: usize,
    },
    /// Global pass plus LSM-selected crops.
    Lsm(LsmConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub report: EvalReport,
    pub detections: Vec<Detection>,
    pub regions: Vec<ClusterRegion>,
    /// Detector invocations, counting the global pass.
    pub detector_passes: usize,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn pass_config(cfg: &PseudoDetectorConfig, pass: usize) -> PseudoDetectorConfig {
    PseudoDetectorConfig {
        seed: splitmix64(cfg.seed ^ splitmix64(pass as u64)),
        ..*cfg
    }
}

/// Equal tiles for `n` crops, laid out as the most square `cols × rows`
/// factorization with `cols ≥ rows`.
pub fn uniform_tiles(n: usize, width: f64, height: f64) -> Vec<ClusterRegion> {
    if n == 0 {
        return Vec::new();
    }
    let rows = (1..=n)
        .filter(|r| n.is_multiple_of(*r) && r * r <= n)
        .max()
        .unwrap_or(1);
    let cols = n / rows;
    let (tw, th) = (width / cols as f64, height / rows as f64);
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (c, r)))
        .map(|(c, r)| ClusterRegion::new(c as f64 * tw, r as f64 * th, tw, th, 0.0, 1))
        .collect()
}

/// Crop regions for LSM mode, computed from a ground-truth heatmap.
pub fn lsm_regions(scene: &Scene, cfg: &LsmConfig) -> Vec<ClusterRegion> {
    let channels = scene
        .objects
        .iter()
        .map(|g| g.category + 1)
        .max()
        .unwrap_or(1);
    let ann: Vec<(BBox, usize)> = scene
        .objects
        .iter()
        .filter(|g| !g.ignore)
        .map(|g| (g.bbox, g.category))
        .collect();
    let hm = encode(&ann, channels, scene.height, scene.width).expect("scene dimensions are valid");
    lsm_pipeline(&hm, cfg).expect("validated LSM config")
}

/// Detects a scene globally and on the crops chosen by `mode`, fuses the
/// results, and evaluates against the scene's ground truth. The detector
/// canvas is the full image size.
pub fn run_pipeline(
    scene: &Scene,
    mode: &PipelineMode,
    det: &PseudoDetectorConfig,
    params: &EvalParams,
) -> PipelineOutcome {
    let (w, h) = (scene.width as f64, scene.height as f64);
    let gts = scene.ground_truth();
    let global_view = CropTransform::identity(w, h);
    let global = pseudo_detect(gts, &global_view, &pass_config(det, 0));

    let regions = match mode {
        PipelineMode::GlobalOnly => Vec::new(),
        PipelineMode::Uniform { crops } => uniform_tiles(*crops, w, h),
        PipelineMode::Lsm(cfg) => lsm_regions(scene, cfg),
    };
    let crops: Vec<(CropTransform, Vec<Detection>)> = regions
        .iter()
        .filter_map(|r| crop_and_rescale(r, (w, h)).ok())
        .enumerate()
        .map(|(i, t)| {
            let dets = pseudo_detect(gts, &t, &pass_config(det, i + 1));
            (t, dets)
        })
        .collect();
    let mut detections = fuse(&global, &crops);
    clamp_to_image(&mut detections, w, h);
    let report = evaluate(
        &[ImageRecords {
            gts: gts.to_vec(),
            dets: detections.clone(),
        }],
        params,
    );
    PipelineOutcome {
        report,
        detections,
        detector_passes: 1 + crops.len(),
        regions,
    }
}

/// Per-metric means over a set of scenes; undefined per-scene values are
/// skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenes: usize,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub mean_detector_passes: f64,
    pub max_detector_passes: usize,
    pub min_detector_passes: usize,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// The benchmark suite: `n` scenes with default [`SceneConfig`] and seeds
/// `base_seed, base_seed + 1, …`.
pub fn standard_suite(n: usize, base_seed: u64) -> Vec<SceneConfig> {
    (0..n)
        .map(|i| SceneConfig {
            seed: base_seed.wrapping_add(i as u64),
            ..SceneConfig::default()
        })
        .collect()
}

/// Runs `mode` over every scene. Each scene's detector seed is derived from
/// `det.seed` and the scene seed.
pub fn run_suite(
    scenes: &[SceneConfig],
    mode: &PipelineMode,
    det: &PseudoDetectorConfig,
) -> SuiteReport {
    let params = EvalParams::default();
    let outcomes: Vec<PipelineOutcome> = scenes
        .iter()
        .map(|cfg| {
            let scene = generate_scene(cfg);
            let det = PseudoDetectorConfig {
                seed: splitmix64(det.seed ^ cfg.seed.rotate_left(17)),
                ..*det
            };
            run_pipeline(&scene, mode, &det, &params)
        })
        .collect();
    let passes: Vec<usize> = outcomes.iter().map(|o| o.detector_passes).collect();
    SuiteReport {
        scenes: outcomes.len(),
        ap: mean_of(outcomes.iter().map(|o| o.report.ap)),
        ap50: mean_of(outcomes.iter().map(|o| o.report.ap50)),
        ap75: mean_of(outcomes.iter().map(|o| o.report.ap75)),
        ap_small: mean_of(outcomes.iter().map(|o| o.report.ap_small)),
        ap_medium: mean_of(outcomes.iter().map(|o| o.report.ap_medium)),
        ap_large: mean_of(outcomes.iter().map(|o| o.report.ap_large)),
        mean_detector_passes: if passes.is_empty() {
            0.0
        } else {
            passes.iter().sum::<usize>() as f64 / passes.len() as f64
        },
        max_detector_passes: passes.iter().copied().max().unwrap_or(0),
        min_detector_passes: passes.iter().copied().min().unwrap_or(0),
    }
}
