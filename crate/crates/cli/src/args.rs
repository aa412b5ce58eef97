use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clustercrop::evaluation::DEFAULT_MAX_DETS;
use clustercrop::heatmap::DEFAULT_SMOOTH_SIGMA;
use clustercrop::io::IGNORED_REGION_CATEGORY;
use clustercrop::{LsmConfig, PseudoDetectorConfig, SceneConfig};

/// A `WxH` pair, also used for `CxR` grid shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub w: usize,
    pub h: usize,
}

impl Dims {
    pub const fn new(w: usize, h: usize) -> Self {
        Self { w, h }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.w, self.h)
    }
}

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("expected WxH, got {s:?}"))
        };
        let dims = Dims::new(parse(w)?, parse(h)?);
        if dims.w == 0 || dims.h == 0 {
            return Err(format!("dimensions must be positive, got {s:?}"));
        }
        Ok(dims)
    }
}

fn lsm_defaults() -> LsmConfig {
    LsmConfig::default()
}

fn scene_defaults() -> SceneConfig {
    SceneConfig::default()
}

fn detector_defaults() -> PseudoDetectorConfig {
    PseudoDetectorConfig::default()
}

/// Detector canvas size crops are rescaled to.
pub fn default_canvas() -> Dims {
    let s = scene_defaults();
    Dims::new(s.image_width, s.image_height)
}

#[derive(Debug, Parser)]
#[command(
    name = "clustercrop",
    version,
    about = "Cluster-guided cropping for tiny-object detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render annotations as a per-category center heatmap (binary YHM1).
    Encode(EncodeArgs),
    /// Extract heatmap peaks as JSON.
    Decode(DecodeArgs),
    /// Select dense crop regions from a heatmap.
    Lsm(LsmArgs),
    /// Merge global and per-crop detections by region replacement.
    Fuse(FuseArgs),
    /// COCO-style AP of detections against annotation files.
    Eval(EvalArgs),
    /// Write seeded synthetic clustered scenes as annotation files.
    Synth(SynthArgs),
    /// Run the synthetic pipeline suite in one mode and report AP.
    Bench(BenchArgs),
    /// Draw regions and detections as an SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Annotation file (left,top,width,height,score,category,truncation,occlusion).
    pub annotations: PathBuf,
    /// Image size WxH.
    #[arg(long)]
    pub size: Dims,
    /// Output heatmap file.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of channels; one more than the largest category when omitted.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Category treated as an ignored region and left out of the heatmap (repeatable).
    #[arg(long = "ignore-category", default_values_t = [IGNORED_REGION_CATEGORY])]
    pub ignore_categories: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Input heatmap file.
    #[arg(long)]
    pub heatmap: PathBuf,
    /// Maximum number of peaks.
    #[arg(long, default_value_t = DEFAULT_MAX_DETS)]
    pub top_n: usize,
    /// Gaussian smoothing sigma applied before peak search (0 disables).
    #[arg(long, default_value_t = DEFAULT_SMOOTH_SIGMA)]
    pub smooth_sigma: f64,
    /// Output JSON file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LsmArgs {
    /// Input heatmap file.
    #[arg(long)]
    pub heatmap: PathBuf,
    /// Density grid as COLSxROWS.
    #[arg(long, default_value_t = Dims::new(lsm_defaults().grid_cols, lsm_defaults().grid_rows))]
    pub grid: Dims,
    /// Number of densest cells kept.
    #[arg(long, default_value_t = lsm_defaults().top_k)]
    pub top_k: usize,
    /// Maximum number of crop regions.
    #[arg(long, default_value_t = lsm_defaults().max_crops)]
    pub k: usize,
    /// Binarization threshold on the channel maximum.
    #[arg(long, default_value_t = lsm_defaults().threshold)]
    pub threshold: f32,
    /// Enlargement factor applied about each region center.
    #[arg(long, default_value_t = lsm_defaults().enlarge)]
    pub enlarge: f64,
    /// Output regions JSON file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl LsmArgs {
    pub fn config(&self) -> LsmConfig {
        LsmConfig {
            grid_cols: self.grid.w,
            grid_rows: self.grid.h,
            top_k: self.top_k,
            max_crops: self.k,
            enlarge: self.enlarge,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Global-pass detections JSON.
    #[arg(long)]
    pub global: PathBuf,
    /// Regions JSON; entry i pairs with the i-th --crop-dets file.
    #[arg(long)]
    pub regions: PathBuf,
    /// Per-crop detections JSON in detector-canvas coordinates, one file per region.
    #[arg(long = "crop-dets", num_args = 0..)]
    pub crop_dets: Vec<PathBuf>,
    /// Detector canvas size WxH that each crop was rescaled to.
    #[arg(long, default_value_t = default_canvas())]
    pub target: Dims,
    /// Clamp fused boxes to this image size WxH.
    #[arg(long)]
    pub image_size: Option<Dims>,
    /// Output JSON file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth annotation files; the i-th file is image_id i.
    #[arg(long, num_args = 1.., required = true)]
    pub gt: Vec<PathBuf>,
    /// Detections JSON.
    #[arg(long)]
    pub dets: PathBuf,
    /// Maximum detections per image and category.
    #[arg(long, default_value_t = DEFAULT_MAX_DETS)]
    pub max_dets: usize,
    /// Ground-truth category marking ignored regions (repeatable).
    #[arg(long = "ignore-category", default_values_t = [IGNORED_REGION_CATEGORY])]
    pub ignore_categories: Vec<u32>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Image width, pixels.
    #[arg(long, default_value_t = scene_defaults().image_width)]
    pub width: usize,
    /// Image height, pixels.
    #[arg(long, default_value_t = scene_defaults().image_height)]
    pub height: usize,
    /// Number of object clusters.
    #[arg(long, default_value_t = scene_defaults().n_clusters)]
    pub clusters: usize,
    /// Standard deviation of member offsets from a cluster center, pixels.
    #[arg(long, default_value_t = scene_defaults().cluster_spread)]
    pub cluster_spread: f64,
    /// Minimum members per cluster.
    #[arg(long, default_value_t = scene_defaults().objects_per_cluster.0)]
    pub min_per_cluster: usize,
    /// Maximum members per cluster.
    #[arg(long, default_value_t = scene_defaults().objects_per_cluster.1)]
    pub max_per_cluster: usize,
    /// Number of uniformly scattered objects.
    #[arg(long, default_value_t = scene_defaults().n_sparse)]
    pub sparse: usize,
    /// Smallest side of a small object, pixels.
    #[arg(long, default_value_t = scene_defaults().small_size.0)]
    pub small_min: f64,
    /// Largest side of a small object, pixels.
    #[arg(long, default_value_t = scene_defaults().small_size.1)]
    pub small_max: f64,
    /// Smallest side of a large object, pixels.
    #[arg(long, default_value_t = scene_defaults().large_size.0)]
    pub large_min: f64,
    /// Largest side of a large object, pixels.
    #[arg(long, default_value_t = scene_defaults().large_size.1)]
    pub large_max: f64,
    /// Probability that an object is small.
    #[arg(long, default_value_t = scene_defaults().small_share)]
    pub small_share: f64,
    /// Number of object categories.
    #[arg(long, default_value_t = scene_defaults().categories)]
    pub categories: usize,
}

impl SceneArgs {
    pub fn config(&self, seed: u64) -> SceneConfig {
        SceneConfig {
            image_width: self.width,
            image_height: self.height,
            n_clusters: self.clusters,
            cluster_spread: self.cluster_spread,
            objects_per_cluster: (self.min_per_cluster, self.max_per_cluster),
            n_sparse: self.sparse,
            small_size: (self.small_min, self.small_max),
            large_size: (self.large_min, self.large_max),
            small_share: self.small_share,
            categories: self.categories,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Seed of the first scene; scene i uses seed + i.
    #[arg(long, default_value_t = scene_defaults().seed)]
    pub seed: u64,
    /// Number of scenes.
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Global,
    Uniform,
    Lsm,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Cropping policy.
    #[arg(long, value_enum, default_value_t = Mode::Lsm)]
    pub mode: Mode,
    /// Maximum crop regions in lsm mode.
    #[arg(long, default_value_t = lsm_defaults().max_crops)]
    pub k: usize,
    /// Number of equal tiles in uniform mode.
    #[arg(long, default_value_t = 4)]
    pub crops: usize,
    /// Seed of the first scene and of the pseudo-detector.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of scenes.
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    /// Density grid for lsm mode as COLSxROWS.
    #[arg(long, default_value_t = Dims::new(lsm_defaults().grid_cols, lsm_defaults().grid_rows))]
    pub grid: Dims,
    /// Number of densest cells kept in lsm mode.
    #[arg(long, default_value_t = lsm_defaults().top_k)]
    pub top_k: usize,
    /// Binarization threshold in lsm mode.
    #[arg(long, default_value_t = lsm_defaults().threshold)]
    pub threshold: f32,
    /// Region enlargement factor in lsm mode.
    #[arg(long, default_value_t = lsm_defaults().enlarge)]
    pub enlarge: f64,
    /// On-canvas size at which the pseudo-detector reaches full recall, pixels.
    #[arg(long, default_value_t = detector_defaults().size_floor)]
    pub size_floor: f64,
    /// Center noise coefficient; noise sigma is this divided by on-canvas size.
    #[arg(long, default_value_t = detector_defaults().noise_coeff)]
    pub noise_coeff: f64,
    /// Relative score jitter.
    #[arg(long, default_value_t = detector_defaults().score_jitter)]
    pub score_jitter: f64,
    /// Output report JSON; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Canvas size WxH.
    #[arg(long, default_value_t = default_canvas())]
    pub image_size: Dims,
    /// Regions JSON to draw.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Detections JSON to draw.
    #[arg(long)]
    pub dets: Option<PathBuf>,
    /// Only draw detections of this image.
    #[arg(long)]
    pub image_id: Option<u64>,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
}
