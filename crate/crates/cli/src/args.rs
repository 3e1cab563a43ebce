use std::path::PathBuf;

use asyncdepth::featurize::PoolMode;
use asyncdepth::render::DEFAULT_MAX_DEPTH;
use asyncdepth::store::{DEFAULT_FRAME_SPACING, DEFAULT_MAX_TRAVERSALS, DEFAULT_SEARCH_RADIUS};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "asyncdepth",
    version,
    about = "Depth maps and depth features from past LiDAR traversals"
)]
#[command(allow_negative_numbers = true, propagate_version = true)]
pub struct Cli {
    /// Worker threads; falls back to ASYNCDEPTH_THREADS, then all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Key-value file supplying defaults for any flag (`max-traversals = 3`).
    /// Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ingest per-frame point files and pose descriptors into an ADST store.
    BuildStore(BuildStoreArgs),
    /// Render one depth map per (past traversal, camera) for an ego pose.
    Render(RenderArgs),
    /// Downsample and pool a directory of depth maps into one feature tensor.
    Featurize(FeaturizeArgs),
    /// Time the query → feature pipeline and report store size.
    Bench(BenchArgs),
    /// Composite detection score from mAP and TP errors.
    Score(ScoreArgs),
    /// Generate a synthetic scene: store, per-frame files and ground-truth depth.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct BuildStoreArgs {
    /// Directory with one sub-directory per traversal, each holding
    /// `<name>.ply|.bin|.xyz` point files next to `<name>.pose` descriptors.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frames closer than half this spacing to the previous kept frame are dropped; 0 keeps all.
    #[arg(long, default_value_t = DEFAULT_FRAME_SPACING)]
    pub frame_spacing: f64,
}

#[derive(Args, Debug, Clone)]
pub struct QueryArgs {
    /// Along-road frame offsets in meters.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, -20.0, 20.0])]
    pub offsets: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_TRAVERSALS)]
    pub max_traversals: usize,
    #[arg(long, default_value_t = DEFAULT_SEARCH_RADIUS)]
    pub search_radius: f64,
    /// Skip traversals with any frame at or after this timestamp.
    #[arg(long)]
    pub exclude_after: Option<f64>,
    /// Depth clip in meters; 0 disables clipping.
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: f64,
    /// Keep this percentile of the depths landing on a pixel instead of the maximum.
    #[arg(long)]
    pub percentile: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Ego pose descriptor.
    #[arg(long)]
    pub pose: PathBuf,
    /// Camera descriptors, comma separated or repeated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub cameras: Vec<PathBuf>,
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write 16-bit millimeter PGM previews.
    #[arg(long)]
    pub pgm: bool,
    /// Translation noise std in meters applied to the ego pose.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_t: f64,
    /// Yaw noise std in degrees applied to the ego pose.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_r: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturb every stored frame pose as well.
    #[arg(long)]
    pub perturb_past: bool,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    /// Directory of `t<traversal>_c<camera>.addm` depth maps.
    #[arg(long)]
    pub depth_dir: PathBuf,
    #[arg(long, default_value = "downavg")]
    pub mode: String,
    #[arg(long, default_value_t = asyncdepth::featurize::DEFAULT_SCALE)]
    pub scale: u32,
    #[arg(long, default_value = "mean")]
    pub pool: PoolMode,
    /// Camera index to pool; required when the directory holds several cameras.
    #[arg(long)]
    pub camera: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub cameras: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub repeat: usize,
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long, default_value_t = asyncdepth::featurize::DEFAULT_SCALE)]
    pub scale: u32,
    #[arg(long, default_value = "mean")]
    pub pool: PoolMode,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub map: f64,
    #[arg(long)]
    pub ate: f64,
    #[arg(long)]
    pub ase: f64,
    #[arg(long)]
    pub aoe: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene description; the built-in street scene is used when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Seed of the built-in street scene.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub traversals: usize,
    #[arg(long, default_value_t = DEFAULT_FRAME_SPACING)]
    pub frame_spacing: f64,
    /// Ego pose for the ground-truth rasters; defaults to mid-route.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    /// Cameras for the ground-truth rasters; defaults to one forward camera.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub cameras: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: f64,
    /// Also write per-frame `.bin` + `.pose` files accepted by `build-store`.
    #[arg(long)]
    pub frames: bool,
    #[arg(long)]
    pub out: PathBuf,
}
