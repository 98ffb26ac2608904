//! Command-line flags. Every numeric flag is optional: unset flags fall back
//! to the config file, then to the built-in desk-scale default.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use probfuse::metrics::Combination;
use probfuse::synth::CorruptMode;

#[derive(Debug, Parser)]
#[command(name = "probfuse", version, about = "Probabilistic body shape and pose estimation from groups of proxy inputs")]
pub struct Cli {
    /// TOML file whose keys mirror the flags; flags take precedence.
    #[arg(long, global = true, env = "PROBFUSE_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural SMPL-style toy body model.
    GenModel(GenModelArgs),
    /// Generate a synthetic benchmark (subjects × views, clean and/or corrupted).
    GenData(GenDataArgs),
    /// Train the distribution predictor.
    Train(TrainArgs),
    /// Predict pose and shape distributions for every sample of a dataset.
    Predict(PredictArgs),
    /// Score predictions over a sweep of group sizes and combination methods.
    Evaluate(EvaluateArgs),
    /// Export per-vertex uncertainty of one prediction as a PLY mesh.
    Uncertainty(UncertaintyArgs),
    /// Re-run the command recorded in a run manifest.
    Replay {
        /// Manifest written by an earlier run.
        manifest: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct GenModelArgs {
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mesh vertex count, at least 50 [full scale: 6890 (SMPL); desk: 600].
    #[arg(long)]
    pub vertices: Option<usize>,
    /// Skeleton joint count, at least 8 [full scale: 24 (SMPL); desk: 24].
    #[arg(long)]
    pub joints: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct GenerationFlags {
    /// Square proxy side in pixels [full scale: 256; desk: 256].
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Focal length in pixels [full scale: 300; desk: 300].
    #[arg(long)]
    pub focal: Option<f64>,
    /// Shape prior mean [full scale: 0; desk: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub shape_mean: Option<f64>,
    /// Shape prior variance [full scale: 2.25; desk: 2.25].
    #[arg(long)]
    pub shape_var: Option<f64>,
    /// Camera translation mean x,y,z in meters [full scale: 0,-0.2,2.5; desk: 0,-0.2,2.5].
    #[arg(long, value_delimiter = ',', num_args = 3, allow_negative_numbers = true)]
    pub cam_mean: Option<Vec<f64>>,
    /// Camera translation variances x,y,z in m² [full scale: 0.05,0.05,0.25; desk: 0.05,0.05,0.25].
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub cam_var: Option<Vec<f64>>,
    /// Keypoint confidence threshold [full scale: 0.025; desk: 0.025].
    #[arg(long)]
    pub confidence_threshold: Option<f64>,
    /// Standard deviation of procedural joint rotations in radians [full scale: motion-capture poses; desk: 0.3].
    #[arg(long)]
    pub pose_std: Option<f64>,
    /// Pose bank: one `γx γy γz θ…` line per pose, replacing procedural poses.
    #[arg(long)]
    pub pose_bank: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct AugmentationFlags {
    /// Body-part occlusion probability [full scale: 0.1; desk: 0.1].
    #[arg(long)]
    pub p_part_occlusion: Option<f64>,
    /// Per-pair left/right joint swap probability [full scale: 0.1; desk: 0.1].
    #[arg(long)]
    pub p_lr_swap: Option<f64>,
    /// Half-image occlusion probability [full scale: 0.05; desk: 0.05].
    #[arg(long)]
    pub p_half_image: Option<f64>,
    /// Per-joint removal probability [full scale: 0.1; desk: 0.1].
    #[arg(long)]
    pub p_joint_removal: Option<f64>,
    /// Joint noise half-width in pixels [full scale: 8; desk: 8].
    #[arg(long)]
    pub joint_noise: Option<f64>,
    /// Vertex noise half-width in meters [full scale: 0.01; desk: 0.01].
    #[arg(long)]
    pub vertex_noise: Option<f64>,
    /// Occlusion box probability [full scale: 0.5; desk: 0.5].
    #[arg(long)]
    pub p_occlusion_box: Option<f64>,
    /// Occlusion box side in pixels [full scale: 48; desk: 48].
    #[arg(long)]
    pub occlusion_box_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Body model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of subjects [full scale: 28 (SSP-3D); desk: 200].
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Views per subject, cycling front/back/left/right [full scale: 4; desk: 4].
    #[arg(long)]
    pub views: Option<usize>,
    /// Which samples to emit [default: both].
    #[arg(long, value_parser = parse_corrupt)]
    pub corrupt: Option<CorruptMode>,
    #[command(flatten)]
    pub generation: GenerationFlags,
    #[command(flatten)]
    pub augmentation: AugmentationFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Body model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Output weight file.
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed training set; without it fresh samples are generated every batch.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Loss log CSV [default: <out>.loss.csv].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint written after every epoch.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint written with the same configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs [full scale: 100; desk: 50].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size [full scale: 120; desk: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Batches per epoch when generating data [full scale: unstated; desk: 25].
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    /// Adam learning rate [full scale: 1e-4; desk: 1e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Reprojection samples B per example [full scale: unstated; desk: 8].
    #[arg(long)]
    pub reproj_samples: Option<usize>,
    /// Global-rotation loss weight [full scale: unstated; desk: 1].
    #[arg(long)]
    pub lambda_glob: Option<f64>,
    /// Reprojection loss weight on normalized coordinates [full scale: unstated; desk: 0.01].
    #[arg(long)]
    pub lambda_2d: Option<f64>,
    /// Average-pooling factor before the encoder [full scale: none (ResNet-18); desk: 4].
    #[arg(long)]
    pub pool_factor: Option<usize>,
    /// Channels of the stride-2 convolution stages [full scale: ResNet-18; desk: 8,16,32].
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Hidden units of the regression MLP [full scale: unstated; desk: 512].
    #[arg(long)]
    pub hidden: Option<usize>,
    #[command(flatten)]
    pub generation: GenerationFlags,
    #[command(flatten)]
    pub augmentation: AugmentationFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Trained weight file.
    #[arg(long)]
    pub weights: PathBuf,
    /// Dataset to predict on.
    #[arg(long)]
    pub data: PathBuf,
    /// Output predictions, one JSON object per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Body model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset the predictions were made on.
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions file.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Maximum group sizes to sweep [full scale: 1,2,3,4,5; desk: 1,2,4].
    #[arg(long, value_delimiter = ',')]
    pub group_size: Option<Vec<usize>>,
    /// Shape combinations to compare [default: pc,mean,single].
    #[arg(long, value_delimiter = ',', value_parser = parse_combination)]
    pub combine: Option<Vec<Combination>>,
    /// Random seed for group assignment [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for tables, per-sample CSVs and plots.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    /// Body model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Predictions file.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Prediction index to export.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Monte-Carlo meshes [full scale: 100; desk: 100].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat every predicted variance as zero.
    #[arg(long)]
    pub zero_variance: bool,
    /// Output PLY mesh with an `uncertainty_cm` vertex property.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_corrupt(s: &str) -> Result<CorruptMode, String> {
    match s {
        "off" => Ok(CorruptMode::Off),
        "on" => Ok(CorruptMode::On),
        "both" => Ok(CorruptMode::Both),
        _ => Err(format!("expected off, on or both, got {s:?}")),
    }
}

fn parse_combination(s: &str) -> Result<Combination, String> {
    s.parse().map_err(|e: probfuse::Error| e.to_string())
}
