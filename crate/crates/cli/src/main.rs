mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "pcbalance",
    version,
    about = "Rebalance labeled point cloud datasets into fixed-size training chunks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// Seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = one per core)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML or JSON file with pipeline settings; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for everything the command writes
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct InputArgs {
    /// Point cloud files
    pub inputs: Vec<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Number of classes; inferred from the largest label when omitted
    #[arg(long)]
    pub class_count: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Format {
    Xyzl,
    Semantic3d,
}

#[derive(Args, Debug, Clone, Default)]
pub struct WeightArgs {
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ChunkArgs {
    /// Planar cell edge in meters
    #[arg(long)]
    pub grid_size: Option<f64>,
    /// Points per output chunk
    #[arg(long)]
    pub points_per_chunk: Option<usize>,
    /// First voxel edge of the downsampling ladder
    #[arg(long)]
    pub voxel_init: Option<f64>,
    /// Ladder step, defaults to the initial voxel edge
    #[arg(long)]
    pub voxel_increment: Option<f64>,
    /// Train, test and validation fractions, e.g. 0.6,0.2,0.2
    #[arg(long, value_delimiter = ',')]
    pub split_fractions: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub split_by: Option<SplitByArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum SplitByArg {
    Chunk,
    Scene,
}

#[derive(Args, Debug, Clone, Default)]
pub struct AugmentArgs {
    /// Half-range of the small tilt angles, in degrees
    #[arg(long)]
    pub epsilon_deg: Option<f64>,
    /// Upper bound on copies per chunk
    #[arg(long)]
    pub max_augmentations: Option<u32>,
    #[arg(long, value_enum)]
    pub augment_splits: Option<AugmentSplitsArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum AugmentSplitsArg {
    Train,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print per-class counts, imbalance ratio and entropy
    Stats {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Compute class weights; writes weights.json and histogram.csv
    Weights {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Cut inputs into normalized chunks without augmentation
    Chunk {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        chunk: ChunkArgs,
    },
    /// Add rotated copies to the chunks of a previous `chunk` run
    Augment {
        /// Directory holding manifest.jsonl, weights.json and chunks/
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        augment: AugmentArgs,
    },
    /// Run every stage and write reports
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        chunk: ChunkArgs,
        #[command(flatten)]
        augment: AugmentArgs,
    },
    /// Score predictions against ground truth
    Metrics {
        /// Label file (last column per line) or manifest.jsonl
        #[arg(long)]
        truth: PathBuf,
        /// Label file (last column per line) or manifest.jsonl
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        class_count: Option<usize>,
    },
    /// Write a synthetic labeled scene as `x y z label` rows
    Synth {
        /// Class fractions summing to 1, e.g. 0.6,0.25,0.1,0.04,0.01
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        points: usize,
        /// Scene width and depth in meters
        #[arg(long, value_delimiter = ',')]
        footprint: Option<Vec<f64>>,
        #[arg(long)]
        objects_per_class: Option<usize>,
        /// Output file name inside the output directory
        #[arg(long, default_value = "synthetic.xyzl")]
        name: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let g = cli.global;
    let result = match cli.command {
        Command::Stats { input } => commands::stats(&g, &input),
        Command::Weights { input, weights } => commands::weights(&g, &input, &weights),
        Command::Chunk { input, weights, chunk } => commands::chunk(&g, &input, &weights, &chunk),
        Command::Augment { input, augment } => commands::augment(&g, &input, &augment),
        Command::Pipeline {
            input,
            weights,
            chunk,
            augment,
        } => commands::pipeline(&g, &input, &weights, &chunk, &augment),
        Command::Metrics {
            truth,
            pred,
            class_count,
        } => commands::metrics(&g, &truth, &pred, class_count),
        Command::Synth {
            fractions,
            points,
            footprint,
            objects_per_class,
            name,
        } => commands::synth(&g, fractions, points, footprint, objects_per_class, &name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
