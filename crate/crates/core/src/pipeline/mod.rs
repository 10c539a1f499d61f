pub mod config;
pub mod report;
pub mod run;
pub mod split;
pub mod synth;

pub use config::{AugmentSplits, InputFormat, PipelineConfig, SplitBy};
pub use report::DistributionReport;
pub use run::{run, RunOutput, RunSummary};
pub use split::assign_split;
pub use synth::{generate_synthetic, Primitive, SynthSpec};
