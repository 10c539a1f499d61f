use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentParams, DEFAULT_EPSILON};
use crate::chunker::{GridSpec, VoxelSpec, DEFAULT_GRID_SIZE, DEFAULT_POINTS_PER_CHUNK};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::weighting::{DEFAULT_T_MAX, DEFAULT_T_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `x y z label` rows.
    #[default]
    Xyzl,
    /// `<name>.txt` point rows with a sibling `<name>.labels` file.
    Semantic3d,
}

/// Which splits receive rotated copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentSplits {
    #[default]
    Train,
    All,
}

/// Unit that split assignment hashes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitBy {
    #[default]
    Chunk,
    Scene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    /// Declared class count; inferred from the data when absent.
    pub class_count: Option<usize>,
    pub grid_size: f64,
    pub points_per_chunk: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub voxel_init: f64,
    /// Ladder step; defaults to `voxel_init`.
    pub voxel_increment: Option<f64>,
    /// Small-rotation half-range in radians.
    pub epsilon: f64,
    pub max_augmentations: Option<u32>,
    /// (train, test, validation)
    pub split_fractions: [f64; 3],
    pub augment_splits: AugmentSplits,
    pub split_by: SplitBy,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub execution: Execution,
    /// Worker threads, 0 for the rayon default.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            format: InputFormat::Xyzl,
            class_count: None,
            grid_size: DEFAULT_GRID_SIZE,
            points_per_chunk: DEFAULT_POINTS_PER_CHUNK,
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
            voxel_init: VoxelSpec::outdoor().v_init,
            voxel_increment: None,
            epsilon: DEFAULT_EPSILON,
            max_augmentations: None,
            split_fractions: [0.6, 0.2, 0.2],
            augment_splits: AugmentSplits::Train,
            split_by: SplitBy::Chunk,
            seed: 0,
            output_dir: PathBuf::from("out"),
            execution: Execution::Parallel,
            threads: 0,
        }
    }
}

pub fn validate_fractions(f: &[f64; 3]) -> Result<()> {
    if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("split fractions must be positive, got {f:?}")));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions must sum to 1, got {sum}")));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        validate_fractions(&self.split_fractions)?;
        self.grid()?;
        self.voxels()?;
        self.augment_params()?;
        if self.points_per_chunk == 0 {
            return Err(Error::invalid("points per chunk must be positive"));
        }
        if !(self.t_min < self.t_max) {
            return Err(Error::invalid("t_min must be below t_max"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid_size)
    }

    pub fn voxels(&self) -> Result<VoxelSpec> {
        VoxelSpec::new(self.voxel_init, self.voxel_increment.unwrap_or(self.voxel_init))
    }

    pub fn augment_params(&self) -> Result<AugmentParams> {
        Ok(AugmentParams::new(self.epsilon)?.with_cap(self.max_augmentations))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
