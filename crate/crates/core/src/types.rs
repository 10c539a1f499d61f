//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single labeled point. Coordinates are meters in 64-bit precision.
///
/// Intensity and color survive parsing but are not written to chunk files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub label: u32,
    pub intensity: Option<f32>,
    pub color: Option<[u8; 3]>,
}

impl LabeledPoint {
    pub fn new(x: f64, y: f64, z: f64, label: u32) -> Self {
        Self {
            x,
            y,
            z,
            label,
            intensity: None,
            color: None,
        }
    }

    #[inline]
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// An ordered point sequence whose labels all lie in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCloud {
    points: Vec<LabeledPoint>,
    class_count: usize,
}

impl LabeledCloud {
    pub fn new(points: Vec<LabeledPoint>, class_count: usize) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.label as usize >= class_count) {
            return Err(Error::LabelOutOfRange {
                label: p.label,
                class_count,
            });
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("cloud contains a non-finite coordinate"));
        }
        Ok(Self {
            points,
            class_count,
        })
    }

    /// Builds a cloud with `class_count` inferred as one past the largest label.
    pub fn with_inferred_classes(points: Vec<LabeledPoint>) -> Result<Self> {
        let k = points.iter().map(|p| p.label as usize + 1).max().unwrap_or(0);
        Self::new(points, k)
    }

    /// Caller guarantees the label invariant.
    pub(crate) fn from_trusted(points: Vec<LabeledPoint>, class_count: usize) -> Self {
        debug_assert!(points.iter().all(|p| (p.label as usize) < class_count));
        Self {
            points,
            class_count,
        }
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<LabeledPoint> {
        self.points
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Raises the declared class count, e.g. to align clouds of one dataset.
    pub fn widen_classes(&mut self, class_count: usize) {
        self.class_count = self.class_count.max(class_count);
    }

    /// Axis-aligned `(min, max)` corners, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = self.points.first()?.xyz();
        Some(self.points.iter().fold((first, first), |(mut lo, mut hi), p| {
            for (axis, v) in p.xyz().into_iter().enumerate() {
                lo[axis] = lo[axis].min(v);
                hi[axis] = hi[axis].max(v);
            }
            (lo, hi)
        }))
    }

    pub fn centroid(&self) -> Option<[f64; 3]> {
        if self.points.is_empty() {
            return None;
        }
        let mut sum = [0.0; 3];
        for p in &self.points {
            sum[0] += p.x;
            sum[1] += p.y;
            sum[2] += p.z;
        }
        let n = self.points.len() as f64;
        Some([sum[0] / n, sum[1] / n, sum[2] / n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Validation];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "validation" | "val" => Ok(Split::Validation),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// Provenance carried alongside every chunk and serialized into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkMeta {
    pub chunk_id: String,
    pub source: String,
    /// Point count of the grid cell before normalization.
    pub original_count: usize,
    /// Voxel edge used by adaptive downsampling, 0 when the raw cell was kept.
    pub voxel_size: f64,
    pub uniqueness: f64,
    /// Number of rotated copies generated from the original chunk.
    pub augmentation_count: u32,
    /// 0 for the original, `1..=augmentation_count` for rotated copies.
    pub augmentation_index: u32,
    pub split: Split,
    pub seed: u64,
    /// Absolute position of the grid frame the chunk coordinates are expressed in.
    pub grid_origin: [f64; 2],
}

impl ChunkMeta {
    pub fn new(chunk_id: impl Into<String>, source: impl Into<String>, seed: u64) -> Self {
        Self {
            chunk_id: chunk_id.into(),
            source: source.into(),
            original_count: 0,
            voxel_size: 0.0,
            uniqueness: 0.0,
            augmentation_count: 0,
            augmentation_index: 0,
            split: Split::Train,
            seed,
            grid_origin: [0.0, 0.0],
        }
    }
}

/// One planar grid cell worth of points.
///
/// Coordinates are in the grid frame: the partition origin has been subtracted, so
/// an unrotated chunk's `(x, y)` lie in `[cell * grid_size, (cell + 1) * grid_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub cell: [i32; 2],
    pub grid_size: f64,
    pub points: LabeledCloud,
    pub meta: ChunkMeta,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lower-left corner of the cell footprint in the grid frame.
    pub fn cell_origin(&self) -> [f64; 2] {
        [
            self.cell[0] as f64 * self.grid_size,
            self.cell[1] as f64 * self.grid_size,
        ]
    }

    pub(crate) fn with_points(&self, points: Vec<LabeledPoint>) -> Chunk {
        Chunk {
            cell: self.cell,
            grid_size: self.grid_size,
            points: LabeledCloud::from_trusted(points, self.points.class_count()),
            meta: self.meta.clone(),
        }
    }

    /// Per-class point counts.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.points.class_count()];
        for p in self.points.points() {
            counts[p.label as usize] += 1;
        }
        counts
    }
}
