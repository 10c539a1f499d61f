//! Chunk uniqueness scoring, augmentation scheduling and rotation augmentation.

use std::f64::consts::{FRAC_PI_4, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{Chunk, LabeledPoint};
use crate::weighting::ClassWeights;

/// Default half-range of the small per-axis rotation: 5 degrees.
pub const DEFAULT_EPSILON: f64 = 5.0 * std::f64::consts::PI / 180.0;

/// Tolerance for the orthonormality and determinant checks.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Half-range in radians of each small rotation angle about x, y and z.
    pub epsilon: f64,
    /// Optional cap on the number of rotated copies per chunk.
    pub max_augmentations: Option<u32>,
}

impl AugmentParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..FRAC_PI_4).contains(&epsilon) {
            return Err(Error::invalid(format!(
                "small-rotation half-range must lie in [0, pi/4), got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            max_augmentations: None,
        })
    }

    pub fn with_cap(mut self, cap: Option<u32>) -> Self {
        self.max_augmentations = cap;
        self
    }

    pub fn from_degrees(deg: f64) -> Result<Self> {
        Self::new(deg.to_radians())
    }
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_augmentations: None,
        }
    }
}

/// A proper 3D rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Checks orthonormality and `det = 1` within [`ROTATION_TOLERANCE`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let r = Self(m);
        let ortho = r.orthonormality_error();
        let det = r.det();
        if !(ortho <= ROTATION_TOLERANCE) || !((det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(Error::NotARotation { ortho, det });
        }
        Ok(r)
    }

    pub fn about_x(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Heading turn by `2 pi r` about z composed with the small rotation
    /// `Rx(alpha) Ry(beta) Rz(gamma)`.
    pub fn permutation(r: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        let small = Self::about_x(alpha).0 * Self::about_y(beta).0 * Self::about_z(gamma).0;
        Self(Self::about_z(TAU * r).0 * small)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    /// `max |(M^T M - I)_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0 * Vector3::new(v[0], v[1], v[2]);
        [r.x, r.y, r.z]
    }
}

/// Class-weight average over the chunk's points: `sum_c (count_c / n) * w_c`.
pub fn uniqueness(chunk: &Chunk, weights: &ClassWeights) -> Result<f64> {
    let n = chunk.len();
    if n == 0 {
        return Err(Error::invalid("uniqueness of an empty chunk"));
    }
    let mut acc = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (label, &count) in chunk.class_counts().iter().enumerate() {
        if count == 0 {
            continue;
        }
        let w = weights.try_get(label as u32)?;
        acc += count as f64 * w;
        lo = lo.min(w);
        hi = hi.max(w);
    }
    // a convex combination stays inside the range of its terms
    Ok((acc / n as f64).clamp(lo, hi))
}

/// Number of extra rotated copies for uniqueness `u`: `ceil(5 tan(u)^2)`.
pub fn augmentation_count(u: f64) -> Result<u32> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("uniqueness must lie in [0, 1], got {u}")));
    }
    let t = u.tan();
    Ok((10.0 * t * t / 2.0).ceil() as u32)
}

/// Draws one augmentation rotation: `r` uniform in (0, 1), small angles uniform
/// in `[-epsilon, epsilon]`.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, params: &AugmentParams) -> RotationMatrix {
    let r = loop {
        let r: f64 = rng.gen();
        if r > 0.0 {
            break r;
        }
    };
    let e = params.epsilon;
    let mut angle = || if e > 0.0 { rng.gen_range(-e..=e) } else { 0.0 };
    let (a, b, c) = (angle(), angle(), angle());
    RotationMatrix::permutation(r, a, b, c)
}

/// Rotates the chunk about its centroid and bumps the augmentation index.
pub fn apply_rotation(chunk: &Chunk, rotation: &RotationMatrix) -> Result<Chunk> {
    let rotation = RotationMatrix::new(*rotation.matrix())?;
    let Some(c) = chunk.points.centroid() else {
        let mut out = chunk.clone();
        out.meta.augmentation_index += 1;
        return Ok(out);
    };
    let points = chunk
        .points
        .points()
        .iter()
        .map(|p| {
            let [x, y, z] = rotation.rotate([p.x - c[0], p.y - c[1], p.z - c[2]]);
            LabeledPoint {
                x: x + c[0],
                y: y + c[1],
                z: z + c[2],
                ..*p
            }
        })
        .collect();
    let mut out = chunk.with_points(points);
    out.meta.augmentation_index += 1;
    Ok(out)
}

pub fn augmented_id(chunk_id: &str, index: u32) -> String {
    format!("{chunk_id}_a{index}")
}

/// Uniqueness and (capped) copy count for a normalized chunk.
pub fn schedule(chunk: &Chunk, weights: &ClassWeights, params: &AugmentParams) -> Result<(f64, u32)> {
    let u = uniqueness(chunk, weights)?;
    let mut count = augmentation_count(u.clamp(0.0, 1.0))?;
    if let Some(cap) = params.max_augmentations {
        count = count.min(cap);
    }
    Ok((u, count))
}

/// The original chunk followed by its rotated copies, all carrying the chunk's
/// uniqueness and copy count. Copies are drawn in order from `rng`.
pub fn augment_chunk<R: Rng + ?Sized>(
    chunk: &Chunk,
    weights: &ClassWeights,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<Vec<Chunk>> {
    let (u, count) = schedule(chunk, weights, params)?;
    let mut original = chunk.clone();
    original.meta.uniqueness = u;
    original.meta.augmentation_count = count;
    original.meta.augmentation_index = 0;

    let mut out = Vec::with_capacity(count as usize + 1);
    for i in 1..=count {
        let rotation = random_rotation(rng, params);
        let mut copy = apply_rotation(&original, &rotation)?;
        copy.meta.augmentation_index = i;
        copy.meta.chunk_id = augmented_id(&original.meta.chunk_id, i);
        out.push(copy);
    }
    out.insert(0, original);
    Ok(out)
}
