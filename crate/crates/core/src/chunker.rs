//! Planar grid partitioning and per-chunk normalization to a fixed point count.
//!
//! A chunk with more than `n` points is first voxel-downsampled with the coarsest
//! voxel edge that still leaves at least `n` points, then sub-sampled with
//! probability proportional to its class weight. A chunk with at least `n / 2`
//! points is padded by duplication. Anything smaller is discarded.

use std::cmp::Ordering;

use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::types::{Chunk, ChunkMeta, LabeledCloud, LabeledPoint};
use crate::weighting::ClassWeights;

pub const DEFAULT_GRID_SIZE: f64 = 10.0;
pub const DEFAULT_POINTS_PER_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cell_size: f64,
    /// Grid anchor; `None` uses the cloud's minimum (x, y) corner.
    pub origin: Option<[f64; 2]>,
}

impl GridSpec {
    pub fn new(cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::invalid(format!("grid size must be positive, got {cell_size}")));
        }
        Ok(Self {
            cell_size,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: [f64; 2]) -> Self {
        self.origin = Some(origin);
        self
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cell_size: DEFAULT_GRID_SIZE,
            origin: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelSpec {
    pub v_init: f64,
    pub increment: f64,
}

impl VoxelSpec {
    pub fn new(v_init: f64, increment: f64) -> Result<Self> {
        if !(v_init > 0.0 && v_init.is_finite()) || !(increment > 0.0 && increment.is_finite()) {
            return Err(Error::invalid(format!(
                "voxel sizes must be positive, got init {v_init} increment {increment}"
            )));
        }
        Ok(Self { v_init, increment })
    }

    /// 1 cm initial edge, for dense indoor scans.
    pub fn indoor() -> Self {
        Self {
            v_init: 0.01,
            increment: 0.01,
        }
    }

    /// 5 cm initial edge, for terrestrial outdoor scans.
    pub fn outdoor() -> Self {
        Self {
            v_init: 0.05,
            increment: 0.05,
        }
    }

    /// Edge length at ladder step `i` (step 0 is `v_init`).
    pub fn step(&self, i: usize) -> f64 {
        self.v_init + i as f64 * self.increment
    }
}

impl Default for VoxelSpec {
    fn default() -> Self {
        Self::outdoor()
    }
}

fn cell_coord(v: f64, g: f64) -> i32 {
    let mut c = (v / g).floor();
    // keep the half-open footprint exact under rounding of v / g
    if v < c * g {
        c -= 1.0;
    } else if v >= (c + 1.0) * g {
        c += 1.0;
    }
    c as i32
}

pub fn chunk_id(source: &str, cell: [i32; 2]) -> String {
    format!("{source}_{}_{}", cell[0], cell[1])
}

/// Assigns every point to the grid cell containing it. Cells are returned in
/// (x, y) index order; points keep their input order within a cell.
///
/// Output coordinates are translated into the grid frame.
pub fn grid_partition(
    cloud: &LabeledCloud,
    grid: &GridSpec,
    source: &str,
    seed: u64,
) -> Result<Vec<Chunk>> {
    let g = grid.cell_size;
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::invalid(format!("grid size must be positive, got {g}")));
    }
    let origin = match grid.origin {
        Some(o) => o,
        None => match cloud.bounds() {
            Some((lo, _)) => [lo[0], lo[1]],
            None => return Ok(Vec::new()),
        },
    };

    let mut cells: FxHashMap<[i32; 2], Vec<LabeledPoint>> = FxHashMap::default();
    for p in cloud.points() {
        let mut q = *p;
        q.x -= origin[0];
        q.y -= origin[1];
        let key = [cell_coord(q.x, g), cell_coord(q.y, g)];
        cells.entry(key).or_default().push(q);
    }

    let mut keys: Vec<[i32; 2]> = cells.keys().copied().collect();
    keys.sort_unstable();
    let k = cloud.class_count();
    Ok(keys
        .into_iter()
        .map(|cell| {
            let points = cells.remove(&cell).unwrap();
            let mut meta = ChunkMeta::new(chunk_id(source, cell), source, seed);
            meta.original_count = points.len();
            meta.grid_origin = origin;
            Chunk {
                cell,
                grid_size: g,
                points: LabeledCloud::from_trusted(points, k),
                meta,
            }
        })
        .collect())
}

#[inline]
fn voxel_key(p: &LabeledPoint, v: f64) -> [i64; 3] {
    [
        (p.x / v).floor() as i64,
        (p.y / v).floor() as i64,
        (p.z / v).floor() as i64,
    ]
}

/// Number of occupied voxels at edge `v`.
pub fn voxel_count(points: &[LabeledPoint], v: f64) -> usize {
    let mut seen: FxHashSet<[i64; 3]> = FxHashSet::default();
    seen.reserve(points.len() / 2);
    for p in points {
        seen.insert(voxel_key(p, v));
    }
    seen.len()
}

/// Picks the winning label of one voxel: most votes, then higher class weight,
/// then lower class id.
fn vote(votes: &[(u32, u32)], weights: Option<&ClassWeights>) -> u32 {
    let weight = |l: u32| weights.and_then(|w| w.get(l)).unwrap_or(0.0);
    votes
        .iter()
        .copied()
        .max_by(|&(la, ca), &(lb, cb)| {
            ca.cmp(&cb)
                .then_with(|| weight(la).total_cmp(&weight(lb)))
                .then_with(|| lb.cmp(&la))
        })
        .map(|(l, _)| l)
        .expect("voxel has at least one point")
}

/// Cube center of voxel `idx` along one planar axis. A voxel crossing the cell
/// edge `[lo, hi)` is cut to the cell first, so the point stays in its cell and
/// in its voxel.
fn voxel_center(idx: i64, v: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = (idx as f64 * v, (idx + 1) as f64 * v);
    if a >= lo && b <= hi {
        return (idx as f64 + 0.5) * v;
    }
    let (a, b) = (a.max(lo), b.min(hi));
    if a >= b {
        return (idx as f64 + 0.5) * v;
    }
    let mid = 0.5 * (a + b);
    if mid < hi {
        mid
    } else {
        a
    }
}

/// Replaces the points of each occupied voxel with one point at the voxel's cube
/// center. Voxels are emitted in order of their first point.
pub fn voxel_downsample(chunk: &Chunk, v: f64, weights: Option<&ClassWeights>) -> Result<Chunk> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("voxel size must be positive, got {v}")));
    }
    let points = chunk.points.points();
    let mut slot_of: FxHashMap<[i64; 3], u32> = FxHashMap::default();
    let mut keys: Vec<[i64; 3]> = Vec::new();
    let mut point_slot = Vec::with_capacity(points.len());
    for p in points {
        let key = voxel_key(p, v);
        let slot = *slot_of.entry(key).or_insert_with(|| {
            keys.push(key);
            (keys.len() - 1) as u32
        });
        point_slot.push(slot);
    }

    // (slot, label) runs give per-voxel label tallies
    let mut pairs: Vec<(u32, u32)> = point_slot
        .iter()
        .zip(points)
        .map(|(&s, p)| (s, p.label))
        .collect();
    pairs.sort_unstable();

    let mut labels = vec![0u32; keys.len()];
    let mut votes: Vec<(u32, u32)> = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let slot = pairs[i].0;
        votes.clear();
        while i < pairs.len() && pairs[i].0 == slot {
            let label = pairs[i].1;
            let start = i;
            while i < pairs.len() && pairs[i] == (slot, label) {
                i += 1;
            }
            votes.push((label, (i - start) as u32));
        }
        labels[slot as usize] = vote(&votes, weights);
    }

    let origin = chunk.cell_origin();
    let g = chunk.grid_size;
    let out = keys
        .iter()
        .zip(labels)
        .map(|(key, label)| {
            LabeledPoint::new(
                voxel_center(key[0], v, origin[0], origin[0] + g),
                voxel_center(key[1], v, origin[1], origin[1] + g),
                (key[2] as f64 + 0.5) * v,
                label,
            )
        })
        .collect();
    Ok(chunk.with_points(out))
}

/// Steps up the voxel ladder on the original chunk until the downsampled count
/// drops below `n` and keeps the step whose count is closest to `n` from above.
///
/// Returns the chunk unchanged (voxel size 0) if it already has at most `n`
/// points or if the first ladder step undershoots.
pub fn adaptive_downsample(
    chunk: &Chunk,
    n: usize,
    voxels: &VoxelSpec,
    weights: Option<&ClassWeights>,
) -> Result<Chunk> {
    if n == 0 {
        return Err(Error::invalid("points per chunk must be positive"));
    }
    let points = chunk.points.points();
    if points.len() <= n {
        let mut out = chunk.clone();
        out.meta.voxel_size = 0.0;
        return Ok(out);
    }

    // past this edge every axis index is -1 or 0 and the count never changes
    let reach = points
        .iter()
        .flat_map(|p| p.xyz())
        .fold(0.0f64, |m, c| m.max(c.abs()));

    let mut best: Option<(f64, usize)> = None;
    let mut step = 0;
    loop {
        let v = voxels.step(step);
        let count = voxel_count(points, v);
        if count < n {
            break;
        }
        if best.map_or(true, |(_, c)| count < c) {
            best = Some((v, count));
        }
        if count == n || v > reach {
            break;
        }
        step += 1;
    }

    match best {
        None => {
            let mut out = chunk.clone();
            out.meta.voxel_size = 0.0;
            Ok(out)
        }
        Some((v, _)) => {
            let mut out = voxel_downsample(chunk, v, weights)?;
            out.meta.voxel_size = v;
            Ok(out)
        }
    }
}

/// Draws exactly `n` points without replacement, each point's selection weight
/// being its class weight. Survivors keep their input order.
///
/// Uses exponential keys: point `i` gets `ln(U_i) / w_i` and the `n` largest keys
/// win, which matches sequential proportional draws without replacement.
pub fn weighted_subsample<R: Rng + ?Sized>(
    chunk: &Chunk,
    n: usize,
    weights: &ClassWeights,
    rng: &mut R,
) -> Result<Chunk> {
    let points = chunk.points.points();
    if points.len() < n {
        return Err(Error::TooFewPoints {
            count: points.len(),
            required: n,
        });
    }
    if points.len() == n {
        return Ok(chunk.clone());
    }

    // (zero-weight flag, key, index); zero weights only fill leftover slots
    let mut keyed: Vec<(bool, f64, u32)> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let w = weights.try_get(p.label)?;
        let u: f64 = loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                break u;
            }
        };
        let entry = if w > 0.0 {
            (true, u.ln() / w, i as u32)
        } else {
            (false, u.ln(), i as u32)
        };
        keyed.push(entry);
    }
    let desc = |a: &(bool, f64, u32), b: &(bool, f64, u32)| -> Ordering {
        b.0.cmp(&a.0)
            .then_with(|| b.1.total_cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
    };
    if n > 0 {
        keyed.select_nth_unstable_by(n - 1, desc);
    }
    let mut keep: Vec<u32> = keyed[..n].iter().map(|e| e.2).collect();
    keep.sort_unstable();
    Ok(chunk.with_points(keep.into_iter().map(|i| points[i as usize]).collect()))
}

/// Appends uniformly chosen exact duplicates until the chunk has `n` points.
pub fn pad_by_duplication<R: Rng + ?Sized>(chunk: &Chunk, n: usize, rng: &mut R) -> Result<Chunk> {
    let count = chunk.len();
    if count > n {
        return Err(Error::invalid(format!("chunk already has {count} > {n} points")));
    }
    if 2 * count < n || count == 0 {
        return Err(Error::TooFewPoints {
            count,
            required: n.div_ceil(2),
        });
    }
    let src = chunk.points.points();
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(src);
    for _ in count..n {
        out.push(src[rng.gen_range(0..count)]);
    }
    Ok(chunk.with_points(out))
}

/// Point bookkeeping for one normalized chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NormalizeStats {
    pub voxel_merged: usize,
    pub subsampled: usize,
    pub duplicated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Normalized {
    Kept { chunk: Chunk, stats: NormalizeStats },
    Discarded { reason: String },
}

impl Normalized {
    pub fn kept(self) -> Option<Chunk> {
        match self {
            Normalized::Kept { chunk, .. } => Some(chunk),
            Normalized::Discarded { .. } => None,
        }
    }
}

/// Brings a chunk to exactly `n` points or discards it.
pub fn normalize_chunk<R: Rng + ?Sized>(
    chunk: &Chunk,
    n: usize,
    voxels: &VoxelSpec,
    weights: &ClassWeights,
    rng: &mut R,
) -> Result<Normalized> {
    if n == 0 {
        return Err(Error::invalid("points per chunk must be positive"));
    }
    let count = chunk.len();
    let mut stats = NormalizeStats::default();
    let mut out = if 2 * count < n {
        return Ok(Normalized::Discarded {
            reason: format!("{count} points is below half of {n}"),
        });
    } else if count < n {
        stats.duplicated = n - count;
        pad_by_duplication(chunk, n, rng)?
    } else if count == n {
        chunk.clone()
    } else {
        let reduced = adaptive_downsample(chunk, n, voxels, Some(weights))?;
        stats.voxel_merged = count - reduced.len();
        stats.subsampled = reduced.len() - n;
        weighted_subsample(&reduced, n, weights, rng)?
    };
    out.meta.original_count = count;
    debug_assert_eq!(out.len(), n);
    Ok(Normalized::Kept { chunk: out, stats })
}
