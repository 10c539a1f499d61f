//! Binary chunk interchange format.
//!
//! Little-endian layout:
//!
//! | offset | type     | field                     |
//! |--------|----------|---------------------------|
//! | 0      | [u8; 4]  | magic `PCBC`              |
//! | 4      | u16      | format version (1)        |
//! | 6      | u16      | class count               |
//! | 8      | u32      | point count               |
//! | 12     | i32 × 2  | cell index                |
//! | 20     | f32      | grid size                 |
//! | 24     | records  | `x f32, y f32, z f32, label u32` per point |
//!
//! `x` and `y` are stored relative to the cell origin so large survey offsets keep
//! full 32-bit precision. Chunk metadata lives in a JSON sidecar next to the file.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{Chunk, ChunkMeta, LabeledCloud, LabeledPoint};

pub const MAGIC: [u8; 4] = *b"PCBC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 16;

/// Decoded file contents without the sidecar metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPayload {
    pub cell: [i32; 2],
    pub grid_size: f32,
    pub points: LabeledCloud,
}

/// Cell origin computed from the f32 grid size the file stores, so decode and
/// re-encode subtract the exact same offset.
fn stored_origin(cell: [i32; 2], grid_size: f32) -> [f64; 2] {
    let g = grid_size as f64;
    [cell[0] as f64 * g, cell[1] as f64 * g]
}

pub fn encoded_len(point_count: usize) -> usize {
    HEADER_LEN + point_count * RECORD_LEN
}

pub fn encode_chunk(chunk: &Chunk) -> Result<Vec<u8>> {
    let k = u16::try_from(chunk.points.class_count())
        .map_err(|_| Error::invalid("class count does not fit the chunk format"))?;
    let count = u32::try_from(chunk.len())
        .map_err(|_| Error::invalid("point count does not fit the chunk format"))?;
    let grid = chunk.grid_size as f32;
    let origin = stored_origin(chunk.cell, grid);

    let mut buf = Vec::with_capacity(encoded_len(chunk.len()));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&k.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&chunk.cell[0].to_le_bytes());
    buf.extend_from_slice(&chunk.cell[1].to_le_bytes());
    buf.extend_from_slice(&grid.to_le_bytes());
    for p in chunk.points.points() {
        buf.extend_from_slice(&((p.x - origin[0]) as f32).to_le_bytes());
        buf.extend_from_slice(&((p.y - origin[1]) as f32).to_le_bytes());
        buf.extend_from_slice(&(p.z as f32).to_le_bytes());
        buf.extend_from_slice(&p.label.to_le_bytes());
    }
    Ok(buf)
}

/// The chunk as [`decode_chunk`] would return it after [`encode_chunk`]:
/// coordinates rounded to the stored precision, optional attributes dropped.
pub fn quantize(chunk: &Chunk) -> Chunk {
    let origin = stored_origin(chunk.cell, chunk.grid_size as f32);
    let points = chunk
        .points
        .points()
        .iter()
        .map(|p| {
            LabeledPoint::new(
                origin[0] + (p.x - origin[0]) as f32 as f64,
                origin[1] + (p.y - origin[1]) as f32 as f64,
                p.z as f32 as f64,
                p.label,
            )
        })
        .collect();
    chunk.with_points(points)
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().unwrap())
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn decode_chunk(bytes: &[u8]) -> Result<ChunkPayload> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = le_u16(bytes, 4);
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let k = le_u16(bytes, 6) as usize;
    let count = le_u32(bytes, 8) as usize;
    let cell = [le_u32(bytes, 12) as i32, le_u32(bytes, 16) as i32];
    let grid_size = le_f32(bytes, 20);

    let expected = encoded_len(count);
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }

    let origin = stored_origin(cell, grid_size);
    let mut points = Vec::with_capacity(count);
    for rec in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN) {
        let label = le_u32(rec, 12);
        if label as usize >= k {
            return Err(Error::LabelOutOfRange {
                label,
                class_count: k,
            });
        }
        points.push(LabeledPoint::new(
            origin[0] + le_f32(rec, 0) as f64,
            origin[1] + le_f32(rec, 4) as f64,
            le_f32(rec, 8) as f64,
            label,
        ));
    }
    Ok(ChunkPayload {
        cell,
        grid_size,
        points: LabeledCloud::new(points, k)?,
    })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the binary chunk and its metadata sidecar.
pub fn write_chunk(chunk: &Chunk, path: &Path) -> Result<()> {
    let bytes = encode_chunk(chunk)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_vec(&chunk.meta)?;
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

/// Reads only the binary part of a chunk file.
pub fn read_chunk_payload(path: &Path) -> Result<ChunkPayload> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_chunk(&bytes)
}

/// Reads a chunk file together with its metadata sidecar.
pub fn read_chunk(path: &Path) -> Result<Chunk> {
    let payload = read_chunk_payload(path)?;
    let side = sidecar_path(path);
    let json = fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let meta: ChunkMeta = serde_json::from_slice(&json)?;
    Ok(Chunk {
        cell: payload.cell,
        grid_size: payload.grid_size as f64,
        points: payload.points,
        meta,
    })
}
