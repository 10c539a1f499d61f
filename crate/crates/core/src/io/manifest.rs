//! Dataset-level manifest: one JSON object per line, one line per source chunk
//! or augmented copy.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ChunkMeta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ManifestEntry {
    Written {
        #[serde(flatten)]
        meta: ChunkMeta,
        cell: [i32; 2],
        point_count: usize,
        /// Chunk file path relative to the manifest's directory.
        file: String,
    },
    Discarded {
        chunk_id: String,
        source: String,
        cell: [i32; 2],
        original_count: usize,
        reason: String,
    },
}

impl ManifestEntry {
    pub fn chunk_id(&self) -> &str {
        match self {
            ManifestEntry::Written { meta, .. } => &meta.chunk_id,
            ManifestEntry::Discarded { chunk_id, .. } => chunk_id,
        }
    }

    pub fn written_meta(&self) -> Option<&ChunkMeta> {
        match self {
            ManifestEntry::Written { meta, .. } => Some(meta),
            ManifestEntry::Discarded { .. } => None,
        }
    }
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Split;

    #[test]
    fn round_trip() {
        let mut meta = ChunkMeta::new("a_0_0", "a.xyzl", u64::MAX);
        meta.uniqueness = 0.932_584_269_662_921_3;
        meta.split = Split::Test;
        meta.grid_origin = [0.1 + 0.2, -7.0];
        let entries = vec![
            ManifestEntry::Written {
                meta,
                cell: [0, -1],
                point_count: 8192,
                file: "chunks/a_0_0.pcbc".into(),
            },
            ManifestEntry::Discarded {
                chunk_id: "a_1_0".into(),
                source: "a.xyzl".into(),
                cell: [1, 0],
                original_count: 12,
                reason: "12 points below half of 8192".into(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&path, &entries).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), entries);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"status\":\"written\""));
    }
}
