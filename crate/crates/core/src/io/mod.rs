pub mod chunkfile;
pub mod manifest;
pub mod parse;

pub use chunkfile::{quantize, read_chunk, read_chunk_payload, write_chunk, ChunkPayload};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use parse::{parse_semantic3d, parse_xyzl, ParsedCloud};
