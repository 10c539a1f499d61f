//! Class-rebalancing preprocessing for labeled 3D point cloud segmentation data.
//!
//! Raw scenes are cut into planar grid chunks, each normalized to a fixed point
//! count by adaptive voxel downsampling, class-weighted sub-sampling or
//! duplication. Chunks rich in rare classes are then replicated under random
//! rotations, with the number of copies growing as `tan^2` of a chunk's mean
//! class weight.
//!
//! ```
//! use pcbalance::weighting::{compute_weights, ClassHistogram};
//! use pcbalance::augment::augmentation_count;
//!
//! let hist = ClassHistogram::from_counts(vec![900, 90, 10]);
//! let w = compute_weights(&hist, 0.25, 1.0).unwrap();
//! assert_eq!(w.as_slice()[0], 0.25);
//! assert_eq!(augmentation_count(w.as_slice()[2]).unwrap(), 13);
//! ```

pub mod augment;
pub mod chunker;
pub mod error;
pub mod io;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod types;
pub mod weighting;

pub use error::{Error, Result};
pub use par::Execution;
pub use rng::RngStream;
pub use types::{Chunk, ChunkMeta, LabeledCloud, LabeledPoint, Split};
