//! End-to-end orchestration: ingest, weight, chunk, normalize, split, augment, write.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentParams};
use crate::chunker::{self, NormalizeStats, Normalized};
use crate::error::{Error, Result};
use crate::io::{self, ManifestEntry, ParsedCloud};
use crate::par::{self, Execution};
use crate::rng::RngStream;
use crate::types::{Chunk, LabeledCloud, Split};
use crate::weighting::{self, ClassHistogram, ClassWeights};

use super::config::{AugmentSplits, InputFormat, PipelineConfig, SplitBy};
use super::report::DistributionReport;
use super::split::assign_split;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const REPORT_FILE: &str = "report.json";
pub const DISTRIBUTION_FILE: &str = "distribution.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHUNK_DIR: &str = "chunks";

/// One parsed input file.
#[derive(Debug, Clone)]
pub struct Source {
    pub name: String,
    pub path: PathBuf,
    pub parsed: ParsedCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub error: String,
}

/// Parsed inputs aligned to one class count.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub sources: Vec<Source>,
    pub skipped: Vec<SkippedFile>,
    pub class_count: usize,
}

impl Inputs {
    pub fn histogram(&self) -> ClassHistogram {
        let mut h = self
            .sources
            .iter()
            .map(|s| weighting::histogram(&s.parsed.cloud))
            .fold(ClassHistogram::zeros(self.class_count), |acc, h| acc.merge(&h));
        h.widen(self.class_count);
        h
    }
}

pub fn source_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

fn parse_one(path: &Path, format: InputFormat) -> Result<ParsedCloud> {
    match format {
        InputFormat::Xyzl => io::parse_xyzl(path),
        InputFormat::Semantic3d => io::parse_semantic3d(path, &path.with_extension("labels")),
    }
}

/// Parses every input. Files that fail to parse are reported and skipped.
pub fn load_inputs(
    paths: &[PathBuf],
    format: InputFormat,
    class_count: Option<usize>,
    mode: Execution,
) -> Result<Inputs> {
    let mut names = BTreeMap::new();
    for p in paths {
        if let Some(prev) = names.insert(source_name(p), p) {
            return Err(Error::invalid(format!(
                "inputs {} and {} share the source name {:?}",
                prev.display(),
                p.display(),
                source_name(p)
            )));
        }
    }

    let parsed = par::map(mode, paths.to_vec(), |path| {
        let r = parse_one(&path, format);
        (path, r)
    });

    let mut sources = Vec::new();
    let mut skipped = Vec::new();
    for (path, r) in parsed {
        match r {
            Ok(parsed) => match class_count {
                Some(k) if parsed.cloud.class_count() > k => skipped.push(SkippedFile {
                    error: format!(
                        "label {} exceeds the declared class count {k}",
                        parsed.cloud.class_count() - 1
                    ),
                    path,
                }),
                _ => sources.push(Source {
                    name: source_name(&path),
                    path,
                    parsed,
                }),
            },
            Err(e) => skipped.push(SkippedFile {
                path,
                error: e.to_string(),
            }),
        }
    }

    let k = class_count.unwrap_or_else(|| {
        sources.iter().map(|s| s.parsed.cloud.class_count()).max().unwrap_or(0)
    });
    for s in &mut sources {
        s.parsed.cloud.widen_classes(k);
    }
    Ok(Inputs {
        sources,
        skipped,
        class_count: k,
    })
}

/// Result of normalizing one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Kept { chunk: Chunk, stats: NormalizeStats },
    Discarded { chunk: Chunk, reason: String },
}

impl CellOutcome {
    pub fn chunk(&self) -> &Chunk {
        match self {
            CellOutcome::Kept { chunk, .. } | CellOutcome::Discarded { chunk, .. } => chunk,
        }
    }
}

/// Partitions every source, normalizes each cell and assigns splits.
pub fn chunk_sources(
    sources: &[Source],
    weights: &ClassWeights,
    config: &PipelineConfig,
) -> Result<Vec<CellOutcome>> {
    let grid = config.grid()?;
    let voxels = config.voxels()?;
    let n = config.points_per_chunk;
    let seed = config.seed;
    let mode = config.execution;

    let cells: Vec<Chunk> = par::try_map(mode, sources.iter().collect(), |s: &Source| {
        chunker::grid_partition(&s.parsed.cloud, &grid, &s.name, seed)
    })?
    .into_iter()
    .flatten()
    .collect();

    par::try_map(mode, cells, |cell| {
        let split_key = match config.split_by {
            SplitBy::Chunk => cell.meta.chunk_id.as_str(),
            SplitBy::Scene => cell.meta.source.as_str(),
        };
        let split = assign_split(split_key, &config.split_fractions, seed);
        let mut rng = RngStream::new(seed, &cell.meta.chunk_id, "normalize").rng();
        Ok(match chunker::normalize_chunk(&cell, n, &voxels, weights, &mut rng)? {
            Normalized::Kept { chunk, stats } => {
                // later stages see exactly what a reader of the chunk file sees
                let mut chunk = io::quantize(&chunk);
                chunk.meta.split = split;
                CellOutcome::Kept { chunk, stats }
            }
            Normalized::Discarded { reason } => {
                let mut chunk = cell;
                chunk.meta.split = split;
                CellOutcome::Discarded { chunk, reason }
            }
        })
    })
}

/// Scores every chunk and expands eligible ones into rotated copies. The output
/// keeps each original directly followed by its copies.
pub fn augment_chunks(
    chunks: Vec<Chunk>,
    weights: &ClassWeights,
    params: &AugmentParams,
    policy: AugmentSplits,
    seed: u64,
    mode: Execution,
) -> Result<Vec<Chunk>> {
    let groups = par::try_map(mode, chunks, |chunk| {
        let eligible = policy == AugmentSplits::All || chunk.meta.split == Split::Train;
        if eligible {
            let mut rng = RngStream::new(seed, &chunk.meta.chunk_id, "augment").rng();
            augment::augment_chunk(&chunk, weights, params, &mut rng)
        } else {
            let (u, _) = augment::schedule(&chunk, weights, params)?;
            let mut chunk = chunk;
            chunk.meta.uniqueness = u;
            chunk.meta.augmentation_count = 0;
            chunk.meta.augmentation_index = 0;
            Ok(vec![chunk])
        }
    })?;
    Ok(groups.into_iter().flatten().collect())
}

pub fn chunk_file_name(chunk_id: &str) -> String {
    format!("{CHUNK_DIR}/{chunk_id}.pcbc")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes chunk files plus sidecars and returns their manifest entries in input order.
pub fn write_chunks(out_dir: &Path, chunks: &[Chunk], mode: Execution) -> Result<Vec<ManifestEntry>> {
    let chunk_dir = out_dir.join(CHUNK_DIR);
    fs::create_dir_all(&chunk_dir).map_err(|e| Error::io(&chunk_dir, e))?;
    par::try_map(mode, chunks.iter().collect(), |c: &Chunk| {
        let file = chunk_file_name(&c.meta.chunk_id);
        io::write_chunk(c, &out_dir.join(&file))?;
        Ok(ManifestEntry::Written {
            meta: c.meta.clone(),
            cell: c.cell,
            point_count: c.len(),
            file,
        })
    })
}

fn discarded_entry(chunk: &Chunk, reason: &str) -> ManifestEntry {
    ManifestEntry::Discarded {
        chunk_id: chunk.meta.chunk_id.clone(),
        source: chunk.meta.source.clone(),
        cell: chunk.cell,
        original_count: chunk.len(),
        reason: reason.to_string(),
    }
}

/// Point accounting for one run.
///
/// `input_rows = sentinel_dropped + discarded_points + kept_source_points` and
/// `kept_source_points - voxel_merged - subsampled + duplicated = original_points_written`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub input_rows: u64,
    pub sentinel_dropped: u64,
    pub discarded_points: u64,
    pub kept_source_points: u64,
    pub voxel_merged: u64,
    pub subsampled: u64,
    pub duplicated: u64,
    pub original_points_written: u64,
    pub augmented_points_written: u64,
    pub cells: usize,
    pub chunks_kept: usize,
    pub chunks_discarded: usize,
    pub augmented_copies: usize,
    /// Written chunks (originals and copies) per split.
    pub split_chunks: BTreeMap<Split, usize>,
    pub skipped_files: Vec<SkippedFile>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub weights: ClassWeights,
    pub entries: Vec<ManifestEntry>,
    pub report: DistributionReport,
    pub summary: RunSummary,
}

/// Runs the full pipeline and writes the output tree under `config.output_dir`.
pub fn run(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    par::with_threads(config.threads, || run_inner(config))
}

fn run_inner(config: &PipelineConfig) -> Result<RunOutput> {
    let mode = config.execution;
    let inputs = load_inputs(&config.inputs, config.format, config.class_count, mode)?;
    let total_points: usize = inputs.sources.iter().map(|s| s.parsed.cloud.len()).sum();
    if total_points == 0 {
        return Err(Error::NoData(match inputs.skipped.first() {
            Some(s) => format!("no labeled points could be read ({}: {})", s.path.display(), s.error),
            None => "no labeled points in the input".to_string(),
        }));
    }

    let before = inputs.histogram();
    let weights = weighting::compute_weights(&before, config.t_min, config.t_max)?;
    let outcomes = chunk_sources(&inputs.sources, &weights, config)?;

    let mut summary = RunSummary {
        input_rows: inputs.sources.iter().map(|s| s.parsed.rows as u64).sum(),
        sentinel_dropped: inputs.sources.iter().map(|s| s.parsed.dropped as u64).sum(),
        cells: outcomes.len(),
        skipped_files: inputs.skipped.clone(),
        ..RunSummary::default()
    };

    // originals in cell order; discarded cells keep their slot in the manifest
    let mut kept = Vec::new();
    let mut slots: Vec<std::result::Result<usize, (Chunk, String)>> = Vec::new();
    for outcome in outcomes {
        match outcome {
            CellOutcome::Kept { chunk, stats } => {
                summary.chunks_kept += 1;
                summary.kept_source_points += chunk.meta.original_count as u64;
                summary.voxel_merged += stats.voxel_merged as u64;
                summary.subsampled += stats.subsampled as u64;
                summary.duplicated += stats.duplicated as u64;
                summary.original_points_written += chunk.len() as u64;
                slots.push(Ok(kept.len()));
                kept.push(chunk);
            }
            CellOutcome::Discarded { chunk, reason } => {
                summary.chunks_discarded += 1;
                summary.discarded_points += chunk.len() as u64;
                slots.push(Err((chunk, reason)));
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::NoData(format!(
            "every one of {} cells was discarded; lower --points-per-chunk or enlarge --grid-size",
            summary.cells
        )));
    }

    let params = config.augment_params()?;
    let expanded = augment_chunks(kept, &weights, &params, config.augment_splits, config.seed, mode)?;

    let mut after = ClassHistogram::zeros(inputs.class_count);
    for c in &expanded {
        after = after.merge(&ClassHistogram::from_counts(c.class_counts()));
        *summary.split_chunks.entry(c.meta.split).or_default() += 1;
        if c.meta.augmentation_index > 0 {
            summary.augmented_copies += 1;
            summary.augmented_points_written += c.len() as u64;
        }
    }

    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let written = write_chunks(out_dir, &expanded, mode)?;

    // interleave discarded cells back at their original position
    let mut groups: Vec<Vec<ManifestEntry>> = Vec::new();
    let mut cursor = written.into_iter().peekable();
    for slot in slots {
        match slot {
            Ok(_) => {
                let mut group = vec![cursor.next().expect("one entry per kept chunk")];
                while let Some(next) = cursor.peek() {
                    match next.written_meta() {
                        Some(m) if m.augmentation_index > 0 => group.push(cursor.next().unwrap()),
                        _ => break,
                    }
                }
                groups.push(group);
            }
            Err((chunk, reason)) => groups.push(vec![discarded_entry(&chunk, &reason)]),
        }
    }
    let entries: Vec<ManifestEntry> = groups.into_iter().flatten().collect();

    let log_weights = weighting::compute_weights_log_heuristic(&before)?;
    let report = DistributionReport::new(&before, &after, log_weights.as_slice().to_vec());

    io::write_manifest(&out_dir.join(MANIFEST_FILE), &entries)?;
    weights.write_json(&out_dir.join(WEIGHTS_FILE))?;
    write_text(&out_dir.join(HISTOGRAM_FILE), &before.to_csv())?;
    write_text(&out_dir.join(REPORT_FILE), &serde_json::to_string_pretty(&report)?)?;
    write_text(&out_dir.join(DISTRIBUTION_FILE), &report.to_csv())?;
    write_text(&out_dir.join(SUMMARY_FILE), &serde_json::to_string_pretty(&summary)?)?;

    Ok(RunOutput {
        weights,
        entries,
        report,
        summary,
    })
}

/// Loads every written chunk listed in a manifest directory.
pub fn load_written_chunks(dir: &Path) -> Result<Vec<Chunk>> {
    let entries = io::read_manifest(&dir.join(MANIFEST_FILE))?;
    entries
        .iter()
        .filter_map(|e| match e {
            ManifestEntry::Written { file, .. } => Some(io::read_chunk(&dir.join(file))),
            ManifestEntry::Discarded { .. } => None,
        })
        .collect()
}

/// Convenience for callers holding an in-memory cloud rather than files.
pub fn single_source(name: &str, cloud: LabeledCloud) -> Source {
    let rows = cloud.len();
    Source {
        name: name.to_string(),
        path: PathBuf::from(name),
        parsed: ParsedCloud {
            cloud,
            rows,
            dropped: 0,
        },
    }
}
