use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use pcbalance::augment::AugmentParams;
use pcbalance::io::{self, ManifestEntry};
use pcbalance::metrics::{self, ConfusionMatrix};
use pcbalance::par;
use pcbalance::pipeline::report::{imbalance_ratio, normalized_entropy};
use pcbalance::pipeline::run::{
    self, augment_chunks, chunk_sources, load_inputs, write_chunks, CellOutcome, Inputs,
    HISTOGRAM_FILE, MANIFEST_FILE, WEIGHTS_FILE,
};
use pcbalance::pipeline::synth::write_xyzl;
use pcbalance::pipeline::{
    generate_synthetic, AugmentSplits, InputFormat, PipelineConfig, SplitBy, SynthSpec,
};
use pcbalance::weighting::{self, ClassWeights};
use pcbalance::{Chunk, Error};

use crate::{AugmentArgs, AugmentSplitsArg, ChunkArgs, Format, Global, InputArgs, SplitByArg, WeightArgs};

/// A problem with the command line or config file rather than with the data.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_data_error() { 2 } else { 1 };
        }
    }
    2
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

/// Defaults, then the config file, then explicit flags.
fn base_config(g: &Global) -> Result<PipelineConfig> {
    let mut c = match &g.config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(t) = g.threads {
        c.threads = t;
    }
    if let Some(o) = &g.output_dir {
        c.output_dir = o.clone();
    }
    Ok(c)
}

fn apply_input(c: &mut PipelineConfig, a: &InputArgs) {
    if !a.inputs.is_empty() {
        c.inputs = a.inputs.clone();
    }
    if let Some(f) = a.format {
        c.format = match f {
            Format::Xyzl => InputFormat::Xyzl,
            Format::Semantic3d => InputFormat::Semantic3d,
        };
    }
    if a.class_count.is_some() {
        c.class_count = a.class_count;
    }
}

fn apply_weights(c: &mut PipelineConfig, a: &WeightArgs) {
    if let Some(t) = a.t_min {
        c.t_min = t;
    }
    if let Some(t) = a.t_max {
        c.t_max = t;
    }
}

fn apply_chunk(c: &mut PipelineConfig, a: &ChunkArgs) -> Result<()> {
    if let Some(v) = a.grid_size {
        c.grid_size = v;
    }
    if let Some(v) = a.points_per_chunk {
        c.points_per_chunk = v;
    }
    if let Some(v) = a.voxel_init {
        c.voxel_init = v;
    }
    if a.voxel_increment.is_some() {
        c.voxel_increment = a.voxel_increment;
    }
    if let Some(f) = &a.split_fractions {
        let [train, test, val] = f[..] else {
            return Err(usage(format!("--split-fractions takes 3 values, got {}", f.len())));
        };
        c.split_fractions = [train, test, val];
    }
    if let Some(s) = a.split_by {
        c.split_by = match s {
            SplitByArg::Chunk => SplitBy::Chunk,
            SplitByArg::Scene => SplitBy::Scene,
        };
    }
    Ok(())
}

fn apply_augment(c: &mut PipelineConfig, a: &AugmentArgs) {
    if let Some(d) = a.epsilon_deg {
        c.epsilon = d.to_radians();
    }
    if a.max_augmentations.is_some() {
        c.max_augmentations = a.max_augmentations;
    }
    if let Some(s) = a.augment_splits {
        c.augment_splits = match s {
            AugmentSplitsArg::Train => AugmentSplits::Train,
            AugmentSplitsArg::All => AugmentSplits::All,
        };
    }
}

fn checked(c: PipelineConfig) -> Result<PipelineConfig> {
    c.validate()?;
    if c.inputs.is_empty() {
        return Err(usage("no input files given"));
    }
    Ok(c)
}

fn load(c: &PipelineConfig) -> Result<Inputs> {
    let inputs = load_inputs(&c.inputs, c.format, c.class_count, c.execution)?;
    for s in &inputs.skipped {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.error);
    }
    if inputs.sources.iter().all(|s| s.parsed.cloud.is_empty()) {
        return Err(Error::NoData("no labeled points could be read".into()).into());
    }
    Ok(inputs)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct Stats {
    class_count: usize,
    points: u64,
    counts: Vec<u64>,
    fractions: Vec<f64>,
    imbalance_ratio: f64,
    normalized_entropy: f64,
    files: usize,
    skipped_files: usize,
}

pub fn stats(g: &Global, input: &InputArgs) -> Result<()> {
    let mut c = base_config(g)?;
    apply_input(&mut c, input);
    let c = checked(c)?;
    par::with_threads(c.threads, || {
        let inputs = load(&c)?;
        let hist = inputs.histogram();
        let stats = Stats {
            class_count: hist.class_count(),
            points: hist.total(),
            counts: hist.counts().to_vec(),
            fractions: hist.normalized(),
            imbalance_ratio: imbalance_ratio(hist.counts()),
            normalized_entropy: normalized_entropy(hist.counts()),
            files: inputs.sources.len(),
            skipped_files: inputs.skipped.len(),
        };
        if let Some(dir) = &g.output_dir {
            create_dir(dir)?;
            write(&dir.join(HISTOGRAM_FILE), &hist.to_csv())?;
            write(&dir.join("stats.json"), &serde_json::to_string_pretty(&stats)?)?;
        }
        print_json(&stats)
    })
}

pub fn weights(g: &Global, input: &InputArgs, w: &WeightArgs) -> Result<()> {
    let mut c = base_config(g)?;
    apply_input(&mut c, input);
    apply_weights(&mut c, w);
    let c = checked(c)?;
    par::with_threads(c.threads, || {
        let inputs = load(&c)?;
        let hist = inputs.histogram();
        let weights = weighting::compute_weights(&hist, c.t_min, c.t_max)?;
        create_dir(&c.output_dir)?;
        weights.write_json(&c.output_dir.join(WEIGHTS_FILE))?;
        write(&c.output_dir.join(HISTOGRAM_FILE), &hist.to_csv())?;
        println!("{}", weights.to_json()?);
        Ok(())
    })
}

#[derive(Serialize)]
struct ChunkSummary {
    cells: usize,
    chunks_written: usize,
    chunks_discarded: usize,
    points_written: u64,
}

pub fn chunk(g: &Global, input: &InputArgs, w: &WeightArgs, a: &ChunkArgs) -> Result<()> {
    let mut c = base_config(g)?;
    apply_input(&mut c, input);
    apply_weights(&mut c, w);
    apply_chunk(&mut c, a)?;
    let c = checked(c)?;
    par::with_threads(c.threads, || {
        let inputs = load(&c)?;
        let hist = inputs.histogram();
        let weights = weighting::compute_weights(&hist, c.t_min, c.t_max)?;
        let outcomes = chunk_sources(&inputs.sources, &weights, &c)?;

        let kept: Vec<Chunk> = outcomes
            .iter()
            .filter_map(|o| match o {
                CellOutcome::Kept { chunk, .. } => Some(chunk.clone()),
                CellOutcome::Discarded { .. } => None,
            })
            .collect();
        create_dir(&c.output_dir)?;
        let mut written = write_chunks(&c.output_dir, &kept, c.execution)?.into_iter();
        let entries: Vec<ManifestEntry> = outcomes
            .iter()
            .map(|o| match o {
                CellOutcome::Kept { .. } => written.next().expect("one entry per kept chunk"),
                CellOutcome::Discarded { chunk, reason } => ManifestEntry::Discarded {
                    chunk_id: chunk.meta.chunk_id.clone(),
                    source: chunk.meta.source.clone(),
                    cell: chunk.cell,
                    original_count: chunk.len(),
                    reason: reason.clone(),
                },
            })
            .collect();
        io::write_manifest(&c.output_dir.join(MANIFEST_FILE), &entries)?;
        weights.write_json(&c.output_dir.join(WEIGHTS_FILE))?;
        write(&c.output_dir.join(HISTOGRAM_FILE), &hist.to_csv())?;

        print_json(&ChunkSummary {
            cells: outcomes.len(),
            chunks_written: kept.len(),
            chunks_discarded: outcomes.len() - kept.len(),
            points_written: kept.iter().map(|k| k.len() as u64).sum(),
        })
    })
}

#[derive(Serialize)]
struct AugmentSummary {
    originals: usize,
    copies: usize,
    per_split: BTreeMap<String, usize>,
}

pub fn augment(g: &Global, input: &Path, a: &AugmentArgs) -> Result<()> {
    let mut c = base_config(g)?;
    apply_augment(&mut c, a);
    let params: AugmentParams = c.augment_params()?;
    let weights = ClassWeights::read_json(&input.join(WEIGHTS_FILE))?;
    let entries = io::read_manifest(&input.join(MANIFEST_FILE))?;

    let mut originals = Vec::new();
    for e in &entries {
        if let ManifestEntry::Written { meta, file, .. } = e {
            if meta.augmentation_index == 0 {
                originals.push(io::read_chunk(&input.join(file))?);
            }
        }
    }
    // an explicit seed wins, otherwise reuse the one the chunks were cut with
    let seed = match (g.seed, &g.config) {
        (Some(s), _) => s,
        (None, Some(_)) => c.seed,
        (None, None) => originals.first().map_or(c.seed, |ch| ch.meta.seed),
    };

    par::with_threads(c.threads, || {
        let n = originals.len();
        let expanded = augment_chunks(originals, &weights, &params, c.augment_splits, seed, c.execution)?;
        create_dir(&c.output_dir)?;
        let mut written = write_chunks(&c.output_dir, &expanded, c.execution)?.into_iter().peekable();

        let mut out = Vec::new();
        let mut per_split: BTreeMap<String, usize> = BTreeMap::new();
        for e in &entries {
            match e {
                ManifestEntry::Written { meta, .. } if meta.augmentation_index > 0 => {}
                ManifestEntry::Written { .. } => {
                    out.push(written.next().expect("one entry per original"));
                    while written
                        .peek()
                        .and_then(|w| w.written_meta())
                        .is_some_and(|m| m.augmentation_index > 0)
                    {
                        out.push(written.next().unwrap());
                    }
                }
                ManifestEntry::Discarded { .. } => out.push(e.clone()),
            }
        }
        for m in out.iter().filter_map(|e| e.written_meta()) {
            *per_split.entry(m.split.to_string()).or_default() += 1;
        }
        io::write_manifest(&c.output_dir.join(MANIFEST_FILE), &out)?;
        weights.write_json(&c.output_dir.join(WEIGHTS_FILE))?;
        print_json(&AugmentSummary {
            originals: n,
            copies: expanded.len() - n,
            per_split,
        })
    })
}

pub fn pipeline(g: &Global, input: &InputArgs, w: &WeightArgs, ch: &ChunkArgs, a: &AugmentArgs) -> Result<()> {
    let mut c = base_config(g)?;
    apply_input(&mut c, input);
    apply_weights(&mut c, w);
    apply_chunk(&mut c, ch)?;
    apply_augment(&mut c, a);
    let c = checked(c)?;
    let out = run::run(&c)?;
    for s in &out.summary.skipped_files {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.error);
    }
    print_json(&out.summary)
}

fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// One label per non-blank line, taken from the last whitespace-separated column.
fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(tok) = line.split_whitespace().last() else { continue };
        let label = tok.parse::<u32>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("malformed label {tok:?}"),
        })?;
        out.push(label);
    }
    Ok(out)
}

/// Labels of every written chunk in a manifest, keyed by chunk id.
fn manifest_labels(path: &Path) -> Result<BTreeMap<String, Vec<u32>>> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut out = BTreeMap::new();
    for e in io::read_manifest(path)? {
        if let ManifestEntry::Written { meta, file, .. } = e {
            let chunk = io::read_chunk(&dir.join(file))?;
            out.insert(meta.chunk_id, chunk.points.points().iter().map(|p| p.label).collect());
        }
    }
    Ok(out)
}

fn paired_labels(truth: &Path, pred: &Path) -> Result<(Vec<u32>, Vec<u32>)> {
    match (is_manifest(truth), is_manifest(pred)) {
        (false, false) => {
            let (t, p) = (read_labels(truth)?, read_labels(pred)?);
            if t.len() != p.len() {
                return Err(Error::RowCountMismatch {
                    points_path: truth.to_path_buf(),
                    labels_path: pred.to_path_buf(),
                    points: t.len(),
                    labels: p.len(),
                }
                .into());
            }
            Ok((t, p))
        }
        (true, true) => {
            let (t, p) = (manifest_labels(truth)?, manifest_labels(pred)?);
            let (mut tv, mut pv) = (Vec::new(), Vec::new());
            for (id, labels) in &t {
                let Some(other) = p.get(id) else {
                    return Err(Error::Manifest(format!("chunk {id} has no prediction")).into());
                };
                if other.len() != labels.len() {
                    return Err(Error::Manifest(format!(
                        "chunk {id}: {} truth points but {} predictions",
                        labels.len(),
                        other.len()
                    ))
                    .into());
                }
                tv.extend_from_slice(labels);
                pv.extend_from_slice(other);
            }
            Ok((tv, pv))
        }
        _ => Err(usage("--truth and --pred must both be label files or both be manifests")),
    }
}

pub fn metrics(g: &Global, truth: &Path, pred: &Path, class_count: Option<usize>) -> Result<()> {
    let c = base_config(g)?;
    let (t, p) = paired_labels(truth, pred)?;
    if t.is_empty() {
        return Err(Error::NoData("no labels to compare".into()).into());
    }
    let observed = t.iter().chain(&p).max().map_or(0, |&m| m as usize + 1);
    let k = class_count.or(c.class_count).unwrap_or(observed);
    let cm: ConfusionMatrix = metrics::confusion(&t, &p, k)?;
    let report = metrics::report(&cm)?;
    create_dir(&c.output_dir)?;
    write(&c.output_dir.join("metrics.json"), &serde_json::to_string_pretty(&report)?)?;
    write(&c.output_dir.join("confusion.csv"), &cm.to_csv())?;
    write(&c.output_dir.join("confusion_normalized.csv"), &cm.to_csv_normalized())?;
    println!(
        "accuracy {:.5}  macro F1 {:.5}  mean IoU {:.5}  ({} points, {} classes)",
        report.accuracy, report.macro_f1, report.mean_iou, report.total, report.k
    );
    Ok(())
}

pub fn synth(
    g: &Global,
    fractions: Vec<f64>,
    points: usize,
    footprint: Option<Vec<f64>>,
    objects_per_class: Option<usize>,
    name: &str,
) -> Result<()> {
    let c = base_config(g)?;
    let mut spec = SynthSpec::new(fractions, points, c.seed);
    if let Some(f) = footprint {
        let [w, d] = f[..] else {
            return Err(usage(format!("--footprint takes 2 values, got {}", f.len())));
        };
        spec.footprint = [w, d];
    }
    if let Some(o) = objects_per_class {
        spec.objects_per_class = o;
    }
    let cloud = generate_synthetic(&spec)?;
    create_dir(&c.output_dir)?;
    let path = c.output_dir.join(name);
    write_xyzl(&cloud, &path)?;
    println!("{}", path.display());
    Ok(())
}
