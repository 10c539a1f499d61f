//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.
//!
//! Every reference value here comes from an oracle written independently of the
//! library code: plain loops, std collections and closed-form arithmetic.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pcbalance::augment::{apply_rotation, augmentation_count, random_rotation, AugmentParams};
use pcbalance::chunker::{
    adaptive_downsample, grid_partition, normalize_chunk, GridSpec, VoxelSpec,
};
use pcbalance::io::parse_xyzl;
use pcbalance::metrics::{confusion, report, ConfusionMatrix};
use pcbalance::pipeline::report::{imbalance_ratio, normalized_entropy};
use pcbalance::pipeline::synth::write_xyzl;
use pcbalance::pipeline::{generate_synthetic, run, PipelineConfig, SynthSpec};
use pcbalance::weighting::{compute_weights, histogram, ClassHistogram};
use pcbalance::{Chunk, ChunkMeta, Execution, LabeledCloud, LabeledPoint, RngStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WEIGHT_TOL: f64 = 1e-12;
const ROTATION_TOL: f64 = 1e-9;
const METRIC_TOL: f64 = 1e-12;
const COUNT_TABLE_BUDGET: Duration = Duration::from_millis(1);
const ADAPTIVE_BUDGET: Duration = Duration::from_secs(30);
const IMBALANCE_BUDGET: Duration = Duration::from_secs(120);
const MIN_ENTROPY_GAIN: f64 = 0.10;
const MIN_THROUGHPUT: f64 = 1.0e6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("augmentation count table", count_table),
        ("weight endpoints", weight_endpoints),
        ("rotation validity", rotation_validity),
        ("adaptive downsampling oracle", adaptive_oracle),
        ("metrics oracle", metrics_oracle),
        ("imbalance reduction", imbalance_reduction),
        ("determinism", determinism),
        ("throughput", throughput),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let out = check();
        let secs = t0.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag}  {name:<30} {:>8.2}s  {}", secs, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn count_table() -> Outcome {
    let table = [
        (0.25, 1),
        (0.375, 1),
        (0.5, 2),
        (0.625, 3),
        (0.75, 5),
        (0.875, 8),
        (1.0, 13),
    ];
    let t0 = Instant::now();
    let got: Vec<u32> = table.iter().map(|&(u, _)| augmentation_count(u).unwrap()).collect();
    let elapsed = t0.elapsed();
    let want: Vec<u32> = table.iter().map(|&(_, a)| a).collect();
    outcome(
        got == want && elapsed < COUNT_TABLE_BUDGET,
        format!("got {got:?}, want {want:?}, {:?}", elapsed),
    )
}

/// Linear map of each count onto `[t_max, t_min]`, written out directly.
fn weight_oracle(counts: &[u64], t_min: f64, t_max: f64) -> Vec<f64> {
    let mut hi = 0u64;
    let mut lo = u64::MAX;
    for &c in counts {
        if c > 0 {
            hi = hi.max(c);
            lo = lo.min(c);
        }
    }
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                t_max
            } else if hi == lo {
                (t_min + t_max) / 2.0
            } else {
                t_min + (t_max - t_min) * (hi - c) as f64 / (hi - lo) as f64
            }
        })
        .collect()
}

fn weight_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut endpoint_misses = 0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=40);
        let mut seen = HashSet::new();
        let mut counts = Vec::with_capacity(k);
        while counts.len() < k {
            let c = rng.gen_range(1..=10_000_000u64);
            if seen.insert(c) {
                counts.push(c);
            }
        }
        let w = compute_weights(&ClassHistogram::from_counts(counts.clone()), 0.25, 1.0).unwrap();
        let want = weight_oracle(&counts, 0.25, 1.0);
        for (a, b) in w.as_slice().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        let imax = (0..k).max_by_key(|&i| counts[i]).unwrap();
        let imin = (0..k).min_by_key(|&i| counts[i]).unwrap();
        if (w.as_slice()[imax] - 0.25).abs() > WEIGHT_TOL || (w.as_slice()[imin] - 1.0).abs() > WEIGHT_TOL {
            endpoint_misses += 1;
        }
    }
    outcome(
        worst <= WEIGHT_TOL && endpoint_misses == 0,
        format!("1000 histograms, max |w - oracle| = {worst:.2e}, endpoint misses = {endpoint_misses}"),
    )
}

fn random_chunk(rng: &mut ChaCha8Rng, n: usize, extent: f64, k: u32) -> Chunk {
    let points = (0..n)
        .map(|_| {
            LabeledPoint::new(
                rng.gen_range(0.0..extent),
                rng.gen_range(0.0..extent),
                rng.gen_range(0.0..extent / 2.0),
                rng.gen_range(0..k),
            )
        })
        .collect();
    Chunk {
        cell: [0, 0],
        grid_size: extent,
        points: LabeledCloud::new(points, k as usize).unwrap(),
        meta: ChunkMeta::new("acc_0_0", "acc", 0),
    }
}

fn dist(a: &LabeledPoint, b: &LabeledPoint) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

fn rotation_validity() -> Outcome {
    let params = AugmentParams::default();
    let mut rng = RngStream::new(5, "acceptance", "rotation").rng();
    let mut ortho: f64 = 0.0;
    let mut det: f64 = 0.0;
    let mut rotations = Vec::new();
    for i in 0..100_000 {
        let r = random_rotation(&mut rng, &params);
        let m = r.matrix();
        // ||M^T M - I||_inf as the maximum absolute row sum
        let mut row_max: f64 = 0.0;
        for a in 0..3 {
            let mut row = 0.0;
            for b in 0..3 {
                let dot: f64 = (0..3).map(|j| m[(j, a)] * m[(j, b)]).sum();
                row += (dot - if a == b { 1.0 } else { 0.0 }).abs();
            }
            row_max = row_max.max(row);
        }
        ortho = ortho.max(row_max);
        let d = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
        det = det.max((d - 1.0).abs());
        if i % 1000 == 0 {
            rotations.push(r);
        }
    }

    let mut crng = ChaCha8Rng::seed_from_u64(6);
    let chunk = random_chunk(&mut crng, 300, 10.0, 3);
    let mut drift: f64 = 0.0;
    for r in &rotations {
        let out = apply_rotation(&chunk, r).unwrap();
        let (a, b) = (chunk.points.points(), out.points.points());
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                drift = drift.max((dist(&a[i], &a[j]) - dist(&b[i], &b[j])).abs());
            }
        }
    }
    outcome(
        ortho <= ROTATION_TOL && det <= ROTATION_TOL && drift <= ROTATION_TOL,
        format!(
            "1e5 rotations, max orthonormality error {ortho:.2e}, max |det-1| {det:.2e}, \
             max distance drift {drift:.2e} over {} rotations",
            rotations.len()
        ),
    )
}

/// Scans the voxel ladder with a std hash set and returns the smallest count
/// that stays at or above `n` before the first undershoot, or the input size
/// if no step qualifies.
fn ladder_oracle(points: &[LabeledPoint], n: usize, voxels: &VoxelSpec) -> usize {
    if points.len() <= n {
        return points.len();
    }
    let extent = points
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()).max(p.z.abs()))
        .fold(0.0, f64::max);
    let mut best: Option<usize> = None;
    for i in 0.. {
        let v = voxels.v_init + i as f64 * voxels.increment;
        let cells: HashSet<(i64, i64, i64)> = points
            .iter()
            .map(|p| {
                (
                    (p.x / v).floor() as i64,
                    (p.y / v).floor() as i64,
                    (p.z / v).floor() as i64,
                )
            })
            .collect();
        let count = cells.len();
        if count < n {
            break;
        }
        best = Some(best.map_or(count, |b: usize| b.min(count)));
        // a voxel wider than every coordinate maps each axis to -1 or 0, so
        // the count cannot change on later steps
        if count == n || v > extent {
            break;
        }
    }
    best.unwrap_or(points.len())
}

fn adaptive_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut chunks = Vec::with_capacity(200);
    for _ in 0..200 {
        let size = (10f64.powf(rng.gen_range(3.0..5.0)) as usize).min(100_000);
        let n = rng.gen_range(size / 10..size).max(1);
        let extent = rng.gen_range(2.0..10.0);
        let voxels = if rng.gen_bool(0.5) {
            VoxelSpec::outdoor()
        } else {
            VoxelSpec::indoor()
        };
        chunks.push((random_chunk(&mut rng, size, extent, 4), n, voxels));
    }

    let mut elapsed = Duration::ZERO;
    let mut mismatches = 0;
    let mut fallbacks = 0;
    for (chunk, n, voxels) in &chunks {
        let t0 = Instant::now();
        let out = adaptive_downsample(chunk, *n, voxels, None).unwrap();
        elapsed += t0.elapsed();
        let want = ladder_oracle(chunk.points.points(), *n, voxels);
        if want == chunk.len() {
            fallbacks += 1;
        }
        if out.len() != want {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0 && elapsed < ADAPTIVE_BUDGET,
        format!(
            "200 chunks, {mismatches} mismatches, {fallbacks} unreduced, library time {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

struct BruteMetrics {
    accuracy: f64,
    precision: Vec<f64>,
    recall: Vec<f64>,
    f1: Vec<f64>,
    iou: Vec<f64>,
    macro_p: f64,
    macro_r: f64,
    macro_f1: f64,
    miou: f64,
}

/// Per-point tallies for each class, with zero denominators giving 0 and the
/// macro averages taken over classes seen in either truth or prediction.
fn brute_metrics(truth: &[u32], pred: &[u32], k: usize) -> BruteMetrics {
    let mut m = BruteMetrics {
        accuracy: 0.0,
        precision: vec![0.0; k],
        recall: vec![0.0; k],
        f1: vec![0.0; k],
        iou: vec![0.0; k],
        macro_p: 0.0,
        macro_r: 0.0,
        macro_f1: 0.0,
        miou: 0.0,
    };
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    m.accuracy = correct as f64 / truth.len() as f64;
    let mut seen = 0;
    for c in 0..k as u32 {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let i = c as usize;
        m.precision[i] = div(tp, tp + fp);
        m.recall[i] = div(tp, tp + fn_);
        let (p, r) = (m.precision[i], m.recall[i]);
        m.f1[i] = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        m.iou[i] = div(tp, tp + fp + fn_);
        if tp + fp + fn_ > 0 {
            seen += 1;
            m.macro_p += m.precision[i];
            m.macro_r += m.recall[i];
            m.macro_f1 += m.f1[i];
            m.miou += m.iou[i];
        }
    }
    let s = seen as f64;
    m.macro_p /= s;
    m.macro_r /= s;
    m.macro_f1 /= s;
    m.miou /= s;
    m
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=12);
        let len = rng.gen_range(1..=3000);
        // skewed draws so some classes go missing from truth or prediction
        let draw = |rng: &mut ChaCha8Rng| {
            let u: f64 = rng.gen();
            ((u * u * k as f64) as u32).min(k as u32 - 1)
        };
        let truth: Vec<u32> = (0..len).map(|_| draw(&mut rng)).collect();
        let pred: Vec<u32> = truth
            .iter()
            .map(|&t| if rng.gen_bool(0.6) { t } else { draw(&mut rng) })
            .collect();
        let got = report(&confusion(&truth, &pred, k).unwrap()).unwrap();
        let want = brute_metrics(&truth, &pred, k);
        let mut diffs = vec![
            got.accuracy - want.accuracy,
            got.macro_precision - want.macro_p,
            got.macro_recall - want.macro_r,
            got.macro_f1 - want.macro_f1,
            got.mean_iou - want.miou,
        ];
        for (c, pc) in got.per_class.iter().enumerate() {
            diffs.extend([
                pc.precision - want.precision[c],
                pc.recall - want.recall[c],
                pc.f1 - want.f1[c],
                pc.iou - want.iou[c],
            ]);
        }
        worst = diffs.iter().fold(worst, |m, d| m.max(d.abs()));
    }

    let hand = report(&ConfusionMatrix::from_rows(&[vec![1, 1], vec![0, 2]]).unwrap()).unwrap();
    let hand_ok = (hand.accuracy - 0.75).abs() <= METRIC_TOL
        && (hand.macro_f1 - 11.0 / 15.0).abs() <= METRIC_TOL
        && (hand.mean_iou - 7.0 / 12.0).abs() <= METRIC_TOL;
    outcome(
        worst <= METRIC_TOL && hand_ok,
        format!(
            "1000 pairs, max deviation {worst:.2e}; hand case acc {:.5} macro F1 {:.5} mIoU {:.5}",
            hand.accuracy, hand.macro_f1, hand.mean_iou
        ),
    )
}

fn synth_file(dir: &Path, name: &str, fractions: Vec<f64>, total: usize, footprint: f64, seed: u64) -> PathBuf {
    let mut spec = SynthSpec::new(fractions, total, seed);
    spec.footprint = [footprint, footprint];
    spec.objects_per_class = 12;
    let cloud = generate_synthetic(&spec).unwrap();
    let path = dir.join(format!("{name}.xyzl"));
    write_xyzl(&cloud, &path).unwrap();
    path
}

fn imbalance_reduction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    // 40 m square at about 625 points per square meter, 12 instances per object class
    let input = synth_file(dir.path(), "scene", vec![0.60, 0.25, 0.10, 0.04, 0.01], 1_000_000, 40.0, 41);
    let config = PipelineConfig {
        inputs: vec![input],
        output_dir: dir.path().join("out"),
        execution: Execution::Sequential,
        threads: 1,
        seed: 41,
        ..PipelineConfig::default()
    };
    let t0 = Instant::now();
    let out = match run(&config) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let elapsed = t0.elapsed();

    // recount from the written chunk files rather than trusting the report
    let mut after = vec![0u64; 5];
    for chunk in pcbalance::pipeline::run::load_written_chunks(&config.output_dir).unwrap() {
        for p in chunk.points.points() {
            after[p.label as usize] += 1;
        }
    }
    let before = out.report.before_counts.clone();
    let (ir_before, ir_after) = (imbalance_ratio(&before), imbalance_ratio(&after));
    let (h_before, h_after) = (normalized_entropy(&before), normalized_entropy(&after));
    let gain = h_after / h_before - 1.0;
    outcome(
        ir_after < ir_before && gain >= MIN_ENTROPY_GAIN && elapsed < IMBALANCE_BUDGET && after == out.report.after_counts,
        format!(
            "imbalance {ir_before:.2} -> {ir_after:.2}, entropy {h_before:.4} -> {h_after:.4} \
             ({:+.1}%), counts {before:?} -> {after:?}",
            100.0 * gain
        ),
    )
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let inputs = vec![
        synth_file(dir.path(), "a", vec![0.7, 0.2, 0.08, 0.02], 120_000, 40.0, 1),
        synth_file(dir.path(), "b", vec![0.5, 0.3, 0.15, 0.05], 80_000, 30.0, 2),
    ];
    let config = |out: &str, execution, threads| PipelineConfig {
        inputs: inputs.clone(),
        output_dir: dir.path().join(out),
        points_per_chunk: 2048,
        seed: 77,
        execution,
        threads,
        ..PipelineConfig::default()
    };
    let runs = [
        config("first", Execution::Parallel, 4),
        config("second", Execution::Parallel, 4),
        config("sequential", Execution::Sequential, 1),
    ];
    let mut trees = Vec::new();
    for c in &runs {
        if let Err(e) = run(c) {
            return outcome(false, format!("pipeline failed: {e}"));
        }
        trees.push(tree_bytes(&c.output_dir));
    }
    let files = trees[0].len();
    let bytes: usize = trees[0].values().map(Vec::len).sum();
    outcome(
        trees[0] == trees[1] && trees[0] == trees[2],
        format!(
            "{files} files / {bytes} bytes; repeat identical: {}, sequential identical: {}",
            trees[0] == trees[1],
            trees[0] == trees[2]
        ),
    )
}

fn throughput() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = synth_file(dir.path(), "tp", vec![0.55, 0.25, 0.12, 0.06, 0.02], 1_000_000, 60.0, 9);
    // warm the page cache so the timing covers parsing rather than the disk
    let _ = fs::read(&path).unwrap();

    let t0 = Instant::now();
    let parsed = parse_xyzl(&path).unwrap();
    let weights = compute_weights(&histogram(&parsed.cloud), 0.25, 1.0).unwrap();
    let cells = grid_partition(&parsed.cloud, &GridSpec::default(), "tp", 9).unwrap();
    let voxels = VoxelSpec::default();
    let mut kept = 0;
    for cell in &cells {
        let mut rng = RngStream::new(9, &cell.meta.chunk_id, "normalize").rng();
        if normalize_chunk(cell, 8192, &voxels, &weights, &mut rng).unwrap().kept().is_some() {
            kept += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let rate = parsed.rows as f64 / secs;
    outcome(
        rate >= MIN_THROUGHPUT,
        format!(
            "{} rows in {secs:.3}s on one thread = {:.2}M points/s, {kept}/{} cells kept",
            parsed.rows,
            rate / 1e6,
            cells.len()
        ),
    )
}
