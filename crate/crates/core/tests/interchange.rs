//! Files consumed by other tools: chunk binaries, the JSON-lines manifest and the
//! weights map. Decoding here is done by hand from byte offsets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pcbalance::io::{read_chunk, read_manifest, ManifestEntry};
use pcbalance::pipeline::run::{MANIFEST_FILE, WEIGHTS_FILE};
use pcbalance::pipeline::synth::write_xyzl;
use pcbalance::pipeline::{generate_synthetic, run, PipelineConfig, SynthSpec};
use pcbalance::weighting::ClassWeights;
use pcbalance::Split;

struct Decoded {
    version: u16,
    k: u16,
    cell: [i32; 2],
    grid: f32,
    xyz: Vec<[f32; 3]>,
    labels: Vec<u32>,
}

fn decode(bytes: &[u8]) -> Decoded {
    assert_eq!(&bytes[0..4], b"PCBC");
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let count = u32_at(8) as usize;
    assert_eq!(bytes.len(), 24 + 16 * count);
    let mut xyz = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for r in 0..count {
        let at = 24 + 16 * r;
        xyz.push([
            f32::from_bits(u32_at(at)),
            f32::from_bits(u32_at(at + 4)),
            f32::from_bits(u32_at(at + 8)),
        ]);
        labels.push(u32_at(at + 12));
    }
    Decoded {
        version: u16_at(4),
        k: u16_at(6),
        cell: [u32_at(12) as i32, u32_at(16) as i32],
        grid: f32::from_bits(u32_at(20)),
        xyz,
        labels,
    }
}

fn build(dir: &Path) -> PipelineConfig {
    let mut paths = Vec::new();
    for (name, seed) in [("alpha", 1), ("beta", 2)] {
        let mut spec = SynthSpec::new(vec![0.55, 0.3, 0.1, 0.05], 60_000, seed);
        spec.objects_per_class = 8;
        let path = dir.join(format!("{name}.xyzl"));
        write_xyzl(&generate_synthetic(&spec).unwrap(), &path).unwrap();
        paths.push(path);
    }
    let config = PipelineConfig {
        inputs: paths,
        output_dir: dir.join("out"),
        points_per_chunk: 1024,
        seed: 5,
        ..PipelineConfig::default()
    };
    run(&config).unwrap();
    config
}

#[test]
fn chunk_files_decode_by_offset() {
    let dir = tempfile::tempdir().unwrap();
    let config = build(dir.path());
    let out = &config.output_dir;
    let entries = read_manifest(&out.join(MANIFEST_FILE)).unwrap();
    let mut written = 0;
    for e in &entries {
        let ManifestEntry::Written { meta, cell, point_count, file } = e else {
            continue;
        };
        written += 1;
        let raw = decode(&fs::read(out.join(file)).unwrap());
        assert_eq!(raw.version, 1);
        assert_eq!(raw.k, 4);
        assert_eq!(raw.cell, *cell);
        assert_eq!(raw.grid, 10.0);
        assert_eq!(raw.labels.len(), *point_count);
        assert_eq!(*point_count, 1024);
        assert!(raw.labels.iter().all(|&l| l < 4));

        // library reader agrees bit for bit once the cell origin is removed again
        let chunk = read_chunk(&out.join(file)).unwrap();
        assert_eq!(&chunk.meta, meta);
        let origin = [cell[0] as f64 * raw.grid as f64, cell[1] as f64 * raw.grid as f64];
        for (p, (xyz, &l)) in chunk.points.points().iter().zip(raw.xyz.iter().zip(&raw.labels)) {
            assert_eq!(((p.x - origin[0]) as f32).to_bits(), xyz[0].to_bits());
            assert_eq!(((p.y - origin[1]) as f32).to_bits(), xyz[1].to_bits());
            assert_eq!((p.z as f32).to_bits(), xyz[2].to_bits());
            assert_eq!(p.label, l);
        }
        if meta.augmentation_index == 0 {
            for xyz in &raw.xyz {
                assert!((0.0..=10.0).contains(&xyz[0]) && (0.0..=10.0).contains(&xyz[1]), "{xyz:?}");
            }
        }
    }
    assert!(written > 0);
}

#[test]
fn manifest_lines_are_plain_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = build(dir.path());
    let text = fs::read_to_string(config.output_dir.join(MANIFEST_FILE)).unwrap();
    let mut per_split: BTreeMap<String, usize> = BTreeMap::new();
    let mut originals = BTreeMap::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        match v["status"].as_str().unwrap() {
            "written" => {
                for key in [
                    "chunk_id",
                    "source",
                    "original_count",
                    "voxel_size",
                    "uniqueness",
                    "augmentation_count",
                    "augmentation_index",
                    "split",
                    "seed",
                    "file",
                    "point_count",
                    "cell",
                ] {
                    assert!(v.get(key).is_some(), "missing {key} in {line}");
                }
                let split = v["split"].as_str().unwrap().to_string();
                assert!(["train", "test", "validation"].contains(&split.as_str()));
                *per_split.entry(split.clone()).or_default() += 1;
                if v["augmentation_index"] == 0 {
                    originals.insert(v["chunk_id"].as_str().unwrap().to_string(), split);
                } else {
                    let id = v["chunk_id"].as_str().unwrap();
                    let base = &id[..id.rfind("_a").unwrap()];
                    assert_eq!(originals[base], split, "copy {id} left its split");
                }
            }
            "discarded" => assert!(v["reason"].is_string()),
            other => panic!("unknown status {other}"),
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config.output_dir.join("summary.json")).unwrap()).unwrap();
    for (split, n) in per_split {
        assert_eq!(summary["split_chunks"][&split].as_u64().unwrap() as usize, n);
    }
}

#[test]
fn weights_json_is_an_ordered_class_map() {
    let dir = tempfile::tempdir().unwrap();
    let config = build(dir.path());
    let text = fs::read_to_string(config.output_dir.join(WEIGHTS_FILE)).unwrap();
    let v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = v.keys().map(String::as_str).collect();
    assert_eq!(keys, ["0", "1", "2", "3"]);
    let w: Vec<f64> = v.values().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(w[0], 0.25);
    assert_eq!(w[3], 1.0);
    let parsed = ClassWeights::from_json(&text).unwrap();
    assert_eq!(parsed.as_slice(), &w[..]);
    assert!(Split::ALL.len() == 3);
}
