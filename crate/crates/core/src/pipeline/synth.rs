//! Deterministic synthetic labeled scenes built from simple primitives.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::types::{LabeledCloud, LabeledPoint};

/// Surface geometry used for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    /// Ground covering the whole footprint.
    Plane,
    /// Building-like boxes: four walls and a roof.
    Box,
    /// Thin vertical cylinders.
    Pole,
    /// Spherical clusters, e.g. tree crowns.
    Blob,
}

impl Primitive {
    /// Class 0 is ground, the rest cycle through box, blob and pole.
    pub fn default_for(class: usize) -> Primitive {
        match class {
            0 => Primitive::Plane,
            c => [Primitive::Box, Primitive::Blob, Primitive::Pole][(c - 1) % 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub fractions: Vec<f64>,
    pub total_points: usize,
    /// Width and depth in meters; the scene spans `[0, w] x [0, d]`.
    pub footprint: [f64; 2],
    /// Per-class geometry; [`Primitive::default_for`] where absent.
    pub primitives: Option<Vec<Primitive>>,
    /// Object instances per non-plane class.
    pub objects_per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(fractions: Vec<f64>, total_points: usize, seed: u64) -> Self {
        Self {
            fractions,
            total_points,
            footprint: [30.0, 30.0],
            primitives: None,
            objects_per_class: 4,
            seed,
        }
    }

    fn primitive(&self, class: usize) -> Primitive {
        self.primitives
            .as_ref()
            .and_then(|p| p.get(class).copied())
            .unwrap_or_else(|| Primitive::default_for(class))
    }
}

/// Splits `total` into integer parts proportional to `fractions` using the
/// largest-remainder rule (ties to the lower index).
pub fn allocate(fractions: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut parts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

struct Scene<'a> {
    rng: StreamRng,
    spec: &'a SynthSpec,
}

impl Scene<'_> {
    fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        let [w, d] = self.spec.footprint;
        (x.clamp(0.0, w), y.clamp(0.0, d))
    }

    fn center(&mut self, margin: f64) -> (f64, f64) {
        let [w, d] = self.spec.footprint;
        let x = if w > 2.0 * margin { self.rng.gen_range(margin..w - margin) } else { w / 2.0 };
        let y = if d > 2.0 * margin { self.rng.gen_range(margin..d - margin) } else { d / 2.0 };
        (x, y)
    }

    fn plane(&mut self, count: usize, label: u32, out: &mut Vec<LabeledPoint>) {
        let [w, d] = self.spec.footprint;
        for _ in 0..count {
            let x = self.rng.gen_range(0.0..=w);
            let y = self.rng.gen_range(0.0..=d);
            let z = self.rng.gen_range(-0.02..0.02);
            out.push(LabeledPoint::new(x, y, z, label));
        }
    }

    fn boxes(&mut self, count: usize, label: u32, out: &mut Vec<LabeledPoint>) {
        for part in self.objects(count) {
            let sx: f64 = self.rng.gen_range(3.0..8.0);
            let sy: f64 = self.rng.gen_range(3.0..8.0);
            let h: f64 = self.rng.gen_range(3.0..10.0);
            let (cx, cy) = self.center(sx.max(sy) / 2.0);
            // face areas: 2 walls along x, 2 along y, roof
            let areas = [sx * h, sx * h, sy * h, sy * h, sx * sy];
            let total: f64 = areas.iter().sum();
            for _ in 0..part {
                let mut pick = self.rng.gen_range(0.0..total);
                let face = areas.iter().position(|&a| {
                    pick -= a;
                    pick < 0.0
                });
                let (u, v): (f64, f64) = (self.rng.gen(), self.rng.gen());
                let (x, y, z) = match face.unwrap_or(4) {
                    0 => (cx + (u - 0.5) * sx, cy - sy / 2.0, v * h),
                    1 => (cx + (u - 0.5) * sx, cy + sy / 2.0, v * h),
                    2 => (cx - sx / 2.0, cy + (u - 0.5) * sy, v * h),
                    3 => (cx + sx / 2.0, cy + (u - 0.5) * sy, v * h),
                    _ => (cx + (u - 0.5) * sx, cy + (v - 0.5) * sy, h),
                };
                let (x, y) = self.clamp(x, y);
                out.push(LabeledPoint::new(x, y, z, label));
            }
        }
    }

    fn poles(&mut self, count: usize, label: u32, out: &mut Vec<LabeledPoint>) {
        for part in self.objects(count) {
            let r = self.rng.gen_range(0.1..0.25);
            let h = self.rng.gen_range(4.0..8.0);
            let (cx, cy) = self.center(r);
            for _ in 0..part {
                let t = self.rng.gen_range(0.0..TAU);
                let z = self.rng.gen_range(0.0..h);
                let (x, y) = self.clamp(cx + r * t.cos(), cy + r * t.sin());
                out.push(LabeledPoint::new(x, y, z, label));
            }
        }
    }

    fn blobs(&mut self, count: usize, label: u32, out: &mut Vec<LabeledPoint>) {
        for part in self.objects(count) {
            let r = self.rng.gen_range(1.0..3.0);
            let (cx, cy) = self.center(r);
            let cz = r + self.rng.gen_range(0.0..2.0);
            for _ in 0..part {
                // uniform direction from the z-cylinder projection
                let zc: f64 = self.rng.gen_range(-1.0..=1.0);
                let t = self.rng.gen_range(0.0..TAU);
                let s = (1.0 - zc * zc).sqrt();
                let (x, y) = self.clamp(cx + r * s * t.cos(), cy + r * s * t.sin());
                out.push(LabeledPoint::new(x, y, cz + r * zc, label));
            }
        }
    }

    fn objects(&self, count: usize) -> Vec<usize> {
        let k = self.spec.objects_per_class.max(1);
        allocate(&vec![1.0 / k as f64; k], count)
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<LabeledCloud> {
    if spec.fractions.is_empty()
        || spec.fractions.iter().any(|&f| !(f >= 0.0) || !f.is_finite())
        || (spec.fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(format!(
            "class fractions must be non-negative and sum to 1, got {:?}",
            spec.fractions
        )));
    }
    if spec.footprint.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::invalid("footprint must be positive"));
    }

    let counts = allocate(&spec.fractions, spec.total_points);
    let mut scene = Scene {
        rng: RngStream::new(spec.seed, "synthetic", "geometry").rng(),
        spec,
    };
    let mut points = Vec::with_capacity(spec.total_points);
    for (class, &count) in counts.iter().enumerate() {
        let label = class as u32;
        match spec.primitive(class) {
            Primitive::Plane => scene.plane(count, label, &mut points),
            Primitive::Box => scene.boxes(count, label, &mut points),
            Primitive::Pole => scene.poles(count, label, &mut points),
            Primitive::Blob => scene.blobs(count, label, &mut points),
        }
    }
    LabeledCloud::new(points, spec.fractions.len())
}

/// Writes `x y z label` rows with millimeter precision.
pub fn write_xyzl(cloud: &LabeledCloud, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    for p in cloud.points() {
        writeln!(w, "{:.3} {:.3} {:.3} {}", p.x, p.y, p.z, p.label).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
