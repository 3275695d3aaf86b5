//! Datasets: IDX image files and the two-moons generator.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    Full,
}

/// Labeled samples, row-major `n × d`.
///
/// Reads of the sample matrix go through [`Dataset::samples`], which counts
/// them, so a run can prove a split was never touched. Clones share the
/// counter.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    x: Vec<f64>,
    pub d: usize,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Inclusive box every coordinate lies in.
    pub bounds: (f64, f64),
    reads: Arc<AtomicUsize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        x: Vec<f64>,
        d: usize,
        labels: Vec<usize>,
        classes: usize,
        bounds: (f64, f64),
    ) -> Result<Self> {
        if d == 0 || x.len() != d * labels.len() {
            return Err(Error::Domain(format!("{} values for {} labels of dimension {d}", x.len(), labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label: l, classes });
        }
        if let Some(v) = x.iter().find(|v| !(bounds.0..=bounds.1).contains(*v)) {
            return Err(Error::Domain(format!("sample value {v} outside [{}, {}]", bounds.0, bounds.1)));
        }
        Ok(Self {
            name: name.into(),
            split,
            x,
            d,
            labels,
            classes,
            bounds,
            reads: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The sample matrix. Every call is logged.
    pub fn samples(&self) -> &[f64] {
        self.reads.fetch_add(1, Ordering::SeqCst);
        &self.x
    }

    /// Number of [`Dataset::samples`] calls so far.
    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }

    /// Rows `idx` as a new split with its own access counter.
    pub fn select(&self, idx: &[usize], split: Split) -> Result<Self> {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::Index { index: i, len: self.len() });
            }
            x.extend_from_slice(&self.x[i * self.d..(i + 1) * self.d]);
            labels.push(self.labels[i]);
        }
        Self::new(self.name.clone(), split, x, self.d, labels, self.classes, self.bounds)
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset,
            reason: format!("truncated while reading {what}"),
        })
}

/// Parses an IDX image file: magic, count, rows, cols, then `u8` pixels.
/// Returns `(pixels / 255, count, rows · cols)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    let d = rows * cols;
    let need = n * d;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("truncated pixel data: {need} bytes declared, {} present", body.len()),
        });
    }
    if body.len() > need {
        return Err(Error::Format {
            offset: 16 + need,
            reason: format!("{} trailing bytes after pixel data", body.len() - need),
        });
    }
    Ok((body.iter().map(|&b| b as f64 / 255.0).collect(), n, d))
}

/// Parses an IDX label file: magic, count, then `u8` labels.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format {
            offset: 8 + body.len().min(n),
            reason: format!("{n} labels declared, {} bytes present", body.len()),
        });
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads a pair of IDX files. Labels must be below 10.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (x, n, d) = parse_idx_images(&std::fs::read(images)?)?;
    let y = parse_idx_labels(&std::fs::read(labels)?)?;
    if y.len() != n {
        return Err(Error::Format {
            offset: 4,
            reason: format!("{n} images but {} labels", y.len()),
        });
    }
    let classes = 10;
    if let Some((i, &l)) = y.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Format {
            offset: 8 + i,
            reason: format!("label {l} is not a digit"),
        });
    }
    let name = images.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(name, Split::Full, x, d, y, classes, (0.0, 1.0))
}

/// Raw moon coordinates span `[-1, 2] × [-0.5, 1]`; this affine map sends
/// `[-1.5, 2.5] × [-1, 1.5]` onto the unit square. Noisy points beyond it
/// are clamped.
pub fn moons_to_unit(p: [f64; 2]) -> [f64; 2] {
    [((p[0] + 1.5) / 4.0).clamp(0.0, 1.0), ((p[1] + 1.0) / 2.5).clamp(0.0, 1.0)]
}

/// Two interleaved half circles, `n/2` per class, in `[0, 1]²`.
///
/// Class 0 is `(cos t, sin t)`, class 1 is `(1 − cos t, 0.5 − sin t)`, with
/// `t ~ U[0, π]` and isotropic Gaussian noise, then [`moons_to_unit`]. Rows
/// are shuffled.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::Precondition(format!("two-moons needs a positive even n, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::Precondition("noise must be >= 0".into()));
    }
    let mut rng = crate::seeded_rng(seed);
    let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut rows: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let t = rng.random_range(0.0..=PI);
        let (s, c) = t.sin_cos();
        let mut p = if label == 0 { [c, s] } else { [1.0 - c, 0.5 - s] };
        if noise > 0.0 {
            p[0] += gauss.sample(&mut rng);
            p[1] += gauss.sample(&mut rng);
        }
        rows.push((moons_to_unit(p), label));
    }
    rows.shuffle(&mut rng);
    let x = rows.iter().flat_map(|(p, _)| *p).collect();
    let labels = rows.iter().map(|&(_, l)| l).collect();
    Dataset::new("two-moons", Split::Full, x, 2, labels, 2, (0.0, 1.0))
}
