//! Dataset providers: seeded Gaussian-blob generators (balanced and
//! long-tailed), OOD pairing, and the IDX binary format (parse and
//! write, byte level; file IO lives in the CLI crate).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{seeded, standard_normal, SeededRng};
use crate::tensor::Tensor2;
use crate::CoreError;

/// A labelled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor2,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Generator name + seed, or file digest, for the run manifest.
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols
    }

    /// Deterministic shuffle + split into (first `train_n`, rest) parts.
    pub fn split(&self, train_n: usize, seed: u64) -> Result<(Dataset, Dataset), CoreError> {
        if train_n == 0 || train_n >= self.len() {
            return Err(CoreError::Input(format!(
                "split point {train_n} outside 1..{}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = seeded(seed);
        shuffle(&mut idx, &mut rng);
        let take = |ids: &[usize], tag: &str| {
            let mut f = Tensor2::zeros(ids.len(), self.dim());
            let mut labels = Vec::with_capacity(ids.len());
            for (r, &i) in ids.iter().enumerate() {
                f.row_mut(r).copy_from_slice(self.features.row(i));
                labels.push(self.labels[i]);
            }
            Dataset {
                features: f,
                labels,
                classes: self.classes,
                provenance: format!("{}/{tag}", self.provenance),
            }
        };
        Ok((take(&idx[..train_n], "train"), take(&idx[train_n..], "val")))
    }

    /// First `n` rows, unshuffled.
    pub fn head(&self, n: usize) -> Result<Dataset, CoreError> {
        if n == 0 || n > self.len() {
            return Err(CoreError::Input(format!("head {n} outside 1..={}", self.len())));
        }
        let mut f = Tensor2::zeros(n, self.dim());
        f.data.copy_from_slice(&self.features.data[..n * self.dim()]);
        Ok(Dataset {
            features: f,
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            provenance: format!("{}/head{n}", self.provenance),
        })
    }

    /// Features + label as delimited text for external inspection.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.len() {
            for v in self.features.row(r) {
                s.push_str(&format!("{:.17e},", v));
            }
            s.push_str(&format!("{}\n", self.labels[r]));
        }
        s
    }
}

/// Fisher-Yates with the crate RNG.
pub fn shuffle<T>(items: &mut [T], rng: &mut SeededRng) {
    use rand::Rng;
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Class centers evenly spaced on a circle of the given radius in the
/// first two feature dimensions (zero elsewhere).
pub fn blob_centers(classes: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|k| {
            let theta = 2.0 * core::f64::consts::PI * k as f64 / classes as f64;
            let mut c = vec![0.0; dim];
            c[0] = radius * libm::cos(theta);
            if dim > 1 {
                c[1] = radius * libm::sin(theta);
            }
            c
        })
        .collect()
}

/// Radius at which adjacent centers sit `6 * noise` apart (well separated).
pub fn default_radius(classes: usize, noise: f64) -> f64 {
    let chord = 2.0 * libm::sin(core::f64::consts::PI / classes as f64);
    if chord == 0.0 {
        0.0
    } else {
        6.0 * noise / chord
    }
}

/// Isotropic Gaussian blobs with per-class sample counts.
pub fn gen_blobs_counts(
    counts: &[usize],
    dim: usize,
    noise: f64,
    radius: f64,
    seed: u64,
) -> Result<Dataset, CoreError> {
    if counts.is_empty() || dim == 0 || noise < 0.0 {
        return Err(CoreError::Input("gen_blobs: empty counts, zero dim or negative noise".to_string()));
    }
    let classes = counts.len();
    let centers = blob_centers(classes, dim, radius);
    let n: usize = counts.iter().sum();
    let mut rng = seeded(seed);
    let mut features = Tensor2::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (k, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for (f, &c) in features.row_mut(row).iter_mut().zip(&centers[k]) {
                *f = c + noise * standard_normal(&mut rng);
            }
            labels.push(k);
            row += 1;
        }
    }
    // interleave classes deterministically so minibatches are mixed
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, &mut rng);
    let mut f = Tensor2::zeros(n, dim);
    let mut l = Vec::with_capacity(n);
    for (r, &i) in idx.iter().enumerate() {
        f.row_mut(r).copy_from_slice(features.row(i));
        l.push(labels[i]);
    }
    Ok(Dataset {
        features: f,
        labels: l,
        classes,
        provenance: format!("blobs(k={classes},dim={dim},noise={noise},radius={radius},seed={seed})"),
    })
}

/// Balanced Gaussian blobs at well-separated default centers.
pub fn gen_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, CoreError> {
    gen_blobs_with_radius(classes, per_class, dim, noise, default_radius(classes, noise), seed)
}

/// Balanced blobs with an explicit center radius (controls class overlap).
pub fn gen_blobs_with_radius(
    classes: usize,
    per_class: usize,
    dim: usize,
    noise: f64,
    radius: f64,
    seed: u64,
) -> Result<Dataset, CoreError> {
    if classes == 0 || per_class == 0 {
        return Err(CoreError::Input("gen_blobs: need classes >= 1 and per_class >= 1".to_string()));
    }
    gen_blobs_counts(&vec![per_class; classes], dim, noise, radius, seed)
}

/// Bayes-optimal accuracy of the two-class blob problem with centers a
/// distance `delta` apart and isotropic noise `sigma`: Phi(delta / 2 sigma).
pub fn bayes_accuracy_two_class(delta: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let z = delta / (2.0 * sigma);
    0.5 * (1.0 + libm::erf(z / core::f64::consts::SQRT_2))
}

/// Long-tail specification: head-class count, class count, imbalance ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTailSpec {
    pub head_count: usize,
    pub classes: usize,
    pub imbalance_ratio: f64,
}

/// Exponentially decaying per-class counts:
/// `n_k = floor(head_count * ratio^(-k / (classes - 1)))`.
pub fn longtail_counts(spec: &LongTailSpec) -> Result<Vec<usize>, CoreError> {
    if spec.classes < 2 || spec.head_count < spec.classes || spec.imbalance_ratio < 1.0 {
        return Err(CoreError::Input(format!(
            "invalid long-tail spec: head {}, classes {}, ratio {}",
            spec.head_count, spec.classes, spec.imbalance_ratio
        )));
    }
    let km1 = (spec.classes - 1) as f64;
    Ok((0..spec.classes)
        .map(|k| {
            let factor = libm::pow(spec.imbalance_ratio, -(k as f64) / km1);
            libm::floor(spec.head_count as f64 * factor) as usize
        })
        .collect())
}

/// In-distribution / OOD evaluation pair. OOD samples carry no labels;
/// they feed only the rejection-rate report.
#[derive(Debug, Clone)]
pub struct OodPair {
    pub in_dist: Dataset,
    pub ood_features: Tensor2,
}

pub fn make_ood_split(in_dist: &Dataset, ood: &Dataset) -> Result<OodPair, CoreError> {
    if in_dist.dim() != ood.dim() {
        return Err(CoreError::Input(format!(
            "feature dim mismatch: {} vs {}",
            in_dist.dim(),
            ood.dim()
        )));
    }
    if ood.is_empty() {
        return Err(CoreError::UndefinedMetric("empty OOD set".to_string()));
    }
    Ok(OodPair { in_dist: in_dist.clone(), ood_features: ood.features.clone() })
}

// ---------------------------------------------------------------------------
// IDX binary format (big-endian).
// ---------------------------------------------------------------------------

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], at: usize) -> Result<u32, CoreError> {
    let chunk: [u8; 4] = bytes
        .get(at..at + 4)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| CoreError::Format(format!("truncated IDX header at byte {at}")))?;
    Ok(u32::from_be_bytes(chunk))
}

/// Parses an IDX image file: magic 0x803, dims (n, rows, cols), unsigned
/// bytes scaled to [0, 1].
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>), CoreError> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(CoreError::Format(format!(
            "bad image magic {magic:#010x}, want {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    let want = 16 + n * rows * cols;
    if bytes.len() < want {
        return Err(CoreError::Format(format!(
            "image payload truncated: {} bytes, need {want}",
            bytes.len()
        )));
    }
    let pixels = bytes[16..want].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((n, rows, cols, pixels))
}

/// Parses an IDX label file: magic 0x801, dim (n), one byte per label.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, CoreError> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(CoreError::Format(format!(
            "bad label magic {magic:#010x}, want {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n = read_be_u32(bytes, 4)? as usize;
    let want = 8 + n;
    if bytes.len() < want {
        return Err(CoreError::Format(format!(
            "label payload truncated: {} bytes, need {want}",
            bytes.len()
        )));
    }
    Ok(bytes[8..want].to_vec())
}

/// Pairs parsed image and label bytes into a dataset; the two files
/// must agree on the sample count.
pub fn dataset_from_idx(
    image_bytes: &[u8],
    label_bytes: &[u8],
    provenance: &str,
) -> Result<Dataset, CoreError> {
    let (n, rows, cols, pixels) = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if labels.len() != n {
        return Err(CoreError::Input(format!(
            "image/label count mismatch: {n} images, {} labels",
            labels.len()
        )));
    }
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
    Ok(Dataset {
        features: Tensor2::from_vec(n, rows * cols, pixels)?,
        labels: labels.into_iter().map(|l| l as usize).collect(),
        classes,
        provenance: provenance.to_string(),
    })
}

/// Builds IDX image bytes from raw pixels (values clamped to [0, 255]).
pub fn write_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<Vec<u8>, CoreError> {
    if pixels.len() != n * rows * cols {
        return Err(CoreError::Shape(format!(
            "pixel count {} != {n}x{rows}x{cols}",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Builds IDX label bytes.
pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
