//! Datasets: synthetic 2-D generators, IDX ingestion, splits, and batching.
//!
//! Generators are deterministic per seed. The IDX parsers work on byte
//! slices so they stay `no_std`; the path-based [`load_idx`] wrapper needs
//! the `std` feature.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::all_finite;

/// Valid input region, used to clip perturbed or sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDomain {
    /// The unit box `[0,1]^n` (images, rescaled synthetic data).
    Unit,
    /// No clipping.
    Unbounded,
}

impl InputDomain {
    pub fn clip(&self, x: &mut [f64]) {
        if let InputDomain::Unit = self {
            for v in x {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        match self {
            InputDomain::Unit => x.iter().all(|&v| (-slack..=1.0 + slack).contains(&v)),
            InputDomain::Unbounded => true,
        }
    }

    /// Interval of coordinate `i` intersected with the domain; `lo > hi`
    /// cannot happen for centers inside the domain.
    pub fn clip_interval(&self, lo: f64, hi: f64) -> (f64, f64) {
        match self {
            InputDomain::Unit => (lo.max(0.0), hi.min(1.0)),
            InputDomain::Unbounded => (lo, hi),
        }
    }
}

/// Labeled points plus the metadata the harness needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub domain: InputDomain,
}

/// Failures while generating or parsing datasets.
#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    /// Generators need at least this many points.
    TooFewPoints { got: usize, need: usize },
    /// The requested subset is empty.
    EmptyDataset,
    /// IDX magic number mismatch; `offset` is the file position.
    BadMagic { offset: usize, found: u32, expected: u32 },
    /// The byte stream ended early; `offset` is where `needed` more bytes
    /// were required.
    Truncated { offset: usize, needed: usize },
    /// Image and label files disagree on the number of items.
    CountMismatch { images: usize, labels: usize },
    /// A record violates the Dataset invariants.
    Invalid(&'static str),
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::TooFewPoints { got, need } => write!(f, "need at least {need} points, got {got}"),
            DataError::EmptyDataset => write!(f, "dataset would be empty"),
            DataError::BadMagic { offset, found, expected } => {
                write!(f, "bad IDX magic {found:#010x} at offset {offset} (expected {expected:#010x})")
            }
            DataError::Truncated { offset, needed } => {
                write!(f, "IDX data truncated at offset {offset}: {needed} more bytes required")
            }
            DataError::CountMismatch { images, labels } => {
                write!(f, "{images} images but {labels} labels")
            }
            DataError::Invalid(why) => write!(f, "invalid dataset: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DataError {}

impl Dataset {
    /// Checks the structural invariants (paired lengths, label range,
    /// finite coordinates, consistent dimensionality).
    pub fn validate(&self) -> Result<(), DataError> {
        if self.inputs.len() != self.labels.len() {
            return Err(DataError::Invalid("inputs and labels have different lengths"));
        }
        if self.inputs.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let dim = self.inputs[0].len();
        if dim == 0 {
            return Err(DataError::Invalid("points have no coordinates"));
        }
        for x in &self.inputs {
            if x.len() != dim {
                return Err(DataError::Invalid("points have inconsistent dimensions"));
            }
            if !all_finite(x) {
                return Err(DataError::Invalid("point has a non-finite coordinate"));
            }
        }
        if self.labels.iter().any(|&l| l >= self.n_classes) {
            return Err(DataError::Invalid("label out of class range"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Point `i` as an `(input, label)` pair.
    pub fn point(&self, i: usize) -> (&[f64], usize) {
        (&self.inputs[i], self.labels[i])
    }

    /// Deterministic shuffled split; `train_frac` of the points (rounded
    /// down, at least 1 on each side) go to the first dataset.
    pub fn split(&self, train_frac: f64, seed: u64) -> (Dataset, Dataset) {
        assert!((0.0..=1.0).contains(&train_frac), "train_frac must be in [0,1]");
        assert!(self.len() >= 2, "cannot split fewer than 2 points");
        let mut idx: Vec<usize> = (0..self.len()).collect();
        shuffle(&mut idx, &mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64 * train_frac) as usize).clamp(1, self.len() - 1);
        let make = |ids: &[usize], suffix: &str| Dataset {
            name: alloc::format!("{}-{suffix}", self.name),
            inputs: ids.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            domain: self.domain,
        };
        (make(&idx[..n_train], "train"), make(&idx[n_train..], "test"))
    }

    /// Shuffled index batches of `batch_size` (the last may be smaller).
    pub fn batches(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        assert!(batch_size > 0, "batch size must be nonzero");
        let mut idx: Vec<usize> = (0..self.len()).collect();
        shuffle(&mut idx, rng);
        idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Fisher-Yates; kept local so shuffles do not depend on rand's `Slice`
/// feature set (and stay stable across rand versions).
fn shuffle(idx: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

/// Standard normal via Box-Muller, two values per two uniform draws.
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // 1 - u puts the value in (0, 1], keeping the log finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = num_traits::Float::sqrt(-2.0 * num_traits::Float::ln(u1));
    let theta = 2.0 * core::f64::consts::PI * u2;
    (r * num_traits::Float::cos(theta), r * num_traits::Float::sin(theta))
}

/// Interleaved half-circles ("two moons"), rescaled into the unit square.
///
/// The outer moon traces `(cos t, sin t)` and the inner moon
/// `(1 - cos t, 1/2 - sin t)` for `t` evenly spaced in `[0, pi]`; Gaussian
/// noise of standard deviation `noise_sigma` is added per coordinate before
/// the affine rescale `x -> (x+1)/3, y -> (y+1/2)/1.5`, and the result is
/// clipped to the unit square. Deterministic per seed.
pub fn gen_two_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::TooFewPoints { got: n, need: 2 });
    }
    assert!(noise_sigma >= 0.0 && noise_sigma.is_finite(), "noise sigma must be finite and >= 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_outer = n - n / 2;
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        let count = if class == 0 { n_outer } else { n / 2 };
        for i in 0..count {
            let t = if count == 1 {
                0.0
            } else {
                core::f64::consts::PI * i as f64 / (count - 1) as f64
            };
            let (mut x, mut y) = if class == 0 {
                (num_traits::Float::cos(t), num_traits::Float::sin(t))
            } else {
                (1.0 - num_traits::Float::cos(t), 0.5 - num_traits::Float::sin(t))
            };
            if noise_sigma > 0.0 {
                let (gx, gy) = normal_pair(&mut rng);
                x += noise_sigma * gx;
                y += noise_sigma * gy;
            }
            inputs.push(vec![((x + 1.0) / 3.0).clamp(0.0, 1.0), ((y + 0.5) / 1.5).clamp(0.0, 1.0)]);
            labels.push(class);
        }
    }
    let ds = Dataset {
        name: String::from("two_moons"),
        inputs,
        labels,
        n_classes: 2,
        domain: InputDomain::Unit,
    };
    ds.validate()?;
    Ok(ds)
}

/// Isotropic Gaussian blobs around `centers`, clipped to the unit box.
///
/// Cluster `i` gets label `i % k_classes`; points are dealt to clusters
/// round-robin so every cluster gets within one point of the others.
/// Centers must be pairwise distinct and inside the unit box (asserted).
pub fn gen_blobs(
    n: usize,
    k_classes: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    assert!(k_classes >= 1 && !centers.is_empty(), "need at least one class and one center");
    assert!(centers.len() >= k_classes, "need at least one center per class");
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be finite and >= 0");
    let dim = centers[0].len();
    for (i, c) in centers.iter().enumerate() {
        assert!(c.len() == dim, "center {i} has dimension {}, expected {dim}", c.len());
        assert!(c.iter().all(|&v| (0.0..=1.0).contains(&v)), "center {i} is outside the unit box");
        for later in &centers[i + 1..] {
            assert!(c != later, "centers must be pairwise distinct");
        }
    }
    if n < centers.len() {
        return Err(DataError::TooFewPoints { got: n, need: centers.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for p in 0..n {
        let cluster = p % centers.len();
        let mut x = centers[cluster].clone();
        if sigma > 0.0 {
            let mut d = 0;
            while d < dim {
                let (g0, g1) = normal_pair(&mut rng);
                x[d] = (x[d] + sigma * g0).clamp(0.0, 1.0);
                if d + 1 < dim {
                    x[d + 1] = (x[d + 1] + sigma * g1).clamp(0.0, 1.0);
                }
                d += 2;
            }
        }
        inputs.push(x);
        labels.push(cluster % k_classes);
    }
    let ds = Dataset {
        name: String::from("blobs"),
        inputs,
        labels,
        n_classes: k_classes,
        domain: InputDomain::Unit,
    };
    ds.validate()?;
    Ok(ds)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    let end = offset.checked_add(4).ok_or(DataError::Truncated { offset, needed: 4 })?;
    if bytes.len() < end {
        return Err(DataError::Truncated { offset, needed: end - bytes.len() });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Parses an IDX image file (magic `0x00000803`, big-endian dims
/// `n x rows x cols`, unsigned bytes). Returns the raw pixel rows and the
/// image shape.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<Vec<u8>>, usize, usize), DataError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic { offset: 0, found: magic, expected: IDX_IMAGES_MAGIC });
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let pixels = rows * cols;
    let need = 16 + n * pixels;
    if bytes.len() < need {
        return Err(DataError::Truncated { offset: bytes.len(), needed: need - bytes.len() });
    }
    let images = (0..n).map(|i| bytes[16 + i * pixels..16 + (i + 1) * pixels].to_vec()).collect();
    Ok((images, rows, cols))
}

/// Parses an IDX label file (magic `0x00000801`, big-endian count,
/// unsigned bytes).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic { offset: 0, found: magic, expected: IDX_LABELS_MAGIC });
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(DataError::Truncated { offset: bytes.len(), needed: need - bytes.len() });
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Builds a dataset from parsed IDX byte streams: pixels scaled to `[0,1]`,
/// the first `limit` items kept, class count = max label + 1.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], limit: usize) -> Result<Dataset, DataError> {
    let (imgs, _rows, _cols) = parse_idx_images(images)?;
    let labs = parse_idx_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(DataError::CountMismatch { images: imgs.len(), labels: labs.len() });
    }
    if limit == 0 || imgs.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let keep = limit.min(imgs.len());
    let inputs: Vec<Vec<f64>> =
        imgs[..keep].iter().map(|img| img.iter().map(|&p| p as f64 / 255.0).collect()).collect();
    let labels: Vec<usize> = labs[..keep].iter().map(|&l| l as usize).collect();
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let ds = Dataset { name: String::from("idx"), inputs, labels, n_classes, domain: InputDomain::Unit };
    ds.validate()?;
    Ok(ds)
}

/// Reads an IDX image/label file pair from disk. `limit` truncates from the
/// front; errors carry the offending path.
#[cfg(feature = "std")]
pub fn load_idx(
    images_path: &std::path::Path,
    labels_path: &std::path::Path,
    limit: usize,
) -> Result<Dataset, LoadIdxError> {
    let images = std::fs::read(images_path)
        .map_err(|e| LoadIdxError::Io { path: images_path.display().to_string(), why: e.to_string() })?;
    let labels = std::fs::read(labels_path)
        .map_err(|e| LoadIdxError::Io { path: labels_path.display().to_string(), why: e.to_string() })?;
    dataset_from_idx(&images, &labels, limit).map_err(LoadIdxError::Parse)
}

/// Errors of the path-based IDX loader.
#[cfg(feature = "std")]
#[derive(Debug, Clone, PartialEq)]
pub enum LoadIdxError {
    Io { path: String, why: String },
    Parse(DataError),
}

#[cfg(feature = "std")]
impl core::fmt::Display for LoadIdxError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LoadIdxError::Io { path, why } => write!(f, "cannot read {path}: {why}"),
            LoadIdxError::Parse(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LoadIdxError {}
