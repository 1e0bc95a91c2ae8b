//! Datasets, non-IID partitioning and the data-level attack transforms.
//!
//! All transforms are pure: they return new datasets and never modify their
//! inputs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng;
use crate::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const MAX_PARTITION_DRAWS: usize = 100;

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    num_classes: usize,
}

impl Dataset {
    /// Features must be finite and within `[0, 1]`, labels below `num_classes`.
    pub fn new(features: Vec<f64>, labels: Vec<usize>, n_features: usize, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                what: "feature matrix size vs labels x width",
                expected: labels.len() * n_features,
                actual: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::NonFinite("dataset features outside [0, 1]"));
        }
        Ok(Dataset {
            features,
            labels,
            n_features,
            num_classes,
        })
    }

    pub fn empty(n_features: usize, num_classes: usize) -> Self {
        Dataset {
            features: Vec::new(),
            labels: Vec::new(),
            n_features,
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
            num_classes: self.num_classes,
        }
    }

    fn with_labels(&self, labels: Vec<usize>) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels,
            n_features: self.n_features,
            num_classes: self.num_classes,
        }
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("{what}: truncated header")))
}

/// Decodes an IDX image file (`0x00000803`, big-endian `n x rows x cols`
/// unsigned bytes) and its IDX label file (`0x00000801`). Pixels are scaled
/// by 1/255; the class count is the largest label plus one.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = read_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Idx(format!(
            "images: bad magic {magic:#010x}, expected 0x00000803"
        )));
    }
    let n = read_u32(images, 4, "images")? as usize;
    let rows = read_u32(images, 8, "images")? as usize;
    let cols = read_u32(images, 12, "images")? as usize;
    let magic = read_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Idx(format!(
            "labels: bad magic {magic:#010x}, expected 0x00000801"
        )));
    }
    let n_labels = read_u32(labels, 4, "labels")? as usize;
    if n != n_labels {
        return Err(Error::Idx(format!("{n} images but {n_labels} labels")));
    }
    let width = rows * cols;
    let pixels = images
        .get(16..16 + n * width)
        .ok_or_else(|| Error::Idx(format!("images: truncated, expected {} pixel bytes", n * width)))?;
    let label_bytes = labels
        .get(8..8 + n)
        .ok_or_else(|| Error::Idx(format!("labels: truncated, expected {n} label bytes")))?;
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Ok(Dataset {
        features: pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        labels,
        n_features: width,
        num_classes,
    })
}

/// Encodes a dataset as an (images, labels) IDX pair with square images.
/// Pixels are quantized to bytes.
pub fn encode_idx(data: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let side = image_side(data.n_features).ok_or(Error::PatchDoesNotFit {
        features: data.n_features,
        patch: 1,
    })?;
    let mut images = Vec::with_capacity(16 + data.features.len());
    for v in [IDX_IMAGES_MAGIC, data.len() as u32, side as u32, side as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(data.features.iter().map(|&v| math::round(v * 255.0) as u8));
    let mut labels = Vec::with_capacity(8 + data.len());
    for v in [IDX_LABELS_MAGIC, data.len() as u32] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend(data.labels.iter().map(|&l| l as u8));
    Ok((images, labels))
}

/// Gaussian class clusters: class `c` has a mean drawn uniformly from
/// `[0, 1]^n_features`; sample `i` belongs to class `i mod num_classes` and is
/// its class mean plus `Normal(0, spread^2)` noise, clipped to `[0, 1]`.
pub fn synth_blobs(n_samples: usize, n_features: usize, num_classes: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::TooFewClasses(num_classes));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::config("dataset.cluster_spread", "a finite value >= 0"));
    }
    let mut rng = rng::seeded(seed);
    let means: Vec<f64> = (0..num_classes * n_features)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let noise = Normal::new(0.0, spread.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut features = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let c = i % num_classes;
        let mean = &means[c * n_features..(c + 1) * n_features];
        features.extend(mean.iter().map(|&m| {
            let v = if spread > 0.0 { m + noise.sample(&mut rng) } else { m };
            v.clamp(0.0, 1.0)
        }));
        labels.push(c);
    }
    Dataset::new(features, labels, n_features, num_classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub n_nodes: usize,
    /// Dirichlet concentration; smaller means more skewed class mixes.
    pub alpha: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::config("n_nodes", "an integer >= 2"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("partition.alpha", "a finite value > 0"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("partition.val_fraction", "a value in (0, 1)"));
        }
        Ok(())
    }
}

/// Per class, draws node proportions from `Dirichlet(alpha, ..., alpha)` and
/// assigns each sample of that class to a node by a categorical draw. The
/// whole partition is redrawn while any node comes out empty.
pub fn dirichlet_partition(data: &Dataset, cfg: &PartitionConfig) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let gamma = Gamma::new(cfg.alpha, 1.0).map_err(|_| Error::config("partition.alpha", "a finite value > 0"))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng::seeded(cfg.seed);
    for _ in 0..MAX_PARTITION_DRAWS {
        let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_nodes];
        for members in by_class.iter().filter(|m| !m.is_empty()) {
            let cumulative = dirichlet_cumulative(&gamma, cfg.n_nodes, &mut rng);
            for &i in members {
                let u: f64 = rng.random_range(0.0..1.0);
                let node = cumulative.iter().position(|&c| u < c).unwrap_or(cfg.n_nodes - 1);
                assignment[node].push(i);
            }
        }
        if assignment.iter().all(|a| !a.is_empty()) {
            return Ok(assignment
                .into_iter()
                .map(|mut idx| {
                    idx.sort_unstable();
                    data.subset(&idx)
                })
                .collect());
        }
    }
    Err(Error::DegeneratePartition(MAX_PARTITION_DRAWS))
}

/// Cumulative sums of one Dirichlet draw via normalized Gamma variates.
fn dirichlet_cumulative(gamma: &Gamma<f64>, k: usize, rng: &mut rng::SimRng) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        // tiny alpha can underflow every variate to zero
        if total > 0.0 && total.is_finite() {
            let mut acc = 0.0;
            return draws
                .iter()
                .map(|d| {
                    acc += d / total;
                    acc
                })
                .collect();
        }
    }
}

/// Stratified split. The validation size is `round(val_fraction * n)`, kept
/// within `[1, n - 1]` when `n >= 2`; per-class quotas use largest remainders.
/// Both halves keep the input's relative order.
pub fn split_train_val(data: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::config("partition.val_fraction", "a value in (0, 1)"));
    }
    let n = data.len();
    if n < 2 {
        return Ok((data.clone(), Dataset::empty(data.n_features, data.num_classes)));
    }
    let total_val = (math::round(val_fraction * n as f64) as usize).clamp(1, n - 1);
    let counts = data.class_counts();
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * total_val as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|&e| math::floor(e) as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > quota[c]).collect();
    // largest fractional part first, lower class on ties
    order.sort_by(|&a, &b| {
        let fa = exact[a] - quota[a] as f64;
        let fb = exact[b] - quota[b] as f64;
        fb.partial_cmp(&fa)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut missing = total_val - quota.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if quota[c] < counts[c] {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = rng::seeded(seed);
    let mut is_val = vec![false; n];
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (members, &q) in by_class.iter_mut().zip(&quota) {
        members.shuffle(&mut rng);
        for &i in &members[..q] {
            is_val[i] = true;
        }
    }
    let train: Vec<usize> = (0..n).filter(|&i| !is_val[i]).collect();
    let val: Vec<usize> = (0..n).filter(|&i| is_val[i]).collect();
    Ok((data.subset(&train), data.subset(&val)))
}

/// Label-flipping poison: every label `y` becomes `(y + 1) mod L`.
pub fn flip_labels(data: &Dataset) -> Result<Dataset> {
    if data.num_classes < 2 {
        return Err(Error::TooFewClasses(data.num_classes));
    }
    let l = data.num_classes;
    Ok(data.with_labels(data.labels.iter().map(|&y| (y + 1) % l).collect()))
}

/// Label-flipping poison with a uniformly random incorrect label per sample.
pub fn flip_labels_random(data: &Dataset, seed: u64) -> Result<Dataset> {
    if data.num_classes < 2 {
        return Err(Error::TooFewClasses(data.num_classes));
    }
    let l = data.num_classes;
    let mut rng = rng::seeded(seed);
    Ok(data.with_labels(data.labels.iter().map(|&y| (y + rng.random_range(1..l)) % l).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonMode {
    /// Stamp only the training samples already labeled with the target class.
    StampTargetClass,
    /// Stamp every training sample and relabel it to the target class.
    StampAndRelabelAll,
}

/// "X"-shaped trigger written into the upper-left corner of square images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackdoorConfig {
    pub patch_size: usize,
    pub target_class: usize,
    pub poison_mode: PoisonMode,
}

impl Default for BackdoorConfig {
    fn default() -> Self {
        BackdoorConfig {
            patch_size: 10,
            target_class: 4,
            poison_mode: PoisonMode::StampTargetClass,
        }
    }
}

fn image_side(n_features: usize) -> Option<usize> {
    let side = math::round(math::sqrt(n_features as f64)) as usize;
    (side * side == n_features).then_some(side)
}

impl BackdoorConfig {
    /// Flat pixel indices of the trigger, deduplicated and ascending.
    pub fn trigger_pixels(&self, n_features: usize, num_classes: usize) -> Result<Vec<usize>> {
        if self.target_class >= num_classes {
            return Err(Error::config(
                "attack.backdoor.target_class",
                format!("a class index below {num_classes}"),
            ));
        }
        let p = self.patch_size;
        let side = image_side(n_features)
            .filter(|&s| p >= 1 && s >= p)
            .ok_or(Error::PatchDoesNotFit {
                features: n_features,
                patch: p,
            })?;
        let mut pixels: Vec<usize> = (0..p).flat_map(|i| [i * side + i, i * side + (p - 1 - i)]).collect();
        pixels.sort_unstable();
        pixels.dedup();
        Ok(pixels)
    }
}

fn stamp_rows(data: &Dataset, pixels: &[usize], mut pick: impl FnMut(usize) -> bool) -> Dataset {
    let mut out = data.clone();
    let d = data.n_features;
    for i in 0..data.len() {
        if pick(i) {
            let row = &mut out.features[i * d..(i + 1) * d];
            for &p in pixels {
                row[p] = 1.0;
            }
        }
    }
    out
}

/// Poisons a backdoor attacker's training set according to `cfg.poison_mode`.
pub fn stamp_backdoor_train(data: &Dataset, cfg: &BackdoorConfig) -> Result<Dataset> {
    let pixels = cfg.trigger_pixels(data.n_features, data.num_classes)?;
    let t = cfg.target_class;
    Ok(match cfg.poison_mode {
        PoisonMode::StampTargetClass => stamp_rows(data, &pixels, |i| data.labels[i] == t),
        PoisonMode::StampAndRelabelAll => {
            let mut out = stamp_rows(data, &pixels, |_| true);
            out.labels.fill(t);
            out
        }
    })
}

/// Stamps every sample and keeps the true labels.
pub fn make_backdoor_testset(clean: &Dataset, cfg: &BackdoorConfig) -> Result<Dataset> {
    let pixels = cfg.trigger_pixels(clean.n_features, clean.num_classes)?;
    Ok(stamp_rows(clean, &pixels, |_| true))
}
