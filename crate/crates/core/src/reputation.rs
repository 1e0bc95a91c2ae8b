//! Dual reputation of observed models (similarity to the local model, loss on
//! the local validation set) and the clustering-based dynamic thresholds that
//! decide when the moving target defense fires.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dbscan::{cluster_bounds, cluster_count, dbscan_1d};
use crate::nn::{self, Mlp, ParamVector};
use crate::{Error, NodeId, Result};

pub use crate::dbscan::DbscanConfig;

/// Loss threshold before any clustering evidence is available.
pub const DEFAULT_LOSS_THRESHOLD: f64 = 10.0;
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    /// Cosine of the angle between flattened parameter vectors.
    #[default]
    Cosine,
    /// Negated Euclidean distance, so that larger still means closer.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reputation {
    pub similarity: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReputationVector {
    pub round: usize,
    pub entries: BTreeMap<NodeId, Reputation>,
}

impl ReputationVector {
    pub fn new(round: usize) -> Self {
        ReputationVector {
            round,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&Reputation> {
        self.entries.get(&node)
    }

    /// Entries restricted to `nodes`.
    pub fn restricted_to<'a>(&self, nodes: impl IntoIterator<Item = &'a NodeId>) -> ReputationVector {
        ReputationVector {
            round: self.round,
            entries: nodes
                .into_iter()
                .filter_map(|id| self.entries.get(id).map(|r| (*id, *r)))
                .collect(),
        }
    }
}

pub fn similarity(metric: SimilarityMetric, local: &ParamVector, other: &ParamVector) -> Result<f64> {
    match metric {
        SimilarityMetric::Cosine => nn::cosine_similarity(local, other),
        SimilarityMetric::Euclidean => nn::euclidean_distance(local, other).map(|d| -d),
    }
}

/// Scores every model in `observed` against `local` on `val`.
pub fn score_neighbors<'a>(
    local: &Mlp,
    observed: impl IntoIterator<Item = (NodeId, &'a Mlp)>,
    val: &Dataset,
    metric: SimilarityMetric,
    round: usize,
) -> Result<ReputationVector> {
    let local_vec = nn::flatten(local);
    let mut rep = ReputationVector::new(round);
    for (id, model) in observed {
        if model.arch() != local.arch() {
            return Err(Error::InvalidArch(alloc::format!(
                "node {id} has architecture {:?}, expected {:?}",
                model.arch(),
                local.arch()
            )));
        }
        let sim = similarity(metric, &local_vec, &nn::flatten(model))?;
        let loss = nn::evaluate(model, val)?.loss;
        rep.entries.insert(id, Reputation { similarity: sim, loss });
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub similarity_threshold: f64,
    pub loss_threshold: f64,
    pub trigger: bool,
}

impl Default for ThresholdResult {
    fn default() -> Self {
        ThresholdResult {
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            loss_threshold: DEFAULT_LOSS_THRESHOLD,
            trigger: false,
        }
    }
}

impl ThresholdResult {
    /// A node fails when its loss exceeds the loss threshold or its
    /// similarity falls below the similarity threshold.
    pub fn rejects(&self, r: &Reputation) -> bool {
        r.loss > self.loss_threshold || r.similarity < self.similarity_threshold
    }
}

/// Midpoint between the highest cluster floor and the lowest cluster ceiling,
/// or `None` when the values form a single cluster.
fn gap_threshold(raw: &[f64], clustered_on: &[f64], cfg: &DbscanConfig) -> Option<f64> {
    let labels = dbscan_1d(clustered_on, cfg);
    if cluster_count(&labels) <= 1 {
        return None;
    }
    let bounds = cluster_bounds(raw, &labels);
    let top_floor = bounds.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
    let bottom_ceiling = bounds.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    Some((top_floor + bottom_ceiling) / 2.0)
}

/// Divides by the largest value. Losses are non-negative, so the result lies
/// in `[0, 1]` and is invariant to rescaling, while small relative spreads
/// stay small (min-max scaling would stretch any spread to the full range).
fn scale_to_unit_max(values: &[f64]) -> Vec<f64> {
    let hi = values.iter().copied().fold(0.0, f64::max);
    values.iter().map(|&v| if hi > 0.0 { v / hi } else { 0.0 }).collect()
}

/// Clusters similarities and losses independently. More than one cluster in
/// either dimension sets the trigger and replaces that dimension's default
/// threshold with the gap midpoint. With a single cluster in both, the loss
/// threshold becomes the local model's own loss.
pub fn dynamic_thresholds(rep: &ReputationVector, local_loss: f64, cfg: &DbscanConfig) -> Result<ThresholdResult> {
    cfg.validate()?;
    if rep.is_empty() {
        return Err(Error::EmptyReputation);
    }
    let sims: Vec<f64> = rep.entries.values().map(|r| r.similarity).collect();
    let losses: Vec<f64> = rep.entries.values().map(|r| r.loss).collect();
    if sims.iter().chain(&losses).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reputation scores"));
    }
    let mut out = ThresholdResult::default();

    let sim_split = gap_threshold(&sims, &sims, cfg);
    if let Some(t) = sim_split {
        out.trigger = true;
        out.similarity_threshold = t;
    }

    let loss_split = if cfg.normalize_loss {
        gap_threshold(&losses, &scale_to_unit_max(&losses), cfg)
    } else {
        gap_threshold(&losses, &losses, cfg)
    };
    if let Some(t) = loss_split {
        out.trigger = true;
        out.loss_threshold = t;
    }

    if sim_split.is_none() && loss_split.is_none() {
        out.loss_threshold = local_loss;
    }
    Ok(out)
}
