//! Moving target defense: reputation-driven topology rewiring and
//! aggregation-rule shuffling, each run proactively (every round) or
//! reactively (only when the reputation trigger fires).

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::AggregatorKind;
use crate::reputation::{ReputationVector, ThresholdResult};
use crate::rng::SimRng;
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtdMode {
    #[default]
    Off,
    Reactive,
    Proactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtdStrategy {
    Topology,
    Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtdConfig {
    pub mode: MtdMode,
    pub strategies: BTreeSet<MtdStrategy>,
    /// Minimum neighbor count the proactive topology step refills to.
    pub neighbor_floor: usize,
    pub aggregator_pool: Vec<AggregatorKind>,
    /// Reactive mode: keep the most similar neighbor rather than become
    /// isolated.
    pub retain_on_isolation: bool,
}

impl Default for MtdConfig {
    fn default() -> Self {
        MtdConfig {
            mode: MtdMode::Off,
            strategies: [MtdStrategy::Topology, MtdStrategy::Aggregation].into(),
            neighbor_floor: 2,
            aggregator_pool: vec![
                AggregatorKind::Krum,
                AggregatorKind::Median,
                AggregatorKind::TrimmedMean,
            ],
            retain_on_isolation: true,
        }
    }
}

impl MtdConfig {
    pub fn enabled(&self) -> bool {
        self.mode != MtdMode::Off && !self.strategies.is_empty()
    }

    pub fn uses(&self, strategy: MtdStrategy) -> bool {
        self.mode != MtdMode::Off && self.strategies.contains(&strategy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighbor_floor < 1 {
            return Err(Error::config("mtd.neighbor_floor", "an integer >= 1"));
        }
        if self.aggregator_pool.is_empty() {
            return Err(Error::config("mtd.aggregator_pool", "a non-empty list of aggregators"));
        }
        Ok(())
    }
}

/// What one node knows when it runs the defense.
#[derive(Debug, Clone)]
pub struct NodeView {
    pub self_id: NodeId,
    pub neighbors: BTreeSet<NodeId>,
    pub known_nodes: BTreeSet<NodeId>,
    /// Scores of every node whose model was observed this round.
    pub rep: ReputationVector,
    pub thresholds: ThresholdResult,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeDelta {
    pub to_disconnect: BTreeSet<NodeId>,
    pub to_connect: BTreeSet<NodeId>,
}

impl EdgeDelta {
    pub fn is_empty(&self) -> bool {
        self.to_disconnect.is_empty() && self.to_connect.is_empty()
    }
}

/// Scored nodes (other than self) that fail a threshold, once the trigger
/// has fired.
pub fn detect_malicious(view: &NodeView) -> BTreeSet<NodeId> {
    if !view.thresholds.trigger {
        return BTreeSet::new();
    }
    view.rep
        .entries
        .iter()
        .filter(|(&id, r)| id != view.self_id && view.thresholds.rejects(r))
        .map(|(&id, _)| id)
        .collect()
}

/// Dynamic topology: drop neighbors that fail the thresholds and link to
/// scored non-neighbors that pass them. Proactive mode then tops the
/// neighborhood up to the floor with the most similar remaining nodes;
/// reactive mode does nothing unless the trigger fired.
pub fn topology_step(view: &NodeView, cfg: &MtdConfig) -> EdgeDelta {
    let mut delta = EdgeDelta::default();
    let active = match cfg.mode {
        MtdMode::Off => false,
        MtdMode::Reactive => view.thresholds.trigger,
        MtdMode::Proactive => true,
    };
    if !active {
        return delta;
    }
    let scored = || {
        view.rep
            .entries
            .iter()
            .filter(|(&id, _)| id != view.self_id && view.known_nodes.contains(&id))
    };
    for (&id, r) in scored() {
        let rejected = view.thresholds.rejects(r);
        match (view.neighbors.contains(&id), rejected) {
            (true, true) => {
                delta.to_disconnect.insert(id);
            }
            (false, false) => {
                delta.to_connect.insert(id);
            }
            _ => {}
        }
    }

    let remaining = |d: &EdgeDelta| view.neighbors.len() - d.to_disconnect.len() + d.to_connect.len();
    match cfg.mode {
        MtdMode::Proactive if remaining(&delta) < cfg.neighbor_floor => {
            let mut candidates: Vec<(NodeId, f64)> = scored()
                .filter(|(id, _)| {
                    !view.neighbors.contains(id) && !delta.to_connect.contains(id) && !delta.to_disconnect.contains(id)
                })
                .map(|(&id, r)| (id, r.similarity))
                .collect();
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (id, _) in candidates {
                if remaining(&delta) >= cfg.neighbor_floor {
                    break;
                }
                delta.to_connect.insert(id);
            }
        }
        MtdMode::Reactive if cfg.retain_on_isolation && remaining(&delta) == 0 && !view.neighbors.is_empty() => {
            let keep = delta
                .to_disconnect
                .iter()
                .filter_map(|id| view.rep.get(*id).map(|r| (*id, r.similarity)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let Some((id, _)) = keep {
                log::warn!("node {}: keeping neighbor {id} to avoid isolation", view.self_id);
                delta.to_disconnect.remove(&id);
            }
        }
        _ => {}
    }
    delta
}

/// Dynamic aggregation: picks the aggregator for this round and the set of
/// contributors to exclude. Proactive mode draws a pool member every round;
/// reactive mode only redraws when something was detected.
pub fn aggregation_step(
    cfg: &MtdConfig,
    current: AggregatorKind,
    detected: &BTreeSet<NodeId>,
    rng: &mut SimRng,
) -> Result<(AggregatorKind, BTreeSet<NodeId>)> {
    if cfg.aggregator_pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut draw = || cfg.aggregator_pool[rng.random_range(0..cfg.aggregator_pool.len())];
    Ok(match cfg.mode {
        MtdMode::Off => (current, BTreeSet::new()),
        MtdMode::Proactive => (draw(), detected.clone()),
        MtdMode::Reactive if !detected.is_empty() => (draw(), detected.clone()),
        MtdMode::Reactive => (current, BTreeSet::new()),
    })
}
