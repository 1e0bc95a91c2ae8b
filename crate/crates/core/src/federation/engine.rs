use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::aggregate::{aggregate, AggregationInput, AggregatorKind};
use crate::config::{ExperimentConfig, Weighting};
use crate::data::Dataset;
use crate::metrics::{self, ConfusionCounts, RoundRecord};
use crate::mtd::{self, EdgeDelta, MtdStrategy, NodeView};
use crate::nn::{self, Mlp, ParamVector};
use crate::reputation::{dynamic_thresholds, score_neighbors, ReputationVector};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::{NodeId, Result};

use super::adversary::{poison_params, Role};
use super::audit::{Actor, AuditLog, Guarded, ResourceKind};
use super::topology::TopologyGraph;

/// One participant. Training data, validation data and reputation state are
/// private and only reachable through the audit log.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    pub model: Mlp,
    /// Aggregation rule in use; persists between rounds.
    pub aggregator: AggregatorKind,
    /// Training-set size, published alongside the parameters.
    pub train_len: usize,
    train: Guarded<Dataset>,
    val: Guarded<Dataset>,
    reputation: Guarded<Option<ReputationVector>>,
}

impl NodeState {
    pub fn new(id: NodeId, role: Role, train: Dataset, val: Dataset, model: Mlp, aggregator: AggregatorKind) -> Self {
        NodeState {
            id,
            role,
            model,
            aggregator,
            train_len: train.len(),
            train: Guarded::new(id, ResourceKind::TrainData, train),
            val: Guarded::new(id, ResourceKind::ValData, val),
            reputation: Guarded::new(id, ResourceKind::Reputation, None),
        }
    }

    pub fn train_data(&self, reader: Actor, round: usize, log: &mut AuditLog) -> &Dataset {
        self.train.read(reader, round, log)
    }

    pub fn val_data(&self, reader: Actor, round: usize, log: &mut AuditLog) -> &Dataset {
        self.val.read(reader, round, log)
    }

    /// Most recent reputation vector this node computed.
    pub fn reputation(&self, reader: Actor, round: usize, log: &mut AuditLog) -> Option<&ReputationVector> {
        self.reputation.read(reader, round, log).as_ref()
    }

    /// Own validation set, or the training set when the split left it empty.
    fn scoring_set(&self, round: usize, log: &mut AuditLog) -> &Dataset {
        let me = Actor::Node(self.id);
        let val = self.val.read(me, round, log);
        if val.is_empty() {
            self.train.read(me, round, log)
        } else {
            val
        }
    }
}

#[derive(Debug, Clone)]
struct Trained {
    /// What the node keeps and aggregates as its own contribution.
    local: Mlp,
    /// What every other node observes.
    published: Mlp,
}

#[derive(Debug, Clone)]
struct Defense {
    triggered: bool,
    detected: BTreeSet<NodeId>,
    delta: EdgeDelta,
    aggregator: AggregatorKind,
    excluded: BTreeSet<NodeId>,
    rep: Option<ReputationVector>,
}

impl Defense {
    fn idle(current: AggregatorKind) -> Self {
        Defense {
            triggered: false,
            detected: BTreeSet::new(),
            delta: EdgeDelta::default(),
            aggregator: current,
            excluded: BTreeSet::new(),
            rep: None,
        }
    }
}

/// Result of one round: a record per node plus the set of contributors each
/// node actually aggregated.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub records: Vec<RoundRecord>,
    pub aggregation_inputs: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

/// Evaluation sets held by the harness, never by nodes.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub test: Dataset,
    pub backdoor: Option<Dataset>,
}

#[derive(Debug, Clone)]
pub struct Federation {
    cfg: ExperimentConfig,
    nodes: Vec<NodeState>,
    graph: TopologyGraph,
    eval: EvalSets,
    audit: AuditLog,
    round: usize,
    parallel: bool,
}

impl Federation {
    pub fn new(cfg: ExperimentConfig, nodes: Vec<NodeState>, graph: TopologyGraph, eval: EvalSets) -> Self {
        Federation {
            cfg,
            nodes,
            graph,
            eval,
            audit: AuditLog::new(),
            round: 0,
            parallel: false,
        }
    }

    /// Train nodes concurrently. Results are identical to serial execution.
    /// Without the `parallel` feature this has no effect.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn graph(&self) -> &TopologyGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut TopologyGraph {
        &mut self.graph
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn audit_mut(&mut self) -> &mut AuditLog {
        &mut self.audit
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn attackers(&self) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .filter(|n| !n.role.is_benign())
            .map(|n| n.id)
            .collect()
    }

    /// Local training, publication, reputation, moving target defense and
    /// aggregation, in that order.
    pub fn run_round(&mut self) -> Result<RoundOutcome> {
        let round = self.round + 1;

        // (1) local training
        let trained = self.train_all(round)?;

        // (2) publication: every node can observe every published model
        let registry: Vec<&Mlp> = trained.iter().map(|t| &t.published).collect();

        // (3) reputation and (4) defense, benign nodes only
        let mut defenses = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let d = if node.role.is_benign() && self.cfg.mtd.enabled() {
                defend(
                    node,
                    &trained[node.id].local,
                    &registry,
                    &self.graph,
                    &self.cfg,
                    round,
                    &mut self.audit,
                )?
            } else {
                Defense::idle(node.aggregator)
            };
            defenses.push(d);
        }
        for (node, d) in self.nodes.iter_mut().zip(&mut defenses) {
            if let Some(rep) = d.rep.take() {
                node.reputation
                    .write(Actor::Node(node.id), round, &mut self.audit, Some(rep));
            }
        }
        // connects first, then disconnects, both in ascending node order, so
        // that a disconnect by either endpoint wins
        for (id, d) in defenses.iter().enumerate() {
            for &peer in &d.delta.to_connect {
                self.graph.connect(id, peer);
            }
        }
        for (id, d) in defenses.iter().enumerate() {
            for &peer in &d.delta.to_disconnect {
                self.graph.disconnect(id, peer);
            }
        }
        debug_assert!(self.graph.is_consistent());

        // (5) aggregation over self plus current neighbors
        let published: Vec<ParamVector> = trained.iter().map(|t| nn::flatten(&t.published)).collect();
        let mut inputs = BTreeMap::new();
        let mut new_models = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let d = &defenses[node.id];
            let weight = |j: NodeId| match self.cfg.aggregation.weighting {
                Weighting::DataSize => self.nodes[j].train_len as f64,
                Weighting::Uniform => 1.0,
            };
            let mut input = AggregationInput::new();
            input.add(node.id, nn::flatten(&trained[node.id].local), weight(node.id));
            for &j in self.graph.neighbors(node.id) {
                input.add(j, published[j].clone(), weight(j));
                if d.excluded.contains(&j) {
                    input.exclude(j);
                }
            }
            inputs.insert(
                node.id,
                input.active()?.into_iter().map(|(id, _)| id).collect::<BTreeSet<_>>(),
            );
            let params = aggregate(d.aggregator, &input, &self.cfg.aggregation.params())?;
            new_models.push(nn::unflatten(&params, node.model.arch())?);
        }
        for ((node, model), d) in self.nodes.iter_mut().zip(new_models).zip(&defenses) {
            node.model = model;
            node.aggregator = d.aggregator;
        }

        let records = self.evaluate_round(round, &defenses)?;
        self.round = round;
        Ok(RoundOutcome {
            records,
            aggregation_inputs: inputs,
        })
    }

    fn train_all(&mut self, round: usize) -> Result<Vec<Trained>> {
        let cfg = &self.cfg;
        let results: Vec<(Result<Trained>, AuditLog)> = if self.parallel {
            par_map(&self.nodes, |n| {
                let mut log = AuditLog::new();
                (train_node(n, cfg, round, &mut log), log)
            })
        } else {
            self.nodes
                .iter()
                .map(|n| {
                    let mut log = AuditLog::new();
                    (train_node(n, cfg, round, &mut log), log)
                })
                .collect()
        };
        let mut out = Vec::with_capacity(results.len());
        for (r, log) in results {
            self.audit.extend(log);
            out.push(r?);
        }
        Ok(out)
    }

    fn evaluate_round(&mut self, round: usize, defenses: &[Defense]) -> Result<Vec<RoundRecord>> {
        let average = self.cfg.metrics.f1_average;
        let target = self.cfg.attack.backdoor.target_class;
        // nodes often end a round with identical models; score each distinct
        // model on the shared sets once
        let mut scored: Vec<(NodeId, f64, Option<f64>)> = Vec::new();
        let mut records = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let cached = scored
                .iter()
                .find(|(j, _, _)| self.nodes[*j].model.params() == node.model.params())
                .map(|&(_, f, a)| (f, a));
            let (f1, asr) = match cached {
                Some(v) => v,
                None => {
                    let test = &self.eval.test;
                    let preds = nn::evaluate(&node.model, test)?.predictions;
                    let f1 = metrics::f1(average, &preds, test.labels(), test.num_classes());
                    let asr = match &self.eval.backdoor {
                        Some(b) => {
                            let preds = nn::evaluate(&node.model, b)?.predictions;
                            let counts = ConfusionCounts::from_predictions(&preds, b.labels(), b.num_classes());
                            metrics::asr(&counts, target, b.len())
                        }
                        None => None,
                    };
                    scored.push((node.id, f1, asr));
                    (f1, asr)
                }
            };
            let val = node.val.read(Actor::Node(node.id), round, &mut self.audit);
            let val_loss = if val.is_empty() {
                f64::NAN
            } else {
                nn::evaluate(&node.model, val)?.loss
            };
            let d = &defenses[node.id];
            records.push(RoundRecord {
                round,
                node_id: node.id,
                role: node.role,
                f1,
                val_loss,
                asr,
                neighbors: self.graph.neighbors(node.id).iter().copied().collect(),
                aggregator: d.aggregator,
                mtd_triggered: d.triggered,
                detected: d.detected.iter().copied().collect(),
            });
        }
        Ok(records)
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

fn train_node(node: &NodeState, cfg: &ExperimentConfig, round: usize, log: &mut AuditLog) -> Result<Trained> {
    let train = node.train_data(Actor::Node(node.id), round, log);
    let local = if train.is_empty() {
        node.model.clone()
    } else {
        let seed = derive_seed(cfg.seed, Stream::Training, node.id as u64, round as u64);
        nn::train_local(&node.model, train, &cfg.training, seed)?
    };
    let published = match node.role {
        Role::ModelPoisoner => {
            let mut rng = stream_rng(cfg.seed, Stream::Poison, node.id as u64, round as u64);
            let p = poison_params(&nn::flatten(&local), local.layers(), &cfg.attack, &mut rng)?;
            nn::unflatten(&p, local.arch())?
        }
        _ => local.clone(),
    };
    Ok(Trained { local, published })
}

/// Reputation, thresholds and both defense strategies for one benign node.
fn defend(
    node: &NodeState,
    local: &Mlp,
    registry: &[&Mlp],
    graph: &TopologyGraph,
    cfg: &ExperimentConfig,
    round: usize,
    log: &mut AuditLog,
) -> Result<Defense> {
    let neighbors = graph.neighbors(node.id).clone();
    let known: BTreeSet<NodeId> = (0..graph.n()).filter(|&j| j != node.id).collect();
    // the topology strategy needs scores for non-neighbors too
    let observed = if cfg.mtd.uses(MtdStrategy::Topology) {
        known.clone()
    } else {
        neighbors.clone()
    };
    if observed.is_empty() {
        return Ok(Defense::idle(node.aggregator));
    }
    let scoring = node.scoring_set(round, log);
    let rep = score_neighbors(
        local,
        observed.iter().map(|&j| (j, registry[j])),
        scoring,
        cfg.reputation.metric,
        round,
    )?;
    let local_loss = nn::evaluate(local, scoring)?.loss;
    // thresholds come from the current neighbors; with fewer than two there is
    // no cluster structure to find, so fall back to everything scored
    let basis = if neighbors.len() < 2 {
        rep.clone()
    } else {
        rep.restricted_to(&neighbors)
    };
    let thresholds = dynamic_thresholds(&basis, local_loss, &cfg.reputation.dbscan())?;
    let view = NodeView {
        self_id: node.id,
        neighbors,
        known_nodes: known,
        rep,
        thresholds,
    };
    let detected = mtd::detect_malicious(&view);
    let delta = if cfg.mtd.uses(MtdStrategy::Topology) {
        mtd::topology_step(&view, &cfg.mtd)
    } else {
        EdgeDelta::default()
    };
    let (aggregator, excluded) = if cfg.mtd.uses(MtdStrategy::Aggregation) {
        let mut rng = stream_rng(cfg.seed, Stream::Mtd, node.id as u64, round as u64);
        mtd::aggregation_step(&cfg.mtd, node.aggregator, &detected, &mut rng)?
    } else {
        (node.aggregator, BTreeSet::new())
    };
    Ok(Defense {
        triggered: thresholds.trigger,
        detected,
        delta,
        aggregator,
        excluded,
        rep: Some(view.rep),
    })
}
