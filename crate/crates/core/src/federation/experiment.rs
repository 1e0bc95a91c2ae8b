use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;

use crate::config::ExperimentConfig;
use crate::data::{self, Dataset, PartitionConfig};
use crate::federation::adversary::{select_attackers, AttackKind, FlipMode, Role};
use crate::federation::audit::AuditLog;
use crate::federation::engine::{EvalSets, Federation, NodeState};
use crate::federation::topology::build_topology;
use crate::metrics::RoundRecord;
use crate::nn;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::{Error, NodeId, Result};

/// Samples to partition across nodes, plus the shared test split.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train_pool: Dataset,
    pub test: Dataset,
}

impl ExperimentData {
    /// Gaussian class clusters sized from the config. The first
    /// `n_nodes * samples_per_node` samples form the pool, the rest the test
    /// split; both are class-balanced.
    pub fn synthetic(cfg: &ExperimentConfig) -> Result<Self> {
        let d = &cfg.dataset;
        let pool = cfg.n_nodes * d.samples_per_node;
        let all = data::synth_blobs(
            pool + d.test_samples,
            d.n_features,
            d.num_classes,
            d.cluster_spread,
            derive_seed(cfg.seed, Stream::Data, 0, 0),
        )?;
        let train_idx: Vec<usize> = (0..pool).collect();
        let test_idx: Vec<usize> = (pool..pool + d.test_samples).collect();
        Ok(ExperimentData {
            train_pool: all.subset(&train_idx),
            test: all.subset(&test_idx),
        })
    }

    /// Draws the pool and the test split from full train/test sets, without
    /// replacement.
    pub fn sample(train: &Dataset, test: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        let pool = cfg.n_nodes * cfg.dataset.samples_per_node;
        if pool > train.len() {
            return Err(Error::config(
                "dataset.samples_per_node",
                format!("n_nodes * samples_per_node <= {} training samples", train.len()),
            ));
        }
        if cfg.dataset.test_samples > test.len() {
            return Err(Error::config(
                "dataset.test_samples",
                format!("at most {} test samples", test.len()),
            ));
        }
        let pick = |n: usize, k: usize, stream: Stream| {
            let mut idx = index::sample(&mut stream_rng(cfg.seed, stream, 0, 0), n, k).into_vec();
            idx.sort_unstable();
            idx
        };
        Ok(ExperimentData {
            train_pool: train.subset(&pick(train.len(), pool, Stream::Data)),
            test: test.subset(&pick(test.len(), cfg.dataset.test_samples, Stream::TestSubset)),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Train nodes concurrently (needs the `parallel` feature).
    pub parallel: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub records: Vec<RoundRecord>,
    pub attackers: BTreeSet<NodeId>,
    /// Mean F1 of benign nodes after each round.
    pub benign_f1_by_round: Vec<f64>,
    pub final_f1: f64,
    /// Mean ASR of benign nodes after the last round, when defined.
    pub final_asr: Option<f64>,
    pub final_edges: Vec<(NodeId, NodeId)>,
    pub audit: AuditLog,
}

/// Partitions the data, assigns roles, poisons attacker data and builds the
/// initial topology.
pub fn setup_federation(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Federation> {
    cfg.validate()?;
    let pool = &data.train_pool;
    let n = cfg.n_nodes;
    if pool.n_features() != data.test.n_features() || pool.num_classes() != data.test.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "test split features",
            expected: pool.n_features(),
            actual: data.test.n_features(),
        });
    }
    if cfg.attack.kind == AttackKind::Backdoor {
        cfg.attack
            .backdoor
            .trigger_pixels(pool.n_features(), pool.num_classes())?;
    }

    let parts = data::dirichlet_partition(
        pool,
        &PartitionConfig {
            n_nodes: n,
            alpha: cfg.partition.alpha,
            val_fraction: cfg.partition.val_fraction,
            seed: derive_seed(cfg.seed, Stream::Partition, 0, 0),
        },
    )?;
    let attackers = select_attackers(
        n,
        cfg.attack.attacker_count(n),
        &mut stream_rng(cfg.seed, Stream::Adversary, 0, 0),
    );
    let arch = cfg.arch(pool.n_features(), pool.num_classes());
    let init = nn::init_model(&arch, derive_seed(cfg.seed, Stream::ModelInit, 0, 0))?;

    let mut nodes = Vec::with_capacity(n);
    for (id, part) in parts.into_iter().enumerate() {
        let (train, val) = data::split_train_val(
            &part,
            cfg.partition.val_fraction,
            derive_seed(cfg.seed, Stream::Split, id as u64, 0),
        )?;
        let role = if attackers.contains(&id) {
            cfg.attack.kind.role()
        } else {
            Role::Benign
        };
        let train = match role {
            Role::LabelFlipper => match cfg.attack.flip_mode {
                FlipMode::Shift => data::flip_labels(&train)?,
                FlipMode::Random => {
                    data::flip_labels_random(&train, derive_seed(cfg.seed, Stream::FlipLabels, id as u64, 0))?
                }
            },
            Role::Backdoorer => data::stamp_backdoor_train(&train, &cfg.attack.backdoor)?,
            _ => train,
        };
        nodes.push(NodeState::new(
            id,
            role,
            train,
            val,
            init.clone(),
            cfg.aggregation.baseline,
        ));
    }

    let backdoor = match cfg.attack.kind {
        AttackKind::Backdoor => Some(data::make_backdoor_testset(&data.test, &cfg.attack.backdoor)?),
        _ => None,
    };
    let eval = EvalSets {
        test: data.test.clone(),
        backdoor,
    };
    Ok(Federation::new(
        cfg.clone(),
        nodes,
        build_topology(cfg.topology, n),
        eval,
    ))
}

pub fn run_experiment(cfg: &ExperimentConfig, data: &ExperimentData, opts: RunOptions) -> Result<ExperimentReport> {
    let mut fed = setup_federation(cfg, data)?;
    fed.set_parallel(opts.parallel);
    let mut records = Vec::with_capacity(cfg.rounds * cfg.n_nodes);
    for _ in 0..cfg.rounds {
        let outcome = fed.run_round()?;
        log::info!(
            "round {}: benign mean f1 {:.4}",
            fed.round(),
            benign_mean(&outcome.records, |r| Some(r.f1)).unwrap_or(f64::NAN)
        );
        records.extend(outcome.records);
    }
    Ok(summarize(
        records,
        fed.attackers(),
        fed.graph().edges(),
        fed.audit().clone(),
    ))
}

fn benign_mean<'a>(
    records: impl IntoIterator<Item = &'a RoundRecord>,
    value: impl Fn(&RoundRecord) -> Option<f64>,
) -> Option<f64> {
    let vals: Vec<f64> = records
        .into_iter()
        .filter(|r| r.role.is_benign())
        .filter_map(value)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Derives the per-round and final summaries from the records.
pub fn summarize(
    records: Vec<RoundRecord>,
    attackers: BTreeSet<NodeId>,
    final_edges: Vec<(NodeId, NodeId)>,
    audit: AuditLog,
) -> ExperimentReport {
    let rounds = records.iter().map(|r| r.round).max().unwrap_or(0);
    let benign_f1_by_round: Vec<f64> = (1..=rounds)
        .map(|k| benign_mean(records.iter().filter(|r| r.round == k), |r| Some(r.f1)).unwrap_or(f64::NAN))
        .collect();
    let final_f1 = benign_f1_by_round.last().copied().unwrap_or(f64::NAN);
    let final_asr = benign_mean(records.iter().filter(|r| r.round == rounds), |r| r.asr);
    ExperimentReport {
        records,
        attackers,
        benign_f1_by_round,
        final_f1,
        final_asr,
        final_edges,
        audit,
    }
}
