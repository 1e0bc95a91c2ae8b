//! Experiment configuration. Every section rejects unknown keys and fills
//! missing ones with defaults; only `dataset` is required.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::aggregate::{AggregatorKind, AggregatorParams};
use crate::dbscan::DbscanConfig;
use crate::federation::{AdversaryConfig, AttackKind, TopologyKind};
use crate::metrics::F1Average;
use crate::mtd::MtdConfig;
use crate::nn::OptimizerConfig;
use crate::reputation::SimilarityMetric;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Synthetic,
    Mnist,
    Fashionmnist,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashionmnist => "fashionmnist",
        }
    }
}

/// Written either as a bare kind (`"synthetic"`) or as a full object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Directory holding the IDX files; falls back to `$DFLMTD_DATA_DIR/<kind>`.
    pub dir: Option<String>,
    pub samples_per_node: usize,
    /// Size of the shared test split every node is evaluated on.
    pub test_samples: usize,
    /// Synthetic data only.
    pub n_features: usize,
    pub num_classes: usize,
    pub cluster_spread: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Synthetic,
            dir: None,
            samples_per_node: 600,
            test_samples: 1000,
            n_features: 784,
            num_classes: 10,
            cluster_spread: 1.0,
        }
    }
}

#[derive(Deserialize)]
#[serde(field_identifier, rename_all = "snake_case")]
enum DatasetKindOnly {
    Synthetic,
    Mnist,
    Fashionmnist,
}

fn deserialize_dataset<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<DatasetConfig, D::Error> {
    struct V;
    impl<'de> Visitor<'de> for V {
        type Value = DatasetConfig;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a dataset kind (synthetic, mnist, fashionmnist) or a dataset object")
        }

        fn visit_str<E: de::Error>(self, s: &str) -> core::result::Result<DatasetConfig, E> {
            let kind = DatasetKindOnly::deserialize(de::value::StrDeserializer::<E>::new(s))?;
            let kind = match kind {
                DatasetKindOnly::Synthetic => DatasetKind::Synthetic,
                DatasetKindOnly::Mnist => DatasetKind::Mnist,
                DatasetKindOnly::Fashionmnist => DatasetKind::Fashionmnist,
            };
            Ok(DatasetConfig {
                kind,
                ..DatasetConfig::default()
            })
        }

        fn visit_map<A: MapAccess<'de>>(self, map: A) -> core::result::Result<DatasetConfig, A::Error> {
            DatasetConfig::deserialize(de::value::MapAccessDeserializer::new(map))
        }
    }
    d.deserialize_any(V)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub alpha: f64,
    pub val_fraction: f64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        PartitionSection {
            alpha: 0.5,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: vec![256, 128] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Each contribution weighted by its owner's training-set size.
    #[default]
    DataSize,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    /// Rule used by every node that is not running dynamic aggregation.
    pub baseline: AggregatorKind,
    pub krum_f: Option<usize>,
    pub trim_beta: f64,
    pub weighting: Weighting,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        let p = AggregatorParams::default();
        AggregationConfig {
            baseline: AggregatorKind::FedAvg,
            krum_f: p.krum_f,
            trim_beta: p.trim_beta,
            weighting: Weighting::DataSize,
        }
    }
}

impl AggregationConfig {
    pub fn params(&self) -> AggregatorParams {
        AggregatorParams {
            krum_f: self.krum_f,
            trim_beta: self.trim_beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationConfig {
    pub eps: f64,
    pub min_pts: usize,
    pub normalize_loss: bool,
    pub metric: SimilarityMetric,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        let d = DbscanConfig::default();
        ReputationConfig {
            eps: d.eps,
            min_pts: d.min_pts,
            normalize_loss: d.normalize_loss,
            metric: SimilarityMetric::Cosine,
        }
    }
}

impl ReputationConfig {
    pub fn dbscan(&self) -> DbscanConfig {
        DbscanConfig {
            eps: self.eps,
            min_pts: self.min_pts,
            normalize_loss: self.normalize_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub f1_average: F1Average,
}

fn default_nodes() -> usize {
    10
}

fn default_rounds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "deserialize_dataset")]
    pub dataset: DatasetConfig,
    #[serde(default = "default_nodes")]
    pub n_nodes: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub topology: TopologyKind,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: OptimizerConfig,
    #[serde(default)]
    pub attack: AdversaryConfig,
    #[serde(default)]
    pub aggregation: AggregationConfig,
    #[serde(default)]
    pub mtd: MtdConfig,
    #[serde(default)]
    pub reputation: ReputationConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetConfig) -> Self {
        ExperimentConfig {
            dataset,
            n_nodes: default_nodes(),
            rounds: default_rounds(),
            seed: 0,
            topology: TopologyKind::default(),
            partition: PartitionSection::default(),
            model: ModelConfig::default(),
            training: OptimizerConfig::default(),
            attack: AdversaryConfig::default(),
            aggregation: AggregationConfig::default(),
            mtd: MtdConfig::default(),
            reputation: ReputationConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    /// `[n_features, hidden.., num_classes]`.
    pub fn arch(&self, n_features: usize, num_classes: usize) -> Vec<usize> {
        let mut arch = vec![n_features];
        arch.extend(&self.model.hidden);
        arch.push(num_classes);
        arch
    }

    /// Checks every precondition that does not depend on loaded data.
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::config("n_nodes", "an integer >= 2"));
        }
        if self.rounds < 1 {
            return Err(Error::config("rounds", "an integer >= 1"));
        }
        let d = &self.dataset;
        if d.samples_per_node < 2 {
            return Err(Error::config("dataset.samples_per_node", "an integer >= 2"));
        }
        if d.test_samples < 1 {
            return Err(Error::config("dataset.test_samples", "an integer >= 1"));
        }
        if d.kind == DatasetKind::Synthetic {
            if d.n_features < 1 {
                return Err(Error::config("dataset.n_features", "an integer >= 1"));
            }
            if d.num_classes < 2 {
                return Err(Error::config("dataset.num_classes", "an integer >= 2"));
            }
            if !(d.cluster_spread >= 0.0 && d.cluster_spread.is_finite()) {
                return Err(Error::config("dataset.cluster_spread", "a finite value >= 0"));
            }
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::config("model.hidden", "layer widths >= 1"));
        }
        if !(self.partition.alpha > 0.0 && self.partition.alpha.is_finite()) {
            return Err(Error::config("partition.alpha", "a finite value > 0"));
        }
        if !(self.partition.val_fraction > 0.0 && self.partition.val_fraction < 1.0) {
            return Err(Error::config("partition.val_fraction", "a value in (0, 1)"));
        }
        self.training.validate()?;
        self.attack.validate()?;
        if self.attack.attacker_count(self.n_nodes) >= self.n_nodes {
            return Err(Error::config("attack.pnr", "a ratio leaving at least one benign node"));
        }
        if self.attack.kind == AttackKind::Backdoor && d.kind == DatasetKind::Synthetic {
            self.attack.backdoor.trigger_pixels(d.n_features, d.num_classes)?;
        }
        if !(0.0..0.5).contains(&self.aggregation.trim_beta) {
            return Err(Error::config("aggregation.trim_beta", "a value in [0, 0.5)"));
        }
        self.mtd.validate()?;
        self.reputation.dbscan().validate()?;
        Ok(())
    }
}
