use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::BackdoorConfig;
use crate::math;
use crate::nn::{LayerShape, ParamVector};
use crate::rng::SimRng;
use crate::{Error, NodeId, Result};

/// Fixed for the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Benign,
    LabelFlipper,
    ModelPoisoner,
    Backdoorer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Benign => "benign",
            Role::LabelFlipper => "label_flipper",
            Role::ModelPoisoner => "model_poisoner",
            Role::Backdoorer => "backdoorer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Role::Benign, Role::LabelFlipper, Role::ModelPoisoner, Role::Backdoorer]
            .into_iter()
            .find(|r| r.as_str() == s)
    }

    pub fn is_benign(self) -> bool {
        self == Role::Benign
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    LabelFlipping,
    ModelPoisoning,
    Backdoor,
}

impl AttackKind {
    /// Role given to the selected attackers.
    pub fn role(self) -> Role {
        match self {
            AttackKind::None => Role::Benign,
            AttackKind::LabelFlipping => Role::LabelFlipper,
            AttackKind::ModelPoisoning => Role::ModelPoisoner,
            AttackKind::Backdoor => Role::Backdoorer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// `y -> (y + 1) mod L`
    #[default]
    Shift,
    /// Every label replaced by a different, uniformly drawn one.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryConfig {
    pub kind: AttackKind,
    /// Poisoned node ratio.
    pub pnr: f64,
    /// Share of each layer's entries a model poisoner perturbs.
    pub noise_fraction: f64,
    /// Noise std as a multiple of the layer's own std.
    pub noise_scale: f64,
    pub flip_mode: FlipMode,
    pub backdoor: BackdoorConfig,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            kind: AttackKind::None,
            pnr: 0.0,
            noise_fraction: 0.5,
            noise_scale: 1.0,
            flip_mode: FlipMode::Shift,
            backdoor: BackdoorConfig::default(),
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pnr) {
            return Err(Error::config("attack.pnr", "a value in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::config("attack.noise_fraction", "a value in [0, 1]"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::config("attack.noise_scale", "a finite value >= 0"));
        }
        Ok(())
    }

    pub fn attacker_count(&self, n: usize) -> usize {
        if self.kind == AttackKind::None {
            0
        } else {
            attacker_count(n, self.pnr)
        }
    }
}

/// `round(pnr * n)`
pub fn attacker_count(n: usize, pnr: f64) -> usize {
    (math::round(pnr * n as f64) as usize).min(n)
}

/// `count` distinct ids from `0..n`, uniformly without replacement.
pub fn select_attackers(n: usize, count: usize, rng: &mut SimRng) -> BTreeSet<NodeId> {
    index::sample(rng, n, count.min(n)).into_iter().collect()
}

/// Adds `Normal(0, (noise_scale * s)^2)` noise to `round(noise_fraction *
/// len)` uniformly chosen entries of every layer (weights and bias together),
/// where `s` is the population std of that layer's entries.
pub fn poison_params(
    params: &ParamVector,
    layers: &[LayerShape],
    cfg: &AdversaryConfig,
    rng: &mut SimRng,
) -> Result<ParamVector> {
    let total: usize = layers.iter().map(|s| s.range().len()).sum();
    if total != params.len() {
        return Err(Error::DimensionMismatch {
            what: "poisoned parameter vector",
            expected: total,
            actual: params.len(),
        });
    }
    let mut out: Vec<f64> = params.as_slice().to_vec();
    for shape in layers {
        let layer = &mut out[shape.range()];
        let len = layer.len();
        let count = (math::round(cfg.noise_fraction * len as f64) as usize).min(len);
        let mean = layer.iter().sum::<f64>() / len as f64;
        let var = layer.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
        let sigma = cfg.noise_scale * math::sqrt(var);
        let chosen = index::sample(rng, len, count);
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).map_err(|_| Error::NonFinite("poison noise"))?;
            for i in chosen {
                layer[i] += noise.sample(rng);
            }
        }
    }
    Ok(ParamVector::new(out))
}
