//! The aggregation-rule pool. Every rule maps a set of parameter vectors to
//! one vector; only FedAvg uses the contribution weights.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::nn::ParamVector;
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    #[serde(rename = "fedavg")]
    FedAvg,
    Krum,
    Median,
    TrimmedMean,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] = [
        AggregatorKind::FedAvg,
        AggregatorKind::Krum,
        AggregatorKind::Median,
        AggregatorKind::TrimmedMean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregatorKind::FedAvg => "fedavg",
            AggregatorKind::Krum => "krum",
            AggregatorKind::Median => "median",
            AggregatorKind::TrimmedMean => "trimmed_mean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub params: ParamVector,
    pub weight: f64,
}

/// Models offered for aggregation, keyed by contributor, plus the
/// contributors that must be ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregationInput {
    pub contributions: BTreeMap<NodeId, Contribution>,
    pub excluded: BTreeSet<NodeId>,
}

impl AggregationInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, node: NodeId, params: ParamVector, weight: f64) {
        self.contributions.insert(node, Contribution { params, weight });
    }

    pub fn exclude(&mut self, node: NodeId) {
        self.excluded.insert(node);
    }

    /// Non-excluded contributions in ascending node-id order.
    pub fn active(&self) -> Result<Vec<(NodeId, &Contribution)>> {
        let active: Vec<_> = self
            .contributions
            .iter()
            .filter(|(id, _)| !self.excluded.contains(id))
            .map(|(&id, c)| (id, c))
            .collect();
        let Some((_, first)) = active.first() else {
            return Err(Error::NothingToAggregate);
        };
        let len = first.params.len();
        if let Some((_, bad)) = active.iter().find(|(_, c)| c.params.len() != len) {
            return Err(Error::DimensionMismatch {
                what: "contribution length",
                expected: len,
                actual: bad.params.len(),
            });
        }
        Ok(active)
    }
}

/// Weighted mean `sum w_i v_i / sum w_i`.
pub fn fed_avg(input: &AggregationInput) -> Result<ParamVector> {
    let active = input.active()?;
    let total: f64 = active.iter().map(|(_, c)| c.weight).sum();
    if total.is_nan() || total <= 0.0 || active.iter().any(|(_, c)| c.weight < 0.0) {
        return Err(Error::ZeroWeight);
    }
    // Offsets from the first vector keep identical inputs bit-exact.
    let anchor = active[0].1.params.as_slice();
    let mut out = anchor.to_vec();
    for (_, c) in &active[1..] {
        let share = c.weight / total;
        for ((o, &v), &a) in out.iter_mut().zip(c.params.as_slice()).zip(anchor) {
            *o += share * (v - a);
        }
    }
    Ok(ParamVector::new(out))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Default Byzantine budget for `k` contributions: `floor(k / 4)`.
pub fn default_krum_f(k: usize) -> usize {
    k / 4
}

/// Krum: scores each contribution by the summed squared distance to its
/// `k - f - 2` nearest peers and returns the lowest-scoring vector verbatim
/// (lowest node id on ties). `f` defaults to `floor(k / 4)` and is clamped to
/// `k - 3`; with fewer than three contributions this falls back to FedAvg.
pub fn krum(input: &AggregationInput, f: Option<usize>) -> Result<ParamVector> {
    let active = input.active()?;
    let k = active.len();
    if k < 3 {
        log::warn!("krum needs at least 3 contributions, got {k}; falling back to fedavg");
        return fed_avg(input);
    }
    let f = f.unwrap_or_else(|| default_krum_f(k)).min(k - 3);
    let nearest = k - f - 2;
    let mut dist = vec![0.0; k * k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = squared_distance(active[i].1.params.as_slice(), active[j].1.params.as_slice());
            dist[i * k + j] = d;
            dist[j * k + i] = d;
        }
    }
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    let mut row = Vec::with_capacity(k - 1);
    for i in 0..k {
        row.clear();
        row.extend((0..k).filter(|&j| j != i).map(|j| dist[i * k + j]));
        row.sort_by(f64::total_cmp);
        let score: f64 = row[..nearest].iter().sum();
        if score < best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(active[best].1.params.clone())
}

/// Applies `reduce` to the sorted values of every coordinate.
fn per_coordinate(input: &AggregationInput, mut reduce: impl FnMut(&[f64]) -> f64) -> Result<ParamVector> {
    let active = input.active()?;
    let len = active[0].1.params.len();
    let mut column = vec![0.0; active.len()];
    let out = (0..len)
        .map(|i| {
            for (slot, (_, c)) in column.iter_mut().zip(&active) {
                *slot = c.params.as_slice()[i];
            }
            column.sort_by(f64::total_cmp);
            reduce(&column)
        })
        .collect();
    Ok(ParamVector::new(out))
}

/// Coordinate-wise median; the mean of the two middle values for even counts.
pub fn coord_median(input: &AggregationInput) -> Result<ParamVector> {
    per_coordinate(input, |sorted| {
        let k = sorted.len();
        if k % 2 == 1 {
            sorted[k / 2]
        } else {
            let (lo, hi) = (sorted[k / 2 - 1], sorted[k / 2]);
            lo + (hi - lo) / 2.0
        }
    })
}

/// Number of values dropped from each end for `k` values at ratio `beta`,
/// leaving at least one survivor.
pub fn trim_count(k: usize, beta: f64) -> usize {
    (math::floor(beta * k as f64) as usize).min(k.saturating_sub(1) / 2)
}

/// Coordinate-wise mean after dropping `floor(beta k)` values at each end.
pub fn trimmed_mean(input: &AggregationInput, beta: f64) -> Result<ParamVector> {
    if !(0.0..0.5).contains(&beta) {
        return Err(Error::config("aggregation.trim_beta", "a value in [0, 0.5)"));
    }
    let k = input.active()?.len();
    let trim = trim_count(k, beta);
    per_coordinate(input, |sorted| {
        let kept = &sorted[trim..k - trim];
        let base = kept[0];
        let offset: f64 = kept.iter().map(|v| v - base).sum();
        base + offset / kept.len() as f64
    })
}

/// Tuning knobs shared by the rules that need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorParams {
    /// Krum Byzantine budget; `None` means `floor(k / 4)`.
    pub krum_f: Option<usize>,
    pub trim_beta: f64,
}

impl Default for AggregatorParams {
    fn default() -> Self {
        AggregatorParams {
            krum_f: None,
            trim_beta: 0.2,
        }
    }
}

pub fn aggregate(kind: AggregatorKind, input: &AggregationInput, params: &AggregatorParams) -> Result<ParamVector> {
    match kind {
        AggregatorKind::FedAvg => fed_avg(input),
        AggregatorKind::Krum => krum(input, params.krum_f),
        AggregatorKind::Median => coord_median(input),
        AggregatorKind::TrimmedMean => trimmed_mean(input, params.trim_beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(vectors: &[&[f64]], weights: &[f64]) -> AggregationInput {
        let mut inp = AggregationInput::new();
        for (i, (v, &w)) in vectors.iter().zip(weights).enumerate() {
            inp.add(i, ParamVector::new(v.to_vec()), w);
        }
        inp
    }

    fn uniform(vectors: &[&[f64]]) -> AggregationInput {
        input(vectors, &vec![1.0; vectors.len()])
    }

    #[test]
    fn fed_avg_examples() {
        assert_eq!(
            fed_avg(&input(&[&[0.0], &[2.0]], &[1.0, 1.0])).unwrap().as_slice(),
            &[1.0]
        );
        assert_eq!(
            fed_avg(&input(&[&[0.0], &[2.0]], &[3.0, 1.0])).unwrap().as_slice(),
            &[0.5]
        );
        assert_eq!(
            fed_avg(&input(&[&[4.0, -1.0]], &[2.0])).unwrap().as_slice(),
            &[4.0, -1.0]
        );
    }

    #[test]
    fn fed_avg_errors() {
        let mut inp = uniform(&[&[1.0], &[2.0]]);
        inp.exclude(0);
        inp.exclude(1);
        assert_eq!(fed_avg(&inp), Err(Error::NothingToAggregate));
        assert_eq!(fed_avg(&input(&[&[1.0], &[2.0]], &[0.0, 0.0])), Err(Error::ZeroWeight));
        assert!(matches!(
            fed_avg(&uniform(&[&[1.0], &[2.0, 3.0]])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(krum(&AggregationInput::new(), None), Err(Error::NothingToAggregate));
    }

    #[test]
    fn krum_picks_the_central_vector() {
        // scores with 2 nearest peers: 0.05, 0.02, 0.05, >>
        let inp = uniform(&[&[0.0], &[0.1], &[0.2], &[10.0]]);
        assert_eq!(krum(&inp, Some(0)).unwrap().as_slice(), &[0.1]);
    }

    #[test]
    fn krum_identical_inputs_and_small_k() {
        let inp = uniform(&[&[1.5, 2.0], &[1.5, 2.0], &[1.5, 2.0]]);
        assert_eq!(krum(&inp, None).unwrap().as_slice(), &[1.5, 2.0]);
        let two = input(&[&[0.0], &[2.0]], &[1.0, 3.0]);
        assert_eq!(krum(&two, None).unwrap(), fed_avg(&two).unwrap());
    }

    #[test]
    fn median_examples() {
        let inp = uniform(&[&[1.0, 2.0], &[3.0, 4.0], &[100.0, 0.0]]);
        assert_eq!(coord_median(&inp).unwrap().as_slice(), &[3.0, 2.0]);
        assert_eq!(coord_median(&uniform(&[&[1.0], &[3.0]])).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn trimmed_mean_examples() {
        let inp = uniform(&[&[0.0], &[1.0], &[2.0], &[100.0]]);
        assert_eq!(trimmed_mean(&inp, 0.25).unwrap().as_slice(), &[1.5]);
        let inp = uniform(&[&[0.0], &[1.0], &[5.0]]);
        assert_eq!(trimmed_mean(&inp, 0.0).unwrap().as_slice(), &[2.0]);
        assert!(trimmed_mean(&inp, 0.5).is_err());
        assert_eq!(trim_count(2, 0.49), 0);
        assert_eq!(trim_count(10, 0.2), 2);
    }

    #[test]
    fn median_resists_two_outliers_of_five() {
        let inp = uniform(&[&[1.0, -1.0], &[1.2, -0.8], &[0.9, -1.1], &[1e6, 1e6], &[-1e6, 1e9]]);
        let m = coord_median(&inp).unwrap();
        assert!((0.9..=1.2).contains(&m.as_slice()[0]));
        assert!((-1.1..=-0.8).contains(&m.as_slice()[1]));
    }

    #[test]
    fn aggregator_names_round_trip() {
        for k in AggregatorKind::ALL {
            assert_eq!(AggregatorKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(AggregatorKind::parse("bulyan"), None);
    }

    fn vectors(max_k: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, dim), 1..=max_k)
    }

    fn build(vs: &[Vec<f64>], order: &[usize]) -> AggregationInput {
        let mut inp = AggregationInput::new();
        for &i in order {
            inp.add(i, ParamVector::new(vs[i].clone()), 1.0 + i as f64);
        }
        inp
    }

    proptest! {
        #[test]
        fn permutation_invariance(vs in vectors(8, 3), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..vs.len()).collect();
            let a = build(&vs, &order);
            order.shuffle(&mut crate::rng::seeded(seed));
            let b = build(&vs, &order);
            let params = AggregatorParams::default();
            for kind in AggregatorKind::ALL {
                prop_assert_eq!(aggregate(kind, &a, &params).unwrap(), aggregate(kind, &b, &params).unwrap());
            }
        }

        #[test]
        fn identity_input(v in proptest::collection::vec(-5.0f64..5.0, 1..6), k in 1usize..9,
                          weights in proptest::collection::vec(0.1f64..10.0, 9)) {
            let mut inp = AggregationInput::new();
            for (i, &w) in weights.iter().enumerate().take(k) {
                inp.add(i, ParamVector::new(v.clone()), w);
            }
            let params = AggregatorParams::default();
            for kind in AggregatorKind::ALL {
                let out = aggregate(kind, &inp, &params).unwrap();
                prop_assert_eq!(out.as_slice(), v.as_slice());
            }
        }

        #[test]
        fn exclusion_equals_removal(vs in vectors(8, 2), mask in proptest::collection::vec(any::<bool>(), 8)) {
            let ids: Vec<usize> = (0..vs.len()).collect();
            let mut with_excl = build(&vs, &ids);
            let kept: Vec<usize> = ids.iter().copied().filter(|&i| !mask[i]).collect();
            prop_assume!(!kept.is_empty());
            for &i in &ids {
                if mask[i] {
                    with_excl.exclude(i);
                }
            }
            let removed = build(&vs, &kept);
            let params = AggregatorParams::default();
            for kind in AggregatorKind::ALL {
                prop_assert_eq!(aggregate(kind, &with_excl, &params).unwrap(), aggregate(kind, &removed, &params).unwrap());
            }
        }

        #[test]
        fn order_statistics_bounded(vs in vectors(8, 4), beta in 0.0f64..0.49) {
            let inp = build(&vs, &(0..vs.len()).collect::<Vec<_>>());
            let med = coord_median(&inp).unwrap();
            let tm = trimmed_mean(&inp, beta).unwrap();
            for i in 0..4 {
                let col: Vec<f64> = vs.iter().map(|v| v[i]).collect();
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(med.as_slice()[i] >= lo && med.as_slice()[i] <= hi);
                prop_assert!(tm.as_slice()[i] >= lo - 1e-12 && tm.as_slice()[i] <= hi + 1e-12);
            }
        }

        #[test]
        fn krum_output_is_a_member(vs in vectors(10, 3), f in proptest::option::of(0usize..4)) {
            let inp = build(&vs, &(0..vs.len()).collect::<Vec<_>>());
            let out = krum(&inp, f).unwrap();
            if vs.len() >= 3 {
                prop_assert!(vs.iter().any(|v| v.as_slice() == out.as_slice()));
            }
        }
    }
}
