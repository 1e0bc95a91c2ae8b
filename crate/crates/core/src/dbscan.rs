//! DBSCAN over scalar values.
//!
//! In one dimension the eps-neighborhood of a point is an interval, so the
//! whole clustering reduces to a sort and a sweep. Noise points become
//! singleton clusters, which keeps "number of clusters" meaningful for the
//! threshold logic.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanConfig {
    /// Neighborhood radius (the "sensitivity").
    pub eps: f64,
    /// Neighbors (self included) required for a core point.
    pub min_pts: usize,
    /// Scale losses into `[0, 1]` (by the largest loss) before clustering.
    pub normalize_loss: bool,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        DbscanConfig {
            eps: 0.1,
            min_pts: 1,
            normalize_loss: true,
        }
    }
}

impl DbscanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("reputation.eps", "a finite value > 0"));
        }
        if self.min_pts < 1 {
            return Err(Error::config("reputation.min_pts", "an integer >= 1"));
        }
        Ok(())
    }
}

/// Cluster label per input point. Labels are dense and ordered by the
/// smallest member of each cluster. Border points join the cluster of their
/// nearest core point (the lower one on ties).
pub fn dbscan_1d(points: &[f64], cfg: &DbscanConfig) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();

    // neighbor counts via a sliding window over the sorted values
    let mut core = vec![false; n];
    let (mut lo, mut hi) = (0, 0);
    for i in 0..n {
        while sorted[i] - sorted[lo] > cfg.eps {
            lo += 1;
        }
        if hi < i {
            hi = i;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[i] <= cfg.eps {
            hi += 1;
        }
        core[i] = hi - lo + 1 >= cfg.min_pts;
    }

    // consecutive core points within eps share a cluster
    const UNSET: usize = usize::MAX;
    let mut cluster = vec![UNSET; n];
    let mut next = 0;
    let mut prev_core: Option<usize> = None;
    for i in 0..n {
        if !core[i] {
            continue;
        }
        match prev_core {
            Some(p) if sorted[i] - sorted[p] <= cfg.eps => cluster[i] = cluster[p],
            _ => {
                cluster[i] = next;
                next += 1;
            }
        }
        prev_core = Some(i);
    }

    // border points: nearest core within eps; otherwise noise
    let core_idx: Vec<usize> = (0..n).filter(|&i| core[i]).collect();
    for i in 0..n {
        if core[i] {
            continue;
        }
        let pos = core_idx.partition_point(|&c| sorted[c] < sorted[i]);
        let below = pos.checked_sub(1).map(|p| core_idx[p]);
        let above = core_idx.get(pos).copied();
        let dist = |c: usize| (sorted[i] - sorted[c]).abs();
        let nearest = match (below, above) {
            (Some(b), Some(a)) => Some(if dist(a) < dist(b) { a } else { b }),
            (b, a) => b.or(a),
        };
        cluster[i] = match nearest {
            Some(c) if dist(c) <= cfg.eps => cluster[c],
            _ => {
                next += 1;
                next - 1
            }
        };
    }

    // relabel by ascending cluster minimum: first appearance in sorted order
    let mut rename = vec![UNSET; next];
    let mut dense = 0;
    let mut labels = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        let c = cluster[pos];
        if rename[c] == UNSET {
            rename[c] = dense;
            dense += 1;
        }
        labels[orig] = rename[c];
    }
    labels
}

pub fn cluster_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// `(min, max)` of the values in each cluster, indexed by label.
pub fn cluster_bounds(values: &[f64], labels: &[usize]) -> Vec<(f64, f64)> {
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); cluster_count(labels)];
    for (&v, &l) in values.iter().zip(labels) {
        bounds[l].0 = bounds[l].0.min(v);
        bounds[l].1 = bounds[l].1.max(v);
    }
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(eps: f64, min_pts: usize) -> DbscanConfig {
        DbscanConfig {
            eps,
            min_pts,
            normalize_loss: true,
        }
    }

    /// Union-find over every pair of core points within eps, brute force.
    fn oracle(points: &[f64], eps: f64, min_pts: usize) -> Vec<usize> {
        let n = points.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        let near = |i: usize, j: usize| (points[i] - points[j]).abs() <= eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
            .collect();
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && near(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut root: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        for i in 0..n {
            if core[i] {
                continue;
            }
            let best = (0..n).filter(|&j| core[j] && near(i, j)).min_by(|&a, &b| {
                let (da, db) = ((points[i] - points[a]).abs(), (points[i] - points[b]).abs());
                da.total_cmp(&db).then(points[a].total_cmp(&points[b]))
            });
            if let Some(c) = best {
                root[i] = root[c];
            }
        }
        root
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn examples() {
        assert_eq!(dbscan_1d(&[0.10, 0.12, 0.90], &cfg(0.05, 1)), vec![0, 0, 1]);
        assert_eq!(dbscan_1d(&[0.5, 0.55, 0.6, 0.65], &cfg(0.06, 1)), vec![0, 0, 0, 0]);
        assert!(dbscan_1d(&[], &cfg(0.1, 1)).is_empty());
        // labels follow cluster minima, not input order
        assert_eq!(dbscan_1d(&[0.9, 0.1, 0.5], &cfg(0.05, 1)), vec![2, 0, 1]);
    }

    #[test]
    fn noise_points_are_singletons() {
        let labels = dbscan_1d(&[0.0, 0.01, 0.02, 0.5, 1.0], &cfg(0.05, 3));
        assert_eq!(labels, vec![0, 0, 0, 1, 2]);
    }

    #[test]
    fn border_point_joins_nearest_core() {
        // 0.0 is a border point of the core cluster 0.06..0.1
        let pts = [0.0, 0.06, 0.08, 0.1, 0.3];
        let labels = dbscan_1d(&pts, &cfg(0.06, 3));
        assert!(same_partition(&labels, &oracle(&pts, 0.06, 3)));
        assert_eq!(labels[0], labels[1]);
    }

    #[test]
    fn oracle_agreement_exhaustive_eps_grid() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(42);
        for eps in [0.01, 0.1, 0.5] {
            for _ in 0..1000 {
                let n = rng.random_range(0..=12);
                let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let labels = dbscan_1d(&pts, &cfg(eps, 1));
                assert!(same_partition(&labels, &oracle(&pts, eps, 1)), "{pts:?} eps {eps}");
            }
        }
    }

    proptest! {
        #[test]
        fn matches_oracle_any_min_pts(
            pts in proptest::collection::vec(-1.0f64..1.0, 0..12),
            eps in prop_oneof![Just(0.01), Just(0.1), Just(0.5), 0.001f64..1.0],
            min_pts in 1usize..5,
        ) {
            let labels = dbscan_1d(&pts, &cfg(eps, min_pts));
            prop_assert!(same_partition(&labels, &oracle(&pts, eps, min_pts)));
        }

        #[test]
        fn labels_dense_and_ordered_by_minimum(pts in proptest::collection::vec(-1.0f64..1.0, 1..12), eps in 0.001f64..0.5) {
            let labels = dbscan_1d(&pts, &cfg(eps, 1));
            let bounds = cluster_bounds(&pts, &labels);
            prop_assert!(bounds.iter().all(|b| b.0 <= b.1));
            prop_assert!(bounds.windows(2).all(|w| w[0].0 < w[1].0));
        }

        #[test]
        fn permutation_invariant(pts in proptest::collection::vec(-1.0f64..1.0, 1..12), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut crate::rng::seeded(seed));
            let shuffled: Vec<f64> = perm.iter().map(|&i| pts[i]).collect();
            let a = dbscan_1d(&pts, &cfg(0.1, 1));
            let b = dbscan_1d(&shuffled, &cfg(0.1, 1));
            let a_perm: Vec<usize> = perm.iter().map(|&i| a[i]).collect();
            prop_assert!(same_partition(&a_perm, &b));
        }

        #[test]
        fn larger_eps_never_adds_clusters(pts in proptest::collection::vec(-1.0f64..1.0, 1..12), e1 in 0.001f64..0.5, extra in 0.0f64..0.5) {
            let fine = cluster_count(&dbscan_1d(&pts, &cfg(e1, 1)));
            let coarse = cluster_count(&dbscan_1d(&pts, &cfg(e1 + extra, 1)));
            prop_assert!(coarse <= fine);
        }
    }
}
