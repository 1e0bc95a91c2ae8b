use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    #[default]
    Fully,
    Ring,
    Star,
}

impl TopologyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Fully => "fully",
            TopologyKind::Ring => "ring",
            TopologyKind::Star => "star",
        }
    }
}

/// Undirected, self-loop-free graph over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    adj: Vec<BTreeSet<NodeId>>,
}

impl TopologyGraph {
    pub fn empty(n: usize) -> Self {
        TopologyGraph {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, node: NodeId) -> &BTreeSet<NodeId> {
        &self.adj[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adj[node].len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adj.get(a).is_some_and(|s| s.contains(&b))
    }

    /// Adds the edge `a - b`. Self-loops and unknown ids are ignored.
    pub fn connect(&mut self, a: NodeId, b: NodeId) -> bool {
        if a == b || a >= self.n() || b >= self.n() {
            return false;
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a)
    }

    pub fn disconnect(&mut self, a: NodeId, b: NodeId) -> bool {
        if a >= self.n() || b >= self.n() {
            return false;
        }
        self.adj[a].remove(&b);
        self.adj[b].remove(&a)
    }

    /// Edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.range(a + 1..).map(move |&b| (a, b)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Symmetric adjacency, no self-loops, ids in range.
    pub fn is_consistent(&self) -> bool {
        self.adj
            .iter()
            .enumerate()
            .all(|(a, s)| s.iter().all(|&b| b != a && b < self.n() && self.adj[b].contains(&a)))
    }
}

pub fn build_topology(kind: TopologyKind, n: usize) -> TopologyGraph {
    let mut g = TopologyGraph::empty(n);
    match kind {
        TopologyKind::Fully => {
            for a in 0..n {
                for b in a + 1..n {
                    g.connect(a, b);
                }
            }
        }
        TopologyKind::Ring => {
            for a in 0..n {
                g.connect(a, (a + 1) % n);
            }
        }
        TopologyKind::Star => {
            for b in 1..n {
                g.connect(0, b);
            }
        }
    }
    g
}
