//! Topology, adversaries and the round engine.

mod adversary;
mod audit;
mod engine;
mod experiment;
mod topology;

pub use adversary::{attacker_count, poison_params, select_attackers, AdversaryConfig, AttackKind, FlipMode, Role};
pub use audit::{AccessEvent, Actor, AuditLog, Guarded, ResourceKind};
pub use engine::{EvalSets, Federation, NodeState, RoundOutcome};
pub use experiment::{run_experiment, setup_federation, summarize, ExperimentData, ExperimentReport, RunOptions};
pub use topology::{build_topology, TopologyGraph, TopologyKind};
