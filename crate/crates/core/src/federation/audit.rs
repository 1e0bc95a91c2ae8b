//! Access log for per-node private state. Every read of a node's training
//! data, validation data or reputation state goes through [`Guarded`], which
//! records who read what, so a run can be checked against the threat model
//! afterwards.

use alloc::vec::Vec;

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Actor {
    /// Experiment setup and evaluation harness.
    Coordinator,
    Node(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ResourceKind {
    TrainData,
    ValData,
    Reputation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessEvent {
    pub round: usize,
    pub reader: Actor,
    pub owner: NodeId,
    pub resource: ResourceKind,
}

impl AccessEvent {
    /// A node touching another node's private state.
    pub fn is_violation(&self) -> bool {
        matches!(self.reader, Actor::Node(r) if r != self.owner)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditLog {
    events: Vec<AccessEvent>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, event: AccessEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[AccessEvent] {
        &self.events
    }

    pub fn extend(&mut self, other: AuditLog) {
        self.events.extend(other.events);
    }

    pub fn violations(&self) -> Vec<AccessEvent> {
        self.events.iter().copied().filter(AccessEvent::is_violation).collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Private state owned by one node.
#[derive(Debug, Clone)]
pub struct Guarded<T> {
    owner: NodeId,
    kind: ResourceKind,
    value: T,
}

impl<T> Guarded<T> {
    pub fn new(owner: NodeId, kind: ResourceKind, value: T) -> Self {
        Guarded { owner, kind, value }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn read(&self, reader: Actor, round: usize, log: &mut AuditLog) -> &T {
        self.log(reader, round, log);
        &self.value
    }

    pub fn write(&mut self, writer: Actor, round: usize, log: &mut AuditLog, value: T) {
        self.log(writer, round, log);
        self.value = value;
    }

    fn log(&self, reader: Actor, round: usize, log: &mut AuditLog) {
        log.record(AccessEvent {
            round,
            reader,
            owner: self.owner,
            resource: self.kind,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn foreign_reads_are_violations() {
        let g = Guarded::new(3, ResourceKind::TrainData, 7u8);
        let mut log = AuditLog::new();
        assert_eq!(*g.read(Actor::Node(3), 1, &mut log), 7);
        g.read(Actor::Coordinator, 0, &mut log);
        assert!(log.violations().is_empty());
        g.read(Actor::Node(1), 2, &mut log);
        let v = log.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].reader, Actor::Node(1));
        assert_eq!(v[0].owner, 3);
        assert_eq!(log.len(), 3);
    }
}
