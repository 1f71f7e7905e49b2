//! Partitioned, append-only message log with consumer offsets and a
//! heartbeat-based membership.
//!
//! The fabric never fails: records survive every component failure until
//! their partition is purged. A component failure is only observed by
//! membership once the heartbeat grace period has elapsed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::FabricError;
use crate::oracle::RequestId;
use crate::semantics::{ActorRef, Invocation, Value};

pub const DEFAULT_GRACE_MS: u64 = 10_000;
pub const DEFAULT_SCAN_WINDOW_MS: u64 = 600_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub String);

impl ComponentId {
    pub fn new(id: impl Into<String>) -> Self {
        ComponentId(id.into())
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One incarnation of a component. A component that fails and rejoins under
/// the same id gets a new incarnation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcessId {
    pub component: ComponentId,
    pub incarnation: u32,
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.component, self.incarnation)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    Request(Invocation),
    Response(Value),
    /// Tombstone written by a receiver that rejected a misrouted copy.
    Rejected,
    /// Tells the sender its copy was misrouted; carries what to resend.
    RejectNotice(Invocation),
    /// Written by reconciliation when the evidence settling a request is purged.
    Settled,
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::Request(_) => "request",
            Body::Response(_) => "response",
            Body::Rejected => "rejected",
            Body::RejectNotice(_) => "reject-notice",
            Body::Settled => "settled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Envelope {
    pub request: RequestId,
    /// Bumped by each tail call under the same request id.
    pub generation: u32,
    pub body: Body,
    pub target: ActorRef,
    /// Process of the synchronous caller waiting on this request.
    pub origin: Option<ProcessId>,
    /// Process that appended the envelope; `None` for bootstrap and reconciliation.
    pub sender: Option<ProcessId>,
    pub epoch: u64,
    pub sent_at_ms: u64,
}

impl fmt::Display for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} g{} {} {}", self.request, self.generation, self.body.kind(), self.target)?;
        match &self.body {
            Body::Request(inv) | Body::RejectNotice(inv) => write!(f, " {inv}")?,
            Body::Response(v) => write!(f, " = {v}")?,
            Body::Rejected | Body::Settled => {}
        }
        if let Some(o) = &self.origin {
            write!(f, " origin={o}")?;
        }
        if let Some(s) = &self.sender {
            write!(f, " sender={s}")?;
        }
        write!(f, " epoch={} t={}ms", self.epoch, self.sent_at_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub index: usize,
    pub records: Vec<Envelope>,
    /// Next offset to deliver to the consumer.
    pub committed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Live,
    /// Crashed but not yet detected by membership.
    Crashed,
    Failed,
    Removed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    pub actor_types: BTreeSet<String>,
    pub status: Status,
    pub incarnation: u32,
    pub crashed_at_ms: Option<u64>,
}

impl Component {
    pub fn process(&self) -> ProcessId {
        ProcessId { component: self.id.clone(), incarnation: self.incarnation }
    }

    pub fn can_host(&self, actor_type: &str) -> bool {
        self.actor_types.contains(actor_type)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub epoch: u64,
    /// Members and their incarnations, as observed through heartbeats.
    pub live: BTreeMap<ComponentId, u32>,
    pub assignment: BTreeMap<ComponentId, usize>,
    pub dangling: BTreeSet<usize>,
}

impl Membership {
    pub fn is_live(&self, p: &ProcessId) -> bool {
        self.live.get(&p.component) == Some(&p.incarnation)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricConfig {
    pub grace_ms: u64,
    pub scan_window_ms: u64,
    /// Most recent records per partition a scan considers.
    pub scan_window_count: Option<usize>,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig { grace_ms: DEFAULT_GRACE_MS, scan_window_ms: DEFAULT_SCAN_WINDOW_MS, scan_window_count: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScanEntry {
    pub partition: usize,
    pub offset: u64,
    pub envelope: Envelope,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fabric {
    pub config: FabricConfig,
    pub now_ms: u64,
    pub frozen: bool,
    partitions: BTreeMap<usize, Partition>,
    free: BTreeSet<usize>,
    components: BTreeMap<ComponentId, Component>,
    membership: Membership,
}

impl Fabric {
    pub fn new(config: FabricConfig) -> Self {
        Fabric {
            config,
            now_ms: 0,
            frozen: false,
            partitions: BTreeMap::new(),
            free: BTreeSet::new(),
            components: BTreeMap::new(),
            membership: Membership::default(),
        }
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    pub fn component(&self, id: &ComponentId) -> Option<&Component> {
        self.components.get(id)
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.components.values()
    }

    /// Components membership currently believes are live, crashed ones included
    /// until their failure is detected.
    pub fn members(&self) -> impl Iterator<Item = &Component> {
        self.components.values().filter(|c| self.membership.live.get(&c.id) == Some(&c.incarnation))
    }

    pub fn partition(&self, index: usize) -> Option<&Partition> {
        self.partitions.get(&index)
    }

    pub fn partitions(&self) -> impl Iterator<Item = &Partition> {
        self.partitions.values()
    }

    pub fn partition_of(&self, id: &ComponentId) -> Option<usize> {
        self.membership.assignment.get(id).copied()
    }

    pub fn append(&mut self, partition: usize, envelope: Envelope) -> Result<u64, FabricError> {
        if self.frozen {
            return Err(FabricError::Frozen);
        }
        self.append_unfrozen(partition, envelope)
    }

    /// Append used by reconciliation, the only writer during a freeze.
    pub(crate) fn append_unfrozen(&mut self, partition: usize, envelope: Envelope) -> Result<u64, FabricError> {
        let p = self.partitions.get_mut(&partition).ok_or(FabricError::NoPartition(partition))?;
        p.records.push(envelope);
        Ok(p.records.len() as u64 - 1)
    }

    fn consumer_partition(&self, id: &ComponentId) -> Result<usize, FabricError> {
        if self.frozen {
            return Err(FabricError::Frozen);
        }
        let c = self.components.get(id).ok_or_else(|| FabricError::UnknownComponent(id.to_string()))?;
        if c.status != Status::Live {
            return Err(FabricError::Unassigned(id.to_string()));
        }
        self.partition_of(id).ok_or_else(|| FabricError::Unassigned(id.to_string()))
    }

    /// Next undelivered envelope on the component's partition.
    pub fn poll(&mut self, id: &ComponentId) -> Result<Option<(u64, Envelope)>, FabricError> {
        let index = self.consumer_partition(id)?;
        let p = self.partitions.get_mut(&index).ok_or(FabricError::NoPartition(index))?;
        let Some(env) = p.records.get(p.committed as usize) else { return Ok(None) };
        let out = (p.committed, env.clone());
        p.committed += 1;
        Ok(Some(out))
    }

    pub fn has_undelivered(&self, id: &ComponentId) -> bool {
        self.consumer_partition(id)
            .ok()
            .and_then(|i| self.partitions.get(&i))
            .is_some_and(|p| (p.committed as usize) < p.records.len())
    }

    fn allocate_partition(&mut self) -> usize {
        let index = match self.free.pop_first() {
            Some(i) => i,
            None => self.partitions.keys().chain(self.membership.dangling.iter()).max().map_or(0, |m| m + 1),
        };
        self.partitions.insert(index, Partition { index, records: Vec::new(), committed: 0 });
        index
    }

    /// Adds a component, or a new incarnation of one that failed or left.
    pub fn join(&mut self, id: ComponentId, actor_types: BTreeSet<String>) -> Result<&Membership, FabricError> {
        let incarnation = match self.components.get(&id) {
            Some(c) if matches!(c.status, Status::Live | Status::Crashed) => {
                return Err(FabricError::AlreadyMember(id.to_string()));
            }
            Some(c) => c.incarnation + 1,
            None => 0,
        };
        let index = self.allocate_partition();
        self.components.insert(
            id.clone(),
            Component { id: id.clone(), actor_types, status: Status::Live, incarnation, crashed_at_ms: None },
        );
        self.membership.live.insert(id.clone(), incarnation);
        self.membership.assignment.insert(id, index);
        self.membership.epoch += 1;
        Ok(&self.membership)
    }

    fn remove_member(&mut self, id: &ComponentId, status: Status) {
        if let Some(c) = self.components.get_mut(id) {
            c.status = status;
        }
        self.membership.live.remove(id);
        if let Some(index) = self.membership.assignment.remove(id) {
            self.membership.dangling.insert(index);
        }
        self.membership.epoch += 1;
    }

    /// Graceful departure, observed immediately.
    pub fn leave(&mut self, id: &ComponentId) -> Result<&Membership, FabricError> {
        match self.components.get(id).map(|c| c.status) {
            Some(Status::Live) => {
                self.remove_member(id, Status::Removed);
                Ok(&self.membership)
            }
            Some(_) => Ok(&self.membership),
            None => Err(FabricError::UnknownComponent(id.to_string())),
        }
    }

    /// The component stops; membership notices after the grace period.
    pub fn fail(&mut self, id: &ComponentId) -> Result<&Membership, FabricError> {
        let now = self.now_ms;
        let c = self.components.get_mut(id).ok_or_else(|| FabricError::UnknownComponent(id.to_string()))?;
        if c.status == Status::Live {
            c.status = Status::Crashed;
            c.crashed_at_ms = Some(now);
        }
        Ok(&self.membership)
    }

    /// Simulated time at which the earliest undetected crash will be observed.
    pub fn next_detection_ms(&self) -> Option<u64> {
        self.components
            .values()
            .filter(|c| c.status == Status::Crashed)
            .filter_map(|c| c.crashed_at_ms)
            .map(|t| t + self.config.grace_ms)
            .min()
    }

    /// Advances the clock and returns the components whose missed heartbeats
    /// exceeded the grace period, in id order.
    pub fn advance_to(&mut self, now_ms: u64) -> Vec<ComponentId> {
        self.now_ms = self.now_ms.max(now_ms);
        let due: Vec<ComponentId> = self
            .components
            .values()
            .filter(|c| c.status == Status::Crashed)
            .filter(|c| c.crashed_at_ms.is_some_and(|t| t + self.config.grace_ms <= self.now_ms))
            .map(|c| c.id.clone())
            .collect();
        for id in &due {
            self.remove_member(id, Status::Failed);
        }
        due
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn resume(&mut self) {
        self.frozen = false;
    }

    /// Recent envelopes across every partition, dangling ones included,
    /// ordered by partition then offset.
    pub fn scan_recent(&self) -> Result<Vec<ScanEntry>, FabricError> {
        if !self.frozen {
            return Err(FabricError::NotFrozen);
        }
        let mut out = Vec::new();
        for p in self.partitions.values() {
            let skip = self.config.scan_window_count.map_or(0, |n| p.records.len().saturating_sub(n));
            for (offset, env) in p.records.iter().enumerate().skip(skip) {
                if self.now_ms.saturating_sub(env.sent_at_ms) <= self.config.scan_window_ms {
                    out.push(ScanEntry { partition: p.index, offset: offset as u64, envelope: env.clone() });
                }
            }
        }
        Ok(out)
    }

    pub fn purge(&mut self, index: usize) -> Result<(), FabricError> {
        if self.membership.assignment.values().any(|i| *i == index) {
            return Err(FabricError::StillAssigned(index));
        }
        if !self.membership.dangling.remove(&index) {
            return Err(FabricError::NoPartition(index));
        }
        self.partitions.remove(&index);
        self.free.insert(index);
        Ok(())
    }

    /// Human-readable listing of membership, partitions and records.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let m = &self.membership;
        let _ = writeln!(out, "time {}ms{}", self.now_ms, if self.frozen { " (frozen)" } else { "" });
        let _ = writeln!(out, "membership epoch {}", m.epoch);
        for c in self.components.values() {
            let types: Vec<&str> = c.actor_types.iter().map(String::as_str).collect();
            let part = m.assignment.get(&c.id).map_or("-".to_string(), |i| i.to_string());
            let _ = writeln!(
                out,
                "  component {} incarnation {} {:?} partition {} types [{}]",
                c.id,
                c.incarnation,
                c.status,
                part,
                types.join(", ")
            );
        }
        let dangling: Vec<String> = m.dangling.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "  dangling [{}]", dangling.join(", "));
        for p in self.partitions.values() {
            let _ = writeln!(out, "partition {} committed {} records {}", p.index, p.committed, p.records.len());
            for (offset, env) in p.records.iter().enumerate() {
                let _ = writeln!(out, "  {offset:>4} {env}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(n: u64, t: u64) -> Envelope {
        Envelope {
            request: RequestId::new_async(n),
            generation: 0,
            body: Body::Request(Invocation::new(ActorRef::of("Fork", "f"), "take", Value::Int(42))),
            target: ActorRef::of("Fork", "f"),
            origin: None,
            sender: None,
            epoch: 0,
            sent_at_ms: t,
        }
    }

    fn types() -> BTreeSet<String> {
        ["Fork".to_string()].into()
    }

    fn three() -> Fabric {
        let mut f = Fabric::new(FabricConfig::default());
        for c in ["a", "b", "c"] {
            f.join(ComponentId::new(c), types()).unwrap();
        }
        f
    }

    #[test]
    fn defaults_match_heartbeat_and_scan_settings() {
        let c = FabricConfig::default();
        assert_eq!(c.grace_ms, 10_000);
        assert_eq!(c.scan_window_ms, 600_000);
    }

    #[test]
    fn append_then_poll_in_order() {
        let mut f = three();
        let a = ComponentId::new("a");
        let p = f.partition_of(&a).unwrap();
        assert_eq!(f.append(p, env(1, 0)).unwrap(), 0);
        assert_eq!(f.append(p, env(2, 0)).unwrap(), 1);
        assert_eq!(f.poll(&a).unwrap().unwrap().1.request.n, 1);
        assert_eq!(f.poll(&a).unwrap().unwrap().1.request.n, 2);
        assert_eq!(f.poll(&a).unwrap(), None);
        // consuming does not discard
        assert_eq!(f.partition(p).unwrap().records.len(), 2);
    }

    #[test]
    fn frozen_fabric_refuses_traffic() {
        let mut f = three();
        f.freeze();
        assert_eq!(f.append(0, env(1, 0)), Err(FabricError::Frozen));
        assert_eq!(f.poll(&ComponentId::new("a")), Err(FabricError::Frozen));
        f.resume();
        assert!(f.scan_recent().is_err());
    }

    #[test]
    fn failure_is_observed_after_grace() {
        let mut f = three();
        assert_eq!(f.membership().epoch, 3);
        assert_eq!(f.membership().assignment.len(), 3);
        f.now_ms = 1_000;
        f.fail(&ComponentId::new("b")).unwrap();
        assert!(f.advance_to(10_999).is_empty());
        assert_eq!(f.membership().epoch, 3);
        assert_eq!(f.advance_to(11_000), vec![ComponentId::new("b")]);
        assert_eq!(f.membership().epoch, 4);
        assert_eq!(f.membership().dangling.len(), 1);
    }

    #[test]
    fn purge_frees_index_for_reuse() {
        let mut f = three();
        let b = ComponentId::new("b");
        let pb = f.partition_of(&b).unwrap();
        f.append(pb, env(1, 0)).unwrap();
        assert_eq!(f.purge(pb), Err(FabricError::StillAssigned(pb)));
        f.leave(&b).unwrap();
        f.purge(pb).unwrap();
        f.freeze();
        assert!(f.scan_recent().unwrap().iter().all(|e| e.partition != pb));
        f.resume();
        f.join(ComponentId::new("d"), types()).unwrap();
        assert_eq!(f.partition_of(&ComponentId::new("d")), Some(pb));
    }

    #[test]
    fn scan_window_excludes_old_records() {
        let mut f = three();
        f.append(0, env(1, 0)).unwrap();
        f.append(0, env(2, 700_000)).unwrap();
        f.advance_to(800_000);
        f.freeze();
        let scan = f.scan_recent().unwrap();
        assert_eq!(scan.len(), 1);
        assert_eq!(scan[0].envelope.request.n, 2);
    }

    #[test]
    fn rejoin_gets_new_incarnation_and_partition() {
        let mut f = three();
        let a = ComponentId::new("a");
        f.fail(&a).unwrap();
        assert!(f.join(a.clone(), types()).is_err());
        f.advance_to(DEFAULT_GRACE_MS);
        f.join(a.clone(), types()).unwrap();
        assert_eq!(f.component(&a).unwrap().incarnation, 1);
        assert_eq!(f.partition_of(&a), Some(3));
    }
}
