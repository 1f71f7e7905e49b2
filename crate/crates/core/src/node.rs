//! Per-component runtime engine and the durable tier it talks to.
//!
//! A [`Node`] consumes envelopes from its partition, runs invocations through
//! the program's base transitions and emits request and response envelopes.
//! Everything a node keeps is volatile and disappears with its component;
//! everything in [`Cluster`] (log, placement store, actor state, parking lot)
//! survives.
//!
//! `Cluster::flow` is bookkeeping for projecting the deployment onto the
//! oracle's runtime state. Nodes write it but never read it.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fabric::{Body, ComponentId, Envelope, Fabric, Membership, ProcessId, Status};
use crate::oracle::{hash_parts, Bag, BagEntry, Flow, Message, Process, RequestId, RuntimeState};
use crate::placement::{choose_host, lookup, CachePolicy, PlacementCache, PlacementStore, DEFAULT_CACHE_CAPACITY};
use crate::semantics::{
    enabled_transitions, ActorRef, BaseTransition, PersistentState, SharedProgram, Term, Value,
};
use crate::trace::{Event, Record};

pub const DEFAULT_INVOKE_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_QUANTUM_MS: u64 = 100;

/// How far a node runs an invocation in one scheduler step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Until the process suspends on a synchronous call, ends or tail-calls.
    #[default]
    Suspension,
    /// One base transition.
    Transition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub quantum_ms: u64,
    pub invoke_timeout_ms: u64,
    pub cache_capacity: usize,
    pub cache_policy: CachePolicy,
    pub granularity: Granularity,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            quantum_ms: DEFAULT_QUANTUM_MS,
            invoke_timeout_ms: DEFAULT_INVOKE_TIMEOUT_MS,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            cache_policy: CachePolicy::Arc,
            granularity: Granularity::Suspension,
        }
    }
}

/// A request no capable component could take yet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parked {
    pub envelope: Envelope,
    pub deadline_ms: u64,
}

/// The durable tier plus run-wide bookkeeping.
#[derive(Clone)]
pub struct Cluster {
    pub program: SharedProgram,
    pub config: RuntimeConfig,
    pub fabric: Fabric,
    pub store: PlacementStore,
    pub state: PersistentState,
    pub parked: BTreeMap<u64, Parked>,
    pub next_id: u64,
    pub rng: ChaCha8Rng,
    pub flow: Flow,
    pub step: u64,
    pub records: Vec<Record>,
}

impl Cluster {
    pub fn new(program: SharedProgram, config: RuntimeConfig, fabric: Fabric, rng: ChaCha8Rng) -> Self {
        Cluster {
            program,
            config,
            fabric,
            store: PlacementStore::new(),
            state: PersistentState::new(),
            parked: BTreeMap::new(),
            next_id: 0,
            rng,
            flow: Flow::default(),
            step: 0,
            records: Vec::new(),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.fabric.now_ms
    }

    pub fn emit(&mut self, event: Event) {
        self.records.push(Record { step: self.step, t_ms: self.fabric.now_ms, event });
    }

    pub fn project(&self, bag: Bag) -> RuntimeState {
        RuntimeState { flow: self.flow.clone(), bag, state: self.state.clone(), next_id: self.next_id }
    }

    /// Hash of `project(bag)` for any bag whose digest is `bag_digest`.
    pub fn projection_hash(&self, bag_digest: u128) -> String {
        hash_parts(self.flow.digest(), bag_digest, self.state.digest(), self.next_id)
    }

    pub fn fresh_id(&mut self) -> u64 {
        let n = self.next_id;
        self.next_id += 1;
        n
    }

    /// Appends and records the event.
    pub fn append(&mut self, by: Option<&ComponentId>, partition: usize, mut envelope: Envelope) -> Option<u64> {
        envelope.epoch = self.fabric.membership().epoch;
        envelope.sent_at_ms = self.fabric.now_ms;
        let result = if self.fabric.frozen {
            self.fabric.append_unfrozen(partition, envelope.clone())
        } else {
            self.fabric.append(partition, envelope.clone())
        };
        match result {
            Ok(offset) => {
                self.emit(Event::Append { by: by.cloned(), partition, offset, envelope });
                Some(offset)
            }
            Err(e) => {
                self.emit(Event::Anomaly { message: format!("append to partition {partition} failed: {e}") });
                None
            }
        }
    }

    /// Member that can host `actor` now: its recorded placement if that is a
    /// member, else a fresh compare-and-swap onto a capable member.
    pub fn resolve_host(
        &mut self,
        by: Option<&ComponentId>,
        cache: Option<&mut PlacementCache>,
        actor: &ActorRef,
    ) -> Option<ComponentId> {
        let is_member = |f: &Fabric, c: &ComponentId| f.membership().live.contains_key(c);
        let mut cache = cache;
        let cached = match cache.as_deref_mut() {
            Some(c) => lookup(&mut self.store, c, actor),
            None => self.store.get(actor),
        };
        if let Some(c) = &cached {
            if is_member(&self.fabric, c) {
                return cached;
            }
        }
        let recorded = if cache.is_some() && cached.is_some() {
            if let Some(c) = cache.as_deref_mut() {
                c.invalidate(actor);
            }
            self.store.get(actor)
        } else {
            cached
        };
        if let Some(c) = &recorded {
            if is_member(&self.fabric, c) {
                if let Some(cache) = cache {
                    cache.insert(actor.clone(), c.clone());
                }
                return recorded;
            }
        }
        let candidate = {
            let members: Vec<_> = self.fabric.members().cloned().collect();
            choose_host(actor.type_name(), &members, &mut self.rng).cloned()
        }?;
        let out = self.store.place(actor, &candidate, recorded.as_ref()).ok()?;
        self.emit(Event::Place {
            by: by.cloned(),
            actor: actor.clone(),
            component: out.won.clone(),
            installed: out.installed,
            version: out.version,
        });
        if let Some(cache) = cache {
            cache.insert(actor.clone(), out.won.clone());
        }
        is_member(&self.fabric, &out.won).then_some(out.won)
    }

    /// Sends a request envelope to the host of its target, parking it when no
    /// capable component exists. Returns whether it was appended.
    pub fn route(&mut self, by: Option<&ProcessId>, cache: Option<&mut PlacementCache>, mut envelope: Envelope) -> bool {
        let by_c = by.map(|p| p.component.clone());
        envelope.sender = by.cloned();
        match self.resolve_host(by_c.as_ref(), cache, &envelope.target.clone()) {
            Some(host) => {
                let partition = self.fabric.partition_of(&host).expect("members have partitions");
                self.append(by_c.as_ref(), partition, envelope).is_some()
            }
            None => {
                self.park(envelope);
                false
            }
        }
    }

    pub fn park(&mut self, envelope: Envelope) {
        let deadline_ms = self.fabric.now_ms + self.config.invoke_timeout_ms;
        self.emit(Event::Park { request: envelope.request.clone(), deadline_ms });
        self.parked.insert(envelope.request.n, Parked { envelope, deadline_ms });
    }

    /// Partition where a response or completion record for `proc` goes.
    fn response_partition(&self, origin: Option<&ProcessId>, executor: &ComponentId) -> Option<usize> {
        match origin {
            Some(o) if self.fabric.membership().is_live(o) => self.fabric.partition_of(&o.component),
            _ => self.fabric.partition_of(executor),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Proceed,
    Drop,
}

/// Drop a synchronous request whose caller's component membership has
/// declared gone. Reads nothing but the local membership view.
pub fn cancellation_check(envelope: &Envelope, membership: &Membership) -> Verdict {
    match &envelope.origin {
        Some(origin) if envelope.request.is_sync() && !membership.is_live(origin) => Verdict::Drop,
        _ => Verdict::Proceed,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalProc {
    pub request: RequestId,
    pub generation: u32,
    pub origin: Option<ProcessId>,
    pub process: Process,
    /// Response delivered to a guarded process, not yet consumed.
    pub response: Option<Value>,
    /// No transition applies; the process waits forever.
    pub blocked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeAction {
    Poll,
    Begin(ActorRef),
    Run(ActorRef),
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: ProcessId,
    pub cache: PlacementCache,
    pub procs: BTreeMap<ActorRef, LocalProc>,
    /// The projection of `procs`, kept in step with it.
    entries: Bag,
    /// Requests for a locally placed actor that is busy, oldest first.
    pub pending: BTreeMap<ActorRef, VecDeque<Envelope>>,
    pub crashed: bool,
}

impl Node {
    pub fn new(id: ProcessId, config: &RuntimeConfig) -> Self {
        Node {
            id,
            cache: PlacementCache::new(config.cache_policy, config.cache_capacity),
            procs: BTreeMap::new(),
            entries: Bag::new(),
            pending: BTreeMap::new(),
            crashed: false,
        }
    }

    pub fn component(&self) -> &ComponentId {
        &self.id.component
    }

    pub fn bag(&self) -> &Bag {
        &self.entries
    }

    /// Re-projects one actor's process after `procs` changed.
    fn sync_entry(&mut self, actor: &ActorRef) {
        match self.procs.get(actor) {
            Some(p) => {
                let e = BagEntry { request: p.request.clone(), process: p.process.clone() };
                if self.entries.get(actor) != Some(&e) {
                    self.entries.insert(actor.clone(), e);
                }
            }
            None => {
                self.entries.remove(actor);
            }
        }
    }

    /// Loses every process.
    pub fn clear_procs(&mut self) {
        self.procs.clear();
        self.entries.clear();
    }

    fn runnable(&self, actor: &ActorRef) -> bool {
        self.procs.get(actor).is_some_and(|p| !p.blocked && match p.process {
            Process::Running(_) => true,
            Process::Guarded { .. } => p.response.is_some(),
        })
    }

    /// What this node could do next, in canonical order.
    pub fn actions(&self, fabric: &Fabric) -> Vec<NodeAction> {
        let live = fabric.component(self.component()).is_some_and(|c| c.status == Status::Live && c.incarnation == self.id.incarnation);
        if self.crashed || !live {
            return Vec::new();
        }
        let mut out = Vec::new();
        if fabric.has_undelivered(self.component()) {
            out.push(NodeAction::Poll);
        }
        for (actor, q) in &self.pending {
            if !q.is_empty() && !self.procs.contains_key(actor) {
                out.push(NodeAction::Begin(actor.clone()));
            }
        }
        for actor in self.procs.keys() {
            if self.runnable(actor) {
                out.push(NodeAction::Run(actor.clone()));
            }
        }
        out
    }

    /// `others` is the digest of the projected bag of every other component.
    pub fn perform(&mut self, action: &NodeAction, cx: &mut Cluster, others: u128) {
        match action {
            NodeAction::Poll => {
                if let Ok(Some((offset, env))) = cx.fabric.poll(&self.id.component) {
                    let partition = cx.fabric.partition_of(&self.id.component).expect("live node has a partition");
                    cx.emit(Event::Poll { component: self.id.component.clone(), partition, offset });
                    self.handle_envelope(env, cx);
                }
            }
            NodeAction::Begin(actor) => self.begin(actor, cx, others),
            NodeAction::Run(actor) => self.run(actor, cx, others),
        }
    }

    fn hash(&self, cx: &Cluster, others: u128) -> String {
        cx.projection_hash(others.wrapping_add(self.entries.digest()))
    }

    fn choose(&mut self, cx: &mut Cluster, term: &Term, actor: &ActorRef) -> Option<BaseTransition> {
        match enabled_transitions(cx.program.as_ref(), term, cx.state.get(actor)) {
            Ok(mut ts) if !ts.is_empty() => {
                let i = if ts.len() == 1 { 0 } else { cx.rng.gen_range(0..ts.len()) };
                Some(ts.swap_remove(i))
            }
            Ok(_) => {
                if let Some(p) = self.procs.get_mut(actor) {
                    p.blocked = true;
                }
                None
            }
            Err(e) => {
                cx.emit(Event::Anomaly { message: format!("{}: {e}", self.id) });
                None
            }
        }
    }

    /// Reacts to one polled envelope.
    pub fn handle_envelope(&mut self, env: Envelope, cx: &mut Cluster) {
        match &env.body {
            Body::Request(_) => {
                let placed = cx.store.peek(&env.target).map(|p| p.component.clone());
                if placed.as_ref() == Some(&self.id.component) {
                    self.pending.entry(env.target.clone()).or_default().push_back(env);
                } else {
                    self.reject(env, placed, cx);
                }
            }
            // completion records of asynchronous requests
            Body::Response(_) if !env.request.is_sync() => {}
            Body::Response(v) => {
                let waiting = self.procs.values_mut().find(|p| {
                    p.response.is_none()
                        && matches!(&p.process, Process::Guarded { waiting_on, .. } if waiting_on.n == env.request.n)
                });
                match waiting {
                    Some(p) => p.response = Some(v.clone()),
                    None => cx.emit(Event::Ignore {
                        component: self.id.component.clone(),
                        request: env.request.clone(),
                        reason: "no process waiting".into(),
                    }),
                }
            }
            Body::RejectNotice(inv) => {
                self.cache.invalidate(&inv.actor);
                let resend = Envelope { body: Body::Request(inv.clone()), ..env };
                cx.route(Some(&self.id), Some(&mut self.cache), resend);
            }
            Body::Rejected | Body::Settled => {}
        }
    }

    /// Misrouted copy: leave a tombstone and make sure someone resends it.
    fn reject(&mut self, env: Envelope, placed_on: Option<ComponentId>, cx: &mut Cluster) {
        let Body::Request(inv) = env.body.clone() else { return };
        cx.emit(Event::Reject {
            component: self.id.component.clone(),
            request: env.request.clone(),
            generation: env.generation,
            placed_on,
        });
        let own = cx.fabric.partition_of(&self.id.component).expect("live node has a partition");
        let tomb = Envelope { body: Body::Rejected, sender: Some(self.id.clone()), ..env.clone() };
        cx.append(Some(&self.id.component), own, tomb);
        match &env.sender {
            Some(s) if s != &self.id && cx.fabric.membership().is_live(s) => {
                let p = cx.fabric.partition_of(&s.component).expect("members have partitions");
                let notice = Envelope { body: Body::RejectNotice(inv), ..env.clone() };
                cx.append(Some(&self.id.component), p, notice);
            }
            _ => {
                self.cache.invalidate(&env.target);
                cx.route(Some(&self.id), Some(&mut self.cache), env);
            }
        }
    }

    fn begin(&mut self, actor: &ActorRef, cx: &mut Cluster, others: u128) {
        let Some(env) = self.pending.get_mut(actor).and_then(VecDeque::pop_front) else { return };
        if self.pending.get(actor).is_some_and(VecDeque::is_empty) {
            self.pending.remove(actor);
        }
        let Body::Request(inv) = &env.body else { return };
        if cancellation_check(&env, cx.fabric.membership()) == Verdict::Drop {
            cx.emit(Event::Drop { component: self.id.component.clone(), request: env.request.clone() });
            return;
        }
        let Some(t) = self.choose(cx, &Term::Invocation(inv.clone()), actor) else { return };
        let BaseTransition::Begin { to, .. } = &t else { return };
        let pre = self.hash(cx, others);
        self.procs.insert(
            actor.clone(),
            LocalProc {
                request: env.request.clone(),
                generation: env.generation,
                origin: env.origin.clone(),
                process: Process::Running(to.clone()),
                response: None,
                blocked: false,
            },
        );
        self.sync_entry(actor);
        let post = self.hash(cx, others);
        cx.emit(Event::Rule { component: self.id.component.clone(), request: env.request, transition: t, pre, post });
        if cx.config.granularity == Granularity::Suspension {
            self.run(actor, cx, others);
        }
    }

    fn run(&mut self, actor: &ActorRef, cx: &mut Cluster, others: u128) {
        // bounded so a looping program cannot hang the scheduler
        for _ in 0..10_000 {
            if !self.runnable(actor) || !self.step_proc(actor, cx, others) {
                return;
            }
            if cx.config.granularity == Granularity::Transition {
                return;
            }
        }
        cx.emit(Event::Anomaly { message: format!("{}: {actor} did not suspend", self.id) });
    }

    /// Applies one base transition to the actor's process.
    fn step_proc(&mut self, actor: &ActorRef, cx: &mut Cluster, others: u128) -> bool {
        let p = self.procs.get(actor).expect("runnable process").clone();
        let term = match (&p.process, &p.response) {
            (Process::Running(seq), _) => Term::seq(actor, seq.clone()),
            (Process::Guarded { seq, .. }, Some(v)) => Term::sync_nest(Term::Result(v.clone()), Term::seq(actor, seq.clone())),
            _ => return false,
        };
        let Some(t) = self.choose(cx, &term, actor) else { return false };
        let pre = self.hash(cx, others);
        let me = self.id.clone();
        let mut outgoing: Option<Envelope> = None;
        let mut reply: Option<Envelope> = None;
        match &t {
            BaseTransition::Step { to, after, .. } => {
                self.set_running(actor, to.clone());
                match after {
                    Some(v) => cx.state.insert(actor.clone(), v.clone()),
                    None => cx.state.remove(actor),
                };
            }
            BaseTransition::End { value, .. } => {
                self.procs.remove(actor);
                cx.flow.insert(p.request.clone(), Message::Response(value.clone()));
                reply = Some(Envelope {
                    request: p.request.clone(),
                    generation: p.generation,
                    body: Body::Response(value.clone()),
                    target: actor.clone(),
                    origin: p.origin.clone(),
                    sender: Some(me.clone()),
                    epoch: 0,
                    sent_at_ms: 0,
                });
            }
            BaseTransition::SyncCall { call, to, .. } => {
                let id = RequestId::new_sync(cx.fresh_id(), actor.clone(), p.request.n);
                cx.flow.insert(id.clone(), Message::Request(call.clone()));
                let proc = self.procs.get_mut(actor).expect("running process");
                proc.process = Process::Guarded { waiting_on: id.clone(), seq: to.clone() };
                proc.response = None;
                outgoing = Some(request_envelope(id, 0, call.clone(), Some(me.clone())));
            }
            BaseTransition::TailCall { call, .. } => {
                self.procs.remove(actor);
                cx.flow.insert(p.request.clone(), Message::Request(call.clone()));
                outgoing = Some(request_envelope(p.request.clone(), p.generation + 1, call.clone(), p.origin.clone()));
            }
            BaseTransition::AsyncCall { call, to, .. } => {
                let id = RequestId::new_async(cx.fresh_id());
                cx.flow.insert(id.clone(), Message::Request(call.clone()));
                self.set_running(actor, to.clone());
                outgoing = Some(request_envelope(id, 0, call.clone(), None));
            }
            BaseTransition::Return { to, .. } => {
                if let Process::Guarded { waiting_on, .. } = &p.process {
                    cx.flow.remove(waiting_on);
                }
                self.set_running(actor, to.clone());
            }
            BaseTransition::Begin { .. } => return false,
        }
        self.sync_entry(actor);
        let post = self.hash(cx, others);
        cx.emit(Event::Rule { component: me.component.clone(), request: p.request.clone(), transition: t, pre, post });
        if let Some(env) = outgoing {
            cx.route(Some(&me), Some(&mut self.cache), env);
        }
        if let Some(env) = reply {
            if let Some(partition) = cx.response_partition(env.origin.as_ref(), &me.component) {
                cx.append(Some(&me.component), partition, env);
            }
        }
        true
    }

    fn set_running(&mut self, actor: &ActorRef, seq: crate::semantics::SeqPoint) {
        let proc = self.procs.get_mut(actor).expect("running process");
        proc.process = Process::Running(seq);
        proc.response = None;
    }
}

fn request_envelope(request: RequestId, generation: u32, call: crate::semantics::Invocation, origin: Option<ProcessId>) -> Envelope {
    Envelope {
        request,
        generation,
        target: call.actor.clone(),
        body: Body::Request(call),
        origin,
        sender: None,
        epoch: 0,
        sent_at_ms: 0,
    }
}

/// Builds the first request envelope of a run.
pub fn bootstrap_envelope(request: RequestId, call: crate::semantics::Invocation) -> Envelope {
    request_envelope(request, 0, call, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::FabricConfig;
    use crate::semantics::Invocation;

    fn pid(c: &str) -> ProcessId {
        ProcessId { component: ComponentId::new(c), incarnation: 0 }
    }

    fn sync_env(origin: ProcessId) -> Envelope {
        let f = ActorRef::of("Fork", "f");
        Envelope {
            origin: Some(origin),
            ..request_envelope(
                RequestId::new_sync(3, ActorRef::of("Philosopher", "p"), 0),
                0,
                Invocation::new(f, "take", Value::Int(42)),
                None,
            )
        }
    }

    #[test]
    fn cancellation_follows_detected_membership() {
        let mut fabric = Fabric::new(FabricConfig::default());
        for c in ["a", "b"] {
            fabric.join(ComponentId::new(c), Default::default()).unwrap();
        }
        let env = sync_env(pid("a"));
        assert_eq!(cancellation_check(&env, fabric.membership()), Verdict::Proceed);
        fabric.fail(&ComponentId::new("a")).unwrap();
        // not yet detected: still proceeds
        assert_eq!(cancellation_check(&env, fabric.membership()), Verdict::Proceed);
        fabric.advance_to(fabric.config.grace_ms);
        assert_eq!(cancellation_check(&env, fabric.membership()), Verdict::Drop);
    }

    #[test]
    fn stale_incarnation_is_cancelled() {
        let mut fabric = Fabric::new(FabricConfig::default());
        fabric.join(ComponentId::new("a"), Default::default()).unwrap();
        fabric.fail(&ComponentId::new("a")).unwrap();
        fabric.advance_to(fabric.config.grace_ms);
        fabric.join(ComponentId::new("a"), Default::default()).unwrap();
        assert_eq!(cancellation_check(&sync_env(pid("a")), fabric.membership()), Verdict::Drop);
    }

    #[test]
    fn async_requests_always_proceed() {
        let fabric = Fabric::new(FabricConfig::default());
        let env = request_envelope(
            RequestId::new_async(1),
            0,
            Invocation::new(ActorRef::of("Fork", "f"), "take", Value::Int(42)),
            None,
        );
        assert_eq!(cancellation_check(&env, fabric.membership()), Verdict::Proceed);
    }

    #[test]
    fn defaults() {
        let c = RuntimeConfig::default();
        assert_eq!(c.invoke_timeout_ms, 30_000);
        assert_eq!(c.cache_capacity, 1024);
        assert_eq!(c.granularity, Granularity::Suspension);
    }
}
