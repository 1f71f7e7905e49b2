//! The distributed runtime semantics: rewriting rules over a flow of
//! requests, a bag of running processes and the persistent state.
//!
//! Every `apply_*` function is pure and returns a new [`RuntimeState`].
//! [`enabled_runtime_moves`] enumerates every applicable rule instance and is
//! what schedulers and the explorer drive.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::digest::{sha256_of, DigestMap};
use crate::error::SemanticsError;
use crate::semantics::{
    enabled_transitions, ActorRef, BaseTransition, Invocation, PersistentState, Program, SeqPoint, Term,
    TransitionKind, Value,
};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Async,
    /// Carries the caller's actor and request so validity is a local check.
    Sync { caller: ActorRef, caller_req: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId {
    pub n: u64,
    pub mode: Mode,
}

impl RequestId {
    pub fn new_async(n: u64) -> Self {
        RequestId { n, mode: Mode::Async }
    }

    pub fn new_sync(n: u64, caller: ActorRef, caller_req: u64) -> Self {
        RequestId { n, mode: Mode::Sync { caller, caller_req } }
    }

    pub fn is_sync(&self) -> bool {
        matches!(self.mode, Mode::Sync { .. })
    }

    pub fn caller(&self) -> Option<(&ActorRef, u64)> {
        match &self.mode {
            Mode::Sync { caller, caller_req } => Some((caller, *caller_req)),
            Mode::Async => None,
        }
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.is_sync() { '+' } else { '-' };
        write!(f, "#{}{}", self.n, sign)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Message {
    Request(Invocation),
    Response(Value),
}

impl Message {
    pub fn is_response(&self) -> bool {
        matches!(self, Message::Response(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Running(SeqPoint),
    Guarded { waiting_on: RequestId, seq: SeqPoint },
}

impl Process {
    pub fn seq(&self) -> &SeqPoint {
        match self {
            Process::Running(s) | Process::Guarded { seq: s, .. } => s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BagEntry {
    pub request: RequestId,
    pub process: Process,
}

pub type Bag = DigestMap<ActorRef, BagEntry>;

/// Request ids to messages. Serialized as a list because ids are not strings.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Flow(DigestMap<RequestId, Message>);

impl Flow {
    pub fn get(&self, id: &RequestId) -> Option<&Message> {
        self.0.get(id)
    }

    pub fn contains(&self, id: &RequestId) -> bool {
        self.0.contains_key(id)
    }

    /// Any entry with number `n`, whatever its mode.
    pub fn by_number(&self, n: u64) -> Option<(&RequestId, &Message)> {
        // ids order by number first, and `Async` is the least mode
        self.0.range(RequestId::new_async(n)..).next().filter(|(id, _)| id.n == n)
    }

    pub fn digest(&self) -> u128 {
        self.0.digest()
    }

    pub fn recomputed_digest(&self) -> u128 {
        self.0.recomputed_digest()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RequestId, &Message)> {
        self.0.iter()
    }

    /// The entry with the highest number.
    pub fn last(&self) -> Option<(&RequestId, &Message)> {
        self.0.last_key_value()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn insert(&mut self, id: RequestId, msg: Message) -> Option<Message> {
        self.0.insert(id, msg)
    }

    pub fn remove(&mut self, id: &RequestId) -> Option<Message> {
        self.0.remove(id)
    }
}

impl Serialize for Flow {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for Flow {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(RequestId, Message)>::deserialize(d)?;
        Ok(Flow(pairs.into_iter().collect()))
    }
}

/// One write a rule makes; `None` removes the entry.
#[derive(Clone, Debug)]
enum Edit {
    Fresh,
    Flow(RequestId, Option<Message>),
    Bag(ActorRef, Option<BagEntry>),
    State(ActorRef, Option<Value>),
}

type Edits = Vec<Edit>;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuntimeState {
    pub flow: Flow,
    pub bag: Bag,
    pub state: PersistentState,
    /// Next fresh request number; ids are never reused within a run.
    pub next_id: u64,
}

/// SHA-256 of a structural encoding, first 16 hex digits.
pub fn canonical_hash<T: Hash + ?Sized>(value: &T) -> String {
    hex16(&sha256_of(value))
}

fn hex16(d: &[u8; 32]) -> String {
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Hash of a state from the digests of its parts. Equal to
/// [`RuntimeState::hash`] of a state whose maps have these digests.
pub fn hash_parts(flow: u128, bag: u128, state: u128, next_id: u64) -> String {
    hex16(&sha256_of(&(flow, bag, state, next_id)))
}

pub fn initial_state(program: &dyn Program) -> RuntimeState {
    initial_state_from(program, 0)
}

/// Initial state whose main request is numbered `first_id`.
pub fn initial_state_from(program: &dyn Program, first_id: u64) -> RuntimeState {
    let mut flow = Flow::default();
    flow.insert(RequestId::new_async(first_id), Message::Request(program.main_invocation()));
    RuntimeState { flow, bag: Bag::new(), state: PersistentState::new(), next_id: first_id + 1 }
}

/// Cached validity: the caller named in the id is still guarded on it.
pub fn valid(id: &RequestId, bag: &Bag) -> bool {
    match &id.mode {
        Mode::Async => true,
        Mode::Sync { caller, caller_req } => bag.get(caller).is_some_and(|e| {
            e.request.n == *caller_req && matches!(&e.process, Process::Guarded { waiting_on, .. } if waiting_on == id)
        }),
    }
}

/// Validity as a quantification over the bag.
pub fn valid_quantified(id: &RequestId, bag: &Bag) -> bool {
    !id.is_sync()
        || bag.values().any(|e| matches!(&e.process, Process::Guarded { waiting_on, .. } if waiting_on == id))
}

/// The term fragment a bag entry exposes to the program, if any rule could apply.
pub fn process_fragment(actor: &ActorRef, entry: &BagEntry, flow: &Flow) -> Option<Term> {
    match &entry.process {
        Process::Running(seq) => Some(Term::seq(actor, seq.clone())),
        Process::Guarded { waiting_on, seq } => match flow.get(waiting_on) {
            Some(Message::Response(v)) => Some(Term::sync_nest(Term::Result(v.clone()), Term::seq(actor, seq.clone()))),
            _ => None,
        },
    }
}

fn mismatch(t: &BaseTransition) -> SemanticsError {
    SemanticsError::NoMatchingTransition(t.to_string())
}

impl RuntimeState {
    pub fn hash(&self) -> String {
        hash_parts(self.flow.digest(), self.bag.digest(), self.state.digest(), self.next_id)
    }

    /// Whether every maintained digest matches its contents.
    pub fn digests_exact(&self) -> bool {
        self.flow.digest() == self.flow.recomputed_digest()
            && self.bag.digest() == self.bag.recomputed_digest()
            && self.state.digest() == self.state.recomputed_digest()
    }

    /// The fresh number an [`Edit::Fresh`] would claim.
    fn fresh(&self) -> Result<u64, SemanticsError> {
        let n = self.next_id;
        if self.flow.by_number(n).is_some() {
            return Err(SemanticsError::IdCollision(n));
        }
        Ok(n)
    }

    fn running(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<(&BagEntry, &SeqPoint), SemanticsError> {
        let entry = self.bag.get(actor).ok_or_else(|| SemanticsError::NoProcess(actor.clone()))?;
        match &entry.process {
            Process::Running(seq) if chosen.actor() == actor && chosen.from_seq() == Some(seq) => Ok((entry, seq)),
            _ => Err(mismatch(chosen)),
        }
    }

    fn expect_kind(chosen: &BaseTransition, kind: TransitionKind) -> Result<(), SemanticsError> {
        if chosen.kind() == kind {
            Ok(())
        } else {
            Err(mismatch(chosen))
        }
    }

    /// (begin). The request stays in the flow so it can be retried.
    pub fn apply_begin(&self, id: &RequestId, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.begin_edits(id, chosen)?))
    }

    /// (begin) without the validity side condition. Only for mutation testing.
    pub fn apply_begin_unchecked(&self, id: &RequestId, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.begin_unchecked_edits(id, chosen)?))
    }

    pub fn apply_step(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.step_edits(actor, chosen)?))
    }

    /// (end). Removes the process and answers its request atomically.
    pub fn apply_end(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.end_edits(actor, chosen)?))
    }

    pub fn apply_sync_call(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.sync_call_edits(actor, chosen)?))
    }

    /// (tail-call). Replaces the request under the same id and ends the process.
    pub fn apply_tail_call(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.tail_call_edits(actor, chosen)?))
    }

    pub fn apply_async_call(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.async_call_edits(actor, chosen)?))
    }

    /// (return). Consumes the response and resumes the guarded caller.
    pub fn apply_return(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.return_edits(actor, chosen)?))
    }

    /// (failure). No precondition; flow and persistent state are untouched.
    pub fn apply_failure(&self, actor: &ActorRef) -> RuntimeState {
        self.edited(self.failure_edits(actor))
    }

    /// Extension: a request no component could ever start is answered with an
    /// error value, as an invocation timeout does.
    pub fn apply_timeout(&self, id: &RequestId) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.timeout_edits(id)?))
    }

    fn edited(&self, edits: Edits) -> RuntimeState {
        let mut next = self.clone();
        next.apply_edits(edits);
        next
    }

    fn apply_edits(&mut self, edits: Edits) {
        for e in edits {
            match e {
                Edit::Fresh => self.next_id += 1,
                Edit::Flow(id, Some(m)) => drop(self.flow.insert(id, m)),
                Edit::Flow(id, None) => drop(self.flow.remove(&id)),
                Edit::Bag(a, Some(e)) => drop(self.bag.insert(a, e)),
                Edit::Bag(a, None) => drop(self.bag.remove(&a)),
                Edit::State(a, Some(v)) => drop(self.state.insert(a, v)),
                Edit::State(a, None) => drop(self.state.remove(&a)),
            }
        }
    }

    fn begin_edits(&self, id: &RequestId, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        if !valid(id, &self.bag) {
            return Err(SemanticsError::InvalidRequest(id.n));
        }
        self.begin_unchecked_edits(id, chosen)
    }

    fn begin_unchecked_edits(&self, id: &RequestId, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        Self::expect_kind(chosen, TransitionKind::Begin)?;
        let BaseTransition::Begin { call, to } = chosen else { unreachable!() };
        match self.flow.get(id) {
            Some(Message::Request(inv)) if inv == call => {}
            Some(Message::Request(_)) => return Err(mismatch(chosen)),
            Some(Message::Response(_)) => return Err(SemanticsError::AlreadyResponded(id.n)),
            None => return Err(SemanticsError::NotPending(id.n)),
        }
        if self.bag.contains_key(&call.actor) {
            return Err(SemanticsError::Busy(call.actor.clone()));
        }
        Ok(vec![Edit::Bag(call.actor.clone(), Some(BagEntry { request: id.clone(), process: Process::Running(to.clone()) }))])
    }

    fn step_edits(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        Self::expect_kind(chosen, TransitionKind::Step)?;
        let (entry, _) = self.running(actor, chosen)?;
        let BaseTransition::Step { before, to, after, .. } = chosen else { unreachable!() };
        if self.state.get(actor) != before.as_ref() {
            return Err(SemanticsError::GuardMismatch(actor.clone()));
        }
        let request = entry.request.clone();
        Ok(vec![
            Edit::Bag(actor.clone(), Some(BagEntry { request, process: Process::Running(to.clone()) })),
            Edit::State(actor.clone(), after.clone()),
        ])
    }

    fn end_edits(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        Self::expect_kind(chosen, TransitionKind::End)?;
        let (entry, _) = self.running(actor, chosen)?;
        let BaseTransition::End { value, .. } = chosen else { unreachable!() };
        let id = entry.request.clone();
        match self.flow.get(&id) {
            Some(Message::Request(_)) => {}
            Some(Message::Response(_)) => return Err(SemanticsError::AlreadyResponded(id.n)),
            None => return Err(SemanticsError::NotPending(id.n)),
        }
        Ok(vec![Edit::Bag(actor.clone(), None), Edit::Flow(id, Some(Message::Response(value.clone())))])
    }

    fn sync_call_edits(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        Self::expect_kind(chosen, TransitionKind::SyncCall)?;
        let (entry, _) = self.running(actor, chosen)?;
        let BaseTransition::SyncCall { call, to, .. } = chosen else { unreachable!() };
        let request = entry.request.clone();
        let n = self.fresh()?;
        let callee = RequestId::new_sync(n, actor.clone(), request.n);
        Ok(vec![
            Edit::Fresh,
            Edit::Flow(callee.clone(), Some(Message::Request(call.clone()))),
            Edit::Bag(actor.clone(), Some(BagEntry { request, process: Process::Guarded { waiting_on: callee, seq: to.clone() } })),
        ])
    }

    fn tail_call_edits(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        Self::expect_kind(chosen, TransitionKind::TailCall)?;
        let (entry, _) = self.running(actor, chosen)?;
        let BaseTransition::TailCall { call, .. } = chosen else { unreachable!() };
        let id = entry.request.clone();
        if !matches!(self.flow.get(&id), Some(Message::Request(_))) {
            return Err(SemanticsError::NotPending(id.n));
        }
        Ok(vec![Edit::Bag(actor.clone(), None), Edit::Flow(id, Some(Message::Request(call.clone())))])
    }

    fn async_call_edits(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        Self::expect_kind(chosen, TransitionKind::AsyncCall)?;
        let (entry, _) = self.running(actor, chosen)?;
        let BaseTransition::AsyncCall { call, to, .. } = chosen else { unreachable!() };
        let request = entry.request.clone();
        let n = self.fresh()?;
        Ok(vec![
            Edit::Fresh,
            Edit::Flow(RequestId::new_async(n), Some(Message::Request(call.clone()))),
            Edit::Bag(actor.clone(), Some(BagEntry { request, process: Process::Running(to.clone()) })),
        ])
    }

    fn return_edits(&self, actor: &ActorRef, chosen: &BaseTransition) -> Result<Edits, SemanticsError> {
        Self::expect_kind(chosen, TransitionKind::Return)?;
        let entry = self.bag.get(actor).ok_or_else(|| SemanticsError::NoProcess(actor.clone()))?;
        let BaseTransition::Return { value, from, to, .. } = chosen else { unreachable!() };
        let Process::Guarded { waiting_on, seq } = &entry.process else { return Err(mismatch(chosen)) };
        if seq != from || chosen.actor() != actor {
            return Err(mismatch(chosen));
        }
        match self.flow.get(waiting_on) {
            Some(Message::Response(v)) if v == value => {}
            Some(Message::Response(_)) => return Err(mismatch(chosen)),
            _ => return Err(SemanticsError::NotEnabled(format!("no response for {waiting_on}"))),
        }
        let waiting_on = waiting_on.clone();
        let request = entry.request.clone();
        Ok(vec![
            Edit::Flow(waiting_on, None),
            Edit::Bag(actor.clone(), Some(BagEntry { request, process: Process::Running(to.clone()) })),
        ])
    }

    fn failure_edits(&self, actor: &ActorRef) -> Edits {
        vec![Edit::Bag(actor.clone(), None)]
    }

    fn timeout_edits(&self, id: &RequestId) -> Result<Edits, SemanticsError> {
        if !matches!(self.flow.get(id), Some(Message::Request(_))) {
            return Err(SemanticsError::NotPending(id.n));
        }
        if self.bag.values().any(|e| &e.request == id) {
            return Err(SemanticsError::NotEnabled(format!("{id} is executing")));
        }
        Ok(vec![Edit::Flow(id.clone(), Some(Message::Response(Value::error("timeout"))))])
    }

    /// Applies a rule instance without checking it is in the program's relation.
    pub fn apply_rule(&self, request: &RequestId, chosen: &BaseTransition, check_validity: bool) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.rule_edits(request, chosen, check_validity)?))
    }

    fn rule_edits(&self, request: &RequestId, chosen: &BaseTransition, check_validity: bool) -> Result<Edits, SemanticsError> {
        let actor = chosen.actor();
        if let Some(entry) = self.bag.get(actor) {
            if chosen.kind() != TransitionKind::Begin && &entry.request != request {
                return Err(mismatch(chosen));
            }
        }
        match chosen.kind() {
            TransitionKind::Begin if check_validity => self.begin_edits(request, chosen),
            TransitionKind::Begin => self.begin_unchecked_edits(request, chosen),
            TransitionKind::Step => self.step_edits(actor, chosen),
            TransitionKind::End => self.end_edits(actor, chosen),
            TransitionKind::SyncCall => self.sync_call_edits(actor, chosen),
            TransitionKind::TailCall => self.tail_call_edits(actor, chosen),
            TransitionKind::AsyncCall => self.async_call_edits(actor, chosen),
            TransitionKind::Return => self.return_edits(actor, chosen),
        }
    }

    /// Applies a move after checking the program actually enables it.
    pub fn apply_move(&self, program: &dyn Program, mv: &Move, check_validity: bool) -> Result<RuntimeState, SemanticsError> {
        Ok(self.edited(self.move_edits(program, mv, check_validity)?))
    }

    /// [`Self::apply_move`] on `self`. On error `self` is left unchanged.
    pub fn apply_move_in_place(&mut self, program: &dyn Program, mv: &Move, check_validity: bool) -> Result<(), SemanticsError> {
        let edits = self.move_edits(program, mv, check_validity)?;
        self.apply_edits(edits);
        Ok(())
    }

    fn move_edits(&self, program: &dyn Program, mv: &Move, check_validity: bool) -> Result<Edits, SemanticsError> {
        match mv {
            Move::Failure { actor } => Ok(self.failure_edits(actor)),
            Move::Timeout { request } => self.timeout_edits(request),
            Move::Rule { request, transition } => {
                let enabled = enabled_transitions(program, &transition.lhs(), self.state.get(transition.actor()))?;
                if !enabled.contains(transition) {
                    return Err(SemanticsError::NotEnabled(transition.to_string()));
                }
                self.rule_edits(request, transition, check_validity)
            }
        }
    }

    /// Structural invariants that every reachable state satisfies.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for (actor, e) in &self.bag {
            if !seen.insert(&e.request) {
                return Err(format!("request {} runs on two actors", e.request));
            }
            self.check_entry(actor, e)?;
        }
        self.check_counter()
    }

    /// The invariants that a move on `actor` can break, checked in time
    /// independent of the state size. A process holds a request addressed to
    /// its own actor, so no request can run twice.
    pub fn check_invariants_at(&self, actor: &ActorRef) -> Result<(), String> {
        if let Some(e) = self.bag.get(actor) {
            self.check_entry(actor, e)?;
        }
        self.check_counter()
    }

    fn check_entry(&self, actor: &ActorRef, e: &BagEntry) -> Result<(), String> {
        match self.flow.get(&e.request) {
            Some(Message::Request(inv)) if &inv.actor == actor => {}
            Some(Message::Request(inv)) => return Err(format!("process of {actor} holds {} addressed to {}", e.request, inv.actor)),
            _ => return Err(format!("process of {actor} holds {} which is not a pending request", e.request)),
        }
        if let Process::Guarded { waiting_on, .. } = &e.process {
            if !waiting_on.is_sync() {
                return Err(format!("{actor} is guarded on async id {waiting_on}"));
            }
            if !self.flow.contains(waiting_on) {
                return Err(format!("{actor} is guarded on {waiting_on} which is not in the flow"));
            }
        }
        Ok(())
    }

    fn check_counter(&self) -> Result<(), String> {
        match self.flow.last() {
            Some((id, _)) if id.n >= self.next_id => {
                Err(format!("flow id {id} is not below the fresh-id counter {}", self.next_id))
            }
            _ => Ok(()),
        }
    }

    /// Copy with request numbers renamed densely in ascending order, so runs
    /// that allocated different ids can be compared.
    pub fn normalized(&self) -> RuntimeState {
        let mut numbers: Vec<u64> = self.flow.iter().map(|(id, _)| id.n).collect();
        for e in self.bag.values() {
            numbers.push(e.request.n);
            if let Mode::Sync { caller_req, .. } = &e.request.mode {
                numbers.push(*caller_req);
            }
        }
        numbers.sort_unstable();
        numbers.dedup();
        let rename: BTreeMap<u64, u64> = numbers.iter().enumerate().map(|(i, n)| (*n, i as u64)).collect();
        let map_id = |id: &RequestId| RequestId {
            n: rename[&id.n],
            mode: match &id.mode {
                Mode::Async => Mode::Async,
                Mode::Sync { caller, caller_req } => Mode::Sync { caller: caller.clone(), caller_req: rename.get(caller_req).copied().unwrap_or(u64::MAX) },
            },
        };
        let flow = Flow(self.flow.iter().map(|(id, m)| (map_id(id), m.clone())).collect());
        let bag = self
            .bag
            .iter()
            .map(|(a, e)| {
                let process = match &e.process {
                    Process::Running(s) => Process::Running(s.clone()),
                    Process::Guarded { waiting_on, seq } => Process::Guarded { waiting_on: map_id(waiting_on), seq: seq.clone() },
                };
                (a.clone(), BagEntry { request: map_id(&e.request), process })
            })
            .collect();
        RuntimeState { flow, bag, state: self.state.clone(), next_id: numbers.len() as u64 }
    }

    /// No process left and every request answered.
    pub fn is_terminal(&self) -> bool {
        self.bag.is_empty() && self.flow.iter().all(|(_, m)| m.is_response())
    }
}

/// One applicable rule instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "move", rename_all = "snake_case")]
pub enum Move {
    /// A program rule; `request` is the id begun, or the running process's id.
    Rule { request: RequestId, transition: BaseTransition },
    Failure { actor: ActorRef },
    Timeout { request: RequestId },
}

impl Move {
    pub fn actor(&self) -> Option<&ActorRef> {
        match self {
            Move::Rule { transition, .. } => Some(transition.actor()),
            Move::Failure { actor } => Some(actor),
            Move::Timeout { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Move::Rule { transition, .. } => transition.kind().as_str(),
            Move::Failure { .. } => "failure",
            Move::Timeout { .. } => "timeout",
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Rule { request, transition } => write!(f, "{request} {transition}"),
            Move::Failure { actor } => write!(f, "failure: {actor}"),
            Move::Timeout { request } => write!(f, "timeout: {request}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MoveOptions {
    /// Add one failure move per actor in the bag.
    pub failures: bool,
    /// Enforce the begin side condition. Turning this off is a mutation.
    pub check_validity: bool,
}

impl Default for MoveOptions {
    fn default() -> Self {
        MoveOptions { failures: false, check_validity: true }
    }
}

/// Every applicable rule instance in canonical order.
pub fn enabled_runtime_moves(
    s: &RuntimeState,
    program: &dyn Program,
    opts: MoveOptions,
) -> Result<Vec<Move>, SemanticsError> {
    let mut moves = Vec::new();
    for (id, msg) in s.flow.iter() {
        let Message::Request(call) = msg else { continue };
        if s.bag.contains_key(&call.actor) || (opts.check_validity && !valid(id, &s.bag)) {
            continue;
        }
        if s.bag.values().any(|e| &e.request == id) {
            continue;
        }
        let frag = Term::Invocation(call.clone());
        for t in enabled_transitions(program, &frag, s.state.get(&call.actor))? {
            moves.push(Move::Rule { request: id.clone(), transition: t });
        }
    }
    for (actor, entry) in &s.bag {
        let Some(frag) = process_fragment(actor, entry, &s.flow) else { continue };
        for t in enabled_transitions(program, &frag, s.state.get(actor))? {
            moves.push(Move::Rule { request: entry.request.clone(), transition: t });
        }
        if opts.failures {
            moves.push(Move::Failure { actor: actor.clone() });
        }
    }
    moves.sort();
    Ok(moves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::dp_table_program;

    fn f() -> ActorRef {
        ActorRef::of("Fork", "f")
    }

    fn p() -> ActorRef {
        ActorRef::of("Philosopher", "p")
    }

    fn only_rule(s: &RuntimeState, prog: &dyn Program) -> (RequestId, BaseTransition) {
        let moves = enabled_runtime_moves(s, prog, MoveOptions::default()).unwrap();
        assert_eq!(moves.len(), 1, "{moves:?}");
        match moves.into_iter().next().unwrap() {
            Move::Rule { request, transition } => (request, transition),
            m => panic!("{m}"),
        }
    }

    #[test]
    fn initial_state_holds_main_request() {
        let prog = dp_table_program();
        let s = initial_state(&prog);
        assert_eq!(s.flow.len(), 1);
        let (id, msg) = s.flow.iter().next().unwrap();
        assert!(!id.is_sync());
        assert_eq!(msg, &Message::Request(Invocation::new(p(), "eat", Value::Null)));
        assert!(s.bag.is_empty() && s.state.is_empty());
        let other = initial_state_from(&prog, s.next_id);
        assert_ne!(other.flow.iter().next().unwrap().0, id);
    }

    #[test]
    fn begin_keeps_request_and_rejects_reentry() {
        let prog = dp_table_program();
        let s = initial_state(&prog);
        let (id, t) = only_rule(&s, &prog);
        let s1 = s.apply_begin(&id, &t).unwrap();
        assert_eq!(s1.flow, s.flow);
        assert_eq!(s1.bag[&p()].process, Process::Running(SeqPoint::new("eat_1")));
        assert_eq!(s1.apply_begin(&id, &t), Err(SemanticsError::Busy(p())));
    }

    #[test]
    fn full_failure_free_run_releases_the_fork() {
        let prog = dp_table_program();
        let mut s = initial_state(&prog);
        let mut steps = 0;
        while !s.is_terminal() {
            let (id, t) = only_rule(&s, &prog);
            s = s.apply_rule(&id, &t, true).unwrap();
            s.check_invariants().unwrap();
            steps += 1;
        }
        assert_eq!(steps, 12);
        assert_eq!(s.state.get(&f()), Some(&Value::Int(0)));
        assert_eq!(s.flow.iter().next().unwrap().1, &Message::Response(Value::Null));
    }

    #[test]
    fn failure_of_caller_cancels_pending_take() {
        let prog = dp_table_program();
        let mut s = initial_state(&prog);
        for _ in 0..2 {
            let (id, t) = only_rule(&s, &prog);
            s = s.apply_rule(&id, &t, true).unwrap();
        }
        // p is guarded on the take; fail it
        let take_id = match &s.bag[&p()].process {
            Process::Guarded { waiting_on, .. } => waiting_on.clone(),
            other => panic!("{other:?}"),
        };
        assert!(valid(&take_id, &s.bag));
        let failed = s.apply_failure(&p());
        assert!(!valid(&take_id, &failed.bag));
        assert_eq!(failed.flow, s.flow);
        let moves = enabled_runtime_moves(&failed, &prog, MoveOptions::default()).unwrap();
        // only the retry of eat; the orphaned take is blocked
        assert_eq!(moves.len(), 1);
        assert!(matches!(&moves[0], Move::Rule { request, .. } if !request.is_sync()));
        let unchecked = enabled_runtime_moves(&failed, &prog, MoveOptions { failures: false, check_validity: false }).unwrap();
        assert_eq!(unchecked.len(), 2);
        let begin = Move::Rule {
            request: take_id.clone(),
            transition: BaseTransition::Begin { call: Invocation::new(f(), "take", Value::Int(42)), to: SeqPoint::new("take_42") },
        };
        assert_eq!(failed.apply_move(&prog, &begin, true), Err(SemanticsError::InvalidRequest(take_id.n)));
    }

    #[test]
    fn failing_absent_actor_is_identity() {
        let prog = dp_table_program();
        let s = initial_state(&prog);
        assert_eq!(s.apply_failure(&f()), s);
    }

    #[test]
    fn cached_validity_agrees_with_quantified() {
        let prog = dp_table_program();
        let mut s = initial_state(&prog);
        for _ in 0..2 {
            let (id, t) = only_rule(&s, &prog);
            s = s.apply_rule(&id, &t, true).unwrap();
        }
        for (id, _) in s.flow.iter() {
            assert_eq!(valid(id, &s.bag), valid_quantified(id, &s.bag));
        }
        let failed = s.apply_failure(&p());
        for (id, _) in failed.flow.iter() {
            assert_eq!(valid(id, &failed.bag), valid_quantified(id, &failed.bag));
        }
    }

    #[test]
    fn return_waits_for_response() {
        let prog = dp_table_program();
        let mut s = initial_state(&prog);
        for _ in 0..2 {
            let (id, t) = only_rule(&s, &prog);
            s = s.apply_rule(&id, &t, true).unwrap();
        }
        let ret = BaseTransition::Return { actor: p(), value: Value::Bool(true), from: SeqPoint::new("eat_2"), to: SeqPoint::new("eat_3") };
        assert!(matches!(s.apply_return(&p(), &ret), Err(SemanticsError::NotEnabled(_))));
    }

    #[test]
    fn hash_is_stable_and_roundtrips() {
        let prog = dp_table_program();
        let s = initial_state(&prog);
        let json = serde_json::to_string(&s).unwrap();
        let back: RuntimeState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
        assert_eq!(s.hash().len(), 16);
    }

    #[test]
    fn normalized_renames_ids_densely() {
        let prog = dp_table_program();
        let a = initial_state_from(&prog, 5);
        let b = initial_state_from(&prog, 0);
        assert_eq!(a.normalized(), b.normalized());
    }
}
