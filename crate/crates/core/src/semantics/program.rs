//! Programs and the base transition relation.
//!
//! A program is anything that, given a term fragment and a view of the
//! persistent state, lists the base transitions it enables. Two front-ends
//! produce programs: [`CodeProgram`] (handler closures per sequence point) and
//! [`TableProgram`](super::table::TableProgram) (declarative transition tables).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::term::{ActorRef, Invocation, PersistentState, SeqPoint, Term, Value};
use super::transition::BaseTransition;
use crate::error::SemanticsError;

pub trait Program: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn main_invocation(&self) -> Invocation;

    /// Actor instances the program declares, in canonical order.
    fn actors(&self) -> Vec<ActorRef>;

    fn actor_types(&self) -> Vec<String> {
        let mut types: Vec<String> = self.actors().iter().map(|a| a.type_name().to_string()).collect();
        types.sort();
        types.dedup();
        types
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    /// Raw transition relation. `state` is the persistent state visible to the
    /// program; the runtime only ever passes the running actor's entry.
    fn transitions(&self, fragment: &Term, state: &PersistentState) -> Vec<BaseTransition>;

    /// Left-hand sides worth probing when checking closure under state extension.
    fn probe_fragments(&self) -> Vec<Term> {
        Vec::new()
    }
}

pub type SharedProgram = Arc<dyn Program>;

/// Actor whose process a well-shaped fragment belongs to.
pub fn fragment_actor(fragment: &Term) -> Result<&ActorRef, SemanticsError> {
    match fragment {
        Term::Invocation(inv) => Ok(&inv.actor),
        Term::Seq { actor, .. } => Ok(actor),
        Term::SyncNest(v, k) => match (&**v, &**k) {
            (Term::Result(_), Term::Seq { actor, .. }) => Ok(actor),
            _ => Err(SemanticsError::Shape(fragment.to_string())),
        },
        _ => Err(SemanticsError::Shape(fragment.to_string())),
    }
}

/// Every base transition enabled on `fragment` when the running actor's
/// persistent entry is `entry`, in canonical order.
pub fn enabled_transitions(
    program: &dyn Program,
    fragment: &Term,
    entry: Option<&Value>,
) -> Result<Vec<BaseTransition>, SemanticsError> {
    let actor = fragment_actor(fragment)?;
    let mut view = PersistentState::new();
    if let Some(v) = entry {
        view.insert(actor.clone(), v.clone());
    }
    let mut out: Vec<BaseTransition> = program
        .transitions(fragment, &view)
        .into_iter()
        .filter(|t| t.matches_form() && t.lhs() == *fragment)
        .filter(|t| match t.state_update() {
            Some((before, _)) => before.as_ref() == entry,
            None => true,
        })
        .collect();
    out.sort();
    out.dedup();
    if program.is_deterministic() && out.len() > 1 {
        return Err(SemanticsError::Nondeterministic { term: fragment.to_string(), count: out.len() });
    }
    Ok(out)
}

/// Execution context handed to sequence-point handlers.
pub struct SeqCtx<'a> {
    pub actor: &'a ActorRef,
    pub locals: &'a Value,
    pub state: &'a PersistentState,
}

impl SeqCtx<'_> {
    /// The running actor's own persistent entry.
    pub fn entry(&self) -> Option<&Value> {
        self.state.get(self.actor)
    }
}

/// What a sequence point may do next.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    /// Local step; `write` replaces the actor's persistent entry when present.
    Step { to: SeqPoint, write: Option<Value> },
    End(Value),
    SyncCall { call: Invocation, then: SeqPoint },
    TailCall(Invocation),
    AsyncCall { call: Invocation, then: SeqPoint },
}

type BeginFn = Arc<dyn Fn(&ActorRef, &Value) -> Vec<SeqPoint> + Send + Sync>;
type SeqFn = Arc<dyn Fn(&SeqCtx<'_>) -> Vec<Outcome> + Send + Sync>;
type ReturnFn = Arc<dyn Fn(&ActorRef, &Value, &Value) -> Vec<SeqPoint> + Send + Sync>;

/// A program given as handler closures keyed by actor type.
#[derive(Clone)]
pub struct CodeProgram {
    name: String,
    main: Invocation,
    actors: Vec<ActorRef>,
    deterministic: bool,
    begins: BTreeMap<(String, String), BeginFn>,
    seqs: BTreeMap<(String, String), SeqFn>,
    returns: BTreeMap<(String, String), ReturnFn>,
}

impl fmt::Debug for CodeProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CodeProgram")
            .field("name", &self.name)
            .field("main", &self.main)
            .field("actors", &self.actors)
            .field("begins", &self.begins.keys().collect::<Vec<_>>())
            .field("seqs", &self.seqs.keys().collect::<Vec<_>>())
            .field("returns", &self.returns.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl CodeProgram {
    pub fn new(name: impl Into<String>, main: Invocation) -> Self {
        CodeProgram {
            name: name.into(),
            actors: vec![main.actor.clone()],
            main,
            deterministic: false,
            begins: BTreeMap::new(),
            seqs: BTreeMap::new(),
            returns: BTreeMap::new(),
        }
    }

    pub fn deterministic(mut self, yes: bool) -> Self {
        self.deterministic = yes;
        self
    }

    pub fn actor(mut self, actor: ActorRef) -> Self {
        if !self.actors.contains(&actor) {
            self.actors.push(actor);
            self.actors.sort();
        }
        self
    }

    /// Handler for `a.method(arg)` on actors of `actor_type`; returns the
    /// initial sequence points (empty when the argument is rejected).
    pub fn on_begin<F>(mut self, actor_type: &str, method: &str, f: F) -> Self
    where
        F: Fn(&ActorRef, &Value) -> Vec<SeqPoint> + Send + Sync + 'static,
    {
        self.begins.insert((actor_type.into(), method.into()), Arc::new(f));
        self
    }

    pub fn on_seq<F>(mut self, actor_type: &str, seq: &str, f: F) -> Self
    where
        F: Fn(&SeqCtx<'_>) -> Vec<Outcome> + Send + Sync + 'static,
    {
        self.seqs.insert((actor_type.into(), seq.into()), Arc::new(f));
        self
    }

    /// Handler for `v ▷ a.seq`; receives the actor, the returned value and the locals.
    pub fn on_return<F>(mut self, actor_type: &str, seq: &str, f: F) -> Self
    where
        F: Fn(&ActorRef, &Value, &Value) -> Vec<SeqPoint> + Send + Sync + 'static,
    {
        self.returns.insert((actor_type.into(), seq.into()), Arc::new(f));
        self
    }
}

impl Program for CodeProgram {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn main_invocation(&self) -> Invocation {
        self.main.clone()
    }

    fn actors(&self) -> Vec<ActorRef> {
        self.actors.clone()
    }

    fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    fn transitions(&self, fragment: &Term, state: &PersistentState) -> Vec<BaseTransition> {
        match fragment {
            Term::Invocation(call) => {
                let key = (call.actor.type_name().to_string(), call.method.clone());
                let Some(h) = self.begins.get(&key) else { return Vec::new() };
                h(&call.actor, &call.arg)
                    .into_iter()
                    .map(|to| BaseTransition::Begin { call: call.clone(), to })
                    .collect()
            }
            Term::Seq { actor, seq } => {
                let key = (actor.type_name().to_string(), seq.name.clone());
                let Some(h) = self.seqs.get(&key) else { return Vec::new() };
                let ctx = SeqCtx { actor, locals: &seq.locals, state };
                let before = state.get(actor).cloned();
                h(&ctx)
                    .into_iter()
                    .map(|o| outcome_transition(actor, seq, &before, o))
                    .collect()
            }
            Term::SyncNest(v, k) => match (&**v, &**k) {
                (Term::Result(value), Term::Seq { actor, seq }) => {
                    let key = (actor.type_name().to_string(), seq.name.clone());
                    let Some(h) = self.returns.get(&key) else { return Vec::new() };
                    h(actor, value, &seq.locals)
                        .into_iter()
                        .map(|to| BaseTransition::Return {
                            actor: actor.clone(),
                            value: value.clone(),
                            from: seq.clone(),
                            to,
                        })
                        .collect()
                }
                _ => Vec::new(),
            },
            _ => Vec::new(),
        }
    }
}

fn outcome_transition(actor: &ActorRef, from: &SeqPoint, before: &Option<Value>, o: Outcome) -> BaseTransition {
    let actor = actor.clone();
    let from = from.clone();
    match o {
        Outcome::Step { to, write } => {
            let after = write.or_else(|| before.clone());
            BaseTransition::Step { actor, from, before: before.clone(), to, after }
        }
        Outcome::End(value) => BaseTransition::End { actor, from, value },
        Outcome::SyncCall { call, then } => BaseTransition::SyncCall { actor, from, call, to: then },
        Outcome::TailCall(call) => BaseTransition::TailCall { actor, from, call },
        Outcome::AsyncCall { call, then } => BaseTransition::AsyncCall { actor, from, call, to: then },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counter() -> CodeProgram {
        let c = ActorRef::of("Counter", "c");
        CodeProgram::new("counter", Invocation::new(c, "incr", Value::Null))
            .deterministic(true)
            .on_begin("Counter", "incr", |_, _| vec![SeqPoint::new("go")])
            .on_seq("Counter", "go", |ctx| {
                let n = ctx.entry().and_then(Value::as_int).unwrap_or(0);
                vec![Outcome::Step { to: SeqPoint::new("done"), write: Some(Value::Int(n + 1)) }]
            })
            .on_seq("Counter", "done", |_| vec![Outcome::End(Value::Null)])
    }

    #[test]
    fn bare_value_is_a_shape_error() {
        let p = counter();
        let err = enabled_transitions(&p, &Term::Result(Value::Null), None).unwrap_err();
        assert!(matches!(err, SemanticsError::Shape(_)));
    }

    #[test]
    fn step_reads_only_the_running_entry() {
        let p = counter();
        let c = ActorRef::of("Counter", "c");
        let frag = Term::seq(&c, SeqPoint::new("go"));
        let ts = enabled_transitions(&p, &frag, Some(&Value::Int(4))).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].state_update(), Some((&Some(Value::Int(4)), &Some(Value::Int(5)))));
    }

    #[test]
    fn deterministic_programs_assert_single_choice() {
        let c = ActorRef::of("Counter", "c");
        let p = CodeProgram::new("coin", Invocation::new(c.clone(), "flip", Value::Null))
            .deterministic(true)
            .on_begin("Counter", "flip", |_, _| vec![SeqPoint::new("heads"), SeqPoint::new("tails")]);
        let err = enabled_transitions(&p, &Term::Invocation(p.main_invocation()), None).unwrap_err();
        assert!(matches!(err, SemanticsError::Nondeterministic { count: 2, .. }));
    }

    #[test]
    fn canonical_order_is_stable() {
        let c = ActorRef::of("Counter", "c");
        let p = CodeProgram::new("coin", Invocation::new(c.clone(), "flip", Value::Null))
            .on_begin("Counter", "flip", |_, _| vec![SeqPoint::new("tails"), SeqPoint::new("heads")]);
        let frag = Term::Invocation(p.main_invocation());
        let a = enabled_transitions(&p, &frag, None).unwrap();
        let b = enabled_transitions(&p, &frag, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].rhs(), Term::seq(&c, SeqPoint::new("heads")));
    }
}
