//! The seven base transition forms.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::term::{ActorRef, Invocation, SeqPoint, Term, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    Begin,
    Step,
    End,
    SyncCall,
    TailCall,
    AsyncCall,
    Return,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 7] = [
        TransitionKind::Begin,
        TransitionKind::Step,
        TransitionKind::End,
        TransitionKind::SyncCall,
        TransitionKind::TailCall,
        TransitionKind::AsyncCall,
        TransitionKind::Return,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransitionKind::Begin => "begin",
            TransitionKind::Step => "step",
            TransitionKind::End => "end",
            TransitionKind::SyncCall => "sync-call",
            TransitionKind::TailCall => "tail-call",
            TransitionKind::AsyncCall => "async-call",
            TransitionKind::Return => "return",
        }
    }

    pub fn parse(s: &str) -> Option<TransitionKind> {
        TransitionKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One program-supplied transition `T/S -> T'/S'`.
///
/// Only `Step` carries persistent state, and only the running actor's entry
/// (`None` = absent key). Every other form has empty state on both sides.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseTransition {
    Begin {
        call: Invocation,
        to: SeqPoint,
    },
    Step {
        actor: ActorRef,
        from: SeqPoint,
        before: Option<Value>,
        to: SeqPoint,
        after: Option<Value>,
    },
    End {
        actor: ActorRef,
        from: SeqPoint,
        value: Value,
    },
    SyncCall {
        actor: ActorRef,
        from: SeqPoint,
        call: Invocation,
        to: SeqPoint,
    },
    TailCall {
        actor: ActorRef,
        from: SeqPoint,
        call: Invocation,
    },
    AsyncCall {
        actor: ActorRef,
        from: SeqPoint,
        call: Invocation,
        to: SeqPoint,
    },
    Return {
        actor: ActorRef,
        value: Value,
        from: SeqPoint,
        to: SeqPoint,
    },
}

impl BaseTransition {
    pub fn kind(&self) -> TransitionKind {
        match self {
            BaseTransition::Begin { .. } => TransitionKind::Begin,
            BaseTransition::Step { .. } => TransitionKind::Step,
            BaseTransition::End { .. } => TransitionKind::End,
            BaseTransition::SyncCall { .. } => TransitionKind::SyncCall,
            BaseTransition::TailCall { .. } => TransitionKind::TailCall,
            BaseTransition::AsyncCall { .. } => TransitionKind::AsyncCall,
            BaseTransition::Return { .. } => TransitionKind::Return,
        }
    }

    /// The actor whose process the transition belongs to.
    pub fn actor(&self) -> &ActorRef {
        match self {
            BaseTransition::Begin { call, .. } => &call.actor,
            BaseTransition::Step { actor, .. }
            | BaseTransition::End { actor, .. }
            | BaseTransition::SyncCall { actor, .. }
            | BaseTransition::TailCall { actor, .. }
            | BaseTransition::AsyncCall { actor, .. }
            | BaseTransition::Return { actor, .. } => actor,
        }
    }

    /// The sequence point the transition starts from (none for `begin`).
    pub fn from_seq(&self) -> Option<&SeqPoint> {
        match self {
            BaseTransition::Begin { .. } => None,
            BaseTransition::Step { from, .. }
            | BaseTransition::End { from, .. }
            | BaseTransition::SyncCall { from, .. }
            | BaseTransition::TailCall { from, .. }
            | BaseTransition::AsyncCall { from, .. }
            | BaseTransition::Return { from, .. } => Some(from),
        }
    }

    pub fn lhs(&self) -> Term {
        match self {
            BaseTransition::Begin { call, .. } => Term::Invocation(call.clone()),
            BaseTransition::Return { actor, value, from, .. } => {
                Term::sync_nest(Term::Result(value.clone()), Term::seq(actor, from.clone()))
            }
            other => Term::seq(other.actor(), other.from_seq().expect("non-begin has a source").clone()),
        }
    }

    pub fn rhs(&self) -> Term {
        match self {
            BaseTransition::Begin { call, to } => Term::seq(&call.actor, to.clone()),
            BaseTransition::Step { actor, to, .. } | BaseTransition::Return { actor, to, .. } => {
                Term::seq(actor, to.clone())
            }
            BaseTransition::End { value, .. } => Term::Result(value.clone()),
            BaseTransition::SyncCall { actor, call, to, .. } => {
                Term::sync_nest(Term::Invocation(call.clone()), Term::seq(actor, to.clone()))
            }
            BaseTransition::TailCall { call, .. } => Term::Invocation(call.clone()),
            BaseTransition::AsyncCall { actor, call, to, .. } => {
                Term::async_par(Term::Invocation(call.clone()), Term::seq(actor, to.clone()))
            }
        }
    }

    /// `(before, after)` state entries of the running actor for `step`;
    /// `None` for every other form.
    pub fn state_update(&self) -> Option<(&Option<Value>, &Option<Value>)> {
        match self {
            BaseTransition::Step { before, after, .. } => Some((before, after)),
            _ => None,
        }
    }

    /// Checks that lhs and rhs have exactly the shape of this kind's form.
    pub fn matches_form(&self) -> bool {
        let lhs = self.lhs();
        let rhs = self.rhs();
        let actor = self.actor();
        let is_seq_of = |t: &Term| matches!(t, Term::Seq { actor: a, .. } if a == actor);
        match self.kind() {
            TransitionKind::Begin => matches!(lhs, Term::Invocation(_)) && is_seq_of(&rhs),
            TransitionKind::Step => is_seq_of(&lhs) && is_seq_of(&rhs),
            TransitionKind::End => is_seq_of(&lhs) && matches!(rhs, Term::Result(_)),
            TransitionKind::SyncCall => {
                is_seq_of(&lhs)
                    && matches!(&rhs, Term::SyncNest(c, k) if matches!(**c, Term::Invocation(_)) && is_seq_of(k))
            }
            TransitionKind::TailCall => is_seq_of(&lhs) && matches!(rhs, Term::Invocation(_)),
            TransitionKind::AsyncCall => {
                is_seq_of(&lhs)
                    && matches!(&rhs, Term::AsyncPar(c, k) if matches!(**c, Term::Invocation(_)) && is_seq_of(k))
            }
            TransitionKind::Return => {
                matches!(&lhs, Term::SyncNest(v, k) if matches!(**v, Term::Result(_)) && is_seq_of(k))
                    && is_seq_of(&rhs)
            }
        }
    }
}

fn fmt_entry(actor: &ActorRef, e: &Option<Value>) -> String {
    match e {
        Some(v) => format!("{{{actor} -> {v}}}"),
        None => "{}".to_string(),
    }
}

impl fmt::Display for BaseTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (sl, sr) = match self {
            BaseTransition::Step { actor, before, after, .. } => (fmt_entry(actor, before), fmt_entry(actor, after)),
            _ => ("{}".to_string(), "{}".to_string()),
        };
        write!(f, "{}: {} / {} -> {} / {}", self.kind(), self.lhs(), sl, self.rhs(), sr)
    }
}
