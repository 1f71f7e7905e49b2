//! Program syntax: actor references, values, terms and the persistent state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::SemanticsError;

/// A virtual actor: an actor type plus an instance id.
///
/// Serialized as the string `Type:instance` so it can key JSON maps.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActorRef {
    type_name: String,
    instance_id: String,
}

impl ActorRef {
    pub fn new(type_name: impl Into<String>, instance_id: impl Into<String>) -> Result<Self, SemanticsError> {
        let type_name = type_name.into();
        let instance_id = instance_id.into();
        if !valid_ident(&type_name) || !valid_ident(&instance_id) {
            return Err(SemanticsError::InvalidActorRef(format!("{type_name}:{instance_id}")));
        }
        Ok(ActorRef { type_name, instance_id })
    }

    /// Panicking constructor for literals in programs and tests.
    pub fn of(type_name: &str, instance_id: &str) -> Self {
        Self::new(type_name, instance_id).expect("invalid actor reference literal")
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }
}

pub(crate) fn valid_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl fmt::Display for ActorRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.type_name, self.instance_id)
    }
}

impl FromStr for ActorRef {
    type Err = SemanticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (t, i) = s
            .split_once(':')
            .ok_or_else(|| SemanticsError::InvalidActorRef(s.to_string()))?;
        ActorRef::new(t, i)
    }
}

impl Serialize for ActorRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActorRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A self-describing structured datum.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        match self {
            Value::Map(m) => m.get(key),
            _ => None,
        }
    }

    pub fn map<I, K>(entries: I) -> Value
    where
        I: IntoIterator<Item = (K, Value)>,
        K: Into<String>,
    {
        Value::Map(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    /// Error-tagged value used to surface runtime failures (timeouts, user exceptions)
    /// as ordinary responses.
    pub fn error(reason: impl Into<String>) -> Value {
        Value::map([("error", Value::Str(reason.into()))])
    }

    pub fn is_error(&self) -> bool {
        self.get("error").is_some()
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // compact JSON; serialization of this type cannot fail
        let s = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&s)
    }
}

/// A sequence point inside a running method: the program-defined name of the
/// remaining code plus its local variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeqPoint {
    pub name: String,
    #[serde(default = "null_value", skip_serializing_if = "is_null")]
    pub locals: Value,
}

fn null_value() -> Value {
    Value::Null
}

fn is_null(v: &Value) -> bool {
    *v == Value::Null
}

impl SeqPoint {
    pub fn new(name: impl Into<String>) -> Self {
        SeqPoint { name: name.into(), locals: Value::Null }
    }

    pub fn with_locals(name: impl Into<String>, locals: Value) -> Self {
        SeqPoint { name: name.into(), locals }
    }
}

impl fmt::Display for SeqPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if self.locals != Value::Null {
            write!(f, "[{}]", self.locals)?;
        }
        Ok(())
    }
}

/// A method invocation `a.m(v)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Invocation {
    pub actor: ActorRef,
    pub method: String,
    pub arg: Value,
}

impl Invocation {
    pub fn new(actor: ActorRef, method: impl Into<String>, arg: Value) -> Self {
        Invocation { actor, method: method.into(), arg }
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}({})", self.actor, self.method, self.arg)
    }
}

/// A point in the execution of a program.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Invocation(Invocation),
    Result(Value),
    Seq { actor: ActorRef, seq: SeqPoint },
    /// `callee ▷ caller`: the caller resumes after the callee returns.
    SyncNest(Box<Term>, Box<Term>),
    /// `background ≀ foreground`.
    AsyncPar(Box<Term>, Box<Term>),
}

impl Term {
    pub fn seq(actor: &ActorRef, seq: SeqPoint) -> Term {
        Term::Seq { actor: actor.clone(), seq }
    }

    pub fn sync_nest(callee: Term, caller: Term) -> Term {
        Term::SyncNest(Box::new(callee), Box::new(caller))
    }

    pub fn async_par(background: Term, foreground: Term) -> Term {
        Term::AsyncPar(Box::new(background), Box::new(foreground))
    }

    /// Canonical form: asynchronous composition re-associated to the right.
    pub fn canonical(&self) -> Term {
        match self {
            Term::AsyncPar(l, r) => {
                let mut parts = Vec::new();
                flatten_async(l, &mut parts);
                flatten_async(r, &mut parts);
                let mut iter = parts.into_iter().rev();
                let last = iter.next().expect("async composition has two operands");
                iter.fold(last, |acc, t| Term::async_par(t, acc))
            }
            Term::SyncNest(l, r) => Term::sync_nest(l.canonical(), r.canonical()),
            other => other.clone(),
        }
    }
}

fn flatten_async(t: &Term, out: &mut Vec<Term>) {
    match t {
        Term::AsyncPar(l, r) => {
            flatten_async(l, out);
            flatten_async(r, out);
        }
        other => out.push(other.canonical()),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Invocation(inv) => write!(f, "{inv}"),
            Term::Result(v) => write!(f, "{v}"),
            Term::Seq { actor, seq } => write!(f, "{actor}.{seq}"),
            Term::SyncNest(l, r) => write!(f, "({l} |> {r})"),
            Term::AsyncPar(l, r) => write!(f, "({l} || {r})"),
        }
    }
}

/// The persistent program state: a partial map from actors to their state.
/// An absent key is distinct from a key mapped to `null`.
pub type PersistentState = crate::digest::DigestMap<ActorRef, Value>;
