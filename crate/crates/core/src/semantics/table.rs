//! Declarative transition tables.
//!
//! A table file declares actors, a main invocation and one transition per
//! line. The grammar is documented in `docs/formats.md`; in short:
//!
//! ```text
//! actor f : Fork init 0
//! actor p : Philosopher
//! main p.eat(null)
//! deterministic
//! begin f.take(42) / {} -> f.take_42 / {}
//! step f.take_42 / {f -> v} -> f.take_42_true / {f -> 42} if v in {0, 42}
//! return false |> p.eat_2 / {} -> p.eat_1 / {}
//! ```
//!
//! `|>` is synchronous nesting, `||` asynchronous composition. Lower-case
//! identifiers in value position are variables. `init` gives the value an
//! absent persistent entry reads as.

use std::collections::BTreeMap;
use std::fmt;

use super::program::Program;
use super::term::{valid_ident, ActorRef, Invocation, PersistentState, SeqPoint, Term, Value};
use super::transition::{BaseTransition, TransitionKind};
use crate::error::TableError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pat {
    Lit(Value),
    Var(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallPat {
    pub alias: String,
    pub method: String,
    pub arg: Pat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermPat {
    Call(CallPat),
    Seq { alias: String, seq: String },
    Value(Pat),
    /// `v |> a.s` on a left-hand side.
    Returned { value: Pat, alias: String, seq: String },
    /// `a'.m(v) |> a.s` on a right-hand side.
    SyncCall { call: CallPat, alias: String, seq: String },
    /// `a'.m(v) || a.s` on a right-hand side.
    AsyncCall { call: CallPat, alias: String, seq: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Guard {
    In(String, Vec<Value>),
    NotIn(String, Vec<Value>),
    Eq(String, Value),
    Ne(String, Value),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRule {
    pub kind: TransitionKind,
    pub lhs: TermPat,
    pub lhs_state: Option<(String, Pat)>,
    pub rhs: TermPat,
    pub rhs_state: Option<(String, Pat)>,
    pub guard: Option<Guard>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActorDecl {
    pub alias: String,
    pub actor: ActorRef,
    pub init: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableProgram {
    pub name: String,
    pub actors: Vec<ActorDecl>,
    pub main: CallPat,
    pub deterministic: bool,
    pub rules: Vec<TableRule>,
}

type Bindings = BTreeMap<String, Value>;

impl TableProgram {
    pub fn parse(name: &str, text: &str) -> Result<TableProgram, TableError> {
        let mut actors: Vec<ActorDecl> = Vec::new();
        let mut main = None;
        let mut deterministic = false;
        let mut rules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
            let rest = rest.trim();
            match head {
                "actor" => actors.push(parse_actor_decl(line_no, rest)?),
                "main" => {
                    let call = parse_call(line_no, rest)?;
                    if let Pat::Var(v) = &call.arg {
                        return Err(TableError::new(line_no, format!("main argument must be a literal, got `{v}`")));
                    }
                    main = Some(call);
                }
                "deterministic" if rest.is_empty() => deterministic = true,
                _ => {
                    let kind = TransitionKind::parse(head)
                        .ok_or_else(|| TableError::new(line_no, format!("unknown directive `{head}`")))?;
                    rules.push(parse_rule(line_no, kind, rest)?);
                }
            }
        }
        let main = main.ok_or_else(|| TableError::new(0, "missing `main` directive"))?;
        let prog = TableProgram { name: name.to_string(), actors, main, deterministic, rules };
        prog.validate()?;
        Ok(prog)
    }

    fn validate(&self) -> Result<(), TableError> {
        let mut seen = BTreeMap::new();
        for d in &self.actors {
            if seen.insert(d.alias.clone(), ()).is_some() {
                return Err(TableError::new(0, format!("actor `{}` declared twice", d.alias)));
            }
        }
        let known = |a: &str| self.actors.iter().any(|d| d.alias == a);
        if !known(&self.main.alias) {
            return Err(TableError::new(0, format!("unknown actor `{}` in main", self.main.alias)));
        }
        for (i, r) in self.rules.iter().enumerate() {
            let line = i + 1;
            for alias in aliases_of(&r.lhs).into_iter().chain(aliases_of(&r.rhs)) {
                if !known(alias) {
                    return Err(TableError::new(line, format!("unknown actor `{alias}` in rule {line}")));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, alias: &str) -> Option<&ActorDecl> {
        self.actors.iter().find(|d| d.alias == alias)
    }

    fn match_rule(&self, rule: &TableRule, fragment: &Term, state: &PersistentState) -> Option<BaseTransition> {
        let mut b = Bindings::new();
        let running: &ActorRef = match (&rule.lhs, fragment) {
            (TermPat::Call(cp), Term::Invocation(inv)) => {
                let decl = self.resolve(&cp.alias)?;
                if decl.actor != inv.actor || cp.method != inv.method || !bind(&cp.arg, &inv.arg, &mut b) {
                    return None;
                }
                &inv.actor
            }
            (TermPat::Seq { alias, seq }, Term::Seq { actor, seq: sp }) => {
                let decl = self.resolve(alias)?;
                if &decl.actor != actor || *seq != sp.name || sp.locals != Value::Null {
                    return None;
                }
                actor
            }
            (TermPat::Returned { value, alias, seq }, Term::SyncNest(v, k)) => match (&**v, &**k) {
                (Term::Result(rv), Term::Seq { actor, seq: sp }) => {
                    let decl = self.resolve(alias)?;
                    if &decl.actor != actor || *seq != sp.name || sp.locals != Value::Null || !bind(value, rv, &mut b) {
                        return None;
                    }
                    actor
                }
                _ => return None,
            },
            _ => return None,
        };
        let before = state.get(running).cloned();
        if let Some((alias, pat)) = &rule.lhs_state {
            let decl = self.resolve(alias)?;
            if &decl.actor != running {
                return None;
            }
            let effective = before.clone().or_else(|| decl.init.clone())?;
            if !bind(pat, &effective, &mut b) {
                return None;
            }
        }
        if let Some(g) = &rule.guard {
            if !eval_guard(g, &b)? {
                return None;
            }
        }
        let actor = running.clone();
        let t = match (rule.kind, &rule.rhs) {
            (TransitionKind::Begin, TermPat::Seq { seq, .. }) => {
                let Term::Invocation(call) = fragment else { return None };
                BaseTransition::Begin { call: call.clone(), to: SeqPoint::new(seq) }
            }
            (TransitionKind::Step, TermPat::Seq { seq, .. }) => {
                let after = match (&rule.lhs_state, &rule.rhs_state) {
                    (Some(l), Some(r)) if l == r => before.clone(),
                    (_, Some((_, pat))) => Some(instantiate(pat, &b)?),
                    (_, None) => before.clone(),
                };
                BaseTransition::Step { actor, from: fragment_seq(fragment)?, before, to: SeqPoint::new(seq), after }
            }
            (TransitionKind::End, TermPat::Value(p)) => {
                BaseTransition::End { actor, from: fragment_seq(fragment)?, value: instantiate(p, &b)? }
            }
            (TransitionKind::SyncCall, TermPat::SyncCall { call, seq, .. }) => BaseTransition::SyncCall {
                actor,
                from: fragment_seq(fragment)?,
                call: self.instantiate_call(call, &b)?,
                to: SeqPoint::new(seq),
            },
            (TransitionKind::TailCall, TermPat::Call(call)) => BaseTransition::TailCall {
                actor,
                from: fragment_seq(fragment)?,
                call: self.instantiate_call(call, &b)?,
            },
            (TransitionKind::AsyncCall, TermPat::AsyncCall { call, seq, .. }) => BaseTransition::AsyncCall {
                actor,
                from: fragment_seq(fragment)?,
                call: self.instantiate_call(call, &b)?,
                to: SeqPoint::new(seq),
            },
            (TransitionKind::Return, TermPat::Seq { seq, .. }) => {
                let Term::SyncNest(v, k) = fragment else { return None };
                let (Term::Result(value), Term::Seq { seq: from, .. }) = (&**v, &**k) else { return None };
                BaseTransition::Return { actor, value: value.clone(), from: from.clone(), to: SeqPoint::new(seq) }
            }
            _ => return None,
        };
        Some(t)
    }

    fn instantiate_call(&self, call: &CallPat, b: &Bindings) -> Option<Invocation> {
        let decl = self.resolve(&call.alias)?;
        Some(Invocation::new(decl.actor.clone(), call.method.clone(), instantiate(&call.arg, b)?))
    }

    /// Renders the table in canonical form; `parse(render(t)) == t`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.actors {
            out.push_str(&format!("actor {} : {}", d.alias, d.actor.type_name()));
            if let Some(v) = &d.init {
                out.push_str(&format!(" init {}", fmt_value(v)));
            }
            out.push('\n');
        }
        out.push_str(&format!("main {}\n", fmt_call(&self.main)));
        if self.deterministic {
            out.push_str("deterministic\n");
        }
        for r in &self.rules {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

fn fragment_seq(fragment: &Term) -> Option<SeqPoint> {
    match fragment {
        Term::Seq { seq, .. } => Some(seq.clone()),
        _ => None,
    }
}

fn aliases_of(t: &TermPat) -> Vec<&str> {
    match t {
        TermPat::Call(c) => vec![c.alias.as_str()],
        TermPat::Seq { alias, .. } | TermPat::Returned { alias, .. } => vec![alias.as_str()],
        TermPat::Value(_) => vec![],
        TermPat::SyncCall { call, alias, .. } | TermPat::AsyncCall { call, alias, .. } => {
            vec![call.alias.as_str(), alias.as_str()]
        }
    }
}

fn bind(p: &Pat, v: &Value, b: &mut Bindings) -> bool {
    match p {
        Pat::Lit(l) => l == v,
        Pat::Var(name) => match b.get(name) {
            Some(prev) => prev == v,
            None => {
                b.insert(name.clone(), v.clone());
                true
            }
        },
    }
}

fn instantiate(p: &Pat, b: &Bindings) -> Option<Value> {
    match p {
        Pat::Lit(l) => Some(l.clone()),
        Pat::Var(name) => b.get(name).cloned(),
    }
}

fn eval_guard(g: &Guard, b: &Bindings) -> Option<bool> {
    Some(match g {
        Guard::In(v, set) => set.contains(b.get(v)?),
        Guard::NotIn(v, set) => !set.contains(b.get(v)?),
        Guard::Eq(v, x) => b.get(v)? == x,
        Guard::Ne(v, x) => b.get(v)? != x,
    })
}

impl Program for TableProgram {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn main_invocation(&self) -> Invocation {
        let decl = self.resolve(&self.main.alias).expect("validated main actor");
        let Pat::Lit(arg) = &self.main.arg else { unreachable!("validated literal main argument") };
        Invocation::new(decl.actor.clone(), self.main.method.clone(), arg.clone())
    }

    fn actors(&self) -> Vec<ActorRef> {
        let mut v: Vec<ActorRef> = self.actors.iter().map(|d| d.actor.clone()).collect();
        v.sort();
        v
    }

    fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    fn transitions(&self, fragment: &Term, state: &PersistentState) -> Vec<BaseTransition> {
        self.rules.iter().filter_map(|r| self.match_rule(r, fragment, state)).collect()
    }

    fn probe_fragments(&self) -> Vec<Term> {
        let samples = [Value::Null, Value::Int(0), Value::Int(42), Value::Bool(true), Value::Bool(false)];
        let expand = |p: &Pat| -> Vec<Value> {
            match p {
                Pat::Lit(v) => vec![v.clone()],
                Pat::Var(_) => samples.to_vec(),
            }
        };
        let mut out = Vec::new();
        for r in &self.rules {
            match &r.lhs {
                TermPat::Call(c) => {
                    let Some(d) = self.resolve(&c.alias) else { continue };
                    for v in expand(&c.arg) {
                        out.push(Term::Invocation(Invocation::new(d.actor.clone(), c.method.clone(), v)));
                    }
                }
                TermPat::Seq { alias, seq } => {
                    let Some(d) = self.resolve(alias) else { continue };
                    out.push(Term::seq(&d.actor, SeqPoint::new(seq)));
                }
                TermPat::Returned { value, alias, seq } => {
                    let Some(d) = self.resolve(alias) else { continue };
                    for v in expand(value) {
                        out.push(Term::sync_nest(Term::Result(v), Term::seq(&d.actor, SeqPoint::new(seq))));
                    }
                }
                _ => {}
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

// ---------------------------------------------------------------------------
// parsing

fn parse_actor_decl(line: usize, rest: &str) -> Result<ActorDecl, TableError> {
    // alias : Type [init VALUE]
    let (alias, after) = rest
        .split_once(':')
        .ok_or_else(|| TableError::new(line, "expected `actor <alias> : <Type>`"))?;
    let alias = alias.trim();
    let after = after.trim();
    let (ty, init) = match after.split_once(" init ") {
        Some((t, v)) => (t.trim(), Some(parse_literal(line, v.trim())?)),
        None => (after, None),
    };
    if !valid_ident(alias) {
        return Err(TableError::new(line, format!("bad actor alias `{alias}`")));
    }
    let actor = ActorRef::new(ty, alias).map_err(|e| TableError::new(line, e.to_string()))?;
    Ok(ActorDecl { alias: alias.to_string(), actor, init })
}

fn parse_rule(line: usize, kind: TransitionKind, rest: &str) -> Result<TableRule, TableError> {
    let (left, right) = split_top(rest, " -> ").ok_or_else(|| TableError::new(line, "expected `->`"))?;
    let (right, guard) = match split_top(right, " if ") {
        Some((r, g)) => (r, Some(parse_guard(line, g.trim())?)),
        None => (right, None),
    };
    let (lhs_t, lhs_s) = split_state(line, left)?;
    let (rhs_t, rhs_s) = split_state(line, right)?;
    let lhs = parse_term(line, lhs_t)?;
    let rhs = parse_term(line, rhs_t)?;
    let lhs_state = parse_state(line, lhs_s)?;
    let rhs_state = parse_state(line, rhs_s)?;
    let rule = TableRule { kind, lhs, lhs_state, rhs, rhs_state, guard };
    check_rule_shape(line, &rule)?;
    Ok(rule)
}

fn check_rule_shape(line: usize, r: &TableRule) -> Result<(), TableError> {
    let running = match &r.lhs {
        TermPat::Call(c) => c.alias.as_str(),
        TermPat::Seq { alias, .. } | TermPat::Returned { alias, .. } => alias.as_str(),
        _ => return Err(TableError::new(line, "left-hand side must be an invocation, a sequence or `v |> a.s`")),
    };
    let same = |a: &str| a == running;
    let ok = match (r.kind, &r.lhs, &r.rhs) {
        (TransitionKind::Begin, TermPat::Call(_), TermPat::Seq { alias, .. }) => same(alias),
        (TransitionKind::Step, TermPat::Seq { .. }, TermPat::Seq { alias, .. }) => same(alias),
        (TransitionKind::End, TermPat::Seq { .. }, TermPat::Value(_)) => true,
        (TransitionKind::SyncCall, TermPat::Seq { .. }, TermPat::SyncCall { alias, .. }) => same(alias),
        (TransitionKind::TailCall, TermPat::Seq { .. }, TermPat::Call(_)) => true,
        (TransitionKind::AsyncCall, TermPat::Seq { .. }, TermPat::AsyncCall { alias, .. }) => same(alias),
        (TransitionKind::Return, TermPat::Returned { .. }, TermPat::Seq { alias, .. }) => same(alias),
        _ => false,
    };
    if !ok {
        return Err(TableError::new(line, format!("terms do not have the shape of a `{}` transition", r.kind)));
    }
    if r.kind != TransitionKind::Step && (r.lhs_state.is_some() || r.rhs_state.is_some()) {
        return Err(TableError::new(line, format!("`{}` transitions have empty state", r.kind)));
    }
    for (alias, _) in r.lhs_state.iter().chain(r.rhs_state.iter()) {
        if !same(alias) {
            return Err(TableError::new(line, format!("step may only touch the running actor, not `{alias}`")));
        }
    }
    if r.rhs_state.is_some() && r.lhs_state.is_none() {
        return Err(TableError::new(line, "a state update needs a matching state pattern on the left"));
    }
    let mut bound = Vec::new();
    collect_vars_lhs(&r.lhs, &mut bound);
    if let Some((_, Pat::Var(v))) = &r.lhs_state {
        bound.push(v.clone());
    }
    let mut used = Vec::new();
    collect_vars_rhs(&r.rhs, &mut used);
    if let Some((_, Pat::Var(v))) = &r.rhs_state {
        used.push(v.clone());
    }
    if let Some(g) = &r.guard {
        used.push(match g {
            Guard::In(v, _) | Guard::NotIn(v, _) | Guard::Eq(v, _) | Guard::Ne(v, _) => v.clone(),
        });
    }
    if let Some(v) = used.iter().find(|v| !bound.contains(v)) {
        return Err(TableError::new(line, format!("unbound variable `{v}`")));
    }
    Ok(())
}

fn collect_vars_lhs(t: &TermPat, out: &mut Vec<String>) {
    match t {
        TermPat::Call(CallPat { arg: Pat::Var(v), .. }) | TermPat::Returned { value: Pat::Var(v), .. } => {
            out.push(v.clone())
        }
        _ => {}
    }
}

fn collect_vars_rhs(t: &TermPat, out: &mut Vec<String>) {
    match t {
        TermPat::Value(Pat::Var(v)) => out.push(v.clone()),
        TermPat::Call(c) | TermPat::SyncCall { call: c, .. } | TermPat::AsyncCall { call: c, .. } => {
            if let Pat::Var(v) = &c.arg {
                out.push(v.clone());
            }
        }
        _ => {}
    }
}

/// Byte offsets where `pat` occurs outside brackets, braces and string literals.
fn top_level_matches(s: &str, pat: &str) -> Vec<usize> {
    let bytes = s.as_bytes();
    let mut depth = 0i32;
    let mut in_str = false;
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if in_str {
            if c == b'\\' {
                i += 1;
            } else if c == b'"' {
                in_str = false;
            }
        } else {
            match c {
                b'"' => in_str = true,
                b'{' | b'[' | b'(' => depth += 1,
                b'}' | b']' | b')' => depth -= 1,
                _ if depth == 0 && s[i..].starts_with(pat) => out.push(i),
                _ => {}
            }
        }
        i += 1;
    }
    out
}

fn split_top<'a>(s: &'a str, pat: &str) -> Option<(&'a str, &'a str)> {
    let i = *top_level_matches(s, pat).first()?;
    Some((&s[..i], &s[i + pat.len()..]))
}

fn rsplit_top<'a>(s: &'a str, pat: &str) -> Option<(&'a str, &'a str)> {
    let i = *top_level_matches(s, pat).last()?;
    Some((&s[..i], &s[i + pat.len()..]))
}

fn split_state(line: usize, s: &str) -> Result<(&str, &str), TableError> {
    let (t, st) = rsplit_top(s, " / ")
        .ok_or_else(|| TableError::new(line, "expected `<term> / <state>`"))?;
    Ok((t.trim(), st.trim()))
}

fn parse_state(line: usize, s: &str) -> Result<Option<(String, Pat)>, TableError> {
    let inner = s
        .strip_prefix('{')
        .and_then(|x| x.strip_suffix('}'))
        .ok_or_else(|| TableError::new(line, format!("bad state `{s}`")))?
        .trim();
    if inner.is_empty() {
        return Ok(None);
    }
    let (alias, pat) = inner
        .split_once("->")
        .ok_or_else(|| TableError::new(line, format!("bad state entry `{inner}`")))?;
    Ok(Some((alias.trim().to_string(), parse_pat(line, pat.trim())?)))
}

fn parse_term(line: usize, s: &str) -> Result<TermPat, TableError> {
    if let Some((l, r)) = split_top(s, " |> ") {
        let (alias, seq) = parse_seq(line, r.trim())?;
        let l = l.trim();
        return if looks_like_call(l) {
            Ok(TermPat::SyncCall { call: parse_call(line, l)?, alias, seq })
        } else {
            Ok(TermPat::Returned { value: parse_pat(line, l)?, alias, seq })
        };
    }
    if let Some((l, r)) = split_top(s, " || ") {
        let (alias, seq) = parse_seq(line, r.trim())?;
        return Ok(TermPat::AsyncCall { call: parse_call(line, l.trim())?, alias, seq });
    }
    if looks_like_call(s) {
        return Ok(TermPat::Call(parse_call(line, s)?));
    }
    if let Some((a, q)) = s.split_once('.') {
        if valid_ident(a) && valid_ident(q) && !s.starts_with(|c: char| c.is_ascii_digit() || c == '-') {
            return Ok(TermPat::Seq { alias: a.to_string(), seq: q.to_string() });
        }
    }
    Ok(TermPat::Value(parse_pat(line, s)?))
}

fn looks_like_call(s: &str) -> bool {
    match s.split_once('.') {
        Some((a, rest)) => valid_ident(a) && rest.contains('(') && s.ends_with(')'),
        None => false,
    }
}

fn parse_seq(line: usize, s: &str) -> Result<(String, String), TableError> {
    let (a, q) = s
        .split_once('.')
        .ok_or_else(|| TableError::new(line, format!("expected `<actor>.<seq>`, got `{s}`")))?;
    if !valid_ident(a) || !valid_ident(q) {
        return Err(TableError::new(line, format!("bad sequence `{s}`")));
    }
    Ok((a.to_string(), q.to_string()))
}

fn parse_call(line: usize, s: &str) -> Result<CallPat, TableError> {
    let (alias, rest) = s
        .split_once('.')
        .ok_or_else(|| TableError::new(line, format!("expected `<actor>.<method>(<arg>)`, got `{s}`")))?;
    let (method, arg) = rest
        .split_once('(')
        .ok_or_else(|| TableError::new(line, format!("missing `(` in `{s}`")))?;
    let arg = arg
        .strip_suffix(')')
        .ok_or_else(|| TableError::new(line, format!("missing `)` in `{s}`")))?;
    if !valid_ident(alias) || !valid_ident(method) {
        return Err(TableError::new(line, format!("bad invocation `{s}`")));
    }
    Ok(CallPat { alias: alias.to_string(), method: method.to_string(), arg: parse_pat(line, arg.trim())? })
}

fn is_var(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_lowercase())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "null" | "true" | "false")
}

fn parse_pat(line: usize, s: &str) -> Result<Pat, TableError> {
    if is_var(s) {
        Ok(Pat::Var(s.to_string()))
    } else {
        Ok(Pat::Lit(parse_literal(line, s)?))
    }
}

fn parse_literal(line: usize, s: &str) -> Result<Value, TableError> {
    serde_json::from_str::<Value>(s).map_err(|_| TableError::new(line, format!("bad value `{s}`")))
}

fn parse_value_set(line: usize, s: &str) -> Result<Vec<Value>, TableError> {
    let inner = s
        .strip_prefix('{')
        .and_then(|x| x.strip_suffix('}'))
        .ok_or_else(|| TableError::new(line, format!("expected `{{...}}`, got `{s}`")))?;
    // values in a set are scalars, so a plain comma split is enough
    inner
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| parse_literal(line, x))
        .collect()
}

fn parse_guard(line: usize, s: &str) -> Result<Guard, TableError> {
    let mut parts = s.splitn(3, ' ');
    let var = parts.next().unwrap_or_default();
    let op = parts.next().unwrap_or_default();
    let rhs = parts.next().unwrap_or_default().trim();
    if !is_var(var) {
        return Err(TableError::new(line, format!("guard must test a variable, got `{var}`")));
    }
    let var = var.to_string();
    Ok(match op {
        "in" => Guard::In(var, parse_value_set(line, rhs)?),
        "notin" => Guard::NotIn(var, parse_value_set(line, rhs)?),
        "==" => Guard::Eq(var, parse_literal(line, rhs)?),
        "!=" => Guard::Ne(var, parse_literal(line, rhs)?),
        _ => return Err(TableError::new(line, format!("unknown guard operator `{op}`"))),
    })
}

// ---------------------------------------------------------------------------
// rendering

fn fmt_value(v: &Value) -> String {
    v.to_string()
}

fn fmt_pat(p: &Pat) -> String {
    match p {
        Pat::Lit(v) => fmt_value(v),
        Pat::Var(n) => n.clone(),
    }
}

fn fmt_call(c: &CallPat) -> String {
    format!("{}.{}({})", c.alias, c.method, fmt_pat(&c.arg))
}

fn fmt_state(s: &Option<(String, Pat)>) -> String {
    match s {
        None => "{}".to_string(),
        Some((a, p)) => format!("{{{a} -> {}}}", fmt_pat(p)),
    }
}

fn fmt_set(vs: &[Value]) -> String {
    let inner: Vec<String> = vs.iter().map(fmt_value).collect();
    format!("{{{}}}", inner.join(", "))
}

impl fmt::Display for TermPat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermPat::Call(c) => f.write_str(&fmt_call(c)),
            TermPat::Seq { alias, seq } => write!(f, "{alias}.{seq}"),
            TermPat::Value(p) => f.write_str(&fmt_pat(p)),
            TermPat::Returned { value, alias, seq } => write!(f, "{} |> {alias}.{seq}", fmt_pat(value)),
            TermPat::SyncCall { call, alias, seq } => write!(f, "{} |> {alias}.{seq}", fmt_call(call)),
            TermPat::AsyncCall { call, alias, seq } => write!(f, "{} || {alias}.{seq}", fmt_call(call)),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::In(v, s) => write!(f, "{v} in {}", fmt_set(s)),
            Guard::NotIn(v, s) => write!(f, "{v} notin {}", fmt_set(s)),
            Guard::Eq(v, x) => write!(f, "{v} == {}", fmt_value(x)),
            Guard::Ne(v, x) => write!(f, "{v} != {}", fmt_value(x)),
        }
    }
}

impl fmt::Display for TableRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} / {} -> {} / {}",
            self.kind,
            self.lhs,
            fmt_state(&self.lhs_state),
            self.rhs,
            fmt_state(&self.rhs_state)
        )?;
        if let Some(g) = &self.guard {
            write!(f, " if {g}")?;
        }
        Ok(())
    }
}
