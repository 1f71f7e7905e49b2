//! Dining philosophers with idempotent forks.
//!
//! A fork's persistent state is the id of the philosopher holding it, `0`
//! when free. `take(who)` succeeds when the fork is free or already held by
//! `who`; `drop(who)` always succeeds but only releases a fork held by `who`.
//! Both are therefore safe to retry.

use crate::semantics::{ActorRef, CodeProgram, Invocation, Outcome, SeqPoint, TableProgram, Value};

/// Source of the single-philosopher, single-fork transition table.
pub const DP_TABLE: &str = include_str!("../../scenarios/dp.table");

/// Philosopher `i` identifies itself to forks as `FIRST_PHILOSOPHER_ID + i`.
pub const FIRST_PHILOSOPHER_ID: i64 = 42;

pub fn dp_table_program() -> TableProgram {
    TableProgram::parse("dp_table", DP_TABLE).expect("bundled table parses")
}

pub fn philosopher(i: usize) -> ActorRef {
    ActorRef::of("Philosopher", &format!("p{i}"))
}

pub fn fork(i: usize) -> ActorRef {
    ActorRef::of("Fork", &format!("f{i}"))
}

pub fn table_actor() -> ActorRef {
    ActorRef::of("Table", "t")
}

pub(crate) fn index_of(actor: &ActorRef) -> usize {
    actor.instance_id()[1..].parse().expect("scenario actor ids are a letter followed by an index")
}

/// Forks of philosopher `i` in acquisition order (lower index first).
pub(crate) fn forks_of(i: usize, n: usize) -> Vec<usize> {
    let (a, b) = (i, (i + 1) % n);
    if a == b {
        vec![a]
    } else {
        vec![a.min(b), a.max(b)]
    }
}

fn who(i: usize) -> Value {
    Value::Int(FIRST_PHILOSOPHER_ID + i as i64)
}

/// Adds the fork actor type (take/drop) to a program.
fn with_forks(prog: CodeProgram) -> CodeProgram {
    prog.on_begin("Fork", "take", |_, arg| vec![SeqPoint::with_locals("take", arg.clone())])
        .on_seq("Fork", "take", |ctx| {
            let held = ctx.entry().cloned().unwrap_or(Value::Int(0));
            if held == Value::Int(0) || held == *ctx.locals {
                vec![Outcome::Step { to: SeqPoint::new("take_true"), write: Some(ctx.locals.clone()) }]
            } else {
                vec![Outcome::Step { to: SeqPoint::new("take_false"), write: None }]
            }
        })
        .on_seq("Fork", "take_true", |_| vec![Outcome::End(Value::Bool(true))])
        .on_seq("Fork", "take_false", |_| vec![Outcome::End(Value::Bool(false))])
        .on_begin("Fork", "drop", |_, arg| vec![SeqPoint::with_locals("drop", arg.clone())])
        .on_seq("Fork", "drop", |ctx| {
            let write = (ctx.entry() == Some(ctx.locals)).then_some(Value::Int(0));
            vec![Outcome::Step { to: SeqPoint::new("drop_null"), write }]
        })
        .on_seq("Fork", "drop_null", |_| vec![Outcome::End(Value::Null)])
}

/// Main actor that spawns every philosopher's `eat` asynchronously.
pub(crate) fn with_table(prog: CodeProgram, n: usize) -> CodeProgram {
    prog.on_begin("Table", "serve", |_, _| vec![SeqPoint::with_locals("spawn", Value::Int(0))])
        .on_seq("Table", "spawn", move |ctx| {
            let k = ctx.locals.as_int().unwrap_or(0) as usize;
            if k < n {
                vec![Outcome::AsyncCall {
                    call: Invocation::new(philosopher(k), "eat", Value::Null),
                    then: SeqPoint::with_locals("spawn", Value::Int(k as i64 + 1)),
                }]
            } else {
                vec![Outcome::End(Value::Null)]
            }
        })
}

/// `n` philosophers around `n` forks; each eat takes its two forks in index
/// order (retrying a refused take), then drops them in reverse order.
pub fn dp_general_program(n: usize) -> CodeProgram {
    assert!(n >= 1, "need at least one philosopher");
    let mut prog = CodeProgram::new(format!("dp_general:{n}"), Invocation::new(table_actor(), "serve", Value::Null))
        .deterministic(true);
    for i in 0..n {
        prog = prog.actor(philosopher(i)).actor(fork(i));
    }
    let prog = with_table(with_forks(prog), n);

    let take = |phase: &'static str, await_phase: &'static str, slot: usize| {
        move |ctx: &crate::semantics::SeqCtx<'_>| {
            let i = index_of(ctx.actor);
            let fs = forks_of(i, n);
            vec![Outcome::SyncCall {
                call: Invocation::new(fork(fs[slot.min(fs.len() - 1)]), phase, who(i)),
                then: SeqPoint::new(await_phase),
            }]
        }
    };
    prog.on_begin("Philosopher", "eat", |_, _| vec![SeqPoint::new("take_first")])
        .on_seq("Philosopher", "take_first", take("take", "await_first", 0))
        .on_return("Philosopher", "await_first", move |a, v, _| {
            let two = forks_of(index_of(a), n).len() == 2;
            match (v.as_bool(), two) {
                (Some(true), true) => vec![SeqPoint::new("take_second")],
                (Some(true), false) => vec![SeqPoint::new("drop_first")],
                _ => vec![SeqPoint::new("take_first")],
            }
        })
        .on_seq("Philosopher", "take_second", take("take", "await_second", 1))
        .on_return("Philosopher", "await_second", |_, v, _| match v.as_bool() {
            Some(true) => vec![SeqPoint::new("drop_second")],
            _ => vec![SeqPoint::new("take_second")],
        })
        .on_seq("Philosopher", "drop_second", take("drop", "await_drop_second", 1))
        .on_return("Philosopher", "await_drop_second", |_, _, _| vec![SeqPoint::new("drop_first")])
        .on_seq("Philosopher", "drop_first", take("drop", "await_drop_first", 0))
        .on_return("Philosopher", "await_drop_first", |_, _, _| vec![SeqPoint::new("done")])
        .on_seq("Philosopher", "done", |_| vec![Outcome::End(Value::Null)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{enabled_transitions, BaseTransition, Program, Term};

    #[test]
    fn forks_are_ordered_by_index() {
        assert_eq!(forks_of(0, 1), vec![0]);
        assert_eq!(forks_of(1, 2), vec![0, 1]);
        assert_eq!(forks_of(2, 3), vec![0, 2]);
    }

    #[test]
    fn take_is_idempotent_for_the_holder() {
        let p = dp_general_program(2);
        let f = fork(0);
        let seq = Term::seq(&f, SeqPoint::with_locals("take", Value::Int(42)));
        let first = enabled_transitions(&p, &seq, None).unwrap();
        let BaseTransition::Step { to, after, .. } = &first[0] else { panic!() };
        assert_eq!(to.name, "take_true");
        assert_eq!(after, &Some(Value::Int(42)));
        // second take by the same philosopher: still true, state unchanged
        let again = enabled_transitions(&p, &seq, Some(&Value::Int(42))).unwrap();
        let BaseTransition::Step { to, before, after, .. } = &again[0] else { panic!() };
        assert_eq!(to.name, "take_true");
        assert_eq!(before, after);
    }

    #[test]
    fn drop_only_releases_own_fork() {
        let p = dp_general_program(2);
        let seq = Term::seq(&fork(1), SeqPoint::with_locals("drop", Value::Int(42)));
        let t = enabled_transitions(&p, &seq, Some(&Value::Int(43))).unwrap();
        assert_eq!(t[0].state_update(), Some((&Some(Value::Int(43)), &Some(Value::Int(43)))));
        let t = enabled_transitions(&p, &seq, Some(&Value::Int(42))).unwrap();
        assert_eq!(t[0].state_update(), Some((&Some(Value::Int(42)), &Some(Value::Int(0)))));
    }

    #[test]
    fn declares_all_actors() {
        let p = dp_general_program(3);
        assert_eq!(p.actors().len(), 7);
        assert_eq!(p.actor_types(), vec!["Fork", "Philosopher", "Table"]);
    }
}
