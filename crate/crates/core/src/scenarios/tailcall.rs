//! Dining philosophers written as a chain of tail calls.
//!
//! Every phase of an eat hands over to the next one with a tail call, so the
//! whole meal runs under the philosopher's original request id and a retry
//! resumes at the last committed phase. Forks receive the continuation in
//! their argument and tail-call back into the philosopher:
//!
//! ```text
//! p.eat -> f.take{ok: have_first | eating, retry: eat} -> ... -> p.eating
//!       -> f.drop{then: ...} -> p.done -> null
//! ```
//!
//! No phase waits on a synchronous call, so there is nothing to cancel.

use super::dining::{forks_of, index_of, philosopher, fork, table_actor, with_table, FIRST_PHILOSOPHER_ID};
use crate::semantics::{ActorRef, CodeProgram, Invocation, Outcome, SeqPoint, Value};

fn fork_arg(who: i64, phil: &ActorRef, pairs: &[(&str, &str)]) -> Value {
    let mut m = vec![
        ("who".to_string(), Value::Int(who)),
        ("phil".to_string(), Value::Str(phil.instance_id().to_string())),
    ];
    m.extend(pairs.iter().map(|(k, v)| (k.to_string(), Value::Str(v.to_string()))));
    Value::map(m)
}

fn back_to_philosopher(arg: &Value, key: &str) -> Outcome {
    let phil = arg.get("phil").and_then(Value::as_str).expect("fork argument names the philosopher");
    let method = arg.get(key).and_then(Value::as_str).expect("fork argument carries the continuation");
    Outcome::TailCall(Invocation::new(ActorRef::of("Philosopher", phil), method, Value::Null))
}

/// Methods a philosopher chain commits to once a take on some fork succeeded.
pub const POST_TAKE_PHASES: [&str; 2] = ["have_first", "eating"];

pub fn dp_tailcall_program(n: usize) -> CodeProgram {
    assert!(n >= 1, "need at least one philosopher");
    let mut prog = CodeProgram::new(format!("dp_tailcall:{n}"), Invocation::new(table_actor(), "serve", Value::Null))
        .deterministic(true);
    for i in 0..n {
        prog = prog.actor(philosopher(i)).actor(fork(i));
    }
    let prog = with_table(prog, n);

    let prog = prog
        .on_begin("Fork", "take", |_, arg| vec![SeqPoint::with_locals("take", arg.clone())])
        .on_seq("Fork", "take", |ctx| {
            let who = ctx.locals.get("who").cloned().unwrap_or(Value::Null);
            let held = ctx.entry().cloned().unwrap_or(Value::Int(0));
            if held == Value::Int(0) || held == who {
                vec![Outcome::Step { to: SeqPoint::with_locals("take_true", ctx.locals.clone()), write: Some(who) }]
            } else {
                vec![Outcome::Step { to: SeqPoint::with_locals("take_false", ctx.locals.clone()), write: None }]
            }
        })
        .on_seq("Fork", "take_true", |ctx| vec![back_to_philosopher(ctx.locals, "ok")])
        .on_seq("Fork", "take_false", |ctx| vec![back_to_philosopher(ctx.locals, "retry")])
        .on_begin("Fork", "drop", |_, arg| vec![SeqPoint::with_locals("drop", arg.clone())])
        .on_seq("Fork", "drop", |ctx| {
            let who = ctx.locals.get("who").cloned().unwrap_or(Value::Null);
            let write = (ctx.entry() == Some(&who)).then_some(Value::Int(0));
            vec![Outcome::Step { to: SeqPoint::with_locals("dropped", ctx.locals.clone()), write }]
        })
        .on_seq("Fork", "dropped", |ctx| vec![back_to_philosopher(ctx.locals, "then")]);

    let phase = |name: &'static str| vec![SeqPoint::new(name)];
    prog.on_begin("Philosopher", "eat", move |_, _| phase("eat_go"))
        .on_seq("Philosopher", "eat_go", move |ctx| {
            let i = index_of(ctx.actor);
            let fs = forks_of(i, n);
            let ok = if fs.len() == 2 { "have_first" } else { "eating" };
            let arg = fork_arg(FIRST_PHILOSOPHER_ID + i as i64, ctx.actor, &[("ok", ok), ("retry", "eat")]);
            vec![Outcome::TailCall(Invocation::new(fork(fs[0]), "take", arg))]
        })
        .on_begin("Philosopher", "have_first", move |_, _| phase("have_first_go"))
        .on_seq("Philosopher", "have_first_go", move |ctx| {
            let i = index_of(ctx.actor);
            let fs = forks_of(i, n);
            let arg =
                fork_arg(FIRST_PHILOSOPHER_ID + i as i64, ctx.actor, &[("ok", "eating"), ("retry", "have_first")]);
            vec![Outcome::TailCall(Invocation::new(fork(fs[1]), "take", arg))]
        })
        .on_begin("Philosopher", "eating", move |_, _| phase("eating_go"))
        .on_seq("Philosopher", "eating_go", move |ctx| {
            let i = index_of(ctx.actor);
            let fs = forks_of(i, n);
            let then = if fs.len() == 2 { "dropped_second" } else { "done" };
            let arg = fork_arg(FIRST_PHILOSOPHER_ID + i as i64, ctx.actor, &[("then", then)]);
            vec![Outcome::TailCall(Invocation::new(fork(*fs.last().expect("at least one fork")), "drop", arg))]
        })
        .on_begin("Philosopher", "dropped_second", move |_, _| phase("dropped_second_go"))
        .on_seq("Philosopher", "dropped_second_go", move |ctx| {
            let i = index_of(ctx.actor);
            let fs = forks_of(i, n);
            let arg = fork_arg(FIRST_PHILOSOPHER_ID + i as i64, ctx.actor, &[("then", "done")]);
            vec![Outcome::TailCall(Invocation::new(fork(fs[0]), "drop", arg))]
        })
        .on_begin("Philosopher", "done", move |_, _| phase("done_go"))
        .on_seq("Philosopher", "done_go", |_| vec![Outcome::End(Value::Null)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{enabled_transitions, BaseTransition, Term};

    #[test]
    fn take_success_tail_calls_the_ok_continuation() {
        let p = dp_tailcall_program(1);
        let arg = fork_arg(42, &philosopher(0), &[("ok", "eating"), ("retry", "eat")]);
        let seq = Term::seq(&fork(0), SeqPoint::with_locals("take_true", arg));
        let ts = enabled_transitions(&p, &seq, Some(&Value::Int(42))).unwrap();
        let BaseTransition::TailCall { call, .. } = &ts[0] else { panic!("{ts:?}") };
        assert_eq!(call.actor, philosopher(0));
        assert_eq!(call.method, "eating");
    }

    #[test]
    fn take_refusal_retries_the_phase() {
        let p = dp_tailcall_program(2);
        let arg = fork_arg(43, &philosopher(1), &[("ok", "have_first"), ("retry", "eat")]);
        let seq = Term::seq(&fork(0), SeqPoint::with_locals("take", arg));
        let ts = enabled_transitions(&p, &seq, Some(&Value::Int(42))).unwrap();
        let BaseTransition::Step { to, .. } = &ts[0] else { panic!() };
        assert_eq!(to.name, "take_false");
    }
}
