//! Many callers on one component, each making one synchronous call.
//!
//! `Hub:h.start` spawns `Caller:k.call` for every `k` asynchronously; caller
//! `k` calls `Echo:k.ping(k)` and answers with the reply.

use crate::semantics::{ActorRef, CodeProgram, Invocation, Outcome, SeqPoint, Value};

pub fn caller(k: usize) -> ActorRef {
    ActorRef::of("Caller", &format!("c{k}"))
}

pub fn echo(k: usize) -> ActorRef {
    ActorRef::of("Echo", &format!("e{k}"))
}

pub fn fanout_program(n: usize) -> CodeProgram {
    let mut prog = CodeProgram::new(format!("fanout:{n}"), Invocation::new(ActorRef::of("Hub", "h"), "start", Value::Null))
        .deterministic(true);
    for k in 0..n {
        prog = prog.actor(caller(k)).actor(echo(k));
    }
    prog.on_begin("Hub", "start", |_, _| vec![SeqPoint::with_locals("spawn", Value::Int(0))])
        .on_seq("Hub", "spawn", move |ctx| {
            let k = ctx.locals.as_int().unwrap_or(0) as usize;
            if k < n {
                vec![Outcome::AsyncCall {
                    call: Invocation::new(caller(k), "call", Value::Int(k as i64)),
                    then: SeqPoint::with_locals("spawn", Value::Int(k as i64 + 1)),
                }]
            } else {
                vec![Outcome::End(Value::Null)]
            }
        })
        .on_begin("Caller", "call", |_, arg| vec![SeqPoint::with_locals("call", arg.clone())])
        .on_seq("Caller", "call", |ctx| {
            let k = ctx.locals.as_int().unwrap_or(0) as usize;
            vec![Outcome::SyncCall { call: Invocation::new(echo(k), "ping", ctx.locals.clone()), then: SeqPoint::new("wait") }]
        })
        .on_return("Caller", "wait", |_, v, _| vec![SeqPoint::with_locals("reply", v.clone())])
        .on_seq("Caller", "reply", |ctx| vec![Outcome::End(ctx.locals.clone())])
        .on_begin("Echo", "ping", |_, arg| vec![SeqPoint::with_locals("pong", arg.clone())])
        .on_seq("Echo", "pong", |ctx| vec![Outcome::End(ctx.locals.clone())])
}
