//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vactor::oracle::{enabled_runtime_moves, initial_state, Message, Mode, Move, MoveOptions, Process, RuntimeState};
use vactor::scenarios::{dp_general_program, dp_table_program, dp_tailcall_program};
use vactor::semantics::{BaseTransition, Program, SharedProgram, TransitionKind};

/// Small programs whose reachable states feed the rule contracts.
pub fn programs() -> Vec<SharedProgram> {
    vec![
        Arc::new(dp_table_program()),
        Arc::new(dp_general_program(2)),
        Arc::new(dp_general_program(3)),
        Arc::new(dp_tailcall_program(2)),
    ]
}

/// A state reached by `len` random moves, failures included.
pub fn random_state(program: &dyn Program, seed: u64, len: usize) -> RuntimeState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = initial_state(program);
    let opts = MoveOptions { failures: true, check_validity: true };
    for _ in 0..len {
        let moves = enabled_runtime_moves(&s, program, opts).expect("enabled moves");
        // failures are rare so walks still get deep
        let pick = moves.iter().filter(|m| !matches!(m, Move::Failure { .. }) || rng.gen_bool(0.1)).collect::<Vec<_>>();
        let Some(mv) = pick.choose(&mut rng) else { break };
        s = s.apply_move(program, mv, true).expect("enabled move applies");
    }
    s
}

/// Index into [`KINDS`] for coverage counts.
pub fn kind_index(mv: &Move) -> usize {
    match mv {
        Move::Rule { transition, .. } => TransitionKind::ALL.iter().position(|k| *k == transition.kind()).expect("kind"),
        Move::Failure { .. } => 7,
        Move::Timeout { .. } => 8,
    }
}

pub const KINDS: [&str; 9] = ["begin", "step", "end", "sync-call", "tail-call", "async-call", "return", "failure", "timeout"];

fn same_except<K: Ord + Clone, V: PartialEq + Clone>(a: &BTreeMap<K, V>, b: &BTreeMap<K, V>, skip: &[K]) -> bool {
    let strip = |m: &BTreeMap<K, V>| {
        let mut m = m.clone();
        for k in skip {
            m.remove(k);
        }
        m
    };
    strip(a) == strip(b)
}

fn flow_map(s: &RuntimeState) -> BTreeMap<vactor::oracle::RequestId, Message> {
    s.flow.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
}

/// Pre/post contract of one move, stated directly over the two states.
pub fn check_contract(pre: &RuntimeState, mv: &Move, post: &RuntimeState) -> Result<(), String> {
    post.check_invariants()?;
    if !post.digests_exact() {
        return Err("maintained digests drifted from the contents".into());
    }
    let (fpre, fpost) = (flow_map(pre), flow_map(post));
    if post.next_id < pre.next_id {
        return Err("fresh-id counter went backwards".into());
    }
    match mv {
        Move::Failure { actor } => {
            if fpre != fpost || pre.state != post.state {
                return Err("failure touched the flow or the store".into());
            }
            if post.bag.contains_key(actor) || !same_except(&pre.bag, &post.bag, std::slice::from_ref(actor)) {
                return Err("failure must remove exactly the failed process".into());
            }
        }
        Move::Timeout { request } => {
            if !matches!(fpost.get(request), Some(Message::Response(v)) if v.is_error()) {
                return Err("timeout must answer with an error".into());
            }
            if !same_except(&fpre, &fpost, std::slice::from_ref(request)) || pre.bag != post.bag {
                return Err("timeout touched more than its request".into());
            }
        }
        Move::Rule { request, transition } => {
            let actor = transition.actor().clone();
            let others_same = same_except(&pre.bag, &post.bag, std::slice::from_ref(&actor));
            if !others_same {
                return Err("a rule changed another actor's process".into());
            }
            if !same_except(&pre.state, &post.state, std::slice::from_ref(&actor)) {
                return Err("a rule changed another actor's state".into());
            }
            let running_same_request = |s: &RuntimeState| {
                s.bag.get(&actor).is_some_and(|e| &e.request == request && matches!(e.process, Process::Running(_)))
            };
            match transition {
                BaseTransition::Begin { call, .. } => {
                    // non-reentrancy: the actor was idle, and now runs exactly this request
                    if pre.bag.contains_key(&call.actor) {
                        return Err("begin on a busy actor".into());
                    }
                    if pre.bag.values().any(|e| &e.request == request) {
                        return Err("begin of a request already executing".into());
                    }
                    if let Mode::Sync { caller, .. } = &request.mode {
                        let guarded = pre.bag.get(caller).is_some_and(
                            |e| matches!(&e.process, Process::Guarded { waiting_on, .. } if waiting_on == request),
                        );
                        if !guarded {
                            return Err("begin of a sync request whose caller is not waiting".into());
                        }
                    }
                    if !running_same_request(post) {
                        return Err("begin did not start the process".into());
                    }
                    // request persistence
                    if fpre != fpost || pre.state != post.state {
                        return Err("begin must leave the flow and store alone".into());
                    }
                }
                BaseTransition::Step { .. } => {
                    if fpre != fpost || !running_same_request(pre) || !running_same_request(post) {
                        return Err("step must keep the flow and the request".into());
                    }
                }
                BaseTransition::End { value, .. } => {
                    if !matches!(fpre.get(request), Some(Message::Request(_))) {
                        return Err("end of a request that was not pending".into());
                    }
                    // atomic rewrite: answer and removal happen together
                    if fpost.get(request) != Some(&Message::Response(value.clone())) || post.bag.contains_key(&actor) {
                        return Err("end must answer and remove in one move".into());
                    }
                    if !same_except(&fpre, &fpost, std::slice::from_ref(request)) {
                        return Err("end touched other flow entries".into());
                    }
                }
                BaseTransition::TailCall { call, .. } => {
                    if fpost.get(request) != Some(&Message::Request(call.clone())) || post.bag.contains_key(&actor) {
                        return Err("tail call must replace the request and remove in one move".into());
                    }
                    if !same_except(&fpre, &fpost, std::slice::from_ref(request)) {
                        return Err("tail call touched other flow entries".into());
                    }
                }
                BaseTransition::SyncCall { call, .. } => {
                    let new: Vec<_> = fpost.keys().filter(|k| !fpre.contains_key(k)).cloned().collect();
                    let [j] = new.as_slice() else { return Err(format!("sync call added {} ids", new.len())) };
                    if j.n != pre.next_id || fpost[j] != Message::Request(call.clone()) {
                        return Err("sync call must record the call under a fresh id".into());
                    }
                    if j.caller() != Some((&actor, request.n)) {
                        return Err("callee id must name the caller and its request".into());
                    }
                    // guard creation
                    let guarded = post.bag.get(&actor).is_some_and(|e| {
                        &e.request == request && matches!(&e.process, Process::Guarded { waiting_on, .. } if waiting_on == j)
                    });
                    if !guarded || fpost.len() != fpre.len() + 1 {
                        return Err("sync call must guard the caller on the new id".into());
                    }
                }
                BaseTransition::AsyncCall { call, .. } => {
                    let new: Vec<_> = fpost.keys().filter(|k| !fpre.contains_key(k)).cloned().collect();
                    let [j] = new.as_slice() else { return Err(format!("async call added {} ids", new.len())) };
                    if j.is_sync() || j.n != pre.next_id || fpost[j] != Message::Request(call.clone()) {
                        return Err("async call must record the call under a fresh async id".into());
                    }
                    if !running_same_request(post) || fpost.len() != fpre.len() + 1 {
                        return Err("async call must keep the caller running".into());
                    }
                }
                BaseTransition::Return { value, .. } => {
                    let Some(Process::Guarded { waiting_on, .. }) = pre.bag.get(&actor).map(|e| &e.process) else {
                        return Err("return without a guard".into());
                    };
                    if fpre.get(waiting_on) != Some(&Message::Response(value.clone())) {
                        return Err("return of a value that is not the response".into());
                    }
                    // guard consumption
                    if fpost.contains_key(waiting_on) || !running_same_request(post) {
                        return Err("return must consume the response and resume".into());
                    }
                    if !same_except(&fpre, &fpost, std::slice::from_ref(waiting_on)) || pre.state != post.state {
                        return Err("return touched other entries".into());
                    }
                }
            }
        }
    }
    Ok(())
}

/// Every enabled move of `s`, failures and timeouts of idle requests included.
pub fn all_moves(program: &dyn Program, s: &RuntimeState) -> Vec<Move> {
    let mut moves = enabled_runtime_moves(s, program, MoveOptions { failures: true, check_validity: true }).expect("moves");
    for (id, m) in s.flow.iter() {
        if matches!(m, Message::Request(_)) && !s.bag.values().any(|e| &e.request == id) {
            moves.push(Move::Timeout { request: id.clone() });
        }
    }
    moves
}

/// Begins that non-reentrancy forbids: pending requests whose actor is busy.
pub fn busy_begins(program: &dyn Program, s: &RuntimeState) -> Vec<Move> {
    let mut out = Vec::new();
    for (id, m) in s.flow.iter() {
        let Message::Request(call) = m else { continue };
        if !s.bag.contains_key(&call.actor) {
            continue;
        }
        let frag = vactor::semantics::Term::Invocation(call.clone());
        for t in vactor::semantics::enabled_transitions(program, &frag, s.state.get(&call.actor)).expect("transitions") {
            out.push(Move::Rule { request: id.clone(), transition: t });
        }
    }
    out
}

/// Checks every move out of one random state; returns per-kind counts.
pub fn conformance_case(programs: &[SharedProgram], pick: usize, seed: u64, len: usize) -> Result<[usize; 9], String> {
    let program = programs[pick % programs.len()].as_ref();
    let s = random_state(program, seed, len);
    let mut counts = [0; 9];
    for mv in all_moves(program, &s) {
        let post = s.apply_move(program, &mv, true).map_err(|e| format!("{mv}: {e}"))?;
        check_contract(&s, &mv, &post).map_err(|e| format!("{}: {mv}: {e}", program.name()))?;
        counts[kind_index(&mv)] += 1;
    }
    for mv in busy_begins(program, &s) {
        if s.apply_move(program, &mv, true).is_ok() || s.apply_move(program, &mv, false).is_ok() {
            return Err(format!("{}: {mv} re-entered a busy actor", program.name()));
        }
    }
    Ok(counts)
}

/// Kinds of the sixteen figure rules, top to bottom.
pub const FIGURE_KINDS: [TransitionKind; 16] = {
    use TransitionKind::*;
    [Begin, Step, Step, End, End, Begin, Step, Step, End, Begin, SyncCall, Return, Return, SyncCall, Return, End]
};

pub fn golden(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}
