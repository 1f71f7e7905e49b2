//! Simulator runs, checked through their traces.

mod common;

use vactor::oracle::Message;
use vactor::scenarios::{dp_general_program, dp_table_program};
use vactor::semantics::{ActorRef, BaseTransition, Program, SharedProgram, Value};
use vactor::sim::{explore, explore_with, refine_trace, replay_prefix, run, ComponentSpec, ExploreConfig, FailureSpec, Scenario, World};
use vactor::trace::{Event, Outcome, Trace};

fn shared(p: impl Program + 'static) -> SharedProgram {
    std::sync::Arc::new(p)
}

fn split_table() -> Scenario {
    let mut s = Scenario::with_defaults("dp_table", 1).unwrap();
    s.components = vec![
        ComponentSpec { id: "c1".into(), actor_types: vec!["Philosopher".into()] },
        ComponentSpec { id: "c2".into(), actor_types: vec!["Fork".into()] },
    ];
    s
}

fn step_of(t: &Trace, pred: impl Fn(&BaseTransition) -> bool) -> u64 {
    t.records
        .iter()
        .find(|r| matches!(&r.event, Event::Rule { transition, .. } if pred(transition)))
        .map(|r| r.step)
        .expect("rule in trace")
}

fn count(t: &Trace, pred: impl Fn(&BaseTransition) -> bool) -> usize {
    t.rules().filter(|(_, _, tr)| pred(tr)).count()
}

fn begins(method: &'static str) -> impl Fn(&BaseTransition) -> bool {
    move |t| matches!(t, BaseTransition::Begin { call, .. } if call.method == method)
}

#[test]
fn dining_seed_seven_is_reproducible() {
    let s = Scenario::load(&common::scenario_path("dining.toml")).unwrap();
    assert_eq!(s.seed, 7);
    assert_eq!(run(&s).unwrap().to_jsonl(), run(&s).unwrap().to_jsonl());
}

#[test]
fn failure_free_run_releases_the_fork_and_answers_eat() {
    let s = Scenario::with_defaults("dp_table", 2).unwrap();
    let mut w = World::new(&s).unwrap();
    w.run_to_end();
    assert_eq!(w.outcome(), Some(&Outcome::Completed));
    let p = w.projection();
    assert_eq!(p.state.get(&ActorRef::of("Fork", "f")), Some(&Value::Int(0)));
    let (_, eat) = p.flow.by_number(0).unwrap();
    assert_eq!(eat, &Message::Response(Value::Null));
}

#[test]
fn losing_the_philosopher_after_take_begins_drops_once() {
    let clean = run(&split_table()).unwrap();
    let take = step_of(&clean, begins("take"));
    let mut s = split_table();
    s.failures.push(FailureSpec::parse(&format!("c1@{}", take + 1)).unwrap());
    s.joins.push(vactor::sim::JoinSpec {
        component: "c3".into(),
        actor_types: vec!["Philosopher".into()],
        at_step: Some(take + 2),
        at_ms: None,
    });
    let mut w = World::new(&s).unwrap();
    w.run_to_end();
    let p = w.projection();
    let t = w.into_trace();
    assert_eq!(t.outcome(), Some(&Outcome::Completed), "{}", t.summary());
    assert!(refine_trace(&t).unwrap().conforms());
    assert_eq!(t.reports().count(), 1);
    assert_eq!(p.flow.by_number(0).map(|(_, m)| m), Some(&Message::Response(Value::Null)));
    assert_eq!(count(&t, |tr| matches!(tr, BaseTransition::End { value, .. } if *value == Value::Null && tr.actor().type_name() == "Fork")), 1);
    assert_eq!(count(&t, begins("drop")), 1, "{}", t.summary());
    assert_eq!(p.state.get(&ActorRef::of("Fork", "f")), Some(&Value::Int(0)));
}

#[test]
fn no_failure_budget_no_violations() {
    for prog in [shared(dp_table_program()), shared(dp_general_program(2))] {
        let mut terminal = 0;
        let cfg = ExploreConfig { max_failures: 0, max_depth: 60, ..ExploreConfig::default() };
        let r = explore_with(prog.as_ref(), &cfg, |s, failures| {
            assert_eq!(failures, 0);
            terminal += usize::from(s.is_terminal());
        })
        .unwrap();
        assert!(r.violations.is_empty(), "{r}");
        assert!(terminal > 0);
    }
}

#[test]
fn every_counterexample_replays_to_its_hash() {
    for prog in [shared(dp_table_program()), shared(dp_general_program(1))] {
        let cfg = ExploreConfig { check_validity: false, max_depth: 30, ..ExploreConfig::default() };
        let r = explore(prog.as_ref(), &cfg).unwrap();
        assert!(!r.violations.is_empty(), "{}", prog.name());
        for v in &r.violations {
            let (s, broken) = replay_prefix(prog.as_ref(), &v.prefix, false).unwrap();
            assert_eq!(s.hash(), v.state_hash);
            assert_eq!(broken, Some(v.property));
        }
    }
}

#[test]
fn trace_round_trips_through_json_lines() {
    let s = Scenario::load(&common::scenario_path("fork_host_crash.toml")).unwrap();
    let t = run(&s).unwrap();
    let text = t.to_jsonl();
    assert_eq!(Trace::from_jsonl(&text).unwrap(), t);
}
