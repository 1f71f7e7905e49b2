//! Failure recovery end to end: what reconciliation forwards, purges and
//! leaves alone.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use vactor::fabric::Body;
use vactor::reconcile::reconcile;
use vactor::sim::{refine_trace, run, ComponentSpec, FailureMode, FailureSpec, Scenario, World};
use vactor::trace::{Event, Outcome, Trace};

fn load(name: &str) -> Scenario {
    Scenario::load(&common::scenario_path(name)).unwrap()
}

fn all_types(ids: &[&str]) -> Vec<ComponentSpec> {
    ids.iter()
        .map(|id| ComponentSpec {
            id: id.to_string(),
            actor_types: ["Fork", "Philosopher", "Table"].iter().map(|t| t.to_string()).collect(),
        })
        .collect()
}

fn conforms(t: &Trace) {
    let v = refine_trace(t).unwrap();
    assert!(v.conforms(), "{v}\n{}", t.summary());
}

fn partition_of(t: &Trace, c: &str) -> usize {
    t.records
        .iter()
        .find_map(|r| match &r.event {
            Event::Join { component, partition, .. } if component.0 == c => Some(*partition),
            _ => None,
        })
        .expect("component joined")
}

/// Final projection equals the failure-free run's, up to request renaming.
fn same_end_as_clean(s: &Scenario) {
    let mut w = World::new(s).unwrap();
    w.run_to_end();
    let mut clean = s.clone();
    clean.failures.clear();
    let mut reference = World::new(&clean).unwrap();
    reference.run_to_end();
    assert_eq!(w.projection().normalized(), reference.projection().normalized());
}

#[test]
fn failure_with_every_request_answered_forwards_nothing() {
    // c3 hosts only the table, whose one request ends right away
    let mut s = Scenario::with_defaults("dp_general:2", 3).unwrap();
    s.seed = 4;
    s.components = all_types(&["c1", "c2"]);
    s.components.push(ComponentSpec { id: "c3".into(), actor_types: vec!["Table".into()] });
    let clean = run(&s).unwrap();
    let served = clean
        .records
        .iter()
        .find(|r| matches!(&r.event, Event::Append { envelope, .. } if envelope.target.type_name() == "Table" && matches!(envelope.body, Body::Response(_))))
        .expect("serve answered")
        .step;
    s.failures.push(FailureSpec::parse(&format!("c3@{}", served + 1)).unwrap());
    let t = run(&s).unwrap();
    assert_eq!(t.outcome(), Some(&Outcome::Completed), "{}", t.summary());
    conforms(&t);
    let reports: Vec<_> = t.reports().collect();
    assert_eq!(reports.len(), 1);
    let r = reports[0];
    assert!(r.forwarded.is_empty(), "{r}");
    assert!(r.matched.contains(&0) && r.in_flight.is_empty(), "{r}");
    assert_eq!(r.purged, vec![partition_of(&t, "c3")]);
    same_end_as_clean(&s);
}

#[test]
fn failure_during_reconciliation_restarts_and_converges() {
    let mut s = Scenario::with_defaults("dp_general:3", 4).unwrap();
    s.seed = 11;
    s.granularity = vactor::node::Granularity::Transition;
    s.components = all_types(&["c1", "c2", "c3", "c4"]);
    for (c, step) in [("c2", 30), ("c3", 31)] {
        s.failures.push(FailureSpec { component: c.into(), at_step: Some(step), at_ms: None, mode: FailureMode::Leave });
    }
    let t = run(&s).unwrap();
    assert_eq!(t.outcome(), Some(&Outcome::Completed), "{}", t.summary());
    conforms(&t);
    let reports: Vec<_> = t.reports().collect();
    assert_eq!(reports.len(), 1, "one round absorbs both failures");
    let r = reports[0];
    assert!(r.restarts >= 1, "{r}");
    let failed: BTreeSet<&str> = r.failed.iter().map(|c| c.0.as_str()).collect();
    assert_eq!(failed, BTreeSet::from(["c2", "c3"]));
    let mut purged = r.purged.clone();
    purged.sort();
    assert_eq!(purged, vec![partition_of(&t, "c2"), partition_of(&t, "c3")]);
    // a caller lost mid-call leaves its callee's answer behind, so compare
    // the store and check every request was answered
    let mut w = World::new(&s).unwrap();
    w.run_to_end();
    let mut clean = s.clone();
    clean.failures.clear();
    let mut reference = World::new(&clean).unwrap();
    reference.run_to_end();
    let (end, want) = (w.projection(), reference.projection());
    assert_eq!(end.state, want.state);
    assert!(end.flow.iter().all(|(_, m)| m.is_response()));
}

#[test]
fn reconciling_again_finds_nothing_to_do() {
    let s = load("fork_host_crash.toml");
    let mut w = World::new(&s).unwrap();
    w.run_to_end();
    assert_eq!(w.outcome(), Some(&Outcome::Completed));
    let before = w.projection();
    let r = reconcile(&mut w.cluster, 2, []);
    assert!(r.forwarded.is_empty(), "{r}");
    assert!(r.settled.is_empty() && r.purged.is_empty() && r.in_flight.is_empty(), "{r}");
    assert_eq!(w.projection(), before);
}

#[test]
fn expected_unsafe_small_window_misses_requests() {
    let s = load("small_window_unsafe.toml");
    assert!(s.name.starts_with("expected-unsafe"));
    assert!(s.config.scan_window_s < s.config.grace_period_s);
    let t = run(&s).unwrap();
    // the oracle still accepts the run: losing requests is not a rule violation
    conforms(&t);
    let r = t.reports().next().expect("a reconciliation ran");
    let safe = run(&load("fork_host_crash.toml")).unwrap();
    let wanted: BTreeSet<u64> = safe.reports().next().unwrap().forwarded.iter().map(|f| f.request.n).collect();
    assert_eq!(wanted, BTreeSet::from([5, 7, 8]));
    let got: BTreeSet<u64> = r.forwarded.iter().map(|f| f.request.n).collect();
    assert!(wanted.difference(&got).count() > 0, "nothing was missed: {r}");
    assert_ne!(t.outcome(), Some(&Outcome::Completed), "a missed request must leave work undone");
}

#[test]
fn only_the_latest_tail_generation_is_forwarded() {
    let s = load("tailcall_crash.toml");
    let t = run(&s).unwrap();
    assert_eq!(t.outcome(), Some(&Outcome::Completed), "{}", t.summary());
    conforms(&t);
    let detect = t.records.iter().find(|r| matches!(r.event, Event::Detect { .. })).expect("detected").step;
    // latest generation of every request before detection, read off the log
    let mut latest: BTreeMap<u64, u32> = BTreeMap::new();
    for r in t.records.iter().filter(|r| r.step < detect) {
        if let Event::Append { envelope, .. } = &r.event {
            if matches!(envelope.body, Body::Request(_)) {
                let g = latest.entry(envelope.request.n).or_default();
                *g = (*g).max(envelope.generation);
            }
        }
    }
    let r = t.reports().next().expect("report");
    assert!(!r.forwarded.is_empty());
    assert!(latest.values().any(|g| *g > 0), "no tail call before the crash");
    for f in &r.forwarded {
        assert_eq!(Some(&f.generation), latest.get(&f.request.n), "{r}");
    }
    for (n, g) in &r.superseded {
        assert!(g < &latest[n], "#{n} g{g} is the latest generation yet superseded");
    }
    // no older generation ever ran again after the forward
    let forwarded_at = t.records.iter().find(|r| matches!(r.event, Event::Report { .. })).unwrap().step;
    for rec in t.records.iter().filter(|r| r.step >= forwarded_at) {
        if let Event::Append { envelope, by: None, .. } = &rec.event {
            if let (Body::Request(_), Some(g)) = (&envelope.body, latest.get(&envelope.request.n)) {
                assert!(envelope.generation >= *g, "stale generation resent: {envelope}");
            }
        }
    }
}
