//! Deterministic driver for a simulated deployment.
//!
//! Each step advances simulated time by one quantum, fires scripted crashes,
//! departures and joins, lets membership detect silent crashes, and then
//! either runs a reconciliation phase or one node action picked uniformly by
//! the seeded generator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ScenarioError;
use crate::fabric::{Body, ComponentId, Envelope, Fabric, ProcessId};
use crate::node::{bootstrap_envelope, Cluster, Node, NodeAction};
use crate::oracle::{initial_state_from, valid, Bag, Message, RuntimeState};
use crate::reconcile::Reconciler;
use crate::semantics::Value;
use crate::trace::{Event, Header, Outcome, Trace, TRACE_FORMAT, TRACE_VERSION};

use super::scenario::{FailureMode, Scenario};

pub struct World {
    pub scenario: Scenario,
    pub cluster: Cluster,
    pub nodes: BTreeMap<ComponentId, Node>,
    reconciler: Option<Reconciler>,
    rounds: u32,
    failures_fired: Vec<bool>,
    joins_fired: Vec<bool>,
    unpark_due: bool,
    outcome: Option<Outcome>,
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<World, ScenarioError> {
        scenario.validate()?;
        let program = scenario.program()?;
        let mut cluster = Cluster::new(
            program.clone(),
            scenario.runtime_config(),
            Fabric::new(scenario.fabric_config()),
            ChaCha8Rng::seed_from_u64(scenario.seed),
        );
        let mut nodes = BTreeMap::new();
        for c in &scenario.components {
            let id = ComponentId::new(&c.id);
            cluster
                .fabric
                .join(id.clone(), c.actor_types.iter().cloned().collect())
                .map_err(|e| ScenarioError::Malformed(e.to_string()))?;
            let node = Node::new(ProcessId { component: id.clone(), incarnation: 0 }, &cluster.config);
            emit_join(&mut cluster, &id);
            nodes.insert(id, node);
        }
        for pin in &scenario.pins {
            let id = ComponentId::new(&pin.component);
            let comp = cluster.fabric.component(&id).expect("validated").clone();
            let out = cluster
                .store
                .place(&pin.actor, &comp, None)
                .map_err(|e| ScenarioError::Malformed(format!("pin {}: {e}", pin.actor)))?;
            cluster.emit(Event::Place {
                by: None,
                actor: pin.actor.clone(),
                component: out.won,
                installed: out.installed,
                version: out.version,
            });
        }
        let init = initial_state_from(program.as_ref(), 0);
        cluster.flow = init.flow.clone();
        cluster.next_id = init.next_id;
        let (id, msg) = init.flow.iter().next().expect("main request");
        let Message::Request(call) = msg else { unreachable!("initial flow holds a request") };
        cluster.route(None, None, bootstrap_envelope(id.clone(), call.clone()));
        Ok(World {
            scenario: scenario.clone(),
            cluster,
            nodes,
            reconciler: None,
            rounds: 0,
            failures_fired: vec![false; scenario.failures.len()],
            joins_fired: vec![false; scenario.joins.len()],
            unpark_due: false,
            outcome: None,
        })
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn is_reconciling(&self) -> bool {
        self.reconciler.is_some()
    }

    fn bag_except(&self, skip: Option<&ComponentId>) -> Bag {
        let mut bag = Bag::new();
        for (c, n) in &self.nodes {
            if Some(c) != skip {
                bag.extend(n.bag().iter().map(|(a, e)| (a.clone(), e.clone())));
            }
        }
        bag
    }

    /// Digest of `bag_except(skip)`, without building it.
    fn bag_digest_except(&self, skip: Option<&ComponentId>) -> u128 {
        self.nodes.iter().filter(|(c, _)| Some(*c) != skip).fold(0u128, |acc, (_, n)| acc.wrapping_add(n.bag().digest()))
    }

    /// The deployment seen as an oracle state.
    pub fn projection(&self) -> RuntimeState {
        self.cluster.project(self.bag_except(None))
    }

    /// Projects the loss of every process on `c`, then forgets them.
    fn lose(&mut self, c: &ComponentId) {
        let others = self.bag_digest_except(Some(c));
        let Some(node) = self.nodes.get_mut(c) else { return };
        let mut bag = node.bag().clone();
        let actors: Vec<_> = bag.keys().cloned().collect();
        for actor in actors {
            let pre = self.cluster.projection_hash(others.wrapping_add(bag.digest()));
            bag.remove(&actor);
            let post = self.cluster.projection_hash(others.wrapping_add(bag.digest()));
            self.cluster.emit(Event::Failure { component: c.clone(), actor, pre, post });
        }
        node.clear_procs();
        node.pending.clear();
        node.crashed = true;
    }

    fn fire_scripted(&mut self, lost: &mut Vec<ComponentId>) {
        let (step, now) = (self.cluster.step, self.cluster.now_ms());
        for i in 0..self.scenario.failures.len() {
            let f = self.scenario.failures[i].clone();
            if self.failures_fired[i] || !f.due(step, now) {
                continue;
            }
            self.failures_fired[i] = true;
            let id = ComponentId::new(&f.component);
            let live = self.nodes.get(&id).is_some_and(|n| !n.crashed);
            if !live {
                continue;
            }
            match f.mode {
                FailureMode::Crash => {
                    if self.cluster.fabric.fail(&id).is_ok() {
                        if let Some(n) = self.nodes.get_mut(&id) {
                            n.crashed = true;
                        }
                        self.cluster.emit(Event::Crash { component: id });
                    }
                }
                FailureMode::Leave => {
                    if let Ok(m) = self.cluster.fabric.leave(&id) {
                        let epoch = m.epoch;
                        self.cluster.emit(Event::Leave { component: id.clone(), epoch });
                        lost.push(id);
                    }
                }
            }
        }
        for i in 0..self.scenario.joins.len() {
            let j = self.scenario.joins[i].clone();
            if self.joins_fired[i] || !j.due(step, now) {
                continue;
            }
            self.joins_fired[i] = true;
            let id = ComponentId::new(&j.component);
            match self.cluster.fabric.join(id.clone(), j.actor_types.iter().cloned().collect()) {
                Ok(_) => {
                    let process = self.cluster.fabric.component(&id).expect("joined").process();
                    emit_join(&mut self.cluster, &id);
                    self.nodes.insert(id, Node::new(process, &self.cluster.config));
                    self.unpark_due = true;
                }
                Err(e) => self.cluster.emit(Event::Anomaly { message: format!("join {id}: {e}") }),
            }
        }
    }

    /// Routes parked requests that some member can now host.
    fn unpark(&mut self) {
        self.unpark_due = false;
        let ready: Vec<u64> = self
            .cluster
            .parked
            .iter()
            .filter(|(_, p)| self.cluster.fabric.members().any(|c| c.can_host(p.envelope.target.type_name())))
            .map(|(n, _)| *n)
            .collect();
        for n in ready {
            let p = self.cluster.parked.remove(&n).expect("listed");
            self.cluster.emit(Event::Unpark { request: p.envelope.request.clone() });
            self.cluster.route(None, None, p.envelope);
        }
    }

    /// Answers parked requests whose invocation timeout elapsed.
    fn expire(&mut self) {
        let now = self.cluster.now_ms();
        let due: Vec<u64> = self.cluster.parked.iter().filter(|(_, p)| p.deadline_ms <= now).map(|(n, _)| *n).collect();
        for n in due {
            let p = self.cluster.parked.remove(&n).expect("listed");
            let env = p.envelope;
            let bag = self.bag_digest_except(None);
            let pre = self.cluster.projection_hash(bag);
            let error = Value::error("timeout");
            self.cluster.flow.insert(env.request.clone(), Message::Response(error.clone()));
            let post = self.cluster.projection_hash(bag);
            self.cluster.emit(Event::Timeout { request: env.request.clone(), pre, post });
            let to = if env.request.is_sync() { env.origin.clone() } else { env.sender.clone() };
            let m = self.cluster.fabric.membership();
            let partition = to.filter(|p| m.is_live(p)).and_then(|p| self.cluster.fabric.partition_of(&p.component));
            if let Some(partition) = partition {
                let reply = Envelope { body: Body::Response(error), sender: None, ..env };
                self.cluster.append(None, partition, reply);
            }
        }
    }

    fn future_events(&self) -> bool {
        self.cluster.fabric.next_detection_ms().is_some()
            || !self.cluster.parked.is_empty()
            || self.failures_fired.iter().any(|f| !f)
            || self.joins_fired.iter().any(|f| !f)
    }

    /// Runs one scheduler step. Returns false once the run is over.
    pub fn step(&mut self) -> bool {
        if self.outcome.is_some() {
            return false;
        }
        if self.cluster.step >= self.scenario.max_steps {
            self.finish(Outcome::Limit);
            return false;
        }
        self.cluster.step += 1;
        let now = self.cluster.step * self.cluster.config.quantum_ms;
        let mut lost = Vec::new();
        for c in self.cluster.fabric.advance_to(now) {
            let epoch = self.cluster.fabric.membership().epoch;
            self.cluster.emit(Event::Detect { component: c.clone(), epoch });
            lost.push(c);
        }
        self.fire_scripted(&mut lost);
        for c in &lost {
            self.lose(c);
        }
        if !lost.is_empty() {
            match &mut self.reconciler {
                Some(r) => r.restart(lost),
                None => {
                    self.rounds += 1;
                    self.reconciler = Some(Reconciler::new(self.rounds, lost));
                }
            }
        }
        if let Some(r) = &mut self.reconciler {
            if r.step(&mut self.cluster).is_some() {
                self.reconciler = None;
            }
            return true;
        }
        if self.unpark_due {
            self.unpark();
        }
        self.expire();

        let mut actions: Vec<(ComponentId, NodeAction)> = Vec::new();
        for (c, n) in &self.nodes {
            actions.extend(n.actions(&self.cluster.fabric).into_iter().map(|a| (c.clone(), a)));
        }
        if actions.is_empty() {
            if self.future_events() {
                return true;
            }
            let s = self.projection();
            let done = s.bag.is_empty() && s.flow.iter().all(|(id, m)| m.is_response() || !valid(id, &s.bag));
            self.finish(if done { Outcome::Completed } else { Outcome::Stuck });
            return false;
        }
        let (c, action) = actions[self.cluster.rng.gen_range(0..actions.len())].clone();
        let others = self.bag_digest_except(Some(&c));
        let node = self.nodes.get_mut(&c).expect("listed node");
        node.perform(&action, &mut self.cluster, others);
        // only a begin can put an actor on a second component
        if let NodeAction::Begin(a) = &action {
            let elsewhere = self.nodes.iter().any(|(d, n)| d != &c && n.procs.contains_key(a));
            if elsewhere && self.nodes[&c].procs.contains_key(a) {
                self.cluster.emit(Event::Anomaly { message: format!("{a} runs on two components") });
            }
        }
        true
    }

    fn finish(&mut self, outcome: Outcome) {
        let final_hash = self.cluster.projection_hash(self.bag_digest_except(None));
        self.cluster.emit(Event::End { outcome: outcome.clone(), final_hash });
        self.outcome = Some(outcome);
    }

    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    pub fn into_trace(self) -> Trace {
        Trace {
            header: Header {
                format: TRACE_FORMAT.to_string(),
                version: TRACE_VERSION,
                program: self.cluster.program.name(),
                seed: self.scenario.seed,
                scenario: self.scenario.to_toml(),
            },
            records: self.cluster.records,
        }
    }
}

fn emit_join(cluster: &mut Cluster, id: &ComponentId) {
    let incarnation = cluster.fabric.component(id).map_or(0, |c| c.incarnation);
    let partition = cluster.fabric.partition_of(id).unwrap_or_default();
    let epoch = cluster.fabric.membership().epoch;
    cluster.emit(Event::Join { component: id.clone(), incarnation, partition, epoch });
}

/// Runs a scenario to completion and returns its trace.
pub fn run(scenario: &Scenario) -> Result<Trace, ScenarioError> {
    let mut world = World::new(scenario)?;
    world.run_to_end();
    Ok(world.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{ComponentSpec, FailureSpec};

    #[test]
    fn failure_free_run_completes() {
        let s = Scenario::with_defaults("dp_table", 2).unwrap();
        let t = run(&s).unwrap();
        assert_eq!(t.outcome(), Some(&Outcome::Completed));
        assert_eq!(t.rules().count(), 12);
        assert!(!t.records.iter().any(|r| matches!(r.event, Event::Anomaly { .. })));
    }

    #[test]
    fn same_seed_same_trace() {
        let mut s = Scenario::with_defaults("dp_general:3", 3).unwrap();
        s.seed = 11;
        assert_eq!(run(&s).unwrap().to_jsonl(), run(&s).unwrap().to_jsonl());
    }

    #[test]
    fn no_capable_component_times_out() {
        let mut s = Scenario::with_defaults("dp_table", 1).unwrap();
        s.config.invoke_timeout_s = 5;
        s.components = vec![ComponentSpec { id: "c1".into(), actor_types: vec!["Philosopher".into()] }];
        let t = run(&s).unwrap();
        let timeout = t.records.iter().find(|r| matches!(r.event, Event::Timeout { .. })).expect("timeout");
        let park = t.records.iter().find(|r| matches!(r.event, Event::Park { .. })).expect("park");
        assert_eq!(timeout.t_ms - park.t_ms, 5_000);
        // the table has no rule for an error reply, so the philosopher waits forever
        assert_eq!(t.outcome(), Some(&Outcome::Stuck));
    }

    #[test]
    fn crash_is_detected_after_grace() {
        let mut s = Scenario::with_defaults("dp_general:2", 2).unwrap();
        s.failures.push(FailureSpec::parse("c1@3").unwrap());
        let t = run(&s).unwrap();
        let crash = t.records.iter().find(|r| matches!(r.event, Event::Crash { .. })).unwrap();
        let detect = t.records.iter().find(|r| matches!(r.event, Event::Detect { .. })).unwrap();
        assert_eq!(detect.t_ms - crash.t_ms, 10_000);
        assert_eq!(t.reports().count(), 1);
        assert_eq!(t.outcome(), Some(&Outcome::Completed));
    }
}
