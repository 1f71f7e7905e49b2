//! Exhaustive breadth-first exploration of the oracle with bounded failures.
//!
//! A monitor runs alongside every path and flags:
//!
//! * `finality`: a request is begun after it completed;
//! * `distinct-ids`: two processes run the same request id at once;
//! * `take-after-drop`: a fork take on behalf of a meal starts after the
//!   meal finished, or between its drop and the end of the meal;
//! * `tail-commit`: a fork take re-runs under a request id it already
//!   committed by tail-calling back into the philosopher.
//!
//! Paths are cut at the first violation; the shortest counterexample to each
//! state is kept through parent pointers.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SemanticsError;
use crate::oracle::{enabled_runtime_moves, initial_state, Mode, Move, MoveOptions, RuntimeState};
use crate::semantics::{ActorRef, BaseTransition, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    Finality,
    DistinctIds,
    TakeAfterDrop,
    TailCommit,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::Finality => "finality",
            Property::DistinctIds => "distinct-ids",
            Property::TakeAfterDrop => "take-after-drop",
            Property::TailCommit => "tail-commit",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreConfig {
    pub max_depth: usize,
    /// Failure budget K.
    pub max_failures: usize,
    /// Actors are grouped onto this many components; a failure move kills a group.
    pub max_components: usize,
    /// Turning this off is the mutation the monitor must catch.
    pub check_validity: bool,
    pub max_states: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { max_depth: 40, max_failures: 1, max_components: 2, check_validity: true, max_states: 2_000_000 }
    }
}

/// One edge of the explored graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "edge", rename_all = "snake_case")]
pub enum Edge {
    Move { #[serde(flatten)] mv: Move },
    /// Every process of a component group is lost.
    Fail { group: usize, actors: Vec<ActorRef> },
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edge::Move { mv } => write!(f, "{mv}"),
            Edge::Fail { group, actors } => {
                let names: Vec<String> = actors.iter().map(|a| a.to_string()).collect();
                write!(f, "fail group {group}: {}", names.join(", "))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Meal {
    dropping: bool,
    tainted: bool,
    done: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monitor {
    completed: BTreeSet<u64>,
    /// Keyed by the id of the philosopher's `eat` request.
    meals: BTreeMap<u64, Meal>,
    committed: BTreeSet<(u64, ActorRef)>,
}

impl Monitor {
    /// Records `mv` taken from `before`; returns the first property it breaks.
    pub fn observe(&mut self, before: &RuntimeState, mv: &Move) -> Option<Property> {
        let Move::Rule { request, transition } = mv else { return None };
        match transition {
            BaseTransition::Begin { call, .. } => {
                if self.completed.contains(&request.n) {
                    return Some(Property::Finality);
                }
                if before.bag.values().any(|e| e.request == *request) {
                    return Some(Property::DistinctIds);
                }
                let fork = call.actor.type_name() == "Fork";
                if fork && call.method == "take" && self.committed.contains(&(request.n, call.actor.clone())) {
                    return Some(Property::TailCommit);
                }
                if call.actor.type_name() == "Philosopher" && call.method == "eat" {
                    self.meals.insert(request.n, Meal::default());
                }
                if fork {
                    // a synchronous fork call belongs to the caller's request;
                    // a tail-called one runs under the meal's own id
                    let meal = match &request.mode {
                        Mode::Sync { caller_req, .. } => *caller_req,
                        Mode::Async => request.n,
                    };
                    let st = self.meals.entry(meal).or_default();
                    match call.method.as_str() {
                        "drop" => {
                            st.dropping = true;
                            st.tainted = false;
                        }
                        "take" if st.done => return Some(Property::TakeAfterDrop),
                        "take" if st.dropping => st.tainted = true,
                        _ => {}
                    }
                }
            }
            BaseTransition::End { actor, .. } => {
                self.completed.insert(request.n);
                if actor.type_name() == "Philosopher" && !request.is_sync() {
                    let st = self.meals.entry(request.n).or_default();
                    if st.tainted {
                        return Some(Property::TakeAfterDrop);
                    }
                    st.done = true;
                }
            }
            BaseTransition::TailCall { actor, from, .. } if actor.type_name() == "Fork" && from.name == "take_true" => {
                self.committed.insert((request.n, actor.clone()));
            }
            _ => {}
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub property: Property,
    pub prefix: Vec<Edge>,
    pub state_hash: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub program: String,
    pub states: usize,
    pub edges: usize,
    pub max_depth_seen: usize,
    /// States left unexpanded because they sit at the depth bound.
    pub truncated_at_depth: usize,
    /// The state budget ran out.
    pub incomplete: bool,
    pub violations: Vec<Violation>,
}

impl ExploreReport {
    pub fn count(&self, p: Property) -> usize {
        self.violations.iter().filter(|v| v.property == p).count()
    }
}

impl fmt::Display for ExploreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {}", self.program)?;
        writeln!(f, "states {} edges {} depth {}", self.states, self.edges, self.max_depth_seen)?;
        writeln!(f, "truncated at depth {}{}", self.truncated_at_depth, if self.incomplete { " (incomplete)" } else { "" })?;
        for p in [Property::Finality, Property::DistinctIds, Property::TakeAfterDrop, Property::TailCommit] {
            writeln!(f, "{p}: {} violation(s)", self.count(p))?;
        }
        if let Some(v) = self.violations.first() {
            writeln!(f, "first counterexample ({}):", v.property)?;
            for (i, e) in v.prefix.iter().enumerate() {
                writeln!(f, "  {:>3}. {e}", i + 1)?;
            }
        }
        Ok(())
    }
}

struct Vertex {
    parent: Option<usize>,
    via: Option<Edge>,
}

/// Successors of one explored state.
fn successors(
    program: &dyn Program,
    s: &RuntimeState,
    failures: usize,
    groups: &BTreeMap<ActorRef, usize>,
    cfg: &ExploreConfig,
) -> Result<Vec<(Edge, RuntimeState)>, SemanticsError> {
    let opts = MoveOptions { failures: false, check_validity: cfg.check_validity };
    let mut out = Vec::new();
    for mv in enabled_runtime_moves(s, program, opts)? {
        let next = s.apply_move(program, &mv, cfg.check_validity)?;
        out.push((Edge::Move { mv }, next));
    }
    if failures < cfg.max_failures {
        let mut by_group: BTreeMap<usize, Vec<ActorRef>> = BTreeMap::new();
        for a in s.bag.keys() {
            let g = groups.get(a).copied().unwrap_or(0);
            by_group.entry(g).or_default().push(a.clone());
        }
        for (group, actors) in by_group {
            let mut next = s.clone();
            for a in &actors {
                next = next.apply_failure(a);
            }
            out.push((Edge::Fail { group, actors }, next));
        }
    }
    Ok(out)
}

fn groups_of(program: &dyn Program, components: usize) -> BTreeMap<ActorRef, usize> {
    program.actors().into_iter().enumerate().map(|(i, a)| (a, i % components.max(1))).collect()
}

fn prefix(vertices: &[Vertex], mut at: usize) -> Vec<Edge> {
    let mut out = Vec::new();
    while let Some(e) = &vertices[at].via {
        out.push(e.clone());
        at = vertices[at].parent.expect("edge has a parent");
    }
    out.reverse();
    out
}

/// Breadth-first search over (state, monitor, failures used).
pub fn explore(program: &dyn Program, cfg: &ExploreConfig) -> Result<ExploreReport, SemanticsError> {
    explore_with(program, cfg, |_, _| {})
}

/// Like [`explore`], calling `visit` with every distinct state and the
/// failure count used to reach it, in breadth-first order.
pub fn explore_with<F>(program: &dyn Program, cfg: &ExploreConfig, mut visit: F) -> Result<ExploreReport, SemanticsError>
where
    F: FnMut(&RuntimeState, usize),
{
    let groups = groups_of(program, cfg.max_components);
    let start = (initial_state(program), Monitor::default(), 0usize);
    let mut seen: HashSet<(RuntimeState, Monitor, usize)> = HashSet::new();
    seen.insert(start.clone());
    let mut vertices = vec![Vertex { parent: None, via: None }];
    let mut queue = VecDeque::from([(0usize, 0usize, start)]);
    let mut report = ExploreReport { program: program.name(), states: 1, ..Default::default() };
    while let Some((at, depth, (s, monitor, failures))) = queue.pop_front() {
        visit(&s, failures);
        report.max_depth_seen = report.max_depth_seen.max(depth);
        let next = successors(program, &s, failures, &groups, cfg)?;
        if depth >= cfg.max_depth {
            if !next.is_empty() {
                report.truncated_at_depth += 1;
            }
            continue;
        }
        for (edge, t) in next {
            report.edges += 1;
            let mut m = monitor.clone();
            let used = failures + usize::from(matches!(edge, Edge::Fail { .. }));
            let broken = match &edge {
                Edge::Move { mv } => m.observe(&s, mv),
                Edge::Fail { .. } => None,
            };
            let key = (t, m, used);
            if let Some(property) = broken {
                let mut path = prefix(&vertices, at);
                path.push(edge);
                report.violations.push(Violation { property, prefix: path, state_hash: key.0.hash() });
                continue;
            }
            if seen.contains(&key) {
                continue;
            }
            if seen.len() >= cfg.max_states {
                report.incomplete = true;
                continue;
            }
            seen.insert(key.clone());
            vertices.push(Vertex { parent: Some(at), via: Some(edge) });
            report.states += 1;
            queue.push_back((vertices.len() - 1, depth + 1, key));
        }
    }
    Ok(report)
}

/// Replays a counterexample prefix from the initial state.
pub fn replay_prefix(
    program: &dyn Program,
    prefix: &[Edge],
    check_validity: bool,
) -> Result<(RuntimeState, Option<Property>), SemanticsError> {
    let mut s = initial_state(program);
    let mut m = Monitor::default();
    let mut broken = None;
    for e in prefix {
        match e {
            Edge::Move { mv } => {
                broken = broken.or(m.observe(&s, mv));
                s = s.apply_move(program, mv, check_validity)?;
            }
            Edge::Fail { actors, .. } => {
                for a in actors {
                    s = s.apply_failure(a);
                }
            }
        }
    }
    Ok((s, broken))
}
