//! Closure of a program's transition relation under state extension: adding
//! entries for unrelated actors must never change what is enabled.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::program::{fragment_actor, Program};
use super::term::{ActorRef, PersistentState, Term, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureViolation {
    pub fragment: Term,
    pub base: PersistentState,
    pub extended: PersistentState,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClosureReport {
    pub checked: usize,
    pub violations: Vec<ClosureViolation>,
}

impl ClosureReport {
    pub fn is_closed(&self) -> bool {
        self.violations.is_empty()
    }
}

const SAMPLE_VALUES: [Option<i64>; 5] = [None, Some(0), Some(42), Some(7), Some(-1)];

/// Samples `samples` (fragment, state) pairs from the program's probe
/// fragments and compares the enabled transitions with and without an extra
/// entry for some other actor (a declared one or a fresh dummy).
pub fn closure_check(program: &dyn Program, samples: usize, seed: u64) -> ClosureReport {
    let fragments = program.probe_fragments();
    let mut report = ClosureReport::default();
    if fragments.is_empty() {
        return report;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dummy = ActorRef::of("ClosureProbe", "dummy");
    let mut others = program.actors();
    others.push(dummy);
    for _ in 0..samples {
        let fragment = fragments.choose(&mut rng).expect("non-empty").clone();
        let Ok(running) = fragment_actor(&fragment) else { continue };
        let running = running.clone();
        let mut base = PersistentState::new();
        if let Some(v) = *SAMPLE_VALUES.choose(&mut rng).expect("non-empty") {
            base.insert(running.clone(), Value::Int(v));
        }
        let candidates: Vec<&ActorRef> = others.iter().filter(|a| **a != running).collect();
        let Some(other) = candidates.choose(&mut rng) else { continue };
        let mut extended = base.clone();
        let extra = SAMPLE_VALUES.choose(&mut rng).expect("non-empty").unwrap_or(1);
        extended.insert((*other).clone(), Value::Int(extra));
        report.checked += 1;
        let a = sorted(program.transitions(&fragment, &base));
        let b = sorted(program.transitions(&fragment, &extended));
        if a != b {
            report.violations.push(ClosureViolation { fragment, base, extended });
        }
    }
    report
}

fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::program::{CodeProgram, Outcome};
    use crate::semantics::term::{Invocation, SeqPoint};

    #[test]
    fn empty_program_has_no_violations() {
        let p = CodeProgram::new("empty", Invocation::new(ActorRef::of("A", "a"), "m", Value::Null));
        let r = closure_check(&p, 100, 1);
        assert!(r.is_closed());
        assert_eq!(r.checked, 0);
    }

    #[derive(Debug)]
    struct Snoop(CodeProgram);

    impl Program for Snoop {
        fn name(&self) -> String {
            self.0.name()
        }
        fn main_invocation(&self) -> Invocation {
            self.0.main_invocation()
        }
        fn actors(&self) -> Vec<ActorRef> {
            self.0.actors()
        }
        fn transitions(&self, fragment: &Term, state: &PersistentState) -> Vec<crate::semantics::BaseTransition> {
            self.0.transitions(fragment, state)
        }
        fn probe_fragments(&self) -> Vec<Term> {
            vec![Term::seq(&ActorRef::of("A", "a"), SeqPoint::new("s"))]
        }
    }

    #[test]
    fn step_inspecting_another_actor_is_reported() {
        let a = ActorRef::of("A", "a");
        let prog = CodeProgram::new("snoop", Invocation::new(a.clone(), "m", Value::Null)).on_seq("A", "s", |ctx| {
            // ill-formed: enabled only while no other actor has state
            if ctx.state.keys().any(|k| k != ctx.actor) {
                vec![]
            } else {
                vec![Outcome::End(Value::Null)]
            }
        });
        let r = closure_check(&Snoop(prog), 100, 3);
        assert!(!r.is_closed());
        assert!(r.checked > 0);
    }
}
