//! Replays a deployment trace through the oracle.
//!
//! Every rule, failure and timeout record must be a legal oracle move from
//! the state the previous records produced, and the hashes recorded by the
//! deployment must match the oracle's before and after each move.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::oracle::{initial_state_from, Move, RuntimeState};
use crate::semantics::Program;
use crate::trace::{Event, Trace};

use super::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// `steps` oracle moves replayed.
    Conform { steps: usize },
    /// Record `index` (counting from 0 after the header) did not replay.
    Diverge { index: usize, step: u64, reason: String },
}

impl Verdict {
    pub fn conforms(&self) -> bool {
        matches!(self, Verdict::Conform { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Conform { steps } => write!(f, "conform ({steps} oracle steps)"),
            Verdict::Diverge { index, step, reason } => write!(f, "diverge at record {index} (step {step}): {reason}"),
        }
    }
}

fn check_hash(s: &RuntimeState, want: &str, what: &str) -> Result<(), String> {
    let got = s.hash();
    if got == want {
        Ok(())
    } else {
        Err(format!("{what} hash {got} differs from recorded {want}"))
    }
}

/// Checks that `trace` is a run of `program` under the oracle.
pub fn refine_check(trace: &Trace, program: &dyn Program) -> Verdict {
    let mut s = initial_state_from(program, 0);
    let mut steps = 0;
    for (index, r) in trace.records.iter().enumerate() {
        let result: Result<(), String> = (|| {
            let (mv, pre, post) = match &r.event {
                Event::Rule { request, transition, pre, post, .. } => {
                    (Move::Rule { request: request.clone(), transition: transition.clone() }, pre, post)
                }
                Event::Failure { actor, pre, post, .. } => (Move::Failure { actor: actor.clone() }, pre, post),
                Event::Timeout { request, pre, post } => (Move::Timeout { request: request.clone() }, pre, post),
                Event::Anomaly { message } => return Err(format!("anomaly: {message}")),
                Event::End { final_hash, .. } => {
                    s.check_invariants()?;
                    return check_hash(&s, final_hash, "final");
                }
                _ => return Ok(()),
            };
            check_hash(&s, pre, "pre-state")?;
            s.apply_move_in_place(program, &mv, true).map_err(|e| format!("{mv}: {e}"))?;
            if let Move::Rule { transition, .. } = &mv {
                s.check_invariants_at(transition.actor())?;
            }
            check_hash(&s, post, "post-state")?;
            steps += 1;
            Ok(())
        })();
        if let Err(reason) = result {
            return Verdict::Diverge { index, step: r.step, reason };
        }
    }
    Verdict::Conform { steps }
}

/// Like [`refine_check`], resolving the program from the trace header.
pub fn refine_trace(trace: &Trace) -> Result<Verdict, ScenarioError> {
    let scenario = Scenario::from_toml(&trace.header.scenario)?;
    let program = scenario.program()?;
    Ok(refine_check(trace, program.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::FailureSpec;
    use crate::sim::world::run;
    use crate::trace::Event;

    #[test]
    fn failure_free_run_conforms() {
        let s = Scenario::with_defaults("dp_general:2", 2).unwrap();
        let t = run(&s).unwrap();
        assert!(refine_trace(&t).unwrap().conforms());
    }

    #[test]
    fn run_with_crash_conforms() {
        let mut s = Scenario::with_defaults("dp_general:3", 3).unwrap();
        s.failures.push(FailureSpec::parse("c2@6").unwrap());
        let t = run(&s).unwrap();
        let v = refine_trace(&t).unwrap();
        assert!(v.conforms(), "{v}\n{}", t.summary());
    }

    #[test]
    fn tampered_hash_diverges() {
        let s = Scenario::with_defaults("dp_table", 1).unwrap();
        let mut t = run(&s).unwrap();
        let i = t.records.iter().position(|r| matches!(r.event, Event::Rule { .. })).unwrap();
        if let Event::Rule { post, .. } = &mut t.records[i].event {
            *post = "0000000000000000".into();
        }
        assert!(matches!(refine_trace(&t).unwrap(), Verdict::Diverge { index, .. } if index == i));
    }
}
