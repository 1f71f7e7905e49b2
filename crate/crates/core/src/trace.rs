//! Trace records: JSON lines, a header first, then one record per event.
//!
//! Rule, failure and timeout records carry canonical hashes of the projected
//! runtime state before and after, so a trace can be replayed through the
//! oracle without re-running the deployment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::fabric::{ComponentId, Envelope};
use crate::oracle::RequestId;
use crate::reconcile::ReconciliationReport;
use crate::semantics::{ActorRef, BaseTransition};

pub const TRACE_FORMAT: &str = "vactor-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub program: String,
    pub seed: u64,
    /// The scenario that produced the trace, as TOML, for replay.
    pub scenario: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every request answered and no process left.
    Completed,
    /// Nothing can happen any more but work remains.
    Stuck,
    /// Step limit reached.
    Limit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Rule {
        component: ComponentId,
        request: RequestId,
        transition: BaseTransition,
        pre: String,
        post: String,
    },
    /// A process lost with its component, projected when the loss is detected.
    Failure {
        component: ComponentId,
        actor: ActorRef,
        pre: String,
        post: String,
    },
    Timeout {
        request: RequestId,
        pre: String,
        post: String,
    },
    Append {
        by: Option<ComponentId>,
        partition: usize,
        offset: u64,
        envelope: Envelope,
    },
    Poll {
        component: ComponentId,
        partition: usize,
        offset: u64,
    },
    Place {
        by: Option<ComponentId>,
        actor: ActorRef,
        component: ComponentId,
        installed: bool,
        version: u64,
    },
    Reject {
        component: ComponentId,
        request: RequestId,
        generation: u32,
        placed_on: Option<ComponentId>,
    },
    /// Cancellation: the caller's component is gone.
    Drop {
        component: ComponentId,
        request: RequestId,
    },
    Ignore {
        component: ComponentId,
        request: RequestId,
        reason: String,
    },
    Park {
        request: RequestId,
        deadline_ms: u64,
    },
    Unpark {
        request: RequestId,
    },
    Crash {
        component: ComponentId,
    },
    Leave {
        component: ComponentId,
        epoch: u64,
    },
    Detect {
        component: ComponentId,
        epoch: u64,
    },
    Join {
        component: ComponentId,
        incarnation: u32,
        partition: usize,
        epoch: u64,
    },
    Reconcile {
        round: u32,
        phase: String,
    },
    Report {
        report: ReconciliationReport,
    },
    Anomaly {
        message: String,
    },
    End {
        outcome: Outcome,
        final_hash: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub step: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub header: Header,
    pub records: Vec<Record>,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header encodes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record encodes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(TraceError::MissingHeader)?;
        let header: Header = serde_json::from_str(first).map_err(|_| TraceError::MissingHeader)?;
        if header.format != TRACE_FORMAT {
            return Err(TraceError::MissingHeader);
        }
        let records = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| TraceError::Malformed { line: i + 1, message: e.to_string() })
            })
            .collect::<Result<Vec<Record>, _>>()?;
        Ok(Trace { header, records })
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.records.iter().rev().find_map(|r| match &r.event {
            Event::End { outcome, .. } => Some(outcome),
            _ => None,
        })
    }

    pub fn reports(&self) -> impl Iterator<Item = &ReconciliationReport> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Report { report } => Some(report),
            _ => None,
        })
    }

    /// Rule transitions of one kind, in order.
    pub fn rules(&self) -> impl Iterator<Item = (&ComponentId, &RequestId, &BaseTransition)> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Rule { component, request, transition, .. } => Some((component, request, transition)),
            _ => None,
        })
    }

    /// One line per event, for humans.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = write!(out, "{:>5} {:>7}ms ", r.step, r.t_ms);
            let _ = match &r.event {
                Event::Rule { component, request, transition, .. } => {
                    writeln!(out, "{component} {request} {transition}")
                }
                Event::Failure { component, actor, .. } => writeln!(out, "{component} failure {actor}"),
                Event::Timeout { request, .. } => writeln!(out, "timeout {request}"),
                Event::Append { partition, offset, envelope, .. } => {
                    writeln!(out, "append p{partition}@{offset} {envelope}")
                }
                Event::Poll { component, partition, offset } => writeln!(out, "{component} poll p{partition}@{offset}"),
                Event::Place { actor, component, installed, version, .. } => {
                    let verb = if *installed { "placed" } else { "kept" };
                    writeln!(out, "{verb} {actor} on {component} v{version}")
                }
                Event::Reject { component, request, generation, .. } => {
                    writeln!(out, "{component} reject {request} g{generation}")
                }
                Event::Drop { component, request } => writeln!(out, "{component} drop {request}"),
                Event::Ignore { component, request, reason } => writeln!(out, "{component} ignore {request}: {reason}"),
                Event::Park { request, deadline_ms } => writeln!(out, "park {request} until {deadline_ms}ms"),
                Event::Unpark { request } => writeln!(out, "unpark {request}"),
                Event::Crash { component } => writeln!(out, "crash {component}"),
                Event::Leave { component, epoch } => writeln!(out, "leave {component} epoch {epoch}"),
                Event::Detect { component, epoch } => writeln!(out, "detect {component} epoch {epoch}"),
                Event::Join { component, incarnation, partition, epoch } => {
                    writeln!(out, "join {component}/{incarnation} partition {partition} epoch {epoch}")
                }
                Event::Reconcile { round, phase } => writeln!(out, "reconcile round {round} {phase}"),
                Event::Report { report } => writeln!(out, "report round {}", report.round),
                Event::Anomaly { message } => writeln!(out, "ANOMALY {message}"),
                Event::End { outcome, final_hash } => writeln!(out, "end {outcome:?} {final_hash}"),
            };
        }
        out
    }
}
