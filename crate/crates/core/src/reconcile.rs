//! Recovery after membership loses components.
//!
//! The reconciler freezes the log, scans the recent window of every
//! partition, matches requests against their answers, forwards each request
//! whose only copies were on dangling partitions, then purges those
//! partitions and resumes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fabric::{Body, ComponentId, Envelope, Membership, ScanEntry};
use crate::node::Cluster;
use crate::oracle::RequestId;
use crate::semantics::ActorRef;
use crate::trace::Event;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forwarded {
    pub request: RequestId,
    pub generation: u32,
    pub target: ActorRef,
    /// `None` when no capable component existed and the request was parked.
    pub to: Option<ComponentId>,
    pub version: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciliationReport {
    pub round: u32,
    pub epoch: u64,
    pub at_ms: u64,
    pub restarts: u32,
    pub failed: Vec<ComponentId>,
    pub scanned: usize,
    /// Requests with an answer in the window.
    pub matched: Vec<u64>,
    /// Older generations replaced by a tail call.
    pub superseded: Vec<(u64, u32)>,
    /// Unanswered, with a copy still on a live partition.
    pub in_flight: Vec<u64>,
    /// Synchronous requests whose caller is gone.
    pub cancelled: Vec<u64>,
    pub parked: Vec<u64>,
    pub forwarded: Vec<Forwarded>,
    /// Settled records written: request and partition.
    pub settled: Vec<(u64, usize)>,
    pub purged: Vec<usize>,
}

impl ReconciliationReport {
    pub fn render(&self) -> String {
        self.to_string()
    }
}

fn list<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let v: Vec<String> = items.into_iter().map(|i| i.to_string()).collect();
    if v.is_empty() {
        "-".into()
    } else {
        v.join(" ")
    }
}

impl fmt::Display for ReconciliationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reconciliation round {} epoch {} at {}ms", self.round, self.epoch, self.at_ms)?;
        writeln!(f, "restarts: {}", self.restarts)?;
        writeln!(f, "failed: {}", list(&self.failed))?;
        writeln!(f, "scanned: {}", self.scanned)?;
        writeln!(f, "matched: {}", list(&self.matched))?;
        writeln!(f, "superseded: {}", list(self.superseded.iter().map(|(n, g)| format!("{n}/g{g}"))))?;
        writeln!(f, "in-flight: {}", list(&self.in_flight))?;
        writeln!(f, "cancelled: {}", list(&self.cancelled))?;
        writeln!(f, "parked: {}", list(&self.parked))?;
        writeln!(f, "forwarded: {}", self.forwarded.len())?;
        for fw in &self.forwarded {
            match (&fw.to, fw.version) {
                (Some(to), Some(v)) => writeln!(f, "  {} g{} {} -> {to} v{v}", fw.request, fw.generation, fw.target)?,
                (Some(to), None) => writeln!(f, "  {} g{} {} -> {to}", fw.request, fw.generation, fw.target)?,
                (None, _) => writeln!(f, "  {} g{} {} -> parked", fw.request, fw.generation, fw.target)?,
            }
        }
        writeln!(f, "settled: {}", list(self.settled.iter().map(|(n, p)| format!("{n}@p{p}"))))?;
        writeln!(f, "purged: {}", list(self.purged.iter().map(|p| format!("p{p}"))))
    }
}

/// Outcome of matching one scan.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Matching {
    pub matched: Vec<u64>,
    pub superseded: Vec<(u64, u32)>,
    pub in_flight: Vec<u64>,
    pub cancelled: Vec<u64>,
    pub parked: Vec<u64>,
    /// Latest copy of each request to forward.
    pub lost: Vec<Envelope>,
    /// Settled records to append: partition and record.
    pub settle: Vec<(usize, Envelope)>,
}

/// Classifies every request seen in `scan`.
pub fn match_requests(scan: &[ScanEntry], membership: &Membership, parked: &BTreeSet<u64>) -> Matching {
    #[derive(Default)]
    struct Seen<'a> {
        requests: Vec<&'a ScanEntry>,
        answers: Vec<&'a ScanEntry>,
        rejected: BTreeSet<(usize, u32)>,
    }
    let mut by_id: BTreeMap<u64, Seen> = BTreeMap::new();
    for e in scan {
        let seen = by_id.entry(e.envelope.request.n).or_default();
        match &e.envelope.body {
            Body::Request(_) => seen.requests.push(e),
            Body::Response(_) | Body::Settled => seen.answers.push(e),
            Body::Rejected => {
                seen.rejected.insert((e.partition, e.envelope.generation));
            }
            Body::RejectNotice(_) => {}
        }
    }
    let dangling = |p: usize| membership.dangling.contains(&p);
    let mut m = Matching::default();
    for (n, seen) in &by_id {
        let Some(latest) = seen.requests.iter().map(|e| e.envelope.generation).max() else { continue };
        let older: BTreeSet<u32> = seen.requests.iter().map(|e| e.envelope.generation).filter(|g| *g < latest).collect();
        m.superseded.extend(older.into_iter().map(|g| (*n, g)));
        if !seen.answers.is_empty() {
            m.matched.push(*n);
            if seen.answers.iter().all(|a| dangling(a.partition)) {
                let answer = &seen.answers[0].envelope;
                let holders: BTreeSet<usize> =
                    seen.requests.iter().map(|e| e.partition).filter(|p| !dangling(*p)).collect();
                for p in holders {
                    let record = Envelope { body: Body::Settled, sender: None, ..answer.clone() };
                    m.settle.push((p, record));
                }
            }
            continue;
        }
        let copy = seen.requests.iter().find(|e| e.envelope.generation == latest).expect("latest copy");
        let env = &copy.envelope;
        if env.request.is_sync() && env.origin.as_ref().is_some_and(|o| !membership.is_live(o)) {
            m.cancelled.push(*n);
        } else if parked.contains(n) {
            m.parked.push(*n);
        } else if seen
            .requests
            .iter()
            .any(|e| e.envelope.generation == latest && !dangling(e.partition) && !seen.rejected.contains(&(e.partition, latest)))
        {
            m.in_flight.push(*n);
        } else {
            m.lost.push(env.clone());
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Freeze,
    Scan,
    Forward,
    Purge,
    Resume,
    Done,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Freeze => "freeze",
            Phase::Scan => "scan",
            Phase::Forward => "forward",
            Phase::Purge => "purge",
            Phase::Resume => "resume",
            Phase::Done => "done",
        }
    }
}

/// One reconciliation, advanced a phase (or one forward) per call.
#[derive(Clone, Debug)]
pub struct Reconciler {
    pub phase: Phase,
    pub report: ReconciliationReport,
    queue: VecDeque<Envelope>,
}

impl Reconciler {
    pub fn new(round: u32, failed: impl IntoIterator<Item = ComponentId>) -> Self {
        Reconciler {
            phase: Phase::Freeze,
            report: ReconciliationReport { round, failed: failed.into_iter().collect(), ..Default::default() },
            queue: VecDeque::new(),
        }
    }

    /// More components were lost before this round finished: scan again.
    pub fn restart(&mut self, failed: impl IntoIterator<Item = ComponentId>) {
        self.report.failed.extend(failed);
        self.report.restarts += 1;
        self.queue.clear();
        if self.phase != Phase::Freeze {
            self.phase = Phase::Scan;
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Runs the current phase. Returns the report once the log has resumed.
    pub fn step(&mut self, cx: &mut Cluster) -> Option<ReconciliationReport> {
        let round = self.report.round;
        cx.emit(Event::Reconcile { round, phase: self.phase.name().into() });
        match self.phase {
            Phase::Freeze => {
                cx.fabric.freeze();
                self.phase = Phase::Scan;
            }
            Phase::Scan => {
                let scan = cx.fabric.scan_recent().expect("frozen");
                let parked: BTreeSet<u64> = cx.parked.keys().copied().collect();
                let m = match_requests(&scan, cx.fabric.membership(), &parked);
                let r = &mut self.report;
                r.epoch = cx.fabric.membership().epoch;
                r.at_ms = cx.now_ms();
                r.scanned = scan.len();
                r.matched = m.matched;
                r.superseded = m.superseded;
                r.in_flight = m.in_flight;
                r.cancelled = m.cancelled;
                r.parked = m.parked;
                for (p, record) in m.settle {
                    r.settled.push((record.request.n, p));
                    cx.append(None, p, record);
                }
                self.queue = m.lost.into();
                self.phase = if self.queue.is_empty() { Phase::Purge } else { Phase::Forward };
            }
            Phase::Forward => {
                if let Some(env) = self.queue.pop_front() {
                    self.forward(env, cx);
                }
                if self.queue.is_empty() {
                    self.phase = Phase::Purge;
                }
            }
            Phase::Purge => {
                let dangling: Vec<usize> = cx.fabric.membership().dangling.iter().copied().collect();
                for p in dangling {
                    if cx.fabric.purge(p).is_ok() {
                        self.report.purged.push(p);
                    }
                }
                self.phase = Phase::Resume;
            }
            Phase::Resume => {
                cx.fabric.resume();
                self.phase = Phase::Done;
                cx.emit(Event::Report { report: self.report.clone() });
                return Some(self.report.clone());
            }
            Phase::Done => return Some(self.report.clone()),
        }
        None
    }

    fn forward(&mut self, env: Envelope, cx: &mut Cluster) {
        let copy = Envelope { sender: None, ..env };
        let target = copy.target.clone();
        let host = cx.resolve_host(None, None, &target);
        let mut record = Forwarded {
            request: copy.request.clone(),
            generation: copy.generation,
            target: target.clone(),
            to: None,
            version: None,
        };
        match host {
            Some(h) => {
                let p = cx.fabric.partition_of(&h).expect("members have partitions");
                record.version = cx.store.peek(&target).map(|pl| pl.version);
                record.to = Some(h);
                cx.append(None, p, copy);
            }
            None => {
                self.report.parked.push(copy.request.n);
                cx.park(copy);
            }
        }
        self.report.forwarded.push(record);
    }
}

/// Runs a whole reconciliation at once.
pub fn reconcile(cx: &mut Cluster, round: u32, failed: impl IntoIterator<Item = ComponentId>) -> ReconciliationReport {
    let mut r = Reconciler::new(round, failed);
    loop {
        if let Some(report) = r.step(cx) {
            return report;
        }
    }
}
