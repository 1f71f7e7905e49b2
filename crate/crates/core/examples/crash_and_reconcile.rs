//! Crashes the component hosting every fork in the middle of a meal, prints
//! the reconciliation report and checks the run against the oracle.
//!
//!     cargo run --example crash_and_reconcile

use std::path::Path;

use vactor::sim::{refine_trace, run, Scenario};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/fork_host_crash.toml");
    let scenario = Scenario::load(&path).expect("bundled scenario");
    let trace = run(&scenario).expect("runs");
    for report in trace.reports() {
        print!("{report}");
    }
    println!("outcome: {:?}", trace.outcome());
    println!("refinement: {}", refine_trace(&trace).expect("program resolves"));
}
