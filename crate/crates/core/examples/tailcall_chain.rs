//! Tail-call philosophers keep one request id for the whole meal; each tail
//! call bumps the generation of the envelope carrying it. Prints the chain of
//! one meal, then a crash where only the newest generation is forwarded.
//!
//!     cargo run --example tailcall_chain

use std::path::Path;

use vactor::fabric::Body;
use vactor::sim::{run, Scenario};
use vactor::trace::Event;

fn main() {
    let s = Scenario::with_defaults("dp_tailcall:1", 1).expect("scenario");
    let t = run(&s).expect("runs");
    for r in &t.records {
        if let Event::Append { envelope, .. } = &r.event {
            if let Body::Request(call) = &envelope.body {
                println!("{} g{:<2} {call}", envelope.request, envelope.generation);
            }
        }
    }

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/tailcall_crash.toml");
    let t = run(&Scenario::load(&path).expect("bundled scenario")).expect("runs");
    for report in t.reports() {
        print!("{report}");
    }
}
