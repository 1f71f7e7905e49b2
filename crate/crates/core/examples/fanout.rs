//! Many synchronous calls in flight from one component at once. Each caller
//! waits on its own request; nothing is shared between them.
//!
//!     cargo run --release --example fanout [n]

use vactor::semantics::BaseTransition;
use vactor::sim::{refine_trace, run, ComponentSpec, Scenario};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let mut s = Scenario::with_defaults(&format!("fanout:{n}"), 1).expect("scenario");
    s.components = vec![
        ComponentSpec { id: "c1".into(), actor_types: vec!["Hub".into(), "Caller".into()] },
        ComponentSpec { id: "c2".into(), actor_types: vec!["Echo".into()] },
    ];
    let started = std::time::Instant::now();
    let t = run(&s).expect("runs");
    let replies = t
        .rules()
        .filter(|(_, _, tr)| matches!(tr, BaseTransition::Return { .. }) && tr.actor().type_name() == "Caller")
        .count();
    let peak = t
        .records
        .iter()
        .scan(0i64, |open, r| {
            if let vactor::trace::Event::Rule { transition, .. } = &r.event {
                match transition {
                    BaseTransition::SyncCall { .. } => *open += 1,
                    BaseTransition::Return { .. } => *open -= 1,
                    _ => {}
                }
            }
            Some(*open)
        })
        .max()
        .unwrap_or(0);
    println!("{n} callers: {replies} replies, at most {peak} calls in flight, {:?}", t.outcome());
    println!("refinement: {}", refine_trace(&t).expect("program resolves"));
    println!("{:.2?}", started.elapsed());
}
