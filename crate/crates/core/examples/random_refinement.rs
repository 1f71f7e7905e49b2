//! Generates random deployments with scripted crashes and checks each run
//! against the oracle.
//!
//!     cargo run --example random_refinement [count]

use vactor::sim::{random_scenario, refine_trace, run};

fn main() {
    let count: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut conform = 0;
    for seed in 0..count {
        let s = random_scenario(seed);
        let t = run(&s).expect("runs");
        let v = refine_trace(&t).expect("program resolves");
        println!(
            "seed {seed:>3} {:<16} {} components, {} failures, {:?}: {v}",
            s.program,
            s.components.len(),
            s.failures.len(),
            t.outcome().expect("finished")
        );
        conform += usize::from(v.conforms());
    }
    println!("{conform}/{count} conform");
}
