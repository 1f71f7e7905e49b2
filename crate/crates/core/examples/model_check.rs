//! Explores every interleaving of the one-philosopher program with one
//! failure, first as specified and then with the begin validity check
//! removed, which lets a stale take run after the drop.
//!
//!     cargo run --example model_check

use vactor::scenarios::dp_table_program;
use vactor::sim::{explore, replay_prefix, ExploreConfig};

fn main() {
    let program = dp_table_program();
    let cfg = ExploreConfig { max_depth: 40, max_failures: 1, ..ExploreConfig::default() };
    let sound = explore(&program, &cfg).expect("explores");
    print!("{sound}");

    println!("\n-- without the validity check --");
    let broken = explore(&program, &ExploreConfig { check_validity: false, ..cfg }).expect("explores");
    print!("{broken}");
    if let Some(v) = broken.violations.first() {
        let (state, property) = replay_prefix(&program, &v.prefix, false).expect("prefix replays");
        println!("replayed to {} ({:?})", state.hash(), property);
    }
}
