//! Steps the single-philosopher program through the oracle, always taking
//! the first enabled move, and prints each move with the state it reaches.
//!
//!     cargo run --example oracle_walkthrough

use vactor::oracle::{enabled_runtime_moves, initial_state, MoveOptions};
use vactor::scenarios::dp_table_program;

fn main() {
    let program = dp_table_program();
    let mut s = initial_state(&program);
    println!("start  {}", s.hash());
    let mut n = 0;
    loop {
        let moves = enabled_runtime_moves(&s, &program, MoveOptions::default()).expect("moves");
        let Some(mv) = moves.first() else { break };
        s = s.apply_move(&program, mv, true).expect("enabled move applies");
        n += 1;
        println!("{n:>3}. {mv}");
        println!("     flow {} entries, bag {} processes, hash {}", s.flow.len(), s.bag.len(), s.hash());
    }
    println!("terminal: {}", s.is_terminal());
    for (actor, v) in s.state.iter() {
        println!("  {actor} = {v}");
    }
}
