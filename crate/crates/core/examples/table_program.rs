//! Parses the dining table, prints its canonical form, checks that the form
//! parses back to the same program and that the rules are closed under
//! unrelated state.
//!
//!     cargo run --example table_program [path/to/program.table]

use vactor::scenarios::DP_TABLE;
use vactor::semantics::{closure_check, Program, TableProgram};

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}")),
        None => DP_TABLE.to_string(),
    };
    let program = TableProgram::parse("example", &text).unwrap_or_else(|e| panic!("{e}"));
    let canonical = program.render();
    print!("{canonical}");
    let again = TableProgram::parse("example", &canonical).expect("canonical form parses");
    println!("round trip: {}", if again.render() == canonical { "exact" } else { "DIFFERS" });
    println!("main: {}", program.main_invocation());
    let closure = closure_check(&program, 500, 1);
    println!("closure: {} samples, {} violations", closure.checked, closure.violations.len());
}
