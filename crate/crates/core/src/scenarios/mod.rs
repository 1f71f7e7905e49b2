//! Bundled programs: the dining philosophers (the single-fork transition
//! table, a generalization to `n` philosophers and a tail-call variant) and
//! a fan-out of synchronous calls.
//!
//! The two-fork protocol (ordered acquisition to avoid deadlock) is an
//! extension of the single-fork table.

pub mod dining;
pub mod fanout;
pub mod tailcall;

pub use dining::{dp_general_program, dp_table_program, fork, philosopher, table_actor, DP_TABLE};
pub use fanout::fanout_program;
pub use tailcall::{dp_tailcall_program, POST_TAKE_PHASES};
