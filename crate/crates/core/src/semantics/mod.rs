//! Base program semantics: terms, values, persistent state and the seven
//! transition forms a program supplies. Nothing here knows about distribution.

pub mod closure;
pub mod program;
pub mod table;
pub mod term;
pub mod transition;

pub use closure::{closure_check, ClosureReport, ClosureViolation};
pub use program::{enabled_transitions, CodeProgram, Outcome, Program, SeqCtx, SharedProgram};
pub use table::TableProgram;
pub use term::{ActorRef, Invocation, PersistentState, SeqPoint, Term, Value};
pub use transition::{BaseTransition, TransitionKind};
