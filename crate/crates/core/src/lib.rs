//! Executable semantics for a fault-tolerant virtual actor runtime.
//!
//! The crate has two layers that are checked against each other:
//!
//! * [`oracle`]: the reference transition system over flows, process bags and
//!   persistent state, including failures and the begin-validity check.
//! * A simulated deployment: a partitioned persistent log ([`fabric`]), a
//!   compare-and-swap placement store with per-component caches
//!   ([`placement`]), per-component runtime engines ([`node`]) and the
//!   failure recovery protocol ([`reconcile`]).
//!
//! [`sim`] drives deployments deterministically from a seed, injects
//! failures, projects every run back onto the oracle, and model-checks small
//! programs exhaustively. [`scenarios`] ships the dining philosophers
//! programs used throughout the tests and examples.

pub mod cli;
pub mod digest;
pub mod error;
pub mod fabric;
pub mod node;
pub mod oracle;
pub mod placement;
pub mod reconcile;
pub mod scenarios;
pub mod semantics;
pub mod sim;
pub mod trace;

pub use error::{FabricError, PlacementError, ScenarioError, SemanticsError, TableError, TraceError};
