//! Running, checking and exploring deployments.

pub mod explore;
pub mod gen;
pub mod refine;
pub mod scenario;
pub mod world;

pub use explore::{explore, explore_with, replay_prefix, Edge, ExploreConfig, ExploreReport, Monitor, Property, Violation};
pub use gen::random_scenario;
pub use refine::{refine_check, refine_trace, Verdict};
pub use scenario::{At, ComponentSpec, ConfigBlock, FailureMode, FailureSpec, JoinSpec, PinSpec, Scenario};
pub use world::{run, World};
