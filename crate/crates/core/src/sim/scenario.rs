//! Scenario files: which program to run, on which components, with which
//! failures.
//!
//! ```toml
//! name = "one fork lost"
//! program = "dp_general:3"
//! seed = 7
//!
//! [config]
//! grace_period_s = 10
//!
//! [[components]]
//! id = "c1"
//! actor_types = ["Table", "Philosopher", "Fork"]
//!
//! [[failures]]
//! component = "c1"
//! at_step = 12
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::fabric::{FabricConfig, DEFAULT_GRACE_MS, DEFAULT_SCAN_WINDOW_MS};
use crate::node::{Granularity, RuntimeConfig, DEFAULT_INVOKE_TIMEOUT_MS, DEFAULT_QUANTUM_MS};
use crate::placement::{CachePolicy, DEFAULT_CACHE_CAPACITY};
use crate::scenarios::{dp_general_program, dp_table_program, dp_tailcall_program, fanout_program};
use crate::semantics::{ActorRef, SharedProgram, TableProgram};

pub const DEFAULT_MAX_STEPS: u64 = 100_000;

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigBlock {
    #[serde(default = "ConfigBlock::grace")]
    pub grace_period_s: u64,
    #[serde(default = "ConfigBlock::window")]
    pub scan_window_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_window_count: Option<usize>,
    #[serde(default = "ConfigBlock::invoke")]
    pub invoke_timeout_s: u64,
    #[serde(default = "ConfigBlock::capacity")]
    pub cache_capacity: usize,
    #[serde(default)]
    pub cache_policy: CachePolicy,
    #[serde(default = "ConfigBlock::quantum")]
    pub quantum_ms: u64,
}

impl ConfigBlock {
    fn grace() -> u64 {
        DEFAULT_GRACE_MS / 1000
    }
    fn window() -> u64 {
        DEFAULT_SCAN_WINDOW_MS / 1000
    }
    fn invoke() -> u64 {
        DEFAULT_INVOKE_TIMEOUT_MS / 1000
    }
    fn capacity() -> usize {
        DEFAULT_CACHE_CAPACITY
    }
    fn quantum() -> u64 {
        DEFAULT_QUANTUM_MS
    }
}

impl Default for ConfigBlock {
    fn default() -> Self {
        ConfigBlock {
            grace_period_s: Self::grace(),
            scan_window_s: Self::window(),
            scan_window_count: None,
            invoke_timeout_s: Self::invoke(),
            cache_capacity: Self::capacity(),
            cache_policy: CachePolicy::default(),
            quantum_ms: Self::quantum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub id: String,
    pub actor_types: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// Stops without notice; membership finds out after the grace period.
    #[default]
    Crash,
    /// Departs and is removed from membership at once.
    Leave,
}

/// When a scripted event fires: a scheduler step or a simulated time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum At {
    Step(u64),
    Ms(u64),
}

impl At {
    /// `12` is a step, `5s` or `250ms` a time.
    pub fn parse(s: &str) -> Result<At, ScenarioError> {
        let bad = || ScenarioError::Malformed(format!("bad time `{s}`: expected a step, `<n>s` or `<n>ms`"));
        if let Some(ms) = s.strip_suffix("ms") {
            ms.parse().map(At::Ms).map_err(|_| bad())
        } else if let Some(secs) = s.strip_suffix('s') {
            secs.parse::<u64>().map(|v| At::Ms(v * 1000)).map_err(|_| bad())
        } else {
            s.parse().map(At::Step).map_err(|_| bad())
        }
    }

    fn due(self, step: u64, now_ms: u64) -> bool {
        match self {
            At::Step(s) => s <= step,
            At::Ms(t) => t <= now_ms,
        }
    }
}

fn trigger(at_step: Option<u64>, at_ms: Option<u64>, what: &str) -> Result<At, ScenarioError> {
    match (at_step, at_ms) {
        (Some(s), None) => Ok(At::Step(s)),
        (None, Some(t)) => Ok(At::Ms(t)),
        _ => Err(ScenarioError::Malformed(format!("{what} needs exactly one of at_step or at_ms"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub component: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_ms: Option<u64>,
    #[serde(default)]
    pub mode: FailureMode,
}

impl FailureSpec {
    /// `component@when`, as on the command line.
    pub fn parse(s: &str) -> Result<FailureSpec, ScenarioError> {
        let (component, when) = s
            .split_once('@')
            .ok_or_else(|| ScenarioError::Malformed(format!("bad failure `{s}`: expected component@when")))?;
        let (at_step, at_ms) = match At::parse(when)? {
            At::Step(n) => (Some(n), None),
            At::Ms(t) => (None, Some(t)),
        };
        Ok(FailureSpec { component: component.to_string(), at_step, at_ms, mode: FailureMode::Crash })
    }

    pub fn at(&self) -> Result<At, ScenarioError> {
        trigger(self.at_step, self.at_ms, "failure")
    }

    pub fn due(&self, step: u64, now_ms: u64) -> bool {
        self.at().is_ok_and(|a| a.due(step, now_ms))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinSpec {
    pub component: String,
    pub actor_types: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_ms: Option<u64>,
}

impl JoinSpec {
    pub fn due(&self, step: u64, now_ms: u64) -> bool {
        trigger(self.at_step, self.at_ms, "join").is_ok_and(|a| a.due(step, now_ms))
    }
}

/// Places an actor before the run starts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinSpec {
    pub actor: ActorRef,
    pub component: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// `dp_table`, `dp_general:N`, `dp_tailcall:N`, `fanout:N` or `table:PATH`.
    pub program: String,
    /// Inline table source; takes precedence over the path in `program`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default)]
    pub config: ConfigBlock,
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub failures: Vec<FailureSpec>,
    #[serde(default)]
    pub joins: Vec<JoinSpec>,
    #[serde(default)]
    pub pins: Vec<PinSpec>,
}

impl Scenario {
    /// A scenario running `program` on `components` components that each
    /// host every actor type, with no failures.
    pub fn with_defaults(program: &str, components: usize) -> Result<Scenario, ScenarioError> {
        let mut s = Scenario {
            name: String::new(),
            program: program.to_string(),
            table: None,
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            granularity: Granularity::default(),
            config: ConfigBlock::default(),
            components: Vec::new(),
            failures: Vec::new(),
            joins: Vec::new(),
            pins: Vec::new(),
        };
        let types = s.program()?.actor_types();
        s.components = (1..=components).map(|i| ComponentSpec { id: format!("c{i}"), actor_types: types.clone() }).collect();
        Ok(s)
    }

    /// Default roster of three components for a bare table file.
    pub fn from_table(name: &str, source: &str) -> Result<Scenario, ScenarioError> {
        TableProgram::parse(name, source)?;
        let mut s = Scenario::with_defaults("dp_table", 3)?;
        s.program = format!("table:{name}");
        s.table = Some(source.to_string());
        let types = s.program()?.actor_types();
        for c in &mut s.components {
            c.actor_types = types.clone();
        }
        Ok(s)
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario file. A `table:PATH` program is resolved relative to
    /// the file and embedded, so the scenario is self-contained afterwards.
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = read(path)?;
        let mut s = Scenario::from_toml(&text)?;
        if s.table.is_none() {
            if let Some(rel) = s.program.strip_prefix("table:") {
                let base = path.parent().unwrap_or(Path::new("."));
                s.table = Some(read(&base.join(rel))?);
            }
        }
        s.program()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.components.is_empty() {
            return Err(ScenarioError::Malformed("no components".into()));
        }
        let known = |c: &str| self.components.iter().any(|k| k.id == c) || self.joins.iter().any(|j| j.component == c);
        for f in &self.failures {
            f.at()?;
            if !known(&f.component) {
                return Err(ScenarioError::Malformed(format!("failure names unknown component `{}`", f.component)));
            }
        }
        for j in &self.joins {
            trigger(j.at_step, j.at_ms, "join")?;
        }
        for p in &self.pins {
            if !self.components.iter().any(|k| k.id == p.component) {
                return Err(ScenarioError::Malformed(format!("pin names unknown component `{}`", p.component)));
            }
        }
        if self.config.quantum_ms == 0 {
            return Err(ScenarioError::Malformed("quantum_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn program(&self) -> Result<SharedProgram, ScenarioError> {
        program_by_name(&self.program, self.table.as_deref())
    }

    pub fn runtime_config(&self) -> RuntimeConfig {
        RuntimeConfig {
            quantum_ms: self.config.quantum_ms,
            invoke_timeout_ms: self.config.invoke_timeout_s * 1000,
            cache_capacity: self.config.cache_capacity,
            cache_policy: self.config.cache_policy,
            granularity: self.granularity,
        }
    }

    pub fn fabric_config(&self) -> FabricConfig {
        FabricConfig {
            grace_ms: self.config.grace_period_s * 1000,
            scan_window_ms: self.config.scan_window_s * 1000,
            scan_window_count: self.config.scan_window_count,
        }
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}

fn count(spec: &str, arg: &str) -> Result<usize, ScenarioError> {
    match arg.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(ScenarioError::UnknownProgram(spec.to_string())),
    }
}

/// Resolves a program name. `table` supplies the source of a `table:` program.
pub fn program_by_name(spec: &str, table: Option<&str>) -> Result<SharedProgram, ScenarioError> {
    let (head, arg) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match head {
        "dp_table" if arg.is_empty() => Arc::new(dp_table_program()),
        "dp_general" => Arc::new(dp_general_program(count(spec, arg)?)),
        "dp_tailcall" => Arc::new(dp_tailcall_program(count(spec, arg)?)),
        "fanout" => Arc::new(fanout_program(count(spec, arg)?)),
        "table" => {
            let source = match table {
                Some(t) => t.to_string(),
                None => read(Path::new(arg))?,
            };
            let name = Path::new(arg).file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
            Arc::new(TableProgram::parse(name, &source)?)
        }
        _ => return Err(ScenarioError::UnknownProgram(spec.to_string())),
    })
}
