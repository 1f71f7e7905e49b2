//! Command-line front end: `run`, `explore`, `replay`, `check` and `dump`.
//!
//! Exit status is 0 on success, 1 when a run diverges from the oracle or a
//! property is violated, and 2 on usage or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::ScenarioError;
use crate::node::Granularity;
use crate::semantics::{SharedProgram, TableProgram};
use crate::sim::{explore, refine_trace, run, scenario::program_by_name, ExploreConfig, FailureSpec, Scenario};
use crate::trace::Trace;

// A closed pipe (`vactor dump t.jsonl | head`) is not an error worth a panic.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "vactor", version, about = "Run, check and explore virtual actor deployments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a scenario (`.toml`) or a bare table (`.table`) and check the trace.
    Run {
        input: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Crash a component: `c2@12` at step 12, `c2@5s` at 5 simulated seconds.
        #[arg(long = "fail", value_name = "COMPONENT@WHEN")]
        fail: Vec<String>,
        #[arg(long)]
        max_steps: Option<u64>,
        /// Run one base transition per step instead of up to the next suspension.
        #[arg(long)]
        per_transition: bool,
        /// Write the trace here as JSON lines.
        #[arg(long = "trace-out", short, alias = "out")]
        out: Option<PathBuf>,
        /// Print every trace record.
        #[arg(long, short)]
        verbose: bool,
    },
    /// Explore every interleaving of a program under the oracle.
    Explore {
        /// `dp_table`, `dp_general:N`, `dp_tailcall:N`, `fanout:N` or a `.table` file.
        program: String,
        #[arg(long, alias = "max-steps", default_value_t = 40)]
        depth: usize,
        /// Failure budget K.
        #[arg(long, short = 'k', alias = "budget", default_value_t = 1)]
        failures: usize,
        #[arg(long, default_value_t = 2)]
        components: usize,
        /// Skip the begin validity check (a deliberate mutation).
        #[arg(long)]
        no_validity: bool,
        #[arg(long, default_value_t = 2_000_000)]
        max_states: usize,
        /// Write the full report, counterexamples included, as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Re-run the scenario recorded in a trace and compare byte for byte.
    Replay { trace: PathBuf },
    /// Check a trace against the oracle.
    Check { trace: PathBuf },
    /// Print a trace, a scenario's resolved form, or a table's canonical form.
    Dump {
        input: PathBuf,
        /// Only the reconciliation reports of a trace.
        #[arg(long)]
        reports: bool,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Trace(#[from] crate::error::TraceError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn is_table(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "table")
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    if is_table(path) {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
        Ok(Scenario::from_table(name, &read(path)?)?)
    } else {
        Ok(Scenario::load(path)?)
    }
}

fn load_program(spec: &str) -> Result<SharedProgram, CliError> {
    let path = Path::new(spec);
    if is_table(path) {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
        let prog = TableProgram::parse(name, &read(path)?).map_err(ScenarioError::from)?;
        Ok(std::sync::Arc::new(prog))
    } else {
        Ok(program_by_name(spec, None)?)
    }
}

fn load_trace(path: &Path) -> Result<Trace, CliError> {
    Ok(Trace::from_jsonl(&read(path)?)?)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn execute(cmd: Command) -> Result<bool, CliError> {
    match cmd {
        Command::Run { input, seed, fail, max_steps, per_transition, out, verbose } => {
            let mut s = load_scenario(&input)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(m) = max_steps {
                s.max_steps = m;
            }
            if per_transition {
                s.granularity = Granularity::Transition;
            }
            for f in &fail {
                s.failures.push(FailureSpec::parse(f)?);
            }
            s.validate()?;
            let trace = run(&s)?;
            if let Some(out) = &out {
                write(out, &trace.to_jsonl())?;
            }
            if verbose {
                out!("{}", trace.summary());
            }
            for r in trace.reports() {
                out!("{r}");
            }
            let verdict = refine_trace(&trace)?;
            let steps = trace.records.last().map_or(0, |r| r.step);
            match trace.outcome() {
                Some(o) => outln!("outcome {o:?} after {steps} steps"),
                None => outln!("no outcome after {steps} steps"),
            }
            outln!("refinement: {verdict}");
            Ok(verdict.conforms())
        }
        Command::Explore { program, depth, failures, components, no_validity, max_states, report: out } => {
            let prog = load_program(&program)?;
            let cfg = ExploreConfig {
                max_depth: depth,
                max_failures: failures,
                max_components: components,
                check_validity: !no_validity,
                max_states,
            };
            let report = explore(prog.as_ref(), &cfg).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
            out!("{report}");
            if let Some(out) = &out {
                write(out, &(serde_json::to_string_pretty(&report).expect("report encodes") + "\n"))?;
            }
            Ok(report.violations.is_empty() && !report.incomplete)
        }
        Command::Replay { trace } => {
            let original = load_trace(&trace)?;
            let s = Scenario::from_toml(&original.header.scenario)?;
            let again = run(&s)?;
            let same = again.to_jsonl() == original.to_jsonl();
            outln!("{}", if same { "identical" } else { "differs" });
            Ok(same)
        }
        Command::Check { trace } => {
            let verdict = refine_trace(&load_trace(&trace)?)?;
            outln!("{verdict}");
            Ok(verdict.conforms())
        }
        Command::Dump { input, reports } => {
            if is_table(&input) {
                let name = input.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
                let prog = TableProgram::parse(name, &read(&input)?).map_err(ScenarioError::from)?;
                out!("{}", prog.render());
            } else if input.extension().is_some_and(|e| e == "toml") {
                out!("{}", load_scenario(&input)?.to_toml());
            } else {
                let t = load_trace(&input)?;
                if reports {
                    for r in t.reports() {
                        out!("{r}");
                    }
                } else {
                    out!("{}", t.summary());
                }
            }
            Ok(true)
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
