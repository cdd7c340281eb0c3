//! Command-line front end: validation, DOT export, simulation, replay,
//! reporting and ASIL lookup.
//!
//! Exit codes: 0 success, 1 validation or assertion failure, 2 I/O, parse
//! or usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use skillgraph::graph::SkillGraph;
use skillgraph::modes::DegradedPolicy;
use skillgraph::requirements::{asil_classify, Controllability, Exposure, SecTriple, Severity};
use skillgraph::sim::{self, load_scenario, replay, run_scenario, summarize, RunTrace, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "skillgraph", version, about = "Skill graphs, ability monitoring and Follow Mode simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Fallback,
    Continue,
}

impl From<PolicyArg> for DegradedPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Fallback => DegradedPolicy::Fallback,
            PolicyArg::Continue => DegradedPolicy::Continue,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a skill graph and print every violation.
    Validate {
        #[arg(value_name = "GRAPH", required_unless_present = "graph", conflicts_with = "graph")]
        path: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Write a skill graph as Graphviz DOT.
    ExportDot {
        #[arg(value_name = "GRAPH", required_unless_present = "graph", conflicts_with = "graph")]
        path: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write its trace as JSON lines.
    Simulate {
        #[arg(value_name = "SCENARIO", required_unless_present = "scenario", conflicts_with = "scenario")]
        path: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        degraded_policy: Option<PolicyArg>,
    },
    /// Recompute levels, statuses and modes from a trace and compare.
    Replay {
        #[arg(value_name = "TRACE")]
        trace: PathBuf,
    },
    /// Summarize a trace as Markdown.
    Report {
        #[arg(value_name = "TRACE")]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Look up the ASIL for a severity, exposure and controllability class.
    Asil {
        severity: Severity,
        exposure: Exposure,
        controllability: Controllability,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn failed(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Io { .. } | SimError::Config { .. } | SimError::Trace { .. } => EXIT_INPUT,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), Failure> {
    fs::write(path, content).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<SkillGraph, Failure> {
    let text = read(path)?;
    SkillGraph::from_json(&text).map_err(|e| {
        Failure::input(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })
}

fn load_trace(path: &Path) -> Result<RunTrace, Failure> {
    let text = read(path)?;
    RunTrace::from_jsonl(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, content: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_file(p, content),
        None => out
            .write_all(content.as_bytes())
            .map_err(|e| Failure::input(format!("stdout: {e}"))),
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Validate { path, graph } => {
            let path = path.or(graph).expect("clap enforces a graph path");
            let g = load_graph(&path)?;
            let violations = g.validate();
            if violations.is_empty() {
                let _ = writeln!(out, "{}: ok ({} skills, {} edges)", path.display(), g.nodes.len(), g.edges.len());
                Ok(EXIT_OK)
            } else {
                for v in &violations {
                    let _ = writeln!(out, "{}: {}: {v}", path.display(), v.rule());
                }
                let _ = writeln!(out, "{} violation(s)", violations.len());
                Ok(EXIT_FAILURE)
            }
        }
        Command::ExportDot { path, graph, out: target } => {
            let path = path.or(graph).expect("clap enforces a graph path");
            let g = load_graph(&path)?;
            let dot = g
                .export_dot()
                .map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?;
            emit(out, target.as_deref(), &dot)?;
            Ok(EXIT_OK)
        }
        Command::Simulate {
            path,
            scenario,
            out: target,
            seed,
            degraded_policy,
        } => {
            let path = path.or(scenario).expect("clap enforces a scenario path");
            let mut loaded = load_scenario(&path)?;
            if let Some(seed) = seed {
                loaded.scenario.seed = seed;
            }
            if let Some(policy) = degraded_policy {
                loaded.scenario.degraded_policy = policy.into();
            }
            let trace = run_scenario(&loaded)?;
            if let Some(t) = &target {
                write_file(t, &trace.to_jsonl())?;
            }
            let _ = write!(out, "{}", summarize(&trace).render_console());
            Ok(EXIT_OK)
        }
        Command::Replay { trace } => {
            let tr = load_trace(&trace)?;
            let report = replay(&tr)?;
            if report.is_consistent() {
                let _ = writeln!(out, "{}: {} steps replayed, identical", trace.display(), report.steps);
                Ok(EXIT_OK)
            } else {
                for m in &report.mismatches {
                    let _ = writeln!(out, "{}: {m}", trace.display());
                }
                Ok(EXIT_FAILURE)
            }
        }
        Command::Report { trace, out: target } => {
            let tr = load_trace(&trace)?;
            emit(out, target.as_deref(), &sim::summarize(&tr).render_markdown())?;
            Ok(EXIT_OK)
        }
        Command::Asil {
            severity,
            exposure,
            controllability,
        } => {
            let _ = writeln!(out, "{}", asil_classify(SecTriple::new(severity, exposure, controllability)));
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
