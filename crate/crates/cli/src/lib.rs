//! Library half of the `supsearch` binary, kept separate so the run logic
//! can be driven from tests.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::{json, Value};
use thiserror::Error;

use supsearch_core::ModelError;
use supsearch_econometrics::EconError;

pub mod artifacts;
pub mod commands;
pub mod config;

use artifacts::{mark_failed, Metadata, OutputDir};
use config::{Command, Emit, Format, RunConfig, Settings, DEFAULT_SEED};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input; nothing was computed.
    #[error("{0}")]
    Validation(String),
    /// The computation itself failed.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn report(&self, command: Option<Command>) -> Value {
        json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "command": command.map(Command::name),
            "message": self.to_string(),
        })
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParams(_) | ModelError::InvalidConfig(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EconError> for CliError {
    fn from(e: EconError) -> Self {
        match e {
            EconError::InvalidSpec(_) | EconError::InvalidPanel(_) => CliError::Validation(e.to_string()),
            EconError::Model(m) => m.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// A parsed command line. Values left `None` fall back to the config file,
/// then to the defaults.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub command: Option<Command>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Parent of the default output directory `<out_root>/<command>`.
    pub out_root: Option<PathBuf>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
    /// `key=value` overrides; the value is parsed as JSON, or taken as a
    /// string when it does not parse.
    pub set: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub command: Command,
    pub out: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

impl RunSummary {
    pub fn report(&self) -> Value {
        json!({
            "status": "ok",
            "command": self.command.name(),
            "out": self.out,
            "artifacts": self.artifacts,
        })
    }
}

fn parse_set(item: &str) -> Result<(String, Value), CliError> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override '{item}' is not key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

struct Plan {
    command: Command,
    seed: u64,
    out: PathBuf,
    threads: Option<usize>,
    emit: Emit,
    overrides: BTreeMap<String, Value>,
}

fn plan(inv: &Invocation) -> Result<Plan, CliError> {
    let file = match &inv.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let command = inv
        .command
        .or(file.command)
        .ok_or_else(|| CliError::Validation("no command given on the command line or in the config".into()))?;
    let mut overrides = file.overrides;
    for item in &inv.set {
        let (k, v) = parse_set(item)?;
        overrides.insert(k, v);
    }
    let threads = inv.threads.or(file.threads);
    if threads == Some(0) {
        return Err(CliError::Validation("threads must be at least 1".into()));
    }
    let emit = inv.format.map(Emit::from).unwrap_or(file.emit);
    if !emit.json && !emit.csv {
        return Err(CliError::Validation("emit disables both json and csv".into()));
    }
    Ok(Plan {
        command,
        seed: inv.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: inv.out.clone().or(file.out).unwrap_or_else(|| {
            inv.out_root.clone().unwrap_or_else(|| PathBuf::from("runs")).join(command.name())
        }),
        threads,
        emit,
        overrides,
    })
}

fn execute(plan: &Plan) -> Result<Vec<PathBuf>, CliError> {
    let settings = Settings::resolve(&plan.overrides, plan.seed)?;
    let meta = Metadata::new(plan.command.name(), plan.seed, commands::snapshot(plan.command, &settings));
    let mut out = OutputDir::create(&plan.out, meta)?;
    let mut work = || commands::dispatch(plan.command, &settings, plan.emit, &mut out);
    match plan.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    }
    out.commit()
}

/// Runs one invocation end to end. On failure after the output directory
/// is known, staged files are dropped and a `.failed` marker is written.
pub fn run(inv: &Invocation) -> Result<RunSummary, CliError> {
    let plan = plan(inv)?;
    match execute(&plan) {
        Ok(artifacts) => Ok(RunSummary { command: plan.command, out: plan.out, artifacts }),
        Err(e) => {
            mark_failed(&plan.out, &e.report(Some(plan.command)));
            Err(e)
        }
    }
}
