//! Evaluation runs and their on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use harnevo_core::eval::{evaluate_detailed, EvalError, EvalSummary, PairedRun, SeedRegistry, SeedSet};
use harnevo_core::gateway::ModelGateway;
use harnevo_core::harness::{DecisionTrace, HarnessDescriptor, HarnessError};
use harnevo_core::play::AgentSpec;
use serde::Serialize;
use thiserror::Error;

use crate::jsonl::{self, io_error, JsonlError};
use crate::summary;

pub const SUMMARY_FILE: &str = "summary";
pub const REQUESTS_FILE: &str = "requests.jsonl";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const TRACE_DIR: &str = "traces";

#[derive(Debug, Error)]
pub enum AgentLoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Descriptor {
        path: PathBuf,
        #[source]
        source: HarnessError,
    },
    #[error("unknown agent `{0}`: expected naive, a bundled harness id or a .harness file")]
    Unknown(String),
}

pub fn load_descriptor(path: &Path) -> Result<HarnessDescriptor, AgentLoadError> {
    let text = fs::read_to_string(path).map_err(|source| AgentLoadError::Io { path: path.into(), source })?;
    let d = HarnessDescriptor::deserialize(&text)
        .map_err(|source| AgentLoadError::Descriptor { path: path.into(), source })?;
    d.validate().map_err(|source| AgentLoadError::Descriptor { path: path.into(), source })?;
    Ok(d)
}

/// `naive`, a bundled harness id, or a path to a descriptor file.
pub fn resolve_agent(spec: &str) -> Result<AgentSpec, AgentLoadError> {
    if let Ok(a) = spec.parse::<AgentSpec>() {
        return Ok(a);
    }
    let p = Path::new(spec);
    if p.is_file() {
        return load_descriptor(p).map(AgentSpec::Harness);
    }
    Err(AgentLoadError::Unknown(spec.into()))
}

#[derive(Debug, Clone)]
pub struct EvalArtifacts {
    pub summary: EvalSummary,
    pub runs: Vec<PairedRun>,
}

pub fn run_eval(
    target: &AgentSpec,
    opponent: &AgentSpec,
    seeds: &SeedSet,
    registry: &SeedRegistry,
    gateway: &mut dyn ModelGateway,
) -> Result<EvalArtifacts, EvalError> {
    let (summary, runs) = evaluate_detailed(target, opponent, seeds, registry, gateway)?;
    Ok(EvalArtifacts { summary, runs })
}

#[derive(Serialize)]
struct TraceLine<'a> {
    seat: usize,
    agent: &'a str,
    #[serde(flatten)]
    trace: &'a DecisionTrace,
}

pub fn trajectory_file_name(seed: u64, leg: usize, seat: usize) -> String {
    format!("{seed}-leg{leg}-s{seat}.jsonl")
}

fn write(path: &Path, text: &str) -> Result<(), JsonlError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Lay out `summary`, `trajectories/`, `traces/` and `requests.jsonl` under `dir`.
pub fn write_artifacts(dir: &Path, a: &EvalArtifacts) -> Result<(), JsonlError> {
    for sub in [TRAJECTORY_DIR, TRACE_DIR] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io_error(&p, e))?;
    }
    write(&dir.join(SUMMARY_FILE), &summary::render(&a.summary))?;
    let mut requests = String::new();
    for run in &a.runs {
        let seed = run.result.logical_seed;
        for (leg, m) in run.legs.iter().enumerate() {
            for (seat, t) in m.trajectories.iter().enumerate() {
                write(&dir.join(TRAJECTORY_DIR).join(trajectory_file_name(seed, leg, seat)), &t.to_jsonl())?;
            }
            let mut traces = String::new();
            for (seat, ts) in m.traces.iter().enumerate() {
                for trace in ts {
                    traces.push_str(&jsonl::to_line(&TraceLine { seat, agent: &m.agent_ids[seat], trace }));
                }
            }
            write(&dir.join(TRACE_DIR).join(format!("{seed}-leg{leg}.jsonl")), &traces)?;
            requests.push_str(&jsonl::to_text(&m.requests));
        }
    }
    write(&dir.join(REQUESTS_FILE), &requests)
}
