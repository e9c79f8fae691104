//! The outer loop: information bundles, proposers, development-only
//! evaluation, archive appends and final selection.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use harnevo_core::eval::{EvalError, EvalSummary, PairedResult, SeedRegistry, SeedRole, SeedSet};
use harnevo_core::gateway::ModelGateway;
use harnevo_core::harness::HarnessDescriptor;
use harnevo_core::play::AgentSpec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::archive::{Archive, ArchiveError, CandidateArtifacts, DemonstrationSet, IndexEntry};
use crate::jsonl::{self, io_error, JsonlError};
use crate::runner::{run_eval, EvalArtifacts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Archive only.
    Meta,
    /// Archive plus external text.
    Open,
    /// Archive plus human demonstrations.
    Demo,
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "meta" => Ok(Regime::Meta),
            "open" => Ok(Regime::Open),
            "demo" => Ok(Regime::Demo),
            _ => Err(format!("unknown regime `{s}` (meta, open, demo)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("regime violation: {0}")]
    RegimeViolation(String),
    #[error("candidate rejected: {0}")]
    CandidateRejected(String),
    #[error("archive is empty")]
    EmptyArchive,
    #[error("plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub name: String,
    pub text: String,
}

/// Candidate as the proposer sees it: scores plus the files it may fetch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub candidate_id: String,
    pub iteration: u32,
    pub parent_id: Option<String>,
    pub role: SeedRole,
    pub seed_set: String,
    pub n: usize,
    pub mean_dev_reward: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extras {
    pub corpus: Option<Vec<Document>>,
    pub demonstrations: Option<DemonstrationSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformationBundle {
    pub regime: Regime,
    pub archive_view: Vec<ManifestEntry>,
    pub text_corpus: Option<Vec<Document>>,
    pub demonstrations: Option<DemonstrationSet>,
}

impl InformationBundle {
    /// Structured document handed to remote proposers.
    pub fn to_json(&self) -> Value {
        json!({
            "regime": self.regime,
            "archive": self.archive_view,
            "text_corpus": self.text_corpus,
            "demonstrations": self.demonstrations.as_ref().map(|d| {
                d.entries
                    .iter()
                    .map(|e| json!({ "id": e.id, "reward": e.reward, "trajectory": e.trajectory.to_jsonl() }))
                    .collect::<Vec<_>>()
            }),
        })
    }

    pub fn check_regime(&self) -> Result<(), EvolveError> {
        regime_check(self.regime, self.text_corpus.is_some(), self.demonstrations.is_some())
            .map_err(EvolveError::RegimeViolation)
    }
}

fn regime_check(regime: Regime, corpus: bool, demos: bool) -> Result<(), String> {
    match (regime, corpus, demos) {
        (Regime::Meta, false, false) | (Regime::Open, true, false) | (Regime::Demo, false, true) => Ok(()),
        (_, _, true) => Err(format!("demonstrations supplied to the {regime:?} regime")),
        (Regime::Meta, true, _) | (Regime::Demo, true, _) => Err(format!("text corpus supplied to the {regime:?} regime")),
        (Regime::Open, false, _) => Err("open regime needs a text corpus".into()),
        (Regime::Demo, false, false) => Err("demo regime needs demonstrations".into()),
    }
}

pub fn assemble_information(regime: Regime, archive: &Archive, extras: Extras) -> Result<InformationBundle, EvolveError> {
    regime_check(regime, extras.corpus.is_some(), extras.demonstrations.is_some())
        .map_err(EvolveError::RegimeViolation)?;
    let mut archive_view = Vec::new();
    for e in archive.entries()?.into_iter().filter(|e| e.role == SeedRole::Development) {
        let files = archive.get(&e.candidate_id)?.files;
        archive_view.push(ManifestEntry {
            candidate_id: e.candidate_id,
            iteration: e.iteration,
            parent_id: e.parent_id,
            role: e.role,
            seed_set: e.seed_set,
            n: e.n,
            mean_dev_reward: e.mean_dev_reward,
            files,
        });
    }
    Ok(InformationBundle {
        regime,
        archive_view,
        text_corpus: extras.corpus,
        demonstrations: extras.demonstrations,
    })
}

/// Raw proposer output, validated by the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub source: String,
    /// Bundle elements the proposer reports having used.
    #[serde(default)]
    pub cited: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("proposer timed out")]
    Timeout,
    #[error("proposer failed: {0}")]
    Failed(String),
}

pub trait Proposer {
    fn kind(&self) -> &'static str;
    fn propose(&mut self, bundle: &InformationBundle, iteration: u32, k: usize) -> Result<Vec<Proposal>, ProposerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub iteration: u32,
    pub parent: String,
    /// Inline descriptor; `source` takes a path instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<HarnessDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
}

/// Offline proposer replaying a fixed plan of (iteration, descriptor, parent).
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedProposer {
    plan: Vec<(u32, String, String)>,
}

impl ScriptedProposer {
    pub fn new(entries: Vec<PlanEntry>) -> Result<ScriptedProposer, EvolveError> {
        let mut plan = Vec::new();
        for e in entries {
            let text = match (e.descriptor, &e.source) {
                (Some(mut d), None) => {
                    d.parent_id = Some(e.parent.clone());
                    d.serialize()
                }
                (None, Some(p)) => fs::read_to_string(p).map_err(|err| EvolveError::Plan(format!("{}: {err}", p.display())))?,
                _ => return Err(EvolveError::Plan("each entry needs exactly one of descriptor or source".into())),
            };
            plan.push((e.iteration, e.parent, text));
        }
        Ok(ScriptedProposer { plan })
    }

    /// Plan file: a JSON array of entries. Relative `source` paths resolve
    /// against the plan file's directory.
    pub fn from_file(path: &Path) -> Result<ScriptedProposer, EvolveError> {
        let text = fs::read_to_string(path).map_err(|e| EvolveError::Plan(format!("{}: {e}", path.display())))?;
        let mut entries: Vec<PlanEntry> =
            serde_json::from_str(&text).map_err(|e| EvolveError::Plan(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut entries {
            if let Some(s) = &e.source {
                if s.is_relative() {
                    e.source = Some(base.join(s));
                }
            }
        }
        ScriptedProposer::new(entries)
    }
}

impl Proposer for ScriptedProposer {
    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn propose(&mut self, bundle: &InformationBundle, iteration: u32, k: usize) -> Result<Vec<Proposal>, ProposerError> {
        Ok(self
            .plan
            .iter()
            .filter(|(i, _, _)| *i == iteration)
            .take(k)
            .map(|(_, parent, text)| {
                let mut cited = vec![format!("archive/{parent}")];
                if let Some(d) = &bundle.demonstrations {
                    cited.extend(d.entries.iter().map(|e| format!("demos/{}", e.id)));
                }
                if let Some(c) = &bundle.text_corpus {
                    cited.extend(c.iter().map(|d| format!("corpus/{}", d.name)));
                }
                Proposal { source: text.clone(), cited }
            })
            .collect())
    }
}

/// Proposer behind an HTTP endpoint: receives the bundle document and
/// answers `{"candidates": [{"source": ..., "cited": [...]}]}`.
pub struct RemoteProposer {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteProposer {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<RemoteProposer, ProposerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProposerError::Failed(e.to_string()))?;
        Ok(RemoteProposer { endpoint: endpoint.into(), client })
    }
}

impl Proposer for RemoteProposer {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn propose(&mut self, bundle: &InformationBundle, iteration: u32, k: usize) -> Result<Vec<Proposal>, ProposerError> {
        let body = json!({ "iteration": iteration, "k": k, "bundle": bundle.to_json() });
        let fail = |e: reqwest::Error| {
            if e.is_timeout() {
                ProposerError::Timeout
            } else {
                ProposerError::Failed(e.to_string())
            }
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(fail)?;
        if !resp.status().is_success() {
            return Err(ProposerError::Failed(format!("HTTP {}", resp.status().as_u16())));
        }
        #[derive(Deserialize)]
        struct Reply {
            candidates: Vec<Proposal>,
        }
        let text = resp.text().map_err(fail)?;
        let reply: Reply = serde_json::from_str(&text).map_err(|e| ProposerError::Failed(e.to_string()))?;
        Ok(reply.candidates.into_iter().take(k).collect())
    }
}

/// Scores a candidate on development seeds.
pub trait Evaluator {
    fn evaluate(
        &mut self,
        candidate: &HarnessDescriptor,
        seeds: &SeedSet,
        registry: &SeedRegistry,
    ) -> Result<EvalArtifacts, EvalError>;
}

/// Real paired-seed matches against a fixed opponent.
pub struct MatchEvaluator {
    pub opponent: AgentSpec,
    pub gateway: Box<dyn ModelGateway + Send>,
}

impl Evaluator for MatchEvaluator {
    fn evaluate(&mut self, c: &HarnessDescriptor, seeds: &SeedSet, registry: &SeedRegistry) -> Result<EvalArtifacts, EvalError> {
        run_eval(&AgentSpec::Harness(c.clone()), &self.opponent, seeds, registry, self.gateway.as_mut())
    }
}

/// Returns preset paired rewards per candidate id, for loop tests.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEvaluator {
    pub rewards: BTreeMap<String, Vec<f64>>,
}

impl Evaluator for ScriptedEvaluator {
    fn evaluate(&mut self, c: &HarnessDescriptor, seeds: &SeedSet, registry: &SeedRegistry) -> Result<EvalArtifacts, EvalError> {
        let mut check = registry.clone();
        check.register(seeds.clone())?;
        let preset = self.rewards.get(&c.id).cloned().unwrap_or_else(|| vec![0.5]);
        let results = seeds
            .seeds
            .iter()
            .zip(preset.iter().cycle())
            .map(|(&logical_seed, &r)| PairedResult {
                logical_seed,
                leg_rewards: [r, r],
                paired_reward: r,
                audit_flags: [Vec::new(), Vec::new()],
                failures: [None, None],
            })
            .collect();
        Ok(EvalArtifacts {
            summary: EvalSummary::from_results(seeds, &c.id, "scripted", results),
            runs: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Bundle {
        iteration: u32,
        regime: Regime,
        archive_candidates: Vec<String>,
        archive_roles: Vec<SeedRole>,
        corpus_documents: Option<usize>,
        demonstrations: Option<usize>,
    },
    ProposerFailed {
        iteration: u32,
        message: String,
    },
    CandidateRejected {
        iteration: u32,
        candidate: Option<String>,
        reason: String,
    },
    CandidateEvaluated {
        iteration: u32,
        candidate: String,
        parent: Option<String>,
        seed_set: String,
        role: SeedRole,
        seeds: Vec<u64>,
        mean_dev_reward: f64,
        cited: Vec<String>,
    },
    Selected {
        candidate: String,
        mean_dev_reward: f64,
    },
}

#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub regime: Regime,
    pub iterations: u32,
    pub k: usize,
    pub dev_seeds: SeedSet,
    pub registry: SeedRegistry,
    pub extras: Extras,
}

#[derive(Debug, Clone, Default)]
pub struct LoopState {
    /// Last completed iteration; 0 means only the base is archived.
    pub iteration: u32,
    pub log: Vec<LogEvent>,
}

fn cite(d: &mut HarnessDescriptor, cited: &[String]) {
    if !cited.is_empty() {
        d.metadata.insert("cited".into(), cited.join(","));
    }
}

/// Archive the base harness as iteration 0 when the archive is empty.
pub fn seed_archive(
    archive: &Archive,
    base: &HarnessDescriptor,
    evaluator: &mut dyn Evaluator,
    config: &EvolveConfig,
) -> Result<(), EvolveError> {
    if !archive.is_empty()? {
        return Ok(());
    }
    config.registry.development_only(&config.dev_seeds)?;
    let eval = evaluator.evaluate(base, &config.dev_seeds, &config.registry)?;
    archive.append_eval_dir(&CandidateArtifacts { iteration: 0, descriptor: base.clone(), eval })?;
    Ok(())
}

pub fn run_iteration(
    state: &mut LoopState,
    archive: &Archive,
    proposer: &mut dyn Proposer,
    evaluator: &mut dyn Evaluator,
    config: &EvolveConfig,
) -> Result<(), EvolveError> {
    config.registry.development_only(&config.dev_seeds)?;
    let iteration = state.iteration + 1;
    let bundle = assemble_information(config.regime, archive, config.extras.clone())?;
    state.log.push(LogEvent::Bundle {
        iteration,
        regime: bundle.regime,
        archive_candidates: bundle.archive_view.iter().map(|e| e.candidate_id.clone()).collect(),
        archive_roles: bundle.archive_view.iter().map(|e| e.role).collect(),
        corpus_documents: bundle.text_corpus.as_ref().map(Vec::len),
        demonstrations: bundle.demonstrations.as_ref().map(|d| d.entries.len()),
    });
    let proposals = match proposer.propose(&bundle, iteration, config.k) {
        Ok(p) => p,
        Err(e) => {
            state.log.push(LogEvent::ProposerFailed { iteration, message: e.to_string() });
            Vec::new()
        }
    };
    for p in proposals {
        let known: Vec<String> = archive.entries()?.into_iter().map(|e| e.candidate_id).collect();
        let mut d = match validate_proposal(&p, &known) {
            Ok(d) => d,
            Err((candidate, reason)) => {
                state.log.push(LogEvent::CandidateRejected { iteration, candidate, reason });
                continue;
            }
        };
        cite(&mut d, &p.cited);
        let eval = evaluator.evaluate(&d, &config.dev_seeds, &config.registry)?;
        let s = &eval.summary;
        state.log.push(LogEvent::CandidateEvaluated {
            iteration,
            candidate: d.id.clone(),
            parent: d.parent_id.clone(),
            seed_set: s.seed_set.clone(),
            role: s.role,
            seeds: s.seeds(),
            mean_dev_reward: s.mean_reward,
            cited: p.cited.clone(),
        });
        archive.append_eval_dir(&CandidateArtifacts { iteration, descriptor: d, eval })?;
    }
    state.iteration = iteration;
    Ok(())
}

fn validate_proposal(p: &Proposal, known: &[String]) -> Result<HarnessDescriptor, (Option<String>, String)> {
    let d = HarnessDescriptor::deserialize(&p.source).map_err(|e| (None, e.to_string()))?;
    let id = Some(d.id.clone());
    d.validate().map_err(|e| (id.clone(), e.to_string()))?;
    match &d.parent_id {
        None => return Err((id, "candidate declares no parent".into())),
        Some(parent) if !known.contains(parent) => {
            return Err((id, format!("parent `{parent}` is not in the archive")))
        }
        _ => {}
    }
    if known.contains(&d.id) {
        return Err((id, "candidate id already archived".into()));
    }
    Ok(d)
}

/// Highest mean development reward; exact ties go to the later append.
pub fn select_final(archive: &Archive) -> Result<IndexEntry, EvolveError> {
    let mut best: Option<IndexEntry> = None;
    for e in archive.entries()?.into_iter().filter(|e| e.role == SeedRole::Development) {
        if best.as_ref().is_none_or(|b| e.mean_dev_reward >= b.mean_dev_reward) {
            best = Some(e);
        }
    }
    best.ok_or(EvolveError::EmptyArchive)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    /// Candidates evaluated at each iteration (k_t).
    pub per_iteration: Vec<usize>,
    pub dev_seeds: usize,
    /// Sum of k_t times the development seed count.
    pub expected_rollouts: usize,
    /// Logical development seeds actually evaluated, from the log.
    pub development_rollouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAudit {
    pub regime_purity: bool,
    pub held_out_blind: bool,
    pub budget: BudgetReport,
    pub violations: Vec<String>,
}

/// Recheck the regime and held-out invariants from the run log alone.
pub fn audit_run_log(log: &[LogEvent], registry: &SeedRegistry, dev_seeds: usize, iterations: u32) -> RunAudit {
    let held: Vec<u64> = registry
        .sets()
        .iter()
        .filter(|s| s.role == SeedRole::HeldOut)
        .flat_map(|s| s.seeds.iter().copied())
        .collect();
    let held_ids: Vec<&str> = registry.sets().iter().filter(|s| s.role == SeedRole::HeldOut).map(|s| s.id.as_str()).collect();
    let mut violations = Vec::new();
    let mut regime_purity = true;
    let mut held_out_blind = true;
    let mut per_iteration = vec![0usize; iterations as usize];
    let mut development_rollouts = 0;
    for ev in log {
        match ev {
            LogEvent::Bundle { iteration, regime, archive_roles, corpus_documents, demonstrations, .. } => {
                if let Err(m) = regime_check(*regime, corpus_documents.is_some(), demonstrations.is_some()) {
                    regime_purity = false;
                    violations.push(format!("iteration {iteration}: {m}"));
                }
                if archive_roles.iter().any(|r| *r == SeedRole::HeldOut) {
                    held_out_blind = false;
                    violations.push(format!("iteration {iteration}: bundle exposes held-out results"));
                }
            }
            LogEvent::CandidateEvaluated { iteration, candidate, role, seeds, seed_set, .. } => {
                if *role == SeedRole::HeldOut || held_ids.contains(&seed_set.as_str()) || seeds.iter().any(|s| held.contains(s)) {
                    held_out_blind = false;
                    violations.push(format!("iteration {iteration}: `{candidate}` evaluated on held-out seeds"));
                }
                if let Some(slot) = per_iteration.get_mut(*iteration as usize - 1) {
                    *slot += 1;
                }
                development_rollouts += seeds.len();
            }
            _ => {}
        }
    }
    let expected_rollouts = per_iteration.iter().sum::<usize>() * dev_seeds;
    RunAudit {
        regime_purity,
        held_out_blind,
        budget: BudgetReport { per_iteration, dev_seeds, expected_rollouts, development_rollouts },
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub regime: Regime,
    pub iterations: u32,
    pub k: usize,
    pub proposer: String,
    pub dev_seed_set: String,
    pub dev_seeds: Vec<u64>,
    pub budget: BudgetReport,
    pub regime_purity: bool,
    pub held_out_blind: bool,
    pub selected: String,
    pub selected_reward: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub log: Vec<LogEvent>,
    pub selected: HarnessDescriptor,
}

pub fn run_evolution(
    archive: &Archive,
    base: &HarnessDescriptor,
    proposer: &mut dyn Proposer,
    evaluator: &mut dyn Evaluator,
    config: &EvolveConfig,
) -> Result<RunOutcome, EvolveError> {
    seed_archive(archive, base, evaluator, config)?;
    let mut state = LoopState {
        iteration: archive.entries()?.iter().map(|e| e.iteration).max().unwrap_or(0),
        log: Vec::new(),
    };
    let first = state.iteration;
    for _ in 0..config.iterations {
        run_iteration(&mut state, archive, proposer, evaluator, config)?;
    }
    let best = select_final(archive)?;
    state.log.push(LogEvent::Selected { candidate: best.candidate_id.clone(), mean_dev_reward: best.mean_dev_reward });
    let shifted: Vec<LogEvent> = state
        .log
        .iter()
        .cloned()
        .map(|mut e| {
            match &mut e {
                LogEvent::Bundle { iteration, .. }
                | LogEvent::ProposerFailed { iteration, .. }
                | LogEvent::CandidateRejected { iteration, .. }
                | LogEvent::CandidateEvaluated { iteration, .. } => *iteration -= first,
                LogEvent::Selected { .. } => {}
            }
            e
        })
        .collect();
    let audit = audit_run_log(&shifted, &config.registry, config.dev_seeds.seeds.len(), config.iterations);
    let manifest = RunManifest {
        regime: config.regime,
        iterations: config.iterations,
        k: config.k,
        proposer: proposer.kind().into(),
        dev_seed_set: config.dev_seeds.id.clone(),
        dev_seeds: config.dev_seeds.seeds.clone(),
        budget: audit.budget,
        regime_purity: audit.regime_purity,
        held_out_blind: audit.held_out_blind,
        selected: best.candidate_id.clone(),
        selected_reward: best.mean_dev_reward,
    };
    Ok(RunOutcome { manifest, log: state.log, selected: archive.descriptor(&best.candidate_id)? })
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_LOG_FILE: &str = "run_log.jsonl";

pub fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<(), EvolveError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let m = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&outcome.manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&m, text).map_err(|e| io_error(&m, e))?;
    let l = dir.join(RUN_LOG_FILE);
    fs::write(&l, jsonl::to_text(&outcome.log)).map_err(|e| io_error(&l, e))?;
    Ok(())
}

pub fn read_run_log(path: &Path) -> Result<Vec<LogEvent>, EvolveError> {
    Ok(jsonl::read(path)?)
}
