//! Paired-seed evaluation, clean-run auditing and task-balanced summaries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Variant;
use crate::gateway::ModelGateway;
use crate::harness::AuditEventKind;
use crate::play::{play_match, AgentSpec, MatchRecord};

pub const DEFAULT_DEV_SEEDS: usize = 5;
pub const MAX_DEV_SEEDS: usize = 10;
pub const HELD_OUT_SEEDS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("seed set `{0}` is empty")]
    EmptySeedSet(String),
    #[error("seed {seed} is both development and held-out ({development} / {held_out})")]
    SeedLeak {
        seed: u64,
        development: String,
        held_out: String,
    },
    #[error("summaries cover different seed sets")]
    SeedMismatch,
    #[error("task `{0}` has no runs")]
    EmptyTask(String),
    #[error("no tasks to summarize")]
    NoTasks,
    #[error("development seed count {0} out of range")]
    DevSeedCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRole {
    Development,
    HeldOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub id: String,
    pub role: SeedRole,
    pub variant: Variant,
    pub seeds: Vec<u64>,
}

impl SeedSet {
    pub fn held_out(variant: Variant) -> SeedSet {
        let base = match variant {
            Variant::Small3 => 120_000,
            Variant::OneCallWild1 => 130_000,
        };
        SeedSet {
            id: format!("{}-heldout", variant.task_key()),
            role: SeedRole::HeldOut,
            variant,
            seeds: (base..base + HELD_OUT_SEEDS).collect(),
        }
    }

    pub fn development(variant: Variant, count: usize) -> Result<SeedSet, EvalError> {
        if count == 0 || count > MAX_DEV_SEEDS {
            return Err(EvalError::DevSeedCount(count));
        }
        let base = match variant {
            Variant::Small3 => 100_000,
            Variant::OneCallWild1 => 110_000,
        };
        Ok(SeedSet {
            id: format!("{}-dev", variant.task_key()),
            role: SeedRole::Development,
            variant,
            seeds: (base..base + count as u64).collect(),
        })
    }
}

/// All seed sets in play, with the dev/held-out disjointness check.
#[derive(Debug, Clone, Default)]
pub struct SeedRegistry {
    sets: Vec<SeedSet>,
}

impl SeedRegistry {
    pub fn new() -> SeedRegistry {
        SeedRegistry::default()
    }

    /// Default development sets plus both held-out sets.
    pub fn standard(dev_count: usize) -> Result<SeedRegistry, EvalError> {
        let mut r = SeedRegistry::new();
        for v in Variant::ALL {
            r.register(SeedSet::development(v, dev_count)?)?;
            r.register(SeedSet::held_out(v))?;
        }
        Ok(r)
    }

    pub fn register(&mut self, set: SeedSet) -> Result<(), EvalError> {
        if set.seeds.is_empty() {
            return Err(EvalError::EmptySeedSet(set.id));
        }
        for other in self.sets.iter().filter(|o| o.role != set.role && o.variant == set.variant) {
            if let Some(&seed) = set.seeds.iter().find(|s| other.seeds.contains(s)) {
                let (development, held_out) = match set.role {
                    SeedRole::Development => (set.id.clone(), other.id.clone()),
                    SeedRole::HeldOut => (other.id.clone(), set.id.clone()),
                };
                return Err(EvalError::SeedLeak { seed, development, held_out });
            }
        }
        self.sets.retain(|o| o.id != set.id);
        self.sets.push(set);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&SeedSet> {
        self.sets.iter().find(|s| s.id == id)
    }

    pub fn find(&self, variant: Variant, role: SeedRole) -> Option<&SeedSet> {
        self.sets.iter().find(|s| s.variant == variant && s.role == role)
    }

    pub fn sets(&self) -> &[SeedSet] {
        &self.sets
    }

    /// Gate used by the evolution loop: only development seeds that touch no
    /// held-out seed pass.
    pub fn development_only(&self, set: &SeedSet) -> Result<(), EvalError> {
        if set.role == SeedRole::HeldOut {
            return Err(EvalError::SeedLeak {
                seed: set.seeds.first().copied().unwrap_or_default(),
                development: String::from("(development run)"),
                held_out: set.id.clone(),
            });
        }
        for held in self.sets.iter().filter(|o| o.role == SeedRole::HeldOut && o.variant == set.variant) {
            if let Some(&seed) = set.seeds.iter().find(|s| held.seeds.contains(s)) {
                return Err(EvalError::SeedLeak {
                    seed,
                    development: set.id.clone(),
                    held_out: held.id.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedResult {
    pub logical_seed: u64,
    /// Target reward in leg 0 (target in seat 0) and leg 1 (target in seat 1).
    pub leg_rewards: [f64; 2],
    pub paired_reward: f64,
    /// Events raised by either side during each leg, target side first.
    pub audit_flags: [Vec<AuditEventKind>; 2],
    /// Infrastructure failure per leg, if a side forfeited.
    #[serde(default)]
    pub failures: [Option<String>; 2],
}

impl PairedResult {
    pub fn succeeded(&self) -> bool {
        self.failures.iter().all(Option::is_none)
    }

    pub fn infrastructure_events(&self) -> usize {
        self.audit_flags.iter().flatten().filter(|e| e.breaks_clean_run()).count()
    }

    pub fn is_clean(&self) -> bool {
        self.succeeded() && self.infrastructure_events() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub seed_set: String,
    pub role: SeedRole,
    pub variant: Variant,
    pub target: String,
    pub opponent: String,
    pub n: usize,
    pub mean_reward: f64,
    pub standard_error: f64,
    pub clean: bool,
    pub results: Vec<PairedResult>,
}

impl EvalSummary {
    pub fn from_results(
        seed_set: &SeedSet,
        target: &str,
        opponent: &str,
        results: Vec<PairedResult>,
    ) -> EvalSummary {
        let rewards: Vec<f64> = results.iter().map(|r| r.paired_reward).collect();
        let (mean_reward, standard_error) = mean_and_se(&rewards);
        let clean = results.len() == seed_set.seeds.len() && results.iter().all(PairedResult::is_clean);
        EvalSummary {
            seed_set: seed_set.id.clone(),
            role: seed_set.role,
            variant: seed_set.variant,
            target: target.into(),
            opponent: opponent.into(),
            n: results.len(),
            mean_reward,
            standard_error,
            clean,
            results,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.results.iter().map(|r| r.logical_seed).collect()
    }
}

/// Mean and standard error (sample deviation over `n - 1`, divided by `sqrt(n)`).
/// A single sample has standard error zero.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = libm::sqrt(ss / (n - 1) as f64);
    (mean, sd / libm::sqrt(n as f64))
}

/// Both legs of one logical seed, with the raw match records.
#[derive(Debug, Clone)]
pub struct PairedRun {
    pub result: PairedResult,
    pub legs: [MatchRecord; 2],
}

pub fn run_paired_seed_detailed(
    target: &AgentSpec,
    opponent: &AgentSpec,
    variant: Variant,
    logical_seed: u64,
    gateway: &mut dyn ModelGateway,
    rollout_prefix: &str,
) -> PairedRun {
    let legs = [0usize, 1].map(|target_seat| {
        let mut agents = [opponent, opponent];
        agents[target_seat] = target;
        let id = format!("{rollout_prefix}{logical_seed}/leg{target_seat}");
        play_match(variant, logical_seed, agents, gateway, &id)
    });
    let mut leg_rewards = [0.0; 2];
    let mut audit_flags: [Vec<AuditEventKind>; 2] = [Vec::new(), Vec::new()];
    let mut failures: [Option<String>; 2] = [None, None];
    for (target_seat, leg) in legs.iter().enumerate() {
        leg_rewards[target_seat] = leg.reward(target_seat);
        audit_flags[target_seat].extend_from_slice(&leg.events[target_seat]);
        audit_flags[target_seat].extend_from_slice(&leg.events[1 - target_seat]);
        failures[target_seat] = leg.failure.as_ref().map(|f| {
            let side = if f.seat == target_seat { "target" } else { "opponent" };
            format!("{side}: {}", f.message)
        });
    }
    let result = PairedResult {
        logical_seed,
        leg_rewards,
        paired_reward: (leg_rewards[0] + leg_rewards[1]) / 2.0,
        audit_flags,
        failures,
    };
    PairedRun { result, legs }
}

pub fn run_paired_seed(
    target: &AgentSpec,
    opponent: &AgentSpec,
    variant: Variant,
    logical_seed: u64,
    gateway: &mut dyn ModelGateway,
) -> PairedResult {
    run_paired_seed_detailed(target, opponent, variant, logical_seed, gateway, "").result
}

/// Evaluate over a registered seed set. Seeds run in order, so summaries are
/// reproducible whenever the gateway is.
pub fn evaluate_detailed(
    target: &AgentSpec,
    opponent: &AgentSpec,
    seed_set: &SeedSet,
    registry: &SeedRegistry,
    gateway: &mut dyn ModelGateway,
) -> Result<(EvalSummary, Vec<PairedRun>), EvalError> {
    if seed_set.seeds.is_empty() {
        return Err(EvalError::EmptySeedSet(seed_set.id.clone()));
    }
    let mut check = registry.clone();
    check.register(seed_set.clone())?;
    let prefix = format!("{}/", seed_set.id);
    let runs: Vec<PairedRun> = seed_set
        .seeds
        .iter()
        .map(|&s| run_paired_seed_detailed(target, opponent, seed_set.variant, s, gateway, &prefix))
        .collect();
    let results = runs.iter().map(|r| r.result.clone()).collect();
    Ok((EvalSummary::from_results(seed_set, target.id(), opponent.id(), results), runs))
}

pub fn evaluate(
    target: &AgentSpec,
    opponent: &AgentSpec,
    seed_set: &SeedSet,
    registry: &SeedRegistry,
    gateway: &mut dyn ModelGateway,
) -> Result<EvalSummary, EvalError> {
    evaluate_detailed(target, opponent, seed_set, registry, gateway).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRunReport {
    pub clean: bool,
    pub expected: usize,
    pub present: [usize; 2],
    pub failed: [usize; 2],
    /// Fallback, error and timeout counts per summary.
    pub infrastructure: [BTreeMap<String, usize>; 2],
    /// Invalid-action and parse-fallback counts per summary.
    pub behavioral: [BTreeMap<String, usize>; 2],
}

fn tally(summary: &EvalSummary) -> (BTreeMap<String, usize>, BTreeMap<String, usize>) {
    let mut infra = BTreeMap::new();
    let mut behavioral = BTreeMap::new();
    for e in summary.results.iter().flat_map(|r| r.audit_flags.iter().flatten()) {
        let bucket = if e.breaks_clean_run() { &mut infra } else { &mut behavioral };
        *bucket.entry(e.label().into()).or_insert(0) += 1;
    }
    (infra, behavioral)
}

/// Compare a target evaluation and its baseline over the same seeds.
pub fn clean_run_audit(summary: &EvalSummary, baseline: &EvalSummary) -> Result<CleanRunReport, EvalError> {
    let seeds: BTreeSet<u64> = summary.seeds().into_iter().collect();
    let base_seeds: BTreeSet<u64> = baseline.seeds().into_iter().collect();
    if summary.seed_set != baseline.seed_set || seeds != base_seeds {
        return Err(EvalError::SeedMismatch);
    }
    let both = [summary, baseline];
    let present = both.map(|s| s.results.len());
    let failed = both.map(|s| s.results.iter().filter(|r| !r.succeeded()).count());
    let (i0, b0) = tally(summary);
    let (i1, b1) = tally(baseline);
    let expected = seeds.len();
    let complete = present.iter().all(|&p| p == expected) && summary.n == expected && baseline.n == expected;
    let clean = complete && failed == [0, 0] && i0.is_empty() && i1.is_empty();
    Ok(CleanRunReport {
        clean,
        expected,
        present,
        failed,
        infrastructure: [i0, i1],
        behavioral: [b0, b1],
    })
}

/// Average run means within each task, then average the task means.
pub fn macro_of_means(task_means: &BTreeMap<String, Vec<f64>>) -> Result<f64, EvalError> {
    if task_means.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let mut total = 0.0;
    for (task, runs) in task_means {
        if runs.is_empty() {
            return Err(EvalError::EmptyTask(task.clone()));
        }
        total += runs.iter().sum::<f64>() / runs.len() as f64;
    }
    Ok(total / task_means.len() as f64)
}

pub fn macro_summary(task_runs: &BTreeMap<String, Vec<EvalSummary>>) -> Result<f64, EvalError> {
    let means = task_runs
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|s| s.mean_reward).collect()))
        .collect();
    macro_of_means(&means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptedGateway, ScriptedModelSpec};
    use crate::harness::reference;
    use alloc::vec;

    fn result(seed: u64, legs: [f64; 2]) -> PairedResult {
        PairedResult {
            logical_seed: seed,
            leg_rewards: legs,
            paired_reward: (legs[0] + legs[1]) / 2.0,
            audit_flags: [Vec::new(), Vec::new()],
            failures: [None, None],
        }
    }

    #[test]
    fn standard_sets_are_disjoint_and_sized() {
        let r = SeedRegistry::standard(DEFAULT_DEV_SEEDS).unwrap();
        let held = r.find(Variant::Small3, SeedRole::HeldOut).unwrap();
        assert_eq!(held.seeds.first(), Some(&120_000));
        assert_eq!(held.seeds.last(), Some(&120_029));
        let held = r.find(Variant::OneCallWild1, SeedRole::HeldOut).unwrap();
        assert_eq!((held.seeds[0], held.seeds.len()), (130_000, 30));
        assert_eq!(r.find(Variant::Small3, SeedRole::Development).unwrap().seeds.len(), 5);
        assert!(SeedSet::development(Variant::Small3, 11).is_err());
    }

    #[test]
    fn overlapping_roles_leak() {
        let mut r = SeedRegistry::standard(5).unwrap();
        let bad = SeedSet {
            id: "sneaky".into(),
            role: SeedRole::Development,
            variant: Variant::Small3,
            seeds: vec![1, 120_004],
        };
        assert!(matches!(r.register(bad.clone()), Err(EvalError::SeedLeak { seed: 120_004, .. })));
        assert!(matches!(r.development_only(&bad), Err(EvalError::SeedLeak { .. })));
        let held = SeedSet::held_out(Variant::Small3);
        assert!(matches!(
            r.development_only(&held),
            Err(EvalError::SeedLeak { seed: 120_000, held_out, .. }) if held_out == "small3-heldout"
        ));
    }

    #[test]
    fn standard_error_convention() {
        assert_eq!(mean_and_se(&[1.0; 30]), (1.0, 0.0));
        assert_eq!(mean_and_se(&[0.75]), (0.75, 0.0));
        let alternating: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let (m, se) = mean_and_se(&alternating);
        assert_eq!(m, 0.5);
        let expected = 0.5 / libm::sqrt(30.0) * libm::sqrt(30.0 / 29.0);
        assert!((se - expected).abs() < 1e-15);
    }

    #[test]
    fn macro_is_task_balanced() {
        let mut runs = BTreeMap::new();
        runs.insert(String::from("small3"), vec![0.828]);
        runs.insert(String::from("onecall"), vec![0.772]);
        assert_eq!(macro_of_means(&runs).unwrap(), 0.8);
        runs.insert(String::from("small3"), vec![0.9, 0.7, 0.8]);
        runs.insert(String::from("onecall"), vec![0.4]);
        assert!((macro_of_means(&runs).unwrap() - 0.6).abs() < 1e-15);
        runs.insert(String::from("empty"), vec![]);
        assert_eq!(macro_of_means(&runs), Err(EvalError::EmptyTask("empty".into())));
        assert_eq!(macro_of_means(&BTreeMap::new()), Err(EvalError::NoTasks));
    }

    #[test]
    fn clean_run_rules() {
        let set = SeedSet::held_out(Variant::Small3);
        let results: Vec<_> = set.seeds.iter().map(|&s| result(s, [1.0, 0.0])).collect();
        let base = EvalSummary::from_results(&set, "base", "naive", results.clone());
        let mut noisy = results.clone();
        noisy[3].audit_flags[0].push(AuditEventKind::InvalidAction);
        let summary = EvalSummary::from_results(&set, "case_a", "naive", noisy.clone());
        let report = clean_run_audit(&summary, &base).unwrap();
        assert!(report.clean && summary.clean);
        assert_eq!(report.behavioral[0].get("invalid_action"), Some(&1));

        noisy[7].audit_flags[1].push(AuditEventKind::Timeout);
        let summary = EvalSummary::from_results(&set, "case_a", "naive", noisy);
        assert!(!summary.clean);
        assert!(!clean_run_audit(&summary, &base).unwrap().clean);

        let short = EvalSummary::from_results(&set, "case_a", "naive", results[..29].to_vec());
        assert_eq!(clean_run_audit(&short, &base), Err(EvalError::SeedMismatch));
        let other = SeedSet::held_out(Variant::OneCallWild1);
        let other = EvalSummary::from_results(&other, "x", "y", vec![result(130_000, [1.0, 1.0])]);
        assert_eq!(clean_run_audit(&other, &base), Err(EvalError::SeedMismatch));
    }

    #[test]
    fn mirror_match_scores_one_half() {
        let registry = SeedRegistry::standard(5).unwrap();
        let spec = AgentSpec::Harness(reference::case_a());
        let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
        let dev = registry.find(Variant::OneCallWild1, SeedRole::Development).unwrap();
        let s = evaluate(&spec, &spec, dev, &registry, &mut g).unwrap();
        assert!(s.results.iter().all(|r| r.paired_reward == 0.5));
        assert_eq!((s.mean_reward, s.standard_error), (0.5, 0.0));
    }
}
