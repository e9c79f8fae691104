//! Attrition-adjusted resource curves, human-distance metrics, edit
//! granularity tallies and hook-string audits.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::RequestRecord;
use crate::trajectory::Trajectory;

pub const DEFAULT_LATE_WINDOW: RangeInclusive<u32> = 19..=23;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("no rollouts")]
    NoRollouts,
    #[error("empty round range")]
    EmptyRange,
    #[error("moving-average window {0} must be odd and positive")]
    InvalidWindow(usize),
    #[error("curves do not share the requested rounds")]
    RangeMismatch,
    #[error("no edits labelled for this arm")]
    EmptyArm,
    #[error("no expected strings: the audit would pass vacuously")]
    AmbiguousAudit,
    #[error("episode `{episode}`: {message}")]
    InvalidRollout { episode: String, message: String },
}

/// One rollout's per-round resource values.
///
/// `values[i]` is the value on entering round `start_round + i`; a rollout
/// reaches exactly the rounds it has values for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSeries {
    pub episode_id: String,
    #[serde(default = "one")]
    pub start_round: u32,
    pub values: Vec<f64>,
    /// Round in which the rollout ended before reaching its next entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_round: Option<u32>,
}

fn one() -> u32 {
    1
}

impl RoundSeries {
    pub fn value_at(&self, round: u32) -> Option<f64> {
        let i = round.checked_sub(self.start_round)? as usize;
        self.values.get(i).copied()
    }

    pub fn last_round(&self) -> Option<u32> {
        (!self.values.is_empty()).then(|| self.start_round + self.values.len() as u32 - 1)
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let bad = |message: &str| AnalyticsError::InvalidRollout {
            episode: self.episode_id.clone(),
            message: message.into(),
        };
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value"));
        }
        if let Some(d) = self.death_round {
            let reached = self.last_round().unwrap_or(self.start_round.saturating_sub(1));
            if d != reached + 1 && d != reached {
                return Err(bad("death round does not follow the last recorded round"));
            }
        }
        Ok(())
    }

    /// Read the resource channel off a trajectory: the first recorded value
    /// in each round. Rounds without a value end the series.
    pub fn from_trajectory(t: &Trajectory) -> RoundSeries {
        let mut by_round: BTreeMap<u32, f64> = BTreeMap::new();
        for s in &t.steps {
            if let Some(v) = s.resource {
                by_round.entry(s.round_index).or_insert(v);
            }
        }
        let start_round = by_round.keys().next().copied().unwrap_or(0);
        let values = by_round
            .iter()
            .enumerate()
            .take_while(|(i, (r, _))| **r == start_round + *i as u32)
            .map(|(_, (_, v))| *v)
            .collect();
        RoundSeries {
            episode_id: t.episode_id.clone(),
            start_round,
            values,
            death_round: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceCurve {
    pub start_round: u32,
    pub values: Vec<f64>,
    pub reach: Vec<f64>,
    pub rollouts: usize,
}

impl ResourceCurve {
    pub fn rounds(&self) -> RangeInclusive<u32> {
        self.start_round..=self.start_round + self.values.len() as u32 - 1
    }

    pub fn at(&self, round: u32) -> Option<(f64, f64)> {
        let i = round.checked_sub(self.start_round)? as usize;
        Some((*self.values.get(i)?, self.reach[i]))
    }

    /// Mean over the rounds in `window` that the curve covers.
    pub fn window_mean(&self, window: RangeInclusive<u32>) -> Option<f64> {
        let picked: Vec<f64> = window.filter_map(|r| self.at(r).map(|(v, _)| v)).collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

/// `M~(r) = (1/N) sum_i M^_i(r)`, where a rollout that has not reached `r`
/// contributes zero.
pub fn adjusted_curve(rollouts: &[RoundSeries], rounds: RangeInclusive<u32>) -> Result<ResourceCurve, AnalyticsError> {
    if rollouts.is_empty() {
        return Err(AnalyticsError::NoRollouts);
    }
    if rounds.is_empty() {
        return Err(AnalyticsError::EmptyRange);
    }
    for r in rollouts {
        r.validate()?;
    }
    let n = rollouts.len() as f64;
    let (values, reach) = rounds
        .clone()
        .map(|round| {
            let mut total = 0.0;
            let mut alive = 0usize;
            for r in rollouts {
                if let Some(v) = r.value_at(round) {
                    total += v;
                    alive += 1;
                }
            }
            (total / n, alive as f64 / n)
        })
        .unzip();
    Ok(ResourceCurve {
        start_round: *rounds.start(),
        values,
        reach,
        rollouts: rollouts.len(),
    })
}

/// Curve over every round any rollout reaches.
pub fn adjusted_curve_full(rollouts: &[RoundSeries]) -> Result<ResourceCurve, AnalyticsError> {
    let first = rollouts.iter().filter(|r| !r.values.is_empty()).map(|r| r.start_round).min();
    let last = rollouts.iter().filter_map(RoundSeries::last_round).max();
    match (first, last) {
        (Some(a), Some(b)) => adjusted_curve(rollouts, a..=b),
        _ if rollouts.is_empty() => Err(AnalyticsError::NoRollouts),
        _ => Err(AnalyticsError::EmptyRange),
    }
}

/// Centered moving average, truncated at the edges.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>, AnalyticsError> {
    if window == 0 || window % 2 == 0 {
        return Err(AnalyticsError::InvalidWindow(window));
    }
    let half = window / 2;
    Ok((0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect())
}

pub fn smooth(curve: &ResourceCurve, window: usize) -> Result<ResourceCurve, AnalyticsError> {
    Ok(ResourceCurve {
        values: moving_average(&curve.values, window)?,
        ..curve.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanDistance {
    pub overall: f64,
    pub late: f64,
    pub late_reach: f64,
}

fn shared_rounds(a: &ResourceCurve, b: &ResourceCurve) -> Option<RangeInclusive<u32>> {
    let lo = *a.rounds().start().max(b.rounds().start());
    let hi = *a.rounds().end().min(b.rounds().end());
    (lo <= hi).then_some(lo..=hi)
}

fn mean_abs_diff(a: &ResourceCurve, b: &ResourceCurve, rounds: RangeInclusive<u32>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in rounds {
        let (x, _) = a.at(r).expect("round in shared range");
        let (y, _) = b.at(r).expect("round in shared range");
        total += libm::fabs(x - y);
        count += 1;
    }
    total / count as f64
}

/// Mean absolute gap to the human curve overall and over `late`, plus the
/// mean reach of `curve` over `late`. Always computed on unsmoothed curves.
pub fn human_distance(
    curve: &ResourceCurve,
    human: &ResourceCurve,
    late: RangeInclusive<u32>,
) -> Result<HumanDistance, AnalyticsError> {
    let shared = shared_rounds(curve, human).ok_or(AnalyticsError::RangeMismatch)?;
    if late.is_empty() || late.start() < shared.start() || late.end() > shared.end() {
        return Err(AnalyticsError::RangeMismatch);
    }
    let late_reach = late.clone().map(|r| curve.at(r).expect("late round covered").1).sum::<f64>()
        / (late.end() - late.start() + 1) as f64;
    Ok(HumanDistance {
        overall: mean_abs_diff(curve, human, shared),
        late: mean_abs_diff(curve, human, late),
        late_reach,
    })
}

/// The economy table row for one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomyReport {
    pub entry_mean: f64,
    pub late_entry: f64,
    pub late_reach: f64,
    pub human_distance: f64,
    pub late_human_distance: f64,
}

pub fn economy_report(
    curve: &ResourceCurve,
    human: &ResourceCurve,
    late: RangeInclusive<u32>,
) -> Result<EconomyReport, AnalyticsError> {
    let d = human_distance(curve, human, late.clone())?;
    Ok(EconomyReport {
        entry_mean: curve.window_mean(curve.rounds()).ok_or(AnalyticsError::EmptyRange)?,
        late_entry: curve.window_mean(late).ok_or(AnalyticsError::RangeMismatch)?,
        late_reach: d.late_reach,
        human_distance: d.overall,
        late_human_distance: d.late,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Always-present context.
    Persistent,
    /// Middleware gated only by the environment phase field.
    Phase,
    /// Harness-triggered computation injected before the model call.
    State,
    /// Computation the model chooses to invoke.
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceArm {
    None,
    Notes,
    Trajectories,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditLabel {
    pub edit_id: String,
    pub granularity: Granularity,
    pub arm: EvidenceArm,
}

/// Labels plus the rubric text that was used to assign them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub rubric: String,
    pub labels: Vec<EditLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GranularityCounts {
    pub persistent: usize,
    pub phase: usize,
    pub state: usize,
    pub tool: usize,
}

impl GranularityCounts {
    pub fn total(&self) -> usize {
        self.persistent + self.phase + self.state + self.tool
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompRate {
    pub counts: GranularityCounts,
    pub total: usize,
    pub rate: f64,
}

impl CompRate {
    /// Rate as a percentage rounded to one decimal.
    pub fn percent_1dp(&self) -> f64 {
        libm::round(self.rate * 1000.0) / 10.0
    }
}

/// Share of an arm's edits that are State- or Tool-level.
pub fn comp_rate(labels: &[EditLabel], arm: EvidenceArm) -> Result<CompRate, AnalyticsError> {
    let mut counts = GranularityCounts::default();
    for l in labels.iter().filter(|l| l.arm == arm) {
        match l.granularity {
            Granularity::Persistent => counts.persistent += 1,
            Granularity::Phase => counts.phase += 1,
            Granularity::State => counts.state += 1,
            Granularity::Tool => counts.tool += 1,
        }
    }
    let total = counts.total();
    if total == 0 {
        return Err(AnalyticsError::EmptyArm);
    }
    Ok(CompRate {
        counts,
        total,
        rate: (counts.state + counts.tool) as f64 / total as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookVerdict {
    /// No expected string ever reached a rendered request.
    Inert,
    Active,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookAudit {
    /// Exact-substring occurrences of each expected string across all prompts.
    pub counts: Vec<(String, usize)>,
    pub records: usize,
    pub verdict: HookVerdict,
}

fn occurrences(haystack: &str, needle: &str) -> usize {
    haystack.match_indices(needle).count()
}

pub fn audit_hook_strings(records: &[RequestRecord], expected: &[String]) -> Result<HookAudit, AnalyticsError> {
    if expected.is_empty() {
        return Err(AnalyticsError::AmbiguousAudit);
    }
    let counts: Vec<(String, usize)> = expected
        .iter()
        .map(|s| {
            let n = if s.is_empty() {
                0
            } else {
                records.iter().map(|r| occurrences(&r.prompt_text, s)).sum()
            };
            (s.clone(), n)
        })
        .collect();
    let verdict = if counts.iter().all(|(_, n)| *n == 0) {
        HookVerdict::Inert
    } else {
        HookVerdict::Active
    };
    Ok(HookAudit { counts, records: records.len(), verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn series(id: &str, values: &[f64]) -> RoundSeries {
        RoundSeries {
            episode_id: id.into(),
            start_round: 1,
            values: values.to_vec(),
            death_round: None,
        }
    }

    fn curve(start: u32, values: &[f64]) -> ResourceCurve {
        ResourceCurve {
            start_round: start,
            values: values.to_vec(),
            reach: vec![1.0; values.len()],
            rollouts: 1,
        }
    }

    #[test]
    fn dead_rollouts_count_as_zero() {
        let rs = [series("a", &[5.0, 10.0]), series("b", &[5.0, 20.0]), series("c", &[5.0])];
        let c = adjusted_curve(&rs, 1..=3).unwrap();
        assert_eq!(c.values, vec![5.0, 10.0, 0.0]);
        assert_eq!(c.reach, vec![1.0, 2.0 / 3.0, 0.0]);
        assert_eq!(adjusted_curve(&[], 1..=3), Err(AnalyticsError::NoRollouts));
        let full = adjusted_curve_full(&rs).unwrap();
        assert_eq!(full.rounds(), 1..=2);
    }

    #[test]
    fn death_round_must_follow_the_series() {
        let mut s = series("a", &[1.0, 2.0]);
        s.death_round = Some(3);
        assert!(s.validate().is_ok());
        s.death_round = Some(9);
        assert!(matches!(s.validate(), Err(AnalyticsError::InvalidRollout { .. })));
    }

    #[test]
    fn moving_average_edges() {
        assert_eq!(moving_average(&[0.0, 3.0, 0.0], 3).unwrap(), vec![1.5, 1.0, 1.5]);
        assert_eq!(moving_average(&[2.0; 5], 3).unwrap(), vec![2.0; 5]);
        assert_eq!(moving_average(&[1.0, 7.0], 1).unwrap(), vec![1.0, 7.0]);
        assert_eq!(moving_average(&[1.0], 2), Err(AnalyticsError::InvalidWindow(2)));
        assert_eq!(moving_average(&[], 3).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn distance_to_human_curve() {
        let h = curve(1, &[1.0, 2.0, 3.0, 4.0]);
        let c = curve(1, &[3.0, 4.0, 5.0, 6.0]);
        let d = human_distance(&c, &h, 3..=4).unwrap();
        assert_eq!((d.overall, d.late, d.late_reach), (2.0, 2.0, 1.0));
        assert_eq!(human_distance(&h, &h, 1..=4).unwrap().overall, 0.0);
        assert_eq!(human_distance(&c, &curve(9, &[1.0]), 9..=9), Err(AnalyticsError::RangeMismatch));
        assert_eq!(human_distance(&c, &h, 4..=6), Err(AnalyticsError::RangeMismatch));
    }

    fn labels(arm: EvidenceArm, counts: [usize; 4]) -> Vec<EditLabel> {
        let kinds = [Granularity::Persistent, Granularity::Phase, Granularity::State, Granularity::Tool];
        let mut out = Vec::new();
        for (k, n) in kinds.iter().zip(counts) {
            for i in 0..n {
                out.push(EditLabel { edit_id: format!("{k:?}-{i}"), granularity: *k, arm });
            }
        }
        out
    }

    #[test]
    fn comp_rates() {
        let mut all = labels(EvidenceArm::None, [7, 7, 10, 2]);
        all.extend(labels(EvidenceArm::Notes, [9, 9, 1, 4]));
        let none = comp_rate(&all, EvidenceArm::None).unwrap();
        assert_eq!((none.total, none.percent_1dp()), (26, 46.2));
        assert_eq!(comp_rate(&all, EvidenceArm::Notes).unwrap().percent_1dp(), 21.7);
        assert_eq!(comp_rate(&all, EvidenceArm::Trajectories), Err(AnalyticsError::EmptyArm));
        let pers = comp_rate(&labels(EvidenceArm::None, [4, 0, 0, 0]), EvidenceArm::None).unwrap();
        assert_eq!(pers.rate, 0.0);
    }

    fn record(prompt: &str) -> RequestRecord {
        RequestRecord {
            request_id: "r".into(),
            decision_index: 0,
            prompt_text: prompt.into(),
            response_text: None,
            error: None,
            latency_ms: 0,
        }
    }

    #[test]
    fn hook_audit_counts_substrings() {
        let rs = [record("alpha beta"), record("beta beta")];
        let a = audit_hook_strings(&rs, &[String::from("beta"), String::from("gamma")]).unwrap();
        assert_eq!(a.counts, vec![(String::from("beta"), 3), (String::from("gamma"), 0)]);
        assert_eq!((a.records, a.verdict), (2, HookVerdict::Active));
        let a = audit_hook_strings(&rs, &[String::from("gamma")]).unwrap();
        assert_eq!(a.verdict, HookVerdict::Inert);
        assert_eq!(audit_hook_strings(&rs, &[]), Err(AnalyticsError::AmbiguousAudit));
    }
}
