//! File formats and tabular output for the post-hoc analyses.
//!
//! External economy logs are line-delimited records:
//!
//! ```text
//! {"episode_id":"run-7","start_round":1,"money":[4,9,12],"death_round":4}
//! ```
//!
//! `start_round` defaults to 1 and `death_round` may be omitted for
//! rollouts that never died. Archive trajectory files are accepted in the
//! same places; their per-step resource field supplies the values.

use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use harnevo_core::analytics::{
    adjusted_curve, audit_hook_strings, comp_rate, economy_report, smooth, AnalyticsError, CompRate,
    EconomyReport, EvidenceArm, HookAudit, LabelSet, ResourceCurve, RoundSeries,
};
use harnevo_core::gateway::RequestRecord;
use harnevo_core::trajectory::{Trajectory, TrajectoryError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, io_error, JsonlError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Trajectory {
        path: PathBuf,
        #[source]
        source: TrajectoryError,
    },
    #[error("{path}: {message}")]
    Labels { path: PathBuf, message: String },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{0}: no rollouts found")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyRecord {
    pub episode_id: String,
    #[serde(default = "one")]
    pub start_round: u32,
    pub money: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_round: Option<u32>,
}

fn one() -> u32 {
    1
}

impl From<EconomyRecord> for RoundSeries {
    fn from(r: EconomyRecord) -> RoundSeries {
        RoundSeries {
            episode_id: r.episode_id,
            start_round: r.start_round,
            values: r.money,
            death_round: r.death_round,
        }
    }
}

fn is_trajectory(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("record").is_some())
}

fn load_file(path: &Path, out: &mut Vec<RoundSeries>) -> Result<(), AnalysisError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    if is_trajectory(&text) {
        let t = Trajectory::from_jsonl(&text).map_err(|source| AnalysisError::Trajectory { path: path.into(), source })?;
        out.push(RoundSeries::from_trajectory(&t));
    } else {
        let records: Vec<EconomyRecord> = jsonl::parse_lines(&text, path)?;
        out.extend(records.into_iter().map(RoundSeries::from));
    }
    Ok(())
}

/// Rollouts from an economy log, a trajectory file, or a directory of
/// either (read in file-name order).
pub fn load_rollouts(path: &Path) -> Result<Vec<RoundSeries>, AnalysisError> {
    let mut out = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| io_error(path, e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for f in files {
            load_file(&f, &mut out)?;
        }
    } else {
        load_file(path, &mut out)?;
    }
    if out.is_empty() {
        return Err(AnalysisError::Empty(path.into()));
    }
    Ok(out)
}

/// Union of the rounds reached by two rollout sets.
pub fn shared_range(a: &[RoundSeries], b: &[RoundSeries]) -> Option<RangeInclusive<u32>> {
    let all = a.iter().chain(b).filter(|r| !r.values.is_empty());
    let lo = all.clone().map(|r| r.start_round).min()?;
    let hi = all.filter_map(RoundSeries::last_round).max()?;
    Some(lo..=hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEconomy {
    pub method: String,
    pub curve: ResourceCurve,
    pub smoothed: ResourceCurve,
    pub report: EconomyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyAnalysis {
    pub late_window: [u32; 2],
    pub smoothing_window: usize,
    pub human: ResourceCurve,
    pub methods: Vec<MethodEconomy>,
}

pub fn analyze_economy(
    methods: &[(String, Vec<RoundSeries>)],
    human: &[RoundSeries],
    late: RangeInclusive<u32>,
    window: usize,
) -> Result<EconomyAnalysis, AnalysisError> {
    let mut range: Option<RangeInclusive<u32>> = None;
    for (_, m) in methods {
        let r = shared_range(m, human).ok_or(AnalyticsError::EmptyRange)?;
        range = Some(match range {
            None => r,
            Some(p) => *p.start().min(r.start())..=*p.end().max(r.end()),
        });
    }
    let range = range.or_else(|| shared_range(human, &[])).ok_or(AnalyticsError::NoRollouts)?;
    let human_curve = adjusted_curve(human, range.clone())?;
    let mut out = Vec::new();
    for (name, rollouts) in methods {
        let curve = adjusted_curve(rollouts, range.clone())?;
        let report = economy_report(&curve, &human_curve, late.clone())?;
        out.push(MethodEconomy { method: name.clone(), smoothed: smooth(&curve, window)?, curve, report });
    }
    Ok(EconomyAnalysis {
        late_window: [*late.start(), *late.end()],
        smoothing_window: window,
        human: human_curve,
        methods: out,
    })
}

/// The per-method row table.
pub fn economy_table(a: &EconomyAnalysis) -> String {
    let mut s = String::from("method\tentry_mean\tlate_entry\tlate_reach\thuman_dist\tlate_human_dist\n");
    for m in &a.methods {
        let r = &m.report;
        let _ = writeln!(
            s,
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            m.method, r.entry_mean, r.late_entry, r.late_reach, r.human_distance, r.late_human_distance
        );
    }
    s
}

/// Plot-ready long-form curve table, one row per method and round.
pub fn curve_table(a: &EconomyAnalysis) -> String {
    let mut s = String::from("method\tround\tadjusted\tsmoothed\treach\n");
    let mut rows = |name: &str, c: &ResourceCurve, sm: &ResourceCurve| {
        for (i, r) in c.rounds().enumerate() {
            let _ = writeln!(s, "{name}\t{r}\t{:.4}\t{:.4}\t{:.4}", c.values[i], sm.values[i], c.reach[i]);
        }
    };
    let human_smoothed = smooth(&a.human, a.smoothing_window).expect("window validated by analyze_economy");
    rows("human", &a.human, &human_smoothed);
    for m in &a.methods {
        rows(&m.method, &m.curve, &m.smoothed);
    }
    s
}

pub fn load_labels(path: &Path) -> Result<LabelSet, AnalysisError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| AnalysisError::Labels { path: path.into(), message: e.to_string() })
}

/// Rates for every arm that has at least one label.
pub fn complexity(labels: &LabelSet) -> Vec<(EvidenceArm, CompRate)> {
    [EvidenceArm::None, EvidenceArm::Notes, EvidenceArm::Trajectories]
        .into_iter()
        .filter_map(|arm| comp_rate(&labels.labels, arm).ok().map(|r| (arm, r)))
        .collect()
}

pub fn complexity_table(rows: &[(EvidenceArm, CompRate)]) -> String {
    let mut s = String::from("arm\tpersistent\tphase\tstate\ttool\ttotal\tcomp_rate\n");
    for (arm, r) in rows {
        let c = r.counts;
        let label = serde_json::to_value(arm).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let _ = writeln!(
            s,
            "{label}\t{}\t{}\t{}\t{}\t{}\t{}/{} = {:.1}%",
            c.persistent, c.phase, c.state, c.tool, r.total, c.state + c.tool, r.total, r.percent_1dp()
        );
    }
    s
}

/// One expected string per nonblank line.
pub fn load_strings(path: &Path) -> Result<Vec<String>, AnalysisError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(text.lines().map(str::trim_end).filter(|l| !l.trim().is_empty()).map(str::to_owned).collect())
}

pub fn hook_audit(requests: &Path, strings: &[String]) -> Result<HookAudit, AnalysisError> {
    let records: Vec<RequestRecord> = jsonl::read(requests)?;
    Ok(audit_hook_strings(&records, strings)?)
}

pub fn audit_table(a: &HookAudit) -> String {
    let mut s = String::from("string\tcount\n");
    for (k, n) in &a.counts {
        let _ = writeln!(s, "{k}\t{n}");
    }
    let verdict = match a.verdict {
        harnevo_core::analytics::HookVerdict::Inert => "inert",
        harnevo_core::analytics::HookVerdict::Active => "active",
    };
    let _ = writeln!(s, "records\t{}\nverdict\t{verdict}", a.records);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn economy_log_and_trajectory_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("a.jsonl");
        fs::write(&log, "{\"episode_id\":\"x\",\"money\":[1,2],\"death_round\":3}\n\n{\"episode_id\":\"y\",\"money\":[5]}\n").unwrap();
        let r = load_rollouts(&log).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].start_round, 1);
        assert_eq!(r[0].death_round, Some(3));
        assert_eq!(load_rollouts(dir.path()).unwrap(), r);
        fs::write(&log, "{\"episode_id\":\"x\"}\n").unwrap();
        assert!(matches!(load_rollouts(&log), Err(AnalysisError::Jsonl(JsonlError::Record { line: 1, .. }))));
    }

    #[test]
    fn identical_method_and_human_have_zero_distance() {
        let h: Vec<RoundSeries> = (0..3)
            .map(|i| RoundSeries { episode_id: i.to_string(), start_round: 1, values: vec![3.0; 25], death_round: None })
            .collect();
        let a = analyze_economy(&[("same".into(), h.clone())], &h, 19..=23, 3).unwrap();
        let r = a.methods[0].report;
        assert_eq!((r.human_distance, r.late_human_distance, r.late_reach), (0.0, 0.0, 1.0));
        assert!(economy_table(&a).contains("same\t3.00\t3.00\t1.00\t0.00\t0.00"));
        assert_eq!(curve_table(&a).lines().count(), 1 + 2 * 25);
    }
}
