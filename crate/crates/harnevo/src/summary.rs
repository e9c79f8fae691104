//! Evaluation summary files: a header record followed by one record per
//! logical seed, in seed order.

use std::path::Path;

use harnevo_core::eval::{EvalSummary, PairedResult, SeedRole};
use harnevo_core::harness::AuditEventKind;
use harnevo_core::Variant;
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum SummaryRecord {
    Summary {
        seed_set: String,
        role: SeedRole,
        variant: Variant,
        target: String,
        opponent: String,
        n: usize,
        mean_reward: f64,
        standard_error: f64,
        clean: bool,
    },
    Seed {
        seed: u64,
        leg_rewards: [f64; 2],
        paired_reward: f64,
        flags: [Vec<AuditEventKind>; 2],
        #[serde(default, skip_serializing_if = "no_failures")]
        failures: [Option<String>; 2],
    },
}

fn no_failures(f: &[Option<String>; 2]) -> bool {
    f.iter().all(Option::is_none)
}

pub fn render(summary: &EvalSummary) -> String {
    let mut out = jsonl::to_line(&SummaryRecord::Summary {
        seed_set: summary.seed_set.clone(),
        role: summary.role,
        variant: summary.variant,
        target: summary.target.clone(),
        opponent: summary.opponent.clone(),
        n: summary.n,
        mean_reward: summary.mean_reward,
        standard_error: summary.standard_error,
        clean: summary.clean,
    });
    for r in &summary.results {
        out.push_str(&jsonl::to_line(&SummaryRecord::Seed {
            seed: r.logical_seed,
            leg_rewards: r.leg_rewards,
            paired_reward: r.paired_reward,
            flags: r.audit_flags.clone(),
            failures: r.failures.clone(),
        }));
    }
    out
}

pub fn parse(text: &str, path: &Path) -> Result<EvalSummary, JsonlError> {
    let records: Vec<SummaryRecord> = jsonl::parse_lines(text, path)?;
    let bad = |line: usize, message: &str| JsonlError::Record {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    };
    let mut it = records.into_iter();
    let Some(SummaryRecord::Summary { seed_set, role, variant, target, opponent, n, mean_reward, standard_error, clean }) =
        it.next()
    else {
        return Err(bad(1, "first record must be the summary header"));
    };
    let mut results = Vec::new();
    for (i, r) in it.enumerate() {
        match r {
            SummaryRecord::Seed { seed, leg_rewards, paired_reward, flags, failures } => results.push(PairedResult {
                logical_seed: seed,
                leg_rewards,
                paired_reward,
                audit_flags: flags,
                failures,
            }),
            SummaryRecord::Summary { .. } => return Err(bad(i + 2, "second summary header")),
        }
    }
    if results.len() != n {
        return Err(bad(1, "header count disagrees with seed records"));
    }
    Ok(EvalSummary {
        seed_set,
        role,
        variant,
        target,
        opponent,
        n,
        mean_reward,
        standard_error,
        clean,
        results,
    })
}

pub fn read(path: &Path) -> Result<EvalSummary, JsonlError> {
    let text = std::fs::read_to_string(path).map_err(|e| jsonl::io_error(path, e))?;
    parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use harnevo_core::eval::SeedSet;

    #[test]
    fn summary_round_trips() {
        let set = SeedSet::development(Variant::Small3, 2).unwrap();
        let results = vec![
            PairedResult {
                logical_seed: 100_000,
                leg_rewards: [1.0, 0.5],
                paired_reward: 0.75,
                audit_flags: [vec![AuditEventKind::InvalidAction], vec![]],
                failures: [None, None],
            },
            PairedResult {
                logical_seed: 100_001,
                leg_rewards: [0.0, 0.0],
                paired_reward: 0.0,
                audit_flags: [vec![], vec![AuditEventKind::Timeout, AuditEventKind::Fallback]],
                failures: [None, Some("target: gave up".into())],
            },
        ];
        let s = EvalSummary::from_results(&set, "case_a", "naive", results);
        let text = render(&s);
        assert!(text.starts_with("{\"record\":\"summary\""));
        assert_eq!(text.lines().count(), 3);
        let back = parse(&text, Path::new("summary")).unwrap();
        assert_eq!(back, s);
        assert_eq!(render(&back), text);

        let short = text.lines().take(2).collect::<Vec<_>>().join("\n");
        assert!(matches!(parse(&short, Path::new("s")), Err(JsonlError::Record { line: 1, .. })));
    }
}
