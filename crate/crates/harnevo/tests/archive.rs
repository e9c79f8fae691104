use std::fs;

use harnevo::archive::{Archive, ArchiveError, ArchiveFilter, CandidateArtifacts};
use harnevo::runner::{run_eval, EvalArtifacts, REQUESTS_FILE, SUMMARY_FILE};
use harnevo_core::eval::{SeedRegistry, SeedSet};
use harnevo_core::gateway::{ScriptedGateway, ScriptedModelSpec};
use harnevo_core::harness::{reference, HarnessDescriptor};
use harnevo_core::play::AgentSpec;
use harnevo_core::trajectory::{Actor, Trajectory};
use harnevo_core::{play_match, Variant};

fn eval(d: &HarnessDescriptor, set: &SeedSet) -> EvalArtifacts {
    let reg = SeedRegistry::standard(3).unwrap();
    let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
    run_eval(&AgentSpec::Harness(d.clone()), &AgentSpec::Naive, set, &reg, &mut g).unwrap()
}

fn child(id: &str, parent: &str) -> HarnessDescriptor {
    let mut d = reference::case_a();
    d.id = id.into();
    d.parent_id = Some(parent.into());
    d
}

fn append(a: &Archive, iteration: u32, d: HarnessDescriptor) -> Result<String, ArchiveError> {
    let set = SeedSet::development(Variant::Small3, 3).unwrap();
    let eval = eval(&d, &set);
    a.append_eval_dir(&CandidateArtifacts { iteration, descriptor: d, eval })
}

#[test]
fn appends_are_immutable_and_indexed_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let a = Archive::open(dir.path()).unwrap();
    assert!(a.is_empty().unwrap());
    append(&a, 0, reference::base()).unwrap();
    append(&a, 1, child("c1", "base")).unwrap();
    append(&a, 2, child("c2", "c1")).unwrap();
    let ids: Vec<_> = a.entries().unwrap().into_iter().map(|e| (e.sequence, e.candidate_id)).collect();
    assert_eq!(ids, vec![(0, "base".into()), (1, "c1".into()), (2, "c2".into())]);

    let before = a.checksums().unwrap();
    assert!(matches!(append(&a, 3, child("c1", "base")), Err(ArchiveError::DuplicateCandidate(_))));
    assert!(matches!(append(&a, 3, child("c9", "ghost")), Err(ArchiveError::UnknownParent { .. })));
    assert_eq!(a.checksums().unwrap(), before);

    let d = a.get("c1").unwrap();
    assert!(d.files.iter().any(|f| f == SUMMARY_FILE));
    assert!(d.files.iter().any(|f| f == REQUESTS_FILE));
    let summary_path = a.candidate_dir("c1").unwrap().join(SUMMARY_FILE);
    assert!(fs::metadata(&summary_path).unwrap().permissions().readonly());
    assert_eq!(a.descriptor("c2").unwrap(), child("c2", "c1"));

    let lineage: Vec<_> = a.lineage("c2").unwrap().into_iter().map(|e| e.candidate_id).collect();
    assert_eq!(lineage, vec!["c2", "c1", "base"]);
    let q = a.query(&ArchiveFilter { iteration: Some(1), ..Default::default() }).unwrap();
    assert_eq!(q.len(), 1);

    let reopened = Archive::open(dir.path()).unwrap();
    assert_eq!(reopened.entries().unwrap(), a.entries().unwrap());
}

#[test]
fn held_out_results_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let a = Archive::open(dir.path()).unwrap();
    let held = SeedSet::held_out(Variant::Small3);
    let d = reference::base();
    let reg = SeedRegistry::standard(3).unwrap();
    let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
    let eval = run_eval(&AgentSpec::Harness(d.clone()), &AgentSpec::Naive, &held, &reg, &mut g).unwrap();
    let r = a.append_eval_dir(&CandidateArtifacts { iteration: 0, descriptor: d, eval });
    assert!(matches!(r, Err(ArchiveError::HeldOutArtifact(_))));
    assert!(a.is_empty().unwrap());
}

#[test]
fn file_reads_stay_inside_the_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let a = Archive::open(dir.path()).unwrap();
    append(&a, 0, reference::base()).unwrap();
    assert!(a.read_file("base", SUMMARY_FILE).unwrap().starts_with("{\"record\":\"summary\""));
    assert!(matches!(a.read_file("base", "../index.jsonl"), Err(ArchiveError::BadPath(_))));
    assert!(matches!(a.read_file("base", "/etc/passwd"), Err(ArchiveError::BadPath(_))));
    assert!(matches!(a.get("nope"), Err(ArchiveError::UnknownCandidate(_))));
}

#[test]
fn demonstrations_need_a_finished_human_game() {
    let dir = tempfile::tempdir().unwrap();
    let a = Archive::open(dir.path()).unwrap();
    let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
    let m = play_match(Variant::Small3, 7, [&AgentSpec::Naive, &AgentSpec::Naive], &mut g, "r");
    let agent = m.trajectories[0].clone();
    assert!(matches!(a.store_demonstration(&agent), Err(ArchiveError::NotADemonstration)));

    let mut human = agent.clone();
    human.actor = Actor::Human;
    human.policy_id = None;
    let mut open = human.clone();
    open.terminal_reward = None;
    assert!(matches!(a.store_demonstration(&open), Err(ArchiveError::IncompleteDemo)));

    assert_eq!(a.store_demonstration(&human).unwrap(), "7-0");
    assert_eq!(a.store_demonstration(&human).unwrap(), "7-1");
    assert_eq!(a.demo_ids().unwrap(), vec!["7-0", "7-1"]);
    let back: Trajectory = a.demonstration("7-1").unwrap();
    assert_eq!(back, human);
    let set = a.demonstrations().unwrap();
    assert_eq!(set.entries.len(), 2);
    assert_eq!(set.entries[0].reward, human.terminal_reward.unwrap());
    assert!(matches!(a.demonstration("7-9"), Err(ArchiveError::UnknownDemo(_))));
}
