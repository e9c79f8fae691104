//! Bundled reference harnesses.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{default_parameters, Feature, GuardKind, HarnessDescriptor, PolicyKind, StageSpec};

const BASE_PROMPT: &str = "You are playing two-player Liar's Dice ({variant}).\n\
{observation}\n\n\
Legal actions: {legal_actions}\n\
Reply with exactly one action: \"[Bid] <quantity>x<face>\" or \"[Call]\".";

const CASE_A_PROMPT: &str = "You are playing two-player Liar's Dice ({variant}).\n\
{observation}\n\n\
Probability the current bid is true: {p_true}\n\
Legal actions: {legal_actions}\n\
Reply with exactly one action: \"[Bid] <quantity>x<face>\" or \"[Call]\".";

const CASE_B_PROMPT: &str = "You are playing two-player Liar's Dice ({variant}).\n\
{observation}\n\n\
Opponent face prior: {opp_prior}\n\
Current bid true with probability {p_true}.\n\
Best actions by expected value: {ev_table}\n\
Reply with exactly one action: \"[Bid] <quantity>x<face>\" or \"[Call]\".";

const CASE_C_PROMPT: &str = "You are playing two-player Liar's Dice ({variant}).\n\
{observation}\n\n\
Your dice supporting the current bid: {own_matches}\n\
Current bid true with probability {p_true}.\n\
Raises with truth probabilities: {legal_raises}\n\
Reply with exactly one action: \"[Bid] <quantity>x<face>\" or \"[Call]\".";

fn metadata(notes: &str) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("origin".into(), "reference".into());
    m.insert("notes".into(), notes.into());
    m
}

/// Plain model harness: show the observation, parse the reply, repair it.
pub fn base() -> HarnessDescriptor {
    HarnessDescriptor {
        id: "base".into(),
        parent_id: None,
        stages: vec![
            StageSpec::ParseObservation,
            StageSpec::ModelCall { model: None },
            StageSpec::ParseModelAction,
            StageSpec::RepairAction,
        ],
        parameters: default_parameters(),
        prompt_template: BASE_PROMPT.into(),
        metadata: metadata("observation in, one model move out, illegal moves repaired"),
    }
}

/// Near-symbolic threshold control; the model only sees turns the rule leaves open.
pub fn case_a() -> HarnessDescriptor {
    HarnessDescriptor {
        id: "case_a".into(),
        parent_id: Some("base".into()),
        stages: vec![
            StageSpec::ParseObservation,
            StageSpec::ComputeFeatures { features: vec![Feature::TruthProbability] },
            StageSpec::SymbolicPolicy { policy: PolicyKind::Threshold },
            StageSpec::ModelCall { model: None },
            StageSpec::ParseModelAction,
            StageSpec::RepairAction,
        ],
        parameters: default_parameters(),
        prompt_template: CASE_A_PROMPT.into(),
        metadata: metadata("call below call_threshold, else smallest raise with p >= raise_min_prob"),
    }
}

/// Opponent-aware expected-value ranking.
pub fn case_b() -> HarnessDescriptor {
    HarnessDescriptor {
        id: "case_b".into(),
        parent_id: Some("base".into()),
        stages: vec![
            StageSpec::ParseObservation,
            StageSpec::ComputeFeatures {
                features: vec![Feature::TruthProbability, Feature::OpponentPrior, Feature::EvTable],
            },
            StageSpec::SymbolicPolicy { policy: PolicyKind::EvRank },
            StageSpec::ModelCall { model: None },
            StageSpec::ParseModelAction,
            StageSpec::RepairAction,
        ],
        parameters: default_parameters(),
        prompt_template: CASE_B_PROMPT.into(),
        metadata: metadata("rank call and raises by EV under a pseudo-count opponent face prior"),
    }
}

/// Model-led play with a pile-on guard for deep same-face escalation.
pub fn case_c() -> HarnessDescriptor {
    HarnessDescriptor {
        id: "case_c".into(),
        parent_id: Some("base".into()),
        stages: vec![
            StageSpec::ParseObservation,
            StageSpec::ComputeFeatures {
                features: vec![Feature::TruthProbability, Feature::OwnMatches, Feature::LegalRaises],
            },
            StageSpec::ModelCall { model: None },
            StageSpec::ParseModelAction,
            StageSpec::RepairAction,
            StageSpec::SafetyOverride { guard: GuardKind::PileOn },
        ],
        parameters: default_parameters(),
        prompt_template: CASE_C_PROMPT.into(),
        metadata: metadata("override raises with a call when own contribution clears the gate and calling wins by margin"),
    }
}

pub fn all() -> Vec<HarnessDescriptor> {
    vec![base(), case_a(), case_b(), case_c()]
}

/// Look up a bundled harness by id.
pub fn by_name(name: &str) -> Option<HarnessDescriptor> {
    all().into_iter().find(|d| d.id == name)
}
