//! Declarative agent harnesses.
//!
//! A harness is an ordered list of stages wrapped around a frozen model:
//! observation parsing, derived features, symbolic policies that may answer
//! without the model, the model call itself, action parsing and repair, and
//! safety overrides. Descriptors are data, so they can be diffed, archived and
//! audited at the level of what was actually rendered into the model's context.

mod parse;
mod pipeline;
pub mod policy;
pub mod reference;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::BeliefError;

pub use parse::{parse_model_action, ParsedObservation};
pub use pipeline::{decide, Decision, DecisionSlot, DecisionTrace, StageRecord};
pub use policy::{case_b_rank, case_c_guard, GuardOutcome, GuardParams, RankedAction};

/// Parameter names understood by the built-in stages.
pub mod params {
    pub const CALL_THRESHOLD: &str = "call_threshold";
    pub const RAISE_MIN_PROB: &str = "raise_min_prob";
    pub const MARGIN: &str = "margin";
    pub const CONTRIBUTION_GATE: &str = "contribution_gate";
    pub const ALPHA: &str = "alpha";
    pub const BETA: &str = "beta";
}

/// Default parameter values for the built-in stages.
pub fn default_parameters() -> BTreeMap<String, f64> {
    [
        (params::CALL_THRESHOLD, 0.30),
        (params::RAISE_MIN_PROB, 0.50),
        (params::MARGIN, 0.05),
        (params::CONTRIBUTION_GATE, 2.0),
        (params::ALPHA, 1.0),
        (params::BETA, 1.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("descriptor parse error at line {line}, column {column}: {message}")]
    DescriptorParse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("observation is not the agent's turn")]
    NotMyTurn,
    #[error("rendered observation disagrees with its structured fields")]
    ObservationMismatch,
    #[error("no current bid")]
    NoCurrentBid,
    #[error("model output could not be turned into a legal action")]
    UnrecoverableModelOutput {
        response: Option<String>,
        events: Vec<AuditEventKind>,
        model_requests: Vec<String>,
    },
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Harness- and gateway-side events surfaced to the clean-run audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEventKind {
    /// The model call failed and the harness substituted its own action.
    Fallback,
    Error,
    Timeout,
    /// The model proposed an illegal move that was repaired.
    InvalidAction,
    /// The model output had no parsable move and was repaired.
    ParseFallback,
}

impl AuditEventKind {
    /// Infrastructure events disqualify a run; behavioral ones are only counted.
    pub fn breaks_clean_run(self) -> bool {
        matches!(
            self,
            AuditEventKind::Fallback | AuditEventKind::Error | AuditEventKind::Timeout
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            AuditEventKind::Fallback => "fallback",
            AuditEventKind::Error => "error",
            AuditEventKind::Timeout => "timeout",
            AuditEventKind::InvalidAction => "invalid_action",
            AuditEventKind::ParseFallback => "parse_fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "p_true")]
    TruthProbability,
    #[serde(rename = "own_matches")]
    OwnMatches,
    #[serde(rename = "legal_raises")]
    LegalRaises,
    #[serde(rename = "opp_prior")]
    OpponentPrior,
    #[serde(rename = "ev_table")]
    EvTable,
}

impl Feature {
    pub fn placeholder(self) -> &'static str {
        match self {
            Feature::TruthProbability => "p_true",
            Feature::OwnMatches => "own_matches",
            Feature::LegalRaises => "legal_raises",
            Feature::OpponentPrior => "opp_prior",
            Feature::EvTable => "ev_table",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Open from own dice, call below a truth threshold, else the smallest
    /// raise that clears a probability bar.
    Threshold,
    /// Rank call and every legal raise by expected value under an opponent face prior.
    EvRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardKind {
    /// Call instead of raising into a deep same-face escalation.
    PileOn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config")]
pub enum StageSpec {
    ParseObservation,
    ComputeFeatures { features: Vec<Feature> },
    SymbolicPolicy { policy: PolicyKind },
    ModelCall { model: Option<String> },
    ParseModelAction,
    RepairAction,
    SafetyOverride { guard: GuardKind },
}

impl StageSpec {
    pub fn name(&self) -> &'static str {
        match self {
            StageSpec::ParseObservation => "ParseObservation",
            StageSpec::ComputeFeatures { .. } => "ComputeFeatures",
            StageSpec::SymbolicPolicy { .. } => "SymbolicPolicy",
            StageSpec::ModelCall { .. } => "ModelCall",
            StageSpec::ParseModelAction => "ParseModelAction",
            StageSpec::RepairAction => "RepairAction",
            StageSpec::SafetyOverride { .. } => "SafetyOverride",
        }
    }

    fn emits_action(&self) -> bool {
        matches!(
            self,
            StageSpec::SymbolicPolicy { .. }
                | StageSpec::ParseModelAction
                | StageSpec::RepairAction
                | StageSpec::SafetyOverride { .. }
        )
    }

    fn produces(&self) -> Vec<&'static str> {
        match self {
            StageSpec::ParseObservation => parse::PLACEHOLDERS.to_vec(),
            StageSpec::ComputeFeatures { features } => {
                features.iter().map(|f| f.placeholder()).collect()
            }
            _ => Vec::new(),
        }
    }

    fn required_parameters(&self) -> &'static [&'static str] {
        match self {
            StageSpec::SymbolicPolicy { policy: PolicyKind::Threshold } => {
                &[params::CALL_THRESHOLD, params::RAISE_MIN_PROB]
            }
            StageSpec::SymbolicPolicy { policy: PolicyKind::EvRank } => &[params::ALPHA],
            StageSpec::ComputeFeatures { features }
                if features
                    .iter()
                    .any(|f| matches!(f, Feature::OpponentPrior | Feature::EvTable)) =>
            {
                &[params::ALPHA]
            }
            StageSpec::RepairAction => &[params::RAISE_MIN_PROB],
            StageSpec::SafetyOverride { guard: GuardKind::PileOn } => {
                &[params::MARGIN, params::CONTRIBUTION_GATE, params::BETA]
            }
            _ => &[],
        }
    }
}

/// The evolvable object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessDescriptor {
    pub id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub prompt_template: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// `{name}` placeholders in a template, in order of appearance.
pub fn template_placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if is_placeholder_name(&after[..end]) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_placeholder_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Substitute known placeholders; unknown ones are left verbatim.
pub fn render_template(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if vars.contains_key(&after[..end]) => {
                out.push_str(&vars[&after[..end]]);
                rest = &after[end + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

impl HarnessDescriptor {
    pub fn parameter(&self, name: &str) -> f64 {
        // Presence is checked by `validate`.
        self.parameters.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn uses_model(&self) -> bool {
        self.stages.iter().any(|s| matches!(s, StageSpec::ModelCall { .. }))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: String| Err(HarnessError::InvalidDescriptor(msg));
        if self.id.trim().is_empty() {
            return invalid("empty id".into());
        }
        let Some(last) = self.stages.last() else {
            return invalid("stage list is empty".into());
        };
        if !last.emits_action() {
            return invalid(format!("final stage {} does not emit an action", last.name()));
        }
        if !self.stages.iter().any(|s| {
            matches!(s, StageSpec::SymbolicPolicy { .. } | StageSpec::ParseModelAction)
        }) {
            return invalid("no stage produces an action".into());
        }
        let mut pending_model = false;
        for stage in &self.stages {
            match stage {
                StageSpec::ModelCall { .. } => pending_model = true,
                StageSpec::ParseModelAction => {
                    if !pending_model {
                        return invalid("ParseModelAction without a preceding ModelCall".into());
                    }
                    pending_model = false;
                }
                _ => {}
            }
        }
        if pending_model {
            return invalid("ModelCall is not followed by ParseModelAction".into());
        }
        if self.uses_model() && self.prompt_template.trim().is_empty() {
            return invalid("ModelCall needs a prompt template".into());
        }
        let produced: BTreeSet<&str> = self.stages.iter().flat_map(|s| s.produces()).collect();
        for ph in template_placeholders(&self.prompt_template) {
            if !produced.contains(ph) {
                return invalid(format!("placeholder {{{ph}}} is not produced by any stage"));
            }
        }
        for stage in &self.stages {
            for &name in stage.required_parameters() {
                match self.parameters.get(name) {
                    None => {
                        return invalid(format!("{} needs parameter {name}", stage.name()));
                    }
                    Some(v) if !v.is_finite() => {
                        return invalid(format!("parameter {name} is not finite"));
                    }
                    _ => {}
                }
            }
        }
        if let Some((name, _)) = self.parameters.iter().find(|(_, v)| !v.is_finite()) {
            return invalid(format!("parameter {name} is not finite"));
        }
        Ok(())
    }

    /// Canonical text form: pretty JSON with every object's keys sorted.
    pub fn serialize(&self) -> String {
        let value = serde_json::to_value(self).expect("descriptor is always representable");
        let mut text = serde_json::to_string_pretty(&value).expect("JSON value serializes");
        text.push('\n');
        text
    }

    /// Parse and validate descriptor text.
    pub fn deserialize(text: &str) -> Result<HarnessDescriptor, HarnessError> {
        let d: HarnessDescriptor =
            serde_json::from_str(text).map_err(|e| HarnessError::DescriptorParse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        d.validate()?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn placeholders_are_extracted() {
        assert_eq!(
            template_placeholders("a {observation} b {p_true}{x-y} {\"json\": 1} {}"),
            vec!["observation", "p_true"]
        );
    }

    #[test]
    fn template_rendering_leaves_unknown_braces() {
        let mut vars = BTreeMap::new();
        vars.insert("p_true", String::from("0.5"));
        assert_eq!(render_template("p={p_true} {other} {", &vars), "p=0.5 {other} {");
    }

    #[test]
    fn bundled_descriptors_round_trip() {
        for d in reference::all() {
            d.validate().unwrap();
            let text = d.serialize();
            assert_eq!(HarnessDescriptor::deserialize(&text).unwrap(), d);
            assert_eq!(text, HarnessDescriptor::deserialize(&text).unwrap().serialize());
        }
    }

    #[test]
    fn canonical_form_sorts_keys() {
        let text = reference::case_a().serialize();
        let id = text.find("\"id\"").unwrap();
        let meta = text.find("\"metadata\"").unwrap();
        let stages = text.find("\"stages\"").unwrap();
        assert!(id < meta && meta < stages);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = HarnessDescriptor::deserialize("{\n  \"id\": \"x\",\n  \"stages\": [oops]\n}").unwrap_err();
        match err {
            HarnessError::DescriptorParse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_rules() {
        let mut d = reference::base();
        d.stages.clear();
        assert!(d.validate().is_err());

        let mut d = reference::base();
        d.stages.retain(|s| !matches!(s, StageSpec::ParseModelAction));
        assert!(d.validate().is_err());

        let mut d = reference::base();
        d.prompt_template.push_str("{ev_table}");
        assert!(d.validate().is_err());

        let mut d = reference::case_a();
        d.parameters.remove(params::CALL_THRESHOLD);
        assert!(d.validate().is_err());

        let mut d = reference::case_c();
        d.parameters.insert(params::MARGIN.into(), f64::INFINITY);
        assert!(d.validate().is_err());

        let mut d = reference::base();
        d.stages.push(StageSpec::ComputeFeatures { features: vec![Feature::TruthProbability] });
        assert!(d.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut text = reference::base().serialize();
        text = text.replacen("\"id\"", "\"colour\": 1,\n  \"id\"", 1);
        assert!(matches!(
            HarnessDescriptor::deserialize(&text),
            Err(HarnessError::DescriptorParse { .. })
        ));
    }
}
