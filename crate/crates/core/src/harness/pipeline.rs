use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::parse::{parse_model_action, ParsedObservation};
use super::policy::{self, GuardParams};
use super::{params, render_template, AuditEventKind, Feature, GuardKind, HarnessDescriptor, HarnessError, PolicyKind, StageSpec};
use crate::belief::{opponent_face_prior, FacePrior};
use crate::digest::digest;
use crate::env::{count_matches, Action, Bid, Observation};
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};

/// Where a decision sits, used to mint request ids.
#[derive(Debug, Clone, Copy)]
pub struct DecisionSlot<'a> {
    pub rollout_id: &'a str,
    pub decision_index: u32,
    pub model_name: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs_digest: String,
    pub outputs_digest: String,
    pub fired: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub decision_index: u32,
    pub stages: Vec<StageRecord>,
    pub chosen_action: Action,
    pub model_requests: Vec<String>,
    pub events: Vec<AuditEventKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub action: Action,
    pub trace: DecisionTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelState {
    NotCalled,
    Answered,
    Failed,
}

struct Working<'a> {
    obs: &'a Observation,
    vars: BTreeMap<&'static str, String>,
    action: Option<Action>,
    model: ModelState,
    model_text: Option<String>,
    parse_failed: bool,
    requests: Vec<String>,
    events: Vec<AuditEventKind>,
}

impl Working<'_> {
    fn action_text(&self) -> String {
        self.action.map_or_else(|| "-".into(), |a| a.to_string())
    }
}

fn fmt_prob(p: f64) -> String {
    format!("{p:.4}")
}

fn observation_vars(obs: &Observation, vars: &mut BTreeMap<&'static str, String>) {
    let dice: Vec<String> = obs.own_dice.iter().map(|d| d.to_string()).collect();
    let legal: Vec<String> = obs.legal_actions().iter().map(|a| a.to_string()).collect();
    vars.insert("observation", obs.rendered_text.clone());
    vars.insert("variant", obs.variant.name().into());
    vars.insert("own_dice", dice.join(" "));
    vars.insert(
        "current_bid",
        obs.current_bid().map_or_else(|| "none".into(), |b| b.to_string()),
    );
    vars.insert(
        "dice_remaining",
        format!("you={} opp={}", obs.dice_remaining[obs.seat], obs.opponent_dice_count()),
    );
    vars.insert("wild", if obs.wild_active { "on" } else { "off" }.into());
    vars.insert("legal_actions", legal.join(", "));
}

fn opponent_prior(obs: &Observation, alpha: f64) -> Result<FacePrior, HarnessError> {
    let bids: Vec<Bid> = obs.opponent_bids().collect();
    Ok(opponent_face_prior(&bids, alpha)?)
}

fn feature_value(feature: Feature, obs: &Observation, d: &HarnessDescriptor) -> Result<String, HarnessError> {
    let current = obs.current_bid();
    Ok(match feature {
        Feature::TruthProbability => current.map_or_else(
            || "n/a".into(),
            |b| fmt_prob(policy::truth_probability(obs, b, None)),
        ),
        Feature::OwnMatches => current.map_or_else(
            || "n/a".into(),
            |b| count_matches(&obs.own_dice, b.face, obs.wild_for(b.face)).to_string(),
        ),
        Feature::LegalRaises => {
            let ceiling = current.map_or(0, |b| b.quantity) + 2;
            let list: Vec<String> = obs
                .legal_raises()
                .take_while(|b| b.quantity <= ceiling)
                .map(|b| format!("{b} p={}", fmt_prob(policy::truth_probability(obs, b, None))))
                .collect();
            list.join(", ")
        }
        Feature::OpponentPrior => {
            let prior = opponent_prior(obs, d.parameter(params::ALPHA))?;
            let parts: Vec<String> = (1..=6u8)
                .map(|f| format!("{f}:{:.3}", prior.weight(f)))
                .collect();
            parts.join(" ")
        }
        Feature::EvTable => match current {
            None => "n/a".into(),
            Some(_) => {
                let prior = opponent_prior(obs, d.parameter(params::ALPHA))?;
                let ranked = policy::case_b_rank(obs, &prior)?;
                let rows: Vec<String> = ranked
                    .iter()
                    .take(5)
                    .map(|r| format!("{} ev={:.4}", r.action, r.ev))
                    .collect();
                rows.join("; ")
            }
        },
    })
}

fn run_stage(
    stage: &StageSpec,
    d: &HarnessDescriptor,
    w: &mut Working<'_>,
    gateway: &mut dyn ModelGateway,
    slot: &DecisionSlot<'_>,
) -> Result<(bool, Option<String>), HarnessError> {
    let obs = w.obs;
    match stage {
        StageSpec::ParseObservation => {
            let parsed = ParsedObservation::parse(&obs.rendered_text)
                .ok_or(HarnessError::ObservationMismatch)?;
            if !parsed.agrees_with(obs) {
                return Err(HarnessError::ObservationMismatch);
            }
            observation_vars(obs, &mut w.vars);
            Ok((true, None))
        }
        StageSpec::ComputeFeatures { features } => {
            for &f in features {
                let value = feature_value(f, obs, d)?;
                w.vars.insert(f.placeholder(), value);
            }
            Ok((true, None))
        }
        StageSpec::SymbolicPolicy { policy: kind } => {
            if w.action.is_some() {
                return Ok((false, None));
            }
            w.action = match kind {
                PolicyKind::Threshold => policy::threshold_policy(
                    obs,
                    d.parameter(params::CALL_THRESHOLD),
                    d.parameter(params::RAISE_MIN_PROB),
                ),
                PolicyKind::EvRank => match obs.current_bid() {
                    None => Some(policy::opening_bid(obs)),
                    Some(_) => {
                        let prior = opponent_prior(obs, d.parameter(params::ALPHA))?;
                        policy::case_b_rank(obs, &prior)?.first().map(|r| r.action)
                    }
                },
            };
            Ok((w.action.is_some(), None))
        }
        StageSpec::ModelCall { model } => {
            if w.action.is_some() {
                return Ok((false, None));
            }
            let request = ModelRequest {
                request_id: format!("{}/d{}/m{}", slot.rollout_id, slot.decision_index, w.requests.len()),
                prompt_text: render_template(&d.prompt_template, &w.vars),
                model_name: model.clone().unwrap_or_else(|| slot.model_name.into()),
                decision_index: slot.decision_index,
            };
            w.requests.push(request.request_id.clone());
            match gateway.complete(&request) {
                Ok(text) => {
                    w.model = ModelState::Answered;
                    w.model_text = Some(text);
                    Ok((true, None))
                }
                Err(e) => {
                    w.model = ModelState::Failed;
                    w.events.push(match e {
                        GatewayError::ModelTimeout => AuditEventKind::Timeout,
                        _ => AuditEventKind::Error,
                    });
                    Ok((true, Some(e.to_string())))
                }
            }
        }
        StageSpec::ParseModelAction => {
            if w.action.is_some() || w.model != ModelState::Answered {
                return Ok((false, None));
            }
            let text = w.model_text.as_deref().unwrap_or_default();
            w.action = parse_model_action(text);
            w.parse_failed = w.action.is_none();
            Ok((true, None))
        }
        StageSpec::RepairAction => {
            let event = match w.action {
                Some(a) if obs.is_legal(&a) => return Ok((false, None)),
                Some(_) => AuditEventKind::InvalidAction,
                None if w.model == ModelState::Failed => AuditEventKind::Fallback,
                None if w.parse_failed => AuditEventKind::ParseFallback,
                None => AuditEventKind::Fallback,
            };
            let note = w.action.map(|a| format!("repaired {a}"));
            w.action = policy::repair_action(obs, d.parameter(params::RAISE_MIN_PROB));
            w.events.push(event);
            Ok((true, note))
        }
        StageSpec::SafetyOverride { guard: GuardKind::PileOn } => {
            let Some(proposed @ Action::Bid(_)) = w.action else {
                return Ok((false, None));
            };
            if obs.current_bid().is_none() || !obs.is_legal(&proposed) {
                return Ok((false, None));
            }
            let guard = GuardParams {
                margin: d.parameter(params::MARGIN),
                contribution_gate: d.parameter(params::CONTRIBUTION_GATE),
                beta: d.parameter(params::BETA),
            };
            let out = policy::case_c_guard(obs, proposed, &guard)?;
            w.action = Some(out.action);
            let note = format!(
                "own={} ev_call={:.4} ev_raise={:.4}",
                out.own_contribution, out.ev_call, out.ev_raise
            );
            Ok((out.fired, Some(note)))
        }
    }
}

/// Run a harness on one observation.
///
/// The returned action is always legal for the observation. Symbolic stages
/// that resolve the turn skip any later model call, so a fully symbolic
/// decision issues no requests.
pub fn decide(
    descriptor: &HarnessDescriptor,
    observation: &Observation,
    gateway: &mut dyn ModelGateway,
    slot: &DecisionSlot<'_>,
) -> Result<Decision, HarnessError> {
    if !observation.is_my_turn() {
        return Err(HarnessError::NotMyTurn);
    }
    let mut w = Working {
        obs: observation,
        vars: BTreeMap::new(),
        action: None,
        model: ModelState::NotCalled,
        model_text: None,
        parse_failed: false,
        requests: Vec::new(),
        events: Vec::new(),
    };
    let mut stages = Vec::with_capacity(descriptor.stages.len());
    for stage in &descriptor.stages {
        let inputs = format!(
            "{}|{}|{}",
            stage.name(),
            observation.rendered_text,
            w.action_text()
        );
        let (fired, note) = run_stage(stage, descriptor, &mut w, gateway, slot)?;
        let outputs = format!(
            "{}|{}|{}",
            w.action_text(),
            w.model_text.as_deref().unwrap_or(""),
            w.vars.values().cloned().collect::<Vec<_>>().join("\u{1f}")
        );
        stages.push(StageRecord {
            stage: stage.name().into(),
            inputs_digest: digest(&inputs),
            outputs_digest: digest(&outputs),
            fired,
            note,
        });
    }
    match w.action {
        Some(action) if observation.is_legal(&action) => Ok(Decision {
            action,
            trace: DecisionTrace {
                decision_index: slot.decision_index,
                stages,
                chosen_action: action,
                model_requests: w.requests,
                events: w.events,
            },
        }),
        other => {
            let event = if w.model == ModelState::Failed {
                AuditEventKind::Fallback
            } else {
                AuditEventKind::Error
            };
            let mut events = w.events;
            if other.is_some() {
                events.push(AuditEventKind::InvalidAction);
            }
            events.push(event);
            Err(HarnessError::UnrecoverableModelOutput {
                response: w.model_text,
                events,
                model_requests: w.requests,
            })
        }
    }
}
