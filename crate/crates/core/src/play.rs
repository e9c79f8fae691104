//! Match play between two agents.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{new_match, Action, EnvError, Observation, Outcome, Seat, Variant, SEATS};
use crate::gateway::{ModelGateway, RequestRecord};
use crate::harness::{decide, reference, AuditEventKind, DecisionSlot, DecisionTrace, HarnessDescriptor, HarnessError};
use crate::rng::{uniform_below, NAIVE_STREAM};
use crate::trajectory::{Actor, Trajectory};

/// Who sits in a seat.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    Harness(HarnessDescriptor),
    /// Uniform-random legal raise; calls only when no raise exists.
    Naive,
}

impl AgentSpec {
    pub fn id(&self) -> &str {
        match self {
            AgentSpec::Harness(d) => &d.id,
            AgentSpec::Naive => "naive",
        }
    }
}

impl FromStr for AgentSpec {
    type Err = String;

    /// `naive` or the id of a bundled reference harness.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(AgentSpec::Naive),
            other => reference::by_name(other)
                .map(AgentSpec::Harness)
                .ok_or_else(|| format!("unknown agent `{other}`")),
        }
    }
}

pub fn naive_action(obs: &Observation, logical_seed: u64) -> Action {
    let raises: Vec<_> = obs.legal_raises().collect();
    if raises.is_empty() {
        return Action::Call;
    }
    let keys = [
        NAIVE_STREAM,
        logical_seed,
        obs.round_index as u64,
        obs.bid_history.len() as u64,
        obs.seat as u64,
    ];
    Action::Bid(raises[uniform_below(&keys, raises.len() as u64) as usize])
}

/// A seat that stopped acting, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatFailure {
    pub seat: Seat,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub variant: Variant,
    pub logical_seed: u64,
    pub rollout_id: String,
    pub agent_ids: [String; SEATS],
    pub outcome: Outcome,
    pub trajectories: [Trajectory; SEATS],
    pub traces: [Vec<DecisionTrace>; SEATS],
    pub events: [Vec<AuditEventKind>; SEATS],
    pub failure: Option<SeatFailure>,
    pub requests: Vec<RequestRecord>,
}

impl MatchRecord {
    pub fn reward(&self, seat: Seat) -> f64 {
        self.outcome.reward(seat)
    }
}

/// Play one game to completion.
///
/// A seat whose harness cannot produce a legal action forfeits; the failure
/// and the harness's events are kept on the record.
pub fn play_match(
    variant: Variant,
    logical_seed: u64,
    agents: [&AgentSpec; SEATS],
    gateway: &mut dyn ModelGateway,
    rollout_id: &str,
) -> MatchRecord {
    let mut state = new_match(variant, logical_seed);
    let mut trajectories = [0, 1].map(|seat| {
        let mut t = Trajectory::new(&format!("{rollout_id}/s{seat}"), variant, logical_seed, Actor::Agent, seat);
        t.policy_id = Some(agents[seat].id().into());
        t
    });
    let mut traces: [Vec<DecisionTrace>; SEATS] = [Vec::new(), Vec::new()];
    let mut events: [Vec<AuditEventKind>; SEATS] = [Vec::new(), Vec::new()];
    let mut decisions = [0u32; SEATS];
    let mut failure = None;
    let model_name = "scripted";

    let outcome = loop {
        if let Some(outcome) = state.outcome() {
            break outcome;
        }
        let seat = state.turn();
        let obs = state.render_observation(seat);
        let seat_rollout = format!("{rollout_id}/s{seat}");
        let chosen: Result<Action, (HarnessError, Vec<AuditEventKind>)> = match agents[seat] {
            AgentSpec::Naive => Ok(naive_action(&obs, logical_seed)),
            AgentSpec::Harness(desc) => {
                let slot = DecisionSlot {
                    rollout_id: &seat_rollout,
                    decision_index: decisions[seat],
                    model_name,
                };
                match decide(desc, &obs, gateway, &slot) {
                    Ok(d) => {
                        events[seat].extend_from_slice(&d.trace.events);
                        traces[seat].push(d.trace);
                        Ok(d.action)
                    }
                    Err(e) => {
                        let ev = match &e {
                            HarnessError::UnrecoverableModelOutput { events, .. } => events.clone(),
                            _ => alloc::vec![AuditEventKind::Error],
                        };
                        Err((e, ev))
                    }
                }
            }
        };
        decisions[seat] += 1;
        let step = match chosen {
            Ok(action) => state.apply_action(action).map(|_| action).map_err(|e: EnvError| e.to_string()),
            Err((e, ev)) => {
                events[seat].extend(ev);
                Err(e.to_string())
            }
        };
        match step {
            Ok(action) => trajectories[seat].push(obs, action),
            Err(message) => {
                if !events[seat].iter().any(|e| e.breaks_clean_run()) {
                    events[seat].push(AuditEventKind::Error);
                }
                failure = Some(SeatFailure { seat, message });
                break state.forfeit(1 - seat);
            }
        }
    };
    for (seat, t) in trajectories.iter_mut().enumerate() {
        t.finish(outcome.reward(seat), Some(state.render_observation(seat)));
    }
    MatchRecord {
        variant,
        logical_seed,
        rollout_id: rollout_id.into(),
        agent_ids: [agents[0].id().into(), agents[1].id().into()],
        outcome,
        trajectories,
        traces,
        events,
        failure,
        requests: gateway.take_records(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{OutcomeReason, Winner};
    use crate::gateway::{FailingGateway, GatewayError, ScriptedGateway, ScriptedModelSpec};

    #[test]
    fn naive_only_calls_when_out_of_raises() {
        let s = new_match(Variant::OneCallWild1, 4);
        let obs = s.render_observation(0);
        for seed in 0..50 {
            let a = naive_action(&obs, seed);
            assert!(matches!(a, Action::Bid(_)) && obs.is_legal(&a));
        }
        let mut s = new_match(Variant::Small3, 4);
        s.apply_action(Action::bid(6, 6)).unwrap();
        assert_eq!(naive_action(&s.render_observation(1), 9), Action::Call);
    }

    #[test]
    fn naive_vs_naive_terminates_with_complete_trajectories() {
        let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
        for seed in 0..20 {
            for variant in Variant::ALL {
                let r = play_match(variant, seed, [&AgentSpec::Naive, &AgentSpec::Naive], &mut g, "t");
                assert!(r.failure.is_none());
                assert_eq!(r.reward(0) + r.reward(1), 1.0);
                let steps: usize = r.trajectories.iter().map(|t| t.steps.len()).sum();
                assert!(steps >= 1);
                assert!(r.trajectories.iter().all(|t| t.is_complete()));
            }
        }
        assert!(g.log().is_empty());
    }

    #[test]
    fn broken_model_forfeits() {
        let mut desc = reference::base();
        // A base harness with no repair stage cannot recover from a dead model.
        desc.stages.retain(|s| s.name() != "RepairAction");
        let mut g = FailingGateway::new(GatewayError::ModelUnavailable("down".into()));
        let r = play_match(Variant::Small3, 1, [&AgentSpec::Harness(desc), &AgentSpec::Naive], &mut g, "f");
        assert_eq!(r.outcome.winner, Winner::Seat(1));
        assert_eq!(r.outcome.reason, OutcomeReason::Forfeit);
        assert_eq!(r.failure.as_ref().map(|f| f.seat), Some(0));
        assert!(r.events[0].iter().any(|e| e.breaks_clean_run()));
        assert_eq!(r.requests.len(), 1);
        assert!(r.requests[0].error.is_some());
    }

    #[test]
    fn agent_specs_parse() {
        assert_eq!("naive".parse::<AgentSpec>().unwrap(), AgentSpec::Naive);
        assert_eq!("case_a".parse::<AgentSpec>().unwrap().id(), "case_a");
        assert!("nobody".parse::<AgentSpec>().is_err());
    }
}
