//! Episode records shared by agent rollouts and human demonstrations.
//!
//! On disk a trajectory is line-delimited JSON: one header record, one record
//! per step, and a closing terminal record once the episode has finished.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Observation, Seat, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Agent,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub observation: Observation,
    pub action: Action,
    pub round_index: u32,
    /// Generic per-step numeric channel (money-like fields for economy analytics).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode_id: String,
    pub variant: Variant,
    pub logical_seed: u64,
    pub actor: Actor,
    pub seat: Seat,
    /// Harness or opponent id that produced the actions, when an agent.
    pub policy_id: Option<String>,
    pub steps: Vec<Step>,
    /// Observation after the last action, present once the episode finished.
    pub final_observation: Option<Observation>,
    pub terminal_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trajectory has no header record")]
    MissingHeader,
    #[error("line {line}: record after terminal record")]
    TrailingRecord { line: usize },
    #[error("step {index} observation is not for seat {seat}")]
    WrongSeat { index: usize, seat: Seat },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        episode_id: String,
        variant: Variant,
        logical_seed: u64,
        actor: Actor,
        seat: Seat,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy_id: Option<String>,
    },
    Step {
        index: usize,
        #[serde(flatten)]
        step: Step,
    },
    Terminal {
        reward: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        final_observation: Option<Observation>,
    },
}

impl Trajectory {
    pub fn new(episode_id: &str, variant: Variant, logical_seed: u64, actor: Actor, seat: Seat) -> Trajectory {
        Trajectory {
            episode_id: episode_id.into(),
            variant,
            logical_seed,
            actor,
            seat,
            policy_id: None,
            steps: Vec::new(),
            final_observation: None,
            terminal_reward: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.terminal_reward.is_some()
    }

    pub fn push(&mut self, observation: Observation, action: Action) {
        let round_index = observation.round_index;
        self.steps.push(Step { observation, action, round_index, resource: None });
    }

    pub fn finish(&mut self, reward: f64, final_observation: Option<Observation>) {
        self.terminal_reward = Some(reward);
        self.final_observation = final_observation;
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        for (index, s) in self.steps.iter().enumerate() {
            if s.observation.seat != self.seat {
                return Err(TrajectoryError::WrongSeat { index, seat: self.seat });
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut line = |r: &Record| {
            out.push_str(&serde_json::to_string(r).expect("trajectory records serialize"));
            out.push('\n');
        };
        line(&Record::Header {
            episode_id: self.episode_id.clone(),
            variant: self.variant,
            logical_seed: self.logical_seed,
            actor: self.actor,
            seat: self.seat,
            policy_id: self.policy_id.clone(),
        });
        for (index, step) in self.steps.iter().enumerate() {
            line(&Record::Step { index, step: step.clone() });
        }
        if let Some(reward) = self.terminal_reward {
            line(&Record::Terminal { reward, final_observation: self.final_observation.clone() });
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trajectory, TrajectoryError> {
        let mut traj: Option<Trajectory> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(raw)
                .map_err(|e| TrajectoryError::Malformed { line, message: format!("{e}") })?;
            match (record, traj.as_mut()) {
                (Record::Header { episode_id, variant, logical_seed, actor, seat, policy_id }, None) => {
                    let mut t = Trajectory::new(&episode_id, variant, logical_seed, actor, seat);
                    t.policy_id = policy_id;
                    traj = Some(t);
                }
                (Record::Header { .. }, Some(_)) => {
                    return Err(TrajectoryError::Malformed { line, message: "duplicate header".into() })
                }
                (_, None) => return Err(TrajectoryError::MissingHeader),
                (_, Some(t)) if t.is_complete() => return Err(TrajectoryError::TrailingRecord { line }),
                (Record::Step { index, step }, Some(t)) => {
                    if index != t.steps.len() {
                        return Err(TrajectoryError::Malformed {
                            line,
                            message: format!("expected step {}, found {index}", t.steps.len()),
                        });
                    }
                    t.steps.push(step);
                }
                (Record::Terminal { reward, final_observation }, Some(t)) => t.finish(reward, final_observation),
            }
        }
        let t = traj.ok_or(TrajectoryError::MissingHeader)?;
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::new_match;

    fn sample() -> Trajectory {
        let mut s = new_match(Variant::Small3, 11);
        let mut t = Trajectory::new("ep-1", Variant::Small3, 11, Actor::Human, 0);
        let o = s.render_observation(0);
        t.push(o, Action::bid(1, 4));
        s.apply_action(Action::bid(1, 4)).unwrap();
        s.apply_action(Action::bid(2, 4)).unwrap();
        let o = s.render_observation(0);
        t.push(o, Action::Call);
        t.steps[1].resource = Some(2.5);
        t
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let mut t = sample();
        let open = t.to_jsonl();
        assert_eq!(Trajectory::from_jsonl(&open).unwrap(), t);
        t.finish(1.0, None);
        let text = t.to_jsonl();
        let back = Trajectory::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_jsonl(), text);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn rejects_bad_streams() {
        let t = sample();
        let text = t.to_jsonl();
        let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert_eq!(Trajectory::from_jsonl(&body), Err(TrajectoryError::MissingHeader));
        let broken = text.replacen("\"index\":1", "\"index\":7", 1);
        assert!(matches!(Trajectory::from_jsonl(&broken), Err(TrajectoryError::Malformed { line: 3, .. })));
        assert!(matches!(
            Trajectory::from_jsonl("{\"record\":\"nope\"}"),
            Err(TrajectoryError::Malformed { line: 1, .. })
        ));
    }
}
