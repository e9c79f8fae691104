//! Symbolic decision rules used by harness stages.

use alloc::vec::Vec;
use core::cmp::Ordering;

use super::HarnessError;
use crate::belief::{bid_truth_probability, BeliefQuery, FacePrior, PileOnPosterior};
use crate::env::{count_matches, Action, Bid, Observation};

/// Opening bid: the most common own face (highest face on ties) at its own count.
pub fn opening_bid(obs: &Observation) -> Action {
    let mut counts = [0u32; 7];
    for &d in &obs.own_dice {
        counts[usize::from(d)] += 1;
    }
    let face = (1..=6u8)
        .max_by_key(|&f| (counts[usize::from(f)], f))
        .unwrap_or(6);
    let quantity = counts[usize::from(face)].max(1);
    Action::bid(quantity, face)
}

pub fn truth_probability(obs: &Observation, bid: Bid, prior: Option<&FacePrior>) -> f64 {
    let mut q = BeliefQuery::from_observation(obs, bid);
    q.opponent_prior = prior.copied();
    bid_truth_probability(&q)
}

/// Lowest legal raise whose truth probability reaches `min_prob`.
pub fn smallest_raise_with_probability(obs: &Observation, min_prob: f64, prior: Option<&FacePrior>) -> Option<Bid> {
    obs.legal_raises()
        .find(|b| truth_probability(obs, *b, prior) >= min_prob)
}

/// Near-symbolic threshold control. `None` means the rule does not resolve the turn.
pub fn threshold_policy(obs: &Observation, call_threshold: f64, raise_min_prob: f64) -> Option<Action> {
    let Some(current) = obs.current_bid() else {
        return Some(opening_bid(obs));
    };
    if truth_probability(obs, current, None) < call_threshold {
        return Some(Action::Call);
    }
    smallest_raise_with_probability(obs, raise_min_prob, None).map(Action::Bid)
}

/// Replacement for an unusable model move: the smallest raise meeting the
/// probability bar, else a call, else the smallest raise at all.
pub fn repair_action(obs: &Observation, raise_min_prob: f64) -> Option<Action> {
    if let Some(b) = smallest_raise_with_probability(obs, raise_min_prob, None) {
        return Some(Action::Bid(b));
    }
    if obs.current_bid().is_some() {
        return Some(Action::Call);
    }
    obs.legal_raises().next().map(Action::Bid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedAction {
    pub action: Action,
    pub ev: f64,
    pub truth_probability: f64,
}

/// Descending by value; ties go to the call, then fewer dice, then lower face.
pub fn rank_order(a: &RankedAction, b: &RankedAction) -> Ordering {
    fn key(a: &Action) -> (u8, u32, u8) {
        match a {
            Action::Call => (0, 0, 0),
            Action::Bid(b) => (1, b.quantity, b.face),
        }
    }
    b.ev.total_cmp(&a.ev)
        .then_with(|| key(&a.action).cmp(&key(&b.action)))
}

/// Expected-value ranking of call against every legal raise.
///
/// A call is worth `2 * (1 - p_current) - 1`, a raise `2 * p_raise - 1`,
/// both with truth probabilities under the opponent face prior.
pub fn case_b_rank(obs: &Observation, prior: &FacePrior) -> Result<Vec<RankedAction>, HarnessError> {
    let current = obs.current_bid().ok_or(HarnessError::NoCurrentBid)?;
    let p_current = truth_probability(obs, current, Some(prior));
    let mut ranked = Vec::new();
    ranked.push(RankedAction {
        action: Action::Call,
        ev: 2.0 * (1.0 - p_current) - 1.0,
        truth_probability: p_current,
    });
    for raise in obs.legal_raises() {
        let p = truth_probability(obs, raise, Some(prior));
        ranked.push(RankedAction {
            action: Action::Bid(raise),
            ev: 2.0 * p - 1.0,
            truth_probability: p,
        });
    }
    ranked.sort_by(rank_order);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardParams {
    pub margin: f64,
    pub contribution_gate: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardOutcome {
    pub action: Action,
    pub fired: bool,
    pub own_contribution: u32,
    pub ev_call: f64,
    pub ev_raise: f64,
    pub best_raise: Option<Bid>,
}

/// The pile-on override condition.
pub fn pile_on_guard_fires(own_contribution: u32, ev_call: f64, ev_raise: f64, margin: f64, contribution_gate: f64) -> bool {
    f64::from(own_contribution) >= contribution_gate && ev_call > ev_raise + margin
}

/// Replace a proposed raise with a call when the standing bid looks like a
/// bluff we already hold dice against and no follow-up raise is as safe.
///
/// `ev_call` is one minus the closed-form truth probability of the current
/// bid; `ev_raise` is the pile-on posterior truth probability of the best
/// legal raise, tilted toward the opponent's last bid with strength `beta`.
pub fn case_c_guard(obs: &Observation, proposed: Action, params: &GuardParams) -> Result<GuardOutcome, HarnessError> {
    let current = obs.current_bid().ok_or(HarnessError::NoCurrentBid)?;
    let own_contribution = count_matches(&obs.own_dice, current.face, obs.wild_for(current.face));
    let ev_call = 1.0 - truth_probability(obs, current, None);
    let opponent_last = obs.opponent_bids().last().unwrap_or(current);
    let posterior = PileOnPosterior::new(
        obs.opponent_dice_count(),
        obs.wild_active,
        None,
        opponent_last,
        params.beta,
    )?;
    let mut best: Option<(Bid, f64)> = None;
    for raise in obs.legal_raises() {
        let p = posterior.truth_probability(&obs.own_dice, raise, obs.wild_active);
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((raise, p));
        }
    }
    let (best_raise, ev_raise) = match best {
        Some((b, p)) => (Some(b), p),
        None => (None, 0.0),
    };
    let fired = matches!(proposed, Action::Bid(_))
        && pile_on_guard_fires(own_contribution, ev_call, ev_raise, params.margin, params.contribution_gate);
    Ok(GuardOutcome {
        action: if fired { Action::Call } else { proposed },
        fired,
        own_contribution,
        ev_call,
        ev_raise,
        best_raise,
    })
}
