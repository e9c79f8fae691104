//! Probabilities over the opponent's hidden dice.
//!
//! Closed-form binomial tails serve the policies; exhaustive enumeration over
//! all `6^n` opponent rolls is kept alongside as an independent check and as
//! the engine for the posterior-tilted pile-on model.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::env::{count_matches, Action, Bid, EnvError, MatchState, Observation, Variant};

/// Largest opponent hand the enumerators accept.
pub const MAX_ENUMERATED_DICE: u32 = 6;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("enumeration over {count} opponent dice exceeds the limit of {MAX_ENUMERATED_DICE}")]
    OracleTooLarge { count: u32 },
    #[error("invalid history: {0}")]
    InvalidHistory(&'static str),
    #[error("face prior must have six nonnegative weights summing to 1")]
    InvalidPrior,
    #[error("parameter {name} out of range")]
    InvalidParameter { name: &'static str },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Per-face weights for one opponent die.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePrior {
    weights: [f64; 6],
    evidence_count: u32,
}

impl FacePrior {
    pub fn uniform() -> FacePrior {
        FacePrior {
            weights: [1.0 / 6.0; 6],
            evidence_count: 0,
        }
    }

    pub fn from_weights(weights: [f64; 6]) -> Result<FacePrior, BeliefError> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || libm::fabs(sum - 1.0) > NORMALIZATION_TOLERANCE
        {
            return Err(BeliefError::InvalidPrior);
        }
        Ok(FacePrior {
            weights,
            evidence_count: 0,
        })
    }

    pub fn weight(&self, face: u8) -> f64 {
        self.weights[usize::from(face - 1)]
    }

    pub fn weights(&self) -> &[f64; 6] {
        &self.weights
    }

    pub fn evidence_count(&self) -> u32 {
        self.evidence_count
    }
}

impl Default for FacePrior {
    fn default() -> Self {
        FacePrior::uniform()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefQuery {
    pub own_dice: Vec<u8>,
    pub opponent_dice_count: u32,
    pub bid: Bid,
    pub wild_active: bool,
    pub opponent_prior: Option<FacePrior>,
}

impl BeliefQuery {
    pub fn new(own_dice: &[u8], opponent_dice_count: u32, bid: Bid, wild_active: bool) -> BeliefQuery {
        BeliefQuery {
            own_dice: own_dice.to_vec(),
            opponent_dice_count,
            bid,
            wild_active,
            opponent_prior: None,
        }
    }

    pub fn with_prior(mut self, prior: FacePrior) -> BeliefQuery {
        self.opponent_prior = Some(prior);
        self
    }

    /// Query for `bid` from the point of view of the observing seat.
    pub fn from_observation(obs: &Observation, bid: Bid) -> BeliefQuery {
        BeliefQuery::new(&obs.own_dice, obs.opponent_dice_count(), bid, obs.wild_active)
    }

    fn wild(&self) -> bool {
        self.wild_active && self.bid.face != 1
    }

    pub fn own_matches(&self) -> u32 {
        count_matches(&self.own_dice, self.bid.face, self.wild())
    }

    /// Opponent matches still needed for the bid to hold.
    fn shortfall(&self) -> u32 {
        self.bid.quantity.saturating_sub(self.own_matches())
    }
}

/// Chance that one unseen die counts toward `face`.
pub fn per_die_match_probability(face: u8, wild_active: bool, prior: Option<&FacePrior>) -> f64 {
    let wild = wild_active && face != 1;
    match prior {
        None => {
            if wild {
                1.0 / 3.0
            } else {
                1.0 / 6.0
            }
        }
        Some(p) => p.weight(face) + if wild { p.weight(1) } else { 0.0 },
    }
}

fn binomial_coefficient(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_tail(n: u32, p: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    (k..=n)
        .map(|x| {
            binomial_coefficient(n, x)
                * libm::pow(p, f64::from(x))
                * libm::pow(1.0 - p, f64::from(n - x))
        })
        .sum()
}

/// Closed-form probability that the queried bid is true.
pub fn bid_truth_probability(q: &BeliefQuery) -> f64 {
    let need = q.shortfall();
    if need == 0 {
        return 1.0;
    }
    let p = per_die_match_probability(q.bid.face, q.wild_active, q.opponent_prior.as_ref());
    binomial_tail(q.opponent_dice_count, p, need)
}

/// Visit every opponent roll of `n` dice with its prior weight.
fn for_each_roll(n: u32, prior: Option<&FacePrior>, mut visit: impl FnMut(&[u8], f64)) {
    let n = n as usize;
    let mut dice = vec![1u8; n];
    loop {
        let weight = match prior {
            None => 1.0,
            Some(p) => dice.iter().map(|&d| p.weight(d)).product(),
        };
        visit(&dice, weight);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            if dice[i] < 6 {
                dice[i] += 1;
                break;
            }
            dice[i] = 1;
            i += 1;
        }
    }
}

fn check_enumerable(n: u32) -> Result<(), BeliefError> {
    if n > MAX_ENUMERATED_DICE {
        return Err(BeliefError::OracleTooLarge { count: n });
    }
    Ok(())
}

/// Exact truth probability by summing over all opponent rolls.
pub fn enumerate_truth_probability(q: &BeliefQuery) -> Result<f64, BeliefError> {
    check_enumerable(q.opponent_dice_count)?;
    let own = q.own_matches();
    let wild = q.wild();
    let mut hit = 0.0;
    let mut total = 0.0;
    for_each_roll(q.opponent_dice_count, q.opponent_prior.as_ref(), |dice, w| {
        total += w;
        if own + count_matches(dice, q.bid.face, wild) >= q.bid.quantity {
            hit += w;
        }
    });
    Ok(hit / total)
}

/// Face prior from the opponent's bids this round: weight of face `f` is
/// proportional to `1 + alpha * (bids naming f)`.
pub fn opponent_face_prior(opponent_bids: &[Bid], alpha: f64) -> Result<FacePrior, BeliefError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BeliefError::InvalidParameter { name: "alpha" });
    }
    let mut weights = [1.0; 6];
    for b in opponent_bids {
        weights[usize::from(b.face - 1)] += alpha;
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(FacePrior {
        weights,
        evidence_count: opponent_bids.len() as u32,
    })
}

/// Distribution of opponent match counts for every face after tilting the
/// prior toward rolls that support the opponent's last bid.
///
/// A roll with `m` dice matching the opponent's bid face gets likelihood
/// `exp(beta * m)`. `per_face[f - 1][c]` is the posterior probability that
/// exactly `c` opponent dice count toward face `f` (under the wild rule for `f`).
#[derive(Debug, Clone, PartialEq)]
pub struct PileOnPosterior {
    per_face: [Vec<f64>; 6],
}

impl PileOnPosterior {
    pub fn new(
        opponent_dice_count: u32,
        wild_active: bool,
        prior: Option<&FacePrior>,
        opponent_last_bid: Bid,
        beta: f64,
    ) -> Result<PileOnPosterior, BeliefError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(BeliefError::InvalidParameter { name: "beta" });
        }
        check_enumerable(opponent_dice_count)?;
        let n = opponent_dice_count as usize;
        let tilt_face = opponent_last_bid.face;
        let tilt_wild = wild_active && tilt_face != 1;
        let mut per_face: [Vec<f64>; 6] = core::array::from_fn(|_| vec![0.0; n + 1]);
        let mut total = 0.0;
        for_each_roll(opponent_dice_count, prior, |dice, w| {
            let support = count_matches(dice, tilt_face, tilt_wild);
            let w = if beta == 0.0 {
                w
            } else {
                w * libm::exp(beta * f64::from(support))
            };
            total += w;
            for face in 1..=6u8 {
                let c = count_matches(dice, face, wild_active && face != 1);
                per_face[usize::from(face - 1)][c as usize] += w;
            }
        });
        for hist in &mut per_face {
            for v in hist.iter_mut() {
                *v /= total;
            }
        }
        Ok(PileOnPosterior { per_face })
    }

    /// Probability that opponent dice supply at least `needed` matches for `face`.
    pub fn at_least(&self, face: u8, needed: u32) -> f64 {
        self.per_face[usize::from(face - 1)]
            .iter()
            .skip(needed as usize)
            .sum()
    }

    /// Truth probability of `bid` given the observer's own dice.
    pub fn truth_probability(&self, own_dice: &[u8], bid: Bid, wild_active: bool) -> f64 {
        let own = count_matches(own_dice, bid.face, wild_active && bid.face != 1);
        let need = bid.quantity.saturating_sub(own);
        if need == 0 {
            return 1.0;
        }
        self.at_least(bid.face, need)
    }
}

/// Truth probability of the query's bid under the pile-on posterior.
/// With `beta = 0` this is exactly [`enumerate_truth_probability`].
pub fn pile_on_truth_probability(q: &BeliefQuery, opponent_last_bid: Bid, beta: f64) -> Result<f64, BeliefError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(BeliefError::InvalidParameter { name: "beta" });
    }
    if beta == 0.0 || q.opponent_dice_count == 0 {
        return enumerate_truth_probability(q);
    }
    check_enumerable(q.opponent_dice_count)?;
    let own = q.own_matches();
    let wild = q.wild();
    let tilt_face = opponent_last_bid.face;
    let tilt_wild = q.wild_active && tilt_face != 1;
    let mut hit = 0.0;
    let mut total = 0.0;
    for_each_roll(q.opponent_dice_count, q.opponent_prior.as_ref(), |dice, w| {
        let w = w * libm::exp(beta * f64::from(count_matches(dice, tilt_face, tilt_wild)));
        total += w;
        if own + count_matches(dice, q.bid.face, wild) >= q.bid.quantity {
            hit += w;
        }
    });
    Ok(hit / total)
}

/// What the acting seat sees right after its action.
#[derive(Debug, Clone, PartialEq)]
pub enum NextObservation {
    /// The match continues; this is the acting seat's next observation.
    Observe(Observation),
    /// The match ended with this reward for the acting seat.
    Terminal { reward: f64 },
}

/// An agent's observation history within one seeded match.
#[derive(Debug, Clone, Copy)]
pub struct AgentHistory<'a> {
    pub seed: u64,
    pub observations: &'a [Observation],
}

fn validate_history<'a>(history: &AgentHistory<'a>, variant: Variant) -> Result<&'a Observation, BeliefError> {
    let last = history
        .observations
        .last()
        .ok_or(BeliefError::InvalidHistory("empty history"))?;
    for obs in history.observations {
        if obs.variant != variant {
            return Err(BeliefError::InvalidHistory("observation from another variant"));
        }
        if obs.seat != last.seat {
            return Err(BeliefError::InvalidHistory("observations from different seats"));
        }
        if obs.own_dice.len() as u32 != obs.dice_remaining[obs.seat] {
            return Err(BeliefError::InvalidHistory("own dice disagree with dice remaining"));
        }
    }
    for pair in history.observations.windows(2) {
        if pair[1].round_index < pair[0].round_index {
            return Err(BeliefError::InvalidHistory("round index went backwards"));
        }
    }
    if !last.is_my_turn() {
        return Err(BeliefError::InvalidHistory("latest observation is not the agent's turn"));
    }
    Ok(last)
}

/// Distribution of the agent's next observation given its history and action.
///
/// The opponent's hidden dice are uniform over every roll consistent with the
/// public record (bids carry no likelihood here); each roll is pushed through
/// the seeded transition and results are grouped by resulting observation.
/// Classes appear in order of first occurrence over the enumeration.
pub fn next_observation_distribution(
    history: &AgentHistory<'_>,
    action: Action,
    variant: Variant,
) -> Result<Vec<(NextObservation, f64)>, BeliefError> {
    let last = validate_history(history, variant)?;
    let seat = last.seat;
    let opp = 1 - seat;
    let opp_count = last.dice_remaining[opp];
    check_enumerable(opp_count)?;
    if !last.is_legal(&action) {
        return Err(EnvError::IllegalAction(action).into());
    }

    let mut classes: Vec<(NextObservation, f64)> = Vec::new();
    let mut total = 0.0;
    let mut failure = None;
    for_each_roll(opp_count, None, |opp_dice, w| {
        if failure.is_some() {
            return;
        }
        let mut seat_dice: [Vec<u8>; 2] = [Vec::new(), Vec::new()];
        seat_dice[seat] = last.own_dice.clone();
        seat_dice[opp] = opp_dice.to_vec();
        let mut state = match MatchState::from_parts(
            variant,
            history.seed,
            seat_dice,
            last.bid_history.clone(),
            last.wild_active,
            last.turn,
            last.round_index,
        ) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let next = match state.apply_action(action) {
            Ok(Some(outcome)) => NextObservation::Terminal {
                reward: outcome.reward(seat),
            },
            Ok(None) => NextObservation::Observe(state.render_observation(seat)),
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        total += w;
        match classes.iter_mut().find(|(c, _)| *c == next) {
            Some((_, p)) => *p += w,
            None => classes.push((next, w)),
        }
    });
    if let Some(e) = failure {
        return Err(match e {
            EnvError::InvalidState(why) => BeliefError::InvalidHistory(why),
            other => other.into(),
        });
    }
    for (_, p) in &mut classes {
        *p /= total;
    }
    Ok(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{new_match, BidRecord};
    use alloc::vec;

    fn bid(q: u32, f: u8) -> Bid {
        Bid { quantity: q, face: f }
    }

    // Oracle: plain counting over every opponent roll, no shared code with the
    // engine beyond the bid definition.
    fn brute_force(own: &[u8], n: u32, b: Bid, wild: bool) -> f64 {
        let rolls = 6u32.pow(n);
        let mut hits = 0u32;
        for code in 0..rolls {
            let mut c = code;
            let mut count = 0;
            for d in own {
                if *d == b.face || (wild && b.face != 1 && *d == 1) {
                    count += 1;
                }
            }
            for _ in 0..n {
                let d = (c % 6) as u8 + 1;
                c /= 6;
                if d == b.face || (wild && b.face != 1 && d == 1) {
                    count += 1;
                }
            }
            if count >= b.quantity {
                hits += 1;
            }
        }
        f64::from(hits) / f64::from(rolls)
    }

    #[test]
    fn per_die_probabilities() {
        assert_eq!(per_die_match_probability(4, false, None), 1.0 / 6.0);
        assert_eq!(per_die_match_probability(4, true, None), 1.0 / 3.0);
        assert_eq!(per_die_match_probability(1, true, None), 1.0 / 6.0);
        let prior = opponent_face_prior(&[bid(2, 5)], 1.0).unwrap();
        assert!((per_die_match_probability(5, true, Some(&prior)) - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn truth_probability_small3_example() {
        let q = BeliefQuery::new(&[3, 3, 2], 3, bid(3, 3), false);
        let oracle = brute_force(&[3, 3, 2], 3, bid(3, 3), false);
        // 91 of 216 rolls contain at least one three.
        assert_eq!(oracle, 91.0 / 216.0);
        assert!((bid_truth_probability(&q) - oracle).abs() < 1e-12);
        assert!((bid_truth_probability(&q) - 0.42130).abs() < 5e-6);
    }

    #[test]
    fn truth_probability_wild_example() {
        let q = BeliefQuery::new(&[4, 1, 2, 5, 6], 5, bid(4, 4), true);
        assert_eq!(q.own_matches(), 2);
        let oracle = brute_force(&[4, 1, 2, 5, 6], 5, bid(4, 4), true);
        // 4192 of 7776 rolls give two or more fours-or-ones.
        assert_eq!(oracle, 4192.0 / 7776.0);
        assert!((bid_truth_probability(&q) - oracle).abs() < 1e-12);
        assert!((bid_truth_probability(&q) - 0.53909).abs() < 5e-6);
    }

    #[test]
    fn certainty_and_empty_opponent() {
        let q = BeliefQuery::new(&[6, 6, 6, 6, 6], 5, bid(5, 6), false);
        assert_eq!(bid_truth_probability(&q), 1.0);
        let q = BeliefQuery::new(&[2, 2], 0, bid(2, 2), false);
        assert_eq!(enumerate_truth_probability(&q).unwrap(), 1.0);
        let q = BeliefQuery::new(&[2, 2], 0, bid(3, 2), false);
        assert_eq!(enumerate_truth_probability(&q).unwrap(), 0.0);
        assert_eq!(bid_truth_probability(&q), 0.0);
    }

    #[test]
    fn enumeration_rejects_large_hands() {
        let q = BeliefQuery::new(&[], 7, bid(1, 1), false);
        assert_eq!(
            enumerate_truth_probability(&q),
            Err(BeliefError::OracleTooLarge { count: 7 })
        );
    }

    #[test]
    fn enumeration_matches_brute_force_and_closed_form() {
        for n in 0..=4 {
            for face in 1..=6u8 {
                for q in 1..=7 {
                    for wild in [false, true] {
                        let own = [1u8, face, 6];
                        let query = BeliefQuery::new(&own, n, bid(q, face), wild);
                        let oracle = brute_force(&own, n, bid(q, face), wild);
                        let e = enumerate_truth_probability(&query).unwrap();
                        assert!((e - oracle).abs() < 1e-12);
                        assert!((bid_truth_probability(&query) - oracle).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_enumeration_under_a_prior() {
        let prior = opponent_face_prior(&[bid(1, 4), bid(2, 4), bid(3, 2)], 1.5).unwrap();
        for face in 1..=6u8 {
            for q in 1..=6 {
                for wild in [false, true] {
                    let query = BeliefQuery::new(&[4, 2], 4, bid(q, face), wild).with_prior(prior);
                    let a = bid_truth_probability(&query);
                    let b = enumerate_truth_probability(&query).unwrap();
                    assert!((a - b).abs() < 1e-12, "{face} {q} {wild}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn face_prior_pseudo_counts() {
        let p = opponent_face_prior(&[], 1.0).unwrap();
        assert_eq!(p, FacePrior::uniform());
        let p = opponent_face_prior(&[bid(2, 5)], 1.0).unwrap();
        assert!((p.weight(5) - 2.0 / 7.0).abs() < 1e-15);
        assert!((p.weight(3) - 1.0 / 7.0).abs() < 1e-15);
        let p = opponent_face_prior(&[bid(2, 5), bid(3, 5)], 1.0).unwrap();
        assert!((p.weight(5) - 3.0 / 8.0).abs() < 1e-15);
        assert_eq!(p.evidence_count(), 2);
        assert!(opponent_face_prior(&[], 0.0).is_err());
    }

    #[test]
    fn prior_validation() {
        assert!(FacePrior::from_weights([0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert_eq!(
            FacePrior::from_weights([0.5, 0.6, 0.0, 0.0, 0.0, 0.0]),
            Err(BeliefError::InvalidPrior)
        );
        assert!(FacePrior::from_weights([1.5, -0.5, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn pile_on_beta_zero_is_plain_enumeration() {
        let q = BeliefQuery::new(&[4, 4, 1], 5, bid(5, 4), true);
        assert_eq!(
            pile_on_truth_probability(&q, bid(4, 4), 0.0).unwrap(),
            enumerate_truth_probability(&q).unwrap()
        );
        let empty = BeliefQuery::new(&[4, 4], 0, bid(2, 4), true);
        for beta in [0.0, 1.0, 3.0] {
            assert_eq!(pile_on_truth_probability(&empty, bid(1, 4), beta).unwrap(), 1.0);
        }
    }

    #[test]
    fn pile_on_is_monotone_in_beta_for_the_bid_face() {
        for q in 1..=8 {
            let query = BeliefQuery::new(&[4, 2, 6], 5, bid(q, 4), true);
            let mut prev = -1.0;
            for beta in [0.0, 0.5, 1.0, 2.0] {
                let p = pile_on_truth_probability(&query, bid(3, 4), beta).unwrap();
                assert!(p >= prev - 1e-15, "q={q} beta={beta}: {p} < {prev}");
                prev = p;
            }
        }
    }

    #[test]
    fn pile_on_posterior_agrees_with_direct_enumeration() {
        let own = [4u8, 2, 6];
        let post = PileOnPosterior::new(5, true, None, bid(3, 4), 1.0).unwrap();
        for face in 1..=6u8 {
            for q in 1..=8 {
                let query = BeliefQuery::new(&own, 5, bid(q, face), true);
                let direct = pile_on_truth_probability(&query, bid(3, 4), 1.0).unwrap();
                let via = post.truth_probability(&own, bid(q, face), true);
                assert!((direct - via).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn call_distribution_when_bid_is_certain() {
        // Calling 5x6 while holding five sixes loses whatever the bidder rolled.
        let state = MatchState::from_parts(
            Variant::OneCallWild1,
            4,
            [vec![1, 2, 3, 4, 5], vec![6, 6, 6, 6, 6]],
            vec![BidRecord { seat: 0, bid: bid(5, 6) }],
            false,
            1,
            0,
        )
        .unwrap();
        let obs = [state.render_observation(1)];
        let h = AgentHistory { seed: 4, observations: &obs };
        let dist = next_observation_distribution(&h, Action::Call, Variant::OneCallWild1).unwrap();
        assert_eq!(dist, vec![(NextObservation::Terminal { reward: 0.0 }, 1.0)]);
    }

    #[test]
    fn call_distribution_matches_truth_probability() {
        let state = new_match(Variant::OneCallWild1, 130_003);
        let mut state = state;
        state.apply_action(Action::bid(4, 5)).unwrap();
        let obs = [state.render_observation(1)];
        let h = AgentHistory { seed: 130_003, observations: &obs };
        let dist = next_observation_distribution(&h, Action::Call, Variant::OneCallWild1).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let lose = dist
            .iter()
            .find(|(c, _)| *c == NextObservation::Terminal { reward: 0.0 })
            .map_or(0.0, |(_, p)| *p);
        let p_true = bid_truth_probability(&BeliefQuery::from_observation(&obs[0], bid(4, 5)));
        assert!((lose - p_true).abs() < 1e-9);
    }

    #[test]
    fn bid_distribution_is_a_point_mass() {
        let state = new_match(Variant::Small3, 120_001);
        let obs = [state.render_observation(0)];
        let h = AgentHistory { seed: 120_001, observations: &obs };
        let dist = next_observation_distribution(&h, Action::bid(2, 3), Variant::Small3).unwrap();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0].1, 1.0);
    }

    #[test]
    fn small3_call_splits_into_new_rounds() {
        let mut state = new_match(Variant::Small3, 120_002);
        state.apply_action(Action::bid(2, 4)).unwrap();
        let obs = [state.render_observation(1)];
        let h = AgentHistory { seed: 120_002, observations: &obs };
        let dist = next_observation_distribution(&h, Action::Call, Variant::Small3).unwrap();
        assert_eq!(dist.len(), 2);
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (class, _) in &dist {
            match class {
                NextObservation::Observe(o) => assert_eq!(o.round_index, 1),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn inconsistent_histories_are_rejected() {
        let state = new_match(Variant::Small3, 5);
        let mut obs = state.render_observation(0);
        obs.own_dice.pop();
        let list = [obs];
        let h = AgentHistory { seed: 5, observations: &list };
        assert!(matches!(
            next_observation_distribution(&h, Action::bid(1, 2), Variant::Small3),
            Err(BeliefError::InvalidHistory(_))
        ));
        let h = AgentHistory { seed: 5, observations: &[] };
        assert!(next_observation_distribution(&h, Action::Call, Variant::Small3).is_err());
        let waiting = [state.render_observation(1)];
        let h = AgentHistory { seed: 5, observations: &waiting };
        assert!(next_observation_distribution(&h, Action::bid(1, 2), Variant::Small3).is_err());
    }
}
