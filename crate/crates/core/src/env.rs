//! Two-seat Liar's Dice with seeded dice.
//!
//! Two variants are supported. `Small3` gives each seat three dice, ones are
//! plain faces, and every challenge costs the loser a die before all remaining
//! dice are re-rolled. `OneCallWild1` gives each seat five dice, ones count
//! toward any other face until somebody bids face 1, and the first call ends
//! the match.
//!
//! Dice belong to seats, not players: the faces in seat `s`, round `r` are a
//! pure function of `(variant, seed, r, s, die index)` (see [`crate::rng`]).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng;

/// Number of seats at the table.
pub const SEATS: usize = 2;

/// Index of a seat, `0` or `1`.
pub type Seat = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("match is already over")]
    TerminalState,
    #[error("illegal action {0}")]
    IllegalAction(Action),
    #[error("no bid to challenge")]
    NothingToChallenge,
    #[error("invalid state: {0}")]
    InvalidState(&'static str),
    #[error("cannot parse action from {0:?}")]
    ParseAction(String),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Small3,
    OneCallWild1,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Small3, Variant::OneCallWild1];

    pub const fn dice_per_player(self) -> u32 {
        match self {
            Variant::Small3 => 3,
            Variant::OneCallWild1 => 5,
        }
    }

    pub const fn ones_wild_initially(self) -> bool {
        matches!(self, Variant::OneCallWild1)
    }

    pub const fn single_call_ends_match(self) -> bool {
        matches!(self, Variant::OneCallWild1)
    }

    pub const fn die_loss_on_challenge(self) -> bool {
        matches!(self, Variant::Small3)
    }

    /// Display name used in rendered observations.
    pub const fn name(self) -> &'static str {
        match self {
            Variant::Small3 => "Small3",
            Variant::OneCallWild1 => "OneCall-Wild1",
        }
    }

    /// Short task key used on the command line and in file names.
    pub const fn task_key(self) -> &'static str {
        match self {
            Variant::Small3 => "small3",
            Variant::OneCallWild1 => "onecall",
        }
    }

    pub(crate) const fn stream_tag(self) -> u64 {
        match self {
            Variant::Small3 => 3,
            Variant::OneCallWild1 => 51,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "small3" => Ok(Variant::Small3),
            "onecall" | "onecallwild1" => Ok(Variant::OneCallWild1),
            _ => Err(EnvError::UnknownVariant(s.into())),
        }
    }
}

/// A claim that at least `quantity` dice on the table show `face`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bid {
    pub quantity: u32,
    pub face: u8,
}

impl Bid {
    pub fn new(quantity: u32, face: u8) -> Result<Self, EnvError> {
        if quantity == 0 || !(1..=6).contains(&face) {
            return Err(EnvError::InvalidState("bid needs quantity >= 1 and face 1..6"));
        }
        Ok(Bid { quantity, face })
    }

    /// Strict raise order: more dice, or as many dice on a higher face.
    pub fn outranks(&self, other: &Bid) -> bool {
        (self.quantity, self.face) > (other.quantity, other.face)
    }
}

impl fmt::Display for Bid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.quantity, self.face)
    }
}

impl FromStr for Bid {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || EnvError::ParseAction(s.into());
        let (q, f) = s.trim().split_once(['x', 'X']).ok_or_else(err)?;
        let quantity = q.trim().parse().map_err(|_| err())?;
        let face = f.trim().parse().map_err(|_| err())?;
        Bid::new(quantity, face).map_err(|_| err())
    }
}

/// Agent move. On the wire: `[Bid] <q>x<f>` or `[Call]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Bid(Bid),
    Call,
}

impl Action {
    pub fn bid(quantity: u32, face: u8) -> Action {
        Action::Bid(Bid { quantity, face })
    }

    pub fn as_bid(&self) -> Option<Bid> {
        match self {
            Action::Bid(b) => Some(*b),
            Action::Call => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Bid(b) => write!(f, "[Bid] {b}"),
            Action::Call => f.write_str("[Call]"),
        }
    }
}

impl FromStr for Action {
    type Err = EnvError;

    /// Strict wire grammar; model output goes through the harness parser instead.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t == "[Call]" {
            return Ok(Action::Call);
        }
        match t.strip_prefix("[Bid]") {
            Some(rest) if rest.starts_with(' ') => rest
                .parse::<Bid>()
                .map(Action::Bid)
                .map_err(|_| EnvError::ParseAction(s.into())),
            _ => Err(EnvError::ParseAction(s.into())),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BidRecord {
    pub seat: Seat,
    pub bid: Bid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeResult {
    pub bid: Bid,
    pub bidder: Seat,
    pub caller: Seat,
    /// Dice on the table that satisfy the bid.
    pub count: u32,
    pub bid_true: bool,
    pub wild_applied: bool,
    pub winner: Seat,
    pub loser: Seat,
    pub revealed: [Vec<u8>; SEATS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Seat(Seat),
    Draw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeReason {
    ChallengeResolved,
    DiceExhausted,
    /// A seat could not produce a legal action; the other seat is awarded the game.
    Forfeit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub winner: Winner,
    pub terminal_reward_per_seat: [f64; SEATS],
    pub reason: OutcomeReason,
}

impl Outcome {
    pub fn win(seat: Seat, reason: OutcomeReason) -> Outcome {
        let mut rewards = [0.0; SEATS];
        rewards[seat] = 1.0;
        Outcome {
            winner: Winner::Seat(seat),
            terminal_reward_per_seat: rewards,
            reason,
        }
    }

    pub fn draw(reason: OutcomeReason) -> Outcome {
        Outcome {
            winner: Winner::Draw,
            terminal_reward_per_seat: [0.5; SEATS],
            reason,
        }
    }

    pub fn reward(&self, seat: Seat) -> f64 {
        self.terminal_reward_per_seat[seat]
    }
}

/// Dice among `dice` that count toward `face`. With `wild` on, a rolled 1
/// counts toward every other face.
pub fn count_matches(dice: &[u8], face: u8, wild: bool) -> u32 {
    dice.iter()
        .filter(|&&d| d == face || (wild && d == 1 && face != 1))
        .count() as u32
}

/// Raises available after `current` with `total_dice` on the table, in
/// ascending raise order. With no current bid every opening bid is listed.
pub fn legal_bids(current: Option<Bid>, total_dice: u32) -> impl Iterator<Item = Bid> {
    (1..=total_dice)
        .flat_map(|q| (1..=6u8).map(move |f| Bid { quantity: q, face: f }))
        .filter(move |b| current.is_none_or(|c| b.outranks(&c)))
}

/// Full legal set from public information, `Call` first when available.
pub fn legal_actions_for(current: Option<Bid>, total_dice: u32) -> Vec<Action> {
    let mut out = Vec::new();
    if current.is_some() {
        out.push(Action::Call);
    }
    out.extend(legal_bids(current, total_dice).map(Action::Bid));
    out
}

pub(crate) fn action_is_legal(current: Option<Bid>, total_dice: u32, action: &Action) -> bool {
    match action {
        Action::Call => current.is_some(),
        Action::Bid(b) => {
            b.quantity >= 1
                && b.quantity <= total_dice
                && (1..=6).contains(&b.face)
                && current.is_none_or(|c| b.outranks(&c))
        }
    }
}

fn roll(variant: Variant, seed: u64, round: u32, seat: Seat, count: u32) -> Vec<u8> {
    let mut dice: Vec<u8> = (0..count as usize)
        .map(|i| rng::die_face(variant.stream_tag(), seed, round, seat, i))
        .collect();
    dice.sort_unstable();
    dice
}

/// Complete simulator state, including both seats' hidden dice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchState {
    variant: Variant,
    seed: u64,
    seat_dice: [Vec<u8>; SEATS],
    bid_history: Vec<BidRecord>,
    wild_active: bool,
    turn: Seat,
    dice_remaining: [u32; SEATS],
    round_index: u32,
    last_challenge: Option<ChallengeResult>,
    finished: Option<OutcomeKey>,
}

// Outcome carries f64 rewards, so the state keeps a comparable key instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct OutcomeKey {
    winner: Seat,
    reason: OutcomeReason,
}

/// Start a match. Seat 0 opens the first round.
pub fn new_match(variant: Variant, seed: u64) -> MatchState {
    let n = variant.dice_per_player();
    MatchState {
        variant,
        seed,
        seat_dice: [roll(variant, seed, 0, 0, n), roll(variant, seed, 0, 1, n)],
        bid_history: Vec::new(),
        wild_active: variant.ones_wild_initially(),
        turn: 0,
        dice_remaining: [n, n],
        round_index: 0,
        last_challenge: None,
        finished: None,
    }
}

impl MatchState {
    /// Assemble a mid-match state from explicit parts, checking invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        variant: Variant,
        seed: u64,
        seat_dice: [Vec<u8>; SEATS],
        bid_history: Vec<BidRecord>,
        wild_active: bool,
        turn: Seat,
        round_index: u32,
    ) -> Result<MatchState, EnvError> {
        if turn >= SEATS {
            return Err(EnvError::InvalidState("turn out of range"));
        }
        if seat_dice.iter().flatten().any(|d| !(1..=6).contains(d)) {
            return Err(EnvError::InvalidState("die face outside 1..6"));
        }
        let max = variant.dice_per_player() as usize;
        if seat_dice.iter().any(|d| d.len() > max) {
            return Err(EnvError::InvalidState("too many dice for variant"));
        }
        if wild_active && !variant.ones_wild_initially() {
            return Err(EnvError::InvalidState("wild ones in a variant without wilds"));
        }
        if wild_active && bid_history.iter().any(|r| r.bid.face == 1) {
            return Err(EnvError::InvalidState("wild still active after a face-1 bid"));
        }
        let total: u32 = seat_dice.iter().map(|d| d.len() as u32).sum();
        for pair in bid_history.windows(2) {
            if !pair[1].bid.outranks(&pair[0].bid) || pair[1].seat == pair[0].seat {
                return Err(EnvError::InvalidState("bid history is not a valid raise sequence"));
            }
        }
        if let Some(last) = bid_history.last() {
            if last.seat == turn {
                return Err(EnvError::InvalidState("seat to move placed the last bid"));
            }
        }
        if bid_history
            .iter()
            .any(|r| r.seat >= SEATS || !action_is_legal(None, total, &Action::Bid(r.bid)))
        {
            return Err(EnvError::InvalidState("bid outside the table"));
        }
        let dice_remaining = [seat_dice[0].len() as u32, seat_dice[1].len() as u32];
        if dice_remaining.contains(&0) {
            return Err(EnvError::InvalidState("seat without dice in a live match"));
        }
        Ok(MatchState {
            variant,
            seed,
            seat_dice,
            bid_history,
            wild_active,
            turn,
            dice_remaining,
            round_index,
            last_challenge: None,
            finished: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn seat_dice(&self, seat: Seat) -> &[u8] {
        &self.seat_dice[seat]
    }

    pub fn bid_history(&self) -> &[BidRecord] {
        &self.bid_history
    }

    pub fn wild_active(&self) -> bool {
        self.wild_active
    }

    pub fn turn(&self) -> Seat {
        self.turn
    }

    pub fn dice_remaining(&self) -> [u32; SEATS] {
        self.dice_remaining
    }

    pub fn round_index(&self) -> u32 {
        self.round_index
    }

    pub fn last_challenge(&self) -> Option<&ChallengeResult> {
        self.last_challenge.as_ref()
    }

    pub fn current_bid(&self) -> Option<Bid> {
        self.bid_history.last().map(|r| r.bid)
    }

    pub fn total_dice(&self) -> u32 {
        self.dice_remaining.iter().sum()
    }

    pub fn is_terminal(&self) -> bool {
        self.finished.is_some()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.finished.map(|k| Outcome::win(k.winner, k.reason))
    }

    pub fn legal_actions(&self) -> Result<Vec<Action>, EnvError> {
        if self.is_terminal() {
            return Err(EnvError::TerminalState);
        }
        Ok(legal_actions_for(self.current_bid(), self.total_dice()))
    }

    pub fn is_legal(&self, action: &Action) -> bool {
        !self.is_terminal() && action_is_legal(self.current_bid(), self.total_dice(), action)
    }

    /// Count the table against the standing bid, as if the seat to move called.
    pub fn resolve_challenge(&self) -> Result<ChallengeResult, EnvError> {
        let last = *self.bid_history.last().ok_or(EnvError::NothingToChallenge)?;
        let wild = self.wild_active && last.bid.face != 1;
        let count = self
            .seat_dice
            .iter()
            .map(|d| count_matches(d, last.bid.face, wild))
            .sum::<u32>();
        let bid_true = count >= last.bid.quantity;
        let bidder = last.seat;
        let caller = 1 - bidder;
        let (winner, loser) = if bid_true { (bidder, caller) } else { (caller, bidder) };
        Ok(ChallengeResult {
            bid: last.bid,
            bidder,
            caller,
            count,
            bid_true,
            wild_applied: wild,
            winner,
            loser,
            revealed: self.seat_dice.clone(),
        })
    }

    /// Advance by one move. Returns the outcome when the move ends the match.
    pub fn apply_action(&mut self, action: Action) -> Result<Option<Outcome>, EnvError> {
        if self.is_terminal() {
            return Err(EnvError::TerminalState);
        }
        if !self.is_legal(&action) {
            return Err(EnvError::IllegalAction(action));
        }
        match action {
            Action::Bid(bid) => {
                self.bid_history.push(BidRecord { seat: self.turn, bid });
                if self.variant.ones_wild_initially() && bid.face == 1 {
                    self.wild_active = false;
                }
                self.turn = 1 - self.turn;
                Ok(None)
            }
            Action::Call => {
                let result = self.resolve_challenge()?;
                let (winner, loser) = (result.winner, result.loser);
                self.last_challenge = Some(result);
                if self.variant.single_call_ends_match() {
                    self.finished = Some(OutcomeKey {
                        winner,
                        reason: OutcomeReason::ChallengeResolved,
                    });
                    return Ok(self.outcome());
                }
                self.dice_remaining[loser] -= 1;
                self.round_index += 1;
                for seat in 0..SEATS {
                    self.seat_dice[seat] = roll(
                        self.variant,
                        self.seed,
                        self.round_index,
                        seat,
                        self.dice_remaining[seat],
                    );
                }
                self.bid_history.clear();
                self.turn = loser;
                if self.dice_remaining[loser] == 0 {
                    self.finished = Some(OutcomeKey {
                        winner,
                        reason: OutcomeReason::DiceExhausted,
                    });
                    return Ok(self.outcome());
                }
                Ok(None)
            }
        }
    }

    /// Award the match to `winner` because the other seat failed to act.
    pub fn forfeit(&mut self, winner: Seat) -> Outcome {
        self.finished = Some(OutcomeKey {
            winner,
            reason: OutcomeReason::Forfeit,
        });
        Outcome::win(winner, OutcomeReason::Forfeit)
    }

    pub fn render_observation(&self, seat: Seat) -> Observation {
        Observation::new(
            self.variant,
            seat,
            self.seat_dice[seat].clone(),
            self.bid_history.clone(),
            self.dice_remaining,
            self.wild_active,
            self.turn,
            self.round_index,
        )
    }
}

/// What one seat is allowed to see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub variant: Variant,
    pub seat: Seat,
    pub own_dice: Vec<u8>,
    pub bid_history: Vec<BidRecord>,
    pub dice_remaining: [u32; SEATS],
    pub wild_active: bool,
    pub turn: Seat,
    pub round_index: u32,
    pub rendered_text: String,
}

impl Observation {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: Variant,
        seat: Seat,
        own_dice: Vec<u8>,
        bid_history: Vec<BidRecord>,
        dice_remaining: [u32; SEATS],
        wild_active: bool,
        turn: Seat,
        round_index: u32,
    ) -> Observation {
        let mut obs = Observation {
            variant,
            seat,
            own_dice,
            bid_history,
            dice_remaining,
            wild_active,
            turn,
            round_index,
            rendered_text: String::new(),
        };
        obs.rendered_text = obs.render_text();
        obs
    }

    fn render_text(&self) -> String {
        let dice: Vec<String> = self.own_dice.iter().map(|d| format!("{d}")).collect();
        let mut text = format!(
            "VARIANT {}\nYOUR DICE: {}\nDICE REMAINING: you={} opp={}\nWILD: {}\n",
            self.variant.name(),
            dice.join(" "),
            self.dice_remaining[self.seat],
            self.dice_remaining[1 - self.seat],
            if self.wild_active { "on" } else { "off" },
        );
        for r in &self.bid_history {
            text.push_str(&format!("BID seat={} {}\n", r.seat, r.bid));
        }
        text.push_str(if self.turn == self.seat {
            "YOUR TURN"
        } else {
            "OPPONENT TURN"
        });
        text
    }

    pub fn current_bid(&self) -> Option<Bid> {
        self.bid_history.last().map(|r| r.bid)
    }

    pub fn opponent_dice_count(&self) -> u32 {
        self.dice_remaining[1 - self.seat]
    }

    pub fn total_dice(&self) -> u32 {
        self.dice_remaining.iter().sum()
    }

    pub fn is_my_turn(&self) -> bool {
        self.turn == self.seat
    }

    pub fn legal_actions(&self) -> Vec<Action> {
        legal_actions_for(self.current_bid(), self.total_dice())
    }

    pub fn legal_raises(&self) -> impl Iterator<Item = Bid> {
        legal_bids(self.current_bid(), self.total_dice())
    }

    pub fn is_legal(&self, action: &Action) -> bool {
        action_is_legal(self.current_bid(), self.total_dice(), action)
    }

    /// Bids placed by the other seat in the current round.
    pub fn opponent_bids(&self) -> impl Iterator<Item = Bid> + '_ {
        self.bid_history
            .iter()
            .filter(move |r| r.seat != self.seat)
            .map(|r| r.bid)
    }

    /// Wild rule that applies to a bid on `face` right now.
    pub fn wild_for(&self, face: u8) -> bool {
        self.wild_active && face != 1
    }
}
