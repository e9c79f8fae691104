use alloc::string::String;
use alloc::vec::Vec;

use crate::env::{Action, Bid, BidRecord, Observation, Seat, Variant};

/// Placeholders filled by the observation parser.
pub(super) const PLACEHOLDERS: [&str; 7] = [
    "observation",
    "variant",
    "own_dice",
    "current_bid",
    "dice_remaining",
    "wild",
    "legal_actions",
];

/// Fields recovered from an observation's rendered text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedObservation {
    pub variant: Variant,
    pub own_dice: Vec<u8>,
    pub own_remaining: u32,
    pub opponent_remaining: u32,
    pub wild_active: bool,
    pub bids: Vec<BidRecord>,
    pub my_turn: bool,
}

impl ParsedObservation {
    pub fn parse(text: &str) -> Option<ParsedObservation> {
        let mut lines = text.lines();
        let variant = lines.next()?.strip_prefix("VARIANT ")?.parse().ok()?;
        let own_dice = lines
            .next()?
            .strip_prefix("YOUR DICE:")?
            .split_whitespace()
            .map(|d| d.parse::<u8>().ok().filter(|f| (1..=6).contains(f)))
            .collect::<Option<Vec<_>>>()?;
        let (you, opp) = lines
            .next()?
            .strip_prefix("DICE REMAINING: you=")?
            .split_once(" opp=")?;
        let own_remaining = you.parse().ok()?;
        let opponent_remaining = opp.parse().ok()?;
        let wild_active = match lines.next()?.strip_prefix("WILD: ")? {
            "on" => true,
            "off" => false,
            _ => return None,
        };
        let mut bids = Vec::new();
        let mut my_turn = None;
        for line in lines {
            if let Some(rest) = line.strip_prefix("BID seat=") {
                let (seat, bid) = rest.split_once(' ')?;
                let seat: Seat = seat.parse().ok()?;
                bids.push(BidRecord { seat, bid: bid.parse().ok()? });
            } else {
                my_turn = match line {
                    "YOUR TURN" => Some(true),
                    "OPPONENT TURN" => Some(false),
                    _ => return None,
                };
            }
        }
        Some(ParsedObservation {
            variant,
            own_dice,
            own_remaining,
            opponent_remaining,
            wild_active,
            bids,
            my_turn: my_turn?,
        })
    }

    pub fn agrees_with(&self, obs: &Observation) -> bool {
        self.variant == obs.variant
            && self.own_dice == obs.own_dice
            && self.own_remaining == obs.dice_remaining[obs.seat]
            && self.opponent_remaining == obs.opponent_dice_count()
            && self.wild_active == obs.wild_active
            && self.bids == obs.bid_history
            && self.my_turn == obs.is_my_turn()
    }
}

fn parse_bid_after(text: &str) -> Option<Bid> {
    let t = text.trim_start();
    let digits = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let quantity = t[..digits].parse().ok()?;
    let t = t[digits..].trim_start();
    let t = t
        .strip_prefix(['x', 'X', '*'])
        .or_else(|| t.strip_prefix('×'))?
        .trim_start();
    let face = t.chars().next()?.to_digit(10)? as u8;
    Bid::new(quantity, face).ok()
}

/// Pull the last well-formed move out of free-form model output.
///
/// Tokens are matched case-insensitively; a `[Bid]` token whose quantity/face
/// cannot be read is skipped in favour of an earlier move.
pub fn parse_model_action(text: &str) -> Option<Action> {
    let lower: String = text.to_ascii_lowercase();
    let mut found: Option<(usize, Action)> = None;
    let mut consider = |pos: usize, action: Action| {
        if found.is_none_or(|(p, _)| pos > p) {
            found = Some((pos, action));
        }
    };
    for (pos, _) in lower.match_indices("[call]") {
        consider(pos, Action::Call);
    }
    for (pos, m) in lower.match_indices("[bid]") {
        if let Some(bid) = parse_bid_after(&text[pos + m.len()..]) {
            consider(pos, Action::Bid(bid));
        }
    }
    found.map(|(_, a)| a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::new_match;

    #[test]
    fn rendered_text_parses_back() {
        let mut s = new_match(Variant::OneCallWild1, 3);
        s.apply_action(Action::bid(2, 3)).unwrap();
        for seat in 0..2 {
            let obs = s.render_observation(seat);
            let parsed = ParsedObservation::parse(&obs.rendered_text).unwrap();
            assert!(parsed.agrees_with(&obs));
        }
        assert!(ParsedObservation::parse("VARIANT Chess\n").is_none());
    }

    #[test]
    fn model_output_parsing() {
        assert_eq!(parse_model_action("I think [Call]"), Some(Action::Call));
        assert_eq!(parse_model_action("[Bid] 2x3"), Some(Action::bid(2, 3)));
        assert_eq!(parse_model_action("maybe [bid] 4 x 5."), Some(Action::bid(4, 5)));
        assert_eq!(parse_model_action("[Call] no wait, [Bid] 3X6"), Some(Action::bid(3, 6)));
        assert_eq!(parse_model_action("[Bid] 3x6 ... actually [Call]"), Some(Action::Call));
        assert_eq!(parse_model_action("[Bid] 3x9"), None);
        assert_eq!(parse_model_action("[Bid] 2x4 then [Bid] lots"), Some(Action::bid(2, 4)));
        assert_eq!(parse_model_action("bid three fours"), None);
        assert_eq!(parse_model_action(""), None);
    }
}
