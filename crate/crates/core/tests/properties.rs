use harnevo_core::analytics::*;
use harnevo_core::belief::{bid_truth_probability, enumerate_truth_probability, BeliefQuery};
use harnevo_core::env::{legal_actions_for, new_match, Bid, MatchState, Winner};
use harnevo_core::eval::{run_paired_seed, SeedRegistry, SeedSet};
use harnevo_core::gateway::{GatewayError, ModelGateway, ModelRequest, RequestRecord, ScriptedGateway, ScriptedModelSpec};
use harnevo_core::harness::{reference, DecisionSlot, HarnessError};
use harnevo_core::play::{naive_action, play_match, AgentSpec};
use harnevo_core::trajectory::Trajectory;
use harnevo_core::{decide, Action, Variant};
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Small3), Just(Variant::OneCallWild1)]
}

/// Walk a match forward with naive moves chosen from `picks`.
fn walk(variant: Variant, seed: u64, picks: &[u64]) -> MatchState {
    let mut s = new_match(variant, seed);
    for &p in picks {
        if s.is_terminal() {
            break;
        }
        let obs = s.render_observation(s.turn());
        s.apply_action(naive_action(&obs, seed ^ p)).unwrap();
    }
    s
}

/// Replies drawn from a pool of well-formed, illegal and garbage outputs.
struct Adversary {
    replies: Vec<String>,
    fail_every: usize,
    n: usize,
}

impl ModelGateway for Adversary {
    fn complete(&mut self, _r: &ModelRequest) -> Result<String, GatewayError> {
        self.n += 1;
        if self.fail_every > 0 && self.n % self.fail_every == 0 {
            return Err(GatewayError::ModelTimeout);
        }
        Ok(self.replies[self.n % self.replies.len()].clone())
    }
}

fn reply() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("[Call]".to_string()),
        (0u32..12, 0u8..9).prop_map(|(q, f)| format!("[Bid] {q}x{f}")),
        "[ -~]{0,24}",
        (1u32..7, 1u8..7).prop_map(|(q, f)| format!("thinking... [bid] {q} X {f} done")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn legal_set_is_exactly_the_accepted_moves(v in variant(), seed in any::<u64>(), picks in prop::collection::vec(any::<u64>(), 0..8)) {
        let s = walk(v, seed, &picks);
        prop_assume!(!s.is_terminal());
        let legal = s.legal_actions().unwrap();
        let total = s.total_dice();
        for q in 1..=total + 1 {
            for f in 1..=6u8 {
                let a = Action::bid(q, f);
                let mut probe = s.clone();
                let accepted = probe.apply_action(a).is_ok();
                prop_assert_eq!(accepted, legal.contains(&a), "{}", a);
            }
        }
        let mut probe = s.clone();
        prop_assert_eq!(probe.apply_action(Action::Call).is_ok(), legal.contains(&Action::Call));
        prop_assert_eq!(&legal, &legal_actions_for(s.current_bid(), total));
    }

    #[test]
    fn matches_replay_identically(v in variant(), seed in any::<u64>()) {
        let mut g1 = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
        let mut g2 = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
        let a = AgentSpec::Harness(reference::case_c());
        let r1 = play_match(v, seed, [&a, &AgentSpec::Naive], &mut g1, "x");
        let r2 = play_match(v, seed, [&a, &AgentSpec::Naive], &mut g2, "x");
        prop_assert_eq!(&r1, &r2);
        let (m1, m2) = (new_match(v, seed), new_match(v, seed));
        prop_assert_eq!(m1.seat_dice(1), m2.seat_dice(1));
    }

    #[test]
    fn rewards_are_conserved(v in variant(), seed in any::<u64>()) {
        let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
        let r = play_match(v, seed, [&AgentSpec::Naive, &AgentSpec::Naive], &mut g, "x");
        prop_assert_eq!(r.reward(0) + r.reward(1), 1.0);
        for seat in 0..2 {
            prop_assert!([0.0, 0.5, 1.0].contains(&r.reward(seat)));
        }
        if let Winner::Seat(w) = r.outcome.winner {
            prop_assert_eq!(r.reward(w), 1.0);
        }
    }

    #[test]
    fn decisions_are_legal_under_any_model_output(
        v in variant(),
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<u64>(), 0..6),
        replies in prop::collection::vec(reply(), 1..6),
        fail_every in 0usize..4,
        which in 0usize..4,
    ) {
        let s = walk(v, seed, &picks);
        prop_assume!(!s.is_terminal());
        let obs = s.render_observation(s.turn());
        let desc = &reference::all()[which];
        let mut g = Adversary { replies, fail_every, n: 0 };
        let slot = DecisionSlot { rollout_id: "p", decision_index: 0, model_name: "m" };
        match decide(desc, &obs, &mut g, &slot) {
            Ok(d) => prop_assert!(obs.is_legal(&d.action)),
            Err(e) => prop_assert!(matches!(e, HarnessError::UnrecoverableModelOutput { .. }), "{e}"),
        }
    }

    #[test]
    fn paired_rewards_lie_on_the_quarter_grid(v in variant(), seed in any::<u64>(), which in 0usize..4) {
        let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Bid] 2x6"));
        let t = AgentSpec::Harness(reference::all()[which].clone());
        let r = run_paired_seed(&t, &AgentSpec::Naive, v, seed, &mut g);
        prop_assert!([0.0, 0.25, 0.5, 0.75, 1.0].contains(&r.paired_reward));
        prop_assert_eq!(r.paired_reward, (r.leg_rewards[0] + r.leg_rewards[1]) / 2.0);
    }

    #[test]
    fn identical_agents_split_every_seed(v in variant(), seed in any::<u64>(), which in 0usize..4) {
        let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Bid] 3x5"));
        let t = AgentSpec::Harness(reference::all()[which].clone());
        prop_assert_eq!(run_paired_seed(&t, &t, v, seed, &mut g).paired_reward, 0.5);
        prop_assert_eq!(run_paired_seed(&AgentSpec::Naive, &AgentSpec::Naive, v, seed, &mut g).paired_reward, 0.5);
    }

    #[test]
    fn closed_form_matches_enumeration(
        own in prop::collection::vec(1u8..=6, 0..4),
        n in 0u32..=4,
        q in 1u32..=9,
        f in 1u8..=6,
        wild in any::<bool>(),
    ) {
        let query = BeliefQuery::new(&own, n, Bid { quantity: q, face: f }, wild);
        let exact = enumerate_truth_probability(&query).unwrap();
        prop_assert!((bid_truth_probability(&query) - exact).abs() < 1e-12);
    }

    #[test]
    fn trajectories_round_trip(v in variant(), seed in any::<u64>()) {
        let mut g = ScriptedGateway::new(ScriptedModelSpec::constant("[Call]"));
        let r = play_match(v, seed, [&AgentSpec::Naive, &AgentSpec::Harness(reference::case_b())], &mut g, "rt");
        for t in &r.trajectories {
            let text = t.to_jsonl();
            let back = Trajectory::from_jsonl(&text).unwrap();
            prop_assert_eq!(&back, t);
            prop_assert_eq!(back.to_jsonl(), text);
        }
    }

    #[test]
    fn reach_is_monotone_and_zero_fill_is_bounded(
        rollouts in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 0..8), 1..6),
    ) {
        let series: Vec<RoundSeries> = rollouts
            .iter()
            .enumerate()
            .map(|(i, v)| RoundSeries { episode_id: format!("e{i}"), start_round: 1, values: v.clone(), death_round: None })
            .collect();
        let c = adjusted_curve(&series, 1..=8).unwrap();
        for (i, r) in c.reach.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(r));
            if i > 0 {
                prop_assert!(*r <= c.reach[i - 1]);
            }
            let round = i as u32 + 1;
            let alive: Vec<f64> = series.iter().filter_map(|s| s.value_at(round)).collect();
            if alive.is_empty() {
                prop_assert_eq!(c.values[i], 0.0);
                continue;
            }
            let survivor_mean = alive.iter().sum::<f64>() / alive.len() as f64;
            let max = alive.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!(c.values[i] <= survivor_mean + 1e-9);
            prop_assert!(c.values[i] <= max + 1e-9);
            if *r == 1.0 {
                prop_assert!((c.values[i] - survivor_mean).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn distances_form_a_metric(
        a in prop::collection::vec(-50.0f64..50.0, 6),
        b in prop::collection::vec(-50.0f64..50.0, 6),
        c in prop::collection::vec(-50.0f64..50.0, 6),
    ) {
        let mk = |v: &Vec<f64>| ResourceCurve { start_round: 1, values: v.clone(), reach: vec![1.0; 6], rollouts: 1 };
        let (a, b, c) = (mk(&a), mk(&b), mk(&c));
        let d = |x: &ResourceCurve, y: &ResourceCurve| human_distance(x, y, 4..=6).unwrap();
        prop_assert!(d(&a, &b).overall >= 0.0 && d(&a, &b).late >= 0.0);
        prop_assert!(d(&a, &c).overall <= d(&a, &b).overall + d(&b, &c).overall + 1e-9);
        prop_assert!(d(&a, &c).late <= d(&a, &b).late + d(&b, &c).late + 1e-9);
        prop_assert_eq!(d(&a, &a).overall, 0.0);
    }

    #[test]
    fn smoothing_preserves_constants(v in -10.0f64..10.0, len in 1usize..20, half in 0usize..4) {
        let out = moving_average(&vec![v; len], 2 * half + 1).unwrap();
        prop_assert!(out.iter().all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn granularity_counts_partition(kinds in prop::collection::vec(0usize..4, 1..40)) {
        let g = [Granularity::Persistent, Granularity::Phase, Granularity::State, Granularity::Tool];
        let labels: Vec<EditLabel> = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| EditLabel { edit_id: format!("e{i}"), granularity: g[k], arm: EvidenceArm::Notes })
            .collect();
        let r = comp_rate(&labels, EvidenceArm::Notes).unwrap();
        prop_assert_eq!(r.counts.total(), labels.len());
        prop_assert_eq!(r.total, labels.len());
        let comp = kinds.iter().filter(|&&k| k >= 2).count();
        prop_assert_eq!(r.rate, comp as f64 / labels.len() as f64);
    }

    #[test]
    fn hook_audit_ignores_record_order(prompts in prop::collection::vec("[a-c ]{0,12}", 0..12), rot in 0usize..12) {
        let records: Vec<RequestRecord> = prompts
            .iter()
            .map(|p| RequestRecord { request_id: "r".into(), decision_index: 0, prompt_text: p.clone(), response_text: None, error: None, latency_ms: 0 })
            .collect();
        let mut shuffled = records.clone();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        shuffled.reverse();
        let expected = vec!["ab".to_string(), "c c".to_string()];
        prop_assert_eq!(audit_hook_strings(&records, &expected).unwrap(), audit_hook_strings(&shuffled, &expected).unwrap());
    }
}

#[test]
fn held_out_sets_never_match_development_sets() {
    let r = SeedRegistry::standard(10).unwrap();
    for v in Variant::ALL {
        let dev = SeedSet::development(v, 10).unwrap();
        assert!(r.development_only(&dev).is_ok());
        assert!(r.development_only(&SeedSet::held_out(v)).is_err());
    }
}
