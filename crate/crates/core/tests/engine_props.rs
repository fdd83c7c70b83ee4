use proptest::prelude::*;

use gorilla_harness::checkers::{check_agreement, check_threshold};
use gorilla_harness::config::StrategySpec;
use gorilla_harness::engine::{check_legality, run};
use gorilla_harness::env::{CorrectSpec, Environment};
use gorilla_harness::message::{GorillaMessage, ProtoMsg, SandglassMessage};
use gorilla_harness::trace::{Model, Trace};
use gorilla_harness::types::{Hash32, NodeId, Value};

fn env(k: u32, n: u32, cap: u32, steps: u64) -> Environment {
    Environment {
        k,
        n,
        correct: (0..n - cap)
            .map(|i| CorrectSpec::always(i, Value::from_bit(u64::from(i))))
            .collect(),
        capacity: Vec::new(),
        capacity_default: cap,
        max_steps: steps,
    }
}

fn strategy() -> impl Strategy<Value = StrategySpec> {
    prop_oneof![
        Just(StrategySpec::named("fuzzer")),
        Just(StrategySpec::named("split_vdf")),
        Just(StrategySpec::named("withhold_release")),
        Just(StrategySpec::named("equivocate_nonce")),
    ]
}

fn ids() -> impl Strategy<Value = Vec<Hash32>> {
    prop::collection::btree_set(any::<[u8; 32]>(), 0..5).prop_map(|s| s.into_iter().map(Hash32).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gm_runs_are_legal_and_safe(seed in 0u64..10_000, spec in strategy(), n in 3u32..6) {
        let cap = (n - 1) / 2;
        let t = run(&env(2, n, cap, 25), &spec, seed, Model::Gm).unwrap();
        prop_assert!(check_legality(&t).is_clean());
        prop_assert!(!check_agreement(&t).is_violated());
        prop_assert!(!check_threshold(&t).is_violated());
    }

    #[test]
    fn traces_round_trip_and_rerun_identically(seed in 0u64..10_000, model in prop_oneof![Just(Model::Gm), Just(Model::GmPlus), Just(Model::SmPlus)]) {
        let k = if model == Model::SmPlus { 1 } else { 2 };
        let e = env(k, 3, 1, 15);
        let spec = StrategySpec::named("fuzzer");
        let t = run(&e, &spec, seed, model).unwrap();
        let text = t.to_text();
        prop_assert_eq!(Trace::parse(&text).unwrap().to_text(), text.clone());
        prop_assert_eq!(run(&e, &spec, seed, model).unwrap().to_text(), text);
    }
}

proptest! {
    #[test]
    fn gorilla_message_encoding_is_invertible(round in 1u64..50, b: bool, p in 0u64..9, uc in 0u64..99, coffer in ids(), nonce: Vec<u8>, vdf: u64) {
        let m = GorillaMessage::new(round, Value::from_bit(u64::from(b)), p, uc, coffer, nonce, vdf);
        let bytes = m.encode();
        let back = GorillaMessage::decode(&bytes).unwrap();
        prop_assert_eq!(back.id(), m.id());
        prop_assert_eq!(back, m);
    }

    #[test]
    fn sandglass_message_encoding_is_invertible(byz: bool, who in 0u32..9, uid in 1u64..99, round in 1u64..50, p in 0u64..9, uc in 0u64..99, coffer in ids()) {
        let sender = if byz { NodeId::Byz(who) } else { NodeId::Correct(who) };
        let m = SandglassMessage::new(sender, uid, round, Value::A, p, uc, coffer);
        prop_assert_eq!(SandglassMessage::decode(&m.encode()).unwrap(), m);
    }

    #[test]
    fn decoders_reject_or_reencode_exactly(bytes: Vec<u8>) {
        if let Ok(m) = GorillaMessage::decode(&bytes) {
            prop_assert_eq!(m.encode(), bytes.clone());
        }
        if let Ok(m) = SandglassMessage::decode(&bytes) {
            prop_assert_eq!(m.encode(), bytes);
        }
    }
}
