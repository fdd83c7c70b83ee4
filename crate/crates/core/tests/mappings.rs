mod common;

use std::collections::BTreeMap;

use common::faults::{catalog, figure1, preset_trace, rejected_inputs};
use gorilla_harness::adversary::Figure1Script;
use gorilla_harness::error::MappingError;
use gorilla_harness::mappings::*;
use gorilla_harness::trace::{EventKind, Model};

#[test]
fn figure1_needs_peek() {
    match reorg_with(&figure1(), ReorgMode::NoPeek) {
        Err(MappingError::ShellExhaustion(why)) => assert!(why.contains("by step 3"), "{why}"),
        other => panic!("expected shell exhaustion, got {other:?}"),
    }
}

#[test]
fn figure1_shell_layout() {
    let t = figure1();
    let (gp, asg) = reorg(&t).unwrap();
    // label by (first, last) unit tick
    let label: BTreeMap<(u64, u64), usize> = BTreeMap::from([
        ((0, 6), 1),
        ((4, 6), 2),
        ((2, 6), 3),
        ((7, 9), 4),
        ((7, 10), 5),
        ((7, 11), 6),
    ]);
    let mut got = BTreeMap::new();
    for (d, span) in &asg.spans {
        got.insert(label[&(span.first, span.last)], (*d, asg.shells[d]));
    }
    assert_eq!(got.len(), 6);
    let script = Figure1Script::new();
    for i in 1..=3 {
        assert_eq!(got[&i].0, script.input(i, &[]).digest());
    }
    let at = |i: usize| (got[&i].1.step, got[&i].1.slot);
    assert_eq!(at(1), (0, 0));
    assert_eq!(at(3), (1, 0));
    assert_eq!(at(6), (3, 0));
    let mut step2 = [at(2), at(4), at(5)];
    step2.sort();
    assert_eq!(step2, [(2, 0), (2, 1), (2, 2)]);
    assert_eq!(asg.slots[..4], [1, 1, 3, 1]);

    assert!(gp.events.iter().any(|e| matches!(e.kind, EventKind::PeekCall { .. })));
    assert!(check_reorg(&t, &gp).is_clean());
    assert!(check_claims(&t, &asg).is_clean());
    let sp = interpret(&gp).unwrap();
    assert!(check_interpretation(&gp, &sp).is_clean());
    assert!(alignment_replay(&t).is_clean());
}

#[test]
fn byzantine_free_reorg_is_identity() {
    let t = preset_trace("duo", 0);
    let (gp, asg) = reorg(&t).unwrap();
    assert!(asg.shells.is_empty());
    assert_eq!(gp.model, Model::GmPlus);
    assert_eq!(gp.events, t.events);
}

#[test]
fn fuzzed_pipeline_is_clean() {
    for seed in 1..=5 {
        let t = preset_trace("fuzz-gm", seed);
        let (gp, asg) = reorg(&t).unwrap();
        assert!(check_reorg(&t, &gp).is_clean(), "seed {seed}");
        assert!(check_claims(&t, &asg).is_clean(), "seed {seed}");
        let sp = interpret(&gp).unwrap();
        assert!(check_interpretation(&gp, &sp).is_clean(), "seed {seed}");
        assert!(alignment_replay(&t).is_clean(), "seed {seed}");
    }
}

#[test]
fn every_injected_fault_is_caught() {
    let faults = catalog();
    let conditions: std::collections::BTreeSet<_> = faults.iter().map(|f| f.condition).collect();
    assert_eq!(conditions.len(), 17);
    for f in faults {
        assert!(
            f.report.count(f.condition) > 0,
            "{} not caught by {}:\n{}",
            f.name,
            f.condition,
            f.report
        );
    }
}

#[test]
fn interpret_refuses_unaligned_or_smplus_input() {
    for r in rejected_inputs() {
        assert!(matches!(r, Err(MappingError::BadInput(_))), "{r:?}");
    }
}
