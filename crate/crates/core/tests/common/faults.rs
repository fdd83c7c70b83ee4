//! One injected fault per mapping condition. Each entry names the fault,
//! the condition expected to catch it, and the report produced on the
//! corrupted execution.

use std::collections::BTreeMap;

use gorilla_harness::adversary::{figure1_environment, Figure1Script, FIGURE1_SEED};
use gorilla_harness::engine::{run, run_gm};
use gorilla_harness::error::MappingError;
use gorilla_harness::mappings::*;
use gorilla_harness::presets::preset;
use gorilla_harness::trace::{EventKind, Model, Trace};
use gorilla_harness::types::{NodeId, Role, Value};

pub fn figure1() -> Trace {
    run_gm(
        &figure1_environment(),
        &mut Figure1Script::new(),
        FIGURE1_SEED,
        Model::Gm,
    )
    .unwrap()
}

pub fn preset_trace(name: &str, seed: u64) -> Trace {
    let c = preset(name).unwrap();
    run(&c.env, &c.strategy, seed, c.model).unwrap()
}

/// A fuzzed GM trace with coins and Byzantine sends.
pub fn fuzzed() -> Trace {
    (1..)
        .map(|s| preset_trace("fuzz-gm", s))
        .find(|t| {
            t.coins().next().is_some()
                && t.events
                    .iter()
                    .any(|e| matches!(e.kind, EventKind::TargetedSend { .. }))
        })
        .unwrap()
}

fn remove_first(t: &mut Trace, pred: impl Fn(&EventKind) -> bool) {
    let i = t.events.iter().position(|e| pred(&e.kind)).expect("event to remove");
    t.events.remove(i);
}

pub struct Fault {
    pub name: &'static str,
    pub condition: &'static str,
    pub report: Report,
}

fn fault(name: &'static str, condition: &'static str, report: Report) -> Fault {
    Fault {
        name,
        condition,
        report,
    }
}

fn reorg_faults(out: &mut Vec<Fault>) {
    let t = figure1();
    let gp = reorg(&t).unwrap().0;

    let mut g = gp.clone();
    remove_first(&mut g, |k| {
        matches!(
            k,
            EventKind::Receive {
                node: NodeId::Correct(_),
                ..
            }
        )
    });
    out.push(fault("dropped correct receipt", "reorg-1", check_reorg(&t, &g)));

    let mut g = gp.clone();
    let e = g
        .events
        .iter_mut()
        .find(|e| {
            matches!(
                e.kind,
                EventKind::Receive {
                    node: NodeId::Byz(_),
                    ..
                }
            )
        })
        .unwrap();
    e.tick += 1;
    g.normalize();
    out.push(fault("late shell receipt", "reorg-2", check_reorg(&t, &g)));

    let mut g = gp.clone();
    let victim = g
        .events
        .iter()
        .find_map(|e| match &e.kind {
            EventKind::TargetedSend {
                node: NodeId::Byz(_),
                msg,
                ..
            } => Some(*msg),
            _ => None,
        })
        .unwrap();
    g.events
        .retain(|e| !matches!(&e.kind, EventKind::TargetedSend { msg, .. } if *msg == victim));
    out.push(fault("shell never sends", "reorg-3", check_reorg(&t, &g)));

    let mut g = gp.clone();
    g.push(
        5,
        EventKind::Decide {
            node: NodeId::Correct(0),
            value: Value::B,
            round: 1,
        },
    );
    g.normalize();
    out.push(fault("invented decision", "decisions", check_reorg(&t, &g)));

    let mut g = gp;
    g.env.capacity = vec![0; g.env.capacity.len()];
    out.push(fault("shells over capacity", "legality", check_reorg(&t, &g)));
}

fn claim_faults(out: &mut Vec<Fault>) {
    let t = figure1();
    let asg = reorg(&t).unwrap().1;
    let by_span: BTreeMap<(u64, u64), _> = asg.spans.iter().map(|(d, s)| ((s.first, s.last), *d)).collect();

    let mut a = asg.clone();
    let d = *a.shells.keys().next().unwrap();
    a.shells.remove(&d);
    out.push(fault("missing shell", "assignment", check_claims(&t, &a)));

    // message 6 starts at tick 7 (step 2)
    let mut a = asg.clone();
    a.shells.get_mut(&by_span[&(7, 11)]).unwrap().step = 1;
    out.push(fault("shell before first unit", "claim-1", check_claims(&t, &a)));

    let mut a = asg.clone();
    a.shells.get_mut(&by_span[&(0, 6)]).unwrap().step = 3;
    out.push(fault("shell after last unit", "claim-2", check_claims(&t, &a)));

    // message 6 ahead of message 2, which finishes before 6 starts
    let mut a = asg;
    a.shells.get_mut(&by_span[&(4, 6)]).unwrap().step = 3;
    a.shells.get_mut(&by_span[&(7, 11)]).unwrap().step = 2;
    out.push(fault("order inverted", "claim-3", check_claims(&t, &a)));

    // three pairwise-disjoint spans need a longer fuzzed run
    for seed in 1.. {
        let t = preset_trace("fuzz-gm", seed);
        let mut a = reorg(&t).unwrap().1;
        let spans: Vec<_> = a.spans.iter().map(|(d, s)| (*d, *s)).collect();
        let chain = spans.iter().find_map(|x| {
            spans
                .iter()
                .filter(|y| x.1.last < y.1.first)
                .find_map(|y| spans.iter().find(|z| y.1.last < z.1.first).map(|z| (x.0, z.0)))
        });
        let Some((first, third)) = chain else { continue };
        let s1 = a.shells[&first].step;
        a.shells.get_mut(&third).unwrap().step = s1;
        out.push(fault("middle vdf squeezed", "claim-4", check_claims(&t, &a)));
        break;
    }
}

fn interpret_faults(out: &mut Vec<Fault>) {
    let gp = reorg(&fuzzed()).unwrap().0;
    let sp = interpret(&gp).unwrap();

    let mut s = sp.clone();
    s.push(
        0,
        EventKind::Join {
            node: NodeId::Correct(99),
            role: Role::Correct,
            input: Some(Value::A),
        },
    );
    s.normalize();
    out.push(fault("extra node", "interp-1", check_interpretation(&gp, &s)));

    let mut s = sp.clone();
    for e in &mut s.events {
        if let EventKind::Join {
            node: NodeId::Correct(0),
            input,
            ..
        } = &mut e.kind
        {
            *input = input.map(|v| if v == Value::A { Value::B } else { Value::A });
        }
    }
    out.push(fault("changed input", "interp-2", check_interpretation(&gp, &s)));

    let mut s = sp.clone();
    let e = s
        .events
        .iter_mut()
        .find(|e| {
            matches!(
                e.kind,
                EventKind::Join {
                    node: NodeId::Byz(_),
                    ..
                }
            )
        })
        .unwrap();
    if let EventKind::Join { role, .. } = &mut e.kind {
        *role = Role::Correct;
    }
    out.push(fault("changed role", "interp-3", check_interpretation(&gp, &s)));

    let mut s = sp.clone();
    remove_first(&mut s, |k| matches!(k, EventKind::Broadcast { .. }));
    out.push(fault("missing broadcast", "interp-4", check_interpretation(&gp, &s)));

    let mut s = sp.clone();
    remove_first(&mut s, |k| matches!(k, EventKind::Receive { .. }));
    out.push(fault("missing receipt", "interp-5", check_interpretation(&gp, &s)));

    let mut s = sp.clone();
    let e = s
        .events
        .iter_mut()
        .find(|e| matches!(e.kind, EventKind::CoinOutcome { .. }))
        .unwrap();
    if let EventKind::CoinOutcome { bit, .. } = &mut e.kind {
        *bit ^= 1;
    }
    out.push(fault("flipped coin", "coins", check_interpretation(&gp, &s)));

    let mut s = sp;
    s.env.capacity = vec![0; s.env.capacity.len()];
    s.env.capacity_default = 0;
    out.push(fault(
        "defective over capacity",
        "legality",
        check_interpretation(&gp, &s),
    ));

    let duo = reorg(&preset_trace("duo", 0)).unwrap().0;
    let mut s = interpret(&duo).unwrap();
    remove_first(&mut s, |k| matches!(k, EventKind::Decide { .. }));
    out.push(fault("lost decision", "decisions", check_interpretation(&duo, &s)));
}

fn alignment_faults(out: &mut Vec<Fault>) {
    let mut t = preset_trace("duo", 0);
    for e in &mut t.events {
        if let EventKind::Decide { value, .. } = &mut e.kind {
            *value = Value::A;
        }
    }
    out.push(fault("forged decision", "alignment", alignment_replay(&t)));

    let mut t = fuzzed();
    remove_first(&mut t, |k| {
        matches!(
            k,
            EventKind::CoinOutcome {
                node: NodeId::Correct(_),
                ..
            }
        )
    });
    out.push(fault("dropped coin", "alignment", alignment_replay(&t)));
}

pub fn catalog() -> Vec<Fault> {
    let mut out = Vec::new();
    reorg_faults(&mut out);
    claim_faults(&mut out);
    interpret_faults(&mut out);
    alignment_faults(&mut out);
    out
}

/// Inputs interpret must refuse: a mid-step join and an SM+ trace.
pub fn rejected_inputs() -> Vec<Result<Trace, MappingError>> {
    let f = figure1();
    let mut gp = reorg(&f).unwrap().0;
    let sp = interpret(&gp).unwrap();
    let e = gp
        .events
        .iter_mut()
        .find(|e| {
            matches!(
                e.kind,
                EventKind::Join {
                    node: NodeId::Byz(_),
                    ..
                }
            )
        })
        .unwrap();
    e.tick += 1;
    gp.normalize();
    vec![interpret(&gp), interpret(&sp)]
}
