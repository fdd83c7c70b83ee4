use std::collections::{BTreeMap, BTreeSet};

use super::align::{map_trace, replay_good_nodes, GoodNodePlan};
use super::Report;
use crate::env::{CorrectSpec, Environment};
use crate::error::MappingError;
use crate::message::{Validator, VerifyKey};
use crate::trace::{EventKind, Model, Trace};
use crate::types::{Hash32, MsgId, NodeId, Role, Value};

fn step_env(env: &Environment) -> Environment {
    let k = u64::from(env.k);
    Environment {
        k: 1,
        n: env.n,
        correct: env
            .correct
            .iter()
            .map(|c| CorrectSpec {
                id: c.id,
                input: c.input,
                join: c.join / k,
                leave: c.leave.map(|l| l / k),
            })
            .collect(),
        capacity: (0..env.max_steps)
            .map(|s| (0..k).map(|j| env.cap(s * k + j)).max().unwrap_or(0))
            .collect(),
        capacity_default: env.capacity_default,
        max_steps: env.max_steps,
    }
}

/// Per-node (join step, leave step, role, input) as recorded by events.
type Lives = BTreeMap<NodeId, (Option<u64>, Option<u64>, Role, Option<Value>)>;

fn lives(trace: &Trace) -> Lives {
    let k = trace.k();
    let mut out = Lives::new();
    for e in &trace.events {
        match &e.kind {
            EventKind::Join { node, role, input } => {
                let l = out.entry(*node).or_insert((None, None, *role, *input));
                l.0 = Some(e.tick / k);
                l.2 = *role;
                l.3 = *input;
            }
            EventKind::Leave { node } => {
                out.entry(*node).or_insert((None, None, Role::Faulty, None)).1 = Some(e.tick / k);
            }
            _ => {}
        }
    }
    out
}

/// (node, step, mapped id) of each first emission.
type Sends = BTreeSet<(NodeId, u64, MsgId)>;

/// Messages (valid, generated) by VDF input, for turning peeks into receipts.
fn by_input(trace: &Trace, generated: &BTreeSet<MsgId>) -> BTreeMap<Hash32, Vec<MsgId>> {
    let mut out: BTreeMap<Hash32, Vec<MsgId>> = BTreeMap::new();
    for id in trace.gorilla.ids().iter().filter(|m| generated.contains(m)) {
        out.entry(trace.gorilla.get(id).unwrap().vdf_input().digest())
            .or_default()
            .push(*id);
    }
    out
}

/// (node, step, mapped id) triples for sends and for receipts (peeks
/// count as receipts in the peek's step).
fn mapped_views(trace: &Trace, memo: &std::collections::HashMap<MsgId, MsgId>) -> (Sends, Vec<(u64, NodeId, MsgId)>) {
    let k = trace.k();
    let generated: BTreeSet<MsgId> = memo.keys().copied().collect();
    let inputs = by_input(trace, &generated);
    let mut sends = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut recv = Vec::new();
    let mut got: BTreeSet<(NodeId, MsgId)> = BTreeSet::new();
    for e in &trace.events {
        let s = e.tick / k;
        match &e.kind {
            EventKind::Broadcast { node, msg } | EventKind::TargetedSend { node, msg, .. } => {
                if seen.insert(*msg) {
                    if let Some(sid) = memo.get(msg) {
                        sends.insert((*node, s, *sid));
                    }
                }
            }
            EventKind::Receive { node, msg, .. } => {
                if let Some(sid) = memo.get(msg) {
                    if got.insert((*node, *sid)) {
                        recv.push((s, *node, *sid));
                    }
                }
            }
            EventKind::PeekCall { node, input, .. } => {
                for m in inputs.get(input).into_iter().flatten() {
                    let sid = memo[m];
                    if got.insert((*node, sid)) {
                        recv.push((s, *node, sid));
                    }
                }
            }
            _ => {}
        }
    }
    (sends, recv)
}

/// Translates a GM+ trace into SM+: same nodes, one tick per step, every
/// valid message mapped, peeks as same-step receipts. Good-node coin and
/// decision events come from a Sandglass replay using the trace's vdf
/// parities as coins.
pub fn interpret(gp: &Trace) -> Result<Trace, MappingError> {
    if !matches!(gp.model, Model::Gm | Model::GmPlus) {
        return Err(MappingError::BadInput(format!(
            "interpret expects a gm+ trace, got {}",
            gp.model
        )));
    }
    let k = gp.k();
    for e in &gp.events {
        let misaligned = match &e.kind {
            EventKind::Join { .. } => e.tick % k != 0,
            EventKind::Leave { .. } => e.tick % k != k - 1,
            _ => false,
        };
        if misaligned {
            return Err(MappingError::BadInput(format!(
                "{} joins or leaves mid-step at tick {}",
                e.kind.node(),
                e.tick
            )));
        }
    }
    let mut validator = Validator::new(
        VerifyKey {
            seed: gp.seed,
            k: gp.env.k,
        },
        gp.t,
    );
    let mapped = map_trace(gp, &mut validator)?;
    let mut out = Trace::new(Model::SmPlus, gp.seed, gp.t, step_env(&gp.env));
    out.sandglass = mapped.store;
    let (sends, recv) = mapped_views(gp, &mapped.memo);

    for e in &gp.events {
        let s = e.tick / k;
        match &e.kind {
            EventKind::Join { .. } | EventKind::Leave { .. } => out.push(s, e.kind.clone()),
            _ => {}
        }
    }
    let mut deliveries: BTreeMap<NodeId, BTreeMap<u64, Vec<MsgId>>> = BTreeMap::new();
    for &(s, node, sid) in &recv {
        let from = out.sandglass.get(&sid).map(|m| m.sender);
        out.push(s, EventKind::Receive { node, msg: sid, from });
        deliveries.entry(node).or_default().entry(s).or_default().push(sid);
    }
    let mut good_steps: BTreeMap<NodeId, Vec<u64>> = BTreeMap::new();
    let mut ordered: Vec<&(NodeId, u64, MsgId)> = sends.iter().collect();
    ordered.sort_by_key(|x| (x.1, x.0));
    for &&(node, s, sid) in &ordered {
        out.push(s, EventKind::Broadcast { node, msg: sid });
        if node.is_correct() {
            good_steps.entry(node).or_default().push(s);
        }
    }

    let mut coins: BTreeMap<NodeId, Vec<u8>> = BTreeMap::new();
    for (_, node, bit) in gp.coins() {
        coins.entry(node).or_default().push(bit);
    }
    let empty = BTreeMap::new();
    let plans: Vec<GoodNodePlan<'_>> = gp
        .env
        .correct
        .iter()
        .map(|c| {
            let id = NodeId::Correct(c.id);
            GoodNodePlan {
                id,
                input: c.input,
                steps: good_steps.get(&id).cloned().unwrap_or_default(),
                deliveries: deliveries.get(&id).unwrap_or(&empty),
                coins: coins.remove(&id).unwrap_or_default(),
            }
        })
        .collect();
    for (id, rep) in replay_good_nodes(&out.sandglass, gp.t, &plans) {
        for (s, o) in rep.steps {
            if let Some(bit) = o.coin {
                out.push(s, EventKind::CoinOutcome { node: id, bit });
            }
            if let Some(value) = o.decision {
                out.push(
                    s,
                    EventKind::Decide {
                        node: id,
                        value,
                        round: o.message.round,
                    },
                );
            }
            let m = &o.message;
            out.push(
                s,
                EventKind::State {
                    node: id,
                    round: m.round,
                    value: m.value,
                    uc: m.uc,
                    priority: m.priority,
                },
            );
        }
    }
    out.normalize();
    Ok(out)
}

/// The five interpretation conditions, plus decision and coin
/// preservation and SM+ legality of the result.
pub fn check_interpretation(gp: &Trace, sp: &Trace) -> Report {
    let mut r = Report::default();
    let k = gp.k();
    let (lg, ls) = (lives(gp), lives(sp));
    let ng: BTreeSet<&NodeId> = lg.keys().collect();
    let ns: BTreeSet<&NodeId> = ls.keys().collect();
    for n in ng.symmetric_difference(&ns) {
        r.flag("interp-1", None, format!("{n} exists in only one execution"));
    }
    for (n, a) in &lg {
        let Some(b) = ls.get(n) else { continue };
        if (a.0, a.1, a.3) != (b.0, b.1, b.3) {
            r.flag(
                "interp-2",
                a.0,
                format!(
                    "{n}: join/leave/input {:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                    a.0, a.1, a.3, b.0, b.1, b.3
                ),
            );
        }
        if a.2 != b.2 || (a.2 == Role::Correct) != n.is_correct() {
            r.flag("interp-3", a.0, format!("{n}: role {} vs {}", a.2, b.2));
        }
    }

    let mut validator = Validator::new(
        VerifyKey {
            seed: gp.seed,
            k: gp.env.k,
        },
        gp.t,
    );
    match map_trace(gp, &mut validator) {
        Err(e) => r.flag("interp-4", None, e.to_string()),
        Ok(mapped) => {
            let (sends, recv) = mapped_views(gp, &mapped.memo);
            let mut s_sends = BTreeSet::new();
            let mut s_recv = BTreeSet::new();
            for e in &sp.events {
                match &e.kind {
                    EventKind::Broadcast { node, msg } => {
                        s_sends.insert((*node, e.tick, *msg));
                    }
                    EventKind::Receive { node, msg, .. } => {
                        s_recv.insert((*node, e.tick, *msg));
                    }
                    _ => {}
                }
            }
            for (n, s, m) in sends.symmetric_difference(&s_sends) {
                let side = if sends.contains(&(*n, *s, *m)) {
                    "generated but not sent"
                } else {
                    "sent but not generated"
                };
                r.flag("interp-4", Some(*s), format!("{n} step {s}: {} {side}", m.short()));
            }
            let g_recv: BTreeSet<(NodeId, u64, MsgId)> = recv.iter().map(|&(s, n, m)| (n, s, m)).collect();
            for (n, s, m) in g_recv.symmetric_difference(&s_recv) {
                let side = if g_recv.contains(&(*n, *s, *m)) {
                    "missing from"
                } else {
                    "extra in"
                };
                r.flag(
                    "interp-5",
                    Some(*s),
                    format!("{n} step {s}: receipt of {} {side} the interpretation", m.short()),
                );
            }
        }
    }

    let dg: BTreeSet<(NodeId, u64, Value)> = gp.decisions().into_iter().map(|(t, n, v, _)| (n, t / k, v)).collect();
    let ds: BTreeSet<(NodeId, u64, Value)> = sp.decisions().into_iter().map(|(t, n, v, _)| (n, t, v)).collect();
    for (n, s, v) in dg.symmetric_difference(&ds) {
        r.flag(
            "decisions",
            Some(*s),
            format!("{n} decides {v} at step {s} in only one execution"),
        );
    }
    let coin_seq = |tr: &Trace| {
        let mut m: BTreeMap<NodeId, Vec<u8>> = BTreeMap::new();
        for (_, n, b) in tr.coins() {
            m.entry(n).or_default().push(b);
        }
        m
    };
    let (cg, cs) = (coin_seq(gp), coin_seq(sp));
    for n in cg.keys().chain(cs.keys()).collect::<BTreeSet<_>>() {
        if cg.get(n) != cs.get(n) {
            r.flag("coins", None, format!("{n}: coin sequences differ"));
        }
    }
    for (t, v) in crate::engine::check_smplus_legality(sp).violations {
        r.flag("legality", Some(t), v);
    }
    r
}
