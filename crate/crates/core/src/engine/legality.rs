//! Replay checks: a trace is legal for its model if a fresh oracle ledger
//! accepts every recorded call and every receipt, send and assembled
//! message is justified by earlier events.

use std::collections::{BTreeMap, BTreeSet};

use crate::env::validate_environment;
use crate::message::{ProtoMsg, Validator, VerifyKey};
use crate::oracle::{Mode, OracleLedger};
use crate::trace::{EventKind, Model, Trace};
use crate::types::{first_tick, last_tick, Hash32, MsgId, NodeId, Role};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Legality {
    pub violations: Vec<(u64, String)>,
}

impl Legality {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, tick: u64, msg: impl Into<String>) {
        self.violations.push((tick, msg.into()));
    }
}

impl std::fmt::Display for Legality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (t, v) in &self.violations {
            writeln!(f, "illegal tick={t} {v}")?;
        }
        Ok(())
    }
}

fn check_order(trace: &Trace, out: &mut Legality) {
    for w in trace.events.windows(2) {
        if (w[0].tick, w[0].kind.phase()) > (w[1].tick, w[1].kind.phase()) {
            out.flag(w[1].tick, "events out of (tick, phase) order");
            return;
        }
    }
}

/// Tracks joins and leaves; a node is active from its Join tick through
/// its Leave tick.
#[derive(Default)]
struct Activity {
    active: BTreeSet<NodeId>,
    leaving: Vec<NodeId>,
    ever: BTreeSet<NodeId>,
}

impl Activity {
    fn join(&mut self, tick: u64, node: NodeId, out: &mut Legality) {
        if !self.active.insert(node) {
            out.flag(tick, format!("{node} joins while active"));
        }
        self.ever.insert(node);
    }

    fn leave(&mut self, tick: u64, node: NodeId, out: &mut Legality) {
        if !self.active.contains(&node) {
            out.flag(tick, format!("{node} leaves while inactive"));
        }
        self.leaving.push(node);
    }

    fn require(&self, tick: u64, node: NodeId, out: &mut Legality) {
        if !self.active.contains(&node) {
            out.flag(tick, format!("{node} acts while inactive"));
        }
    }

    fn end_tick(&mut self) {
        for n in self.leaving.drain(..) {
            self.active.remove(&n);
        }
    }

    fn byzantine(&self) -> u32 {
        self.active.iter().filter(|n| !n.is_correct()).count() as u32
    }
}

/// GM / GM+ legality (SM+ traces go to `check_smplus_legality`).
pub fn check_legality(trace: &Trace) -> Legality {
    if trace.model == Model::SmPlus {
        return check_smplus_legality(trace);
    }
    let mut out = Legality::default();
    for v in validate_environment(&trace.env) {
        out.flag(0, format!("environment: {v}"));
    }
    if trace.env.k == 0 {
        return out;
    }
    check_order(trace, &mut out);
    let env = &trace.env;
    let k = trace.k();
    let plus = trace.model == Model::GmPlus;
    let mut ledger = OracleLedger::new(trace.seed, env.k, if plus { Mode::Plus } else { Mode::Plain });
    let mut validator = Validator::new(
        VerifyKey {
            seed: trace.seed,
            k: env.k,
        },
        trace.t,
    );

    // indexes over the whole trace
    let gens = trace.generators();
    let mut bcast: BTreeMap<MsgId, BTreeSet<u64>> = BTreeMap::new();
    let mut tsend: BTreeMap<(MsgId, NodeId), BTreeSet<u64>> = BTreeMap::new();
    let mut completed_by_byz: BTreeMap<Hash32, u64> = BTreeMap::new();
    let mut peeked: BTreeMap<Hash32, u64> = BTreeMap::new();
    let mut by_input: BTreeMap<Hash32, MsgId> = BTreeMap::new();
    for id in trace.gorilla.ids() {
        by_input
            .entry(trace.gorilla.get(id).unwrap().vdf_input().digest())
            .or_insert(*id);
    }
    for e in &trace.events {
        match &e.kind {
            EventKind::Broadcast { msg, .. } => {
                bcast.entry(*msg).or_default().insert(e.tick);
            }
            EventKind::TargetedSend { msg, to, .. } => {
                for r in to {
                    tsend.entry((*msg, *r)).or_default().insert(e.tick);
                }
            }
            EventKind::GetCall { node, input, index, .. } if !node.is_correct() && *index == env.k => {
                completed_by_byz.entry(*input).or_insert(e.tick);
            }
            EventKind::PeekCall { input, .. } => {
                peeked.entry(*input).or_insert(e.tick);
            }
            _ => {}
        }
    }
    // first tick at which the adversary holds each message through a receipt
    let mut learned: BTreeMap<MsgId, u64> = BTreeMap::new();
    {
        let mut seen = BTreeSet::new();
        for e in &trace.events {
            if let EventKind::Receive { node, msg, .. } = &e.kind {
                if !node.is_correct() {
                    for m in trace.gorilla.extend_closed(&mut seen, msg) {
                        learned.insert(m, e.tick);
                    }
                }
            }
        }
    }
    let byz_created = |m: &MsgId| gens.get(m).filter(|g| !g.1.is_correct()).map(|g| g.0);
    let mut usable: BTreeMap<MsgId, u64> = learned.clone();
    for id in trace.gorilla.ids() {
        if let Some(c) = byz_created(id) {
            let input = trace.gorilla.get(id).unwrap().vdf_input().digest();
            let ready = if validator.is_valid(&trace.gorilla, id) {
                let done = completed_by_byz.get(&input).map(|t| t + 1);
                let p = peeked.get(&input).copied();
                match (done, p) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                }
            } else {
                Some(c + 1)
            };
            if let Some(r) = ready {
                let u = usable.entry(*id).or_insert(u64::MAX);
                *u = (*u).min(r.max(c));
            }
        }
    }
    let known_at =
        |m: &MsgId, tick: u64| learned.get(m).is_some_and(|&t| t <= tick) || byz_created(m).is_some_and(|t| t <= tick);

    let mut act = Activity::default();
    let mut gets: BTreeMap<(NodeId, u64), u32> = BTreeMap::new();
    let mut sends: BTreeMap<(NodeId, u64), Vec<u64>> = BTreeMap::new();
    let last = trace.events.last().map_or(0, |e| e.tick);
    let last_step = last / k;
    let mut i = 0;
    let events = &trace.events;
    for tick in 0..=last {
        while i < events.len() && events[i].tick == tick {
            let e = &events[i];
            i += 1;
            let node = e.kind.node();
            match &e.kind {
                EventKind::Join { role, input, .. } => {
                    match (node, role) {
                        (NodeId::Correct(id), Role::Correct) => match env.spec(id) {
                            Some(c) if c.join == tick && *input == Some(c.input) => {}
                            _ => out.flag(tick, format!("{node} join does not match the environment")),
                        },
                        (NodeId::Byz(_), Role::Faulty) => {}
                        _ => out.flag(tick, format!("{node} joins with role {role}")),
                    }
                    act.join(tick, node, &mut out);
                }
                EventKind::Leave { .. } => {
                    if let NodeId::Correct(id) = node {
                        if env.spec(id).and_then(|c| c.leave) != Some(tick + 1) {
                            out.flag(tick, format!("{node} leave does not match the environment"));
                        }
                    }
                    act.leave(tick, node, &mut out);
                }
                EventKind::Receive { msg, .. } => {
                    act.require(tick, node, &mut out);
                    let justified = if node.is_correct() {
                        let prev = tick.checked_sub(1);
                        let direct = prev.is_some_and(|p| {
                            bcast.get(msg).is_some_and(|s| s.contains(&p))
                                || tsend.get(&(*msg, node)).is_some_and(|s| s.contains(&p))
                        });
                        let catch_up = env.spec(node.index()).is_some_and(|c| c.join == tick)
                            && gens.get(msg).is_some_and(|g| g.1.is_correct() && g.0 < tick);
                        direct || catch_up
                    } else {
                        gens.get(msg).is_some_and(|g| g.0 < tick)
                    };
                    if !justified {
                        out.flag(tick, format!("{node} receives {} without a matching send", msg.short()));
                    }
                }
                EventKind::GetCall { input, index, unit, .. } => {
                    act.require(tick, node, &mut out);
                    *gets.entry((node, tick / k)).or_insert(0) += 1;
                    let Some(inp) = trace.inputs.get(input) else {
                        out.flag(tick, format!("Get on unregistered input {}", input.short()));
                        continue;
                    };
                    let prev = if *index <= 1 {
                        None
                    } else {
                        match ledger.record(input).and_then(|r| r.units.get(*index as usize - 2)) {
                            Some(&u) => Some(u),
                            None => {
                                out.flag(
                                    tick,
                                    format!("{node} Get unit {index} of {} before unit {}", input.short(), index - 1),
                                );
                                continue;
                            }
                        }
                    };
                    match ledger.get(node, tick, inp, prev) {
                        Ok(u) if u == *unit => {}
                        Ok(_) => out.flag(tick, format!("{node} Get on {} records a wrong unit", input.short())),
                        Err(err) => out.flag(tick, err.to_string()),
                    }
                    if !node.is_correct() && *index == 1 {
                        if let Some(m) = by_input.get(input) {
                            for c in &trace.gorilla.get(m).unwrap().coffer {
                                if !usable.get(c).is_some_and(|&u| u <= tick) {
                                    out.flag(
                                        tick,
                                        format!(
                                            "{node} starts {} before coffer member {} is available",
                                            input.short(),
                                            c.short()
                                        ),
                                    );
                                }
                            }
                        }
                    }
                }
                EventKind::PeekCall {
                    input,
                    unit,
                    commitment,
                    ..
                } => {
                    act.require(tick, node, &mut out);
                    if node.is_correct() {
                        out.flag(tick, format!("{node} peeks"));
                    }
                    let Some(inp) = trace.inputs.get(input) else {
                        out.flag(tick, format!("Peek on unregistered input {}", input.short()));
                        continue;
                    };
                    let coffer_inputs: Vec<Hash32> = by_input
                        .get(input)
                        .map(|m| {
                            trace
                                .gorilla
                                .get(m)
                                .unwrap()
                                .coffer
                                .iter()
                                .map(|c| trace.gorilla.get(c).unwrap().vdf_input().digest())
                                .collect()
                        })
                        .unwrap_or_default();
                    match ledger.peek(node, tick, inp, &coffer_inputs, commitment) {
                        Ok(u) if u == *unit => {}
                        Ok(_) => out.flag(tick, "Peek records a wrong value"),
                        Err(err) => out.flag(tick, err.to_string()),
                    }
                }
                EventKind::Broadcast { msg, .. } => {
                    act.require(tick, node, &mut out);
                    if !node.is_correct() {
                        out.flag(tick, format!("{node} broadcasts in a Gorilla trace"));
                    }
                    if !trace.gorilla.contains(msg) {
                        out.flag(tick, format!("broadcast of unknown message {}", msg.short()));
                    }
                    sends.entry((node, tick / k)).or_default().push(tick);
                }
                EventKind::TargetedSend { msg, to, .. } => {
                    act.require(tick, node, &mut out);
                    if node.is_correct() {
                        out.flag(tick, format!("{node} sends a targeted message"));
                        continue;
                    }
                    let Some(m) = trace.gorilla.get(msg) else {
                        out.flag(tick, format!("send of unknown message {}", msg.short()));
                        continue;
                    };
                    if to.is_empty() {
                        if gens.get(msg) != Some(&(tick, node)) {
                            continue;
                        }
                        for c in &m.coffer {
                            if !known_at(c, tick) {
                                out.flag(
                                    tick,
                                    format!("{} assembled before coffer member {} is known", msg.short(), c.short()),
                                );
                            }
                        }
                        if validator.is_valid(&trace.gorilla, msg) {
                            let input = m.vdf_input().digest();
                            let held = completed_by_byz.get(&input).is_some_and(|&t| t <= tick)
                                || peeked.get(&input).is_some_and(|&t| t <= tick);
                            if !held {
                                out.flag(
                                    tick,
                                    format!("{} carries a vdf the adversary never computed", msg.short()),
                                );
                            }
                        }
                    } else {
                        if tick % k != k - 1 {
                            out.flag(tick, format!("{node} sends outside a step's last tick"));
                        }
                        if !known_at(msg, tick) {
                            out.flag(
                                tick,
                                format!("{node} sends {} before the adversary has it", msg.short()),
                            );
                        }
                        if let Some(r) = to.iter().find(|r| !r.is_correct()) {
                            out.flag(tick, format!("targeted send to {r}"));
                        }
                    }
                }
                EventKind::CoinOutcome { .. } | EventKind::Decide { .. } => {
                    if !node.is_correct() {
                        out.flag(tick, format!("{node} has a coin or decision event"));
                    }
                }
                EventKind::State { .. } => out.flag(tick, "state event in a Gorilla trace"),
            }
        }
        let b = act.byzantine();
        if b > env.cap(tick) {
            out.flag(tick, format!("{b} Byzantine nodes active, capacity {}", env.cap(tick)));
        }
        if tick % k == k - 1 {
            let step = tick / k;
            if plus {
                for v in ledger.audit_step(step) {
                    out.flag(tick, v.to_string());
                }
            }
            for c in env.correct.iter().filter(|c| c.active_at(first_tick(step, k))) {
                let n = NodeId::Correct(c.id);
                if gets.get(&(n, step)).copied().unwrap_or(0) as u64 != k {
                    out.flag(tick, format!("{n} does not make K Get calls in step {step}"));
                }
                if sends.get(&(n, step)).map(|v| v.as_slice()) != Some(&[last_tick(step, k)]) {
                    out.flag(
                        tick,
                        format!("{n} does not broadcast exactly once at the end of step {step}"),
                    );
                }
            }
        }
        act.end_tick();
    }
    if last % k != k - 1 && !events.is_empty() {
        out.flag(last, format!("trace ends inside step {last_step}"));
    }
    out
}

/// SM+ legality: synchronous good links, scheduled defective links, and
/// the same-step allowance between defective nodes.
pub fn check_smplus_legality(trace: &Trace) -> Legality {
    let mut out = Legality::default();
    if trace.model != Model::SmPlus || trace.env.k != 1 {
        out.flag(0, "not an SM+ trace with one tick per step");
        return out;
    }
    for v in validate_environment(&trace.env) {
        out.flag(0, format!("environment: {v}"));
    }
    check_order(trace, &mut out);
    let env = &trace.env;
    let mut gen: BTreeMap<MsgId, (u64, NodeId)> = BTreeMap::new();
    let mut received: BTreeMap<NodeId, BTreeMap<MsgId, u64>> = BTreeMap::new();
    for e in &trace.events {
        match &e.kind {
            EventKind::Broadcast { node, msg } => {
                if gen.insert(*msg, (e.tick, *node)).is_some() {
                    out.flag(e.tick, format!("{} sent twice", msg.short()));
                }
            }
            EventKind::Receive { node, msg, .. } => {
                received.entry(*node).or_default().entry(*msg).or_insert(e.tick);
            }
            _ => {}
        }
    }
    let mut act = Activity::default();
    let mut broadcasts: BTreeMap<(NodeId, u64), u32> = BTreeMap::new();
    let last = trace.events.last().map_or(0, |e| e.tick);
    let mut i = 0;
    let events = &trace.events;
    let mut good_active_at: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
    let mut held: BTreeMap<NodeId, BTreeSet<MsgId>> = BTreeMap::new();
    for s in 0..=last {
        while i < events.len() && events[i].tick == s {
            let e = &events[i];
            i += 1;
            let node = e.kind.node();
            match &e.kind {
                EventKind::Join { role, input, .. } => {
                    if let NodeId::Correct(id) = node {
                        match env.spec(id) {
                            Some(c) if c.join == s && *input == Some(c.input) && *role == Role::Correct => {}
                            _ => out.flag(s, format!("{node} join does not match the environment")),
                        }
                    }
                    act.join(s, node, &mut out);
                }
                EventKind::Leave { .. } => act.leave(s, node, &mut out),
                EventKind::Receive { msg, .. } => {
                    act.require(s, node, &mut out);
                    trace.sandglass.extend_closed(held.entry(node).or_default(), msg);
                    let Some(&(gs, sender)) = gen.get(msg) else {
                        out.flag(s, format!("{node} receives {} that nobody sent", msg.short()));
                        continue;
                    };
                    let ok = gs < s || {
                        gs == s
                            && !node.is_correct()
                            && !sender.is_correct()
                            && trace
                                .sandglass
                                .get(msg)
                                .is_some_and(|m| m.coffer().iter().all(|c| gen.get(c).is_none_or(|g| g.0 < s)))
                    };
                    if !ok {
                        out.flag(s, format!("{node} receives {} sent at step {gs}", msg.short()));
                    }
                }
                EventKind::Broadcast { msg, .. } => {
                    act.require(s, node, &mut out);
                    *broadcasts.entry((node, s)).or_insert(0) += 1;
                    if let Some(m) = trace.sandglass.get(msg) {
                        if m.sender != node {
                            out.flag(s, format!("{node} sends a message signed by {}", m.sender));
                        }
                        let h = held.entry(node).or_default();
                        for c in m.coffer() {
                            if !h.contains(c) {
                                out.flag(s, format!("{node} puts unreceived {} in a coffer", c.short()));
                            }
                        }
                        trace.sandglass.extend_closed(h, msg);
                    } else {
                        out.flag(s, format!("send of unknown message {}", msg.short()));
                    }
                }
                EventKind::State { .. } | EventKind::CoinOutcome { .. } | EventKind::Decide { .. } => {
                    act.require(s, node, &mut out);
                }
                EventKind::GetCall { .. } | EventKind::PeekCall { .. } | EventKind::TargetedSend { .. } => {
                    out.flag(s, "Gorilla event in an SM+ trace");
                }
            }
        }
        let d = act.byzantine();
        if d > env.cap(s) {
            out.flag(s, format!("{d} defective nodes active, {} slots", env.cap(s)));
        }
        let goods: Vec<NodeId> = act.active.iter().filter(|n| n.is_correct()).copied().collect();
        for g in &goods {
            if broadcasts.get(&(*g, s)).copied().unwrap_or(0) != 1 {
                out.flag(s, format!("{g} does not send exactly once in step {s}"));
            }
        }
        good_active_at.insert(s, goods);
        act.end_tick();
    }
    // good-to-good synchrony
    for (m, &(gs, sender)) in &gen {
        if !sender.is_correct() || gs >= last {
            continue;
        }
        for g in good_active_at.get(&(gs + 1)).into_iter().flatten() {
            if received.get(g).and_then(|r| r.get(m)) != Some(&(gs + 1)) {
                out.flag(
                    gs + 1,
                    format!("{g} does not receive good message {} in the next step", m.short()),
                );
            }
        }
    }
    out
}
