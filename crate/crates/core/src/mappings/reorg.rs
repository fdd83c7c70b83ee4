use std::collections::{BTreeMap, BTreeSet};

use super::Report;
use crate::error::MappingError;
use crate::message::{Validator, VerifyKey};
use crate::oracle::{unit_value, Commitment};
use crate::trace::{EventKind, Model, Trace};
use crate::types::{first_tick, last_tick, Hash32, MsgId, NodeId, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReorgMode {
    Peek,
    /// Shells may only depend on shells of strictly earlier steps.
    NoPeek,
}

/// Ticks of the first and the K-th Byzantine unit of one VDF input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VdfSpan {
    pub first: u64,
    pub last: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Shell {
    pub step: u64,
    pub slot: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShellAssignment {
    pub n: u32,
    pub shells: BTreeMap<Hash32, Shell>,
    pub spans: BTreeMap<Hash32, VdfSpan>,
    /// Byzantine VDF inputs each input's messages carry in their coffers.
    pub deps: BTreeMap<Hash32, BTreeSet<Hash32>>,
    /// Shell count per step.
    pub slots: Vec<u32>,
    pub log: Vec<String>,
}

impl ShellAssignment {
    pub fn node(&self, shell: Shell) -> NodeId {
        NodeId::Byz((shell.step * u64::from(self.n) + u64::from(shell.slot)) as u32)
    }

    fn forwarder(&self, step: u64) -> NodeId {
        self.node(Shell { step, slot: 0 })
    }
}

/// Valid Byzantine messages grouped by VDF input, with the spans of
/// their Byzantine computations.
struct ByzVdfs {
    msgs: BTreeMap<Hash32, Vec<MsgId>>,
    input_of: BTreeMap<MsgId, Hash32>,
    spans: BTreeMap<Hash32, VdfSpan>,
    deps: BTreeMap<Hash32, BTreeSet<Hash32>>,
}

fn byzantine_vdfs(trace: &Trace, validator: &mut Validator) -> Result<ByzVdfs, MappingError> {
    let gens = trace.generators();
    let k = trace.env.k;
    let mut msgs: BTreeMap<Hash32, Vec<MsgId>> = BTreeMap::new();
    let mut input_of = BTreeMap::new();
    for id in trace.gorilla.ids() {
        if gens.get(id).is_some_and(|g| !g.1.is_correct()) && validator.is_valid(&trace.gorilla, id) {
            let d = trace.gorilla.get(id).unwrap().vdf_input().digest();
            msgs.entry(d).or_default().push(*id);
            input_of.insert(*id, d);
        }
    }
    let mut first: BTreeMap<Hash32, u64> = BTreeMap::new();
    let mut last: BTreeMap<Hash32, u64> = BTreeMap::new();
    for e in &trace.events {
        if let EventKind::GetCall { node, input, index, .. } = &e.kind {
            if !node.is_correct() {
                if *index == 1 {
                    first.entry(*input).or_insert(e.tick);
                }
                if *index == k {
                    last.entry(*input).or_insert(e.tick);
                }
            }
        }
    }
    let mut spans = BTreeMap::new();
    let mut deps = BTreeMap::new();
    for (d, ids) in &msgs {
        let (Some(&f), Some(&l)) = (first.get(d), last.get(d)) else {
            return Err(MappingError::BadInput(format!(
                "valid Byzantine message {} carries a vdf no Byzantine node computed",
                ids[0].short()
            )));
        };
        spans.insert(*d, VdfSpan { first: f, last: l });
        let ds: BTreeSet<Hash32> = ids
            .iter()
            .flat_map(|m| trace.gorilla.get(m).unwrap().coffer.iter())
            .filter_map(|c| input_of.get(c).copied())
            .filter(|x| x != d)
            .collect();
        deps.insert(*d, ds);
    }
    Ok(ByzVdfs {
        msgs,
        input_of,
        spans,
        deps,
    })
}

/// Shell counts: one fewer than the correct nodes, bounded by the free
/// places within N.
fn shell_slots(trace: &Trace) -> Vec<u32> {
    let env = &trace.env;
    (0..env.max_steps)
        .map(|s| {
            let c = env.correct_count(first_tick(s, trace.k()));
            c.saturating_sub(1).min(env.n.saturating_sub(c))
        })
        .collect()
}

pub fn reorg(trace: &Trace) -> Result<(Trace, ShellAssignment), MappingError> {
    reorg_with(trace, ReorgMode::Peek)
}

/// Maps a GM trace to a GM+ trace in which each valid Byzantine VDF is
/// computed by a shell node active for one step. Shells are handed out
/// step by step to the eligible VDFs with the earliest last unit, ties
/// by input digest.
pub fn reorg_with(trace: &Trace, mode: ReorgMode) -> Result<(Trace, ShellAssignment), MappingError> {
    if trace.model != Model::Gm {
        return Err(MappingError::BadInput(format!(
            "reorg expects a gm trace, got {}",
            trace.model
        )));
    }
    let k = trace.k();
    let env = &trace.env;
    let mut validator = Validator::new(
        VerifyKey {
            seed: trace.seed,
            k: env.k,
        },
        trace.t,
    );
    let byz = byzantine_vdfs(trace, &mut validator)?;
    let slots = shell_slots(trace);
    let mut asg = ShellAssignment {
        n: env.n,
        spans: byz.spans.clone(),
        deps: byz.deps.clone(),
        slots: slots.clone(),
        ..Default::default()
    };

    if trace.events.iter().all(|e| e.kind.node().is_correct()) {
        let mut out = trace.clone();
        out.model = Model::GmPlus;
        return Ok((out, asg));
    }

    let mut order: Vec<Hash32> = byz.spans.keys().copied().collect();
    order.sort_by_key(|d| (byz.spans[d].last, *d));
    let last_step = trace.events.last().map_or(0, |e| e.tick) / k;
    for s in 0..=last_step {
        let cap = slots.get(s as usize).copied().unwrap_or(0);
        let mut chosen = Vec::new();
        for d in &order {
            if chosen.len() as u32 == cap {
                break;
            }
            if asg.shells.contains_key(d) || byz.spans[d].first / k > s {
                continue;
            }
            if mode == ReorgMode::NoPeek
                && byz.deps[d]
                    .iter()
                    .any(|x| asg.shells.get(x).is_none_or(|sh| sh.step >= s))
            {
                continue;
            }
            asg.shells.insert(
                *d,
                Shell {
                    step: s,
                    slot: chosen.len() as u32,
                },
            );
            chosen.push(d.short());
        }
        if !chosen.is_empty() {
            asg.log
                .push(format!("step {s}: {cap} shells, assigned {}", chosen.join(",")));
        }
        if let Some(d) = order
            .iter()
            .find(|d| !asg.shells.contains_key(d) && byz.spans[d].last / k <= s)
        {
            return Err(MappingError::ShellExhaustion(format!(
                "vdf {} finished at tick {} has no shell by step {s} ({cap} shells)",
                d.short(),
                byz.spans[d].last
            )));
        }
    }
    let out = build(trace, &byz, &asg, &mut validator)?;
    Ok((out, asg))
}

fn build(
    trace: &Trace,
    byz: &ByzVdfs,
    asg: &ShellAssignment,
    validator: &mut Validator,
) -> Result<Trace, MappingError> {
    let k = trace.k();
    let mut env = trace.env.clone();
    env.capacity = (0..env.ticks()).map(|t| asg.slots[(t / k) as usize]).collect();
    env.capacity_default = 0;
    let mut out = Trace::new(Model::GmPlus, trace.seed, trace.t, env);
    let gens = trace.generators();

    for id in trace.gorilla.ids() {
        if gens.contains_key(id) && validator.is_valid(&trace.gorilla, id) {
            out.gorilla.intern(trace.gorilla.get(id).unwrap().clone())?;
        }
    }
    let shell_of = |m: &MsgId| byz.input_of.get(m).map(|d| asg.shells[d]);
    let generator = |m: &MsgId| match shell_of(m) {
        Some(sh) => asg.node(sh),
        None => gens[m].1,
    };

    // correct events, with Byzantine receipts re-sourced
    let mut bcast: BTreeSet<(MsgId, u64)> = BTreeSet::new();
    for e in &trace.events {
        if let EventKind::Broadcast { msg, .. } = &e.kind {
            bcast.insert((*msg, e.tick));
        }
    }
    let mut forwards: BTreeMap<(u64, NodeId, MsgId), BTreeSet<NodeId>> = BTreeMap::new();
    let mut relay: BTreeMap<u64, BTreeSet<MsgId>> = BTreeMap::new();
    for e in &trace.events {
        let node = e.kind.node();
        if !node.is_correct() {
            continue;
        }
        let mut kind = e.kind.clone();
        match &e.kind {
            EventKind::Receive { msg, .. } => {
                if !out.gorilla.contains(msg) {
                    continue;
                }
                let direct = e.tick > 0 && bcast.contains(&(*msg, e.tick - 1));
                let catch_up = trace.env.spec(node.index()).is_some_and(|c| c.join == e.tick)
                    && gens.get(msg).is_some_and(|g| g.1.is_correct() && g.0 < e.tick);
                if !direct && !catch_up {
                    if e.tick % k != 0 || e.tick == 0 {
                        return Err(MappingError::BadInput(format!(
                            "{node} receives {} from the adversary at tick {}, not a step start",
                            msg.short(),
                            e.tick
                        )));
                    }
                    let sp = e.tick / k - 1;
                    let sender = match shell_of(msg) {
                        Some(sh) if sh.step == sp => asg.node(sh),
                        _ => {
                            relay.entry(sp).or_default().insert(*msg);
                            asg.forwarder(sp)
                        }
                    };
                    forwards.entry((e.tick - 1, sender, *msg)).or_default().insert(node);
                    kind = EventKind::Receive {
                        node,
                        msg: *msg,
                        from: Some(sender),
                    };
                }
            }
            EventKind::GetCall { input, .. } => {
                if let Some(inp) = trace.inputs.get(input) {
                    out.inputs.insert(*input, inp.clone());
                }
            }
            _ => {}
        }
        out.push(e.tick, kind);
    }

    // shells
    let mut receives: BTreeMap<(u64, NodeId), BTreeSet<MsgId>> = BTreeMap::new();
    let mut joined: BTreeSet<NodeId> = BTreeSet::new();
    let mut peek_created: BTreeSet<Hash32> = BTreeSet::new();
    for (d, sh) in &asg.shells {
        let node = asg.node(*sh);
        let t0 = first_tick(sh.step, k);
        joined.insert(node);
        out.push(
            t0,
            EventKind::Join {
                node,
                role: Role::Faulty,
                input: None,
            },
        );
        let mut peeks = BTreeSet::new();
        for m in &byz.msgs[d] {
            for c in &trace.gorilla.get(m).unwrap().coffer {
                match shell_of(c) {
                    Some(csh) if csh.step == sh.step => {
                        peeks.insert(byz.input_of[c]);
                    }
                    _ => {
                        receives.entry((t0, node)).or_default().insert(*c);
                    }
                }
            }
        }
        for p in peeks {
            let input = trace.inputs[&p].clone();
            let owner = asg.node(asg.shells[&p]);
            out.push(
                t0,
                EventKind::PeekCall {
                    node,
                    input: p,
                    unit: unit_value(trace.seed, &input, trace.env.k),
                    commitment: Commitment {
                        pledges: (0..k).map(|j| (t0 + j, owner)).collect(),
                    },
                },
            );
            peek_created.insert(p);
        }
        let input = trace.gorilla.get(&byz.msgs[d][0]).unwrap().vdf_input();
        out.register_input(&input);
        for j in 0..trace.env.k {
            out.push(
                t0 + u64::from(j),
                EventKind::GetCall {
                    node,
                    input: *d,
                    index: j + 1,
                    unit: unit_value(trace.seed, &input, j + 1),
                },
            );
        }
        out.push(last_tick(sh.step, k), EventKind::Leave { node });
    }
    for (d, sh) in &asg.shells {
        let tick = if peek_created.contains(d) {
            first_tick(sh.step, k)
        } else {
            last_tick(sh.step, k)
        };
        for m in &byz.msgs[d] {
            out.push(
                tick,
                EventKind::TargetedSend {
                    node: asg.node(*sh),
                    msg: *m,
                    to: vec![],
                },
            );
        }
    }
    for (sp, msgs) in &relay {
        let f = asg.forwarder(*sp);
        if joined.insert(f) {
            out.push(
                first_tick(*sp, k),
                EventKind::Join {
                    node: f,
                    role: Role::Faulty,
                    input: None,
                },
            );
            out.push(last_tick(*sp, k), EventKind::Leave { node: f });
        }
        receives
            .entry((first_tick(*sp, k), f))
            .or_default()
            .extend(msgs.iter().copied());
    }
    for ((tick, node), msgs) in receives {
        for m in msgs {
            out.push(
                tick,
                EventKind::Receive {
                    node,
                    msg: m,
                    from: Some(generator(&m)),
                },
            );
        }
    }
    for ((tick, node, msg), to) in forwards {
        out.push(
            tick,
            EventKind::TargetedSend {
                node,
                msg,
                to: to.into_iter().collect(),
            },
        );
    }
    out.normalize();
    Ok(out)
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum Observed {
    Join,
    Leave,
    Receive(MsgId),
    Broadcast(MsgId),
}

fn observed(trace: &Trace, validator: &mut Validator) -> BTreeMap<NodeId, BTreeSet<(u64, Observed)>> {
    let mut out: BTreeMap<NodeId, BTreeSet<(u64, Observed)>> = BTreeMap::new();
    for e in &trace.events {
        let node = e.kind.node();
        if !node.is_correct() {
            continue;
        }
        let o = match &e.kind {
            EventKind::Join { .. } => Observed::Join,
            EventKind::Leave { .. } => Observed::Leave,
            EventKind::Receive { msg, .. } if validator.is_valid(&trace.gorilla, msg) => Observed::Receive(*msg),
            EventKind::Broadcast { msg, .. } => Observed::Broadcast(*msg),
            _ => continue,
        };
        out.entry(node).or_default().insert((e.tick, o));
    }
    out
}

fn describe(o: &Observed) -> String {
    match o {
        Observed::Join => "join".into(),
        Observed::Leave => "leave".into(),
        Observed::Receive(m) => format!("receipt of {}", m.short()),
        Observed::Broadcast(m) => format!("broadcast of {}", m.short()),
    }
}

/// The three reorg conditions, decision preservation, and GM+ legality
/// of the result.
pub fn check_reorg(gm: &Trace, gmplus: &Trace) -> Report {
    let mut r = Report::default();
    let key = VerifyKey {
        seed: gm.seed,
        k: gm.env.k,
    };
    let mut vg = Validator::new(key, gm.t);
    let mut vp = Validator::new(key, gmplus.t);
    let k = gmplus.k();

    let a = observed(gm, &mut vg);
    let b = observed(gmplus, &mut vp);
    let nodes: BTreeSet<&NodeId> = a.keys().chain(b.keys()).collect();
    let empty = BTreeSet::new();
    for n in nodes {
        let (x, y) = (a.get(n).unwrap_or(&empty), b.get(n).unwrap_or(&empty));
        for (t, o) in x.difference(y) {
            r.flag("reorg-1", Some(*t), format!("{n}: {} missing after reorg", describe(o)));
        }
        for (t, o) in y.difference(x) {
            r.flag("reorg-1", Some(*t), format!("{n}: {} added by reorg", describe(o)));
        }
    }

    let mut life: BTreeMap<NodeId, (Option<u64>, Option<u64>)> = BTreeMap::new();
    for e in &gmplus.events {
        let node = e.kind.node();
        if node.is_correct() {
            continue;
        }
        match &e.kind {
            EventKind::Join { .. } => {
                if life.entry(node).or_default().0.replace(e.tick).is_some() {
                    r.flag("reorg-2", Some(e.tick), format!("{node} joins twice"));
                }
            }
            EventKind::Leave { .. } => life.entry(node).or_default().1 = Some(e.tick),
            _ => {}
        }
    }
    for (node, (j, l)) in &life {
        match (j, l) {
            (Some(j), Some(l)) if j % k == 0 && *l == j + k - 1 => {}
            _ => r.flag(
                "reorg-2",
                *j,
                format!("{node} is not active for exactly one step ({j:?}..{l:?})"),
            ),
        }
    }
    for e in &gmplus.events {
        let node = e.kind.node();
        if node.is_correct() {
            continue;
        }
        let Some(&(Some(j), l)) = life.get(&node) else {
            r.flag("reorg-2", Some(e.tick), format!("{node} acts without joining"));
            continue;
        };
        match &e.kind {
            EventKind::Receive { msg, .. } => {
                if e.tick != j {
                    r.flag("reorg-2", Some(e.tick), format!("{node} receives after its first tick"));
                }
                if !vp.is_valid(&gmplus.gorilla, msg) {
                    r.flag(
                        "reorg-2",
                        Some(e.tick),
                        format!("{node} receives invalid {}", msg.short()),
                    );
                }
            }
            EventKind::TargetedSend { msg, to, .. } => {
                if !to.is_empty() && Some(e.tick) != l {
                    r.flag("reorg-2", Some(e.tick), format!("{node} sends before its last tick"));
                }
                if !vp.is_valid(&gmplus.gorilla, msg) {
                    r.flag(
                        "reorg-2",
                        Some(e.tick),
                        format!("{node} handles invalid {}", msg.short()),
                    );
                }
            }
            _ => {}
        }
    }

    let first_byz_send = |tr: &Trace| {
        let mut m: BTreeMap<MsgId, u64> = BTreeMap::new();
        for e in &tr.events {
            if let EventKind::TargetedSend { node, msg, .. } = &e.kind {
                if !node.is_correct() {
                    m.entry(*msg).or_insert(e.tick);
                }
            }
        }
        m
    };
    let plus_sends = first_byz_send(gmplus);
    let gens = gm.generators();
    for (m, t) in first_byz_send(gm) {
        if gens.get(&m).is_some_and(|g| g.1.is_correct()) || !vg.is_valid(&gm.gorilla, &m) {
            continue;
        }
        match plus_sends.get(&m) {
            Some(&tp) if tp / k <= t / gm.k() => {}
            Some(&tp) => r.flag(
                "reorg-3",
                Some(tp),
                format!(
                    "{} sent at step {} after reorg, step {} before",
                    m.short(),
                    tp / k,
                    t / gm.k()
                ),
            ),
            None => r.flag("reorg-3", Some(t), format!("{} is never sent after reorg", m.short())),
        }
    }

    let da: BTreeSet<_> = gm.decisions().into_iter().collect();
    let db: BTreeSet<_> = gmplus.decisions().into_iter().collect();
    for d in da.symmetric_difference(&db) {
        r.flag(
            "decisions",
            Some(d.0),
            format!("{} decides {} in round {} in only one trace", d.1, d.2, d.3),
        );
    }

    for (t, v) in crate::engine::check_legality(gmplus).violations {
        r.flag("legality", Some(t), v);
    }
    r
}

/// The four timing claims about a shell assignment, against spans
/// recomputed from the GM trace.
pub fn check_claims(gm: &Trace, asg: &ShellAssignment) -> Report {
    let mut r = Report::default();
    let k = gm.k();
    let mut validator = Validator::new(
        VerifyKey {
            seed: gm.seed,
            k: gm.env.k,
        },
        gm.t,
    );
    let byz = match byzantine_vdfs(gm, &mut validator) {
        Ok(b) => b,
        Err(e) => {
            r.flag("assignment", None, e.to_string());
            return r;
        }
    };
    let mut placed: Vec<(Hash32, VdfSpan, u64)> = Vec::new();
    for (d, span) in &byz.spans {
        match asg.shells.get(d) {
            Some(sh) => placed.push((*d, *span, sh.step)),
            None => r.flag("assignment", Some(span.last), format!("vdf {} has no shell", d.short())),
        }
    }
    for d in asg.shells.keys().filter(|d| !byz.spans.contains_key(d)) {
        r.flag("assignment", None, format!("shell for unknown vdf {}", d.short()));
    }
    for (d, span, s) in &placed {
        if *s < span.first / k {
            r.flag(
                "claim-1",
                Some(span.first),
                format!("vdf {} placed at step {s} before its first unit", d.short()),
            );
        }
        if *s > span.last / k {
            r.flag(
                "claim-2",
                Some(span.last),
                format!("vdf {} placed at step {s} after its last unit", d.short()),
            );
        }
    }
    for (d2, span2, s2) in &placed {
        let before = placed.iter().filter(|(_, sp, _)| sp.last < span2.first);
        let after = placed.iter().filter(|(_, sp, _)| sp.first > span2.last);
        if let Some((d1, _, s1)) = before.clone().max_by_key(|x| x.2) {
            if s1 > s2 {
                r.flag(
                    "claim-3",
                    None,
                    format!("vdf {} at step {s1} precedes {} at step {s2}", d1.short(), d2.short()),
                );
            }
            if let Some((d3, _, s3)) = after.min_by_key(|x| x.2) {
                if s1 >= s3 {
                    r.flag(
                        "claim-4",
                        None,
                        format!(
                            "vdfs {} → {} → {} at steps {s1}, {s2}, {s3}",
                            d1.short(),
                            d2.short(),
                            d3.short()
                        ),
                    );
                }
            }
        }
    }
    r
}
