use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::adversary::{SchedView, Scheduler};
use crate::env::{validate_environment, Environment};
use crate::error::EngineError;
use crate::message::ProtoMsg;
use crate::sandglass::{SandglassNode, SeededCoins};
use crate::trace::{EventKind, Model, Trace};
use crate::types::{threshold, MsgId, NodeId, Role, Value};

/// The per-step view of an environment: one tick per step, defective
/// slots as the minimum Byzantine capacity over the step's ticks.
pub fn step_environment(env: &Environment) -> Environment {
    let k = u64::from(env.k);
    Environment {
        k: 1,
        n: env.n,
        correct: env
            .correct
            .iter()
            .map(|c| crate::env::CorrectSpec {
                id: c.id,
                input: c.input,
                join: c.join / k,
                leave: c.leave.map(|l| l / k),
            })
            .collect(),
        capacity: (0..env.max_steps).map(|s| env.step_cap(s)).collect(),
        capacity_default: env.capacity_default,
        max_steps: env.max_steps,
    }
}

fn sub_seed(seed: u64, node: NodeId, purpose: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"gorilla-smplus");
    h.update(seed.to_be_bytes());
    h.update(node.to_string().as_bytes());
    h.update(purpose);
    u64::from_be_bytes(h.finalize()[..8].try_into().unwrap())
}

struct Member {
    node: SandglassNode,
    coins: SeededCoins,
    received: BTreeSet<MsgId>,
}

impl Member {
    fn new(id: NodeId, input: Value, t: u64, seed: u64) -> Self {
        Member {
            node: SandglassNode::init(id, input, t),
            coins: SeededCoins::new(sub_seed(seed, id, b"coins")),
            received: BTreeSet::new(),
        }
    }
}

/// Runs Sandglass in SM+: good nodes are synchronous, defective nodes run
/// the same algorithm but see only what the scheduler hands them.
pub fn run_smplus(env: &Environment, scheduler: &mut dyn Scheduler, seed: u64) -> Result<Trace, EngineError> {
    if let Some(p) = validate_environment(env).first() {
        return Err(EngineError::InvalidEnvironment(p.to_string()));
    }
    let senv = step_environment(env);
    let t = threshold(env.n);
    let mut trace = Trace::new(Model::SmPlus, seed, t, senv.clone());
    let mut good: BTreeMap<u32, Member> = BTreeMap::new();
    let mut defective: BTreeMap<u32, Member> = BTreeMap::new();
    // (id, step, sender) in send order
    let mut sent: Vec<(MsgId, u64, NodeId)> = Vec::new();
    let mut last_good: Vec<(MsgId, NodeId)> = Vec::new();
    let mut own_last: BTreeMap<NodeId, MsgId> = BTreeMap::new();

    for s in 0..senv.max_steps {
        let cap = senv.cap(s);
        let prev_cap = if s == 0 { 0 } else { senv.cap(s - 1) };
        for c in senv.correct.iter().filter(|c| c.join == s) {
            trace.push(
                s,
                EventKind::Join {
                    node: NodeId::Correct(c.id),
                    role: Role::Correct,
                    input: Some(c.input),
                },
            );
            good.insert(c.id, Member::new(NodeId::Correct(c.id), c.input, t, seed));
        }
        for b in prev_cap..cap {
            let id = NodeId::Byz(b);
            let input = Value::from_bit(sub_seed(seed, id, b"input"));
            trace.push(
                s,
                EventKind::Join {
                    node: id,
                    role: Role::Faulty,
                    input: Some(input),
                },
            );
            defective.entry(b).or_insert_with(|| Member::new(id, input, t, seed));
        }

        let good_ids: Vec<NodeId> = good.keys().map(|&i| NodeId::Correct(i)).collect();
        let def_ids: Vec<NodeId> = defective
            .keys()
            .filter(|&&b| b < cap)
            .map(|&b| NodeId::Byz(b))
            .collect();
        let backlog: BTreeMap<NodeId, Vec<MsgId>> = def_ids
            .iter()
            .map(|n| {
                let m = &defective[&n.index()];
                let ids = sent
                    .iter()
                    .filter(|x| !m.received.contains(&x.0))
                    .map(|x| x.0)
                    .collect();
                (*n, ids)
            })
            .collect();
        let unreleased: Vec<(MsgId, u64, Vec<NodeId>)> = sent
            .iter()
            .filter(|x| !x.2.is_correct())
            .filter_map(|&(m, step, _)| {
                let to: Vec<NodeId> = good_ids
                    .iter()
                    .filter(|g| !good[&g.index()].received.contains(&m))
                    .copied()
                    .collect();
                (!to.is_empty()).then_some((m, step, to))
            })
            .collect();
        let plan = scheduler.plan(&SchedView {
            step: s,
            store: &trace.sandglass,
            good: &good_ids,
            defective: &def_ids,
            backlog: &backlog,
            unreleased: &unreleased,
        });
        let illegal = |reason: String| EngineError::IllegalStrategyAction { tick: s, reason };
        let mut def_in: BTreeMap<NodeId, Vec<MsgId>> = BTreeMap::new();
        for &(n, m) in &plan.to_defective {
            if !backlog.get(&n).is_some_and(|b| b.contains(&m)) {
                return Err(illegal(format!("delivery of {m:?} to {n} is not pending")));
            }
            def_in.entry(n).or_default().push(m);
        }
        let mut released: BTreeMap<NodeId, Vec<MsgId>> = BTreeMap::new();
        for &(n, m) in &plan.release {
            if !unreleased.iter().any(|(x, _, to)| *x == m && to.contains(&n)) {
                return Err(illegal(format!("release of {m:?} to {n} is not pending")));
            }
            released.entry(n).or_default().push(m);
        }
        if let Some(n) = plan.late.iter().find(|n| !def_ids.contains(n)) {
            return Err(illegal(format!("{n} is not an active defective node")));
        }

        let mut emitted: Vec<(MsgId, NodeId)> = Vec::new();
        let deliver = |trace: &mut Trace, member: &mut Member, inbox: Vec<(MsgId, NodeId)>| -> Vec<MsgId> {
            let mut ids = Vec::new();
            for (m, from) in inbox {
                if member.received.insert(m) {
                    trace.push(
                        s,
                        EventKind::Receive {
                            node: member.node.id,
                            msg: m,
                            from: Some(from),
                        },
                    );
                    ids.push(m);
                }
            }
            ids
        };
        let sender_of = |sent: &[(MsgId, u64, NodeId)], m: &MsgId| sent.iter().find(|x| x.0 == *m).unwrap().2;

        // good nodes
        for (&id, member) in good.iter_mut() {
            let mut inbox = last_good.clone();
            if senv.spec(id).is_some_and(|c| c.join == s) {
                inbox.extend(sent.iter().filter(|x| x.2.is_correct()).map(|x| (x.0, x.2)));
            }
            for m in released.remove(&NodeId::Correct(id)).unwrap_or_default() {
                inbox.push((m, sender_of(&sent, &m)));
            }
            let ids = deliver(&mut trace, member, inbox);
            let out = member.node.run_step(&ids, &trace.sandglass, &mut member.coins);
            emit(&mut trace, s, member.node.id, out, &mut emitted);
        }
        // defective nodes, early then late
        for late in [false, true] {
            let early_msgs: Vec<(MsgId, NodeId)> = emitted.iter().filter(|x| !x.1.is_correct()).copied().collect();
            for &n in def_ids.iter().filter(|n| plan.late.contains(n) == late) {
                let member = defective.get_mut(&n.index()).unwrap();
                let mut inbox: Vec<(MsgId, NodeId)> = Vec::new();
                if let Some(&m) = own_last.get(&n) {
                    inbox.push((m, n));
                }
                for m in def_in.remove(&n).unwrap_or_default() {
                    inbox.push((m, sender_of(&sent, &m)));
                }
                if late {
                    inbox.extend(early_msgs.iter().copied());
                }
                let ids = deliver(&mut trace, member, inbox);
                let out = member.node.run_step(&ids, &trace.sandglass, &mut member.coins);
                emit(&mut trace, s, n, out, &mut emitted);
            }
        }
        for member in good.values().chain(def_ids.iter().map(|n| &defective[&n.index()])) {
            let c = &member.node.core;
            trace.push(
                s,
                EventKind::State {
                    node: member.node.id,
                    round: c.r,
                    value: c.v,
                    uc: c.uc,
                    priority: c.priority,
                },
            );
        }
        last_good.clear();
        for &(m, n) in &emitted {
            sent.push((m, s, n));
            own_last.insert(n, m);
            if n.is_correct() {
                last_good.push((m, n));
            }
        }

        let leaving: Vec<u32> = senv
            .correct
            .iter()
            .filter(|c| c.leave == Some(s + 1))
            .map(|c| c.id)
            .collect();
        for id in leaving {
            good.remove(&id);
            trace.push(
                s,
                EventKind::Leave {
                    node: NodeId::Correct(id),
                },
            );
        }
        for b in senv.cap(s + 1)..cap {
            trace.push(s, EventKind::Leave { node: NodeId::Byz(b) });
        }

        let later = senv.correct.iter().any(|c| c.join > s);
        if !later && !good.is_empty() && good.values().all(|m| m.node.core.decided.is_some()) {
            break;
        }
    }
    trace.normalize();
    Ok(trace)
}

fn emit(
    trace: &mut Trace,
    s: u64,
    node: NodeId,
    out: crate::sandglass::SandglassOutput,
    emitted: &mut Vec<(MsgId, NodeId)>,
) {
    let round = out.message.round();
    let msg = trace
        .sandglass
        .intern(out.message)
        .expect("coffer members are interned");
    trace.push(s, EventKind::Broadcast { node, msg });
    if let Some(bit) = out.coin {
        trace.push(s, EventKind::CoinOutcome { node, bit });
    }
    if let Some(value) = out.decision {
        trace.push(s, EventKind::Decide { node, value, round });
    }
    emitted.push((msg, node));
}
