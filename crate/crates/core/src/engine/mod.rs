//! Lock-step simulator for GM and GM+ (this file) and SM+ (`smplus`).
//!
//! Within a tick events happen in a fixed order: joins, receipts, oracle
//! calls, emissions (broadcasts, sends, coins, decisions), leaves.
//! Correct nodes receive only at a step's first tick and broadcast at its
//! last; Byzantine sends are confined to last ticks too, so every receipt
//! by a correct node happens at a first tick.

mod history;
mod legality;
mod smplus;

use std::collections::{BTreeMap, BTreeSet};

pub use history::{check_compatibility, message_history, Compatibility, HistoryEntry};
pub use legality::{check_legality, check_smplus_legality, Legality};
pub use smplus::{run_smplus, step_environment};

use crate::adversary::{Action, AdvView, Chain, Strategy};
use crate::env::{validate_environment, Environment};
use crate::error::EngineError;
use crate::gorilla::GorillaNode;
use crate::message::{GorillaMessage, MessageStore, ProtoMsg, Validator, VerifyKey};
use crate::oracle::{Mode, OracleLedger, VdfInput};
use crate::trace::{EventKind, Model, Trace};
use crate::types::{threshold, Hash32, MsgId, NodeId, Role};

fn illegal(tick: u64, reason: impl Into<String>) -> EngineError {
    EngineError::IllegalStrategyAction {
        tick,
        reason: reason.into(),
    }
}

/// Adversary memory, shared by all slots.
#[derive(Default)]
struct Adversary {
    known: Vec<MsgId>,
    known_set: BTreeSet<MsgId>,
    known_valid: BTreeSet<MsgId>,
    usable_from: BTreeMap<MsgId, u64>,
    chains: BTreeMap<Hash32, Chain>,
    /// Correct broadcasts not yet seen by any slot.
    pending: Vec<(MsgId, NodeId)>,
}

impl Adversary {
    fn learn(&mut self, store: &MessageStore<GorillaMessage>, validator: &mut Validator, id: MsgId, usable: u64) {
        let mut fresh: Vec<MsgId> = store
            .closure([&id])
            .into_iter()
            .filter(|x| !self.known_set.contains(x))
            .collect();
        fresh.sort_by_key(|x| store.position(x));
        for x in fresh {
            self.known_set.insert(x);
            self.known.push(x);
            if validator.is_valid(store, &x) {
                self.known_valid.insert(x);
            }
            self.usable_from.entry(x).or_insert(usable);
        }
    }
}

struct Gm<'a> {
    env: &'a Environment,
    model: Model,
    k: u64,
    t: u64,
    trace: Trace,
    oracle: OracleLedger,
    validator: Validator,
    nodes: BTreeMap<u32, GorillaNode>,
    inbox: BTreeMap<u32, Vec<(MsgId, NodeId)>>,
    correct_log: Vec<(MsgId, NodeId)>,
    adv: Adversary,
}

/// Runs a GM or GM+ execution.
pub fn run_gm(env: &Environment, strategy: &mut dyn Strategy, seed: u64, model: Model) -> Result<Trace, EngineError> {
    if model == Model::SmPlus {
        return Err(EngineError::InvalidEnvironment("SM+ runs take a scheduler".into()));
    }
    let problems = validate_environment(env);
    if let Some(p) = problems.first() {
        return Err(EngineError::InvalidEnvironment(p.to_string()));
    }
    let t = threshold(env.n);
    let mode = if model == Model::GmPlus {
        Mode::Plus
    } else {
        Mode::Plain
    };
    let mut gm = Gm {
        env,
        model,
        k: u64::from(env.k),
        t,
        trace: Trace::new(model, seed, t, env.clone()),
        oracle: OracleLedger::new(seed, env.k, mode),
        validator: Validator::new(VerifyKey { seed, k: env.k }, t),
        nodes: BTreeMap::new(),
        inbox: BTreeMap::new(),
        correct_log: Vec::new(),
        adv: Adversary::default(),
    };
    for step in 0..env.max_steps {
        for j in 0..gm.k {
            gm.tick(step * gm.k + j, strategy)?;
        }
        if gm.all_done(step) {
            break;
        }
    }
    gm.trace.normalize();
    Ok(gm.trace)
}

impl Gm<'_> {
    fn all_done(&self, step: u64) -> bool {
        let end = (step + 1) * self.k;
        let later_joins = self.env.correct.iter().any(|c| c.join >= end);
        !later_joins && !self.nodes.is_empty() && self.nodes.values().all(|n| n.core.decided.is_some())
    }

    fn tick(&mut self, tick: u64, strategy: &mut dyn Strategy) -> Result<(), EngineError> {
        let k = self.k;
        let offset = tick % k;
        let step = tick / k;
        let cap = self.env.cap(tick);
        let prev_cap = if tick == 0 { 0 } else { self.env.cap(tick - 1) };

        // joins
        for c in self.env.correct.iter().filter(|c| c.join == tick) {
            self.trace.push(
                tick,
                EventKind::Join {
                    node: NodeId::Correct(c.id),
                    role: Role::Correct,
                    input: Some(c.input),
                },
            );
            self.nodes.insert(c.id, GorillaNode::init(c.id, c.input, self.t));
        }
        for b in prev_cap..cap {
            self.trace.push(
                tick,
                EventKind::Join {
                    node: NodeId::Byz(b),
                    role: Role::Faulty,
                    input: None,
                },
            );
        }

        // receipts
        if offset == 0 {
            let ids: Vec<u32> = self.nodes.keys().copied().collect();
            for id in ids {
                let mut got = self.inbox.remove(&id).unwrap_or_default();
                if self.env.spec(id).is_some_and(|c| c.join == tick) {
                    let have: BTreeSet<MsgId> = got.iter().map(|x| x.0).collect();
                    got.extend(self.correct_log.iter().filter(|x| !have.contains(&x.0)).copied());
                }
                for (msg, from) in &got {
                    self.trace.push(
                        tick,
                        EventKind::Receive {
                            node: NodeId::Correct(id),
                            msg: *msg,
                            from: Some(*from),
                        },
                    );
                }
                let delivered: Vec<MsgId> = got.into_iter().map(|x| x.0).collect();
                let node = self.nodes.get_mut(&id).unwrap();
                let input = node.begin_step(step, &delivered, &self.trace.gorilla, &mut self.validator);
                self.trace.register_input(&input);
            }
        }
        if cap >= 1 && !self.adv.pending.is_empty() {
            for (msg, from) in std::mem::take(&mut self.adv.pending) {
                self.trace.push(
                    tick,
                    EventKind::Receive {
                        node: NodeId::Byz(0),
                        msg,
                        from: Some(from),
                    },
                );
                self.adv.learn(&self.trace.gorilla, &mut self.validator, msg, tick);
            }
        }

        // correct oracle calls
        for (id, node) in self.nodes.iter_mut() {
            let input = node.pending_input().unwrap().clone();
            let unit = self
                .oracle
                .get(NodeId::Correct(*id), tick, &input, node.next_prev())
                .expect("correct node Get is always legal");
            node.record_unit(unit);
            self.trace.push(
                tick,
                EventKind::GetCall {
                    node: NodeId::Correct(*id),
                    input: input.digest(),
                    index: node.units_this_step(),
                    unit,
                },
            );
        }

        // adversary
        let correct_next: Vec<u32> = self.env.correct_at(tick + 1).map(|c| c.id).collect();
        let actions = strategy.act(&self.view(tick, cap, &correct_next));
        for a in actions {
            self.apply(tick, cap, a, &correct_next)?;
        }
        let actions = strategy.emit(&self.view(tick, cap, &correct_next));
        for a in actions {
            self.apply(tick, cap, a, &correct_next)?;
        }

        // correct emissions
        if offset + 1 == k {
            let ids: Vec<u32> = self.nodes.keys().copied().collect();
            for id in ids {
                let node = self.nodes.get_mut(&id).unwrap();
                let out = node.finish_step(&self.trace.gorilla);
                let round = out.message.round;
                let msg = self
                    .trace
                    .gorilla
                    .intern(out.message)
                    .expect("correct coffer is interned");
                let me = NodeId::Correct(id);
                self.trace.push(tick, EventKind::Broadcast { node: me, msg });
                if let Some(bit) = out.coin {
                    self.trace.push(tick, EventKind::CoinOutcome { node: me, bit });
                }
                if let Some(value) = out.decision {
                    self.trace.push(tick, EventKind::Decide { node: me, value, round });
                }
                self.correct_log.push((msg, me));
                self.adv.pending.push((msg, me));
                for &r in &correct_next {
                    self.inbox.entry(r).or_default().push((msg, me));
                }
            }
            if self.model == Model::GmPlus {
                if let Some(v) = self.oracle.audit_step(step).first() {
                    return Err(illegal(tick, v.to_string()));
                }
            }
        }

        // leaves
        let leaving: Vec<u32> = self
            .env
            .correct
            .iter()
            .filter(|c| c.leave == Some(tick + 1))
            .map(|c| c.id)
            .collect();
        for id in leaving {
            self.nodes.remove(&id);
            self.inbox.remove(&id);
            self.trace.push(
                tick,
                EventKind::Leave {
                    node: NodeId::Correct(id),
                },
            );
        }
        let next_cap = self.env.cap(tick + 1);
        for b in next_cap..cap {
            self.trace.push(tick, EventKind::Leave { node: NodeId::Byz(b) });
        }
        Ok(())
    }

    fn view<'b>(&'b self, tick: u64, cap: u32, correct_next: &[u32]) -> AdvView<'b> {
        AdvView {
            tick,
            step: tick / self.k,
            offset: tick % self.k,
            k: self.k,
            t: self.t,
            model: self.model,
            cap,
            env: self.env,
            store: &self.trace.gorilla,
            known: &self.adv.known,
            known_valid: &self.adv.known_valid,
            usable_from: &self.adv.usable_from,
            chains: &self.adv.chains,
            correct_next: correct_next.to_vec(),
            key: self.validator.key(),
        }
    }

    fn check_slot(&self, tick: u64, cap: u32, slot: u32) -> Result<NodeId, EngineError> {
        if slot >= cap {
            return Err(illegal(tick, format!("slot b{slot} is not active (capacity {cap})")));
        }
        Ok(NodeId::Byz(slot))
    }

    fn check_coffer(&self, tick: u64, coffer: &[MsgId]) -> Result<(), EngineError> {
        for m in coffer {
            if !self.adv.usable_from.get(m).is_some_and(|&u| u <= tick) {
                return Err(illegal(
                    tick,
                    format!("coffer member {m:?} is not available to the adversary yet"),
                ));
            }
        }
        Ok(())
    }

    fn apply(&mut self, tick: u64, cap: u32, a: Action, correct_next: &[u32]) -> Result<(), EngineError> {
        match a {
            Action::Get { slot, coffer, nonce } => {
                let node = self.check_slot(tick, cap, slot)?;
                let input = VdfInput::new(&coffer, nonce.clone());
                let digest = input.digest();
                let prev = match self.adv.chains.get(&digest) {
                    Some(c) if c.units as u64 >= self.k => {
                        return Err(illegal(tick, "Get on an already completed input"));
                    }
                    Some(c) if c.units > 0 => Some(self.oracle.record(&digest).unwrap().units[c.units as usize - 1]),
                    _ => {
                        self.check_coffer(tick, &coffer)?;
                        None
                    }
                };
                let unit = self
                    .oracle
                    .get(node, tick, &input, prev)
                    .map_err(|e| illegal(tick, e.to_string()))?;
                let k = self.k as u32;
                let chain = self.adv.chains.entry(digest).or_insert_with(|| Chain {
                    coffer: {
                        let mut c = coffer.clone();
                        c.sort();
                        c.dedup();
                        c
                    },
                    nonce,
                    units: 0,
                    first_tick: tick,
                    last_tick: tick,
                    completed_at: None,
                    peeked_at: None,
                    vdf: None,
                });
                chain.units += 1;
                chain.last_tick = tick;
                if chain.units == k {
                    chain.completed_at = Some(tick);
                    chain.vdf = Some(unit);
                }
                let index = chain.units;
                self.trace.register_input(&input);
                self.trace.push(
                    tick,
                    EventKind::GetCall {
                        node,
                        input: digest,
                        index,
                        unit,
                    },
                );
            }
            Action::Peek {
                slot,
                coffer,
                nonce,
                commitment,
            } => {
                let node = self.check_slot(tick, cap, slot)?;
                if self.model != Model::GmPlus {
                    return Err(illegal(tick, "Peek is not available in GM"));
                }
                self.check_coffer(tick, &coffer)?;
                let input = VdfInput::new(&coffer, nonce.clone());
                let digest = input.digest();
                let coffer_inputs: Vec<Hash32> = coffer
                    .iter()
                    .map(|m| self.trace.gorilla.get(m).unwrap().vdf_input().digest())
                    .collect();
                let unit = self
                    .oracle
                    .peek(node, tick, &input, &coffer_inputs, &commitment)
                    .map_err(|e| illegal(tick, e.to_string()))?;
                let chain = self.adv.chains.entry(digest).or_insert_with(|| Chain {
                    coffer: {
                        let mut c = coffer.clone();
                        c.sort();
                        c.dedup();
                        c
                    },
                    nonce,
                    units: 0,
                    first_tick: tick,
                    last_tick: tick,
                    completed_at: None,
                    peeked_at: None,
                    vdf: None,
                });
                chain.peeked_at.get_or_insert(tick);
                chain.vdf = Some(unit);
                self.trace.register_input(&input);
                self.trace.push(
                    tick,
                    EventKind::PeekCall {
                        node,
                        input: digest,
                        unit,
                        commitment,
                    },
                );
            }
            Action::Create { slot, msg } => {
                let node = self.check_slot(tick, cap, slot)?;
                if let Some(m) = msg.coffer.iter().find(|m| !self.adv.known_set.contains(m)) {
                    return Err(illegal(
                        tick,
                        format!("coffer member {m:?} is unknown to the adversary"),
                    ));
                }
                let input = msg.vdf_input();
                let digest = input.digest();
                let id = msg.id();
                let existed = self.trace.gorilla.contains(&id);
                if existed && !self.adv.known_set.contains(&id) {
                    return Err(illegal(tick, "Create of a message the adversary has not seen"));
                }
                let id = self
                    .trace
                    .gorilla
                    .intern(msg.clone())
                    .map_err(|e| illegal(tick, e.to_string()))?;
                let valid = self.validator.is_valid(&self.trace.gorilla, &id);
                let mut usable = tick + 1;
                if valid {
                    let held = self.adv.chains.get(&digest).and_then(|c| {
                        let ready = c.completed_at.map(|t| t + 1).or(c.peeked_at);
                        (c.vdf == Some(msg.vdf)).then_some(ready).flatten()
                    });
                    match held {
                        Some(ready) if ready <= tick + 1 => usable = ready,
                        _ => {
                            return Err(illegal(
                                tick,
                                "valid message whose vdf the adversary did not compute or peek",
                            ))
                        }
                    }
                }
                self.trace.register_input(&input);
                self.trace.push(
                    tick,
                    EventKind::TargetedSend {
                        node,
                        msg: id,
                        to: vec![],
                    },
                );
                if self.adv.known_set.insert(id) {
                    self.adv.known.push(id);
                    if valid {
                        self.adv.known_valid.insert(id);
                    }
                    self.adv.usable_from.insert(id, usable);
                }
            }
            Action::Send { slot, to, msg } => {
                let node = self.check_slot(tick, cap, slot)?;
                if tick % self.k != self.k - 1 {
                    return Err(illegal(tick, "Byzantine sends only at a step's last tick"));
                }
                if !self.adv.known_set.contains(&msg) {
                    return Err(illegal(tick, format!("send of unknown message {msg:?}")));
                }
                let mut to: Vec<u32> = to.into_iter().filter(|r| correct_next.contains(r)).collect();
                to.sort();
                to.dedup();
                if to.is_empty() {
                    return Ok(());
                }
                self.trace.push(
                    tick,
                    EventKind::TargetedSend {
                        node,
                        msg,
                        to: to.iter().map(|&r| NodeId::Correct(r)).collect(),
                    },
                );
                for r in to {
                    let inbox = self.inbox.entry(r).or_default();
                    if !inbox.iter().any(|x| x.0 == msg) {
                        inbox.push((msg, node));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Dispatches on the model: Byzantine strategy for GM/GM+, its scheduler
/// image for SM+.
pub fn run(
    env: &Environment,
    spec: &crate::config::StrategySpec,
    seed: u64,
    model: Model,
) -> Result<Trace, EngineError> {
    match model {
        Model::SmPlus => {
            let mut s = crate::adversary::scheduler_strategy_from(spec, seed);
            run_smplus(env, s.as_mut(), seed)
        }
        _ => {
            let mut s = spec.build(seed).map_err(EngineError::InvalidEnvironment)?;
            run_gm(env, s.as_mut(), seed, model)
        }
    }
}
