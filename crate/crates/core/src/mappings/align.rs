use std::collections::{BTreeMap, HashMap, VecDeque};

use super::Report;
use crate::error::MappingError;
use crate::message::{mapm_all, Attribution, MessageStore, SandglassMessage, Validator, VerifyKey};
use crate::sandglass::{CoinStream, SandglassNode, SandglassOutput};
use crate::trace::{EventKind, Trace};
use crate::types::{MsgId, NodeId, Value};

/// Coin bits taken from a trace; running dry is recorded, not fatal.
struct Tape {
    bits: VecDeque<u8>,
    exhausted: bool,
}

impl CoinStream for Tape {
    fn next_bit(&mut self) -> u8 {
        self.bits.pop_front().unwrap_or_else(|| {
            self.exhausted = true;
            0
        })
    }
}

/// Per-step outputs of one good node driven by prescribed deliveries.
#[derive(Clone, Debug)]
pub struct GoodReplay {
    pub steps: Vec<(u64, SandglassOutput)>,
    pub coins_exhausted: bool,
    pub coins_left: usize,
}

pub struct GoodNodePlan<'a> {
    pub id: NodeId,
    pub input: Value,
    pub steps: Vec<u64>,
    pub deliveries: &'a BTreeMap<u64, Vec<MsgId>>,
    pub coins: Vec<u8>,
}

/// Runs Sandglass for each node over its steps, feeding the given
/// deliveries and coin bits.
pub fn replay_good_nodes(
    store: &MessageStore<SandglassMessage>,
    t: u64,
    plans: &[GoodNodePlan<'_>],
) -> BTreeMap<NodeId, GoodReplay> {
    let none = Vec::new();
    plans
        .iter()
        .map(|p| {
            let mut node = SandglassNode::init(p.id, p.input, t);
            let mut tape = Tape {
                bits: p.coins.iter().copied().collect(),
                exhausted: false,
            };
            let steps = p
                .steps
                .iter()
                .map(|&s| {
                    (
                        s,
                        node.run_step(p.deliveries.get(&s).unwrap_or(&none), store, &mut tape),
                    )
                })
                .collect();
            (
                p.id,
                GoodReplay {
                    steps,
                    coins_exhausted: tape.exhausted,
                    coins_left: tape.bits.len(),
                },
            )
        })
        .collect()
}

/// Sender and per-sender ordinal of every valid generated message.
pub(crate) fn attribution(trace: &Trace, validator: &mut Validator) -> Attribution {
    let mut count: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut out = Attribution::new();
    for (_, (m, node)) in generation_order(trace) {
        if !out.contains_key(&m) && validator.is_valid(&trace.gorilla, &m) {
            let c = count.entry(node).or_insert(0);
            *c += 1;
            out.insert(m, (node, *c));
        }
    }
    out
}

/// First emissions in event order.
pub(crate) fn generation_order(trace: &Trace) -> Vec<(u64, (MsgId, NodeId))> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for e in &trace.events {
        if let EventKind::Broadcast { node, msg } | EventKind::TargetedSend { node, msg, .. } = &e.kind {
            if seen.insert(*msg) {
                out.push((e.tick, (*msg, *node)));
            }
        }
    }
    out
}

pub(crate) struct Mapped {
    pub store: MessageStore<SandglassMessage>,
    pub memo: HashMap<MsgId, MsgId>,
}

pub(crate) fn map_trace(trace: &Trace, validator: &mut Validator) -> Result<Mapped, MappingError> {
    let attribution = attribution(trace, validator);
    let (store, memo) = mapm_all(&trace.gorilla, &attribution)?;
    Ok(Mapped { store, memo })
}

/// Replays every correct node of a GM or GM+ trace as a Sandglass good
/// node: deliveries are the mapped valid receipts, coins are the vdf
/// parities the node used. Each step's output must equal the mapped
/// broadcast, and decisions and coin use must line up.
pub fn alignment_replay(trace: &Trace) -> Report {
    let mut r = Report::default();
    let k = trace.k();
    let mut validator = Validator::new(
        VerifyKey {
            seed: trace.seed,
            k: trace.env.k,
        },
        trace.t,
    );
    let mapped = match map_trace(trace, &mut validator) {
        Ok(m) => m,
        Err(e) => {
            r.flag("alignment", None, e.to_string());
            return r;
        }
    };
    let mut deliveries: BTreeMap<NodeId, BTreeMap<u64, Vec<MsgId>>> = BTreeMap::new();
    let mut sent: BTreeMap<NodeId, Vec<(u64, MsgId)>> = BTreeMap::new();
    let mut coins: BTreeMap<NodeId, Vec<(u64, u8)>> = BTreeMap::new();
    let mut decided: BTreeMap<(NodeId, u64), Value> = BTreeMap::new();
    for e in &trace.events {
        let s = e.tick / k;
        match &e.kind {
            EventKind::Receive { node, msg, .. } if node.is_correct() => {
                if let Some(sid) = mapped.memo.get(msg) {
                    deliveries.entry(*node).or_default().entry(s).or_default().push(*sid);
                }
            }
            EventKind::Broadcast { node, msg } => sent.entry(*node).or_default().push((s, *msg)),
            EventKind::CoinOutcome { node, bit } => coins.entry(*node).or_default().push((s, *bit)),
            EventKind::Decide { node, value, .. } => {
                decided.insert((*node, s), *value);
            }
            _ => {}
        }
    }
    let empty = BTreeMap::new();
    let plans: Vec<GoodNodePlan<'_>> = trace
        .env
        .correct
        .iter()
        .map(|c| {
            let id = NodeId::Correct(c.id);
            GoodNodePlan {
                id,
                input: c.input,
                steps: sent
                    .get(&id)
                    .map(|v| v.iter().map(|x| x.0).collect())
                    .unwrap_or_default(),
                deliveries: deliveries.get(&id).unwrap_or(&empty),
                coins: coins
                    .get(&id)
                    .map(|v| v.iter().map(|x| x.1).collect())
                    .unwrap_or_default(),
            }
        })
        .collect();
    let replays = replay_good_nodes(&mapped.store, trace.t, &plans);
    for (id, rep) in &replays {
        let node_coins: BTreeMap<u64, u8> = coins.get(id).map(|v| v.iter().copied().collect()).unwrap_or_default();
        for ((s, out), (_, gmsg)) in rep.steps.iter().zip(&sent[id]) {
            let tick = Some(s * k + k - 1);
            let want = mapped.memo.get(gmsg).and_then(|x| mapped.store.get(x));
            match want {
                Some(w) if *w == out.message => {}
                Some(w) => r.flag(
                    "alignment",
                    tick,
                    format!(
                        "{id} step {s}: sandglass (r={} v={} uc={} p={}) vs gorilla (r={} v={} uc={} p={}){}",
                        out.message.round,
                        out.message.value,
                        out.message.uc,
                        out.message.priority,
                        w.round,
                        w.value,
                        w.uc,
                        w.priority,
                        if w.coffer == out.message.coffer {
                            ""
                        } else {
                            ", coffers differ"
                        }
                    ),
                ),
                None => r.flag(
                    "alignment",
                    tick,
                    format!("{id} step {s}: broadcast {} is not mappable", gmsg.short()),
                ),
            }
            if out.decision != decided.get(&(*id, *s)).copied() {
                r.flag(
                    "alignment",
                    tick,
                    format!(
                        "{id} step {s}: decision {:?} vs {:?}",
                        out.decision,
                        decided.get(&(*id, *s))
                    ),
                );
            }
            if out.coin != node_coins.get(s).copied() {
                r.flag(
                    "alignment",
                    tick,
                    format!(
                        "{id} step {s}: coin {:?} vs vdf parity {:?}",
                        out.coin,
                        node_coins.get(s)
                    ),
                );
            }
        }
        if rep.coins_exhausted || rep.coins_left > 0 {
            r.flag(
                "alignment",
                None,
                format!("{id}: coin tape mismatch ({} left)", rep.coins_left),
            );
        }
    }
    r
}
