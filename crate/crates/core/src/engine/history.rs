//! Message histories and the compatibility of a proposed next-step
//! delivery set.

use std::collections::{BTreeMap, BTreeSet};

use crate::message::{Validator, VerifyKey};
use crate::trace::{EventKind, Model, Trace};
use crate::types::{last_tick, MsgId, NodeId};

/// (message, receiving correct node, step of receipt).
pub type HistoryEntry = (MsgId, NodeId, u64);

/// Every receipt by a correct node at a step ≤ `s`.
pub fn message_history(trace: &Trace, s: u64) -> BTreeSet<HistoryEntry> {
    trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Receive { node, msg, .. } if node.is_correct() && trace.step(e.tick) <= s => {
                Some((*msg, *node, trace.step(e.tick)))
            }
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Compatibility {
    pub reasons: Vec<String>,
}

impl Compatibility {
    pub fn holds(&self) -> bool {
        self.reasons.is_empty()
    }
}

/// Whether every proposed delivery `(m, p)` at step `s + 1` could occur
/// after `history` (the receipts through step `s`) in some legal run of
/// the trace's environment. Messages not broadcast by a correct node by
/// step `s` are Byzantine; their whole Byzantine ancestry must fit in the
/// Get budget of ticks up to the end of step `s`, and (in GM) each one
/// must be able to finish K ticks after its latest Byzantine dependency.
pub fn check_compatibility(
    trace: &Trace,
    history: &BTreeSet<HistoryEntry>,
    s: u64,
    proposal: &[(MsgId, NodeId)],
) -> Compatibility {
    let mut out = Compatibility::default();
    let k = trace.k();
    let env = &trace.env;
    let end = last_tick(s, k);
    let mut validator = Validator::new(
        VerifyKey {
            seed: trace.seed,
            k: env.k,
        },
        trace.t,
    );
    let correct_at: BTreeMap<MsgId, u64> = trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Broadcast { node, msg } if node.is_correct() && e.tick <= end => Some((*msg, e.tick)),
            _ => None,
        })
        .collect();
    let budget: u64 = (0..=end).map(|t| u64::from(env.cap(t))).sum();
    let mut earliest: BTreeMap<MsgId, u64> = BTreeMap::new();
    for (m, p) in proposal {
        if !p.is_correct() {
            out.reasons.push(format!("{p} is not a correct node"));
            continue;
        }
        if !env.active_in_step(p.index(), s + 1) {
            out.reasons.push(format!("{p} is not active in step {}", s + 1));
        }
        if history.contains(&(*m, *p, s + 1)) {
            continue;
        }
        if !validator.is_valid(&trace.gorilla, m) {
            out.reasons.push(format!("{} is not valid", m.short()));
            continue;
        }
        let closure = trace.gorilla.closure([m]);
        let byz: Vec<&MsgId> = closure.iter().filter(|x| !correct_at.contains_key(x)).collect();
        if byz.len() as u64 * k > budget {
            out.reasons.push(format!(
                "{} needs {} Byzantine Get calls, capacity through step {s} allows {budget}",
                m.short(),
                byz.len() as u64 * k
            ));
            continue;
        }
        if trace.model == Model::Gm {
            let ec = earliest_completion(trace, &correct_at, &mut earliest, m);
            if ec > end {
                out.reasons
                    .push(format!("{} cannot be finished before tick {ec}", m.short()));
            }
        }
    }
    out
}

/// Earliest tick a message can be complete: a correct broadcast tick, or
/// K−1 ticks after the tick following its latest dependency.
fn earliest_completion(
    trace: &Trace,
    correct_at: &BTreeMap<MsgId, u64>,
    memo: &mut BTreeMap<MsgId, u64>,
    m: &MsgId,
) -> u64 {
    if let Some(&t) = correct_at.get(m).or(memo.get(m)) {
        return t;
    }
    let k = trace.k();
    let coffer = trace.gorilla.get(m).map(|x| x.coffer.clone()).unwrap_or_default();
    let start = coffer
        .iter()
        .map(|c| earliest_completion(trace, correct_at, memo, c) + 1)
        .max()
        .unwrap_or(0);
    let t = start + k - 1;
    memo.insert(*m, t);
    t
}
