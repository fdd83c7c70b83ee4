//! Consensus property checkers over finished traces.
//!
//! Every checker is a pure function of the trace. Termination can only be
//! confirmed, never refuted, by a finite trace, so an undecided node
//! yields `Inconclusive`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::message::{MessageStore, ProtoMsg, Validator, VerifyKey};
use crate::trace::{EventKind, Model, Trace};
use crate::types::{first_tick, MsgId, NodeId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub tick: u64,
    pub node: NodeId,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyReport {
    pub property: &'static str,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
}

impl PropertyReport {
    fn new(property: &'static str) -> Self {
        PropertyReport {
            property,
            verdict: Verdict::Holds,
            witnesses: Vec::new(),
        }
    }

    fn witness(&mut self, tick: u64, node: NodeId, detail: impl Into<String>) {
        self.witnesses.push(Witness {
            tick,
            node,
            detail: detail.into(),
        });
    }

    fn violated(mut self) -> Self {
        if !self.witnesses.is_empty() {
            self.verdict = Verdict::Violated;
        }
        self
    }

    pub fn is_violated(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "property {} {}", self.property, self.verdict)?;
        for w in &self.witnesses {
            writeln!(f, "  witness tick={} {} {}", w.tick, w.node, w.detail)?;
        }
        Ok(())
    }
}

fn correct_decisions(trace: &Trace) -> Vec<(u64, NodeId, Value, u64)> {
    trace.decisions().into_iter().filter(|d| d.1.is_correct()).collect()
}

/// Violated iff two correct decisions differ. The first decision of the
/// first differing node and the conflicting one are the witnesses.
pub fn check_agreement(trace: &Trace) -> PropertyReport {
    let mut r = PropertyReport::new("agreement");
    let ds = correct_decisions(trace);
    if let Some(first) = ds.first() {
        if let Some(other) = ds.iter().find(|d| d.2 != first.2) {
            for d in [first, other] {
                r.witness(d.0, d.1, format!("decides {} in round {}", d.2, d.3));
            }
        }
    }
    r.violated()
}

/// Per node, never two different decided values.
pub fn check_decision_stability(trace: &Trace) -> PropertyReport {
    let mut r = PropertyReport::new("decision-stability");
    let mut first: BTreeMap<NodeId, Value> = BTreeMap::new();
    for (t, n, v, _) in correct_decisions(trace) {
        match first.get(&n) {
            Some(&p) if p != v => r.witness(t, n, format!("decided {p} earlier, now {v}")),
            Some(_) => {}
            None => {
                first.insert(n, v);
            }
        }
    }
    r.violated()
}

/// Applies only to runs with no Byzantine capacity and unanimous inputs.
pub fn check_validity(trace: &Trace) -> PropertyReport {
    let mut r = PropertyReport::new("validity");
    let v = match trace.env.unanimous_input() {
        Some(v) if !trace.env.has_byzantine_capacity() => v,
        _ => {
            r.verdict = Verdict::Inconclusive;
            return r;
        }
    };
    for (t, n, d, round) in correct_decisions(trace) {
        if d != v {
            r.witness(t, n, format!("decides {d} in round {round}, every input was {v}"));
        }
    }
    r.violated()
}

/// Every correct node active through step `n` has decided by the end of
/// step `n`; otherwise inconclusive.
pub fn check_termination(trace: &Trace, n: u64) -> PropertyReport {
    let mut r = PropertyReport::new("termination");
    let k = trace.k();
    let decided: BTreeMap<NodeId, u64> = correct_decisions(trace)
        .into_iter()
        .rev()
        .map(|d| (d.1, d.0 / k))
        .collect();
    for c in &trace.env.correct {
        let through = c.join <= first_tick(n, k) && c.leave.is_none_or(|l| l >= first_tick(n + 1, k));
        if !through {
            continue;
        }
        let id = NodeId::Correct(c.id);
        if !decided.get(&id).is_some_and(|&s| s <= n) {
            r.verdict = Verdict::Inconclusive;
            r.witness(first_tick(n, k), id, format!("undecided by step {n}"));
        }
    }
    r
}

/// A round-r broadcast (r > 1) of a correct node is backed by at least T
/// valid round-(r−1) messages among what the node has received.
pub fn check_threshold(trace: &Trace) -> PropertyReport {
    let mut r = PropertyReport::new("threshold");
    match trace.model {
        Model::SmPlus => threshold_in(trace, &trace.sandglass, &mut r, &mut |_, _| true),
        _ => {
            let mut v = Validator::new(
                VerifyKey {
                    seed: trace.seed,
                    k: trace.env.k,
                },
                trace.t,
            );
            threshold_in(trace, &trace.gorilla, &mut r, &mut |s, m| v.is_valid(s, m));
        }
    }
    r.violated()
}

fn threshold_in<M: ProtoMsg>(
    trace: &Trace,
    store: &MessageStore<M>,
    r: &mut PropertyReport,
    valid: &mut dyn FnMut(&MessageStore<M>, &MsgId) -> bool,
) {
    let mut rec: BTreeMap<NodeId, BTreeSet<MsgId>> = BTreeMap::new();
    let mut per_round: BTreeMap<NodeId, BTreeMap<u64, u64>> = BTreeMap::new();
    for e in &trace.events {
        match &e.kind {
            EventKind::Receive { node, msg, .. } if node.is_correct() => {
                if !store.contains(msg) || !valid(store, msg) {
                    continue;
                }
                let set = rec.entry(*node).or_default();
                for m in store.extend_closed(set, msg) {
                    *per_round
                        .entry(*node)
                        .or_default()
                        .entry(store.get(&m).unwrap().round())
                        .or_insert(0) += 1;
                }
            }
            EventKind::Broadcast { node, msg } if node.is_correct() => {
                let Some(m) = store.get(msg) else { continue };
                let round = m.round();
                if round > 1 {
                    let have = per_round
                        .get(node)
                        .and_then(|p| p.get(&(round - 1)))
                        .copied()
                        .unwrap_or(0);
                    if have < trace.t {
                        r.witness(
                            e.tick,
                            *node,
                            format!(
                                "round {round} with {have} round-{} messages, T = {}",
                                round - 1,
                                trace.t
                            ),
                        );
                    }
                }
            }
            _ => {}
        }
    }
}

/// SM+ only: no defective node is two or more rounds ahead of a good
/// node in the same step. Rounds are read from state events.
pub fn check_round_gap_smplus(trace: &Trace) -> PropertyReport {
    let mut r = PropertyReport::new("round-gap");
    if trace.model != Model::SmPlus {
        r.verdict = Verdict::Inconclusive;
        return r;
    }
    let mut rounds: BTreeMap<u64, Vec<(NodeId, u64)>> = BTreeMap::new();
    for e in &trace.events {
        if let EventKind::State { node, round, .. } = &e.kind {
            rounds.entry(e.tick).or_default().push((*node, *round));
        }
    }
    for (s, rs) in rounds {
        let Some(&(g, low)) = rs.iter().filter(|x| x.0.is_correct()).min_by_key(|x| x.1) else {
            continue;
        };
        for &(d, dr) in rs.iter().filter(|x| !x.0.is_correct()) {
            if dr >= low + 2 {
                r.witness(s, d, format!("round {dr} while {g} is in round {low}"));
            }
        }
    }
    r.violated()
}

/// Property reports a run is judged by; termination is checked at the
/// trace's last step.
pub fn check_all(trace: &Trace) -> Vec<PropertyReport> {
    let last = trace.events.last().map_or(0, |e| e.tick) / trace.k();
    let mut out = vec![
        check_agreement(trace),
        check_decision_stability(trace),
        check_validity(trace),
        check_termination(trace, last),
        check_threshold(trace),
    ];
    if trace.model == Model::SmPlus {
        out.push(check_round_gap_smplus(trace));
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoinSummary {
    pub samples: u64,
    pub ones: u64,
}

impl CoinSummary {
    pub fn frequency(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.ones as f64 / self.samples as f64)
    }
}

impl fmt::Display for CoinSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frequency() {
            Some(p) => write!(f, "coins samples={} ones={} frequency={p:.4}", self.samples, self.ones),
            None => write!(f, "coins samples=0"),
        }
    }
}

pub fn coin_statistics<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> CoinSummary {
    let mut s = CoinSummary::default();
    for t in traces {
        for (_, n, bit) in t.coins() {
            if n.is_correct() {
                s.samples += 1;
                s.ones += u64::from(bit);
            }
        }
    }
    s
}
