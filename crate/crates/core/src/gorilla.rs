//! Correct-node state machine for Gorilla Sandglass.
//!
//! The engine drives a node through one step in three phases so oracle
//! calls can be interleaved with other nodes' events at tick granularity:
//! `begin_step` at the first tick (after receipts), one `record_unit` per
//! tick as Get results come back, and `finish_step` at the last tick.

use crate::error::OracleError;
use crate::message::{GorillaMessage, MessageStore, Validator};
use crate::node::RoundCore;
use crate::oracle::{OracleLedger, VdfInput};
use crate::types::{first_tick, MsgId, NodeId, Value};

pub use crate::types::decision_threshold;

/// Nonce of correct node `id` at `step`; never repeats within a run.
pub fn nonce_for(id: u32, step: u64) -> Vec<u8> {
    let mut n = Vec::with_capacity(13);
    n.push(b'c');
    n.extend_from_slice(&id.to_be_bytes());
    n.extend_from_slice(&step.to_be_bytes());
    n
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Pending {
    input: VdfInput,
    coffer: Vec<MsgId>,
    nonce: Vec<u8>,
    entered: bool,
    last: Option<u64>,
    units: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutput {
    pub message: GorillaMessage,
    /// The vdf parity, when it was used to pick the value.
    pub coin: Option<u8>,
    pub decision: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GorillaNode {
    pub id: u32,
    pub input: Value,
    pub core: RoundCore,
    pending: Option<Pending>,
}

impl GorillaNode {
    pub fn init(id: u32, input: Value, t: u64) -> Self {
        GorillaNode {
            id,
            input,
            core: RoundCore::init(input, t),
            pending: None,
        }
    }

    pub fn node_id(&self) -> NodeId {
        NodeId::Correct(self.id)
    }

    /// Ingests the step's deliveries, advances the round if a quorum is
    /// present and fixes the VDF input for this step.
    pub fn begin_step(
        &mut self,
        step: u64,
        delivered: &[MsgId],
        store: &MessageStore<GorillaMessage>,
        validator: &mut Validator,
    ) -> VdfInput {
        for id in delivered {
            if validator.is_valid(store, id) {
                self.core.ingest(store, id);
            }
        }
        let entered = self.core.advance(store);
        let coffer: Vec<MsgId> = self.core.m.iter().copied().collect();
        let nonce = nonce_for(self.id, step);
        let input = VdfInput::new(&coffer, nonce.clone());
        self.pending = Some(Pending {
            input: input.clone(),
            coffer,
            nonce,
            entered,
            last: None,
            units: 0,
        });
        input
    }

    /// `prev` argument for this tick's Get call.
    pub fn next_prev(&self) -> Option<u64> {
        self.pending.as_ref().and_then(|p| p.last)
    }

    pub fn pending_input(&self) -> Option<&VdfInput> {
        self.pending.as_ref().map(|p| &p.input)
    }

    pub fn record_unit(&mut self, unit: u64) {
        let p = self.pending.as_mut().expect("record_unit outside a step");
        p.last = Some(unit);
        p.units += 1;
    }

    /// Completes the step once K units are in and returns the broadcast.
    pub fn finish_step(&mut self, store: &MessageStore<GorillaMessage>) -> StepOutput {
        let p = self.pending.take().expect("finish_step outside a step");
        let vdf = p.last.expect("finish_step without any unit");
        let mut coin = None;
        let mut decision = None;
        if p.entered {
            let e = self.core.update_on_entry(store, || Value::from_bit(vdf));
            if e.coin_used {
                coin = Some((vdf & 1) as u8);
            }
            if e.decide {
                decision = self.core.decide();
            }
        }
        let c = &self.core;
        let message = GorillaMessage::new(c.r, c.v, c.priority, c.uc, p.coffer, p.nonce, vdf);
        StepOutput {
            message,
            coin,
            decision,
        }
    }

    pub fn units_this_step(&self) -> u32 {
        self.pending.as_ref().map_or(0, |p| p.units)
    }

    /// One whole step against a private ledger: receive, K Gets across the
    /// step's ticks, update. The message is not interned.
    pub fn run_step(
        &mut self,
        step: u64,
        delivered: &[MsgId],
        store: &MessageStore<GorillaMessage>,
        validator: &mut Validator,
        oracle: &mut OracleLedger,
    ) -> Result<StepOutput, OracleError> {
        let k = oracle.k();
        let input = self.begin_step(step, delivered, store, validator);
        let t0 = first_tick(step, u64::from(k));
        for j in 0..u64::from(k) {
            let unit = oracle.get(self.node_id(), t0 + j, &input, self.next_prev())?;
            self.record_unit(unit);
        }
        Ok(self.finish_step(store))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{ProtoMsg, VerifyKey};
    use crate::oracle::Mode;
    use crate::types::{priority_for, threshold};

    fn solo(steps: u64, k: u32) -> Vec<(GorillaMessage, Option<Value>)> {
        let t = threshold(1);
        let mut node = GorillaNode::init(0, Value::A, t);
        let mut store = MessageStore::new();
        let mut oracle = OracleLedger::new(7, k, Mode::Plain);
        let mut validator = Validator::new(VerifyKey { seed: 7, k }, t);
        let mut delivered = vec![];
        let mut out = vec![];
        for s in 0..steps {
            let o = node
                .run_step(s, &delivered, &store, &mut validator, &mut oracle)
                .unwrap();
            delivered = vec![store.intern(o.message.clone()).unwrap()];
            out.push((o.message, o.decision));
        }
        out
    }

    /// Straight-line replay for N = 1: every step the node sees exactly its
    /// own previous message, so round and counter advance by one each step.
    fn reference_solo(steps: u64) -> Vec<(u64, u64, u64, bool)> {
        let t = 1u64;
        let (mut r, mut uc, mut decided) = (1u64, 0u64, false);
        let mut rows = vec![];
        let mut prev: Option<(u64, u64)> = None; // (round, uc) of last own message
        for _ in 0..steps {
            let mut decide_now = false;
            if let Some((pr, puc)) = prev {
                if pr >= r {
                    r = pr + 1;
                    uc = puc + 1;
                    if (uc / t).saturating_sub(5) >= 6 * t + 4 && !decided {
                        decided = true;
                        decide_now = true;
                    }
                }
            }
            rows.push((r, uc, (uc / t).saturating_sub(5), decide_now));
            prev = Some((r, uc));
        }
        rows
    }

    #[test]
    fn solo_matches_reference_and_decides_at_step_15() {
        let got = solo(20, 2);
        let want = reference_solo(20);
        for (s, ((m, d), &(r, uc, p, dec))) in got.iter().zip(&want).enumerate() {
            assert_eq!((m.round, m.uc, m.priority), (r, uc, p), "step {s}");
            assert_eq!(m.value, Value::A);
            assert_eq!(d.is_some(), dec, "step {s}");
        }
        let first = got.iter().position(|(_, d)| d.is_some()).unwrap();
        assert_eq!(first, 15);
        assert_eq!(got[15].0.round, 16);
        assert_eq!(got[15].0.priority, 10);
    }

    #[test]
    fn decision_threshold_values() {
        assert_eq!(decision_threshold(1), 10);
        assert_eq!(decision_threshold(2), 16);
        assert_eq!(decision_threshold(threshold(3)), 34);
    }

    #[test]
    fn init_state() {
        for v in [Value::A, Value::B] {
            let n = GorillaNode::init(3, v, 2);
            assert_eq!((n.core.v, n.core.r, n.core.uc, n.core.priority), (v, 1, 0, 0));
            assert!(n.core.m.is_empty() && n.core.rec.is_empty() && n.core.decided.is_none());
        }
        let a = GorillaNode::init(0, Value::A, 2);
        let b = GorillaNode::init(9, Value::A, 2);
        assert_eq!(a.core, b.core);
    }

    #[test]
    fn below_threshold_stays_and_grows_coffer() {
        // T = 2, one node only sees its own round-1 message
        let t = 2;
        let k = 2;
        let mut node = GorillaNode::init(0, Value::B, t);
        let mut store = MessageStore::new();
        let mut oracle = OracleLedger::new(1, k, Mode::Plain);
        let mut validator = Validator::new(VerifyKey { seed: 1, k }, t);
        let o0 = node.run_step(0, &[], &store, &mut validator, &mut oracle).unwrap();
        let id0 = store.intern(o0.message.clone()).unwrap();
        let o1 = node.run_step(1, &[id0], &store, &mut validator, &mut oracle).unwrap();
        assert_eq!(o1.message.round, 1);
        assert_eq!(o1.message.coffer, vec![id0]);
        assert_ne!(o1.message.nonce, o0.message.nonce);
        let id1 = store.intern(o1.message.clone()).unwrap();
        assert!(validator.is_valid(&store, &id1));
    }

    #[test]
    fn split_entry_uses_vdf_parity() {
        let t = 2;
        let k = 1;
        let mut store = MessageStore::new();
        let mut oracle = OracleLedger::new(3, k, Mode::Plain);
        let mut validator = Validator::new(VerifyKey { seed: 3, k }, t);
        let mut a = GorillaNode::init(0, Value::A, t);
        let mut b = GorillaNode::init(1, Value::B, t);
        let ma = a.run_step(0, &[], &store, &mut validator, &mut oracle).unwrap().message;
        let mb = b.run_step(0, &[], &store, &mut validator, &mut oracle).unwrap().message;
        let ids = vec![store.intern(ma).unwrap(), store.intern(mb).unwrap()];
        let o = a.run_step(1, &ids, &store, &mut validator, &mut oracle).unwrap();
        assert_eq!(o.message.round, 2);
        assert_eq!(o.message.value, Value::from_bit(o.message.vdf));
        assert_eq!(o.coin, Some((o.message.vdf & 1) as u8));
        assert_eq!(o.message.uc, 0);
        assert_eq!(priority_for(o.message.uc, t), o.message.priority);
        let id = store.intern(o.message.clone()).unwrap();
        assert!(validator.is_valid(&store, &id));
        assert_eq!(id, o.message.id());
    }

    #[test]
    fn keeps_broadcasting_after_decision() {
        let got = solo(25, 1);
        assert!(got.iter().skip(16).all(|(_, d)| d.is_none()));
        assert_eq!(got.len(), 25);
        assert!(got.iter().all(|(m, _)| m.value == Value::A));
    }
}
