//! Sandglass good-node state machine. Same round logic as Gorilla; the
//! tie-breaking bit comes from an injected coin stream instead of a vdf.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::message::{MessageStore, SandglassMessage};
use crate::node::RoundCore;
use crate::types::{MsgId, NodeId, Value};

pub trait CoinStream {
    fn next_bit(&mut self) -> u8;
}

/// A prescribed bit sequence, e.g. the vdf parities of a Gorilla trace.
/// Panics if drained; alignment replays consume exactly what they were given.
#[derive(Clone, Debug, Default)]
pub struct FixedCoins(pub VecDeque<u8>);

impl FixedCoins {
    pub fn new(bits: impl IntoIterator<Item = u8>) -> Self {
        FixedCoins(bits.into_iter().collect())
    }

    pub fn remaining(&self) -> usize {
        self.0.len()
    }
}

impl CoinStream for FixedCoins {
    fn next_bit(&mut self) -> u8 {
        self.0.pop_front().expect("coin stream exhausted")
    }
}

#[derive(Clone, Debug)]
pub struct SeededCoins(ChaCha8Rng);

impl SeededCoins {
    pub fn new(seed: u64) -> Self {
        SeededCoins(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl CoinStream for SeededCoins {
    fn next_bit(&mut self) -> u8 {
        self.0.gen_range(0..2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SandglassOutput {
    pub message: SandglassMessage,
    pub coin: Option<u8>,
    pub decision: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SandglassNode {
    pub id: NodeId,
    pub input: Value,
    pub uid: u64,
    pub core: RoundCore,
}

impl SandglassNode {
    pub fn init(id: NodeId, input: Value, t: u64) -> Self {
        SandglassNode {
            id,
            input,
            uid: 0,
            core: RoundCore::init(input, t),
        }
    }

    pub fn run_step(
        &mut self,
        delivered: &[MsgId],
        store: &MessageStore<SandglassMessage>,
        coins: &mut dyn CoinStream,
    ) -> SandglassOutput {
        for id in delivered {
            if store.contains(id) {
                self.core.ingest(store, id);
            }
        }
        let mut coin = None;
        let mut decision = None;
        if self.core.advance(store) {
            let e = self.core.update_on_entry(store, || {
                let b = coins.next_bit();
                coin = Some(b);
                Value::from_bit(u64::from(b))
            });
            if e.decide {
                decision = self.core.decide();
            }
        }
        self.uid += 1;
        let c = &self.core;
        let message = SandglassMessage::new(
            self.id,
            self.uid,
            c.r,
            c.v,
            c.priority,
            c.uc,
            c.m.iter().copied().collect(),
        );
        SandglassOutput {
            message,
            coin,
            decision,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{check_sandglass_consistency, ProtoMsg};

    #[test]
    fn solo_decides_at_step_15() {
        let mut n = SandglassNode::init(NodeId::Correct(0), Value::A, 1);
        let mut store = MessageStore::new();
        let mut coins = FixedCoins::default();
        let mut delivered = vec![];
        let mut first = None;
        for s in 0..20u64 {
            let o = n.run_step(&delivered, &store, &mut coins);
            assert_eq!(o.message.uid, s + 1);
            assert!(o.coin.is_none());
            if let (Some(d), None) = (o.decision, first) {
                first = Some((s, o.message.round, d));
            }
            delivered = vec![store.intern(o.message).unwrap()];
        }
        assert_eq!(first, Some((15, 16, Value::A)));
    }

    #[test]
    fn split_view_takes_next_coin() {
        let t = 2;
        let mut store = MessageStore::new();
        let mut a = SandglassNode::init(NodeId::Correct(0), Value::A, t);
        let mut b = SandglassNode::init(NodeId::Correct(1), Value::B, t);
        let mut none = FixedCoins::default();
        let ma = a.run_step(&[], &store, &mut none).message;
        let mb = b.run_step(&[], &store, &mut none).message;
        let ids = vec![store.intern(ma).unwrap(), store.intern(mb).unwrap()];
        let mut one = FixedCoins::new([1]);
        let o = a.run_step(&ids, &store, &mut one);
        assert_eq!((o.message.round, o.message.value, o.coin), (2, Value::B, Some(1)));
        assert_eq!(one.remaining(), 0);
        assert_eq!(check_sandglass_consistency(&store, &o.message, t), Ok(()));
        assert_ne!(o.message.id(), ids[0]);
    }

    #[test]
    fn unanimous_view_consumes_no_coin() {
        let t = 2;
        let mut store = MessageStore::new();
        let mut a = SandglassNode::init(NodeId::Correct(0), Value::A, t);
        let mut b = SandglassNode::init(NodeId::Correct(1), Value::A, t);
        let mut none = FixedCoins::default();
        let ma = a.run_step(&[], &store, &mut none).message;
        let mb = b.run_step(&[], &store, &mut none).message;
        let ids = vec![store.intern(ma).unwrap(), store.intern(mb).unwrap()];
        let o = a.run_step(&ids, &store, &mut none);
        assert_eq!(
            (o.message.round, o.message.value, o.message.uc, o.coin),
            (2, Value::A, 1, None)
        );
    }

    #[test]
    fn seeded_coins_are_reproducible() {
        let xs: Vec<u8> = {
            let mut c = SeededCoins::new(4);
            (0..64).map(|_| c.next_bit()).collect()
        };
        let mut c = SeededCoins::new(4);
        assert!(xs.iter().all(|&x| x == c.next_bit()));
        assert!(xs.contains(&0) && xs.contains(&1));
    }
}
