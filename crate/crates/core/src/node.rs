//! Round bookkeeping shared by the Gorilla and Sandglass state machines.
//! Everything here is identical in the two algorithms; they differ only
//! in message validation and in where the tie-breaking coin comes from.

use std::collections::{BTreeMap, BTreeSet};

use crate::message::{derive_entry, MessageStore, ProtoMsg};
use crate::types::{decision_threshold, priority_for, MsgId, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundCore {
    pub v: Value,
    pub priority: u64,
    pub uc: u64,
    pub r: u64,
    pub m: BTreeSet<MsgId>,
    pub rec: BTreeSet<MsgId>,
    rec_rounds: BTreeMap<u64, usize>,
    pub decided: Option<Value>,
    pub t: u64,
}

/// Outcome of the value/counter update performed on round entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Entry {
    pub coin_used: bool,
    pub decide: bool,
}

impl RoundCore {
    pub fn init(input: Value, t: u64) -> Self {
        RoundCore {
            v: input,
            priority: 0,
            uc: 0,
            r: 1,
            m: BTreeSet::new(),
            rec: BTreeSet::new(),
            rec_rounds: BTreeMap::new(),
            decided: None,
            t,
        }
    }

    /// Rec ← Rec ∪ {m} ∪ (coffer closure of m).
    pub fn ingest<M: ProtoMsg>(&mut self, store: &MessageStore<M>, id: &MsgId) {
        for added in store.extend_closed(&mut self.rec, id) {
            let round = store.get(&added).expect("ingested id is interned").round();
            *self.rec_rounds.entry(round).or_insert(0) += 1;
        }
    }

    pub fn rec_count(&self, round: u64) -> usize {
        self.rec_rounds.get(&round).copied().unwrap_or(0)
    }

    fn rec_round<'a, M: ProtoMsg>(
        &'a self,
        store: &'a MessageStore<M>,
        round: u64,
    ) -> impl Iterator<Item = &'a MsgId> + 'a {
        self.rec
            .iter()
            .filter(move |id| store.get(id).is_some_and(|m| m.round() == round))
    }

    /// Highest round with at least T received messages.
    pub fn quorum_round(&self) -> Option<u64> {
        self.rec_rounds
            .iter()
            .rev()
            .find(|(_, &n)| n as u64 >= self.t)
            .map(|(&r, _)| r)
    }

    /// Round advance and coffer construction. Returns true if a new round
    /// was entered; in both cases M ends up holding Rec(r).
    pub fn advance<M: ProtoMsg>(&mut self, store: &MessageStore<M>) -> bool {
        let entered = match self.quorum_round() {
            Some(q) if q >= self.r => {
                self.r = q + 1;
                let mut m = BTreeSet::new();
                for id in self.rec_round(store, self.r - 1) {
                    m.insert(*id);
                    m.extend(store.get(id).unwrap().coffer().iter().copied());
                }
                self.m = m;
                true
            }
            _ => false,
        };
        let same: Vec<MsgId> = self.rec_round(store, self.r).copied().collect();
        self.m.extend(same);
        entered
    }

    /// Value, unanimity counter and priority update after entering round r.
    /// `coin` is consulted only when the max-priority set is split.
    pub fn update_on_entry<M: ProtoMsg>(&mut self, store: &MessageStore<M>, coin: impl FnOnce() -> Value) -> Entry {
        let coffer: Vec<MsgId> = self.m.iter().copied().collect();
        let d = derive_entry(store, &coffer, self.r);
        let mut coin_used = false;
        self.v = match d.unanimous_c {
            Some(v) => v,
            None => {
                coin_used = true;
                coin()
            }
        };
        self.uc = crate::message::unanimity_counter(store, &d.prev, self.v);
        self.priority = priority_for(self.uc, self.t);
        let decide = self.priority >= decision_threshold(self.t);
        Entry { coin_used, decide }
    }

    /// Records a Decide call; returns the value if it is the node's first
    /// decision or contradicts an earlier one.
    pub fn decide(&mut self) -> Option<Value> {
        match self.decided {
            None => {
                self.decided = Some(self.v);
                Some(self.v)
            }
            Some(prev) if prev != self.v => Some(self.v),
            Some(_) => None,
        }
    }
}
