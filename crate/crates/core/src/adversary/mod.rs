//! Byzantine strategies for GM/GM+ and scheduler strategies for SM+.
//!
//! A Byzantine strategy is consulted twice per tick: `act` after the
//! tick's receipts, and `emit` once the oracle answers to `act` are in the
//! view. Both answer with actions for the identity-less slots
//! `b0..b{cap-1}` active at that tick. The engine rejects anything the
//! model forbids with `IllegalStrategyAction`.

mod builtin;
mod figure1;
mod scheduler;

use std::collections::{BTreeMap, BTreeSet};

pub use builtin::{EquivocateNonce, Fuzzer, NullStrategy, SplitVdf, Targets, WithholdRelease};
pub use figure1::{figure1_environment, Figure1Script, FIGURE1_SEED};
pub use scheduler::{
    scheduler_strategy_from, DelayedScheduler, EagerScheduler, FuzzScheduler, NullScheduler, SchedView, Scheduler,
    StepPlan,
};

use crate::env::Environment;
use crate::message::{GorillaMessage, MessageStore, VerifyKey};
use crate::oracle::Commitment;
use crate::trace::Model;
use crate::types::{Hash32, MsgId, NodeId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    /// One Get for input (coffer, nonce) by `slot`; the engine supplies the
    /// adversary's latest unit of that input as `prev`.
    Get {
        slot: u32,
        coffer: Vec<MsgId>,
        nonce: Vec<u8>,
    },
    /// GM+ only.
    Peek {
        slot: u32,
        coffer: Vec<MsgId>,
        nonce: Vec<u8>,
        commitment: Commitment,
    },
    /// Assemble a message. Valid messages need a vdf the adversary holds.
    Create { slot: u32, msg: GorillaMessage },
    /// Send a known message to correct nodes; only at a step's last tick.
    Send { slot: u32, to: Vec<u32>, msg: MsgId },
}

/// The adversary's progress on one VDF input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    pub coffer: Vec<MsgId>,
    pub nonce: Vec<u8>,
    pub units: u32,
    pub first_tick: u64,
    pub last_tick: u64,
    pub completed_at: Option<u64>,
    pub peeked_at: Option<u64>,
    /// Final value once completed or peeked.
    pub vdf: Option<u64>,
}

/// What a strategy may look at; everything here is derived from the
/// adversary's own knowledge plus public parameters.
pub struct AdvView<'a> {
    pub tick: u64,
    pub step: u64,
    pub offset: u64,
    pub k: u64,
    pub t: u64,
    pub model: Model,
    pub cap: u32,
    pub env: &'a Environment,
    pub store: &'a MessageStore<GorillaMessage>,
    /// Known messages in the order they were learned.
    pub known: &'a [MsgId],
    pub known_valid: &'a BTreeSet<MsgId>,
    /// Earliest tick at which a known message may seed a new VDF.
    pub usable_from: &'a BTreeMap<MsgId, u64>,
    pub chains: &'a BTreeMap<Hash32, Chain>,
    /// Correct nodes active at the next tick.
    pub correct_next: Vec<u32>,
    pub key: VerifyKey,
}

impl AdvView<'_> {
    pub fn is_last_tick(&self) -> bool {
        self.offset + 1 == self.k
    }

    pub fn is_first_tick(&self) -> bool {
        self.offset == 0
    }

    pub fn usable_now(&self, id: &MsgId) -> bool {
        self.usable_from.get(id).is_some_and(|&t| t <= self.tick)
    }

    /// Known valid messages that may seed a VDF started now.
    pub fn usable_valid(&self) -> Vec<MsgId> {
        self.known
            .iter()
            .filter(|id| self.known_valid.contains(id) && self.usable_now(id))
            .copied()
            .collect()
    }

    /// Byzantine slots at every tick from now to the end of the step.
    pub fn cap_through_step(&self) -> u32 {
        (self.tick..self.tick + (self.k - self.offset))
            .map(|t| self.env.cap(t))
            .min()
            .unwrap_or(0)
    }

    pub fn slot_node(slot: u32) -> NodeId {
        NodeId::Byz(slot)
    }
}

pub trait Strategy: Send {
    fn name(&self) -> String;
    fn act(&mut self, view: &AdvView<'_>) -> Vec<Action>;

    fn emit(&mut self, _view: &AdvView<'_>) -> Vec<Action> {
        Vec::new()
    }
}
