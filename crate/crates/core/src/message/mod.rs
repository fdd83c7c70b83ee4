//! Protocol messages and the content-addressed store that holds them.
//!
//! A coffer is stored as the sorted list of member ids; members must be
//! interned first, so every store is a DAG in insertion order.

mod mapm;
mod validity;

pub use mapm::{mapm, mapm_all, Attribution};
pub use validity::{
    check_gorilla_consistency, check_sandglass_consistency, consistent_attributes, derive_entry, unanimity_counter,
    EntryDerivation, Invalid, Validator, VerifyKey,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::encoding::{DecodeError, Reader, Writer};
use crate::error::StoreError;
use crate::types::{Hash32, MsgId, NodeId, Value};

/// Fields shared by Gorilla and Sandglass messages.
pub trait ProtoMsg: Clone + std::fmt::Debug {
    fn round(&self) -> u64;
    fn value(&self) -> Value;
    fn priority(&self) -> u64;
    fn uc(&self) -> u64;
    fn coffer(&self) -> &[MsgId];
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self, DecodeError>
    where
        Self: Sized;

    fn id(&self) -> MsgId {
        Hash32::of(&self.encode())
    }
}

fn normalize(mut coffer: Vec<MsgId>) -> Vec<MsgId> {
    coffer.sort();
    coffer.dedup();
    coffer
}

fn value_byte(v: Value) -> [u8; 1] {
    [v.bit()]
}

fn read_value(r: &mut Reader<'_>) -> Result<Value, DecodeError> {
    match r.bytes()? {
        [0] => Ok(Value::A),
        [1] => Ok(Value::B),
        other => Err(DecodeError(format!("bad value field {other:?}"))),
    }
}

fn node_bytes(n: NodeId) -> [u8; 5] {
    let (tag, idx) = match n {
        NodeId::Correct(i) => (0u8, i),
        NodeId::Byz(i) => (1u8, i),
    };
    let mut out = [0u8; 5];
    out[0] = tag;
    out[1..].copy_from_slice(&idx.to_be_bytes());
    out
}

fn read_node(r: &mut Reader<'_>) -> Result<NodeId, DecodeError> {
    let b = r.bytes()?;
    if b.len() != 5 {
        return Err(DecodeError(format!("node field has {} bytes", b.len())));
    }
    let idx = u32::from_be_bytes(b[1..].try_into().unwrap());
    match b[0] {
        0 => Ok(NodeId::Correct(idx)),
        1 => Ok(NodeId::Byz(idx)),
        t => Err(DecodeError(format!("bad node tag {t}"))),
    }
}

/// (r, v, priority, uc, M, nonce, vdf)
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GorillaMessage {
    pub round: u64,
    pub value: Value,
    pub priority: u64,
    pub uc: u64,
    pub coffer: Vec<MsgId>,
    pub nonce: Vec<u8>,
    pub vdf: u64,
}

impl GorillaMessage {
    pub fn new(round: u64, value: Value, priority: u64, uc: u64, coffer: Vec<MsgId>, nonce: Vec<u8>, vdf: u64) -> Self {
        GorillaMessage {
            round,
            value,
            priority,
            uc,
            coffer: normalize(coffer),
            nonce,
            vdf,
        }
    }

    pub fn vdf_input(&self) -> crate::oracle::VdfInput {
        crate::oracle::VdfInput::new(&self.coffer, self.nonce.clone())
    }
}

impl ProtoMsg for GorillaMessage {
    fn round(&self) -> u64 {
        self.round
    }
    fn value(&self) -> Value {
        self.value
    }
    fn priority(&self) -> u64 {
        self.priority
    }
    fn uc(&self) -> u64 {
        self.uc
    }
    fn coffer(&self) -> &[MsgId] {
        &self.coffer
    }

    fn encode(&self) -> Vec<u8> {
        Writer::new()
            .tag(b'G')
            .u64(self.round)
            .bytes(&value_byte(self.value))
            .u64(self.priority)
            .u64(self.uc)
            .ids(&self.coffer)
            .bytes(&self.nonce)
            .u64(self.vdf)
            .finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        if r.tag()? != b'G' {
            return Err(DecodeError("not a Gorilla message".into()));
        }
        let m = GorillaMessage {
            round: r.u64()?,
            value: read_value(&mut r)?,
            priority: r.u64()?,
            uc: r.u64()?,
            coffer: r.ids()?,
            nonce: r.bytes()?.to_vec(),
            vdf: r.u64()?,
        };
        r.end()?;
        Ok(m)
    }
}

/// (p, uid, r, v, priority, uc, M)
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SandglassMessage {
    pub sender: NodeId,
    pub uid: u64,
    pub round: u64,
    pub value: Value,
    pub priority: u64,
    pub uc: u64,
    pub coffer: Vec<MsgId>,
}

impl SandglassMessage {
    #[allow(clippy::too_many_arguments)]
    pub fn new(sender: NodeId, uid: u64, round: u64, value: Value, priority: u64, uc: u64, coffer: Vec<MsgId>) -> Self {
        SandglassMessage {
            sender,
            uid,
            round,
            value,
            priority,
            uc,
            coffer: normalize(coffer),
        }
    }
}

impl ProtoMsg for SandglassMessage {
    fn round(&self) -> u64 {
        self.round
    }
    fn value(&self) -> Value {
        self.value
    }
    fn priority(&self) -> u64 {
        self.priority
    }
    fn uc(&self) -> u64 {
        self.uc
    }
    fn coffer(&self) -> &[MsgId] {
        &self.coffer
    }

    fn encode(&self) -> Vec<u8> {
        Writer::new()
            .tag(b'S')
            .bytes(&node_bytes(self.sender))
            .u64(self.uid)
            .u64(self.round)
            .bytes(&value_byte(self.value))
            .u64(self.priority)
            .u64(self.uc)
            .ids(&self.coffer)
            .finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        if r.tag()? != b'S' {
            return Err(DecodeError("not a Sandglass message".into()));
        }
        let m = SandglassMessage {
            sender: read_node(&mut r)?,
            uid: r.u64()?,
            round: r.u64()?,
            value: read_value(&mut r)?,
            priority: r.u64()?,
            uc: r.u64()?,
            coffer: r.ids()?,
        };
        r.end()?;
        Ok(m)
    }
}

/// Append-only content-addressed store.
#[derive(Clone, Debug)]
pub struct MessageStore<M> {
    by_id: HashMap<MsgId, M>,
    order: Vec<MsgId>,
    position: HashMap<MsgId, usize>,
    round_index: BTreeMap<u64, BTreeSet<MsgId>>,
}

impl<M> Default for MessageStore<M> {
    fn default() -> Self {
        MessageStore {
            by_id: HashMap::new(),
            order: Vec::new(),
            position: HashMap::new(),
            round_index: BTreeMap::new(),
        }
    }
}

impl<M: ProtoMsg> MessageStore<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, m: M) -> Result<MsgId, StoreError> {
        let id = m.id();
        if self.by_id.contains_key(&id) {
            return Ok(id);
        }
        if let Some(missing) = m.coffer().iter().find(|c| !self.by_id.contains_key(c)) {
            return Err(StoreError::DanglingCofferRef(*missing));
        }
        self.round_index.entry(m.round()).or_default().insert(id);
        self.position.insert(id, self.order.len());
        self.order.push(id);
        self.by_id.insert(id, m);
        Ok(id)
    }

    pub fn get(&self, id: &MsgId) -> Option<&M> {
        self.by_id.get(id)
    }

    pub fn contains(&self, id: &MsgId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Ids in insertion order (a topological order of the DAG).
    pub fn ids(&self) -> &[MsgId] {
        &self.order
    }

    pub fn position(&self, id: &MsgId) -> Option<usize> {
        self.position.get(id).copied()
    }

    pub fn round_members(&self, round: u64) -> impl Iterator<Item = &MsgId> {
        self.round_index.get(&round).into_iter().flatten()
    }

    /// `ids` plus everything reachable through coffers.
    pub fn closure<'a>(&self, ids: impl IntoIterator<Item = &'a MsgId>) -> BTreeSet<MsgId> {
        let mut out = BTreeSet::new();
        for id in ids {
            self.extend_closed(&mut out, id);
        }
        out
    }

    /// Adds `id` and its coffer closure to `set`, assuming `set` is
    /// already closed under coffers (members already present are not
    /// re-expanded).
    /// Returns the ids that were newly added.
    pub fn extend_closed(&self, set: &mut BTreeSet<MsgId>, id: &MsgId) -> Vec<MsgId> {
        let mut added = Vec::new();
        let mut stack = vec![*id];
        while let Some(x) = stack.pop() {
            if !set.insert(x) {
                continue;
            }
            added.push(x);
            if let Some(m) = self.by_id.get(&x) {
                stack.extend(m.coffer().iter().filter(|c| !set.contains(c)).copied());
            }
        }
        added
    }
}
