//! Identifiers, values and time arithmetic shared by every module.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// A SHA-256 content hash. Ordering is bytewise, which is what the
/// canonical encodings and the reorg tie-break rely on.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub fn of(bytes: &[u8]) -> Self {
        Hash32(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let v = hex::decode(s).ok()?;
        let arr: [u8; 32] = v.try_into().ok()?;
        Some(Hash32(arr))
    }

    /// First eight hex digits, for diagnostics.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.short())
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub type MsgId = Hash32;

/// Binary consensus value. The coin mapping is fixed: bit 0 is `A`, bit 1 is `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    A,
    B,
}

impl Value {
    pub fn from_bit(bit: u64) -> Value {
        if bit & 1 == 0 {
            Value::A
        } else {
            Value::B
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Value::A => 0,
            Value::B => 1,
        }
    }

    pub fn other(self) -> Value {
        match self {
            Value::A => Value::B,
            Value::B => Value::A,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Value::A => "a",
            Value::B => "b",
        })
    }
}

impl FromStr for Value {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "A" => Ok(Value::A),
            "b" | "B" => Ok(Value::B),
            _ => Err(format!("invalid value `{s}` (expected a or b)")),
        }
    }
}

/// Node identity. `Correct` nodes are good nodes in SM+ traces and
/// `Byz` nodes are defective ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Correct(u32),
    Byz(u32),
}

impl NodeId {
    pub fn is_correct(self) -> bool {
        matches!(self, NodeId::Correct(_))
    }

    pub fn index(self) -> u32 {
        match self {
            NodeId::Correct(i) | NodeId::Byz(i) => i,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Correct(i) => write!(f, "c{i}"),
            NodeId::Byz(i) => write!(f, "b{i}"),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid node id `{s}`");
        let (kind, rest) = s.split_at(s.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?);
        let idx: u32 = rest.parse().map_err(|_| bad())?;
        match kind {
            "c" => Ok(NodeId::Correct(idx)),
            "b" => Ok(NodeId::Byz(idx)),
            _ => Err(bad()),
        }
    }
}

/// Role recorded at join time. Kept separate from the id so a trace can
/// be checked for role preservation independently of naming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Correct,
    Faulty,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Correct => "correct",
            Role::Faulty => "faulty",
        })
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correct" => Ok(Role::Correct),
            "faulty" => Ok(Role::Faulty),
            _ => Err(format!("invalid role `{s}`")),
        }
    }
}

/// Message-count threshold T = ⌈N²/2⌉.
pub fn threshold(n: u32) -> u64 {
    let sq = u64::from(n) * u64::from(n);
    sq.div_ceil(2)
}

/// Priority at which a node decides: 6T + 4.
pub fn decision_threshold(t: u64) -> u64 {
    6 * t + 4
}

/// max(0, ⌊uc/T⌋ − 5)
pub fn priority_for(uc: u64, t: u64) -> u64 {
    (uc / t).saturating_sub(5)
}

pub fn step_of(tick: u64, k: u64) -> u64 {
    tick / k
}

pub fn first_tick(step: u64, k: u64) -> u64 {
    step * k
}

pub fn last_tick(step: u64, k: u64) -> u64 {
    step * k + k - 1
}
