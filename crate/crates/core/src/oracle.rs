//! The ideal VDF oracle: `Get`, `Verify` and, in plus mode, `Peek`.
//!
//! Unit values come from a PRF keyed by the run seed, the canonical input
//! encoding and the unit index, so every unit of every input is fixed the
//! moment the seed is chosen. The ledger only records which units have
//! been handed out, when, and to whom; this is what makes `verify` total
//! and runs reproducible.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::encoding::Writer;
use crate::error::OracleError;
use crate::types::{step_of, Hash32, MsgId, NodeId};

/// γ = (coffer, nonce). Only the digest of the coffer enters the encoding.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VdfInput {
    pub coffer_digest: Hash32,
    pub nonce: Vec<u8>,
}

impl VdfInput {
    pub fn new(coffer: &[MsgId], nonce: Vec<u8>) -> Self {
        VdfInput {
            coffer_digest: coffer_digest(coffer),
            nonce,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .tag(b'V')
            .bytes(&self.coffer_digest.0)
            .bytes(&self.nonce)
            .finish()
    }

    pub fn digest(&self) -> Hash32 {
        Hash32::of(&self.encode())
    }
}

/// Digest of a message set; independent of the order ids are given in.
pub fn coffer_digest(ids: &[MsgId]) -> Hash32 {
    let mut sorted: Vec<&MsgId> = ids.iter().collect();
    sorted.sort();
    sorted.dedup();
    Hash32::of(&Writer::new().tag(b'C').ids(sorted).finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Plus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VdfRecord {
    pub input: VdfInput,
    /// `units[i]` is unit i+1.
    pub units: Vec<u64>,
    /// Tick at which each unit was first generated.
    pub unit_ticks: Vec<u64>,
    pub completed_at_tick: Option<u64>,
}

impl VdfRecord {
    pub fn first_get_tick(&self) -> Option<u64> {
        self.unit_ticks.first().copied()
    }
}

/// Pledged Get calls that finish a peeked input within the peek's step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Commitment {
    pub pledges: Vec<(u64, NodeId)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct PendingCommitment {
    step: u64,
    input: Hash32,
}

#[derive(Clone, Debug)]
pub struct OracleLedger {
    seed: u64,
    k: u32,
    mode: Mode,
    records: BTreeMap<Hash32, VdfRecord>,
    get_calls: BTreeMap<(NodeId, u64), u32>,
    peek_log: BTreeSet<(NodeId, u64, Hash32)>,
    peeked: BTreeSet<Hash32>,
    commitments: Vec<PendingCommitment>,
}

/// The seeded PRF. Public so replays and tests can recompute units
/// without touching a ledger.
pub fn unit_value(seed: u64, input: &VdfInput, index: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(b"gorilla-vdf-unit");
    h.update(seed.to_be_bytes());
    h.update(input.encode());
    h.update(index.to_be_bytes());
    let out = h.finalize();
    u64::from_be_bytes(out[..8].try_into().unwrap())
}

impl OracleLedger {
    pub fn new(seed: u64, k: u32, mode: Mode) -> Self {
        assert!(k >= 1, "K must be at least 1");
        OracleLedger {
            seed,
            k,
            mode,
            records: BTreeMap::new(),
            get_calls: BTreeMap::new(),
            peek_log: BTreeSet::new(),
            peeked: BTreeSet::new(),
            commitments: Vec::new(),
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn record(&self, digest: &Hash32) -> Option<&VdfRecord> {
        self.records.get(digest)
    }

    pub fn records(&self) -> impl Iterator<Item = &VdfRecord> {
        self.records.values()
    }

    pub fn was_peeked(&self, digest: &Hash32) -> bool {
        self.peeked.contains(digest)
    }

    pub fn peek_log(&self) -> &BTreeSet<(NodeId, u64, Hash32)> {
        &self.peek_log
    }

    pub fn get_count(&self, node: NodeId, tick: u64) -> u32 {
        self.get_calls.get(&(node, tick)).copied().unwrap_or(0)
    }

    /// `Get(γ, prev)`; `prev = None` stands for ⊥.
    ///
    /// Any unit already generated for γ may be presented again and yields
    /// the memoized successor. A unit can only be extended at a tick
    /// strictly after the one in which it was generated.
    pub fn get(&mut self, node: NodeId, tick: u64, input: &VdfInput, prev: Option<u64>) -> Result<u64, OracleError> {
        if self.get_count(node, tick) >= 1 {
            return Err(OracleError::RateLimitExceeded { node, tick });
        }
        let digest = input.digest();
        let k = self.k;
        let seed = self.seed;
        let stale = OracleError::StaleChain {
            node,
            tick,
            input: digest,
        };
        let rec = self.records.entry(digest).or_insert_with(|| VdfRecord {
            input: input.clone(),
            units: Vec::new(),
            unit_ticks: Vec::new(),
            completed_at_tick: None,
        });
        let next_index = match prev {
            None => 1,
            Some(p) => {
                let pos = rec.units.iter().position(|&u| u == p).ok_or(stale.clone())?;
                if rec.unit_ticks[pos] >= tick {
                    return Err(stale);
                }
                pos as u32 + 2
            }
        };
        if next_index > k {
            return Err(stale);
        }
        let value = if (next_index as usize) <= rec.units.len() {
            rec.units[next_index as usize - 1]
        } else {
            let v = unit_value(seed, input, next_index);
            rec.units.push(v);
            rec.unit_ticks.push(tick);
            if next_index == k {
                rec.completed_at_tick = Some(tick);
            }
            v
        };
        *self.get_calls.entry((node, tick)).or_insert(0) += 1;
        Ok(value)
    }

    /// `Verify(vdf, γ)`: true iff `candidate` is the K-th unit of γ.
    pub fn verify(&self, candidate: u64, input: &VdfInput) -> bool {
        candidate == unit_value(self.seed, input, self.k)
    }

    /// `Peek(γ)` for a Byzantine node. `coffer_inputs` are the VDF inputs
    /// of γ's coffer members, used to enforce the no-recursive-peek rule.
    pub fn peek(
        &mut self,
        node: NodeId,
        tick: u64,
        input: &VdfInput,
        coffer_inputs: &[Hash32],
        commitment: &Commitment,
    ) -> Result<u64, OracleError> {
        if self.mode == Mode::Plain {
            return Err(OracleError::PeekInPlainMode);
        }
        let digest = input.digest();
        let k = u64::from(self.k);
        let step = step_of(tick, k);
        for ci in coffer_inputs {
            if self.peeked.contains(ci) {
                let done = self
                    .records
                    .get(ci)
                    .and_then(|r| r.completed_at_tick)
                    .is_some_and(|c| c <= tick);
                if !done {
                    return Err(OracleError::RecursivePeek {
                        node,
                        tick,
                        input: digest,
                    });
                }
            }
        }
        let have = self.records.get(&digest).map_or(0, |r| r.units.len() as u64);
        let already_done = self.records.get(&digest).and_then(|r| r.completed_at_tick).is_some();
        if !already_done {
            let step_end = step * k + k - 1;
            let mut ticks: BTreeSet<u64> = BTreeSet::new();
            for &(t, _) in &commitment.pledges {
                if t >= tick && t <= step_end {
                    ticks.insert(t);
                }
            }
            if (ticks.len() as u64) < k - have {
                return Err(OracleError::PeekWithoutCommitment {
                    node,
                    tick,
                    input: digest,
                });
            }
        }
        self.peek_log.insert((node, tick, digest));
        self.peeked.insert(digest);
        self.commitments.push(PendingCommitment { step, input: digest });
        Ok(unit_value(self.seed, input, self.k))
    }

    /// Violations of this step's peek commitments. Call once per step.
    pub fn audit_step(&mut self, step: u64) -> Vec<OracleError> {
        let k = u64::from(self.k);
        let step_end = step * k + k - 1;
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        self.commitments.retain(|c| {
            if c.step != step {
                return true;
            }
            if seen.insert(c.input) {
                let done = self
                    .records
                    .get(&c.input)
                    .and_then(|r| r.completed_at_tick)
                    .is_some_and(|t| t <= step_end);
                if !done {
                    out.push(OracleError::CommitmentBroken { step, input: c.input });
                }
            }
            false
        });
        out
    }

    /// One line per record: digest, unit count, completion tick.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (d, r) in &self.records {
            let done = r.completed_at_tick.map_or_else(|| "-".to_string(), |t| t.to_string());
            s.push_str(&format!("record {} units={} completed={}\n", d, r.units.len(), done));
        }
        s
    }
}
