use std::collections::{BTreeSet, HashMap};

use super::{GorillaMessage, MessageStore, ProtoMsg, SandglassMessage};
use crate::oracle::{unit_value, VdfInput};
use crate::types::{priority_for, MsgId, Value};

/// What `Verify` needs: the seed and K of the run's oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyKey {
    pub seed: u64,
    pub k: u32,
}

impl VerifyKey {
    pub fn verify(&self, vdf: u64, input: &VdfInput) -> bool {
        vdf == unit_value(self.seed, input, self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Invalid {
    BadVdf,
    Inconsistent(String),
    InvalidAncestor(MsgId),
    Unknown,
}

impl Invalid {
    pub fn code(&self) -> &'static str {
        match self {
            Invalid::BadVdf => "BadVdf",
            Invalid::Inconsistent(_) => "Inconsistent",
            Invalid::InvalidAncestor(_) => "InvalidAncestor",
            Invalid::Unknown => "Unknown",
        }
    }
}

/// The round-entry view a message of round r ≥ 2 was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryDerivation {
    /// Coffer members of round r−1.
    pub prev: Vec<MsgId>,
    /// Value shared by every max-priority member of `prev`, if unanimous.
    pub unanimous_c: Option<Value>,
}

pub fn derive_entry<M: ProtoMsg>(store: &MessageStore<M>, coffer: &[MsgId], round: u64) -> EntryDerivation {
    let prev: Vec<MsgId> = coffer
        .iter()
        .filter(|id| store.get(id).is_some_and(|m| m.round() + 1 == round))
        .copied()
        .collect();
    let top = prev.iter().map(|id| store.get(id).unwrap().priority()).max();
    let mut c_values = prev
        .iter()
        .map(|id| store.get(id).unwrap())
        .filter(|m| Some(m.priority()) == top)
        .map(|m| m.value());
    let unanimous_c = match c_values.next() {
        None => None,
        Some(first) => c_values.all(|v| v == first).then_some(first),
    };
    EntryDerivation { prev, unanimous_c }
}

/// 1 + min uc over `prev` if every member carries `v`, else 0.
pub fn unanimity_counter<M: ProtoMsg>(store: &MessageStore<M>, prev: &[MsgId], v: Value) -> u64 {
    let msgs: Vec<&M> = prev.iter().filter_map(|id| store.get(id)).collect();
    if !msgs.is_empty() && msgs.iter().all(|m| m.value() == v) {
        1 + msgs.iter().map(|m| m.uc()).min().unwrap()
    } else {
        0
    }
}

fn check_common<M: ProtoMsg>(store: &MessageStore<M>, m: &M, t: u64) -> Result<Option<EntryDerivation>, String> {
    match m.round() {
        0 => Err("round 0".into()),
        1 => {
            if m.uc() != 0 || m.priority() != 0 {
                Err(format!("round 1 with uc={} priority={}", m.uc(), m.priority()))
            } else {
                Ok(None)
            }
        }
        r => {
            let d = derive_entry(store, m.coffer(), r);
            if (d.prev.len() as u64) < t {
                return Err(format!(
                    "round {r} with {} round-{} coffer members, threshold {t}",
                    d.prev.len(),
                    r - 1
                ));
            }
            Ok(Some(d))
        }
    }
}

fn check_counters<M: ProtoMsg>(store: &MessageStore<M>, m: &M, d: &EntryDerivation, t: u64) -> Result<(), String> {
    let uc = unanimity_counter(store, &d.prev, m.value());
    if uc != m.uc() {
        return Err(format!("uc {} but coffer gives {uc}", m.uc()));
    }
    let p = priority_for(uc, t);
    if p != m.priority() {
        return Err(format!("priority {} but uc gives {p}", m.priority()));
    }
    Ok(())
}

/// A same-round coffer member that proposes the same attributes from the
/// same round-(r−1) view. Its presence shows the message may come from the
/// branch that keeps the round and re-draws only the nonce.
fn has_entry_witness(store: &MessageStore<GorillaMessage>, m: &GorillaMessage, d: &EntryDerivation) -> bool {
    let prev: BTreeSet<&MsgId> = d.prev.iter().collect();
    m.coffer.iter().filter_map(|id| store.get(id)).any(|w| {
        w.round == m.round
            && w.value == m.value
            && w.uc == m.uc
            && w.priority == m.priority
            && derive_entry(store, &w.coffer, w.round)
                .prev
                .iter()
                .collect::<BTreeSet<_>>()
                == prev
    })
}

/// Recomputes a Gorilla message's attributes from its coffer.
pub fn check_gorilla_consistency(
    store: &MessageStore<GorillaMessage>,
    m: &GorillaMessage,
    t: u64,
) -> Result<(), String> {
    let Some(d) = check_common(store, m, t)? else {
        return Ok(());
    };
    match d.unanimous_c {
        Some(v) if v != m.value => {
            return Err(format!("value {} but max-priority set is unanimous for {v}", m.value));
        }
        Some(_) => {}
        None => {
            let coin = Value::from_bit(m.vdf);
            if m.value != coin && !has_entry_witness(store, m, &d) {
                return Err(format!("value {} but vdf mod 2 gives {coin}", m.value));
            }
        }
    }
    check_counters(store, m, &d, t)
}

/// Same recomputation for Sandglass messages; a mixed max-priority set
/// leaves the value free (it was a coin toss).
pub fn check_sandglass_consistency(
    store: &MessageStore<SandglassMessage>,
    m: &SandglassMessage,
    t: u64,
) -> Result<(), String> {
    let Some(d) = check_common(store, m, t)? else {
        return Ok(());
    };
    if let Some(v) = d.unanimous_c {
        if v != m.value {
            return Err(format!("value {} but max-priority set is unanimous for {v}", m.value));
        }
    }
    check_counters(store, m, &d, t)
}

/// Attributes a correctly generated message of `round` over `coffer`
/// would carry, preferring `prefer` where the protocol leaves a choice.
/// `None` if the coffer does not justify the round.
pub fn consistent_attributes(
    store: &MessageStore<GorillaMessage>,
    coffer: &[MsgId],
    round: u64,
    t: u64,
    vdf: u64,
    prefer: Value,
) -> Option<(Value, u64, u64)> {
    if round == 0 {
        return None;
    }
    if round == 1 {
        return Some((prefer, 0, 0));
    }
    let d = derive_entry(store, coffer, round);
    if (d.prev.len() as u64) < t {
        return None;
    }
    let v = match d.unanimous_c {
        Some(v) => v,
        None => Value::from_bit(vdf),
    };
    let uc = unanimity_counter(store, &d.prev, v);
    let candidate = GorillaMessage::new(round, v, priority_for(uc, t), uc, coffer.to_vec(), vec![], vdf);
    if v != prefer && d.unanimous_c.is_none() {
        let alt = GorillaMessage::new(round, prefer, 0, 0, coffer.to_vec(), vec![], vdf);
        if has_entry_witness(store, &alt, &d) {
            return Some((prefer, 0, 0));
        }
    }
    Some((candidate.value, candidate.uc, candidate.priority))
}

/// Memoized recursive `isValid`. Validity of an id never changes, so the
/// memo is sound for the lifetime of a store.
#[derive(Clone, Debug)]
pub struct Validator {
    key: VerifyKey,
    t: u64,
    memo: HashMap<MsgId, Result<(), Invalid>>,
}

impl Validator {
    pub fn new(key: VerifyKey, t: u64) -> Self {
        Validator {
            key,
            t,
            memo: HashMap::new(),
        }
    }

    pub fn threshold(&self) -> u64 {
        self.t
    }

    pub fn key(&self) -> VerifyKey {
        self.key
    }

    pub fn is_valid(&mut self, store: &MessageStore<GorillaMessage>, id: &MsgId) -> bool {
        self.check(store, id).is_ok()
    }

    pub fn check(&mut self, store: &MessageStore<GorillaMessage>, id: &MsgId) -> Result<(), Invalid> {
        if let Some(r) = self.memo.get(id) {
            return r.clone();
        }
        if !store.contains(id) {
            return Err(Invalid::Unknown);
        }
        // unmemoized ancestors, evaluated in insertion order so every
        // coffer member is decided before the messages that hold it
        let mut todo = Vec::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![*id];
        while let Some(x) = stack.pop() {
            if self.memo.contains_key(&x) || !seen.insert(x) {
                continue;
            }
            todo.push(x);
            stack.extend(store.get(&x).unwrap().coffer.iter().copied());
        }
        todo.sort_by_key(|x| store.position(x).unwrap());
        for x in todo {
            let verdict = self.evaluate(store, &x);
            self.memo.insert(x, verdict);
        }
        self.memo[id].clone()
    }

    fn evaluate(&self, store: &MessageStore<GorillaMessage>, id: &MsgId) -> Result<(), Invalid> {
        let m = store.get(id).unwrap();
        if !self.key.verify(m.vdf, &m.vdf_input()) {
            return Err(Invalid::BadVdf);
        }
        check_gorilla_consistency(store, m, self.t).map_err(Invalid::Inconsistent)?;
        if let Some(bad) = m.coffer.iter().find(|c| self.memo[*c].is_err()) {
            return Err(Invalid::InvalidAncestor(*bad));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEY: VerifyKey = VerifyKey { seed: 5, k: 2 };

    fn sealed(round: u64, value: Value, uc: u64, t: u64, coffer: Vec<MsgId>, nonce: &[u8]) -> GorillaMessage {
        let mut m = GorillaMessage::new(round, value, priority_for(uc, t), uc, coffer, nonce.to_vec(), 0);
        m.vdf = unit_value(KEY.seed, &m.vdf_input(), KEY.k);
        m
    }

    #[test]
    fn base_case_valid_and_bad_vdf() {
        let mut s = MessageStore::new();
        let m = sealed(1, Value::A, 0, 1, vec![], b"n");
        let id = s.intern(m.clone()).unwrap();
        let mut v = Validator::new(KEY, 1);
        assert_eq!(v.check(&s, &id), Ok(()));

        let mut forged = m;
        forged.vdf ^= 0xdead;
        let fid = s.intern(forged).unwrap();
        assert_eq!(v.check(&s, &fid), Err(Invalid::BadVdf));
    }

    #[test]
    fn round_two_needs_threshold_members() {
        let t = 3;
        let mut s = MessageStore::new();
        let ids: Vec<MsgId> = (0..2u8)
            .map(|i| s.intern(sealed(1, Value::A, 0, t, vec![], &[i])).unwrap())
            .collect();
        let m = sealed(2, Value::A, 1, t, ids, b"x");
        let id = s.intern(m).unwrap();
        let mut v = Validator::new(KEY, t);
        assert!(matches!(v.check(&s, &id), Err(Invalid::Inconsistent(_))));
    }

    #[test]
    fn unanimous_round_one_gives_uc_one() {
        let t = 2;
        let mut s = MessageStore::new();
        let ids: Vec<MsgId> = (0..2u8)
            .map(|i| s.intern(sealed(1, Value::A, 0, t, vec![], &[i])).unwrap())
            .collect();
        let good = sealed(2, Value::A, 1, t, ids.clone(), b"x");
        assert_eq!(check_gorilla_consistency(&s, &good, t), Ok(()));
        let wrong_uc = sealed(2, Value::A, 0, t, ids.clone(), b"x");
        assert!(check_gorilla_consistency(&s, &wrong_uc, t).is_err());
        let wrong_v = sealed(2, Value::B, 0, t, ids, b"x");
        assert!(check_gorilla_consistency(&s, &wrong_v, t).is_err());
    }

    #[test]
    fn mixed_set_binds_value_to_vdf_parity() {
        let t = 2;
        let mut s = MessageStore::new();
        let a = s.intern(sealed(1, Value::A, 0, t, vec![], b"a")).unwrap();
        let b = s.intern(sealed(1, Value::B, 0, t, vec![], b"b")).unwrap();
        let m = sealed(2, Value::A, 0, t, vec![a, b], b"x");
        let coin = Value::from_bit(m.vdf);
        let honest = GorillaMessage {
            value: coin,
            ..m.clone()
        };
        let liar = GorillaMessage {
            value: coin.other(),
            ..m
        };
        assert_eq!(check_gorilla_consistency(&s, &honest, t), Ok(()));
        assert!(check_gorilla_consistency(&s, &liar, t).is_err());
    }

    #[test]
    fn entry_witness_frees_value_after_round_entry() {
        let t = 2;
        let mut s = MessageStore::new();
        let a = s.intern(sealed(1, Value::A, 0, t, vec![], b"a")).unwrap();
        let b = s.intern(sealed(1, Value::B, 0, t, vec![], b"b")).unwrap();
        // find an entry message whose parity disagrees with a later re-draw
        for n in 0u8..64 {
            let entry = sealed(2, Value::A, 0, t, vec![a, b], &[n]);
            let entry = GorillaMessage {
                value: Value::from_bit(entry.vdf),
                ..entry
            };
            let eid = s.intern(entry.clone()).unwrap();
            let stay = sealed(2, entry.value, 0, t, vec![a, b, eid], &[n, 1]);
            if Value::from_bit(stay.vdf) != entry.value {
                assert_eq!(check_gorilla_consistency(&s, &stay, t), Ok(()));
                let sid = s.intern(stay).unwrap();
                assert!(Validator::new(KEY, t).is_valid(&s, &sid));
                return;
            }
        }
        panic!("no disagreeing parity found");
    }

    #[test]
    fn invalid_ancestor_propagates() {
        let t = 1;
        let mut s = MessageStore::new();
        let mut bad = sealed(1, Value::A, 0, t, vec![], b"a");
        bad.vdf ^= 1;
        let bid = s.intern(bad).unwrap();
        let top = s.intern(sealed(1, Value::A, 0, t, vec![bid], b"top")).unwrap();
        let mut v = Validator::new(KEY, t);
        assert_eq!(v.check(&s, &top), Err(Invalid::InvalidAncestor(bid)));
    }

    #[test]
    fn sandglass_mixed_set_leaves_value_free() {
        use crate::types::NodeId;
        let t = 2;
        let mut s = MessageStore::new();
        let a = s
            .intern(SandglassMessage::new(NodeId::Correct(0), 1, 1, Value::A, 0, 0, vec![]))
            .unwrap();
        let b = s
            .intern(SandglassMessage::new(NodeId::Correct(1), 1, 1, Value::B, 0, 0, vec![]))
            .unwrap();
        for v in [Value::A, Value::B] {
            let m = SandglassMessage::new(NodeId::Correct(0), 2, 2, v, 0, 0, vec![a, b]);
            assert_eq!(check_sandglass_consistency(&s, &m, t), Ok(()));
        }
    }

    #[test]
    fn consistent_attributes_follow_the_rules() {
        let t = 2;
        let mut s = MessageStore::new();
        let a = s.intern(sealed(1, Value::A, 0, t, vec![], b"a")).unwrap();
        let a2 = s.intern(sealed(1, Value::A, 0, t, vec![], b"a2")).unwrap();
        assert_eq!(
            consistent_attributes(&s, &[a, a2], 2, t, 1, Value::B),
            Some((Value::A, 1, 0))
        );
        assert_eq!(consistent_attributes(&s, &[a], 2, t, 1, Value::B), None);
        assert_eq!(
            consistent_attributes(&s, &[], 1, t, 1, Value::B),
            Some((Value::B, 0, 0))
        );
    }
}
