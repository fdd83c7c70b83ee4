use std::collections::{BTreeMap, HashMap};

use super::{GorillaMessage, MessageStore, SandglassMessage};
use crate::error::StoreError;
use crate::types::{MsgId, NodeId};

/// Generating node and per-node send ordinal (starting at 1) of each
/// Gorilla message, as read off a trace.
pub type Attribution = BTreeMap<MsgId, (NodeId, u64)>;

/// Translates a Gorilla message (and, recursively, its coffer) into the
/// equivalent Sandglass message: vdf and nonce dropped, sender and uid
/// added. `memo` carries translations across calls.
pub fn mapm(
    gorilla: &MessageStore<GorillaMessage>,
    sandglass: &mut MessageStore<SandglassMessage>,
    attribution: &Attribution,
    memo: &mut HashMap<MsgId, MsgId>,
    id: &MsgId,
) -> Result<MsgId, StoreError> {
    if let Some(done) = memo.get(id) {
        return Ok(*done);
    }
    // unmapped ancestors only; mapped members are already closed
    let mut todo = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![*id];
    while let Some(x) = stack.pop() {
        if memo.contains_key(&x) || !seen.insert(x) {
            continue;
        }
        todo.push(x);
        if let Some(m) = gorilla.get(&x) {
            stack.extend(m.coffer.iter().copied());
        }
    }
    todo.sort_by_key(|x| gorilla.position(x).unwrap_or(usize::MAX));
    for x in todo {
        let m = gorilla.get(&x).ok_or(StoreError::DanglingCofferRef(x))?;
        let &(sender, uid) = attribution.get(&x).ok_or(StoreError::UnknownSender(x))?;
        let coffer = m.coffer.iter().map(|c| memo[c]).collect();
        let sm = SandglassMessage::new(sender, uid, m.round, m.value, m.priority, m.uc, coffer);
        let sid = sandglass.intern(sm)?;
        memo.insert(x, sid);
    }
    Ok(memo[id])
}

/// Maps every attributed message, returning the Sandglass store and the
/// id translation.
pub fn mapm_all(
    gorilla: &MessageStore<GorillaMessage>,
    attribution: &Attribution,
) -> Result<(MessageStore<SandglassMessage>, HashMap<MsgId, MsgId>), StoreError> {
    let mut store = MessageStore::new();
    let mut memo = HashMap::new();
    let mut ids: Vec<&MsgId> = attribution.keys().collect();
    ids.sort_by_key(|x| gorilla.position(x).unwrap_or(usize::MAX));
    for id in ids {
        mapm(gorilla, &mut store, attribution, &mut memo, id)?;
    }
    Ok((store, memo))
}
