//! Oracle laws as plain functions over generated cases, shared by the
//! property tests and the acceptance run.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use gorilla_harness::error::OracleError;
use gorilla_harness::oracle::{unit_value, Commitment, Mode, OracleLedger, VdfInput};
use gorilla_harness::types::{Hash32, MsgId, NodeId};

type Law = Result<(), TestCaseError>;

fn gamma(i: u8) -> VdfInput {
    VdfInput::new(&[], vec![i])
}

/// A Get attempt: node, tick, input, and which known unit of that input
/// to present (None for the empty chain).
#[derive(Clone, Debug)]
pub struct Call {
    node: u32,
    tick: u64,
    input: u8,
    prev: Option<usize>,
}

pub fn calls() -> impl Strategy<Value = (u32, u64, Vec<Call>)> {
    let cs = prop::collection::vec(
        (0u32..3, 0u64..12, 0u8..3, prop::option::of(0usize..4)).prop_map(|(node, tick, input, prev)| Call {
            node,
            tick,
            input,
            prev,
        }),
        1..60,
    )
    .prop_map(|mut v| {
        v.sort_by_key(|c| c.tick);
        v
    });
    (1u32..5, any::<u64>(), cs)
}

/// Replays the calls, returning each outcome with the presented unit.
fn replay(o: &mut OracleLedger, cs: &[Call]) -> Vec<(Option<u64>, Result<u64, OracleError>)> {
    let mut seen: BTreeMap<u8, Vec<u64>> = BTreeMap::new();
    let mut out = Vec::new();
    for c in cs {
        let prev = c.prev.and_then(|i| seen.get(&c.input).and_then(|u| u.get(i)).copied());
        let r = o.get(NodeId::Byz(c.node), c.tick, &gamma(c.input), prev);
        if let Ok(u) = r {
            let units = seen.entry(c.input).or_default();
            if !units.contains(&u) {
                units.push(u);
            }
        }
        out.push((prev, r));
    }
    out
}

pub fn rate_limit((k, seed, cs): (u32, u64, Vec<Call>)) -> Law {
    let mut o = OracleLedger::new(seed, k, Mode::Plain);
    let mut ok: BTreeMap<(u32, u64), u32> = BTreeMap::new();
    for (c, (_, r)) in cs.iter().zip(replay(&mut o, &cs)) {
        let before = ok.get(&(c.node, c.tick)).copied().unwrap_or(0);
        match r {
            Ok(_) => *ok.entry((c.node, c.tick)).or_insert(0) += 1,
            Err(OracleError::RateLimitExceeded { .. }) => prop_assert!(before >= 1),
            Err(OracleError::StaleChain { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected {}", e),
        }
    }
    prop_assert!(ok.values().all(|&n| n == 1));
    Ok(())
}

pub fn memoized_and_sequential((k, seed, cs): (u32, u64, Vec<Call>)) -> Law {
    let mut o = OracleLedger::new(seed, k, Mode::Plain);
    for (c, (prev, r)) in cs.iter().zip(replay(&mut o, &cs)) {
        let Ok(u) = r else { continue };
        let g = gamma(c.input);
        let idx = match prev {
            None => 1,
            Some(p) => (1..=k).find(|&i| unit_value(seed, &g, i) == p).unwrap() + 1,
        };
        prop_assert_eq!(u, unit_value(seed, &g, idx));
    }
    for rec in o.records() {
        prop_assert!(rec.unit_ticks.windows(2).all(|w| w[0] < w[1]));
        if let Some(done) = rec.completed_at_tick {
            prop_assert!(done >= rec.unit_ticks[0] + u64::from(k) - 1);
            prop_assert!(o.verify(*rec.units.last().unwrap(), &rec.input));
        }
    }
    Ok(())
}

pub fn verify_case() -> impl Strategy<Value = (u32, u64, Vec<u8>, u64)> {
    (1u32..6, any::<u64>(), any::<Vec<u8>>(), any::<u64>())
}

pub fn verify_only_last((k, seed, nonce, other): (u32, u64, Vec<u8>, u64)) -> Law {
    let o = OracleLedger::new(seed, k, Mode::Plain);
    let g = VdfInput::new(&[], nonce);
    let last = unit_value(seed, &g, k);
    prop_assert!(o.verify(last, &g));
    if other != last {
        prop_assert!(!o.verify(other, &g));
    }
    Ok(())
}

pub fn coffer_case() -> impl Strategy<Value = (Vec<MsgId>, Vec<u8>)> {
    (
        prop::collection::vec(any::<[u8; 32]>().prop_map(Hash32), 0..6),
        any::<Vec<u8>>(),
    )
}

pub fn coffer_order_irrelevant((ids, nonce): (Vec<MsgId>, Vec<u8>)) -> Law {
    let mut rev = ids.clone();
    rev.reverse();
    prop_assert_eq!(
        VdfInput::new(&ids, nonce.clone()).digest(),
        VdfInput::new(&rev, nonce).digest()
    );
    Ok(())
}

pub fn peek_case() -> impl Strategy<Value = (u32, u64, u64, BTreeSet<u64>, u32)> {
    (
        1u32..5,
        0u64..4,
        0u64..4,
        prop::collection::btree_set(0u64..20, 0..6),
        0u32..5,
    )
}

/// Peek succeeds exactly when the pledges cover the missing units within
/// the current step; honoring them leaves the audit clean.
pub fn peek_needs_commitment((k, step, offset, pledge_ticks, done_units): (u32, u64, u64, BTreeSet<u64>, u32)) -> Law {
    let k64 = u64::from(k);
    let tick = step * k64 + offset % k64;
    let mut o = OracleLedger::new(7, k, Mode::Plus);
    let g = gamma(1);
    let worker = NodeId::Byz(9);
    let have = done_units.min(k - 1).min(step as u32 * k);
    let mut prev = None;
    for i in 0..have {
        prev = Some(o.get(worker, u64::from(i), &g, prev).unwrap());
    }
    let c = Commitment {
        pledges: pledge_ticks.iter().map(|&t| (t, worker)).collect(),
    };
    let step_end = step * k64 + k64 - 1;
    let inside: Vec<u64> = pledge_ticks
        .iter()
        .copied()
        .filter(|&t| t >= tick && t <= step_end)
        .collect();
    let r = o.peek(NodeId::Byz(0), tick, &g, &[], &c);
    if inside.len() as u64 >= k64 - u64::from(have) {
        prop_assert_eq!(r.unwrap(), unit_value(7, &g, k));
        for &t in inside.iter().take((k - have) as usize) {
            prev = Some(o.get(worker, t, &g, prev).unwrap());
        }
        prop_assert!(o.audit_step(step).is_empty());
    } else {
        let hit = matches!(r, Err(OracleError::PeekWithoutCommitment { .. }));
        prop_assert!(hit);
    }
    Ok(())
}

pub fn broken_case() -> impl Strategy<Value = (u32, u64, u32)> {
    (2u32..5, 0u64..3, 0u32..4)
}

pub fn unkept_commitment_audited((k, step, kept): (u32, u64, u32)) -> Law {
    let k64 = u64::from(k);
    let kept = kept.min(k - 1);
    let mut o = OracleLedger::new(3, k, Mode::Plus);
    let g = gamma(2);
    let worker = NodeId::Byz(1);
    let start = step * k64;
    let c = Commitment {
        pledges: (0..k64).map(|j| (start + j, worker)).collect(),
    };
    o.peek(NodeId::Byz(0), start, &g, &[], &c).unwrap();
    let mut prev = None;
    for j in 0..kept {
        prev = Some(o.get(worker, start + u64::from(j), &g, prev).unwrap());
    }
    let v = o.audit_step(step);
    prop_assert_eq!(v.len(), 1);
    let hit = matches!(v[0], OracleError::CommitmentBroken { .. });
    prop_assert!(hit);
    Ok(())
}

pub fn recursive_case() -> impl Strategy<Value = (u32, u64)> {
    (2u32..5, 0u64..3)
}

/// A peek over a coffer holding an unfinished peeked result is refused;
/// once the inner vdf is done it is allowed.
pub fn recursive_peek_refused((k, step): (u32, u64)) -> Law {
    let k64 = u64::from(k);
    let mut o = OracleLedger::new(5, k, Mode::Plus);
    let (inner, outer) = (gamma(3), gamma(4));
    let w = NodeId::Byz(1);
    let start = step * k64;
    let c = Commitment {
        pledges: (0..k64).map(|j| (start + j, w)).collect(),
    };
    o.peek(NodeId::Byz(0), start, &inner, &[], &c).unwrap();
    let r = o.peek(NodeId::Byz(2), start, &outer, &[inner.digest()], &c);
    let hit = matches!(r, Err(OracleError::RecursivePeek { .. }));
    prop_assert!(hit);
    let mut prev = None;
    for j in 0..k64 {
        prev = Some(o.get(w, start + j, &inner, prev).unwrap());
    }
    let next = start + k64;
    let c2 = Commitment {
        pledges: (0..k64).map(|j| (next + j, w)).collect(),
    };
    prop_assert!(o.peek(NodeId::Byz(2), next, &outer, &[inner.digest()], &c2).is_ok());
    Ok(())
}

pub fn plain_case() -> impl Strategy<Value = (u32, u64)> {
    (1u32..5, 0u64..20)
}

pub fn plain_never_peeks((k, tick): (u32, u64)) -> Law {
    let mut o = OracleLedger::new(0, k, Mode::Plain);
    let c = Commitment {
        pledges: (tick..tick + u64::from(k)).map(|t| (t, NodeId::Byz(0))).collect(),
    };
    prop_assert_eq!(
        o.peek(NodeId::Byz(0), tick, &gamma(0), &[], &c),
        Err(OracleError::PeekInPlainMode)
    );
    Ok(())
}
