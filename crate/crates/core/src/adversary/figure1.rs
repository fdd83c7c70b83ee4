//! The counterexample schedule: six Byzantine messages whose units cannot
//! be regrouped into whole steps without peeking.
//!
//! K = 3, N = 7. Capacity is 1 in steps 0 and 1, 3 in step 2, 1 in step 3
//! and 0 afterwards; c0 and c1 are active throughout, c2 and c3 only in
//! step 2. Messages 1, 2, 3 have empty coffers; 4, 5, 6 hold {1, 2, 3}.
//!
//! | tick | slot 0 | slot 1 | slot 2 |
//! |------|--------|--------|--------|
//! | 0, 1 | γ1     |        |        |
//! | 2, 3 | γ3     |        |        |
//! | 4, 5 | γ2     |        |        |
//! | 6    | γ1     | γ2     | γ3     |
//! | 7, 8 | γ4     | γ5     | γ6     |
//! | 9    | γ4     |        |        |
//! | 10   | γ5     |        |        |
//! | 11   | γ6     |        |        |
//!
//! Nonces are chosen so the input digests order as γ1 < γ3 < γ2, which
//! fixes the reorganizer's tie-breaks among the three messages that all
//! finish at tick 6.

use super::{Action, AdvView, Strategy};
use crate::env::{CorrectSpec, Environment};
use crate::message::{GorillaMessage, ProtoMsg};
use crate::oracle::VdfInput;
use crate::types::{Hash32, MsgId, Value};

pub const FIGURE1_SEED: u64 = 1;

pub fn figure1_environment() -> Environment {
    let mut capacity = vec![1; 6];
    capacity.extend([3; 3]);
    capacity.extend([1; 3]);
    Environment {
        k: 3,
        n: 7,
        correct: vec![
            CorrectSpec::always(0, Value::A),
            CorrectSpec::always(1, Value::A),
            CorrectSpec {
                id: 2,
                input: Value::A,
                join: 6,
                leave: Some(9),
            },
            CorrectSpec {
                id: 3,
                input: Value::A,
                join: 6,
                leave: Some(9),
            },
        ],
        capacity,
        capacity_default: 0,
        max_steps: 5,
    }
}

fn nonce(label: &str, i: u32) -> Vec<u8> {
    format!("fig1-{label}-{i}").into_bytes()
}

fn digest(n: &[u8], coffer: &[MsgId]) -> Hash32 {
    VdfInput::new(coffer, n.to_vec()).digest()
}

/// First nonce for `label` whose digest lies above `floor`.
fn nonce_above(label: &str, floor: Option<Hash32>) -> Vec<u8> {
    (0..)
        .map(|i| nonce(label, i))
        .find(|n| floor.is_none_or(|f| digest(n, &[]) > f))
        .unwrap()
}

#[derive(Clone, Debug)]
pub struct Figure1Script {
    /// Nonces of messages 1..=6, index 0 = message 1.
    nonces: [Vec<u8>; 6],
    /// Ids of messages 1, 2, 3 once created.
    base: Vec<MsgId>,
    made: Vec<MsgId>,
}

impl Default for Figure1Script {
    fn default() -> Self {
        Self::new()
    }
}

impl Figure1Script {
    pub fn new() -> Self {
        let n1 = nonce("1", 0);
        let n3 = nonce_above("3", Some(digest(&n1, &[])));
        let n2 = nonce_above("2", Some(digest(&n3, &[])));
        Figure1Script {
            nonces: [n1, n2, n3, nonce("4", 0), nonce("5", 0), nonce("6", 0)],
            base: Vec::new(),
            made: Vec::new(),
        }
    }

    /// VDF input of message `i` (1-based), given the base coffer.
    pub fn input(&self, i: usize, base: &[MsgId]) -> VdfInput {
        let coffer: &[MsgId] = if i <= 3 { &[] } else { base };
        VdfInput::new(coffer, self.nonces[i - 1].clone())
    }

    fn get(&self, slot: u32, i: usize) -> Action {
        Action::Get {
            slot,
            coffer: if i <= 3 { vec![] } else { self.base.clone() },
            nonce: self.nonces[i - 1].clone(),
        }
    }

    fn create(&mut self, view: &AdvView<'_>, i: usize) -> Option<Action> {
        let inp = self.input(i, &self.base);
        let vdf = view.chains.get(&inp.digest())?.vdf?;
        let coffer = if i <= 3 { vec![] } else { self.base.clone() };
        let msg = GorillaMessage::new(1, Value::B, 0, 0, coffer, self.nonces[i - 1].clone(), vdf);
        self.made.push(msg.id());
        Some(Action::Create { slot: 0, msg })
    }
}

impl Strategy for Figure1Script {
    fn name(&self) -> String {
        "figure1".into()
    }

    fn act(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        match view.tick {
            0 | 1 => vec![self.get(0, 1)],
            2 | 3 => vec![self.get(0, 3)],
            4 | 5 => vec![self.get(0, 2)],
            6 => vec![self.get(0, 1), self.get(1, 2), self.get(2, 3)],
            7 | 8 => vec![self.get(0, 4), self.get(1, 5), self.get(2, 6)],
            9 => vec![self.get(0, 4)],
            10 => vec![self.get(0, 5)],
            11 => vec![self.get(0, 6)],
            _ => vec![],
        }
    }

    fn emit(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        let mut out = Vec::new();
        match view.tick {
            6 => {
                for i in 1..=3 {
                    out.extend(self.create(view, i));
                }
                self.base = self.made.clone();
            }
            9..=11 => {
                out.extend(self.create(view, view.tick as usize - 5));
            }
            _ => {}
        }
        if view.tick == 11 {
            for &msg in &self.made[3..] {
                out.push(Action::Send {
                    slot: 0,
                    to: vec![0, 1],
                    msg,
                });
            }
        }
        out
    }
}
