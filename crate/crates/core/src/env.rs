//! Join/leave schedules, initial values and Byzantine capacity.

use std::fmt;

use crate::types::{first_tick, Value};

/// One correct (or, in SM+, good) node. Active over ticks `[join, leave)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectSpec {
    pub id: u32,
    pub input: Value,
    pub join: u64,
    pub leave: Option<u64>,
}

impl CorrectSpec {
    pub fn always(id: u32, input: Value) -> Self {
        CorrectSpec {
            id,
            input,
            join: 0,
            leave: None,
        }
    }

    pub fn active_at(&self, tick: u64) -> bool {
        tick >= self.join && self.leave.is_none_or(|l| tick < l)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Environment {
    pub k: u32,
    pub n: u32,
    pub correct: Vec<CorrectSpec>,
    /// Byzantine slots at each tick; ticks past the end use `capacity_default`.
    pub capacity: Vec<u32>,
    pub capacity_default: u32,
    pub max_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EnvViolation {
    BadParameter(String),
    DuplicateNode(u32),
    OffBoundary { node: u32, tick: u64 },
    NoActiveNode { tick: u64 },
    Overfull { tick: u64, active: u32 },
    NoCorrectMajority { tick: u64, correct: u32, byzantine: u32 },
}

impl fmt::Display for EnvViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvViolation::BadParameter(s) => write!(f, "bad parameter: {s}"),
            EnvViolation::DuplicateNode(i) => write!(f, "node c{i} listed twice"),
            EnvViolation::OffBoundary { node, tick } => {
                write!(f, "c{node} joins or leaves at tick {tick}, not a step boundary")
            }
            EnvViolation::NoActiveNode { tick } => write!(f, "no active node at tick {tick}"),
            EnvViolation::Overfull { tick, active } => {
                write!(f, "{active} active nodes at tick {tick} exceeds N")
            }
            EnvViolation::NoCorrectMajority {
                tick,
                correct,
                byzantine,
            } => write!(
                f,
                "tick {tick}: {correct} correct vs {byzantine} byzantine is not a strict majority"
            ),
        }
    }
}

impl Environment {
    pub fn ticks(&self) -> u64 {
        self.max_steps * u64::from(self.k)
    }

    pub fn cap(&self, tick: u64) -> u32 {
        self.capacity
            .get(tick as usize)
            .copied()
            .unwrap_or(self.capacity_default)
    }

    /// Defective slots available for a whole step (SM+ view).
    pub fn step_cap(&self, step: u64) -> u32 {
        let k = u64::from(self.k);
        (0..k).map(|j| self.cap(first_tick(step, k) + j)).min().unwrap_or(0)
    }

    pub fn correct_at(&self, tick: u64) -> impl Iterator<Item = &CorrectSpec> {
        self.correct.iter().filter(move |c| c.active_at(tick))
    }

    pub fn correct_count(&self, tick: u64) -> u32 {
        self.correct_at(tick).count() as u32
    }

    pub fn active_in_step(&self, id: u32, step: u64) -> bool {
        let t = first_tick(step, u64::from(self.k));
        self.correct.iter().any(|c| c.id == id && c.active_at(t))
    }

    pub fn spec(&self, id: u32) -> Option<&CorrectSpec> {
        self.correct.iter().find(|c| c.id == id)
    }

    pub fn has_byzantine_capacity(&self) -> bool {
        (0..self.ticks()).any(|t| self.cap(t) > 0)
    }

    pub fn unanimous_input(&self) -> Option<Value> {
        let first = self.correct.first()?.input;
        self.correct.iter().all(|c| c.input == first).then_some(first)
    }
}

/// Every violated environment invariant over the first `max_steps` steps.
pub fn validate_environment(env: &Environment) -> Vec<EnvViolation> {
    let mut out = Vec::new();
    if env.k == 0 {
        out.push(EnvViolation::BadParameter("K must be at least 1".into()));
        return out;
    }
    if env.n == 0 {
        out.push(EnvViolation::BadParameter("N must be at least 1".into()));
    }
    let k = u64::from(env.k);
    let mut seen = std::collections::BTreeSet::new();
    for c in &env.correct {
        if !seen.insert(c.id) {
            out.push(EnvViolation::DuplicateNode(c.id));
        }
        for tick in std::iter::once(c.join).chain(c.leave) {
            if tick % k != 0 {
                out.push(EnvViolation::OffBoundary { node: c.id, tick });
            }
        }
        if c.leave.is_some_and(|l| l <= c.join) {
            out.push(EnvViolation::BadParameter(format!("c{} leaves before it joins", c.id)));
        }
    }
    for tick in 0..env.ticks() {
        let correct = env.correct_count(tick);
        let byzantine = env.cap(tick);
        if correct + byzantine == 0 {
            out.push(EnvViolation::NoActiveNode { tick });
            continue;
        }
        if correct + byzantine > env.n {
            out.push(EnvViolation::Overfull {
                tick,
                active: correct + byzantine,
            });
        }
        if correct <= byzantine {
            out.push(EnvViolation::NoCorrectMajority {
                tick,
                correct,
                byzantine,
            });
        }
    }
    out
}
