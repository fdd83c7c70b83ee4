//! Execution mappings GM → GM+ → SM+ and their checkers.
//!
//! `reorg` moves every Byzantine VDF computation into a one-step shell
//! node; `interpret` translates the result message by message into an
//! SM+ execution. Each mapping has a checker that reports every violated
//! condition rather than stopping at the first.

mod align;
mod interpret;
mod reorg;

use std::fmt;

pub use align::{alignment_replay, replay_good_nodes, GoodNodePlan, GoodReplay};
pub use interpret::{check_interpretation, interpret};
pub use reorg::{check_claims, check_reorg, reorg, reorg_with, ReorgMode, Shell, ShellAssignment, VdfSpan};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub condition: &'static str,
    pub tick: Option<u64>,
    pub detail: String,
}

/// Outcome of a mapping check: the violated conditions, one per entry.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, condition: &str) -> usize {
        self.violations.iter().filter(|v| v.condition == condition).count()
    }

    pub fn conditions(&self) -> std::collections::BTreeSet<&'static str> {
        self.violations.iter().map(|v| v.condition).collect()
    }

    pub(crate) fn flag(&mut self, condition: &'static str, tick: Option<u64>, detail: impl Into<String>) {
        self.violations.push(Violation {
            condition,
            tick,
            detail: detail.into(),
        });
    }

    pub fn merge(&mut self, other: Report) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            match v.tick {
                Some(t) => writeln!(f, "violation {} tick={t} {}", v.condition, v.detail)?,
                None => writeln!(f, "violation {} {}", v.condition, v.detail)?,
            }
        }
        Ok(())
    }
}
