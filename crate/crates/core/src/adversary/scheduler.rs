//! SM+ schedulers. Good-to-good delivery is synchronous and not up to the
//! scheduler; it only decides what defective nodes receive, when
//! defective messages reach good nodes, and which defective nodes act
//! late in a step (receiving what the early ones just sent).

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::StrategySpec;
use crate::message::{MessageStore, SandglassMessage};
use crate::types::{MsgId, NodeId};

pub struct SchedView<'a> {
    pub step: u64,
    pub store: &'a MessageStore<SandglassMessage>,
    pub good: &'a [NodeId],
    pub defective: &'a [NodeId],
    /// Per active defective node: messages sent before this step that it
    /// has not received.
    pub backlog: &'a BTreeMap<NodeId, Vec<MsgId>>,
    /// Defective messages sent before this step: (id, send step, active
    /// good nodes still missing it).
    pub unreleased: &'a [(MsgId, u64, Vec<NodeId>)],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepPlan {
    pub to_defective: Vec<(NodeId, MsgId)>,
    pub release: Vec<(NodeId, MsgId)>,
    pub late: BTreeSet<NodeId>,
}

pub trait Scheduler: Send {
    fn name(&self) -> String;
    fn plan(&mut self, view: &SchedView<'_>) -> StepPlan;
}

fn all_backlog(view: &SchedView<'_>) -> Vec<(NodeId, MsgId)> {
    view.backlog
        .iter()
        .flat_map(|(n, ids)| ids.iter().map(move |m| (*n, *m)))
        .collect()
}

/// Defective nodes hear nothing and are never heard.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullScheduler;

impl Scheduler for NullScheduler {
    fn name(&self) -> String {
        "null".into()
    }

    fn plan(&mut self, _view: &SchedView<'_>) -> StepPlan {
        StepPlan::default()
    }
}

/// Everything as early as allowed. With `late`, odd-positioned defective
/// nodes act after the others each step.
#[derive(Clone, Copy, Debug, Default)]
pub struct EagerScheduler {
    pub late: bool,
}

impl Scheduler for EagerScheduler {
    fn name(&self) -> String {
        "eager".into()
    }

    fn plan(&mut self, view: &SchedView<'_>) -> StepPlan {
        StepPlan {
            to_defective: all_backlog(view),
            release: view
                .unreleased
                .iter()
                .flat_map(|(m, _, to)| to.iter().map(move |n| (*n, *m)))
                .collect(),
            late: if self.late {
                view.defective.iter().skip(1).step_by(2).copied().collect()
            } else {
                BTreeSet::new()
            },
        }
    }
}

/// Defective messages reach good nodes `delay` steps after they are sent.
#[derive(Clone, Copy, Debug)]
pub struct DelayedScheduler {
    pub delay: u64,
}

impl Scheduler for DelayedScheduler {
    fn name(&self) -> String {
        "delayed".into()
    }

    fn plan(&mut self, view: &SchedView<'_>) -> StepPlan {
        let d = self.delay.max(1);
        StepPlan {
            to_defective: all_backlog(view),
            release: view
                .unreleased
                .iter()
                .filter(|(_, s, _)| s + d <= view.step)
                .flat_map(|(m, _, to)| to.iter().map(move |n| (*n, *m)))
                .collect(),
            late: BTreeSet::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FuzzScheduler {
    rng: ChaCha8Rng,
}

impl FuzzScheduler {
    pub fn new(seed: u64) -> Self {
        FuzzScheduler {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7363_6864),
        }
    }
}

impl Scheduler for FuzzScheduler {
    fn name(&self) -> String {
        "fuzz".into()
    }

    fn plan(&mut self, view: &SchedView<'_>) -> StepPlan {
        let mut plan = StepPlan::default();
        for pair in all_backlog(view) {
            if self.rng.gen_bool(0.6) {
                plan.to_defective.push(pair);
            }
        }
        for (m, _, to) in view.unreleased {
            for n in to {
                if self.rng.gen_bool(0.4) {
                    plan.release.push((*n, *m));
                }
            }
        }
        for n in view.defective {
            if self.rng.gen_bool(0.5) {
                plan.late.insert(*n);
            }
        }
        plan
    }
}

/// The scheduler that realizes a Byzantine strategy's image in SM+.
pub fn scheduler_strategy_from(spec: &StrategySpec, seed: u64) -> Box<dyn Scheduler> {
    match spec.name.as_str() {
        "withhold_release" | "delayed" => Box::new(DelayedScheduler {
            delay: spec.u64_param("delay", 1),
        }),
        "split_vdf" | "figure1" => Box::new(EagerScheduler { late: true }),
        "equivocate_nonce" => Box::new(EagerScheduler { late: false }),
        "eager" => Box::new(EagerScheduler {
            late: spec.bool_param("late", false),
        }),
        "fuzzer" | "fuzz" => Box::new(FuzzScheduler::new(spec.u64_param("seed", seed))),
        _ => Box::new(NullScheduler),
    }
}
