use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, AdvView, Strategy};
use crate::message::{check_gorilla_consistency, consistent_attributes, GorillaMessage, ProtoMsg};
use crate::oracle::{Commitment, VdfInput};
use crate::trace::Model;
use crate::types::{MsgId, NodeId, Value};

/// Which correct nodes receive a Byzantine send.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Targets {
    All,
    /// The lower half (rounded up) of the correct ids active next tick.
    Half,
}

impl Targets {
    fn pick(self, correct_next: &[u32]) -> Vec<u32> {
        let mut ids = correct_next.to_vec();
        ids.sort();
        if self == Targets::Half {
            ids.truncate(ids.len().div_ceil(2));
        }
        ids
    }
}

/// Round and coffer a correct node holding every usable valid message
/// known to the adversary would use.
fn virtual_view(view: &AdvView<'_>) -> (u64, Vec<MsgId>) {
    let usable = view.usable_valid();
    let rec: BTreeSet<MsgId> = view
        .store
        .closure(usable.iter())
        .into_iter()
        .filter(|id| view.known_valid.contains(id) && view.usable_now(id))
        .collect();
    let mut counts = std::collections::BTreeMap::<u64, u64>::new();
    for id in &rec {
        *counts.entry(view.store.get(id).unwrap().round).or_insert(0) += 1;
    }
    let q = counts.iter().rev().find(|(_, &n)| n >= view.t).map(|(&r, _)| r);
    let r = q.map_or(1, |q| q + 1);
    let mut coffer = BTreeSet::new();
    for id in &rec {
        let m = view.store.get(id).unwrap();
        if Some(m.round) == q || m.round == r {
            coffer.insert(*id);
            coffer.extend(m.coffer.iter().copied());
        }
    }
    (r, coffer.into_iter().collect())
}

/// A valid message over `coffer` once its vdf is known.
fn seal(
    view: &AdvView<'_>,
    round: u64,
    coffer: &[MsgId],
    nonce: &[u8],
    vdf: u64,
    prefer: Value,
) -> Option<GorillaMessage> {
    let (value, uc, priority) = consistent_attributes(view.store, coffer, round, view.t, vdf, prefer)?;
    let m = GorillaMessage::new(round, value, priority, uc, coffer.to_vec(), nonce.to_vec(), vdf);
    check_gorilla_consistency(view.store, &m, view.t).ok()?;
    Some(m)
}

fn job_nonce(tag: u8, n: u64) -> Vec<u8> {
    let mut v = vec![b'b', tag];
    v.extend_from_slice(&n.to_be_bytes());
    v
}

#[derive(Clone, Debug)]
struct Job {
    round: u64,
    coffer: Vec<MsgId>,
    nonce: Vec<u8>,
    prefer: Value,
    /// Tick of the last Get issued for this job.
    last_get: Option<u64>,
}

impl Job {
    fn digest(&self) -> crate::types::Hash32 {
        VdfInput::new(&self.coffer, self.nonce.clone()).digest()
    }

    fn vdf(&self, view: &AdvView<'_>) -> Option<u64> {
        view.chains.get(&self.digest()).and_then(|c| c.vdf)
    }

    fn get(&self, slot: u32) -> Action {
        Action::Get {
            slot,
            coffer: self.coffer.clone(),
            nonce: self.nonce.clone(),
        }
    }
}

/// Messages awaiting release: (id, earliest release step, targets).
type Outbox = Vec<(MsgId, u64, Targets)>;

fn release(view: &AdvView<'_>, outbox: &mut Outbox) -> Vec<Action> {
    if !view.is_last_tick() || view.cap == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    outbox.retain(|&(msg, step, targets)| {
        if step > view.step {
            return true;
        }
        let to = targets.pick(&view.correct_next);
        if !to.is_empty() {
            out.push(Action::Send { slot: 0, to, msg });
        }
        false
    });
    out
}

/// Byzantine slots idle.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullStrategy;

impl Strategy for NullStrategy {
    fn name(&self) -> String {
        "null".into()
    }

    fn act(&mut self, _view: &AdvView<'_>) -> Vec<Action> {
        Vec::new()
    }
}

/// Pooled VDF work: jobs are not bound to slots, so a chain's units move
/// between slot identities and across step boundaries as capacity allows.
/// Each finished message goes out at the next last tick, `delay` steps
/// after the step it was finished in.
#[derive(Clone, Debug)]
pub struct SplitVdf {
    pub targets: Targets,
    /// First tick at which jobs may start.
    pub stagger: u64,
    pub delay: u64,
    pub max_jobs: usize,
    jobs: Vec<Job>,
    outbox: Outbox,
    counter: u64,
    tag: u8,
}

impl SplitVdf {
    pub fn new(targets: Targets, stagger: u64, max_jobs: usize) -> Self {
        SplitVdf {
            targets,
            stagger,
            delay: 0,
            max_jobs: max_jobs.max(1),
            jobs: Vec::new(),
            outbox: Vec::new(),
            counter: 0,
            tag: b's',
        }
    }
}

impl Strategy for SplitVdf {
    fn name(&self) -> String {
        "split_vdf".into()
    }

    fn act(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        if view.tick < self.stagger {
            return Vec::new();
        }
        // a chain may take at most one unit per tick
        let mut ready: Vec<usize> = (0..self.jobs.len())
            .filter(|&i| self.jobs[i].last_get.is_none_or(|t| t < view.tick))
            .collect();
        while (ready.len() as u32) < view.cap && self.jobs.len() < self.max_jobs {
            let (round, coffer) = virtual_view(view);
            self.counter += 1;
            self.jobs.push(Job {
                round,
                coffer,
                nonce: job_nonce(self.tag, self.counter),
                prefer: Value::from_bit(self.counter),
                last_get: None,
            });
            ready.push(self.jobs.len() - 1);
        }
        let cap = view.cap.min(ready.len() as u32);
        let shift = (view.tick % u64::from(cap.max(1))) as usize;
        let mut out = Vec::new();
        for (i, &j) in ready.iter().take(cap as usize).enumerate() {
            let slot = ((i + shift) % cap as usize) as u32;
            self.jobs[j].last_get = Some(view.tick);
            out.push(self.jobs[j].get(slot));
        }
        out
    }

    fn emit(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        let mut out = Vec::new();
        if view.cap == 0 {
            return out;
        }
        let mut keep = Vec::new();
        for job in std::mem::take(&mut self.jobs) {
            match job.vdf(view) {
                Some(vdf) => {
                    if let Some(m) = seal(view, job.round, &job.coffer, &job.nonce, vdf, job.prefer) {
                        self.outbox.push((m.id(), view.step + self.delay, self.targets));
                        out.push(Action::Create { slot: 0, msg: m });
                    }
                }
                None => keep.push(job),
            }
        }
        self.jobs = keep;
        out.extend(release(view, &mut self.outbox));
        out
    }
}

/// Valid messages held back `delay` steps, then sent to `targets`.
#[derive(Clone, Debug)]
pub struct WithholdRelease(SplitVdf);

impl WithholdRelease {
    pub fn new(delay: u64, targets: Targets) -> Self {
        let mut inner = SplitVdf::new(targets, 0, usize::MAX);
        inner.delay = delay;
        inner.tag = b'w';
        WithholdRelease(inner)
    }
}

impl Strategy for WithholdRelease {
    fn name(&self) -> String {
        "withhold_release".into()
    }

    fn act(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        self.0.act(view)
    }

    fn emit(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        self.0.emit(view)
    }
}

/// Computes two vdfs over one coffer with distinct nonces when two slots
/// are free for a whole step, and with every finished message also sends
/// a copy that reuses its vdf under a fresh nonce.
#[derive(Clone, Debug, Default)]
pub struct EquivocateNonce {
    jobs: Vec<(u32, Job)>,
    outbox: Outbox,
    counter: u64,
}

impl EquivocateNonce {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Strategy for EquivocateNonce {
    fn name(&self) -> String {
        "equivocate_nonce".into()
    }

    fn act(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        if view.is_first_tick() {
            self.jobs.clear();
            let lanes = view.cap_through_step().min(2);
            let (round, coffer) = virtual_view(view);
            for slot in 0..lanes {
                self.counter += 1;
                self.jobs.push((
                    slot,
                    Job {
                        round,
                        coffer: coffer.clone(),
                        nonce: job_nonce(b'e', self.counter),
                        prefer: Value::A,
                        last_get: None,
                    },
                ));
            }
        }
        self.jobs.iter().map(|(slot, j)| j.get(*slot)).collect()
    }

    fn emit(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        let mut out = Vec::new();
        if !view.is_last_tick() {
            return out;
        }
        for (_, job) in std::mem::take(&mut self.jobs) {
            let Some(vdf) = job.vdf(view) else { continue };
            let Some(m) = seal(view, job.round, &job.coffer, &job.nonce, vdf, job.prefer) else {
                continue;
            };
            let mut forged = m.clone();
            forged.nonce.push(b'x');
            for msg in [m, forged] {
                self.outbox.push((msg.id(), view.step, Targets::All));
                out.push(Action::Create { slot: 0, msg });
            }
        }
        out.extend(release(view, &mut self.outbox));
        out
    }
}

/// Seeded random legal behavior: slot-bound jobs over real or arbitrary
/// coffers, stalls, forged and malformed messages, random targeted
/// sends, and (in GM+) peeks backed by a full-step commitment.
#[derive(Clone, Debug)]
pub struct Fuzzer {
    rng: ChaCha8Rng,
    slots: Vec<Option<(Job, bool)>>,
    created: Vec<MsgId>,
    counter: u64,
}

impl Fuzzer {
    pub fn new(seed: u64) -> Self {
        Fuzzer {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6675_7a7a),
            slots: Vec::new(),
            created: Vec::new(),
            counter: 0,
        }
    }

    fn new_job(&mut self, view: &AdvView<'_>) -> Job {
        self.counter += 1;
        let nonce = job_nonce(b'f', self.counter);
        let prefer = Value::from_bit(self.rng.gen_range(0..2));
        let (round, coffer) = if self.rng.gen_bool(0.7) {
            virtual_view(view)
        } else {
            let pool = view.usable_valid();
            let n = self.rng.gen_range(0..=pool.len().min(6));
            let coffer: Vec<MsgId> = pool.choose_multiple(&mut self.rng, n).copied().collect();
            (self.rng.gen_range(1..=3), coffer)
        };
        Job {
            round,
            coffer,
            nonce,
            prefer,
            last_get: None,
        }
    }
}

impl Strategy for Fuzzer {
    fn name(&self) -> String {
        "fuzzer".into()
    }

    fn act(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        let cap = view.cap as usize;
        if self.slots.len() < cap {
            self.slots.resize(cap, None);
        }
        let through = view.cap_through_step() as usize;
        let mut out = Vec::new();
        for slot in 0..cap {
            match self.slots[slot].take() {
                Some((job, peeked)) => {
                    if peeked || self.rng.gen_bool(0.9) {
                        out.push(job.get(slot as u32));
                    }
                    self.slots[slot] = Some((job, peeked));
                }
                None => {
                    let peek =
                        view.model == Model::GmPlus && view.is_first_tick() && slot < through && self.rng.gen_bool(0.3);
                    if peek {
                        let job = self.new_job(view);
                        let commitment = Commitment {
                            pledges: (0..view.k).map(|j| (view.tick + j, NodeId::Byz(slot as u32))).collect(),
                        };
                        out.push(Action::Peek {
                            slot: slot as u32,
                            coffer: job.coffer.clone(),
                            nonce: job.nonce.clone(),
                            commitment,
                        });
                        out.push(job.get(slot as u32));
                        self.slots[slot] = Some((job, true));
                    } else if self.rng.gen_bool(0.6) {
                        let job = self.new_job(view);
                        out.push(job.get(slot as u32));
                        self.slots[slot] = Some((job, false));
                    }
                }
            }
        }
        out
    }

    fn emit(&mut self, view: &AdvView<'_>) -> Vec<Action> {
        let mut out = Vec::new();
        if view.cap == 0 {
            return out;
        }
        for i in 0..self.slots.len() {
            let Some((job, peeked)) = self.slots[i].clone() else {
                continue;
            };
            let chain = view.chains.get(&job.digest());
            let Some(vdf) = chain.and_then(|c| c.vdf) else { continue };
            let done = chain.is_some_and(|c| c.completed_at.is_some());
            let fresh = !peeked || chain.is_some_and(|c| c.peeked_at == Some(view.tick));
            if fresh {
                let msg = if self.rng.gen_bool(0.85) {
                    seal(view, job.round, &job.coffer, &job.nonce, vdf, job.prefer)
                } else {
                    None
                };
                let msg = msg.unwrap_or_else(|| {
                    let uc = self.rng.gen_range(0..3);
                    let vdf = if self.rng.gen_bool(0.5) { vdf } else { self.rng.gen() };
                    GorillaMessage::new(
                        job.round,
                        Value::from_bit(self.rng.gen_range(0..2)),
                        0,
                        uc,
                        job.coffer.clone(),
                        job.nonce.clone(),
                        vdf,
                    )
                });
                self.created.push(msg.id());
                out.push(Action::Create { slot: 0, msg });
            }
            if done {
                self.slots[i] = None;
            }
        }
        if self.rng.gen_bool(0.05) {
            if let Some(&id) = view.known_valid.iter().next() {
                let mut forged = view.store.get(&id).unwrap().clone();
                forged.nonce.push(b'!');
                self.created.push(forged.id());
                out.push(Action::Create { slot: 0, msg: forged });
            }
        }
        if view.is_last_tick() && !view.correct_next.is_empty() {
            let mut pool: Vec<MsgId> = self.created.iter().rev().take(8).copied().collect();
            if let Some(&old) = view.known.choose(&mut self.rng) {
                pool.push(old);
            }
            for msg in pool {
                if self.rng.gen_bool(0.6) {
                    let mut to: Vec<u32> = view
                        .correct_next
                        .iter()
                        .copied()
                        .filter(|_| self.rng.gen_bool(0.6))
                        .collect();
                    if to.is_empty() {
                        to.push(view.correct_next[0]);
                    }
                    let slot = self.rng.gen_range(0..view.cap);
                    out.push(Action::Send { slot, to, msg });
                }
            }
            self.created.clear();
        }
        out
    }
}
