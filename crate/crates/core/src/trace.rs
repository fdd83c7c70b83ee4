//! Execution traces and their line-oriented text form.
//!
//! ```text
//! gorilla-trace v1 model=gm K=2 N=1 T=1 seed=0 env=<sha256 of env lines>
//! env max_steps=20 cap_default=0
//! node c0 input=a join=0 leave=-
//! cap <from> <to> <count>                 Byzantine capacity on ticks [from, to)
//! msg <id> g|s <hex canonical encoding>   in store order
//! vdfin <digest> <coffer digest> <nonce hex|->
//! ev <tick> join <node> correct|faulty <value|->
//! ev <tick> leave <node>
//! ev <tick> recv <node> <msg> <from|->
//! ev <tick> get <node> <input> <index> <unit>
//! ev <tick> peek <node> <input> <unit> <tick:node,...|->
//! ev <tick> bcast <node> <msg>
//! ev <tick> send <node> <msg> <node,...|->
//! ev <tick> coin <node> <bit>
//! ev <tick> decide <node> <value> <round>
//! ev <tick> state <node> <round> <value> <uc> <priority>
//! ```
//!
//! A `send` with an empty recipient list records the moment a Byzantine
//! slot assembles a message. SM+ traces use one tick per step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::env::{CorrectSpec, Environment};
use crate::message::{GorillaMessage, MessageStore, ProtoMsg, SandglassMessage};
use crate::oracle::{Commitment, VdfInput};
use crate::types::{step_of, Hash32, MsgId, NodeId, Role, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    Gm,
    GmPlus,
    SmPlus,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Gm => "gm",
            Model::GmPlus => "gm+",
            Model::SmPlus => "sm+",
        })
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gm" => Ok(Model::Gm),
            "gm+" => Ok(Model::GmPlus),
            "sm+" => Ok(Model::SmPlus),
            _ => Err(format!("unknown model `{s}` (expected gm, gm+ or sm+)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Join {
        node: NodeId,
        role: Role,
        input: Option<Value>,
    },
    Leave {
        node: NodeId,
    },
    Receive {
        node: NodeId,
        msg: MsgId,
        from: Option<NodeId>,
    },
    GetCall {
        node: NodeId,
        input: Hash32,
        index: u32,
        unit: u64,
    },
    PeekCall {
        node: NodeId,
        input: Hash32,
        unit: u64,
        commitment: Commitment,
    },
    Broadcast {
        node: NodeId,
        msg: MsgId,
    },
    TargetedSend {
        node: NodeId,
        msg: MsgId,
        to: Vec<NodeId>,
    },
    CoinOutcome {
        node: NodeId,
        bit: u8,
    },
    Decide {
        node: NodeId,
        value: Value,
        round: u64,
    },
    State {
        node: NodeId,
        round: u64,
        value: Value,
        uc: u64,
        priority: u64,
    },
}

impl EventKind {
    pub fn node(&self) -> NodeId {
        match self {
            EventKind::Join { node, .. }
            | EventKind::Leave { node }
            | EventKind::Receive { node, .. }
            | EventKind::GetCall { node, .. }
            | EventKind::PeekCall { node, .. }
            | EventKind::Broadcast { node, .. }
            | EventKind::TargetedSend { node, .. }
            | EventKind::CoinOutcome { node, .. }
            | EventKind::Decide { node, .. }
            | EventKind::State { node, .. } => *node,
        }
    }

    /// Position within a tick: join, receive, oracle, emit, leave.
    pub fn phase(&self) -> u8 {
        match self {
            EventKind::Join { .. } => 0,
            EventKind::Receive { .. } => 1,
            EventKind::GetCall { .. } | EventKind::PeekCall { .. } => 2,
            EventKind::Leave { .. } => 4,
            _ => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub tick: u64,
    pub kind: EventKind,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub model: Model,
    pub seed: u64,
    pub t: u64,
    pub env: Environment,
    pub gorilla: MessageStore<GorillaMessage>,
    pub sandglass: MessageStore<SandglassMessage>,
    pub inputs: BTreeMap<Hash32, VdfInput>,
    pub events: Vec<Event>,
}

impl PartialEq for Trace {
    fn eq(&self, other: &Self) -> bool {
        self.to_text() == other.to_text()
    }
}

impl Trace {
    pub fn new(model: Model, seed: u64, t: u64, env: Environment) -> Self {
        Trace {
            model,
            seed,
            t,
            env,
            gorilla: MessageStore::new(),
            sandglass: MessageStore::new(),
            inputs: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn k(&self) -> u64 {
        u64::from(self.env.k)
    }

    pub fn step(&self, tick: u64) -> u64 {
        step_of(tick, self.k())
    }

    pub fn push(&mut self, tick: u64, kind: EventKind) {
        self.events.push(Event { tick, kind });
    }

    pub fn register_input(&mut self, input: &VdfInput) -> Hash32 {
        let d = input.digest();
        self.inputs.entry(d).or_insert_with(|| input.clone());
        d
    }

    /// Stable sort into (tick, phase) order.
    pub fn normalize(&mut self) {
        self.events.sort_by_key(|e| (e.tick, e.kind.phase()));
    }

    pub fn decisions(&self) -> Vec<(u64, NodeId, Value, u64)> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Decide { node, value, round } => Some((e.tick, node, value, round)),
                _ => None,
            })
            .collect()
    }

    pub fn coins(&self) -> impl Iterator<Item = (u64, NodeId, u8)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::CoinOutcome { node, bit } => Some((e.tick, node, bit)),
            _ => None,
        })
    }

    /// Generating node of every message: the broadcaster for correct nodes,
    /// the assembling slot for Byzantine ones. First emission wins.
    pub fn generators(&self) -> BTreeMap<MsgId, (u64, NodeId)> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            match &e.kind {
                EventKind::Broadcast { node, msg } => {
                    out.entry(*msg).or_insert((e.tick, *node));
                }
                EventKind::TargetedSend { node, msg, .. } => {
                    out.entry(*msg).or_insert((e.tick, *node));
                }
                _ => {}
            }
        }
        out
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.events.iter().map(|e| e.kind.node()).collect()
    }

    pub fn to_text(&self) -> String {
        let env_block = env_lines(&self.env);
        let mut s = String::new();
        writeln!(
            s,
            "gorilla-trace v1 model={} K={} N={} T={} seed={} env={}",
            self.model,
            self.env.k,
            self.env.n,
            self.t,
            self.seed,
            Hash32::of(env_block.as_bytes())
        )
        .unwrap();
        s.push_str(&env_block);
        for id in self.gorilla.ids() {
            writeln!(s, "msg {id} g {}", hex::encode(self.gorilla.get(id).unwrap().encode())).unwrap();
        }
        for id in self.sandglass.ids() {
            writeln!(
                s,
                "msg {id} s {}",
                hex::encode(self.sandglass.get(id).unwrap().encode())
            )
            .unwrap();
        }
        for (d, input) in &self.inputs {
            writeln!(s, "vdfin {d} {} {}", input.coffer_digest, bytes_field(&input.nonce)).unwrap();
        }
        for e in &self.events {
            writeln!(s, "ev {} {}", e.tick, event_body(&e.kind)).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Trace, ParseError> {
        Parser::default().run(text)
    }
}

fn bytes_field(b: &[u8]) -> String {
    if b.is_empty() {
        "-".into()
    } else {
        hex::encode(b)
    }
}

fn opt<T: fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(|| "-".into(), |v| v.to_string())
}

fn node_list(ns: &[NodeId]) -> String {
    if ns.is_empty() {
        "-".into()
    } else {
        ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn env_lines(env: &Environment) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "env max_steps={} cap_default={}",
        env.max_steps, env.capacity_default
    )
    .unwrap();
    for c in &env.correct {
        writeln!(
            s,
            "node c{} input={} join={} leave={}",
            c.id,
            c.input,
            c.join,
            opt(&c.leave)
        )
        .unwrap();
    }
    let mut i = 0;
    while i < env.capacity.len() {
        let v = env.capacity[i];
        let mut j = i;
        while j < env.capacity.len() && env.capacity[j] == v {
            j += 1;
        }
        writeln!(s, "cap {i} {j} {v}").unwrap();
        i = j;
    }
    s
}

fn event_body(k: &EventKind) -> String {
    match k {
        EventKind::Join { node, role, input } => format!("join {node} {role} {}", opt(input)),
        EventKind::Leave { node } => format!("leave {node}"),
        EventKind::Receive { node, msg, from } => format!("recv {node} {msg} {}", opt(from)),
        EventKind::GetCall {
            node,
            input,
            index,
            unit,
        } => format!("get {node} {input} {index} {unit}"),
        EventKind::PeekCall {
            node,
            input,
            unit,
            commitment,
        } => {
            let pledges = if commitment.pledges.is_empty() {
                "-".to_string()
            } else {
                commitment
                    .pledges
                    .iter()
                    .map(|(t, n)| format!("{t}:{n}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            format!("peek {node} {input} {unit} {pledges}")
        }
        EventKind::Broadcast { node, msg } => format!("bcast {node} {msg}"),
        EventKind::TargetedSend { node, msg, to } => format!("send {node} {msg} {}", node_list(to)),
        EventKind::CoinOutcome { node, bit } => format!("coin {node} {bit}"),
        EventKind::Decide { node, value, round } => format!("decide {node} {value} {round}"),
        EventKind::State {
            node,
            round,
            value,
            uc,
            priority,
        } => format!("state {node} {round} {value} {uc} {priority}"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

/// Whitespace-separated tokens of one line with their 1-based columns.
struct Line<'a> {
    no: usize,
    toks: Vec<(usize, &'a str)>,
    pos: usize,
    len: usize,
}

impl<'a> Line<'a> {
    fn new(no: usize, text: &'a str) -> Self {
        let mut toks = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            match (ch == ' ', start) {
                (true, Some(s)) => {
                    toks.push((s + 1, &text[s..i]));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            toks.push((s + 1, &text[s..]));
        }
        Line {
            no,
            toks,
            pos: 0,
            len: text.len(),
        }
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.len + 1, |t| t.0)
    }

    fn err_at(&self, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.no,
            col,
            msg: msg.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        let t = self
            .toks
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err_at(self.len + 1, format!("missing {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn parse<T: FromStr>(&mut self, what: &str) -> Result<T, ParseError> {
        let (col, s) = self.next(what)?;
        s.parse().map_err(|_| self.err_at(col, format!("bad {what} `{s}`")))
    }

    fn keyed<T: FromStr>(&mut self, key: &str) -> Result<T, ParseError> {
        let (col, s) = self.next(key)?;
        let v = s
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err_at(col, format!("expected {key}=…")))?;
        v.parse()
            .map_err(|_| self.err_at(col + key.len() + 1, format!("bad {key} value `{v}`")))
    }

    fn opt<T: FromStr>(&mut self, what: &str) -> Result<Option<T>, ParseError> {
        let (col, s) = self.next(what)?;
        if s == "-" {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| self.err_at(col, format!("bad {what} `{s}`")))
    }

    fn hash(&mut self, what: &str) -> Result<Hash32, ParseError> {
        let (col, s) = self.next(what)?;
        Hash32::from_hex(s).ok_or_else(|| self.err_at(col, format!("bad {what} hash `{s}`")))
    }

    fn hex_bytes(&mut self, what: &str) -> Result<Vec<u8>, ParseError> {
        let (col, s) = self.next(what)?;
        if s == "-" {
            return Ok(Vec::new());
        }
        hex::decode(s).map_err(|e| self.err_at(col, format!("bad {what}: {e}")))
    }

    fn node_list(&mut self, what: &str) -> Result<Vec<NodeId>, ParseError> {
        let (col, s) = self.next(what)?;
        if s == "-" {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|x| x.parse().map_err(|e: String| self.err_at(col, e)))
            .collect()
    }

    fn done(&self) -> Result<(), ParseError> {
        match self.toks.get(self.pos) {
            None => Ok(()),
            Some((col, s)) => Err(self.err_at(*col, format!("unexpected `{s}`"))),
        }
    }
}

#[derive(Default)]
struct Parser {
    env_text: String,
}

struct Header {
    model: Model,
    k: u32,
    n: u32,
    t: u64,
    seed: u64,
    env_digest: Hash32,
}

impl Parser {
    fn run(mut self, text: &str) -> Result<Trace, ParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (no, first) = lines.next().ok_or(ParseError {
            line: 1,
            col: 1,
            msg: "empty trace".into(),
        })?;
        let h = Self::header(Line::new(no, first))?;
        let mut env = Environment {
            k: h.k,
            n: h.n,
            correct: Vec::new(),
            capacity: Vec::new(),
            capacity_default: 0,
            max_steps: 0,
        };
        let mut trace = None::<Trace>;
        let mut saw_env = false;
        for (no, raw) in lines {
            if raw.is_empty() {
                continue;
            }
            let mut l = Line::new(no, raw);
            let (col, kw) = l.next("record kind")?;
            let in_env = matches!(kw, "env" | "node" | "cap");
            if in_env {
                if trace.is_some() {
                    return Err(l.err_at(col, "environment line after trace body"));
                }
                self.env_text.push_str(raw);
                self.env_text.push('\n');
            } else if trace.is_none() {
                if !saw_env {
                    return Err(l.err_at(col, "missing env line"));
                }
                if Hash32::of(self.env_text.as_bytes()) != h.env_digest {
                    return Err(l.err_at(1, "environment digest mismatch"));
                }
                trace = Some(Trace::new(h.model, h.seed, h.t, env.clone()));
            }
            match kw {
                "env" => {
                    if saw_env {
                        return Err(l.err_at(col, "duplicate env line"));
                    }
                    saw_env = true;
                    env.max_steps = l.keyed("max_steps")?;
                    env.capacity_default = l.keyed("cap_default")?;
                }
                "node" => {
                    let (c, s) = l.next("node id")?;
                    let id = match s.parse::<NodeId>() {
                        Ok(NodeId::Correct(i)) => i,
                        _ => return Err(l.err_at(c, format!("bad correct node `{s}`"))),
                    };
                    let input = l.keyed("input")?;
                    let join = l.keyed("join")?;
                    let (c, s) = l.next("leave")?;
                    let leave = match s.strip_prefix("leave=") {
                        Some("-") => None,
                        Some(v) => Some(v.parse().map_err(|_| l.err_at(c + 6, format!("bad leave `{v}`")))?),
                        None => return Err(l.err_at(c, "expected leave=…")),
                    };
                    env.correct.push(CorrectSpec { id, input, join, leave });
                }
                "cap" => {
                    let from: u64 = l.parse("from tick")?;
                    let c = l.col();
                    let to: u64 = l.parse("to tick")?;
                    let v: u32 = l.parse("count")?;
                    if from != env.capacity.len() as u64 || to <= from {
                        return Err(l.err_at(c, "capacity ranges must be contiguous and increasing"));
                    }
                    if to - from > 1 << 24 {
                        return Err(l.err_at(c, "capacity range too long"));
                    }
                    env.capacity.extend(std::iter::repeat_n(v, (to - from) as usize));
                }
                "msg" => Self::msg(&mut l, trace.as_mut().unwrap())?,
                "vdfin" => {
                    let c = l.col();
                    let d = l.hash("digest")?;
                    let coffer_digest = l.hash("coffer digest")?;
                    let nonce = l.hex_bytes("nonce")?;
                    let input = VdfInput { coffer_digest, nonce };
                    if input.digest() != d {
                        return Err(l.err_at(c, "vdf input digest mismatch"));
                    }
                    trace.as_mut().unwrap().inputs.insert(d, input);
                }
                "ev" => {
                    let tick: u64 = l.parse("tick")?;
                    let kind = Self::event(&mut l)?;
                    let tr = trace.as_mut().unwrap();
                    if let Some(last) = tr.events.last() {
                        if (last.tick, last.kind.phase()) > (tick, kind.phase()) {
                            return Err(l.err_at(4, "event out of order"));
                        }
                    }
                    tr.push(tick, kind);
                }
                other => return Err(l.err_at(col, format!("unknown record `{other}`"))),
            }
            l.done()?;
        }
        match trace {
            Some(t) => Ok(t),
            None => {
                if !saw_env {
                    return Err(ParseError {
                        line: 1,
                        col: 1,
                        msg: "missing env line".into(),
                    });
                }
                if Hash32::of(self.env_text.as_bytes()) != h.env_digest {
                    return Err(ParseError {
                        line: 1,
                        col: 1,
                        msg: "environment digest mismatch".into(),
                    });
                }
                Ok(Trace::new(h.model, h.seed, h.t, env))
            }
        }
    }

    fn header(mut l: Line<'_>) -> Result<Header, ParseError> {
        let (c, magic) = l.next("magic")?;
        if magic != "gorilla-trace" {
            return Err(l.err_at(c, "not a gorilla trace"));
        }
        let (c, v) = l.next("version")?;
        if v != "v1" {
            return Err(l.err_at(c, format!("unsupported version `{v}`")));
        }
        let h = Header {
            model: l.keyed("model")?,
            k: l.keyed("K")?,
            n: l.keyed("N")?,
            t: l.keyed("T")?,
            seed: l.keyed("seed")?,
            env_digest: {
                let (c, s) = l.next("env")?;
                s.strip_prefix("env=")
                    .and_then(Hash32::from_hex)
                    .ok_or_else(|| l.err_at(c, "bad env digest"))?
            },
        };
        if h.k == 0 {
            return Err(l.err_at(1, "K must be at least 1"));
        }
        l.done()?;
        Ok(h)
    }

    fn msg(l: &mut Line<'_>, tr: &mut Trace) -> Result<(), ParseError> {
        let c = l.col();
        let id = l.hash("message id")?;
        let (kc, kind) = l.next("message kind")?;
        let bc = l.col();
        let bytes = l.hex_bytes("encoding")?;
        let got = match kind {
            "g" => {
                let m = GorillaMessage::decode(&bytes).map_err(|e| l.err_at(bc, e.0))?;
                tr.gorilla.intern(m).map_err(|e| l.err_at(bc, e.to_string()))?
            }
            "s" => {
                let m = SandglassMessage::decode(&bytes).map_err(|e| l.err_at(bc, e.0))?;
                tr.sandglass.intern(m).map_err(|e| l.err_at(bc, e.to_string()))?
            }
            other => return Err(l.err_at(kc, format!("unknown message kind `{other}`"))),
        };
        if got != id {
            return Err(l.err_at(c, "message id does not match its encoding"));
        }
        Ok(())
    }

    fn event(l: &mut Line<'_>) -> Result<EventKind, ParseError> {
        let (c, kw) = l.next("event kind")?;
        Ok(match kw {
            "join" => EventKind::Join {
                node: l.parse("node")?,
                role: l.parse("role")?,
                input: l.opt("input")?,
            },
            "leave" => EventKind::Leave { node: l.parse("node")? },
            "recv" => EventKind::Receive {
                node: l.parse("node")?,
                msg: l.hash("message")?,
                from: l.opt("sender")?,
            },
            "get" => EventKind::GetCall {
                node: l.parse("node")?,
                input: l.hash("input")?,
                index: l.parse("index")?,
                unit: l.parse("unit")?,
            },
            "peek" => {
                let node = l.parse("node")?;
                let input = l.hash("input")?;
                let unit = l.parse("unit")?;
                let (pc, s) = l.next("pledges")?;
                let mut pledges = Vec::new();
                if s != "-" {
                    for p in s.split(',') {
                        let (t, n) = p
                            .split_once(':')
                            .ok_or_else(|| l.err_at(pc, format!("bad pledge `{p}`")))?;
                        let t = t.parse().map_err(|_| l.err_at(pc, format!("bad pledge tick `{t}`")))?;
                        let n = n.parse().map_err(|e: String| l.err_at(pc, e))?;
                        pledges.push((t, n));
                    }
                }
                EventKind::PeekCall {
                    node,
                    input,
                    unit,
                    commitment: Commitment { pledges },
                }
            }
            "bcast" => EventKind::Broadcast {
                node: l.parse("node")?,
                msg: l.hash("message")?,
            },
            "send" => EventKind::TargetedSend {
                node: l.parse("node")?,
                msg: l.hash("message")?,
                to: l.node_list("recipients")?,
            },
            "coin" => {
                let node = l.parse("node")?;
                let (bc, b) = l.next("bit")?;
                let bit = match b {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(l.err_at(bc, format!("bad coin bit `{b}`"))),
                };
                EventKind::CoinOutcome { node, bit }
            }
            "decide" => EventKind::Decide {
                node: l.parse("node")?,
                value: l.parse("value")?,
                round: l.parse("round")?,
            },
            "state" => EventKind::State {
                node: l.parse("node")?,
                round: l.parse("round")?,
                value: l.parse("value")?,
                uc: l.parse("uc")?,
                priority: l.parse("priority")?,
            },
            other => return Err(l.err_at(c, format!("unknown event `{other}`"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let env = Environment {
            k: 2,
            n: 3,
            correct: vec![
                CorrectSpec::always(0, Value::A),
                CorrectSpec {
                    id: 1,
                    input: Value::B,
                    join: 2,
                    leave: Some(6),
                },
            ],
            capacity: vec![0, 0, 1, 1, 1],
            capacity_default: 0,
            max_steps: 4,
        };
        let mut tr = Trace::new(Model::GmPlus, 9, 5, env);
        let m = GorillaMessage::new(1, Value::A, 0, 0, vec![], vec![1, 2], 77);
        let id = tr.gorilla.intern(m.clone()).unwrap();
        let input = m.vdf_input();
        let d = tr.register_input(&input);
        let g2 = GorillaMessage::new(1, Value::B, 0, 0, vec![id], vec![], 78);
        let id2 = tr.gorilla.intern(g2).unwrap();
        let sm = SandglassMessage::new(NodeId::Byz(1), 1, 1, Value::A, 0, 0, vec![]);
        tr.sandglass.intern(sm).unwrap();
        tr.push(
            0,
            EventKind::Join {
                node: NodeId::Correct(0),
                role: Role::Correct,
                input: Some(Value::A),
            },
        );
        tr.push(
            0,
            EventKind::GetCall {
                node: NodeId::Correct(0),
                input: d,
                index: 1,
                unit: 5,
            },
        );
        tr.push(
            1,
            EventKind::Broadcast {
                node: NodeId::Correct(0),
                msg: id,
            },
        );
        tr.push(
            2,
            EventKind::Join {
                node: NodeId::Byz(0),
                role: Role::Faulty,
                input: None,
            },
        );
        tr.push(
            2,
            EventKind::Receive {
                node: NodeId::Correct(0),
                msg: id,
                from: Some(NodeId::Correct(0)),
            },
        );
        tr.push(
            2,
            EventKind::PeekCall {
                node: NodeId::Byz(0),
                input: d,
                unit: 3,
                commitment: Commitment {
                    pledges: vec![(2, NodeId::Byz(0)), (3, NodeId::Byz(1))],
                },
            },
        );
        tr.push(
            3,
            EventKind::TargetedSend {
                node: NodeId::Byz(0),
                msg: id2,
                to: vec![],
            },
        );
        tr.push(
            3,
            EventKind::TargetedSend {
                node: NodeId::Byz(0),
                msg: id2,
                to: vec![NodeId::Correct(0), NodeId::Correct(1)],
            },
        );
        tr.push(
            3,
            EventKind::CoinOutcome {
                node: NodeId::Correct(0),
                bit: 1,
            },
        );
        tr.push(
            3,
            EventKind::Decide {
                node: NodeId::Correct(0),
                value: Value::B,
                round: 4,
            },
        );
        tr.push(
            3,
            EventKind::State {
                node: NodeId::Byz(0),
                round: 2,
                value: Value::A,
                uc: 1,
                priority: 0,
            },
        );
        tr.push(3, EventKind::Leave { node: NodeId::Byz(0) });
        tr
    }

    #[test]
    fn text_round_trip_is_exact() {
        let tr = sample();
        let text = tr.to_text();
        let back = Trace::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.env, tr.env);
        assert_eq!(back.events, tr.events);
    }

    #[test]
    fn errors_carry_line_and_column() {
        let text = sample().to_text();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let i = lines.iter().position(|l| l.contains(" coin ")).unwrap();
        lines[i] = lines[i].replace(" coin c0 1", " coin c0 7");
        let err = Trace::parse(&lines.join("\n")).unwrap_err();
        assert_eq!(err.line, i + 1);
        assert_eq!(err.col, lines[i].len());
    }

    #[test]
    fn tampered_environment_is_rejected() {
        let text = sample().to_text().replace("cap_default=0", "cap_default=1");
        let err = Trace::parse(&text).unwrap_err();
        assert!(err.msg.contains("digest"), "{err}");
    }

    #[test]
    fn tampered_message_is_rejected() {
        let tr = sample();
        let text = tr.to_text();
        let (no, line) = text.lines().enumerate().find(|(_, l)| l.starts_with("msg ")).unwrap();
        let mut bad = line.to_string();
        let last = bad.pop().unwrap();
        bad.push(if last == '0' { '1' } else { '0' });
        let err = Trace::parse(&text.replace(line, &bad)).unwrap_err();
        assert_eq!(err.line, no + 1);
    }

    #[test]
    fn garbage_is_an_error_not_a_panic() {
        for s in [
            "",
            "gorilla-trace",
            "gorilla-trace v1 model=gm K=0 N=1 T=1 seed=0 env=00",
            "x\ny",
        ] {
            assert!(Trace::parse(s).is_err());
        }
    }
}
