//! Experiment configuration files (TOML).
//!
//! ```toml
//! model = "gm"
//! seeds = [1, 2, 3]
//! out = "runs"
//!
//! [env]
//! k = 2
//! n = 3
//! max_steps = 200
//! capacity_default = 1
//! capacity = [{ from = 0, to = 9, count = 0 }]
//! nodes = [
//!   { id = 0, input = "a" },
//!   { id = 1, input = "b", join = 4, leave = 20 },
//! ]
//!
//! [strategy]
//! name = "withhold_release"
//! params = { delay = 3, targets = "half" }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;
use toml::Spanned;

use crate::adversary::{
    EquivocateNonce, Figure1Script, Fuzzer, NullStrategy, SplitVdf, Strategy, Targets, WithholdRelease,
};
use crate::env::{validate_environment, CorrectSpec, Environment};
use crate::trace::Model;
use crate::types::Value;

/// A strategy id plus its parameter block.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, toml::Value>,
}

impl StrategySpec {
    pub fn named(name: &str) -> Self {
        StrategySpec {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn u64_param(&self, key: &str, default: u64) -> u64 {
        self.params
            .get(key)
            .and_then(|v| v.as_integer())
            .and_then(|i| u64::try_from(i).ok())
            .unwrap_or(default)
    }

    pub fn bool_param(&self, key: &str, default: bool) -> bool {
        self.params.get(key).and_then(|v| v.as_bool()).unwrap_or(default)
    }

    fn targets(&self) -> Result<Targets, String> {
        match self.params.get("targets").map(|v| v.as_str()) {
            None | Some(Some("all")) => Ok(Targets::All),
            Some(Some("half")) => Ok(Targets::Half),
            Some(other) => Err(format!("targets must be \"all\" or \"half\", got {other:?}")),
        }
    }

    /// Instantiates the strategy; `seed` is the run seed, used by the
    /// fuzzer unless the block names its own.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Strategy>, String> {
        Ok(match self.name.as_str() {
            "null" => Box::new(NullStrategy),
            "split_vdf" => {
                let mut s = SplitVdf::new(
                    self.targets()?,
                    self.u64_param("stagger", 0),
                    self.u64_param("max_jobs", u64::MAX).try_into().unwrap_or(usize::MAX),
                );
                s.delay = self.u64_param("delay", 0);
                Box::new(s)
            }
            "withhold_release" => Box::new(WithholdRelease::new(self.u64_param("delay", 1), self.targets()?)),
            "equivocate_nonce" => Box::new(EquivocateNonce::new()),
            "fuzzer" => Box::new(Fuzzer::new(self.u64_param("seed", seed))),
            "figure1" => Box::new(Figure1Script::new()),
            other => return Err(format!("unknown strategy {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: Environment,
    pub strategy: StrategySpec,
    pub seeds: Vec<u64>,
    pub model: Model,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: Option<Spanned<String>>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    out: Option<PathBuf>,
    env: Spanned<RawEnv>,
    #[serde(default)]
    strategy: Option<Spanned<StrategySpec>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    k: u32,
    n: u32,
    max_steps: u64,
    #[serde(default)]
    capacity_default: u32,
    #[serde(default)]
    capacity: Vec<RawRange>,
    nodes: Vec<RawNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    from: u64,
    to: u64,
    count: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u32,
    input: String,
    #[serde(default)]
    join: u64,
    leave: Option<u64>,
}

/// Upper bound on ticks spelled out per tick in a capacity table.
const MAX_CAPACITY_TICKS: u64 = 1 << 24;

fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

fn at(text: &str, span: std::ops::Range<usize>, msg: impl Into<String>) -> ConfigError {
    let (line, col) = position(text, span.start);
    ConfigError {
        line,
        col,
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| position(text, s.start));
            ConfigError {
                line,
                col,
                msg: e.message().to_string(),
            }
        })?;
        let model = match &raw.model {
            None => Model::Gm,
            Some(m) => m.get_ref().parse().map_err(|e: String| at(text, m.span(), e))?,
        };
        let env_span = raw.env.span();
        let re = raw.env.into_inner();
        let mut capacity = Vec::new();
        for r in &re.capacity {
            if r.from > r.to || r.to >= MAX_CAPACITY_TICKS {
                return Err(at(
                    text,
                    env_span.clone(),
                    format!("bad capacity range {}..={}", r.from, r.to),
                ));
            }
            if capacity.len() < (r.to + 1) as usize {
                capacity.resize((r.to + 1) as usize, re.capacity_default);
            }
            for t in r.from..=r.to {
                capacity[t as usize] = r.count;
            }
        }
        let mut correct = Vec::new();
        for n in &re.nodes {
            let input: Value = n
                .input
                .parse()
                .map_err(|e: String| at(text, env_span.clone(), format!("node c{}: {e}", n.id)))?;
            correct.push(CorrectSpec {
                id: n.id,
                input,
                join: n.join,
                leave: n.leave,
            });
        }
        let env = Environment {
            k: re.k,
            n: re.n,
            correct,
            capacity,
            capacity_default: re.capacity_default,
            max_steps: re.max_steps,
        };
        if env.k == 0 || env.ticks() > MAX_CAPACITY_TICKS {
            return Err(at(
                text,
                env_span,
                "K must be at least 1 and K * max_steps at most 2^24",
            ));
        }
        if let Some(v) = validate_environment(&env).first() {
            return Err(at(text, env_span, v.to_string()));
        }
        let strategy = match raw.strategy {
            None => StrategySpec::named("null"),
            Some(s) => {
                let span = s.span();
                let s = s.into_inner();
                s.build(0).map_err(|e| at(text, span, e))?;
                s
            }
        };
        Ok(ExperimentConfig {
            env,
            strategy,
            seeds: raw.seeds.unwrap_or_else(|| vec![1]),
            model,
            out: raw.out,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: 0,
            col: 0,
            msg: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }
}
