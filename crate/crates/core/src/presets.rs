//! Built-in experiment configurations.

use crate::adversary::{figure1_environment, FIGURE1_SEED};
use crate::config::{ExperimentConfig, StrategySpec};
use crate::env::{CorrectSpec, Environment};
use crate::trace::Model;
use crate::types::Value;

pub const PRESETS: [&str; 6] = ["solo", "duo", "duo-split", "figure1", "fuzz-gm", "fuzz-smplus"];

fn static_env(k: u32, n: u32, inputs: &[Value], cap: u32, max_steps: u64) -> Environment {
    Environment {
        k,
        n,
        correct: inputs
            .iter()
            .enumerate()
            .map(|(i, &v)| CorrectSpec::always(i as u32, v))
            .collect(),
        capacity: Vec::new(),
        capacity_default: cap,
        max_steps,
    }
}

fn config(env: Environment, strategy: StrategySpec, seeds: Vec<u64>, model: Model) -> ExperimentConfig {
    ExperimentConfig {
        env,
        strategy,
        seeds,
        model,
        out: None,
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let null = || StrategySpec::named("null");
    Some(match name {
        "solo" => config(static_env(2, 1, &[Value::A], 0, 20), null(), vec![0], Model::Gm),
        "duo" => config(
            static_env(2, 2, &[Value::B, Value::B], 0, 60),
            null(),
            vec![0],
            Model::Gm,
        ),
        "duo-split" => config(
            static_env(2, 2, &[Value::A, Value::B], 0, 400),
            null(),
            vec![0, 1, 2],
            Model::Gm,
        ),
        "figure1" => config(
            figure1_environment(),
            StrategySpec::named("figure1"),
            vec![FIGURE1_SEED],
            Model::Gm,
        ),
        "fuzz-gm" => config(
            static_env(2, 3, &[Value::A, Value::B], 1, 60),
            StrategySpec::named("fuzzer"),
            (1..=20).collect(),
            Model::Gm,
        ),
        "fuzz-smplus" => config(
            static_env(1, 5, &[Value::A, Value::B, Value::A], 2, 60),
            StrategySpec::named("fuzzer"),
            (1..=20).collect(),
            Model::SmPlus,
        ),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::validate_environment;

    #[test]
    fn every_preset_is_valid() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert!(validate_environment(&c.env).is_empty(), "{name}");
            assert!(c.strategy.build(0).is_ok(), "{name}");
        }
        assert!(preset("nope").is_none());
    }
}
