//! One line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use common::faults::{catalog, figure1, preset_trace, rejected_inputs};
use common::laws;
use gorilla_harness::checkers::{
    check_agreement, check_round_gap_smplus, check_threshold, check_validity, coin_statistics, CoinSummary, Verdict,
};
use gorilla_harness::config::StrategySpec;
use gorilla_harness::engine::{check_legality, run};
use gorilla_harness::env::{CorrectSpec, Environment};
use gorilla_harness::error::MappingError;
use gorilla_harness::mappings::{
    alignment_replay, check_claims, check_interpretation, check_reorg, interpret, reorg, reorg_with, ReorgMode,
};
use gorilla_harness::trace::{Model, Trace};
use gorilla_harness::types::{NodeId, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

const STRATEGIES: [&str; 4] = ["split_vdf", "withhold_release", "equivocate_nonce", "fuzzer"];

fn threshold(n: u64) -> u64 {
    (n * n).div_ceil(2)
}

/// Straight-line replay of the protocol for N correct nodes with one
/// common input, full participation and no faults: every round sees all
/// N round-(r−1) messages, every proposal agrees, so the unanimity
/// counter grows by one per round from 0. Returns (round, step) of the
/// decision.
fn reference_decision(n: u64) -> (u64, u64) {
    let t = threshold(n);
    let (mut round, mut uc) = (1u64, 0u64);
    loop {
        let priority = (uc / t).saturating_sub(5);
        if priority >= 6 * t + 4 {
            return (round, round - 1);
        }
        assert!(n >= t || round == 1);
        round += 1;
        uc += 1;
    }
}

fn decisions_of(t: &Trace) -> Vec<(NodeId, Value, u64, u64)> {
    t.decisions()
        .into_iter()
        .map(|(tick, n, v, r)| (n, v, r, tick / t.k()))
        .collect()
}

fn solo() -> Outcome {
    let start = Instant::now();
    let a = preset_trace("solo", 0);
    let b = preset_trace("solo", 0);
    let took = start.elapsed().as_secs_f64();
    let (round, step) = reference_decision(1);
    ensure!(
        (round, step) == (16, 15),
        "reference replay gives round {round} step {step}"
    );
    let d = decisions_of(&a);
    ensure!(
        d == vec![(NodeId::Correct(0), Value::A, round, step)],
        "decisions {d:?}"
    );
    ensure!(a.to_text() == b.to_text(), "traces differ between runs");
    ensure!(took < 1.0, "two runs took {took:.2}s");
    Ok(format!(
        "a at round {round} step {step}, identical traces, {took:.3}s for two runs"
    ))
}

fn duo() -> Outcome {
    let start = Instant::now();
    let t = preset_trace("duo", 0);
    let took = start.elapsed().as_secs_f64();
    let (round, step) = reference_decision(2);
    ensure!(
        (round, step) == (43, 42),
        "reference replay gives round {round} step {step}"
    );
    let d = decisions_of(&t);
    let want: Vec<_> = (0..2).map(|i| (NodeId::Correct(i), Value::B, round, step)).collect();
    ensure!(d == want, "decisions {d:?}");
    let v = check_validity(&t);
    ensure!(v.verdict == Verdict::Holds, "{v}");
    ensure!(took < 5.0, "run took {took:.2}s");
    Ok(format!(
        "both b at round {round} step {step}, validity holds, {took:.3}s"
    ))
}

/// Results of the shared GM fuzz campaign.
#[derive(Default)]
struct Campaign {
    runs: u64,
    illegal: Vec<String>,
    agreement: u64,
    threshold: u64,
    pipeline: u64,
    pipeline_failures: Vec<String>,
    aligned: u64,
    misaligned: Vec<String>,
    coins: CoinSummary,
    secs: f64,
}

fn gm_env(n: u32, seed: u64) -> Environment {
    let cap = (n - 1) / 2;
    Environment {
        k: 2,
        n,
        correct: (0..n - cap)
            .map(|i| CorrectSpec::always(i, Value::from_bit(seed.wrapping_add(u64::from(i)))))
            .collect(),
        capacity: Vec::new(),
        capacity_default: cap,
        max_steps: 60,
    }
}

fn campaign() -> &'static Campaign {
    static CELL: OnceLock<Campaign> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let mut c = Campaign::default();
        let mut traces = Vec::new();
        for name in STRATEGIES {
            for seed in 1..=125u64 {
                let n = if seed % 5 == 0 { 2 } else { 3 };
                let t = run(&gm_env(n, seed), &StrategySpec::named(name), seed, Model::Gm).unwrap();
                let tag = format!("{name} n={n} seed={seed}");
                c.runs += 1;
                if !check_legality(&t).is_clean() {
                    c.illegal.push(tag.clone());
                }
                c.agreement += u64::from(check_agreement(&t).is_violated());
                c.threshold += u64::from(check_threshold(&t).is_violated());
                match pipeline(&t) {
                    Ok(()) => c.pipeline += 1,
                    Err(e) => c.pipeline_failures.push(format!("{tag}: {e}")),
                }
                let a = alignment_replay(&t);
                if a.is_clean() {
                    c.aligned += 1;
                } else {
                    c.misaligned.push(format!("{tag}: {a}"));
                }
                traces.push(t);
            }
        }
        c.coins = coin_statistics(&traces);
        c.secs = start.elapsed().as_secs_f64();
        c
    })
}

fn pipeline(t: &Trace) -> Result<(), String> {
    let (gp, asg) = reorg(t).map_err(|e| e.to_string())?;
    for r in [check_reorg(t, &gp), check_claims(t, &asg)] {
        if !r.is_clean() {
            return Err(r.to_string());
        }
    }
    let sp = interpret(&gp).map_err(|e| e.to_string())?;
    let r = check_interpretation(&gp, &sp);
    if !r.is_clean() {
        return Err(r.to_string());
    }
    Ok(())
}

fn agreement_fuzz() -> Outcome {
    let c = campaign();
    ensure!(c.runs >= 500, "only {} runs", c.runs);
    ensure!(c.illegal.is_empty(), "illegal traces: {:?}", c.illegal);
    ensure!(
        c.agreement == 0 && c.threshold == 0,
        "{} agreement and {} threshold violations",
        c.agreement,
        c.threshold
    );
    Ok(format!(
        "{} runs, 0 agreement and 0 threshold violations, {:.1}s with mappings",
        c.runs, c.secs
    ))
}

fn law<S: Strategy>(name: &str, strategy: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: 256,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, f).map_err(|e| format!("{name}: {e}"))
}

fn oracle_laws() -> Outcome {
    law("rate limit", laws::calls(), laws::rate_limit)?;
    law("memoization", laws::calls(), laws::memoized_and_sequential)?;
    law("verify", laws::verify_case(), laws::verify_only_last)?;
    law("coffer order", laws::coffer_case(), laws::coffer_order_irrelevant)?;
    law("peek commitment", laws::peek_case(), laws::peek_needs_commitment)?;
    law("audit", laws::broken_case(), laws::unkept_commitment_audited)?;
    law("recursive peek", laws::recursive_case(), laws::recursive_peek_refused)?;
    law("plain mode", laws::plain_case(), laws::plain_never_peeks)?;
    Ok("8 laws x 256 cases".into())
}

fn figure1_reproduction() -> Outcome {
    let t = figure1();
    match reorg_with(&t, ReorgMode::NoPeek) {
        Err(MappingError::ShellExhaustion(why)) => {
            let (gp, asg) = reorg(&t).map_err(|e| format!("peek reorg failed: {e}"))?;
            let legal = check_legality(&gp);
            ensure!(legal.is_clean(), "gm+ trace (with audit) not legal: {legal}");
            let r = check_reorg(&t, &gp);
            ensure!(r.is_clean(), "{r}");
            let c = check_claims(&t, &asg);
            ensure!(c.is_clean(), "{c}");
            ensure!(asg.slots[..4] == [1, 1, 3, 1], "shell slots {:?}", asg.slots);
            Ok(format!("no-peek: {why}; peek: 6 shells over capacities 1,1,3,1, clean"))
        }
        Ok(_) => Err("reorg without peek succeeded".into()),
        Err(e) => Err(format!("unexpected {e}")),
    }
}

fn mapping_pipeline() -> Outcome {
    let c = campaign();
    ensure!(
        c.pipeline >= 200,
        "{} clean pipelines; failures: {:?}",
        c.pipeline,
        c.pipeline_failures
    );
    ensure!(c.pipeline_failures.is_empty(), "failures: {:?}", c.pipeline_failures);
    let faults = catalog();
    let missed: Vec<_> = faults
        .iter()
        .filter(|f| f.report.count(f.condition) == 0)
        .map(|f| f.name)
        .collect();
    ensure!(missed.is_empty(), "uncaught faults: {missed:?}");
    let refused = rejected_inputs()
        .iter()
        .filter(|r| matches!(r, Err(MappingError::BadInput(_))))
        .count();
    ensure!(refused == 2, "interpret accepted a malformed input");
    Ok(format!(
        "{} traces clean through reorg and interpret, {} injected faults caught",
        c.pipeline,
        faults.len()
    ))
}

struct SmCampaign {
    runs: u64,
    gaps: Vec<String>,
    coins: CoinSummary,
}

fn sm_campaign() -> &'static SmCampaign {
    static CELL: OnceLock<SmCampaign> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut c = SmCampaign {
            runs: 0,
            gaps: Vec::new(),
            coins: CoinSummary::default(),
        };
        let mut traces = Vec::new();
        for name in STRATEGIES.iter().chain(&["eager", "delayed"]) {
            for seed in 1..=40u64 {
                let n = if seed % 4 == 0 { 3 } else { 5 };
                let mut env = gm_env(n, seed);
                env.k = 1;
                env.max_steps = 80;
                let t = run(&env, &StrategySpec::named(name), seed, Model::SmPlus).unwrap();
                c.runs += 1;
                let g = check_round_gap_smplus(&t);
                if g.verdict != Verdict::Holds || !check_legality(&t).is_clean() {
                    c.gaps.push(format!("{name} n={n} seed={seed}: {g}"));
                }
                traces.push(t);
            }
        }
        c.coins = coin_statistics(&traces);
        c
    })
}

fn round_gap() -> Outcome {
    let c = sm_campaign();
    ensure!(c.runs >= 200, "only {} runs", c.runs);
    ensure!(c.gaps.is_empty(), "{:?}", c.gaps);
    Ok(format!("{} legal SM+ runs, no defective node two rounds ahead", c.runs))
}

fn coin_fairness() -> Outcome {
    let (g, s) = (campaign().coins, sm_campaign().coins);
    let total = CoinSummary {
        samples: g.samples + s.samples,
        ones: g.ones + s.ones,
    };
    ensure!(total.samples >= 10_000, "only {} samples", total.samples);
    let p = total.frequency().unwrap();
    ensure!((p - 0.5).abs() <= 0.015, "{total}");
    Ok(format!("{total} (gm {}, sm+ {})", g.samples, s.samples))
}

fn alignment() -> Outcome {
    let c = campaign();
    ensure!(
        c.misaligned.is_empty(),
        "{} misaligned: {:?}",
        c.misaligned.len(),
        c.misaligned
    );
    Ok(format!("{}/{} fuzzed gm traces replay exactly", c.aligned, c.runs))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("solo determinism", solo),
        ("duo validity", duo),
        ("agreement fuzz", agreement_fuzz),
        ("oracle laws", oracle_laws),
        ("figure 1 reproduction", figure1_reproduction),
        ("mapping pipeline", mapping_pipeline),
        ("sm+ round gap", round_gap),
        ("coin fairness", coin_fairness),
        ("gorilla/sandglass alignment", alignment),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: pass ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
