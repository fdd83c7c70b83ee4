use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use gorilla_harness::checkers::{check_all, coin_statistics};
use gorilla_harness::config::ExperimentConfig;
use gorilla_harness::engine::{check_legality, run};
use gorilla_harness::error::EngineError;
use gorilla_harness::mappings::{
    alignment_replay, check_claims, check_interpretation, check_reorg, interpret, reorg, reorg_with, ReorgMode, Report,
};
use gorilla_harness::presets::{preset, PRESETS};
use gorilla_harness::trace::{Model, Trace};

const EXIT_CHECK: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_ILLEGAL: u8 = 3;

#[derive(Parser)]
#[command(name = "gorilla", about = "Gorilla Sandglass simulator and mapping checker")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run each seed of an experiment and check the resulting traces.
    Run(ExpArgs),
    /// Apply the execution mappings to a trace file and check them.
    Map {
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run `count` consecutive seeds with every checker and mapping check.
    Fuzz {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value_t = 100)]
        count: u64,
    },
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, help = format!("one of: {}", PRESETS.join(", ")))]
    preset: Option<String>,
    /// Comma-separated seeds and inclusive ranges, e.g. 1,4,10-20.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Reorg,
    Interpret,
    Both,
}

struct Failure(u8, String);

impl Failure {
    fn parse(msg: impl Into<String>) -> Self {
        Failure(EXIT_PARSE, msg.into())
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad seed `{part}`");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

/// The resolved experiment plus a label for file names.
fn load(exp: &ExpArgs) -> Result<(ExperimentConfig, String), Failure> {
    let (mut cfg, label) = match (&exp.config, &exp.preset) {
        (Some(p), _) => {
            let cfg = ExperimentConfig::load(p).map_err(|e| Failure::parse(format!("{}:{e}", p.display())))?;
            let stem = p
                .file_stem()
                .map_or("config".into(), |s| s.to_string_lossy().into_owned());
            (cfg, stem)
        }
        (None, Some(name)) => {
            let cfg = preset(name).ok_or_else(|| {
                Failure::parse(format!(
                    "unknown preset `{name}` (expected one of {})",
                    PRESETS.join(", ")
                ))
            })?;
            (cfg, name.clone())
        }
        (None, None) => return Err(Failure::parse("give --config or --preset")),
    };
    if let Some(s) = &exp.seed {
        cfg.seeds = parse_seeds(s).map_err(Failure::parse)?;
    }
    if let Some(m) = &exp.model {
        cfg.model = m.parse().map_err(Failure::parse)?;
    }
    if let Some(n) = exp.max_steps {
        cfg.env.max_steps = n;
    }
    if exp.out.is_some() {
        cfg.out = exp.out.clone();
    }
    Ok((cfg, label))
}

fn run_one(cfg: &ExperimentConfig, seed: u64) -> Result<Trace, Failure> {
    run(&cfg.env, &cfg.strategy, seed, cfg.model).map_err(|e| match e {
        EngineError::IllegalStrategyAction { .. } | EngineError::InactiveNode { .. } => {
            Failure(EXIT_ILLEGAL, e.to_string())
        }
        EngineError::InvalidEnvironment(_) => Failure::parse(e.to_string()),
    })
}

/// Text report for one trace, and the names of the failed checks.
struct Assessment {
    text: String,
    failed: Vec<&'static str>,
}

fn report_block(a: &mut Assessment, name: &'static str, r: &Report) {
    if r.is_clean() {
        writeln!(a.text, "{name} clean").unwrap();
    } else {
        a.failed.push(name);
        writeln!(a.text, "{name} violated").unwrap();
        for line in r.to_string().lines() {
            writeln!(a.text, "  {line}").unwrap();
        }
    }
}

fn assess(trace: &Trace, with_nopeek: bool) -> Assessment {
    let mut a = Assessment {
        text: String::new(),
        failed: Vec::new(),
    };
    let legality = check_legality(trace);
    if legality.is_clean() {
        writeln!(a.text, "legality clean").unwrap();
    } else {
        a.failed.push("legality");
        writeln!(a.text, "legality violated").unwrap();
        for line in legality.to_string().lines() {
            writeln!(a.text, "  {line}").unwrap();
        }
    }
    for p in check_all(trace) {
        if p.is_violated() {
            a.failed.push(p.property);
        }
        a.text.push_str(&p.to_string());
    }
    match trace.model {
        Model::Gm => {
            if with_nopeek {
                match reorg_with(trace, ReorgMode::NoPeek) {
                    Ok(_) => writeln!(a.text, "reorg-nopeek ok").unwrap(),
                    Err(e) => writeln!(a.text, "reorg-nopeek {e}").unwrap(),
                }
            }
            report_block(&mut a, "alignment", &alignment_replay(trace));
            match reorg(trace) {
                Err(e) => {
                    a.failed.push("reorg");
                    writeln!(a.text, "reorg failed: {e}").unwrap();
                }
                Ok((gp, asg)) => {
                    for l in &asg.log {
                        writeln!(a.text, "shells {l}").unwrap();
                    }
                    report_block(&mut a, "reorg", &check_reorg(trace, &gp));
                    report_block(&mut a, "claims", &check_claims(trace, &asg));
                    interpret_block(&mut a, &gp);
                }
            }
        }
        Model::GmPlus => {
            report_block(&mut a, "alignment", &alignment_replay(trace));
            interpret_block(&mut a, trace);
        }
        Model::SmPlus => {}
    }
    a
}

fn interpret_block(a: &mut Assessment, gp: &Trace) {
    match interpret(gp) {
        Err(e) => {
            a.failed.push("interpretation");
            writeln!(a.text, "interpretation failed: {e}").unwrap();
        }
        Ok(sp) => report_block(a, "interpretation", &check_interpretation(gp, &sp)),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure(EXIT_CHECK, format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure(EXIT_CHECK, format!("{}: {e}", path.display())))
}

fn cmd_run(exp: &ExpArgs) -> Result<bool, Failure> {
    let (cfg, label) = load(exp)?;
    let mut ok = true;
    for &seed in &cfg.seeds {
        let trace = run_one(&cfg, seed)?;
        let a = assess(&trace, true);
        let last = trace.events.last().map_or(0, |e| e.tick) / trace.k();
        let mut text = format!(
            "run {label} seed={seed} model={} steps={} events={}\n",
            cfg.model,
            last + 1,
            trace.events.len()
        );
        for (t, n, v, r) in trace.decisions() {
            writeln!(text, "decide tick={t} step={} {n} {v} round={r}", t / trace.k()).unwrap();
        }
        text.push_str(&a.text);
        print!("{text}");
        if let Some(dir) = &cfg.out {
            write_file(&dir.join(format!("{label}-seed{seed}.trace")), &trace.to_text())?;
            write_file(&dir.join(format!("{label}-seed{seed}.report")), &text)?;
        }
        ok &= a.failed.is_empty();
    }
    Ok(ok)
}

fn cmd_map(path: &Path, which: Which, out: Option<&Path>) -> Result<bool, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let trace = Trace::parse(&text).map_err(|e| Failure::parse(format!("{}:{e}", path.display())))?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
    let stem = path
        .file_stem()
        .map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    let mut a = Assessment {
        text: String::new(),
        failed: Vec::new(),
    };
    let mut gp = None;
    if which != Which::Interpret {
        if trace.model != Model::Gm {
            return Err(Failure(
                EXIT_CHECK,
                format!("reorg needs a gm trace, got {}", trace.model),
            ));
        }
        match reorg_with(&trace, ReorgMode::NoPeek) {
            Ok(_) => writeln!(a.text, "reorg-nopeek ok").unwrap(),
            Err(e) => writeln!(a.text, "reorg-nopeek {e}").unwrap(),
        }
        match reorg(&trace) {
            Err(e) => {
                a.failed.push("reorg");
                writeln!(a.text, "reorg failed: {e}").unwrap();
            }
            Ok((p, asg)) => {
                for l in &asg.log {
                    writeln!(a.text, "shells {l}").unwrap();
                }
                report_block(&mut a, "reorg", &check_reorg(&trace, &p));
                report_block(&mut a, "claims", &check_claims(&trace, &asg));
                write_file(&dir.join(format!("{stem}.gmplus.trace")), &p.to_text())?;
                gp = Some(p);
            }
        }
    } else {
        gp = Some(trace);
    }
    if which != Which::Reorg {
        if let Some(gp) = &gp {
            match interpret(gp) {
                Err(e) => {
                    a.failed.push("interpretation");
                    writeln!(a.text, "interpretation failed: {e}").unwrap();
                }
                Ok(sp) => {
                    report_block(&mut a, "interpretation", &check_interpretation(gp, &sp));
                    write_file(&dir.join(format!("{stem}.smplus.trace")), &sp.to_text())?;
                }
            }
        }
    }
    print!("{}", a.text);
    write_file(&dir.join(format!("{stem}.map.report")), &a.text)?;
    Ok(a.failed.is_empty())
}

fn cmd_fuzz(exp: &ExpArgs, count: u64) -> Result<bool, Failure> {
    let (cfg, label) = load(exp)?;
    let base = cfg.seeds.first().copied().unwrap_or(1);
    let seeds: Vec<u64> = (base..base + count).collect();
    let results: Vec<Result<(u64, Trace, Assessment), Failure>> = seeds
        .par_iter()
        .map(|&seed| {
            let t = run_one(&cfg, seed)?;
            let a = assess(&t, false);
            Ok((seed, t, a))
        })
        .collect();
    let mut failures: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut traces = Vec::new();
    let mut out = format!("fuzz {label} model={} runs={count}\n", cfg.model);
    for r in results {
        let (seed, t, a) = r?;
        for f in &a.failed {
            *failures.entry(f).or_insert(0) += 1;
        }
        if !a.failed.is_empty() {
            writeln!(out, "seed {seed} failed: {}", a.failed.join(",")).unwrap();
            if let Some(dir) = &cfg.out {
                write_file(&dir.join(format!("{label}-seed{seed}.trace")), &t.to_text())?;
                write_file(&dir.join(format!("{label}-seed{seed}.report")), &a.text)?;
            }
        }
        traces.push(t);
    }
    let decided = traces.iter().filter(|t| !t.decisions().is_empty()).count();
    writeln!(out, "runs with a decision {decided}/{count}").unwrap();
    writeln!(out, "{}", coin_statistics(&traces)).unwrap();
    if failures.is_empty() {
        writeln!(out, "violations 0").unwrap();
    } else {
        for (k, v) in &failures {
            writeln!(out, "violations {k}={v}").unwrap();
        }
    }
    print!("{out}");
    if let Some(dir) = &cfg.out {
        write_file(&dir.join(format!("{label}-fuzz.summary")), &out)?;
    }
    Ok(failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(exp) => cmd_run(exp),
        Cmd::Map { trace, which, out } => cmd_map(trace, *which, out.as_deref()),
        Cmd::Fuzz { exp, count } => cmd_fuzz(exp, *count),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
