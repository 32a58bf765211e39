use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use milsynth_bench::harness::{run_bench, summarize, write_csv, BenchConfig, Engine};
use milsynth_bench::{Domain, DomainSpec};
use milsynth_core::complexity::{fc_space_bound, log10, sample_bound, space_size, SpaceParams};
use milsynth_core::fc::learn_fc;
use milsynth_core::ibk::{self, HigherOrderDefinition};
use milsynth_core::metarule::Metarule;
use milsynth_core::syntax::{self, Selection};
use milsynth_core::{
    learn, parse_task, CompiledRegistry, EngineConfig, FcError, LearningTask, Pack, Program, SearchOutcome,
};
use serde_json::json;

const EXIT_LEARN: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "milsynth",
    version,
    about = "Learn higher-order logic programs from examples"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn a program for a task file.
    Learn(LearnArgs),
    /// Run a learning-curve experiment on a generated domain and write CSV.
    Bench(BenchArgs),
    /// Evaluate hypothesis-space sizes and the sample bound.
    Space(SpaceArgs),
    /// Parse input files and report diagnostics without learning.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Mi,
    Fc,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Mi => Engine::Mi,
            EngineArg::Fc => Engine::Fc,
        }
    }
}

#[derive(Args)]
struct Inputs {
    /// Built-in predicate pack: list, waiter, chess or encryption.
    #[arg(long)]
    builtins: Option<Pack>,
    /// Extra compiled background clauses.
    #[arg(long, value_name = "FILE")]
    bk: Option<PathBuf>,
    /// Interpreted definitions: `std`, `all` or a file.
    #[arg(long, value_name = "std|all|FILE")]
    ibk: Option<String>,
    /// Metarules: `std` or a file.
    #[arg(long, value_name = "std|FILE")]
    metarules: Option<String>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long, value_name = "FILE")]
    task: PathBuf,
    #[arg(long, value_enum, default_value = "mi")]
    engine: EngineArg,
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 5)]
    max_clauses: usize,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
    /// Print per-depth search statistics as JSON (fc engine).
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    domain: Domain,
    #[arg(long, value_enum, default_value = "mi")]
    engine: EngineArg,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    abstracted: bool,
    /// `lo..hi` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "1..5", value_parser = parse_sizes)]
    train_sizes: Sizes,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 100)]
    test_size: usize,
    /// Per-run wall-clock limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    max_clauses: usize,
    /// Size interval of generated examples, `lo..hi`; defaults per domain and engine.
    #[arg(long, value_parser = parse_interval)]
    interval: Option<(usize, usize)>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// CSV destination; stdout if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpaceArgs {
    /// Metarules.
    #[arg(long)]
    m: u64,
    /// Predicate symbols.
    #[arg(long)]
    p: u64,
    /// Body literals per clause.
    #[arg(long, default_value_t = 2)]
    j: u32,
    /// Higher-order existentials per clause.
    #[arg(long, default_value_t = 0)]
    k: u32,
    /// Clauses.
    #[arg(long)]
    n: u32,
    /// Constants, for the bottom-up bound.
    #[arg(long)]
    c: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    abstracted: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_name = "FILE")]
    task: Option<PathBuf>,
    #[command(flatten)]
    inputs: Inputs,
}

fn parse_interval(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected lo..hi")?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("empty or zero interval {s}"));
    }
    Ok((lo, hi))
}

#[derive(Clone)]
struct Sizes(Vec<usize>);

fn parse_sizes(s: &str) -> Result<Sizes, String> {
    if s.contains("..") {
        let (lo, hi) = parse_interval(s)?;
        return Ok(Sizes((lo..=hi).collect()));
    }
    let sizes = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.contains(&0) {
        return Err("train sizes must be positive".into());
    }
    Ok(Sizes(sizes))
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    msg: String,
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_INPUT,
        msg: format!("{}: {e}", path.display()),
    }
}

fn usage_err(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_err(path, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MILSYNTH_LOG", "off"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Learn(a) => cmd_learn(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Space(a) => cmd_space(a),
        Cmd::Validate(a) => cmd_validate(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("milsynth: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

/// Pick the pack: the flag, else a pack named like the task, else lists.
fn pick_pack(flag: Option<Pack>, task_name: Option<&str>, path: &Path) -> Pack {
    flag.or_else(|| task_name.and_then(|n| n.parse().ok()))
        .or_else(|| path.file_stem()?.to_str()?.parse().ok())
        .unwrap_or(Pack::List)
}

fn load_ibk(spec: &str) -> Result<Vec<Arc<HigherOrderDefinition>>, Failure> {
    let sel = match spec {
        "std" => Selection::Std,
        "all" => Selection::All,
        "none" => Selection::Names(vec![]),
        file => {
            let path = Path::new(file);
            let defs = ibk::parse_definitions(&read(path)?).map_err(|e| input_err(path, e))?;
            return Ok(defs.into_iter().map(Arc::new).collect());
        }
    };
    ibk::select(&sel).map_err(usage_err)
}

fn load_metarules(spec: &str, engine: Engine) -> Result<Vec<Arc<Metarule>>, Failure> {
    if spec == "std" {
        return Ok(engine.metarules());
    }
    let path = Path::new(spec);
    let ms = Metarule::parse(&read(path)?).map_err(|e| input_err(path, e))?;
    Ok(ms.into_iter().map(Arc::new).collect())
}

fn add_bk(registry: &mut CompiledRegistry, path: &Path) -> Result<usize, Failure> {
    let clauses = syntax::parse_clauses(&read(path)?, &registry.signature()).map_err(|e| input_err(path, e))?;
    let n = clauses.len();
    registry.add_clauses(clauses).map_err(|e| input_err(path, e))?;
    Ok(n)
}

fn load_task(path: &Path, inputs: &Inputs, engine: Engine) -> Result<LearningTask, Failure> {
    let file = parse_task(&read(path)?).map_err(|e| input_err(path, e))?;
    let mut registry = CompiledRegistry::with_pack(pick_pack(inputs.builtins, file.name.as_deref(), path));
    if let Some(bk) = &inputs.bk {
        add_bk(&mut registry, bk)?;
    }
    let task = file.build(registry).map_err(|e| input_err(path, e))?;
    let ibk = match &inputs.ibk {
        Some(spec) => load_ibk(spec)?,
        None => task.ibk.clone(),
    };
    // the forward-chained subset stands in for the standard library under fc
    let metarules = match (&inputs.metarules, &file.metarules) {
        (Some(spec), _) => load_metarules(spec, engine)?,
        (None, None | Some(Selection::Std)) if file.metarule_decls.is_empty() => engine.metarules(),
        (None, _) => task.metarules.clone(),
    };
    LearningTask::new(task.pos, task.neg, task.registry, ibk, metarules).map_err(|e| input_err(path, e))
}

fn engine_config(max_clauses: usize, timeout: f64) -> Result<EngineConfig, Failure> {
    if max_clauses == 0 {
        return Err(usage_err("--max-clauses must be at least 1"));
    }
    let wall_timeout = Duration::try_from_secs_f64(timeout).map_err(|e| usage_err(format!("--timeout: {e}")))?;
    Ok(EngineConfig {
        max_clauses,
        wall_timeout,
        ..Default::default()
    })
}

fn provenance(prog: &Program) -> Vec<serde_json::Value> {
    prog.subs
        .iter()
        .zip(prog.clauses())
        .map(|(s, c)| {
            json!({
                "clause": syntax::print_clause(&c),
                "metarule": s.metarule.name,
                "symbols": s.symbols.iter().map(ToString::to_string).collect::<Vec<_>>(),
            })
        })
        .collect()
}

fn outcome_name(o: SearchOutcome) -> &'static str {
    match o {
        SearchOutcome::Found => "found",
        SearchOutcome::Exhausted => "exhausted",
        SearchOutcome::TimedOut => "timed_out",
    }
}

fn cmd_learn(a: LearnArgs) -> Result<u8, Failure> {
    let engine = Engine::from(a.engine);
    let cfg = engine_config(a.max_clauses, a.timeout)?;
    if a.stats && !matches!(engine, Engine::Fc) {
        return Err(usage_err("--stats requires --engine fc"));
    }
    let task = load_task(&a.task, &a.inputs, engine)?;
    info!(
        "learning {} from {}+/{}- examples with {} metarules",
        task.target,
        task.pos.len(),
        task.neg.len(),
        task.metarules.len()
    );
    let (program, outcome, stats) = match engine {
        Engine::Mi => {
            let l = learn(&task, &cfg);
            let s = &l.stats;
            let stats = json!({
                "depths_visited": s.depths_visited,
                "programs_tested": s.programs_tested,
                "steps": s.steps,
                "budget_exhaustions": s.budget_exhaustions,
                "wall_time_s": s.wall_time.as_secs_f64(),
            });
            (l.program, l.outcome, stats)
        }
        Engine::Fc => match learn_fc(&task, &cfg) {
            Ok(l) => {
                let programs_tested: u64 = l.stats.depths.iter().map(|d| d.programs_tested).sum();
                let mut stats = serde_json::to_value(&l.stats).expect("stats serialize");
                stats["depths_visited"] = json!(l.stats.depths.len());
                stats["programs_tested"] = json!(programs_tested);
                (l.program, l.outcome, stats)
            }
            Err(e @ FcError::Resource { .. }) => {
                return Err(Failure {
                    code: EXIT_LEARN,
                    msg: e.to_string(),
                })
            }
            Err(e) => return Err(usage_err(e)),
        },
    };

    let mut out = io::stdout().lock();
    let write = |out: &mut io::StdoutLock, s: String| out.write_all(s.as_bytes()).map_err(usage_err);
    if a.json {
        let doc = json!({
            "target": task.target.to_string(),
            "engine": engine.to_string(),
            "outcome": outcome_name(outcome),
            "program": program.as_ref().map(provenance),
            "stats": stats,
        });
        write(
            &mut out,
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")),
        )?;
    } else {
        if let Some(p) = &program {
            write(&mut out, p.to_string())?;
        }
        if a.stats {
            write(
                &mut out,
                format!("{}\n", serde_json::to_string_pretty(&stats["depths"]).expect("json")),
            )?;
        }
    }
    match (&program, outcome) {
        (Some(_), _) => Ok(0),
        (None, SearchOutcome::TimedOut) => {
            eprintln!("milsynth: timed out after {:.1}s", cfg.wall_timeout.as_secs_f64());
            Ok(EXIT_LEARN)
        }
        (None, _) => {
            eprintln!("milsynth: no program with at most {} clauses", cfg.max_clauses);
            Ok(EXIT_LEARN)
        }
    }
}

fn cmd_bench(a: BenchArgs) -> Result<u8, Failure> {
    let engine = Engine::from(a.engine);
    if a.repeats == 0 {
        return Err(usage_err("--repeats must be at least 1"));
    }
    let (lo, hi) = a.interval.unwrap_or(match engine {
        Engine::Mi => a.domain.top_down_interval(),
        Engine::Fc => a.domain.bottom_up_interval(),
    });
    let spec = DomainSpec::new(a.domain, lo, hi, a.seed).map_err(usage_err)?;
    let cfg = BenchConfig {
        engine,
        abstracted: a.abstracted,
        train_sizes: a.train_sizes.0,
        repeats: a.repeats,
        test_size: a.test_size,
        engine_cfg: engine_config(a.max_clauses, a.timeout)?,
        jobs: a.jobs,
        ..Default::default()
    };
    let results = run_bench(&spec, &cfg);
    match &a.out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| input_err(path, e))?;
            write_csv(f, &results).map_err(|e| input_err(path, e))?;
        }
        None => write_csv(io::stdout().lock(), &results).map_err(usage_err)?,
    }
    for s in summarize(&results) {
        eprintln!(
            "m={:<3} accuracy {:.3} ± {:.3}  time {:.3}s ± {:.3}  timeouts {}/{}",
            s.train_size, s.accuracy.mean, s.accuracy.se, s.learn_time_s.mean, s.learn_time_s.se, s.timeouts, s.runs
        );
    }
    Ok(0)
}

fn cmd_space(a: SpaceArgs) -> Result<u8, Failure> {
    if a.m == 0 || a.p == 0 || a.n == 0 {
        return Err(usage_err("--m, --p and --n must be at least 1"));
    }
    if !(a.epsilon > 0.0 && a.epsilon < 1.0 && a.delta > 0.0 && a.delta < 1.0) {
        return Err(usage_err("--epsilon and --delta must lie strictly between 0 and 1"));
    }
    if a.c == Some(0) {
        return Err(usage_err("--c must be at least 1"));
    }
    let params = SpaceParams {
        epsilon: a.epsilon,
        delta: a.delta,
        ..SpaceParams::new(a.m, a.p, a.j, a.n).with_k(a.k)
    };
    let slots = a.j + 1 + if a.abstracted { a.k } else { 0 };
    let size = space_size(&params, a.abstracted);
    let per_clause = a.m as u128 * (a.p as u128).checked_pow(slots).unwrap_or(0);
    let mut out = String::new();
    if per_clause > 0 {
        out += &format!("space: {per_clause}^{}\n", a.n);
    } else {
        out += &format!("space: ({}*{}^{slots})^{}\n", a.m, a.p, a.n);
    }
    out += &format!("exact: {size}\n");
    out += &format!("log10: {:.4}\n", log10(&size));
    out += &format!(
        "sample bound: {:.2} (epsilon {}, delta {})\n",
        sample_bound(&params, a.abstracted),
        a.epsilon,
        a.delta
    );
    if let Some(c) = a.c {
        let fc = fc_space_bound(a.m, a.p, c, a.n);
        out += &format!("fc bound: {fc}\nfc log10: {:.4}\n", log10(&fc));
    }
    print!("{out}");
    Ok(0)
}

fn cmd_validate(a: ValidateArgs) -> Result<u8, Failure> {
    let i = &a.inputs;
    if a.task.is_none() && i.bk.is_none() && i.ibk.is_none() && i.metarules.is_none() {
        return Err(usage_err(
            "nothing to validate; pass --task, --bk, --ibk or --metarules",
        ));
    }
    let mut report = Vec::new();
    let mut failed = false;
    let mut check = |what: &str, r: Result<String, Failure>| match r {
        Ok(msg) => report.push(format!("ok   {what}: {msg}")),
        Err(f) => {
            failed = true;
            report.push(format!("FAIL {what}: {}", f.msg));
        }
    };
    let pack = i.builtins.unwrap_or(Pack::List);
    if let Some(path) = &i.bk {
        check(
            "bk",
            add_bk(&mut CompiledRegistry::with_pack(pack), path).map(|n| format!("{}, clauses: {n}", path.display())),
        );
    }
    if let Some(spec) = &i.ibk {
        check(
            "ibk",
            load_ibk(spec).map(|ds| ds.iter().map(|d| d.sym.to_string()).collect::<Vec<_>>().join(", ")),
        );
    }
    if let Some(spec) = &i.metarules {
        check(
            "metarules",
            load_metarules(spec, Engine::Mi)
                .map(|ms| ms.iter().map(|m| m.name.to_string()).collect::<Vec<_>>().join(", ")),
        );
    }
    if let Some(path) = &a.task {
        check(
            "task",
            load_task(path, i, Engine::Mi).map(|t| {
                format!(
                    "{}, target {}, positive: {}, negative: {}, primitives: {}, interpreted: {}, metarules: {}",
                    path.display(),
                    t.target,
                    t.pos.len(),
                    t.neg.len(),
                    t.registry.prims().len(),
                    t.ibk.len(),
                    t.metarules.len()
                )
            }),
        );
    }
    println!("{}", report.join("\n"));
    Ok(if failed { EXIT_INPUT } else { 0 })
}
