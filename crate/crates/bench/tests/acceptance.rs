//! End-to-end acceptance run. Criteria execute one after another (the
//! timing limits assume an otherwise idle machine) and each prints a single
//! `criterion N: PASS|FAIL` line. Pass criterion numbers as arguments to run
//! a subset.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use milsynth_bench::harness::{is_consistent, split};
use milsynth_bench::{run_bench, BenchConfig, BenchResult, Domain, DomainSpec, Engine, Polarity};
use milsynth_core::complexity::{crossover, log10, space_size, SpaceParams};
use milsynth_core::fc::saturate;
use milsynth_core::ibk::{self, STD_IBK};
use milsynth_core::syntax::{parse_atom, Selection};
use milsynth_core::*;

const SEED: u64 = 2024;

/// (what, sound) for every learn call made by the run.
static LEARNED: Mutex<Vec<(String, bool)>> = Mutex::new(Vec::new());

fn record(results: &[BenchResult]) {
    let mut log = LEARNED.lock().unwrap();
    for r in results {
        log.push((
            format!("{} {} m={} r={}", r.domain, r.engine, r.train_size, r.repeat),
            r.sound,
        ));
    }
}

fn record_one(what: &str, task: &LearningTask, prog: Option<&Program>) {
    if let Some(p) = prog {
        LEARNED
            .lock()
            .unwrap()
            .push((what.to_string(), is_consistent(task, p, 1_000_000)));
    }
}

fn bench(
    domain: Domain,
    engine: Engine,
    abstracted: bool,
    m: usize,
    timeout: u64,
    max_clauses: usize,
) -> Vec<BenchResult> {
    let spec = match engine {
        Engine::Mi => DomainSpec::top_down(domain, SEED),
        Engine::Fc => DomainSpec::bottom_up(domain, SEED),
    };
    let mut cfg = BenchConfig {
        engine,
        abstracted,
        train_sizes: vec![m],
        repeats: 5,
        test_size: 100,
        ..Default::default()
    };
    cfg.engine_cfg.wall_timeout = Duration::from_secs(timeout);
    cfg.engine_cfg.max_clauses = max_clauses;
    let rs = run_bench(&spec, &cfg);
    record(&rs);
    rs
}

fn clauses(r: &BenchResult) -> Option<usize> {
    r.program.as_ref().map(Program::len)
}

fn describe(rs: &[BenchResult]) -> String {
    rs.iter()
        .map(|r| {
            format!(
                "[acc {:.2}, {:.1}s, {}]",
                r.accuracy,
                r.learn_time.as_secs_f64(),
                match clauses(r) {
                    Some(n) => format!("{n} clauses"),
                    None if r.timed_out => "timeout".to_string(),
                    None => "no program".to_string(),
                }
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn encryption() -> (bool, String) {
    let rs = bench(Domain::Encryption, Engine::Mi, true, 6, 60, 5);
    let good = rs
        .iter()
        .filter(|r| r.accuracy >= 0.95 && clauses(r).is_some_and(|n| n <= 3))
        .count();
    (
        good >= 4,
        format!(
            "{good}/5 repeats with accuracy >= 0.95 and <= 3 clauses; {}",
            describe(&rs)
        ),
    )
}

fn droplast() -> (bool, String) {
    let rs = bench(Domain::Droplast, Engine::Mi, true, 2, 60, 5);
    let good = rs
        .iter()
        .filter(|r| r.accuracy == 1.0 && clauses(r).is_some_and(|n| n <= 3) && r.learn_time < Duration::from_secs(10))
        .count();
    (
        good == 5,
        format!("{good}/5 repeats perfect, <= 3 clauses, < 10s; {}", describe(&rs)),
    )
}

fn chess_gap() -> (bool, String) {
    let with = bench(Domain::Chess, Engine::Mi, true, 10, 60, 5);
    let with_ok = with
        .iter()
        .all(|r| clauses(r).is_some_and(|n| n <= 3) && r.learn_time < Duration::from_secs(60));
    let without = bench(Domain::Chess, Engine::Mi, false, 10, 60, 12);
    let timeouts = without.iter().filter(|r| r.timed_out).count();
    // wherever both settings produced a program, abstraction must be smaller
    let smaller = with.iter().zip(&without).all(|(a, u)| match (clauses(a), clauses(u)) {
        (Some(a), Some(u)) => a < u,
        _ => true,
    });
    (
        with_ok && timeouts >= 4 && smaller,
        format!(
            "with IBK {}; without IBK {timeouts}/5 timed out, abstracted strictly smaller: {smaller}; with {} / without {}",
            if with_ok { "all <= 3 clauses" } else { "FAILED" },
            describe(&with),
            describe(&without)
        ),
    )
}

fn waiter() -> (bool, String) {
    let rs = bench(Domain::Waiter, Engine::Mi, true, 10, 60, 5);
    let mean = rs.iter().map(|r| r.accuracy).sum::<f64>() / rs.len() as f64;
    (mean >= 0.90, format!("mean accuracy {mean:.3}; {}", describe(&rs)))
}

fn complexity() -> (bool, String) {
    let u = log10(&space_size(&SpaceParams::new(4, 6, 2, 7), false));
    let a = log10(&space_size(&SpaceParams::new(5, 7, 2, 3).with_k(1), true));
    let c = crossover(7, 3, 2, 1);
    (
        (20.0..=21.0).contains(&u) && (12.0..=13.0).contains(&a) && c,
        format!("log10 unabstracted {u:.3}, abstracted {a:.3}, crossover {c}"),
    )
}

// Minimality: every program of at most two clauses over the task's
// metarules and predicates is enumerated and checked with the evaluator.

struct Tiny {
    metarules: &'static [&'static str],
    prims: &'static [(&'static str, usize)],
    pos: &'static [&'static str],
    neg: &'static [&'static str],
}

const TINY: [Tiny; 20] = [
    Tiny {
        metarules: &["identity", "chain"],
        prims: &[("succ", 2), ("prec", 2)],
        pos: &["f(1,2)", "f(4,5)"],
        neg: &["f(1,3)"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("succ", 2)],
        pos: &["f(1,3)", "f(4,6)"],
        neg: &["f(1,2)"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("succ", 2)],
        pos: &["f(1,4)", "f(2,5)"],
        neg: &["f(1,3)"],
    },
    Tiny {
        metarules: &["identity", "inverse"],
        prims: &[("succ", 2)],
        pos: &["f(2,1)", "f(5,4)"],
        neg: &["f(2,3)"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("tail", 2), ("head", 2)],
        pos: &["f([a,b,c],b)", "f([x,y],y)"],
        neg: &["f([a,b,c],a)"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("reverse", 2), ("head", 2)],
        pos: &["f([a,b,c],c)"],
        neg: &["f([a,b,c],a)"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("tail", 2)],
        pos: &["f([a,b,c],[c])", "f([a,b,c,d],[c,d])"],
        neg: &["f([a,b,c],[b,c])"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("tail", 2)],
        pos: &["f([a,b,c,d],[d])"],
        neg: &["f([a,b,c,d],[c,d])"],
    },
    Tiny {
        metarules: &["tailrec", "identity"],
        prims: &[("tail", 2), ("empty", 1)],
        pos: &["f([a,b],[])", "f([c],[])"],
        neg: &["f([a,b],[b])"],
    },
    Tiny {
        metarules: &["precon"],
        prims: &[("empty", 1), ("hold", 2)],
        pos: &["f([],[])"],
        neg: &["f([a],[a])"],
    },
    Tiny {
        metarules: &["postcon"],
        prims: &[("tail", 2), ("empty", 1)],
        pos: &["f([a],[])"],
        neg: &["f([a,b],[b])"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("reverse", 2), ("tail", 2)],
        pos: &["f([a,b,c],[b,a])"],
        neg: &["f([a,b,c],[a,b])"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("reverse", 2), ("tail", 2)],
        pos: &["f([a,b,c],[a,b])", "f([x,y],[x])"],
        neg: &["f([a,b,c],[b,c])"],
    },
    Tiny {
        metarules: &["didentity", "identity"],
        prims: &[("hold", 2), ("reverse", 2)],
        pos: &["f([a,b,a],[a,b,a])"],
        neg: &["f([a,b],[a,b])", "f([a,b],[b,a])"],
    },
    Tiny {
        metarules: &["identity"],
        prims: &[("hold", 2), ("reverse", 2)],
        pos: &["f([a,b],[a,b])"],
        neg: &["f([a,b],[b,a])"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("succ", 2)],
        pos: &["f(1,6)"],
        neg: &["f(1,5)"],
    },
    Tiny {
        metarules: &["tailrec", "identity"],
        prims: &[("succ", 2)],
        pos: &["f(1,3)", "f(2,3)"],
        neg: &["f(3,1)", "f(2,2)"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("prec", 2)],
        pos: &["f(5,3)"],
        neg: &["f(5,4)"],
    },
    Tiny {
        metarules: &["chain"],
        prims: &[("head", 2), ("tail", 2)],
        pos: &["f([a,b,c],c)"],
        neg: &["f([a,b,c],b)"],
    },
    Tiny {
        metarules: &["inverse"],
        prims: &[("tail", 2)],
        pos: &["f([b],[a,b])", "f([],[c])"],
        neg: &["f([b],[b])"],
    },
];

fn tiny_task(t: &Tiny) -> LearningTask {
    let mut reg = CompiledRegistry::with_pack(Pack::List);
    reg.set_prims(t.prims.iter().map(|(n, a)| PredSym::new(n, *a)).collect())
        .unwrap();
    let names: Vec<String> = t.metarules.iter().map(|s| s.to_string()).collect();
    let atoms = |src: &[&str]| src.iter().map(|s| parse_atom(s).unwrap()).collect();
    LearningTask::new(
        atoms(t.pos),
        atoms(t.neg),
        Arc::new(reg),
        Vec::new(),
        metarule::select(&names).unwrap(),
    )
    .unwrap()
}

/// Arity each existential of `m` is used at.
fn arities(m: &Metarule) -> Vec<usize> {
    m.existentials
        .iter()
        .map(|v| {
            m.template
                .atoms()
                .find(|a| a.pred.var_id() == Some(*v))
                .map(Atom::arity)
                .expect("existentials name literals")
        })
        .collect()
}

fn all_clauses(task: &LearningTask, symbols: &[PredSym]) -> Vec<SubstitutionRecord> {
    let mut out = Vec::new();
    for m in &task.metarules {
        let ar = arities(m);
        let mut acc: Vec<Vec<PredSym>> = vec![Vec::new()];
        for (i, &a) in ar.iter().enumerate() {
            let pool: Vec<&PredSym> = symbols
                .iter()
                .filter(|s| s.arity == a && (i > 0 || *s.name == *task.target.name || s.name.starts_with("f_")))
                .collect();
            acc = acc
                .into_iter()
                .flat_map(|pre| {
                    pool.iter().map(move |s| {
                        let mut v = pre.clone();
                        v.push((*s).clone());
                        v
                    })
                })
                .collect();
        }
        out.extend(acc.into_iter().map(|symbols| SubstitutionRecord {
            metarule: m.clone(),
            symbols,
        }));
    }
    out
}

fn consistent(task: &LearningTask, p: &Program) -> bool {
    let budget = EngineConfig::default().step_budget;
    task.pos
        .iter()
        .all(|a| eval(p, a, &task.registry, &task.ibk, budget).holds)
        && task.neg.iter().all(|a| {
            let v = eval(p, a, &task.registry, &task.ibk, budget);
            !v.holds && !v.exhausted
        })
}

/// Size of a smallest consistent program, if one has at most two clauses.
fn oracle_min(task: &LearningTask) -> Option<usize> {
    let mut symbols: Vec<PredSym> = task.registry.prims().to_vec();
    symbols.push(task.target.clone());
    let one = all_clauses(task, &symbols);
    let defines_target = |c: &SubstitutionRecord| *c.head() == task.target;
    if one
        .iter()
        .filter(|c| defines_target(c))
        .any(|c| consistent(task, &Program::new(vec![c.clone()])))
    {
        return Some(1);
    }
    symbols.push(PredSym::new(&program::invented_name(&task.target.name, 1), 2));
    let two = all_clauses(task, &symbols);
    for a in &two {
        for b in &two {
            if a == b || !(defines_target(a) || defines_target(b)) {
                continue;
            }
            if consistent(task, &Program::new(vec![a.clone(), b.clone()])) {
                return Some(2);
            }
        }
    }
    None
}

fn minimality() -> (bool, String) {
    let cfg = EngineConfig {
        max_clauses: 2,
        ..Default::default()
    };
    let mut agree = 0;
    let mut notes = Vec::new();
    for (i, t) in TINY.iter().enumerate() {
        let task = tiny_task(t);
        let l = learn(&task, &cfg);
        record_one(&format!("tiny task {i}"), &task, l.program.as_ref());
        let got = l.program.as_ref().map(Program::len);
        let want = oracle_min(&task);
        if got == want && l.outcome != SearchOutcome::TimedOut {
            agree += 1;
        } else {
            notes.push(format!("task {i}: engine {got:?}, oracle {want:?}"));
        }
    }
    (
        agree == TINY.len(),
        format!("{agree}/{} agree with enumeration {}", TINY.len(), notes.join("; ")),
    )
}

fn soundness() -> (bool, String) {
    // a small sweep over every domain and both engines, on top of whatever
    // earlier criteria learned
    for domain in Domain::ALL {
        for engine in [Engine::Mi, Engine::Fc] {
            let spec = DomainSpec::bottom_up(domain, SEED + 1);
            let mut cfg = BenchConfig {
                engine,
                train_sizes: vec![1, 3],
                repeats: 1,
                test_size: 20,
                ..Default::default()
            };
            cfg.engine_cfg.wall_timeout = Duration::from_secs(10);
            record(&run_bench(&spec, &cfg));
        }
    }
    let log = LEARNED.lock().unwrap();
    let bad: Vec<&str> = log.iter().filter(|(_, ok)| !ok).map(|(w, _)| w.as_str()).collect();
    (
        bad.is_empty(),
        format!(
            "{} learn calls checked, unsound: {}",
            log.len(),
            if bad.is_empty() {
                "none".to_string()
            } else {
                bad.join(", ")
            }
        ),
    )
}

fn fc_chess() -> (bool, String) {
    let spec = DomainSpec::bottom_up(Domain::Chess, SEED);
    let mut notes = Vec::new();
    let mut ok = true;
    for r in 0..5 {
        let data = split(&spec, 2, 0, r);
        let task = Domain::Chess
            .task(data.train_pos, data.train_neg, true, forward_chained_library())
            .unwrap();
        let cfg = EngineConfig {
            wall_timeout: Duration::from_secs(30),
            ..Default::default()
        };
        let start = Instant::now();
        let l = learn_fc(&task, &cfg);
        let secs = start.elapsed().as_secs_f64();
        match l {
            Ok(l) => {
                record_one(&format!("fc chess r={r}"), &task, l.program.as_ref());
                let good = l.program.as_ref().is_some_and(|p| is_consistent(&task, p, 1_000_000)) && secs < 30.0;
                ok &= good;
                notes.push(format!("[{:?} {secs:.2}s]", l.outcome));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("[{e}]"));
            }
        }
    }
    // deduced facts only grow as example constants are added
    let mut g = milsynth_bench::Generator::new(spec);
    let consts: Vec<GroundValue> = g
        .examples(3, Polarity::Pos)
        .iter()
        .flat_map(|a| a.args.iter().filter_map(Term::as_value).cloned())
        .collect();
    let reg = Domain::Chess.registry();
    let defs = ibk::select(&Selection::Names(STD_IBK.iter().map(|s| s.to_string()).collect())).unwrap();
    let counts: Vec<usize> = [2, 4, 6]
        .iter()
        .map(|&n| {
            saturate(&consts[..n], &reg, &defs, reg.prims(), &FcLimits::default())
                .map(|s| s.fact_count())
                .unwrap_or(0)
        })
        .collect();
    let monotone = counts.windows(2).all(|w| w[0] <= w[1]) && counts[0] > 0;
    (ok && monotone, format!("{} ; fact counts {counts:?}", notes.join(" ")))
}

fn double_droplast() -> (bool, String) {
    let mut reg = CompiledRegistry::with_pack(Pack::List);
    reg.set_prims(vec![PredSym::new("tail", 2), PredSym::new("concat", 3)])
        .unwrap();
    let atoms = |src: &[&str]| -> Vec<Atom> { src.iter().map(|s| parse_atom(s).unwrap()).collect() };
    let task = LearningTask::new(
        atoms(&[
            "f([[a,l,i,c,e],[b,o,b],[c,a,r,o,l]],[[a,l,i,c],[b,o]])",
            "f([[i,n,d,u,c,t,i,v,e],[l,o,g,i,c],[p,r,o,g,r,a,m,m,i,n,g]],[[i,n,d,u,c,t,i,v],[l,o,g,i]])",
        ]),
        atoms(&[
            "f([[a,b,c],[d,e]],[])",
            "f([[a,b,c],[d,e]],[[a,b,c]])",
            "f([[a,b,c],[d,e]],[[b,c]])",
            "f([[a,b,c],[d,e]],[[a,b],[d]])",
        ]),
        Arc::new(reg),
        ibk::select(&Selection::Names(vec!["map".into(), "reduceback".into()])).unwrap(),
        metarule::select(&["curry1".into(), "chain".into()]).unwrap(),
    )
    .unwrap();
    let cfg = EngineConfig {
        max_clauses: 6,
        ..Default::default()
    };
    let l = learn(&task, &cfg);
    record_one("double droplast", &task, l.program.as_ref());
    let Some(p) = l.program else {
        return (false, format!("no program ({:?})", l.outcome));
    };
    let bodies: Vec<Atom> = p.clauses().into_iter().flat_map(|c| c.body).collect();
    let as_arg: Vec<&PredSym> = bodies
        .iter()
        .flat_map(|a| a.args.iter())
        .filter_map(Term::as_pred)
        .collect();
    let as_lit: Vec<&PredSym> = bodies.iter().filter_map(Atom::pred_sym).collect();
    let reused = as_arg
        .iter()
        .find(|q| program::invented_index(&task.target.name, &q.name).is_some() && as_lit.contains(q));
    (
        reused.is_some(),
        format!(
            "{} clauses; invented symbol used as argument and literal: {}",
            p.len(),
            reused.map_or("none".to_string(), |q| q.to_string())
        ),
    )
}

type Criterion = fn() -> (bool, String);

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, Criterion); 9] = [
        (1, "encryption", encryption),
        (2, "droplast", droplast),
        (3, "chess abstraction gap", chess_gap),
        (4, "waiter", waiter),
        (5, "complexity bounds", complexity),
        (6, "minimality", minimality),
        (8, "bottom-up chess", fc_chess),
        (9, "double droplast", double_droplast),
        // last, so it sees every learn call above
        (7, "soundness", soundness),
    ];
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (n, name, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        let line = format!(
            "criterion {n} ({name}): {} in {:.1}s: {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        lines.push((n, line));
        if !ok {
            failed.push(n);
        }
    }
    lines.sort();
    println!("\nsummary:");
    for (_, line) in &lines {
        println!("  {}", line.split(": ").take(2).collect::<Vec<_>>().join(": "));
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
