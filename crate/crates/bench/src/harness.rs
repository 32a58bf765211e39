//! Learning-curve runs: generate, learn, score on held-out examples.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{debug, info};
use milsynth_core::fc::learn_fc_with;
use milsynth_core::{
    eval, forward_chained_library, learn, standard_library, Atom, EngineConfig, FcLimits, LearningTask, Metarule,
    Program, SearchOutcome,
};
use serde::Serialize;

use crate::domains::{Domain, DomainSpec, Generator, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Top-down meta-interpreter.
    Mi,
    /// Bottom-up forward-chaining learner.
    Fc,
}

impl Engine {
    pub fn metarules(self) -> Vec<Arc<Metarule>> {
        match self {
            Engine::Mi => standard_library(),
            Engine::Fc => forward_chained_library(),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Mi => "mi",
            Engine::Fc => "fc",
        })
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mi" => Ok(Engine::Mi),
            "fc" => Ok(Engine::Fc),
            other => Err(format!("unknown engine `{other}` (expected mi or fc)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub engine: Engine,
    /// Learn with map, until and ifthenelse available.
    pub abstracted: bool,
    /// Positive (and, separately, negative) training examples per point.
    pub train_sizes: Vec<usize>,
    pub repeats: usize,
    /// Positive (and, separately, negative) test examples.
    pub test_size: usize,
    pub engine_cfg: EngineConfig,
    pub fc_limits: FcLimits,
    /// Resolution steps allowed when classifying one test example.
    pub eval_budget: u64,
    /// Worker threads; 0 or 1 runs sequentially.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            engine: Engine::Mi,
            abstracted: true,
            train_sizes: (1..=5).collect(),
            repeats: 5,
            test_size: 100,
            engine_cfg: EngineConfig::default(),
            fc_limits: FcLimits::default(),
            eval_budget: 100_000,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub domain: Domain,
    pub engine: Engine,
    pub abstracted: bool,
    pub train_size: usize,
    pub repeat: usize,
    pub accuracy: f64,
    pub learn_time: Duration,
    pub timed_out: bool,
    pub program: Option<Program>,
    /// The program (if any) covers every training positive and no negative.
    pub sound: bool,
    /// Set when the engine refused the task outright.
    pub error: Option<String>,
}

/// Seed of one (train size, repeat) cell, so cells can run in any order.
pub fn cell_seed(seed: u64, train_size: usize, repeat: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((train_size as u64) << 20)
        .wrapping_add(repeat as u64)
}

/// Train and test examples of one cell.
pub struct Split {
    pub train_pos: Vec<Atom>,
    pub train_neg: Vec<Atom>,
    pub test_pos: Vec<Atom>,
    pub test_neg: Vec<Atom>,
}

pub fn split(spec: &DomainSpec, train_size: usize, test_size: usize, repeat: usize) -> Split {
    let mut g = Generator::new(DomainSpec {
        seed: cell_seed(spec.seed, train_size, repeat),
        ..*spec
    });
    Split {
        train_pos: g.examples(train_size, Polarity::Pos),
        train_neg: g.examples(train_size, Polarity::Neg),
        test_pos: g.examples(test_size, Polarity::Pos),
        test_neg: g.examples(test_size, Polarity::Neg),
    }
}

/// Whether `prog` covers every positive and no negative of the task.
pub fn is_consistent(task: &LearningTask, prog: &Program, budget: u64) -> bool {
    let holds = |a: &Atom| eval(prog, a, &task.registry, &task.ibk, budget).holds;
    task.pos.iter().all(holds) && !task.neg.iter().any(holds)
}

/// Fraction of test examples classified correctly; with no program every
/// example is predicted false.
pub fn accuracy(task: &LearningTask, prog: Option<&Program>, pos: &[Atom], neg: &[Atom], budget: u64) -> f64 {
    let total = pos.len() + neg.len();
    if total == 0 {
        return 0.0;
    }
    let correct = match prog {
        None => neg.len(),
        Some(p) => {
            let holds = |a: &Atom| eval(p, a, &task.registry, &task.ibk, budget).holds;
            pos.iter().filter(|a| holds(a)).count() + neg.iter().filter(|a| !holds(a)).count()
        }
    };
    correct as f64 / total as f64
}

pub fn run_cell(spec: &DomainSpec, cfg: &BenchConfig, train_size: usize, repeat: usize) -> BenchResult {
    let data = split(spec, train_size, cfg.test_size, repeat);
    let mut result = BenchResult {
        domain: spec.domain,
        engine: cfg.engine,
        abstracted: cfg.abstracted,
        train_size,
        repeat,
        accuracy: 0.0,
        learn_time: Duration::ZERO,
        timed_out: false,
        program: None,
        sound: true,
        error: None,
    };
    let task = match spec
        .domain
        .task(data.train_pos, data.train_neg, cfg.abstracted, cfg.engine.metarules())
    {
        Ok(t) => t,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let start = Instant::now();
    let (program, outcome) = match cfg.engine {
        Engine::Mi => {
            let l = learn(&task, &cfg.engine_cfg);
            (l.program, l.outcome)
        }
        Engine::Fc => match learn_fc_with(&task, &cfg.engine_cfg, &cfg.fc_limits) {
            Ok(l) => (l.program, l.outcome),
            Err(e) => {
                result.error = Some(e.to_string());
                (None, SearchOutcome::Exhausted)
            }
        },
    };
    result.learn_time = start.elapsed();
    result.timed_out = outcome == SearchOutcome::TimedOut;
    result.sound = program
        .as_ref()
        .is_none_or(|p| is_consistent(&task, p, cfg.eval_budget));
    result.accuracy = accuracy(&task, program.as_ref(), &data.test_pos, &data.test_neg, cfg.eval_budget);
    debug!(
        "{} {} m={} r={}: {:?} in {:.2?}",
        spec.domain, cfg.engine, train_size, repeat, outcome, result.learn_time
    );
    result.program = program;
    result
}

/// Every (train size, repeat) cell, ordered by train size then repeat.
pub fn run_bench(spec: &DomainSpec, cfg: &BenchConfig) -> Vec<BenchResult> {
    let cells: Vec<(usize, usize)> = cfg
        .train_sizes
        .iter()
        .flat_map(|&m| (0..cfg.repeats).map(move |r| (m, r)))
        .collect();
    info!("{} cells for {} with {}", cells.len(), spec.domain, cfg.engine);
    let jobs = cfg.jobs.clamp(1, cells.len().max(1));
    if jobs == 1 {
        return cells.iter().map(|&(m, r)| run_cell(spec, cfg, m, r)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<BenchResult>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(m, r)) = cells.get(i) else { break };
                let res = run_cell(spec, cfg, m, r);
                slots.lock().expect("no worker panicked")[i] = Some(res);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return MeanSe { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MeanSe {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

impl fmt::Display for MeanSe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub train_size: usize,
    pub runs: usize,
    pub accuracy: MeanSe,
    pub learn_time_s: MeanSe,
    pub timeouts: usize,
}

/// One row per train size, in order of first appearance.
pub fn summarize(results: &[BenchResult]) -> Vec<Summary> {
    let mut sizes: Vec<usize> = Vec::new();
    for r in results {
        if !sizes.contains(&r.train_size) {
            sizes.push(r.train_size);
        }
    }
    sizes
        .into_iter()
        .map(|m| {
            let rows: Vec<&BenchResult> = results.iter().filter(|r| r.train_size == m).collect();
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            let time: Vec<f64> = rows.iter().map(|r| r.learn_time.as_secs_f64()).collect();
            Summary {
                train_size: m,
                runs: rows.len(),
                accuracy: MeanSe::of(&acc),
                learn_time_s: MeanSe::of(&time),
                timeouts: rows.iter().filter(|r| r.timed_out).count(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct Row {
    domain: Domain,
    engine: Engine,
    abstracted: bool,
    train_size: usize,
    repeat: usize,
    accuracy: f64,
    learn_time_s: f64,
    timed_out: bool,
    program_clauses: Option<usize>,
}

pub fn write_csv<W: Write>(out: W, results: &[BenchResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(Row {
            domain: r.domain,
            engine: r.engine,
            abstracted: r.abstracted,
            train_size: r.train_size,
            repeat: r.repeat,
            accuracy: r.accuracy,
            learn_time_s: r.learn_time.as_secs_f64(),
            timed_out: r.timed_out,
            program_clauses: r.program.as_ref().map(Program::len),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_and_standard_error() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-12);
        // sample sd = sqrt(5/3), se = sd / 2
        assert!((m.se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(MeanSe::of(&[0.7]), MeanSe { mean: 0.7, se: 0.0 });
        assert!(MeanSe::of(&[]).mean.is_nan());
    }

    #[test]
    fn no_program_predicts_false() {
        let spec = DomainSpec::bottom_up(Domain::Droplast, 1);
        let data = split(&spec, 1, 10, 0);
        let task = Domain::Droplast
            .task(data.train_pos, data.train_neg, true, standard_library())
            .unwrap();
        assert_eq!(accuracy(&task, None, &data.test_pos, &data.test_neg, 1000), 0.5);
        assert_eq!(
            accuracy(&task, None, &data.test_pos[..0], &data.test_neg[..4], 1000),
            1.0
        );
    }

    #[test]
    fn csv_columns() {
        let r = BenchResult {
            domain: Domain::Chess,
            engine: Engine::Fc,
            abstracted: true,
            train_size: 2,
            repeat: 1,
            accuracy: 0.75,
            learn_time: Duration::from_millis(1500),
            timed_out: false,
            program: None,
            sound: true,
            error: None,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "domain,engine,abstracted,train_size,repeat,accuracy,learn_time_s,timed_out,program_clauses\n\
             chess,fc,true,2,1,0.75,1.5,false,\n"
        );
    }

    #[test]
    fn parallel_runs_match_sequential() {
        let spec = DomainSpec::bottom_up(Domain::Droplast, 5);
        let mut cfg = BenchConfig {
            train_sizes: vec![1, 2],
            repeats: 2,
            test_size: 10,
            ..Default::default()
        };
        let seq = run_bench(&spec, &cfg);
        cfg.jobs = 3;
        let par = run_bench(&spec, &cfg);
        let key = |r: &BenchResult| {
            (
                r.train_size,
                r.repeat,
                r.accuracy,
                r.program.as_ref().map(|p| p.to_string()),
            )
        };
        assert_eq!(
            seq.iter().map(key).collect::<Vec<_>>(),
            par.iter().map(key).collect::<Vec<_>>()
        );
        assert!(seq.iter().all(|r| r.sound));
    }

    proptest! {
        #[test]
        fn standard_error_is_nonnegative(xs in proptest::collection::vec(0.0f64..1.0, 1..20)) {
            let m = MeanSe::of(&xs);
            prop_assert!(m.se >= 0.0);
            prop_assert!(m.mean >= 0.0 && m.mean <= 1.0);
        }

        #[test]
        fn cells_are_reproducible(seed in any::<u64>(), m in 1usize..4, r in 0usize..3) {
            let spec = DomainSpec::bottom_up(Domain::Encryption, seed);
            let (a, b) = (split(&spec, m, 3, r), split(&spec, m, 3, r));
            prop_assert_eq!(a.train_pos, b.train_pos);
            prop_assert_eq!(a.test_neg, b.test_neg);
        }
    }
}
