//! Top-down meta-interpretive learner.
//!
//! A proof machine with an explicit goal list, choice-point stack and
//! trailed binding store. Proving a goal tries, in order: compiled BK,
//! interpreted (higher-order) BK, reuse of an existing metarule
//! instantiation, and a fresh instantiation while the program is below the
//! size bound. Learning wraps the machine in iterative deepening over the
//! number of clauses, so the first program found is a smallest one.
//!
//! Built-ins that are called before enough arguments are bound are delayed
//! behind the next goal; this is what lets the function-free `cons/3`
//! definitions of `map/3` and friends run in both directions.

use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, info, trace};
use rustc_hash::FxHashMap as HashMap;

use crate::bk::{call_builtin, BkError, CompiledRegistry, Outcome};
use crate::ibk::HigherOrderDefinition;
use crate::logic::{deref, unify_atoms, unify_terms, Atom, Bindings, Clause, GroundValue, PredSym, Term, VarId};
use crate::metarule::Metarule;
use crate::program::{invented_name, Program, SubstitutionRecord};
use crate::task::{EngineConfig, LearningTask};

/// Invented symbols available at depth `d`: `name_1 .. name_{d-1}`.
pub fn invent_symbols(task_name: &str, d: usize) -> Vec<String> {
    (1..d).map(|i| invented_name(task_name, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOutcome {
    Found,
    /// Every program up to the clause bound was refuted.
    Exhausted,
    TimedOut,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    /// Deepest clause bound searched.
    pub depths_visited: usize,
    /// Candidate programs checked against the negatives.
    pub programs_tested: u64,
    pub steps: u64,
    /// Deductive proofs abandoned for exceeding the step budget.
    pub budget_exhaustions: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub program: Option<Program>,
    pub outcome: SearchOutcome,
    pub stats: SearchStats,
}

/// Result of evaluating a ground atom against a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    /// The proof ran out of budget or reached the depth limit; `holds` is then false.
    pub exhausted: bool,
}

const MAX_DELAYS: u8 = 32;

struct MetaInfo {
    span: u32,
    /// Body positions calling the head predicate.
    recursive: Vec<bool>,
}

struct IbkInfo {
    /// First first-order head position, compared by the recursion guard.
    guard_pos: Option<usize>,
}

struct Ctx<'a> {
    reg: &'a CompiledRegistry,
    ibk: Vec<Arc<HigherOrderDefinition>>,
    ibk_info: Vec<IbkInfo>,
    ibk_index: HashMap<Arc<str>, usize>,
    metarules: Vec<Arc<Metarule>>,
    meta_info: Vec<MetaInfo>,
    sig: Vec<Arc<str>>,
    sig_index: HashMap<Arc<str>, usize>,
    prims: Vec<PredSym>,
}

impl<'a> Ctx<'a> {
    fn new(
        reg: &'a CompiledRegistry,
        ibk: &[Arc<HigherOrderDefinition>],
        metarules: &[Arc<Metarule>],
        sig: Vec<String>,
    ) -> Self {
        let sig: Vec<Arc<str>> = sig.into_iter().map(Arc::from).collect();
        let sig_index = sig.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let meta_info = metarules
            .iter()
            .map(|m| MetaInfo {
                span: m.template.var_span(),
                recursive: m.template.body.iter().map(|b| b.pred == m.template.head.pred).collect(),
            })
            .collect();
        Ctx {
            reg,
            ibk_info: ibk
                .iter()
                .map(|d| IbkInfo {
                    guard_pos: d.ho_positions.iter().position(|h| !h),
                })
                .collect(),
            ibk_index: ibk.iter().enumerate().map(|(i, d)| (d.sym.name.clone(), i)).collect(),
            ibk: ibk.to_vec(),
            metarules: metarules.to_vec(),
            meta_info,
            sig,
            sig_index,
            prims: reg.prims().to_vec(),
        }
    }
}

#[derive(Default)]
struct Store {
    vals: Vec<Option<Term>>,
    trail: Vec<u32>,
}

impl Bindings for Store {
    fn lookup(&self, var: VarId) -> Option<&Term> {
        self.vals.get(var.0 as usize).and_then(Option::as_ref)
    }

    fn bind(&mut self, var: VarId, term: Term) {
        self.vals[var.0 as usize] = Some(term);
        self.trail.push(var.0);
    }
}

#[derive(Clone)]
enum Goal {
    Call {
        atom: Atom,
        floor: usize,
        depth: u32,
        delays: u8,
        anc: Anc,
    },
    /// A training example: tried deductively first, then abductively.
    Example(Atom),
    /// Recursion guard: fails if both terms are the same value.
    Distinct(Term, Term),
    /// Bind any existentials the proofs left open.
    GroundSubs,
    CheckNegatives,
}

struct Node {
    goal: Goal,
    next: Goals,
}

type Goals = Option<Rc<Node>>;

/// The chain of calls a goal descends from.
struct AncNode {
    atom: Atom,
    next: Anc,
}

type Anc = Option<Rc<AncNode>>;

fn cons(goal: Goal, next: Goals) -> Goals {
    Some(Rc::new(Node { goal, next }))
}

struct Sub {
    mr: usize,
    ex: Vec<Term>,
}

#[derive(Clone, Copy)]
struct Marks {
    trail: usize,
    vars: usize,
    prog: usize,
}

enum Alt {
    Start,
    Done,
    Once,
    User { p: PredSym, i: usize },
    Ibk { d: usize, i: usize },
    SymReuse { sym: usize, i: usize },
    SymNew { sym: usize, mr: usize },
    VarPrim { i: usize },
    VarIbk { d: usize },
    VarReuse { i: usize },
    VarNew { mr: usize, sym: usize },
    NafPrim { i: usize },
    Ground { var: VarId, i: usize },
}

enum Step {
    Go(Goals),
    Fail,
    Abort(RunResult),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunResult {
    Proved,
    Failed,
    Budget,
    Timeout,
}

struct ChoicePoint {
    node: Rc<Node>,
    alt: Alt,
    marks: Marks,
}

struct Machine<'c, 'a> {
    ctx: &'c Ctx<'a>,
    store: Store,
    prog: Vec<Sub>,
    max_subs: usize,
    abduce: bool,
    step_budget: u64,
    deadline: Option<Instant>,
    max_depth: u32,
    steps: u64,
    programs_tested: u64,
    budget_hits: u64,
    /// Calls abandoned at the proof-depth limit.
    depth_hits: u64,
    neg: Vec<Atom>,
}

impl<'c, 'a> Machine<'c, 'a> {
    fn new(ctx: &'c Ctx<'a>, cfg: &EngineConfig) -> Self {
        Machine {
            ctx,
            store: Store::default(),
            prog: Vec::new(),
            max_subs: 0,
            abduce: false,
            step_budget: cfg.step_budget,
            deadline: None,
            max_depth: cfg.max_proof_depth.min(u32::MAX as usize) as u32,
            steps: 0,
            programs_tested: 0,
            budget_hits: 0,
            depth_hits: 0,
            neg: Vec::new(),
        }
    }

    fn marks(&self) -> Marks {
        Marks {
            trail: self.store.trail.len(),
            vars: self.store.vals.len(),
            prog: self.prog.len(),
        }
    }

    fn undo(&mut self, m: Marks) {
        while self.store.trail.len() > m.trail {
            let v = self.store.trail.pop().unwrap();
            self.store.vals[v as usize] = None;
        }
        self.store.vals.truncate(m.vars);
        self.prog.truncate(m.prog);
    }

    fn alloc(&mut self, n: u32) -> u32 {
        let base = self.store.vals.len() as u32;
        self.store.vals.resize(base as usize + n as usize, None);
        base
    }

    fn resolve(&self, t: &Term) -> Term {
        deref(&self.store, t).clone()
    }

    fn install_program(&mut self, prog: &Program) {
        for rec in &prog.subs {
            let mr = self
                .ctx
                .metarules
                .iter()
                .position(|m| Arc::ptr_eq(m, &rec.metarule) || **m == *rec.metarule)
                .expect("program metarules are in context");
            self.prog.push(Sub {
                mr,
                ex: rec.symbols.iter().cloned().map(Term::Pred).collect(),
            });
        }
    }

    fn extract(&self) -> Program {
        let mut subs: Vec<(usize, SubstitutionRecord)> = self
            .prog
            .iter()
            .map(|s| {
                let symbols: Vec<PredSym> =
                    s.ex.iter()
                        .map(|t| match self.resolve(t) {
                            Term::Pred(p) => p,
                            other => panic!("unground existential {other:?}"),
                        })
                        .collect();
                let rank = self.ctx.sig_index.get(&symbols[0].name).copied().unwrap_or(usize::MAX);
                (
                    rank,
                    SubstitutionRecord {
                        metarule: self.ctx.metarules[s.mr].clone(),
                        symbols,
                    },
                )
            })
            .collect();
        subs.sort_by_key(|(rank, _)| *rank);
        Program::new(subs.into_iter().map(|(_, s)| s).collect())
    }

    fn run(&mut self, goals: Goals, budget: Option<u64>) -> RunResult {
        let base = self.marks();
        let start = self.steps;
        let mut stack: Vec<ChoicePoint> = Vec::new();
        let mut current = goals;
        loop {
            let Some(node) = current.take() else {
                return RunResult::Proved;
            };
            let marks = self.marks();
            let mut alt = Alt::Start;
            let mut step = self.advance(&node, &mut alt, marks);
            let mut node = node;
            let mut marks = marks;
            loop {
                self.steps += 1;
                if budget.is_some_and(|b| self.steps - start > b) {
                    self.undo(base);
                    self.budget_hits += 1;
                    return RunResult::Budget;
                }
                if self.steps.is_multiple_of(1024) && self.deadline.is_some_and(|d| Instant::now() >= d) {
                    self.undo(base);
                    return RunResult::Timeout;
                }
                match step {
                    Step::Go(next) => {
                        if !matches!(alt, Alt::Done) {
                            stack.push(ChoicePoint { node, alt, marks });
                        }
                        current = next;
                        break;
                    }
                    Step::Abort(r) => {
                        self.undo(base);
                        return r;
                    }
                    Step::Fail => match stack.pop() {
                        None => {
                            self.undo(base);
                            return RunResult::Failed;
                        }
                        Some(cp) => {
                            self.undo(cp.marks);
                            node = cp.node;
                            alt = cp.alt;
                            marks = cp.marks;
                            step = self.advance(&node, &mut alt, marks);
                        }
                    },
                }
            }
        }
    }

    fn advance(&mut self, node: &Rc<Node>, alt: &mut Alt, marks: Marks) -> Step {
        let ctx = self.ctx;
        loop {
            match std::mem::replace(alt, Alt::Done) {
                Alt::Done => return Step::Fail,
                Alt::Start => *alt = self.dispatch(node),
                Alt::Once => return self.once(node),
                Alt::User { p, i } => {
                    let idx = ctx.reg.user_clauses(&p).unwrap_or(&[]);
                    let Some(&ci) = idx.get(i) else { return Step::Fail };
                    *alt = Alt::User { p, i: i + 1 };
                    match self.resolve_clause(node, ctx.reg.clause(ci), None) {
                        Some(g) => return Step::Go(g),
                        None => self.undo(marks),
                    }
                }
                Alt::Ibk { d, i } => {
                    let def = &ctx.ibk[d];
                    let Some(c) = def.clauses.get(i) else { return Step::Fail };
                    *alt = Alt::Ibk { d, i: i + 1 };
                    match self.resolve_clause(node, c, ctx.ibk_info[d].guard_pos) {
                        Some(g) => return Step::Go(g),
                        None => self.undo(marks),
                    }
                }
                Alt::SymReuse { sym, i } => {
                    let Some(s) = self.prog.get(i) else {
                        if self.abduce && self.prog.len() < self.max_subs {
                            *alt = Alt::SymNew { sym, mr: 0 };
                        }
                        continue;
                    };
                    *alt = Alt::SymReuse { sym, i: i + 1 };
                    let (a, _, _) = self.call_parts(node);
                    let head_ok = matches!(self.resolve(&s.ex[0]), Term::Pred(ref q) if q.name == ctx.sig[sym] && q.arity == a.args.len());
                    if !head_ok {
                        continue;
                    }
                    match self.instantiate(node, s.mr, Some(i), None, sym) {
                        Some(g) => return Step::Go(g),
                        None => self.undo(marks),
                    }
                }
                Alt::SymNew { sym, mr } => {
                    let Some(m) = ctx.metarules.get(mr) else {
                        return Step::Fail;
                    };
                    *alt = Alt::SymNew { sym, mr: mr + 1 };
                    let (a, _, _) = self.call_parts(node);
                    if m.head_arity() != a.args.len() {
                        continue;
                    }
                    match self.instantiate(node, mr, None, None, sym) {
                        Some(g) => return Step::Go(g),
                        None => self.undo(marks),
                    }
                }
                Alt::VarPrim { i } => {
                    let (a, _, _) = self.call_parts(node);
                    let n = a.args.len();
                    let Some(p) = ctx.prims.get(i) else {
                        *alt = Alt::VarIbk { d: 0 };
                        continue;
                    };
                    *alt = Alt::VarPrim { i: i + 1 };
                    if p.arity != n {
                        continue;
                    }
                    let pred = a.pred.clone();
                    if !unify_terms(&mut self.store, &pred, &Term::Pred(p.clone())) || self.duplicate_subs() {
                        self.undo(marks);
                        continue;
                    }
                    match ctx.reg.builtin(p) {
                        Some(b) => {
                            let args = self.arg_values(node);
                            let refs: Vec<Option<&GroundValue>> = args.iter().map(Option::as_ref).collect();
                            match call_builtin(b, &refs) {
                                Outcome::Solved(vs) => {
                                    if self.bind_args(node, vs) {
                                        return Step::Go(node.next.clone());
                                    }
                                    self.undo(marks);
                                }
                                Outcome::Fail | Outcome::Insufficient => self.undo(marks),
                            }
                        }
                        None => return Step::Go(self.redispatch(node)),
                    }
                }
                Alt::VarIbk { d } => {
                    let (a, _, _) = self.call_parts(node);
                    let Some(def) = ctx.ibk.get(d) else {
                        *alt = Alt::VarReuse { i: 0 };
                        continue;
                    };
                    *alt = Alt::VarIbk { d: d + 1 };
                    if def.sym.arity != a.args.len() {
                        continue;
                    }
                    let pred = a.pred.clone();
                    if unify_terms(&mut self.store, &pred, &Term::Pred(def.sym.clone())) && !self.duplicate_subs() {
                        return Step::Go(self.redispatch(node));
                    }
                    self.undo(marks);
                }
                Alt::VarReuse { i } => {
                    let (a, floor, _) = self.call_parts(node);
                    let n = a.args.len();
                    let Some(s) = self.prog.get(i) else {
                        if self.abduce && self.prog.len() < self.max_subs {
                            *alt = Alt::VarNew { mr: 0, sym: floor + 1 };
                        }
                        continue;
                    };
                    *alt = Alt::VarReuse { i: i + 1 };
                    let Term::Pred(q) = self.resolve(&s.ex[0]) else {
                        continue;
                    };
                    let Some(&sym) = ctx.sig_index.get(&q.name) else {
                        continue;
                    };
                    if sym <= floor || q.arity != n {
                        continue;
                    }
                    match self.instantiate(node, s.mr, Some(i), None, sym) {
                        Some(g) => return Step::Go(g),
                        None => self.undo(marks),
                    }
                }
                Alt::VarNew { mr, sym } => {
                    let (a, floor, _) = self.call_parts(node);
                    let n = a.args.len();
                    if mr >= ctx.metarules.len() {
                        return Step::Fail;
                    }
                    if sym >= ctx.sig.len() {
                        *alt = Alt::VarNew {
                            mr: mr + 1,
                            sym: floor + 1,
                        };
                        continue;
                    }
                    *alt = Alt::VarNew { mr, sym: sym + 1 };
                    if ctx.metarules[mr].head_arity() != n || !self.arity_free(sym, n) {
                        continue;
                    }
                    let p = PredSym {
                        name: ctx.sig[sym].clone(),
                        arity: n,
                    };
                    match self.instantiate(node, mr, None, Some(p), sym) {
                        Some(g) => return Step::Go(g),
                        None => self.undo(marks),
                    }
                }
                Alt::NafPrim { i } => {
                    let (a, _, _) = self.call_parts(node);
                    let Some(p) = ctx.prims.get(i) else { return Step::Fail };
                    *alt = Alt::NafPrim { i: i + 1 };
                    if p.arity != a.args.len() {
                        continue;
                    }
                    let pred = a.pred.clone();
                    if !unify_terms(&mut self.store, &pred, &Term::Pred(p.clone())) || self.duplicate_subs() {
                        self.undo(marks);
                        continue;
                    }
                    match self.negation(node, p) {
                        Naf::Holds => return Step::Go(node.next.clone()),
                        Naf::Fails | Naf::Insufficient => self.undo(marks),
                        Naf::Abort(r) => return Step::Abort(r),
                    }
                }
                Alt::Ground { var, i } => {
                    let Some((p, _)) = self.ground_candidate(i) else {
                        return Step::Fail;
                    };
                    *alt = Alt::Ground { var, i: i + 1 };
                    if unify_terms(&mut self.store, &Term::HoVar(var), &Term::Pred(p)) && !self.duplicate_subs() {
                        return Step::Go(Some(node.clone()));
                    }
                    self.undo(marks);
                }
            }
        }
    }

    /// Whether two calls are variants: equal up to a renaming of their
    /// unbound variables.
    fn same_call(&self, a: &Atom, b: &Atom) -> bool {
        if a.negated != b.negated || a.args.len() != b.args.len() {
            return false;
        }
        let mut renaming: Vec<(VarId, VarId)> = Vec::new();
        let mut same = |x: &Term, y: &Term| {
            let (x, y) = (deref(&self.store, x), deref(&self.store, y));
            match (x, y) {
                (Term::FoVar(u), Term::FoVar(v)) | (Term::HoVar(u), Term::HoVar(v)) => {
                    match renaming.iter().find(|(p, q)| p == u || q == v) {
                        Some(pair) => *pair == (*u, *v),
                        None => {
                            renaming.push((*u, *v));
                            true
                        }
                    }
                }
                _ => x == y && x.var_id().is_none(),
            }
        };
        same(&a.pred, &b.pred) && a.args.iter().zip(&b.args).all(|(x, y)| same(x, y))
    }

    /// Loop check: a call that is a variant, under the current bindings, of
    /// one of its ancestors. Terms are function-free, so a proof through it
    /// can be shortened by using the repeated call's subproof for the
    /// ancestor, and pruning loses no answers.
    fn repeats_ancestor(&self, node: &Node) -> bool {
        let Goal::Call { atom, anc, .. } = &node.goal else {
            return false;
        };
        let mut cur = anc.as_deref();
        while let Some(a) = cur {
            if self.same_call(&a.atom, atom) {
                return true;
            }
            cur = a.next.as_deref();
        }
        false
    }

    fn parent(&self, node: &Node) -> Anc {
        let Goal::Call { atom, anc, .. } = &node.goal else {
            return None;
        };
        Some(Rc::new(AncNode {
            atom: atom.clone(),
            next: anc.clone(),
        }))
    }

    fn call_parts<'n>(&self, node: &'n Node) -> (&'n Atom, usize, u32) {
        match &node.goal {
            Goal::Call { atom, floor, depth, .. } => (atom, *floor, *depth),
            _ => unreachable!("not a call"),
        }
    }

    fn dispatch(&mut self, node: &Rc<Node>) -> Alt {
        let ctx = self.ctx;
        match &node.goal {
            Goal::Call { atom, depth, .. } => {
                if *depth > self.max_depth {
                    self.depth_hits += 1;
                    return Alt::Done;
                }
                let pred = self.resolve(&atom.pred);
                if atom.negated {
                    return match pred {
                        Term::HoVar(_) if self.args_ground(atom) => Alt::NafPrim { i: 0 },
                        _ => Alt::Once,
                    };
                }
                match pred {
                    Term::Pred(p) => {
                        if p.arity != atom.args.len() {
                            Alt::Done
                        } else if ctx.reg.builtin(&p).is_some() {
                            Alt::Once
                        } else if ctx.reg.user_clauses(&p).is_some() {
                            Alt::User { p, i: 0 }
                        } else if let Some(&d) = ctx.ibk_index.get(&p.name) {
                            Alt::Ibk { d, i: 0 }
                        } else if let Some(&sym) = ctx.sig_index.get(&p.name) {
                            Alt::SymReuse { sym, i: 0 }
                        } else {
                            Alt::Done
                        }
                    }
                    Term::HoVar(_) => Alt::VarPrim { i: 0 },
                    _ => Alt::Done,
                }
            }
            Goal::GroundSubs => {
                let open = self
                    .prog
                    .iter()
                    .flat_map(|s| s.ex.iter())
                    .find_map(|t| match self.resolve(t) {
                        Term::HoVar(v) => Some(v),
                        _ => None,
                    });
                match open {
                    Some(var) => Alt::Ground { var, i: 0 },
                    None => Alt::Once,
                }
            }
            _ => Alt::Once,
        }
    }

    /// Deterministic goals.
    fn once(&mut self, node: &Rc<Node>) -> Step {
        let ctx = self.ctx;
        match &node.goal {
            Goal::Call { atom, .. } => {
                let pred = self.resolve(&atom.pred);
                let Term::Pred(p) = pred else {
                    // negated call on an unbound predicate with open arguments
                    return self.delay(node);
                };
                if atom.negated {
                    return match self.negation(node, &p) {
                        Naf::Holds => Step::Go(node.next.clone()),
                        Naf::Fails => Step::Fail,
                        Naf::Insufficient => self.delay(node),
                        Naf::Abort(r) => Step::Abort(r),
                    };
                }
                let b = ctx.reg.builtin(&p).expect("dispatched as built-in");
                let args = self.arg_values(node);
                let refs: Vec<Option<&GroundValue>> = args.iter().map(Option::as_ref).collect();
                match call_builtin(b, &refs) {
                    Outcome::Solved(vs) => {
                        if self.bind_args(node, vs) {
                            Step::Go(node.next.clone())
                        } else {
                            Step::Fail
                        }
                    }
                    Outcome::Fail => Step::Fail,
                    Outcome::Insufficient => self.delay(node),
                }
            }
            Goal::Distinct(a, b) => {
                let (a, b) = (self.resolve(a), self.resolve(b));
                match (&a, &b) {
                    (Term::Value(x), Term::Value(y)) if x == y => Step::Fail,
                    _ => Step::Go(node.next.clone()),
                }
            }
            Goal::Example(atom) => {
                let call = Goal::Call {
                    atom: atom.clone(),
                    floor: 0,
                    depth: 0,
                    delays: 0,
                    anc: None,
                };
                let before = self.marks();
                let saved = self.abduce;
                self.abduce = false;
                // With no room for another clause, abduction could only repeat
                // this deductive proof, so it gets the whole step budget and
                // its verdict is final. Otherwise a short deductive attempt
                // comes first and abduction takes over if it fails.
                let full = self.prog.len() >= self.max_subs;
                let budget = if full {
                    self.step_budget
                } else {
                    (self.step_budget / 50).max(1000)
                };
                let r = self.run(cons(call.clone(), None), Some(budget));
                self.abduce = saved;
                match r {
                    RunResult::Proved => {
                        let touched = self.store.trail[before.trail..]
                            .iter()
                            .any(|v| (*v as usize) < before.vars);
                        if !touched {
                            return Step::Go(node.next.clone());
                        }
                        self.undo(before);
                        Step::Go(cons(call, node.next.clone()))
                    }
                    RunResult::Timeout => Step::Abort(RunResult::Timeout),
                    _ if full => Step::Fail,
                    _ => Step::Go(cons(call, node.next.clone())),
                }
            }
            Goal::GroundSubs => {
                let resolved: Vec<(usize, Vec<Term>)> = self
                    .prog
                    .iter()
                    .map(|s| (s.mr, s.ex.iter().map(|t| self.resolve(t)).collect()))
                    .collect();
                let dup = resolved.iter().enumerate().any(|(i, a)| resolved[..i].contains(a));
                if dup {
                    Step::Fail
                } else {
                    Step::Go(node.next.clone())
                }
            }
            Goal::CheckNegatives => {
                self.programs_tested += 1;
                let saved = self.abduce;
                self.abduce = false;
                let negs = std::mem::take(&mut self.neg);
                let mut verdict = Step::Go(node.next.clone());
                for n in &negs {
                    let m = self.marks();
                    let call = Goal::Call {
                        atom: n.clone(),
                        floor: 0,
                        depth: 0,
                        delays: 0,
                        anc: None,
                    };
                    let cut = self.depth_hits;
                    let r = self.run(cons(call, None), Some(self.step_budget));
                    self.undo(m);
                    match r {
                        // a refutation cut short at the depth limit is no refutation
                        RunResult::Failed if self.depth_hits == cut => {}
                        RunResult::Timeout => {
                            verdict = Step::Abort(RunResult::Timeout);
                            break;
                        }
                        RunResult::Proved | RunResult::Budget | RunResult::Failed => {
                            verdict = Step::Fail;
                            break;
                        }
                    }
                }
                self.neg = negs;
                self.abduce = saved;
                verdict
            }
        }
    }

    fn delay(&self, node: &Rc<Node>) -> Step {
        let Goal::Call {
            atom,
            floor,
            depth,
            delays,
            anc,
        } = &node.goal
        else {
            return Step::Fail;
        };
        if *delays >= MAX_DELAYS {
            return Step::Fail;
        }
        match &node.next {
            Some(n) if matches!(n.goal, Goal::Call { .. }) => {
                let me = Goal::Call {
                    atom: atom.clone(),
                    floor: *floor,
                    depth: *depth,
                    delays: delays + 1,
                    anc: anc.clone(),
                };
                Step::Go(cons(n.goal.clone(), cons(me, n.next.clone())))
            }
            _ => Step::Fail,
        }
    }

    /// Two clauses of the program have become identical. Proofs through
    /// either copy are interchangeable, so the duplicate only multiplies
    /// the search.
    fn duplicate_subs(&self) -> bool {
        self.prog.iter().enumerate().any(|(i, a)| {
            self.prog[..i].iter().any(|b| {
                a.mr == b.mr
                    && a.ex.iter().zip(&b.ex).all(|(x, y)| {
                        let (x, y) = (self.resolve(x), self.resolve(y));
                        !x.is_var() && x == y
                    })
            })
        })
    }

    fn redispatch(&self, node: &Rc<Node>) -> Goals {
        cons(node.goal.clone(), node.next.clone())
    }

    fn args_ground(&self, atom: &Atom) -> bool {
        atom.args.iter().all(|t| !self.resolve(t).is_var())
    }

    fn arg_values(&self, node: &Node) -> Vec<Option<GroundValue>> {
        let (atom, _, _) = self.call_parts(node);
        atom.args
            .iter()
            .map(|t| match self.resolve(t) {
                Term::Value(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    fn bind_args(&mut self, node: &Node, vs: Vec<GroundValue>) -> bool {
        let (atom, _, _) = self.call_parts(node);
        atom.args
            .iter()
            .zip(vs)
            .all(|(t, v)| unify_terms(&mut self.store, t, &Term::Value(v)))
    }

    /// Whether symbol `sym` is unused or already used with arity `n`.
    fn arity_free(&self, sym: usize, n: usize) -> bool {
        let name = &self.ctx.sig[sym];
        self.prog.iter().all(|s| match self.resolve(&s.ex[0]) {
            Term::Pred(q) => &q.name != name || q.arity == n,
            _ => true,
        })
    }

    fn negation(&mut self, node: &Rc<Node>, p: &PredSym) -> Naf {
        let ctx = self.ctx;
        let (atom, _, _) = self.call_parts(node);
        if !self.args_ground(atom) {
            return Naf::Insufficient;
        }
        if let Some(b) = ctx.reg.builtin(p) {
            let args = self.arg_values(node);
            let refs: Vec<Option<&GroundValue>> = args.iter().map(Option::as_ref).collect();
            return match call_builtin(b, &refs) {
                Outcome::Fail => Naf::Holds,
                Outcome::Solved(_) => Naf::Fails,
                Outcome::Insufficient => Naf::Insufficient,
            };
        }
        if ctx.reg.user_clauses(p).is_none() {
            debug!("negation of non-compiled {p} refused");
            return Naf::Fails;
        }
        let positive = Atom {
            pred: Term::Pred(p.clone()),
            args: atom.args.iter().map(|t| self.resolve(t)).collect(),
            negated: false,
        };
        let m = self.marks();
        let saved = self.abduce;
        self.abduce = false;
        let r = self.run(
            cons(
                Goal::Call {
                    atom: positive,
                    floor: 0,
                    depth: 0,
                    delays: 0,
                    anc: None,
                },
                None,
            ),
            Some(self.step_budget),
        );
        self.abduce = saved;
        self.undo(m);
        match r {
            RunResult::Failed => Naf::Holds,
            RunResult::Timeout => Naf::Abort(RunResult::Timeout),
            RunResult::Proved | RunResult::Budget => Naf::Fails,
        }
    }

    /// Rename `clause` apart, unify its head with the call and queue its body.
    fn resolve_clause(&mut self, node: &Rc<Node>, clause: &Clause, guard_pos: Option<usize>) -> Option<Goals> {
        let (atom, floor, depth) = self.call_parts(node);
        if self.repeats_ancestor(node) {
            return None;
        }
        let base = self.alloc(clause.var_span());
        let head = clause.head.offset(base);
        if !unify_atoms(&mut self.store, &head, atom) {
            return None;
        }
        let parent = self.parent(node);
        let mut goals = node.next.clone();
        for b in clause.body.iter().rev() {
            let lit = b.offset(base);
            let recursive = guard_pos.is_some() && lit.pred == head.pred;
            let guard = guard_pos
                .filter(|_| recursive)
                .map(|g| (head.args[g].clone(), lit.args[g].clone()));
            goals = cons(
                Goal::Call {
                    atom: lit,
                    floor,
                    depth: depth + 1,
                    delays: 0,
                    anc: parent.clone(),
                },
                goals,
            );
            if let Some((a, b)) = guard {
                goals = cons(Goal::Distinct(a, b), goals);
            }
        }
        Some(goals)
    }

    /// Instantiate metarule `mr` for the call, reusing sub `reuse` or adding a
    /// new sub whose head is `head` (or the call's own predicate).
    fn instantiate(
        &mut self,
        node: &Rc<Node>,
        mr: usize,
        reuse: Option<usize>,
        head: Option<PredSym>,
        sym: usize,
    ) -> Option<Goals> {
        let ctx = self.ctx;
        let (atom, _, depth) = self.call_parts(node);
        let m = &ctx.metarules[mr];
        let info = &ctx.meta_info[mr];
        let base = self.alloc(info.span);
        let ex: Vec<Term> = match reuse {
            Some(i) => self.prog[i].ex.clone(),
            None => m.existentials.iter().map(|e| Term::HoVar(VarId(base + e.0))).collect(),
        };
        let map_term = |t: &Term| -> Term {
            match t.var_id() {
                Some(v) => match m.existentials.iter().position(|e| *e == v) {
                    Some(k) => ex[k].clone(),
                    None => t.offset(base),
                },
                None => t.clone(),
            }
        };
        let map_atom = |a: &Atom| Atom {
            pred: map_term(&a.pred),
            args: a.args.iter().map(map_term).collect(),
            negated: a.negated,
        };
        let h = map_atom(&m.template.head);
        if let Some(p) = head {
            if !unify_terms(&mut self.store, &ex[0], &Term::Pred(p)) {
                return None;
            }
        }
        if !unify_atoms(&mut self.store, &h, atom) || self.repeats_ancestor(node) || self.duplicate_subs() {
            return None;
        }
        let parent = self.parent(node);
        let body: Vec<Atom> = m.template.body.iter().map(map_atom).collect();
        if reuse.is_none() {
            self.prog.push(Sub { mr, ex });
        }
        let mut goals = node.next.clone();
        for (lit, rec) in body.into_iter().zip(&info.recursive).rev() {
            let guard = (*rec).then(|| (h.args[0].clone(), lit.args[0].clone()));
            goals = cons(
                Goal::Call {
                    atom: lit,
                    floor: sym,
                    depth: depth + 1,
                    delays: 0,
                    anc: parent.clone(),
                },
                goals,
            );
            if let Some((a, b)) = guard {
                goals = cons(Goal::Distinct(a, b), goals);
            }
        }
        Some(goals)
    }

    /// Candidates for an existential no proof constrained: primitives,
    /// higher-order definitions, then program symbols.
    fn ground_candidate(&self, i: usize) -> Option<(PredSym, ())> {
        let ctx = self.ctx;
        let mut k = i;
        if k < ctx.prims.len() {
            return Some((ctx.prims[k].clone(), ()));
        }
        k -= ctx.prims.len();
        if k < ctx.ibk.len() {
            return Some((ctx.ibk[k].sym.clone(), ()));
        }
        k -= ctx.ibk.len();
        let mut heads: Vec<PredSym> = Vec::new();
        for s in &self.prog {
            if let Term::Pred(p) = self.resolve(&s.ex[0]) {
                if !heads.contains(&p) {
                    heads.push(p);
                }
            }
        }
        heads.into_iter().nth(k).map(|p| (p, ()))
    }
}

enum Naf {
    Holds,
    Fails,
    Insufficient,
    Abort(RunResult),
}

fn call_goal(atom: Atom) -> Goal {
    Goal::Call {
        atom,
        floor: 0,
        depth: 0,
        delays: 0,
        anc: None,
    }
}

fn goals_of(goals: Vec<Goal>) -> Goals {
    goals.into_iter().rev().fold(None, |next, g| cons(g, next))
}

/// Learn a program by iterative deepening on the number of clauses.
/// Positives smallest first: a program grown on small states is cheap to
/// refute, whereas a wrong guess inside a long `until` run backtracks over
/// every step.
fn by_size(pos: &[Atom]) -> Vec<Atom> {
    let size = |a: &Atom| {
        a.args
            .iter()
            .filter_map(Term::as_value)
            .map(GroundValue::size)
            .sum::<usize>()
    };
    let mut out = pos.to_vec();
    out.sort_by_key(size);
    out
}

pub fn learn(task: &LearningTask, cfg: &EngineConfig) -> Learned {
    let start = Instant::now();
    let deadline = start.checked_add(cfg.wall_timeout);
    let mut stats = SearchStats::default();
    let mut outcome = SearchOutcome::Exhausted;
    let mut program = None;
    for d in 1..=cfg.max_clauses {
        let mut sig = vec![task.target.name.to_string()];
        sig.extend(invent_symbols(&task.target.name, d));
        let ctx = Ctx::new(&task.registry, &task.ibk, &task.metarules, sig);
        let mut m = Machine::new(&ctx, cfg);
        m.max_subs = d;
        m.abduce = true;
        m.deadline = deadline;
        m.neg = task.neg.clone();
        let mut goals: Vec<Goal> = by_size(&task.pos).into_iter().map(Goal::Example).collect();
        goals.push(Goal::GroundSubs);
        goals.push(Goal::CheckNegatives);
        trace!("depth {d}: searching");
        let r = m.run(goals_of(goals), None);
        stats.depths_visited = d;
        stats.programs_tested += m.programs_tested;
        stats.steps += m.steps;
        stats.budget_exhaustions += m.budget_hits;
        match r {
            RunResult::Proved => {
                let p = m.extract();
                info!("found {} clause program at depth {d}", p.len());
                program = Some(p);
                outcome = SearchOutcome::Found;
                break;
            }
            RunResult::Timeout => {
                info!("timed out at depth {d}");
                outcome = SearchOutcome::TimedOut;
                break;
            }
            RunResult::Failed | RunResult::Budget => debug!("depth {d} exhausted"),
        }
    }
    stats.wall_time = start.elapsed();
    Learned {
        program,
        outcome,
        stats,
    }
}

/// Extend `prog` so that every goal is provable, adding at most
/// `max_clauses - prog.len()` new clauses. Returns `None` on failure.
pub fn prove(task: &LearningTask, goals: &[Atom], prog: &Program, cfg: &EngineConfig) -> Option<Program> {
    let mut sig = vec![task.target.name.to_string()];
    sig.extend(invent_symbols(&task.target.name, cfg.max_clauses));
    for p in prog.defined() {
        if !sig.iter().any(|s| *s == *p.name) {
            sig.push(p.name.to_string());
        }
    }
    let mut metarules = task.metarules.clone();
    for rec in &prog.subs {
        if !metarules.iter().any(|m| **m == *rec.metarule) {
            metarules.push(rec.metarule.clone());
        }
    }
    let ctx = Ctx::new(&task.registry, &task.ibk, &metarules, sig);
    let mut m = Machine::new(&ctx, cfg);
    m.install_program(prog);
    m.max_subs = cfg.max_clauses;
    m.abduce = true;
    m.deadline = Instant::now().checked_add(cfg.wall_timeout);
    let span = goals
        .iter()
        .flat_map(|a| a.terms())
        .filter_map(Term::var_id)
        .map(|v| v.0 + 1)
        .max()
        .unwrap_or(0);
    m.alloc(span);
    let mut gs: Vec<Goal> = goals.iter().cloned().map(call_goal).collect();
    gs.push(Goal::GroundSubs);
    match m.run(goals_of(gs), None) {
        RunResult::Proved => Some(m.extract()),
        _ => None,
    }
}

/// Decide whether a ground atom follows from `prog` and the background knowledge.
pub fn eval(
    prog: &Program,
    atom: &Atom,
    registry: &CompiledRegistry,
    ibk: &[Arc<HigherOrderDefinition>],
    budget: u64,
) -> Verdict {
    let mut sig: Vec<String> = Vec::new();
    if let Some(p) = atom.pred_sym() {
        sig.push(p.name.to_string());
    }
    for p in prog.defined() {
        if !sig.iter().any(|s| *s == *p.name) {
            sig.push(p.name.to_string());
        }
    }
    let mut metarules: Vec<Arc<Metarule>> = Vec::new();
    for rec in &prog.subs {
        if !metarules.iter().any(|m| **m == *rec.metarule) {
            metarules.push(rec.metarule.clone());
        }
    }
    let ctx = Ctx::new(registry, ibk, &metarules, sig);
    let cfg = EngineConfig {
        step_budget: budget,
        ..EngineConfig::default()
    };
    let mut m = Machine::new(&ctx, &cfg);
    m.install_program(prog);
    let span = atom
        .terms()
        .filter_map(Term::var_id)
        .map(|v| v.0 + 1)
        .max()
        .unwrap_or(0);
    m.alloc(span);
    match m.run(cons(call_goal(atom.clone()), None), Some(budget)) {
        RunResult::Proved => Verdict {
            holds: true,
            exhausted: false,
        },
        RunResult::Budget => Verdict {
            holds: false,
            exhausted: true,
        },
        RunResult::Failed if m.depth_hits > 0 => Verdict {
            holds: false,
            exhausted: true,
        },
        _ => Verdict {
            holds: false,
            exhausted: false,
        },
    }
}

/// First solution of a call to user-defined compiled BK.
pub(crate) fn solve_compiled(atom: &Atom, registry: &CompiledRegistry) -> Result<Option<Vec<GroundValue>>, BkError> {
    let ctx = Ctx::new(registry, &[], &[], Vec::new());
    let cfg = EngineConfig::default();
    let mut m = Machine::new(&ctx, &cfg);
    let span = atom
        .terms()
        .filter_map(Term::var_id)
        .map(|v| v.0 + 1)
        .max()
        .unwrap_or(0);
    m.alloc(span);
    match m.run(cons(call_goal(atom.clone()), None), Some(cfg.step_budget)) {
        RunResult::Proved => {
            let mut out = Vec::new();
            for t in &atom.args {
                match m.resolve(t) {
                    Term::Value(v) => out.push(v),
                    _ => return Err(BkError::Insufficient(crate::syntax::print_atom(atom))),
                }
            }
            Ok(Some(out))
        }
        RunResult::Budget => Err(BkError::Budget(crate::syntax::print_atom(atom))),
        _ => Ok(None),
    }
}
