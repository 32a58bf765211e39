//! Bottom-up learner.
//!
//! Background knowledge is imported into a store guarded by a set of
//! reachable states, which starts as the terms occurring in the examples and
//! grows as built-ins produce new values. Programs are assembled one
//! predicate at a time: the innermost invented predicate first and the
//! target last, so every body symbol already has a relation by the time a
//! clause refers to it. Higher-order definitions are evaluated natively over
//! those relations.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::rc::Rc;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::bk::{call_builtin, eval_compiled, Builtin, CompiledRegistry, Outcome};
use crate::ibk::{ibk_library, HigherOrderDefinition};
use crate::logic::{Atom, GroundValue, PredSym, Term, VarId};
use crate::metarule::Metarule;
use crate::mi::{eval, SearchOutcome};
use crate::program::{invented_name, Program, SubstitutionRecord};
use crate::task::{EngineConfig, LearningTask};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FcError {
    #[error("metarules not forward-chained: {}", .0.join(", "))]
    NotForwardChained(Vec<String>),
    #[error("metarule `{0}` recurses somewhere other than its last literal")]
    UnsupportedMetarule(String),
    #[error("no bottom-up evaluation for `{0}` (supported: map, until, ifthenelse, reduceback)")]
    UnsupportedIbk(String),
    #[error("target {0} must be binary")]
    TargetArity(String),
    #[error("{cap} cap of {limit} exceeded")]
    Resource { cap: &'static str, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcLimits {
    pub max_states: usize,
    pub max_facts: usize,
    /// Saturation expands states at most this many derivation steps from an example term.
    pub max_generation: u32,
    /// States on which candidate relations are compared.
    pub probes: usize,
}

impl Default for FcLimits {
    fn default() -> Self {
        FcLimits {
            max_states: 50_000,
            max_facts: 500_000,
            max_generation: 8,
            probes: 512,
        }
    }
}

/// A ground BK fact `P(a)` or `P(a,b)` imported at a state `a`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Deduced {
    pub pred: PredSym,
    pub args: Vec<GroundValue>,
}

/// `def(input, output, ho...)` with predicate arguments drawn from the signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IbkFact {
    pub def: PredSym,
    pub input: GroundValue,
    pub output: GroundValue,
    pub ho: Vec<PredSym>,
}

#[derive(Debug, Clone, Default)]
pub struct DeducedStore {
    states: Vec<GroundValue>,
    ids: HashMap<GroundValue, u32>,
    generation: Vec<u32>,
    deduced: Vec<Deduced>,
    ibk_facts: Vec<IbkFact>,
}

impl DeducedStore {
    pub fn states(&self) -> &[GroundValue] {
        &self.states
    }

    pub fn is_state(&self, v: &GroundValue) -> bool {
        self.ids.contains_key(v)
    }

    pub fn deduced(&self) -> &[Deduced] {
        &self.deduced
    }

    pub fn ibk_facts(&self) -> &[IbkFact] {
        &self.ibk_facts
    }

    pub fn fact_count(&self) -> usize {
        self.deduced.len() + self.ibk_facts.len()
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DepthStats {
    pub symbols: usize,
    pub clauses: usize,
    /// Metarule instantiations generated at this depth.
    pub instantiations: u64,
    pub programs_tested: u64,
    pub states: usize,
    /// Saturated facts plus facts derived on demand during the search.
    pub facts: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FcStats {
    pub saturated_states: usize,
    pub saturated_facts: usize,
    pub depths: Vec<DepthStats>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct FcLearned {
    pub program: Option<Program>,
    pub outcome: SearchOutcome,
    pub stats: FcStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Native {
    Map,
    Until,
    IfThenElse,
    Reduceback,
}

fn native_of(def: &HigherOrderDefinition) -> Result<Native, FcError> {
    let kind = match def.name() {
        "map" => Native::Map,
        "until" => Native::Until,
        "ifthenelse" => Native::IfThenElse,
        "reduceback" => Native::Reduceback,
        other => return Err(FcError::UnsupportedIbk(other.to_string())),
    };
    // a user definition reusing the name must mean the same thing
    let lib = ibk_library();
    match lib.iter().find(|d| d.name() == def.name()) {
        Some(d) if **d == *def => Ok(kind),
        _ => Err(FcError::UnsupportedIbk(def.name().to_string())),
    }
}

/// Arity with which each higher-order position (in order) is called.
fn ho_arities(def: &HigherOrderDefinition) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, ho) in def.ho_positions.iter().enumerate() {
        if !ho {
            continue;
        }
        let arity = def
            .clauses
            .iter()
            .find_map(|c| {
                let v = c.head.args[i].var_id()?;
                c.body.iter().find(|b| b.pred.var_id() == Some(v)).map(|b| b.args.len())
            })
            .unwrap_or(2);
        out.push(arity);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Sym {
    Prim(u32),
    Ibk(u32),
    /// Index 0 is the target.
    Inv(u32),
}

#[derive(Debug)]
enum Op {
    Test {
        slot: usize,
        var: usize,
    },
    Step {
        slot: usize,
        from: usize,
        to: usize,
    },
    Rec {
        from: usize,
    },
    Ibk {
        slot: usize,
        from: usize,
        to: usize,
        ho: Vec<usize>,
        pattern: Vec<bool>,
    },
}

/// A metarule body compiled to a left-to-right evaluation plan.
#[derive(Debug)]
struct Shape {
    mr: Arc<Metarule>,
    ops: Vec<Op>,
    nvars: usize,
    out: usize,
    recursive: bool,
}

fn compile(mr: &Arc<Metarule>) -> Result<Shape, FcError> {
    let unsupported = || FcError::UnsupportedMetarule(mr.name.clone());
    let fo = |t: &Term| match t {
        Term::FoVar(v) => Some(*v),
        _ => None,
    };
    let head: Vec<VarId> = mr.template.head.args.iter().filter_map(fo).collect();
    let mut vars: HashMap<VarId, usize> = HashMap::new();
    vars.insert(head[0], 0);
    vars.insert(head[1], 1);
    let slot_of = |t: &Term| match t {
        Term::HoVar(v) => mr.existentials.iter().position(|e| e == v),
        _ => None,
    };
    let mut bound = vec![true, false];
    let mut ops = Vec::new();
    let mut pending: Vec<(usize, VarId)> = Vec::new();
    let mut recursive = false;
    for lit in &mr.template.body {
        let slot = slot_of(&lit.pred).ok_or_else(unsupported)?;
        let fos: Vec<VarId> = lit.args.iter().filter_map(fo).collect();
        if recursive {
            return Err(unsupported());
        }
        if fos.len() == 1 {
            pending.push((slot, fos[0]));
            continue;
        }
        let from = vars[&fos[0]];
        let next = vars.len();
        let to = *vars.entry(fos[1]).or_insert(next);
        if to >= bound.len() {
            bound.resize(to + 1, false);
        }
        let ho: Vec<usize> = lit.args.iter().filter_map(slot_of).collect();
        if !ho.is_empty() {
            if ho.contains(&0) {
                return Err(unsupported());
            }
            let pattern = lit.args.iter().map(|t| t.is_higher_order()).collect();
            ops.push(Op::Ibk {
                slot,
                from,
                to,
                ho,
                pattern,
            });
        } else if slot == 0 {
            if to != 1 {
                return Err(unsupported());
            }
            recursive = true;
            ops.push(Op::Rec { from });
        } else {
            ops.push(Op::Step { slot, from, to });
        }
        bound[to] = true;
        // tests run as soon as their variable is bound
        let mut i = 0;
        while i < pending.len() {
            let var = vars.get(&pending[i].1).copied();
            match var {
                Some(v) if bound[v] && !recursive => {
                    let (slot, _) = pending.remove(i);
                    let at = if matches!(ops.last(), Some(Op::Rec { .. })) {
                        ops.len() - 1
                    } else {
                        ops.len()
                    };
                    ops.insert(at, Op::Test { slot, var: v });
                }
                _ => i += 1,
            }
        }
    }
    // tests on the input variable can run first
    let mut leading = Vec::new();
    pending.retain(|(slot, v)| {
        if vars.get(v) == Some(&0) {
            leading.push(Op::Test { slot: *slot, var: 0 });
            false
        } else {
            true
        }
    });
    for (slot, v) in pending {
        match vars.get(&v) {
            Some(&var) if !recursive => ops.push(Op::Test { slot, var }),
            _ => return Err(unsupported()),
        }
    }
    leading.extend(ops);
    Ok(Shape {
        mr: mr.clone(),
        ops: leading,
        nvars: vars.len(),
        out: 1,
        recursive,
    })
}

const UNBOUND: u32 = u32::MAX;
const MAX_MAP_OUTPUTS: usize = 256;
/// States visited by one `until` search before it gives up.
const MAX_UNTIL_STATES: usize = 1024;

type Out = Rc<[u32]>;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Inst {
    shape: usize,
    slots: Vec<Sym>,
}

/// Relation evaluator over an interned state store.
struct Ev<'a> {
    reg: &'a CompiledRegistry,
    prims: Vec<PredSym>,
    builtins: Vec<Option<Builtin>>,
    ibk: Vec<Arc<HigherOrderDefinition>>,
    natives: Vec<Native>,
    limits: FcLimits,
    store: DeducedStore,
    /// Generation assigned to newly interned states.
    cur_gen: u32,
    holds_memo: HashMap<(u32, u32), bool>,
    step_memo: HashMap<(u32, u32), Out>,
    ibk_memo: HashMap<(u32, u32, Vec<Sym>), Out>,
    shapes: Rc<[Shape]>,
    defs: Vec<Vec<Rc<Inst>>>,
    inv_memo: Vec<HashMap<u32, Out>>,
    derived: usize,
    fault: Option<FcError>,
}

impl<'a> Ev<'a> {
    fn new(
        reg: &'a CompiledRegistry,
        ibk: &[Arc<HigherOrderDefinition>],
        sig: &[PredSym],
        limits: FcLimits,
    ) -> Result<Self, FcError> {
        let natives = ibk.iter().map(|d| native_of(d)).collect::<Result<Vec<_>, _>>()?;
        Ok(Ev {
            reg,
            prims: sig.to_vec(),
            builtins: sig.iter().map(|p| reg.builtin(p).cloned()).collect(),
            ibk: ibk.to_vec(),
            natives,
            limits,
            store: DeducedStore::default(),
            cur_gen: u32::MAX,
            holds_memo: HashMap::new(),
            step_memo: HashMap::new(),
            ibk_memo: HashMap::new(),
            shapes: Rc::from(Vec::new()),
            defs: Vec::new(),
            inv_memo: Vec::new(),
            derived: 0,
            fault: None,
        })
    }

    fn prims_of_arity(&self, n: usize) -> impl Iterator<Item = u32> + '_ {
        (0..self.prims.len() as u32).filter(move |&i| self.prims[i as usize].arity == n)
    }

    fn intern(&mut self, v: GroundValue) -> Option<u32> {
        if let Some(&i) = self.store.ids.get(&v) {
            return Some(i);
        }
        if self.store.states.len() >= self.limits.max_states {
            self.fault.get_or_insert(FcError::Resource {
                cap: "state",
                limit: self.limits.max_states,
            });
            return None;
        }
        let i = self.store.states.len() as u32;
        self.store.ids.insert(v.clone(), i);
        self.store.states.push(v);
        self.store.generation.push(self.cur_gen);
        Some(i)
    }

    fn value(&self, x: u32) -> &GroundValue {
        &self.store.states[x as usize]
    }

    /// Call a primitive with its leading arguments bound; the value of the
    /// last argument on success (or the last input when all are bound).
    fn call_prim(&self, p: u32, inputs: &[&GroundValue]) -> Option<GroundValue> {
        let sym = &self.prims[p as usize];
        if let Some(b) = &self.builtins[p as usize] {
            let mut args: Vec<Option<&GroundValue>> = inputs.iter().map(|v| Some(*v)).collect();
            args.resize(sym.arity, None);
            return match call_builtin(b, &args) {
                Outcome::Solved(mut vs) => vs.pop(),
                _ => None,
            };
        }
        let mut args: Vec<Term> = inputs.iter().map(|v| Term::Value((*v).clone())).collect();
        if args.len() < sym.arity {
            args.push(Term::FoVar(VarId(0)));
        }
        match eval_compiled(&Atom::new(Term::Pred(sym.clone()), args), self.reg) {
            Ok(Some(mut vs)) => vs.pop(),
            _ => None,
        }
    }

    fn holds(&mut self, p: u32, x: u32) -> bool {
        if let Some(&h) = self.holds_memo.get(&(p, x)) {
            return h;
        }
        let h = self.prims[p as usize].arity == 1 && self.call_prim(p, &[self.value(x)]).is_some();
        self.holds_memo.insert((p, x), h);
        self.derived += 1;
        h
    }

    fn step(&mut self, p: u32, x: u32) -> Out {
        if let Some(o) = self.step_memo.get(&(p, x)) {
            return o.clone();
        }
        let y = match self.call_prim(p, &[self.value(x)]) {
            Some(v) => self.intern(v),
            None => None,
        };
        let out: Out = y.into_iter().collect();
        self.step_memo.insert((p, x), out.clone());
        self.derived += 1;
        out
    }

    fn succ(&mut self, s: Sym, x: u32) -> Out {
        match s {
            Sym::Prim(p) => self.step(p, x),
            Sym::Inv(j) => self.inv(j as usize, x),
            Sym::Ibk(_) => Rc::from(Vec::new()),
        }
    }

    fn test(&mut self, s: Sym, x: u32) -> bool {
        match s {
            Sym::Prim(p) => self.holds(p, x),
            _ => false,
        }
    }

    fn ibk_succ(&mut self, def: u32, x: u32, ho: &[Sym]) -> Out {
        let memoise = ho.iter().all(|s| matches!(s, Sym::Prim(_)));
        let key = (def, x, ho.to_vec());
        if memoise {
            if let Some(o) = self.ibk_memo.get(&key) {
                return o.clone();
            }
        }
        let mut out = match self.natives[def as usize] {
            Native::Map => self.map(x, ho[0]),
            Native::Until => self.until(x, ho[0], ho[1]),
            Native::IfThenElse => {
                if self.test(ho[0], x) {
                    self.succ(ho[1], x).to_vec()
                } else {
                    self.succ(ho[2], x).to_vec()
                }
            }
            Native::Reduceback => self.reduceback(x, ho[0]),
        };
        out.sort_unstable();
        out.dedup();
        let out: Out = out.into();
        if memoise {
            self.ibk_memo.insert(key, out.clone());
            self.derived += 1;
        }
        out
    }

    fn map(&mut self, x: u32, f: Sym) -> Vec<u32> {
        let Some(items) = self.value(x).as_list().map(|xs| xs.to_vec()) else {
            return Vec::new();
        };
        let mut partial: Vec<Vec<GroundValue>> = vec![Vec::new()];
        for item in items {
            let Some(e) = self.intern(item) else { return Vec::new() };
            let ys = self.succ(f, e);
            if ys.is_empty() {
                return Vec::new();
            }
            let mut next = Vec::new();
            'outer: for p in &partial {
                for &y in ys.iter() {
                    if next.len() >= MAX_MAP_OUTPUTS {
                        break 'outer;
                    }
                    let mut q = p.clone();
                    q.push(self.value(y).clone());
                    next.push(q);
                }
            }
            partial = next;
        }
        partial
            .into_iter()
            .filter_map(|vs| self.intern(GroundValue::list(vs)))
            .collect()
    }

    fn until(&mut self, x: u32, cond: Sym, f: Sym) -> Vec<u32> {
        let mut out = Vec::new();
        let mut seen = HashSet::from([x]);
        let mut stack = vec![x];
        while let Some(z) = stack.pop() {
            if self.test(cond, z) {
                out.push(z);
                continue;
            }
            for &y in self.succ(f, z).iter() {
                if seen.len() < MAX_UNTIL_STATES && seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        out
    }

    fn reduceback(&mut self, x: u32, f: Sym) -> Vec<u32> {
        let Sym::Prim(p) = f else { return Vec::new() };
        let Some(items) = self.value(x).as_list().map(|xs| xs.to_vec()) else {
            return Vec::new();
        };
        let mut acc = GroundValue::empty_list();
        for item in items.iter().rev() {
            match self.call_prim(p, &[&acc, item]) {
                Some(v) => acc = v,
                None => return Vec::new(),
            }
        }
        self.intern(acc).into_iter().collect()
    }

    /// Outputs of invented symbol `j` at `x`. Recursion only occurs through
    /// a last-literal self call, so the relation is the base clauses applied
    /// at every state reachable through the recursive clauses' prefixes.
    fn inv(&mut self, j: usize, x: u32) -> Out {
        if let Some(o) = self.inv_memo[j].get(&x) {
            return o.clone();
        }
        let defs = self.defs[j].clone();
        let shapes = self.shapes.clone();
        let mut out = Vec::new();
        let mut seen = HashSet::from([x]);
        let mut stack = vec![x];
        while let Some(z) = stack.pop() {
            for inst in &defs {
                let shape = &shapes[inst.shape];
                if shape.recursive {
                    let mut next = Vec::new();
                    self.run_inst(shape, &inst.slots, z, &mut next);
                    for c in next {
                        if seen.insert(c) {
                            stack.push(c);
                        }
                    }
                } else {
                    self.run_inst(shape, &inst.slots, z, &mut out);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        let out: Out = out.into();
        self.inv_memo[j].insert(x, out.clone());
        self.derived += 1;
        out
    }

    /// Outputs of one clause at `x`; for a recursive clause, the states
    /// passed to the self call.
    fn run_inst(&mut self, shape: &Shape, slots: &[Sym], x: u32, acc: &mut Vec<u32>) {
        let mut env = vec![UNBOUND; shape.nvars];
        env[0] = x;
        self.run_ops(shape, slots, 0, &mut env, acc);
    }

    fn run_ops(&mut self, shape: &Shape, slots: &[Sym], i: usize, env: &mut [u32], acc: &mut Vec<u32>) {
        let Some(op) = shape.ops.get(i) else {
            acc.push(env[shape.out]);
            return;
        };
        let (ys, to) = match op {
            Op::Test { slot, var } => {
                if self.test(slots[*slot], env[*var]) {
                    self.run_ops(shape, slots, i + 1, env, acc);
                }
                return;
            }
            Op::Rec { from } => {
                acc.push(env[*from]);
                return;
            }
            Op::Step { slot, from, to } => (self.succ(slots[*slot], env[*from]), *to),
            Op::Ibk { slot, from, to, ho, .. } => {
                let Sym::Ibk(d) = slots[*slot] else { return };
                let hs: Vec<Sym> = ho.iter().map(|h| slots[*h]).collect();
                (self.ibk_succ(d, env[*from], &hs), *to)
            }
        };
        let prior = env[to];
        for &y in ys.iter() {
            if prior != UNBOUND && prior != y {
                continue;
            }
            env[to] = y;
            self.run_ops(shape, slots, i + 1, env, acc);
        }
        env[to] = prior;
    }

    fn facts_cap(&mut self) -> Result<(), FcError> {
        if self.store.fact_count() > self.limits.max_facts {
            return Err(FcError::Resource {
                cap: "fact",
                limit: self.limits.max_facts,
            });
        }
        Ok(())
    }

    /// Every assignment of signature predicates to the definition's
    /// higher-order positions.
    fn ho_groundings(&self, def: usize) -> Vec<Vec<Sym>> {
        let mut out: Vec<Vec<Sym>> = vec![Vec::new()];
        for arity in ho_arities(&self.ibk[def]) {
            let choices: Vec<u32> = self.prims_of_arity(arity).collect();
            out = out
                .into_iter()
                .flat_map(|g| {
                    choices.iter().map(move |&p| {
                        let mut g = g.clone();
                        g.push(Sym::Prim(p));
                        g
                    })
                })
                .collect();
        }
        out
    }

    fn expand(&mut self, x: u32, groundings: &[Vec<Vec<Sym>>]) -> Result<(), FcError> {
        let xv = self.value(x).clone();
        for p in self.prims_of_arity(1).collect::<Vec<_>>() {
            if self.holds(p, x) {
                self.store.deduced.push(Deduced {
                    pred: self.prims[p as usize].clone(),
                    args: vec![xv.clone()],
                });
            }
        }
        for p in self.prims_of_arity(2).collect::<Vec<_>>() {
            for &y in self.step(p, x).iter() {
                let yv = self.value(y).clone();
                self.store.deduced.push(Deduced {
                    pred: self.prims[p as usize].clone(),
                    args: vec![xv.clone(), yv],
                });
            }
        }
        if let Some(e) = self.fault.take() {
            return Err(e);
        }
        self.facts_cap()?;
        for (d, gs) in groundings.iter().enumerate() {
            for g in gs {
                for &y in self.ibk_succ(d as u32, x, g).iter() {
                    let fact = IbkFact {
                        def: self.ibk[d].sym.clone(),
                        input: xv.clone(),
                        output: self.value(y).clone(),
                        ho: g
                            .iter()
                            .map(|s| match s {
                                Sym::Prim(p) => self.prims[*p as usize].clone(),
                                _ => unreachable!("groundings use primitives only"),
                            })
                            .collect(),
                    };
                    self.store.ibk_facts.push(fact);
                }
                if let Some(e) = self.fault.take() {
                    return Err(e);
                }
            }
            self.facts_cap()?;
        }
        Ok(())
    }

    /// Breadth-first fixpoint, one generation at a time, so each state's
    /// generation is its derivation distance from the initial terms.
    fn saturate(&mut self, initial: &[GroundValue]) -> Result<(), FcError> {
        self.cur_gen = 0;
        for v in initial {
            self.intern(v.clone());
        }
        if let Some(e) = self.fault.take() {
            return Err(e);
        }
        let groundings: Vec<Vec<Vec<Sym>>> = (0..self.ibk.len()).map(|d| self.ho_groundings(d)).collect();
        let mut start = 0;
        let mut g = 0;
        while start < self.store.states.len() && g <= self.limits.max_generation {
            let end = self.store.states.len();
            self.cur_gen = g + 1;
            for x in start..end {
                self.expand(x as u32, &groundings)?;
            }
            start = end;
            g += 1;
        }
        self.cur_gen = u32::MAX;
        Ok(())
    }
}

/// Least fixpoint of BK import from `initial` under the state guard.
pub fn saturate(
    initial: &[GroundValue],
    registry: &CompiledRegistry,
    ibk_defs: &[Arc<HigherOrderDefinition>],
    sig: &[PredSym],
    limits: &FcLimits,
) -> Result<DeducedStore, FcError> {
    let mut ev = Ev::new(registry, ibk_defs, sig, *limits)?;
    ev.saturate(initial)?;
    Ok(ev.store)
}

/// Example terms, in first-occurrence order.
fn example_terms(task: &LearningTask) -> Vec<GroundValue> {
    let mut out: Vec<GroundValue> = Vec::new();
    for a in task.pos.iter().chain(&task.neg) {
        for t in &a.args {
            if let Some(v) = t.as_value() {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
    }
    out
}

fn fingerprint(rows: &[Out]) -> u64 {
    let mut h = DefaultHasher::new();
    for r in rows {
        r.hash(&mut h);
    }
    h.finish()
}

fn union_into(acc: &[Out], add: &[Out]) -> (Vec<Out>, bool) {
    let mut grew = false;
    let rows = acc
        .iter()
        .zip(add)
        .map(|(a, b)| {
            if b.iter().all(|y| a.binary_search(y).is_ok()) {
                return a.clone();
            }
            grew = true;
            let mut v: Vec<u32> = a.iter().chain(b.iter()).copied().collect();
            v.sort_unstable();
            v.dedup();
            v.into()
        })
        .collect();
    (rows, grew)
}

struct Search<'a, 'b> {
    ev: Ev<'a>,
    task: &'b LearningTask,
    probes: Vec<u32>,
    pos: Vec<(u32, u32)>,
    neg: Vec<(u32, u32)>,
    /// Fingerprints of the binary primitives on the probes.
    prim_fps: HashSet<u64>,
    inv_fps: Vec<u64>,
    symbols: usize,
    deadline: Option<Instant>,
    /// Resolution steps for the final top-down check.
    budget: u64,
    timed_out: bool,
    ticks: u64,
    instantiations: u64,
    programs_tested: u64,
}

/// Either a value already known on the probes or one awaiting evaluation.
struct Cand {
    inst: Rc<Inst>,
    rows: Option<Vec<Out>>,
}

impl Search<'_, '_> {
    fn out_of_time(&mut self) -> bool {
        self.ticks += 1;
        if self.ticks.is_multiple_of(64) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out || self.ev.fault.is_some()
    }

    /// Instantiations with head `h` whose body symbols respect the order:
    /// primitives, higher-order definitions, and invented symbols after `h`.
    fn instantiations(&self, h: usize) -> Vec<Rc<Inst>> {
        let mut out = Vec::new();
        for (si, shape) in self.ev.shapes.iter().enumerate() {
            let mut slots = vec![None; shape.mr.existentials.len()];
            slots[0] = Some(Sym::Inv(h as u32));
            self.fill(si, shape, 0, &mut slots, h, &mut out);
        }
        out
    }

    fn binary_choices(&self, h: usize) -> Vec<Sym> {
        let mut c: Vec<Sym> = self.ev.prims_of_arity(2).map(Sym::Prim).collect();
        c.extend((h + 1..self.symbols).map(|k| Sym::Inv(k as u32)));
        c
    }

    fn choices(&self, arity: usize, h: usize) -> Vec<Sym> {
        if arity == 2 {
            self.binary_choices(h)
        } else {
            self.ev.prims_of_arity(arity).map(Sym::Prim).collect()
        }
    }

    fn fill(
        &self,
        si: usize,
        shape: &Shape,
        i: usize,
        slots: &mut Vec<Option<Sym>>,
        h: usize,
        out: &mut Vec<Rc<Inst>>,
    ) {
        let Some(op) = shape.ops.get(i) else {
            out.push(Rc::new(Inst {
                shape: si,
                slots: slots.iter().map(|s| s.expect("every slot is filled")).collect(),
            }));
            return;
        };
        let (slot, choices) = match op {
            Op::Rec { .. } => return self.fill(si, shape, i + 1, slots, h, out),
            Op::Test { slot, .. } => (*slot, self.choices(1, h)),
            Op::Step { slot, .. } => (*slot, self.binary_choices(h)),
            Op::Ibk { slot, ho, pattern, .. } => {
                let defs: Vec<usize> = match slots[*slot] {
                    Some(Sym::Ibk(d)) => vec![d as usize],
                    Some(_) => return,
                    None => (0..self.ev.ibk.len())
                        .filter(|&d| self.ev.ibk[d].ho_positions == *pattern)
                        .collect(),
                };
                let fresh = slots[*slot].is_none();
                for d in defs {
                    slots[*slot] = Some(Sym::Ibk(d as u32));
                    let arities = ho_arities(&self.ev.ibk[d]);
                    self.fill_ho(si, shape, i, ho, &arities, 0, slots, h, out);
                }
                if fresh {
                    slots[*slot] = None;
                }
                return;
            }
        };
        if slots[slot].is_some() {
            return self.fill(si, shape, i + 1, slots, h, out);
        }
        for c in choices {
            slots[slot] = Some(c);
            self.fill(si, shape, i + 1, slots, h, out);
        }
        slots[slot] = None;
    }

    #[allow(clippy::too_many_arguments)]
    fn fill_ho(
        &self,
        si: usize,
        shape: &Shape,
        i: usize,
        ho: &[usize],
        arities: &[usize],
        k: usize,
        slots: &mut Vec<Option<Sym>>,
        h: usize,
        out: &mut Vec<Rc<Inst>>,
    ) {
        if k == ho.len() {
            return self.fill(si, shape, i + 1, slots, h, out);
        }
        if slots[ho[k]].is_some() {
            return self.fill_ho(si, shape, i, ho, arities, k + 1, slots, h, out);
        }
        for c in self.choices(arities[k], h) {
            slots[ho[k]] = Some(c);
            self.fill_ho(si, shape, i, ho, arities, k + 1, slots, h, out);
        }
        slots[ho[k]] = None;
    }

    fn set_def(&mut self, j: usize, insts: Vec<Rc<Inst>>) {
        self.ev.defs[j] = insts;
        for m in &mut self.ev.inv_memo[..=j] {
            m.clear();
        }
    }

    fn probe_rows(&mut self, inst: &Inst) -> Vec<Out> {
        let shapes = self.ev.shapes.clone();
        let probes = self.probes.clone();
        probes
            .iter()
            .map(|&x| {
                let mut v = Vec::new();
                self.ev.run_inst(&shapes[inst.shape], &inst.slots, x, &mut v);
                v.sort_unstable();
                v.dedup();
                v.into()
            })
            .collect()
    }

    /// Define invented symbol `j` with some clauses, leaving `remaining`
    /// minus those for the symbols below it.
    fn define(&mut self, j: usize, remaining: usize) -> bool {
        if j == 0 {
            return self.define_target(remaining);
        }
        let insts = self.instantiations(j);
        self.instantiations += insts.len() as u64;
        let mut cands = Vec::new();
        for inst in insts {
            if self.out_of_time() {
                return false;
            }
            if self.ev.shapes[inst.shape].recursive {
                cands.push(Cand { inst, rows: None });
            } else {
                let rows = self.probe_rows(&inst);
                if rows.iter().any(|r| !r.is_empty()) {
                    cands.push(Cand { inst, rows: Some(rows) });
                }
            }
        }
        let mut seen: HashSet<u64> = self.prim_fps.clone();
        seen.extend(self.inv_fps[j + 1..self.symbols].iter().copied());
        let empty: Vec<Out> = vec![Rc::from(Vec::new()); self.probes.len()];
        for k in 1..=remaining - j {
            let mut chosen = Vec::new();
            if self.pick(j, &cands, 0, k, &mut chosen, &empty, false, remaining - k, &mut seen) {
                return true;
            }
            if self.timed_out || self.ev.fault.is_some() {
                return false;
            }
        }
        false
    }

    #[allow(clippy::too_many_arguments)]
    fn pick(
        &mut self,
        j: usize,
        cands: &[Cand],
        start: usize,
        k: usize,
        chosen: &mut Vec<usize>,
        rows: &[Out],
        has_rec: bool,
        rest: usize,
        seen: &mut HashSet<u64>,
    ) -> bool {
        if k == 0 {
            if chosen.iter().all(|&c| cands[c].rows.is_none()) {
                return false;
            }
            let insts = chosen.iter().map(|&c| cands[c].inst.clone()).collect();
            self.set_def(j, insts);
            let rows: Vec<Out> = if has_rec {
                let probes = self.probes.clone();
                probes.iter().map(|&x| self.ev.inv(j, x)).collect()
            } else {
                rows.to_vec()
            };
            if rows.iter().all(|r| r.is_empty()) {
                return false;
            }
            let fp = fingerprint(&rows);
            if !seen.insert(fp) {
                return false;
            }
            self.inv_fps[j] = fp;
            return self.define(j - 1, rest);
        }
        for c in start..cands.len() {
            if self.out_of_time() {
                return false;
            }
            let (next, rec) = match &cands[c].rows {
                Some(r) => {
                    let (u, grew) = union_into(rows, r);
                    // a clause adding nothing on the probes is redundant
                    if !grew {
                        continue;
                    }
                    (u, has_rec)
                }
                None => (rows.to_vec(), true),
            };
            chosen.push(c);
            let found = self.pick(j, cands, c + 1, k - 1, chosen, &next, rec, rest, seen);
            chosen.pop();
            if found {
                return true;
            }
        }
        false
    }

    /// Choose the target's clauses: recursive clauses first, then base
    /// clauses. Given the recursive ones, the target's outputs at `a` are
    /// the base outputs at every state the recursion reaches from `a`, so
    /// each base clause's coverage of the examples is exact and negatives
    /// prune it outright.
    fn define_target(&mut self, k: usize) -> bool {
        let insts = self.instantiations(0);
        self.instantiations += insts.len() as u64;
        let shapes = self.ev.shapes.clone();
        let (rec, base): (Vec<Rc<Inst>>, Vec<Rc<Inst>>) = insts.into_iter().partition(|i| shapes[i.shape].recursive);
        let mut cache: HashMap<(usize, u32), Out> = HashMap::new();
        for r in 0..k.min(rec.len() + 1) {
            let mut chosen = Vec::new();
            let inputs: Vec<Vec<u32>> = self.pos.iter().chain(&self.neg).map(|p| vec![p.0]).collect();
            if self.pick_rec(&rec, &base, 0, r, &mut chosen, inputs, k - r, &mut cache) {
                return true;
            }
            if self.timed_out || self.ev.fault.is_some() {
                return false;
            }
        }
        false
    }

    /// States reachable from `reach` through the prefixes of `inst`.
    fn extend_reach(&mut self, inst: &Inst, reach: &[u32]) -> Vec<u32> {
        let shapes = self.ev.shapes.clone();
        let mut seen: HashSet<u32> = reach.iter().copied().collect();
        let mut out = reach.to_vec();
        let mut stack = reach.to_vec();
        while let Some(z) = stack.pop() {
            let mut next = Vec::new();
            self.ev.run_inst(&shapes[inst.shape], &inst.slots, z, &mut next);
            for c in next {
                if seen.insert(c) {
                    out.push(c);
                    stack.push(c);
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn pick_rec(
        &mut self,
        rec: &[Rc<Inst>],
        base: &[Rc<Inst>],
        start: usize,
        r: usize,
        chosen: &mut Vec<Rc<Inst>>,
        reach: Vec<Vec<u32>>,
        bases: usize,
        cache: &mut HashMap<(usize, u32), Out>,
    ) -> bool {
        if r == 0 {
            return self.pick_bases(base, chosen, &reach, bases, cache);
        }
        for i in start..rec.len() {
            if self.out_of_time() {
                return false;
            }
            // a recursive clause that reaches nothing new is redundant
            let mut next = Vec::with_capacity(reach.len());
            let mut grew = false;
            for rs in &reach {
                let ext = self.extend_reach(&rec[i], rs);
                grew |= ext.len() > rs.len();
                next.push(ext);
            }
            if !grew {
                continue;
            }
            chosen.push(rec[i].clone());
            let found = self.pick_rec(rec, base, i + 1, r - 1, chosen, next, bases, cache);
            chosen.pop();
            if found {
                return true;
            }
        }
        false
    }

    fn pick_bases(
        &mut self,
        base: &[Rc<Inst>],
        rec: &[Rc<Inst>],
        reach: &[Vec<u32>],
        k: usize,
        cache: &mut HashMap<(usize, u32), Out>,
    ) -> bool {
        let shapes = self.ev.shapes.clone();
        let npos = self.pos.len();
        let words = npos.div_ceil(64);
        let targets: Vec<u32> = self.pos.iter().chain(&self.neg).map(|p| p.1).collect();
        let mut cands: Vec<(usize, Vec<u64>)> = Vec::new();
        'base: for (bi, inst) in base.iter().enumerate() {
            if self.out_of_time() {
                return false;
            }
            let mut mask = vec![0u64; words];
            for (e, rs) in reach.iter().enumerate() {
                let hit = rs.iter().any(|&z| {
                    let out = cache.entry((bi, z)).or_insert_with(|| {
                        let mut v = Vec::new();
                        self.ev.run_inst(&shapes[inst.shape], &inst.slots, z, &mut v);
                        v.into()
                    });
                    out.contains(&targets[e])
                });
                if hit {
                    if e >= npos {
                        continue 'base;
                    }
                    mask[e / 64] |= 1 << (e % 64);
                }
            }
            if mask.iter().any(|w| *w != 0) {
                cands.push((bi, mask));
            }
        }
        let mut chosen = Vec::new();
        self.pick_target(base, rec, &cands, 0, k, &mut chosen, &vec![0; words])
    }

    #[allow(clippy::too_many_arguments)]
    fn pick_target(
        &mut self,
        base: &[Rc<Inst>],
        rec: &[Rc<Inst>],
        cands: &[(usize, Vec<u64>)],
        start: usize,
        k: usize,
        chosen: &mut Vec<usize>,
        mask: &[u64],
    ) -> bool {
        if k == 0 {
            self.programs_tested += 1;
            let full = (0..self.pos.len()).all(|i| mask[i / 64] & (1 << (i % 64)) != 0);
            if !full {
                return false;
            }
            let mut insts: Vec<Rc<Inst>> = chosen.iter().map(|&c| base[cands[c].0].clone()).collect();
            insts.extend(rec.iter().cloned());
            self.set_def(0, insts);
            return self.all_used() && self.consistent();
        }
        for c in start..cands.len() {
            if self.out_of_time() {
                return false;
            }
            let u: Vec<u64> = mask.iter().zip(&cands[c].1).map(|(a, b)| a | b).collect();
            // a clause covering no new positive is redundant
            if u == mask {
                continue;
            }
            chosen.push(c);
            let found = self.pick_target(base, rec, cands, c + 1, k - 1, chosen, &u);
            chosen.pop();
            if found {
                return true;
            }
        }
        false
    }

    fn consistent(&mut self) -> bool {
        for (a, b) in self.pos.clone() {
            if !self.ev.inv(0, a).contains(&b) {
                return false;
            }
        }
        for (a, b) in self.neg.clone() {
            if self.ev.inv(0, a).contains(&b) {
                return false;
            }
        }
        // The saturated model is bounded by the generation cap, so a program
        // can look consistent there yet cover a negative through a longer
        // derivation. Confirm against the unbounded semantics; a negative
        // whose proof runs out of budget counts as covered.
        let prog = self.program();
        let t = self.task;
        let verdict = |a: &Atom| eval(&prog, a, &t.registry, &t.ibk, self.budget);
        t.pos.iter().all(|a| verdict(a).holds)
            && t.neg.iter().all(|a| {
                let v = verdict(a);
                !v.holds && !v.exhausted
            })
    }

    /// Every invented symbol is reachable from the target.
    fn all_used(&self) -> bool {
        let mut used = vec![false; self.symbols];
        used[0] = true;
        let mut stack = vec![0];
        while let Some(j) = stack.pop() {
            for inst in &self.ev.defs[j] {
                for s in &inst.slots {
                    if let Sym::Inv(k) = s {
                        let k = *k as usize;
                        if !used[k] {
                            used[k] = true;
                            stack.push(k);
                        }
                    }
                }
            }
        }
        used.iter().all(|u| *u)
    }

    fn pred_of(&self, s: Sym) -> PredSym {
        match s {
            Sym::Prim(p) => self.ev.prims[p as usize].clone(),
            Sym::Ibk(d) => self.ev.ibk[d as usize].sym.clone(),
            Sym::Inv(0) => self.task.target.clone(),
            Sym::Inv(k) => PredSym::new(&invented_name(&self.task.target.name, k as usize), 2),
        }
    }

    fn program(&self) -> Program {
        let mut subs = Vec::new();
        for j in 0..self.symbols {
            for inst in &self.ev.defs[j] {
                subs.push(SubstitutionRecord {
                    metarule: self.ev.shapes[inst.shape].mr.clone(),
                    symbols: inst.slots.iter().map(|s| self.pred_of(*s)).collect(),
                });
            }
        }
        Program::new(subs)
    }
}

/// Learn with the default resource caps.
pub fn learn_fc(task: &LearningTask, cfg: &EngineConfig) -> Result<FcLearned, FcError> {
    learn_fc_with(task, cfg, &FcLimits::default())
}

/// Deepen over predicate symbols (outer) and clauses (inner); return the
/// first program entailing every positive and no negative.
pub fn learn_fc_with(task: &LearningTask, cfg: &EngineConfig, limits: &FcLimits) -> Result<FcLearned, FcError> {
    let start = Instant::now();
    let rejected: Vec<String> = task
        .metarules
        .iter()
        .filter(|m| !m.is_forward_chained())
        .map(|m| m.name.clone())
        .collect();
    if !rejected.is_empty() {
        return Err(FcError::NotForwardChained(rejected));
    }
    if task.target.arity != 2 {
        return Err(FcError::TargetArity(task.target.to_string()));
    }
    let shapes: Vec<Shape> = task.metarules.iter().map(compile).collect::<Result<_, _>>()?;
    let mut ev = Ev::new(&task.registry, &task.ibk, task.registry.prims(), *limits)?;
    ev.saturate(&example_terms(task))?;
    ev.shapes = shapes.into();
    let mut stats = FcStats {
        saturated_states: ev.store.states.len(),
        saturated_facts: ev.store.fact_count(),
        ..Default::default()
    };
    let probes: Vec<u32> = (0..ev.store.states.len().min(limits.probes) as u32).collect();
    let pair = |ev: &mut Ev, a: &Atom| -> Option<(u32, u32)> {
        let x = ev.intern(a.args[0].as_value()?.clone())?;
        let y = ev.intern(a.args[1].as_value()?.clone())?;
        Some((x, y))
    };
    let pos: Vec<(u32, u32)> = task.pos.iter().filter_map(|a| pair(&mut ev, a)).collect();
    let neg: Vec<(u32, u32)> = task.neg.iter().filter_map(|a| pair(&mut ev, a)).collect();
    if let Some(e) = ev.fault.take() {
        return Err(e);
    }
    let mut prim_fps = HashSet::new();
    for p in ev.prims_of_arity(2).collect::<Vec<_>>() {
        let rows: Vec<Out> = probes.iter().map(|&x| ev.step(p, x)).collect();
        prim_fps.insert(fingerprint(&rows));
    }
    let mut search = Search {
        ev,
        task,
        probes,
        pos,
        neg,
        prim_fps,
        inv_fps: Vec::new(),
        symbols: 0,
        deadline: start.checked_add(cfg.wall_timeout),
        budget: cfg.step_budget,
        timed_out: false,
        ticks: 0,
        instantiations: 0,
        programs_tested: 0,
    };
    let mut outcome = SearchOutcome::Exhausted;
    let mut program = None;
    'deepen: for s in 1..=cfg.max_clauses {
        for n in s..=cfg.max_clauses {
            search.symbols = s;
            search.ev.defs = vec![Vec::new(); s];
            search.ev.inv_memo = vec![HashMap::new(); s];
            search.inv_fps = vec![0; s];
            search.instantiations = 0;
            search.programs_tested = 0;
            let found = search.define(s - 1, n);
            stats.depths.push(DepthStats {
                symbols: s,
                clauses: n,
                instantiations: search.instantiations,
                programs_tested: search.programs_tested,
                states: search.ev.store.states.len(),
                facts: search.ev.store.fact_count() + search.ev.derived,
            });
            if let Some(e) = search.ev.fault.take() {
                return Err(e);
            }
            if found {
                outcome = SearchOutcome::Found;
                program = Some(search.program());
                break 'deepen;
            }
            if search.timed_out {
                outcome = SearchOutcome::TimedOut;
                break 'deepen;
            }
        }
    }
    stats.wall_time_s = start.elapsed().as_secs_f64();
    log::info!("fc search finished: {:?} after {:.3}s", outcome, stats.wall_time_s);
    Ok(FcLearned {
        program,
        outcome,
        stats,
    })
}
