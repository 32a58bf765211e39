//! Compiled background knowledge: native built-ins, user clauses and the
//! primitive whitelist.
//!
//! Built-ins are semi-deterministic over ground values: given the argument
//! positions that are bound, a call either fails, produces the single
//! solution, or reports that too few positions are bound.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::logic::{Atom, Clause, GroundValue, PredSym, Term};

/// Result of calling a built-in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Fail,
    /// The full argument tuple of the single solution.
    Solved(Vec<GroundValue>),
    /// Not enough positions are bound to run in any supported mode.
    Insufficient,
}

pub type BuiltinFn = fn(&[Option<&GroundValue>]) -> Outcome;

#[derive(Clone)]
pub struct Builtin {
    pub sym: PredSym,
    pub func: BuiltinFn,
}

impl fmt::Debug for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Builtin({})", self.sym)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BkError {
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("insufficiently instantiated call to {0}")]
    Insufficient(String),
    #[error("predicate {0} is defined by clauses and also built in")]
    Redefined(String),
    #[error("predicate {name} used with arities {a} and {b}")]
    ArityClash { name: String, a: usize, b: usize },
    #[error("compiled clause for {0} calls {1}, which is not compiled")]
    NotCompiled(String, String),
    #[error("compiled clauses must be first-order: {0}")]
    HigherOrder(String),
    #[error("proof of {0} exceeded the step budget")]
    Budget(String),
    #[error("unknown built-in pack `{0}` (expected list, waiter, chess or encryption)")]
    UnknownPack(String),
}

fn bound<'a>(args: &[Option<&'a GroundValue>], i: usize) -> Option<&'a GroundValue> {
    args.get(i).copied().flatten()
}

/// Merge a computed solution with the bound inputs; fail on disagreement.
fn solve(args: &[Option<&GroundValue>], solution: Vec<GroundValue>) -> Outcome {
    for (given, got) in args.iter().zip(&solution) {
        if let Some(g) = given {
            if *g != got {
                return Outcome::Fail;
            }
        }
    }
    Outcome::Solved(solution)
}

fn list(items: &[GroundValue]) -> GroundValue {
    GroundValue::list(items.to_vec())
}

fn empty(args: &[Option<&GroundValue>]) -> Outcome {
    match bound(args, 0) {
        Some(v) => match v.as_list() {
            Some([]) => Outcome::Solved(vec![v.clone()]),
            _ => Outcome::Fail,
        },
        None => Outcome::Solved(vec![GroundValue::empty_list()]),
    }
}

fn head(args: &[Option<&GroundValue>]) -> Outcome {
    match bound(args, 0).map(GroundValue::as_list) {
        Some(Some([h, ..])) => solve(args, vec![bound(args, 0).unwrap().clone(), h.clone()]),
        Some(_) => Outcome::Fail,
        None => Outcome::Insufficient,
    }
}

fn tail(args: &[Option<&GroundValue>]) -> Outcome {
    match bound(args, 0).map(GroundValue::as_list) {
        Some(Some([_, rest @ ..])) => solve(args, vec![bound(args, 0).unwrap().clone(), list(rest)]),
        Some(_) => Outcome::Fail,
        None => Outcome::Insufficient,
    }
}

fn last(args: &[Option<&GroundValue>]) -> Outcome {
    match bound(args, 0).map(GroundValue::as_list) {
        Some(Some([.., l])) => solve(args, vec![bound(args, 0).unwrap().clone(), l.clone()]),
        Some(_) => Outcome::Fail,
        None => Outcome::Insufficient,
    }
}

fn reversed(v: &GroundValue) -> Option<GroundValue> {
    v.as_list()
        .map(|xs| GroundValue::list(xs.iter().rev().cloned().collect()))
}

fn reverse(args: &[Option<&GroundValue>]) -> Outcome {
    match (bound(args, 0), bound(args, 1)) {
        (Some(a), _) => match reversed(a) {
            Some(r) => solve(args, vec![a.clone(), r]),
            None => Outcome::Fail,
        },
        (None, Some(b)) => match reversed(b) {
            Some(r) => Outcome::Solved(vec![r, b.clone()]),
            None => Outcome::Fail,
        },
        (None, None) => Outcome::Insufficient,
    }
}

/// `concat(L, X, L++[X])`.
fn concat(args: &[Option<&GroundValue>]) -> Outcome {
    match (bound(args, 0), bound(args, 1), bound(args, 2)) {
        (Some(l), Some(x), _) => match l.as_list() {
            Some(xs) => {
                let mut out = xs.to_vec();
                out.push(x.clone());
                solve(args, vec![l.clone(), x.clone(), GroundValue::list(out)])
            }
            None => Outcome::Fail,
        },
        (_, _, Some(r)) => match r.as_list() {
            Some([init @ .., x]) => solve(args, vec![list(init), x.clone(), r.clone()]),
            _ => Outcome::Fail,
        },
        _ => Outcome::Insufficient,
    }
}

/// `cons(H, T, [H|T])`, usable in both directions.
fn cons(args: &[Option<&GroundValue>]) -> Outcome {
    match (bound(args, 0), bound(args, 1), bound(args, 2)) {
        (_, _, Some(l)) => match l.as_list() {
            Some([h, rest @ ..]) => solve(args, vec![h.clone(), list(rest), l.clone()]),
            _ => Outcome::Fail,
        },
        (Some(h), Some(t), None) => match t.as_list() {
            Some(rest) => {
                let mut out = Vec::with_capacity(rest.len() + 1);
                out.push(h.clone());
                out.extend(rest.iter().cloned());
                Outcome::Solved(vec![h.clone(), t.clone(), GroundValue::list(out)])
            }
            None => Outcome::Fail,
        },
        _ => Outcome::Insufficient,
    }
}

fn hold(args: &[Option<&GroundValue>]) -> Outcome {
    match (bound(args, 0), bound(args, 1)) {
        (Some(a), _) => solve(args, vec![a.clone(), a.clone()]),
        (None, Some(b)) => Outcome::Solved(vec![b.clone(), b.clone()]),
        (None, None) => Outcome::Insufficient,
    }
}

/// A functional relation `f(a) = b` with inverse `g(b) = a`.
fn functional(
    args: &[Option<&GroundValue>],
    f: impl Fn(&GroundValue) -> Option<GroundValue>,
    g: impl Fn(&GroundValue) -> Option<GroundValue>,
) -> Outcome {
    match (bound(args, 0), bound(args, 1)) {
        (Some(a), _) => match f(a) {
            Some(b) => solve(args, vec![a.clone(), b]),
            None => Outcome::Fail,
        },
        (None, Some(b)) => match g(b) {
            Some(a) => Outcome::Solved(vec![a, b.clone()]),
            None => Outcome::Fail,
        },
        (None, None) => Outcome::Insufficient,
    }
}

fn nat_succ(v: &GroundValue) -> Option<GroundValue> {
    match v.as_int()? {
        n if n >= 0 => n.checked_add(1).map(GroundValue::Int),
        _ => None,
    }
}

fn nat_pred(v: &GroundValue) -> Option<GroundValue> {
    match v.as_int()? {
        n if n >= 1 => Some(GroundValue::Int(n - 1)),
        _ => None,
    }
}

fn succ(args: &[Option<&GroundValue>]) -> Outcome {
    functional(args, nat_succ, nat_pred)
}

fn prec(args: &[Option<&GroundValue>]) -> Outcome {
    functional(args, nat_pred, nat_succ)
}

pub const ALPHABET: i64 = 26;

fn letter_index(v: &GroundValue) -> Option<i64> {
    v.as_int().filter(|n| (0..ALPHABET).contains(n))
}

fn mod_succ(v: &GroundValue) -> Option<GroundValue> {
    letter_index(v).map(|n| GroundValue::Int((n + 1) % ALPHABET))
}

fn mod_pred(v: &GroundValue) -> Option<GroundValue> {
    letter_index(v).map(|n| GroundValue::Int((n + ALPHABET - 1) % ALPHABET))
}

fn succ_mod26(args: &[Option<&GroundValue>]) -> Outcome {
    functional(args, mod_succ, mod_pred)
}

fn prec_mod26(args: &[Option<&GroundValue>]) -> Outcome {
    functional(args, mod_pred, mod_succ)
}

fn as_letter(v: &GroundValue) -> Option<char> {
    let c = match v {
        GroundValue::Char(c) => *c,
        GroundValue::Symbol(s) if s.chars().count() == 1 => s.chars().next()?,
        _ => return None,
    };
    c.is_ascii_lowercase().then_some(c)
}

fn c2i(v: &GroundValue) -> Option<GroundValue> {
    as_letter(v).map(|c| GroundValue::Int(c as i64 - 'a' as i64))
}

/// Letters are single-letter symbols; characters are accepted on input.
fn i2c(v: &GroundValue) -> Option<GroundValue> {
    letter_index(v).map(|n| GroundValue::sym(&((b'a' + n as u8) as char).to_string()))
}

fn char_to_int(args: &[Option<&GroundValue>]) -> Outcome {
    functional(args, c2i, i2c)
}

fn int_to_char(args: &[Option<&GroundValue>]) -> Outcome {
    // bound letters may be symbols; compare through the canonical char form
    match (bound(args, 0), bound(args, 1)) {
        (Some(i), Some(c)) => match (i2c(i), as_letter(c)) {
            (Some(x), Some(y)) if as_letter(&x) == Some(y) => Outcome::Solved(vec![i.clone(), c.clone()]),
            _ => Outcome::Fail,
        },
        _ => functional(args, i2c, c2i),
    }
}

// Waiter: state = (pos, [(cuppos, up|down, none|tea|coffee, tea|coffee), ...]).

fn waiter_state(v: &GroundValue) -> Option<(i64, &[GroundValue])> {
    let t = v.as_tuple()?;
    match t {
        [p, cups] => Some((p.as_int()?, cups.as_list()?)),
        _ => None,
    }
}

fn cup_at(cups: &[GroundValue], pos: i64) -> Option<(usize, &[GroundValue])> {
    cups.iter().enumerate().find_map(|(i, c)| {
        let fields = c.as_tuple()?;
        (fields.len() == 4 && fields[0].as_int() == Some(pos)).then_some((i, fields))
    })
}

fn waiter_test(args: &[Option<&GroundValue>], test: impl Fn(i64, &[GroundValue]) -> bool) -> Outcome {
    match bound(args, 0) {
        Some(v) => match waiter_state(v) {
            Some((pos, cups)) if test(pos, cups) => Outcome::Solved(vec![v.clone()]),
            _ => Outcome::Fail,
        },
        None => Outcome::Insufficient,
    }
}

fn at_end(args: &[Option<&GroundValue>]) -> Outcome {
    waiter_test(args, |pos, cups| pos == cups.len() as i64)
}

fn wants(args: &[Option<&GroundValue>], drink: &str) -> Outcome {
    waiter_test(args, |pos, cups| {
        cup_at(cups, pos).is_some_and(|(_, f)| f[3].as_symbol() == Some(drink))
    })
}

fn wants_tea(args: &[Option<&GroundValue>]) -> Outcome {
    wants(args, "tea")
}

fn wants_coffee(args: &[Option<&GroundValue>]) -> Outcome {
    wants(args, "coffee")
}

fn waiter_action(args: &[Option<&GroundValue>], step: impl Fn(i64, &[GroundValue]) -> Option<GroundValue>) -> Outcome {
    match bound(args, 0) {
        Some(v) => match waiter_state(v).and_then(|(pos, cups)| step(pos, cups)) {
            Some(next) => solve(args, vec![v.clone(), next]),
            None => Outcome::Fail,
        },
        None => Outcome::Insufficient,
    }
}

fn state(pos: i64, cups: Vec<GroundValue>) -> GroundValue {
    GroundValue::tuple(vec![GroundValue::Int(pos), GroundValue::list(cups)])
}

fn move_right(args: &[Option<&GroundValue>]) -> Outcome {
    waiter_action(args, |pos, cups| {
        (pos < cups.len() as i64).then(|| state(pos + 1, cups.to_vec()))
    })
}

fn move_left(args: &[Option<&GroundValue>]) -> Outcome {
    waiter_action(args, |pos, cups| (pos > 0).then(|| state(pos - 1, cups.to_vec())))
}

fn update_cup(
    pos: i64,
    cups: &[GroundValue],
    f: impl Fn(&[GroundValue]) -> Option<Vec<GroundValue>>,
) -> Option<GroundValue> {
    let (i, fields) = cup_at(cups, pos)?;
    let new = f(fields)?;
    let mut out = cups.to_vec();
    out[i] = GroundValue::tuple(new);
    Some(state(pos, out))
}

fn turn_cup_over(args: &[Option<&GroundValue>]) -> Outcome {
    waiter_action(args, |pos, cups| {
        update_cup(pos, cups, |f| {
            (f[1].as_symbol() == Some("down"))
                .then(|| vec![f[0].clone(), GroundValue::sym("up"), f[2].clone(), f[3].clone()])
        })
    })
}

fn pour(args: &[Option<&GroundValue>], drink: &'static str) -> Outcome {
    waiter_action(args, |pos, cups| {
        update_cup(pos, cups, |f| {
            (f[1].as_symbol() == Some("up") && f[2].as_symbol() == Some("none"))
                .then(|| vec![f[0].clone(), f[1].clone(), GroundValue::sym(drink), f[3].clone()])
        })
    })
}

fn pour_tea(args: &[Option<&GroundValue>]) -> Outcome {
    pour(args, "tea")
}

fn pour_coffee(args: &[Option<&GroundValue>]) -> Outcome {
    pour(args, "coffee")
}

// Chess: piece = (Type, Id, X, Y).

fn piece(v: &GroundValue) -> Option<&[GroundValue]> {
    v.as_tuple().filter(|t| t.len() == 4)
}

fn piece_test(args: &[Option<&GroundValue>], test: impl Fn(&[GroundValue]) -> bool) -> Outcome {
    match bound(args, 0) {
        Some(v) => match piece(v) {
            Some(p) if test(p) => Outcome::Solved(vec![v.clone()]),
            _ => Outcome::Fail,
        },
        None => Outcome::Insufficient,
    }
}

fn rank8(args: &[Option<&GroundValue>]) -> Outcome {
    piece_test(args, |p| p[3].as_int() == Some(8))
}

fn not_rank8(args: &[Option<&GroundValue>]) -> Outcome {
    piece_test(args, |p| p[3].as_int() != Some(8))
}

fn pawn(args: &[Option<&GroundValue>]) -> Outcome {
    piece_test(args, |p| p[0].as_symbol() == Some("p"))
}

fn not_pawn(args: &[Option<&GroundValue>]) -> Outcome {
    piece_test(args, |p| p[0].as_symbol() != Some("p"))
}

fn forward(args: &[Option<&GroundValue>]) -> Outcome {
    let step = |v: &GroundValue| {
        let p = piece(v)?;
        let y = p[3].as_int()?;
        (y < 8).then(|| GroundValue::tuple(vec![p[0].clone(), p[1].clone(), p[2].clone(), GroundValue::Int(y + 1)]))
    };
    let back = |v: &GroundValue| {
        let p = piece(v)?;
        let y = p[3].as_int()?;
        (y <= 8 && y > i64::MIN)
            .then(|| GroundValue::tuple(vec![p[0].clone(), p[1].clone(), p[2].clone(), GroundValue::Int(y - 1)]))
    };
    functional(args, step, back)
}

/// Named sets of built-ins together with their default primitive whitelist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pack {
    List,
    Waiter,
    Chess,
    Encryption,
}

impl FromStr for Pack {
    type Err = BkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "list" => Ok(Pack::List),
            "waiter" => Ok(Pack::Waiter),
            "chess" => Ok(Pack::Chess),
            "encryption" => Ok(Pack::Encryption),
            other => Err(BkError::UnknownPack(other.to_string())),
        }
    }
}

impl fmt::Display for Pack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pack::List => "list",
            Pack::Waiter => "waiter",
            Pack::Chess => "chess",
            Pack::Encryption => "encryption",
        };
        write!(f, "{s}")
    }
}

const LIST_BUILTINS: &[(&str, usize, BuiltinFn)] = &[
    ("empty", 1, empty),
    ("head", 2, head),
    ("tail", 2, tail),
    ("last", 2, last),
    ("reverse", 2, reverse),
    ("concat", 3, concat),
    ("hold", 2, hold),
    ("cons", 3, cons),
];

const WAITER_BUILTINS: &[(&str, usize, BuiltinFn)] = &[
    ("at_end", 1, at_end),
    ("wants_tea", 1, wants_tea),
    ("wants_coffee", 1, wants_coffee),
    ("move_left", 2, move_left),
    ("move_right", 2, move_right),
    ("turn_cup_over", 2, turn_cup_over),
    ("pour_tea", 2, pour_tea),
    ("pour_coffee", 2, pour_coffee),
];

const CHESS_BUILTINS: &[(&str, usize, BuiltinFn)] = &[
    ("rank8", 1, rank8),
    ("not_rank8", 1, not_rank8),
    ("pawn", 1, pawn),
    ("not_pawn", 1, not_pawn),
    ("forward", 2, forward),
];

impl Pack {
    /// Primitives fetchable by default when this pack is selected.
    pub fn default_prims(self) -> Vec<PredSym> {
        let names: &[(&str, usize)] = match self {
            Pack::List => &[
                ("empty", 1),
                ("head", 2),
                ("tail", 2),
                ("last", 2),
                ("reverse", 2),
                ("concat", 3),
                ("hold", 2),
                ("succ", 2),
                ("prec", 2),
            ],
            Pack::Waiter => &[
                ("at_end", 1),
                ("wants_tea", 1),
                ("wants_coffee", 1),
                ("move_left", 2),
                ("move_right", 2),
                ("turn_cup_over", 2),
                ("pour_tea", 2),
                ("pour_coffee", 2),
            ],
            Pack::Chess => &[
                ("rank8", 1),
                ("not_rank8", 1),
                ("pawn", 1),
                ("not_pawn", 1),
                ("head", 2),
                ("tail", 2),
                ("empty", 1),
                ("hold", 2),
                ("forward", 2),
            ],
            Pack::Encryption => &[("char_to_int", 2), ("int_to_char", 2), ("succ", 2), ("prec", 2)],
        };
        names.iter().map(|(n, a)| PredSym::new(n, *a)).collect()
    }
}

/// Compiled BK: built-ins, user clauses and the primitive whitelist.
#[derive(Debug, Clone, Default)]
pub struct CompiledRegistry {
    builtins: FxHashMap<Arc<str>, Builtin>,
    clauses: Vec<Clause>,
    defined: BTreeMap<Arc<str>, (usize, Vec<usize>)>,
    prims: Vec<PredSym>,
}

impl CompiledRegistry {
    /// A registry with the list built-ins and the given pack, whitelisting the
    /// pack's default primitives.
    pub fn with_pack(pack: Pack) -> Self {
        let mut r = CompiledRegistry::default();
        for &(n, a, f) in LIST_BUILTINS {
            r.add_builtin(n, a, f);
        }
        match pack {
            Pack::Encryption => {
                r.add_builtin("succ", 2, succ_mod26);
                r.add_builtin("prec", 2, prec_mod26);
                r.add_builtin("char_to_int", 2, char_to_int);
                r.add_builtin("int_to_char", 2, int_to_char);
            }
            _ => {
                r.add_builtin("succ", 2, succ);
                r.add_builtin("prec", 2, prec);
                r.add_builtin("char_to_int", 2, char_to_int);
                r.add_builtin("int_to_char", 2, int_to_char);
            }
        }
        let extra = match pack {
            Pack::Waiter => WAITER_BUILTINS,
            Pack::Chess => CHESS_BUILTINS,
            _ => &[],
        };
        for &(n, a, f) in extra {
            r.add_builtin(n, a, f);
        }
        r.prims = pack.default_prims();
        r
    }

    pub fn add_builtin(&mut self, name: &str, arity: usize, func: BuiltinFn) {
        let sym = PredSym::new(name, arity);
        self.builtins.insert(sym.name.clone(), Builtin { sym, func });
    }

    /// Add first-order clauses proved deductively. Bodies may call built-ins,
    /// other compiled predicates, or (negated) compiled predicates.
    pub fn add_clauses(&mut self, clauses: Vec<Clause>) -> Result<(), BkError> {
        for c in &clauses {
            let Some(p) = c.head.pred_sym() else {
                return Err(BkError::HigherOrder(crate::syntax::print_clause(c)));
            };
            if self.builtins.contains_key(&p.name) {
                return Err(BkError::Redefined(p.to_string()));
            }
            if c.is_higher_order() {
                return Err(BkError::HigherOrder(crate::syntax::print_clause(c)));
            }
            if let Some((a, _)) = self.defined.get(&p.name) {
                if *a != p.arity {
                    return Err(BkError::ArityClash {
                        name: p.name.to_string(),
                        a: *a,
                        b: p.arity,
                    });
                }
            }
            let idx = self.clauses.len();
            self.clauses.push(c.clone());
            self.defined
                .entry(p.name.clone())
                .or_insert_with(|| (p.arity, Vec::new()))
                .1
                .push(idx);
        }
        // every called predicate must be compiled
        for c in &clauses {
            for b in &c.body {
                let p = b.pred_sym().expect("first-order body");
                if !self.is_compiled(p) {
                    return Err(BkError::NotCompiled(
                        c.head.pred_sym().unwrap().to_string(),
                        p.to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn set_prims(&mut self, prims: Vec<PredSym>) -> Result<(), BkError> {
        for p in &prims {
            if !self.is_compiled(p) {
                return Err(BkError::UnknownPredicate(p.to_string()));
            }
        }
        self.prims = prims;
        Ok(())
    }

    pub fn prims(&self) -> &[PredSym] {
        &self.prims
    }

    pub fn is_prim(&self, p: &PredSym) -> bool {
        self.prims.contains(p)
    }

    pub fn builtin(&self, p: &PredSym) -> Option<&Builtin> {
        self.builtins.get(&p.name).filter(|b| b.sym.arity == p.arity)
    }

    /// Indices of the user clauses defining `p`.
    pub fn user_clauses(&self, p: &PredSym) -> Option<&[usize]> {
        self.defined
            .get(&p.name)
            .filter(|(a, _)| *a == p.arity)
            .map(|(_, v)| v.as_slice())
    }

    pub fn clause(&self, i: usize) -> &Clause {
        &self.clauses[i]
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn is_compiled(&self, p: &PredSym) -> bool {
        self.builtin(p).is_some() || self.user_clauses(p).is_some()
    }

    /// Names of every compiled predicate, built-in or user-defined.
    pub fn signature(&self) -> Vec<PredSym> {
        let mut out: Vec<PredSym> = self.builtins.values().map(|b| b.sym.clone()).collect();
        out.extend(self.defined.iter().map(|(n, (a, _))| PredSym {
            name: n.clone(),
            arity: *a,
        }));
        out.sort();
        out
    }
}

/// Call a built-in on an atom whose arguments are values or unbound variables.
pub fn call_builtin(b: &Builtin, args: &[Option<&GroundValue>]) -> Outcome {
    if args.len() != b.sym.arity {
        return Outcome::Fail;
    }
    (b.func)(args)
}

/// Deductively evaluate a compiled atom. Unbound argument positions are
/// variables; on success the full argument tuple is returned.
pub fn eval_compiled(atom: &Atom, registry: &CompiledRegistry) -> Result<Option<Vec<GroundValue>>, BkError> {
    let p = atom
        .pred_sym()
        .ok_or_else(|| BkError::UnknownPredicate(crate::syntax::print_atom(atom)))?;
    if !registry.is_compiled(p) {
        return Err(BkError::UnknownPredicate(p.to_string()));
    }
    let positive = Atom {
        negated: false,
        ..atom.clone()
    };
    let result = match registry.builtin(p) {
        Some(b) => {
            let args: Vec<Option<&GroundValue>> = positive.args.iter().map(Term::as_value).collect();
            match call_builtin(b, &args) {
                Outcome::Fail => None,
                Outcome::Solved(vs) => Some(vs),
                Outcome::Insufficient => return Err(BkError::Insufficient(p.to_string())),
            }
        }
        None => crate::mi::solve_compiled(&positive, registry)?,
    };
    if atom.negated {
        if !atom.args.iter().all(|t| t.as_value().is_some()) {
            return Err(BkError::Insufficient(format!("not {p}")));
        }
        Ok(match result {
            Some(_) => None,
            None => Some(atom.args.iter().filter_map(|t| t.as_value().cloned()).collect()),
        })
    } else {
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_atom;

    fn ev(reg: &CompiledRegistry, src: &str) -> Result<Option<Vec<GroundValue>>, BkError> {
        eval_compiled(&parse_atom(src).unwrap(), reg)
    }

    fn s(x: &str) -> GroundValue {
        GroundValue::sym(x)
    }

    #[test]
    fn head_of_list() {
        let reg = CompiledRegistry::with_pack(Pack::List);
        let out = ev(&reg, "head([j,o,e], X)").unwrap().unwrap();
        assert_eq!(out[1], s("j"));
        assert_eq!(ev(&reg, "head([], X)").unwrap(), None);
        assert!(matches!(ev(&reg, "head(X, a)"), Err(BkError::Insufficient(_))));
    }

    #[test]
    fn encryption_wraps_elsewhere_does_not() {
        let enc = CompiledRegistry::with_pack(Pack::Encryption);
        assert_eq!(ev(&enc, "succ(25, X)").unwrap().unwrap()[1], GroundValue::Int(0));
        assert_eq!(ev(&enc, "prec(0, X)").unwrap().unwrap()[1], GroundValue::Int(25));
        let list = CompiledRegistry::with_pack(Pack::List);
        assert_eq!(ev(&list, "succ(25, X)").unwrap().unwrap()[1], GroundValue::Int(26));
        assert_eq!(ev(&list, "prec(0, X)").unwrap(), None);
    }

    #[test]
    fn negated_rank8() {
        let reg = CompiledRegistry::with_pack(Pack::Chess);
        assert!(ev(&reg, "not(rank8((p,1,3,4)))").unwrap().is_some());
        assert!(ev(&reg, "not(rank8((p,1,3,8)))").unwrap().is_none());
        assert!(ev(&reg, "rank8((p,1,3,8))").unwrap().is_some());
    }

    #[test]
    fn forward_stops_at_rank_eight() {
        let reg = CompiledRegistry::with_pack(Pack::Chess);
        let out = ev(&reg, "forward((p,1,3,7), X)").unwrap().unwrap();
        assert_eq!(
            out[1],
            parse_atom("x((p,1,3,8))").unwrap().args[0].as_value().unwrap().clone()
        );
        assert_eq!(ev(&reg, "forward((p,1,3,8), X)").unwrap(), None);
    }

    #[test]
    fn chars_and_ints() {
        let reg = CompiledRegistry::with_pack(Pack::Encryption);
        assert_eq!(
            ev(&reg, "char_to_int(0'c, X)").unwrap().unwrap()[1],
            GroundValue::Int(2)
        );
        assert_eq!(ev(&reg, "char_to_int(c, X)").unwrap().unwrap()[1], GroundValue::Int(2));
        assert_eq!(ev(&reg, "int_to_char(0, X)").unwrap().unwrap()[1], s("a"));
        assert!(ev(&reg, "int_to_char(0, 0'a)").unwrap().is_some());
        assert!(ev(&reg, "int_to_char(0, a)").unwrap().is_some());
        assert_eq!(ev(&reg, "int_to_char(26, X)").unwrap(), None);
    }

    #[test]
    fn list_modes() {
        let reg = CompiledRegistry::with_pack(Pack::List);
        assert_eq!(
            ev(&reg, "concat([a,b], c, X)").unwrap().unwrap()[2],
            GroundValue::list(vec![s("a"), s("b"), s("c")])
        );
        let back = ev(&reg, "concat(X, Y, [a,b,c])").unwrap().unwrap();
        assert_eq!(back[0], GroundValue::list(vec![s("a"), s("b")]));
        assert_eq!(back[1], s("c"));
        let c = ev(&reg, "cons(a, [b], X)").unwrap().unwrap();
        assert_eq!(c[2], GroundValue::list(vec![s("a"), s("b")]));
        assert_eq!(
            ev(&reg, "reverse(X, [a,b])").unwrap().unwrap()[0],
            GroundValue::list(vec![s("b"), s("a")])
        );
        assert_eq!(ev(&reg, "empty(X)").unwrap().unwrap()[0], GroundValue::empty_list());
        assert_eq!(ev(&reg, "last([a,b], X)").unwrap().unwrap()[1], s("b"));
        assert_eq!(ev(&reg, "tail([a], X)").unwrap().unwrap()[1], GroundValue::empty_list());
    }

    #[test]
    fn waiter_actions_are_partial() {
        let reg = CompiledRegistry::with_pack(Pack::Waiter);
        let st = "(0,[(0,down,none,tea)])";
        assert!(ev(&reg, &format!("wants_tea({st})")).unwrap().is_some());
        assert!(ev(&reg, &format!("wants_coffee({st})")).unwrap().is_none());
        assert!(ev(&reg, &format!("pour_tea({st}, X)")).unwrap().is_none());
        assert!(ev(&reg, &format!("move_left({st}, X)")).unwrap().is_none());
        let up = ev(&reg, &format!("turn_cup_over({st}, X)")).unwrap().unwrap()[1].clone();
        assert_eq!(up.to_string(), "(0,[(0,up,none,tea)])");
        let full = ev(&reg, &format!("pour_tea({up}, X)")).unwrap().unwrap()[1].clone();
        assert_eq!(full.to_string(), "(0,[(0,up,tea,tea)])");
        let end = ev(&reg, &format!("move_right({full}, X)")).unwrap().unwrap()[1].clone();
        assert!(ev(&reg, &format!("at_end({end})")).unwrap().is_some());
        assert!(ev(&reg, &format!("move_right({end}, X)")).unwrap().is_none());
    }

    #[test]
    fn user_clauses_are_checked() {
        let mut reg = CompiledRegistry::with_pack(Pack::List);
        let cs = crate::syntax::parse_clauses("second(A,B) :- tail(A,C), head(C,B).", &[]).unwrap();
        reg.add_clauses(cs).unwrap();
        assert!(reg.is_compiled(&PredSym::new("second", 2)));
        let bad = crate::syntax::parse_clauses("p(A) :- q(A).", &[]).unwrap();
        assert!(matches!(reg.add_clauses(bad), Err(BkError::NotCompiled(..))));
        let redefine = crate::syntax::parse_clauses("head(A,B) :- hold(A,B).", &[]).unwrap();
        assert!(matches!(reg.add_clauses(redefine), Err(BkError::Redefined(_))));
        assert!(matches!(ev(&reg, "nope(1)"), Err(BkError::UnknownPredicate(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_list() -> impl Strategy<Value = GroundValue> {
            prop::collection::vec((0i64..5).prop_map(GroundValue::Int), 0..6).prop_map(GroundValue::list)
        }

        proptest! {
            #[test]
            fn reverse_is_an_involution(x in arb_list()) {
                let a = [Some(&x), None];
                let Outcome::Solved(once) = reverse(&a) else { panic!() };
                let b = [Some(&once[1]), None];
                let Outcome::Solved(twice) = reverse(&b) else { panic!() };
                prop_assert_eq!(&twice[1], &x);
            }

            #[test]
            fn concat_modes_agree(x in arb_list(), e in 0i64..5) {
                let e = GroundValue::Int(e);
                let Outcome::Solved(fwd) = concat(&[Some(&x), Some(&e), None]) else { panic!() };
                let Outcome::Solved(bwd) = concat(&[None, None, Some(&fwd[2])]) else { panic!() };
                prop_assert_eq!(&bwd[0], &x);
                prop_assert_eq!(&bwd[1], &e);
            }

            #[test]
            fn mod_succ_prec_inverse(n in 0i64..26) {
                let v = GroundValue::Int(n);
                let Outcome::Solved(s) = succ_mod26(&[Some(&v), None]) else { panic!() };
                let Outcome::Solved(p) = prec_mod26(&[Some(&s[1]), None]) else { panic!() };
                prop_assert_eq!(&p[1], &v);
            }
        }
    }
}
