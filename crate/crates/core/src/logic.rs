//! Terms, atoms, clauses, substitutions and unification.
//!
//! The clause language is function-free: a term is a variable, a ground
//! value or a predicate symbol. Ground values may be structured (lists and
//! tuples), but clauses never build or destructure them; that work is done
//! by built-in predicates.
//!
//! Variables come in two kinds. First-order variables bind to ground values
//! or other first-order variables, higher-order variables bind to predicate
//! symbols or other higher-order variables. Unification enforces the split.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A fully ground, structured constant.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum GroundValue {
    Symbol(Arc<str>),
    Int(i64),
    Char(char),
    List(Arc<[GroundValue]>),
    Tuple(Arc<[GroundValue]>),
}

impl GroundValue {
    pub fn sym(name: &str) -> Self {
        GroundValue::Symbol(Arc::from(name))
    }

    pub fn list(items: Vec<GroundValue>) -> Self {
        GroundValue::List(Arc::from(items))
    }

    pub fn tuple(items: Vec<GroundValue>) -> Self {
        GroundValue::Tuple(Arc::from(items))
    }

    pub fn empty_list() -> Self {
        GroundValue::List(Arc::from(Vec::new()))
    }

    /// A string as a list of characters.
    pub fn chars(text: &str) -> Self {
        GroundValue::list(text.chars().map(GroundValue::Char).collect())
    }

    pub fn as_list(&self) -> Option<&[GroundValue]> {
        match self {
            GroundValue::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[GroundValue]> {
        match self {
            GroundValue::Tuple(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            GroundValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            GroundValue::Symbol(s) => Some(s),
            _ => None,
        }
    }

    /// Number of nodes in the value tree.
    pub fn size(&self) -> usize {
        match self {
            GroundValue::List(items) | GroundValue::Tuple(items) => {
                1 + items.iter().map(GroundValue::size).sum::<usize>()
            }
            _ => 1,
        }
    }
}

fn is_plain_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str, quote: char) -> fmt::Result {
    write!(f, "{quote}")?;
    for c in s.chars() {
        match c {
            '\\' => write!(f, "\\\\")?,
            '\n' => write!(f, "\\n")?,
            c if c == quote => write!(f, "\\{c}")?,
            c => write!(f, "{c}")?,
        }
    }
    write!(f, "{quote}")
}

impl fmt::Display for GroundValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundValue::Symbol(s) if is_plain_identifier(s) => write!(f, "{s}"),
            GroundValue::Symbol(s) => write_quoted(f, s, '\''),
            GroundValue::Int(v) => write!(f, "{v}"),
            GroundValue::Char(c) => match c {
                '\\' => write!(f, "0'\\\\"),
                '\n' => write!(f, "0'\\n"),
                c => write!(f, "0'{c}"),
            },
            GroundValue::List(items) => {
                if !items.is_empty() && items.iter().all(|v| matches!(v, GroundValue::Char(_))) {
                    let text: String = items
                        .iter()
                        .map(|v| match v {
                            GroundValue::Char(c) => *c,
                            _ => unreachable!(),
                        })
                        .collect();
                    return write_quoted(f, &text, '"');
                }
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            GroundValue::Tuple(items) => {
                write!(f, "(")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A predicate symbol with its arity.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PredSym {
    pub name: Arc<str>,
    pub arity: usize,
}

impl PredSym {
    pub fn new(name: &str, arity: usize) -> Self {
        PredSym {
            name: Arc::from(name),
            arity,
        }
    }
}

impl fmt::Display for PredSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// Interned variable identifier. Ids are local to a clause until renamed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VarId(pub u32);

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Term {
    FoVar(VarId),
    HoVar(VarId),
    Value(GroundValue),
    Pred(PredSym),
}

impl Term {
    pub fn var_id(&self) -> Option<VarId> {
        match self {
            Term::FoVar(v) | Term::HoVar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        self.var_id().is_some()
    }

    pub fn is_higher_order(&self) -> bool {
        matches!(self, Term::HoVar(_) | Term::Pred(_))
    }

    pub fn as_value(&self) -> Option<&GroundValue> {
        match self {
            Term::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_pred(&self) -> Option<&PredSym> {
        match self {
            Term::Pred(p) => Some(p),
            _ => None,
        }
    }

    /// Same term with every variable id shifted by `offset`.
    pub fn offset(&self, offset: u32) -> Term {
        match self {
            Term::FoVar(v) => Term::FoVar(VarId(v.0 + offset)),
            Term::HoVar(v) => Term::HoVar(VarId(v.0 + offset)),
            t => t.clone(),
        }
    }
}

/// A predicate applied to arguments, optionally under negation as failure.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Atom {
    pub pred: Term,
    pub args: Vec<Term>,
    pub negated: bool,
}

impl Atom {
    pub fn new(pred: Term, args: Vec<Term>) -> Self {
        Atom {
            pred,
            args,
            negated: false,
        }
    }

    /// Ground atom `name(values...)`.
    pub fn fact(name: &str, values: Vec<GroundValue>) -> Self {
        let arity = values.len();
        Atom::new(
            Term::Pred(PredSym::new(name, arity)),
            values.into_iter().map(Term::Value).collect(),
        )
    }

    pub fn negate(mut self) -> Self {
        self.negated = !self.negated;
        self
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn pred_sym(&self) -> Option<&PredSym> {
        self.pred.as_pred()
    }

    pub fn is_ground(&self) -> bool {
        !self.pred.is_var() && self.args.iter().all(|t| !t.is_var())
    }

    pub fn is_higher_order(&self) -> bool {
        self.args.iter().any(Term::is_higher_order) || matches!(self.pred, Term::HoVar(_))
    }

    /// Well-formed when a bound predicate symbol's arity matches the argument count.
    pub fn is_well_formed(&self) -> bool {
        match &self.pred {
            Term::Pred(p) => p.arity == self.args.len(),
            Term::HoVar(_) => true,
            _ => false,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        std::iter::once(&self.pred).chain(self.args.iter())
    }

    pub fn offset(&self, offset: u32) -> Atom {
        Atom {
            pred: self.pred.offset(offset),
            args: self.args.iter().map(|t| t.offset(offset)).collect(),
            negated: self.negated,
        }
    }
}

/// A definite clause `head :- body`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Clause {
    pub head: Atom,
    pub body: Vec<Atom>,
}

impl Clause {
    pub fn new(head: Atom, body: Vec<Atom>) -> Self {
        Clause { head, body }
    }

    pub fn fact(head: Atom) -> Self {
        Clause { head, body: vec![] }
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.head).chain(self.body.iter())
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.atoms().flat_map(Atom::terms)
    }

    /// One past the largest variable id, i.e. the number of ids a renaming must reserve.
    pub fn var_span(&self) -> u32 {
        self.terms()
            .filter_map(Term::var_id)
            .map(|v| v.0 + 1)
            .max()
            .unwrap_or(0)
    }

    /// Distinct variables in order of first occurrence.
    pub fn vars(&self) -> Vec<Term> {
        let mut seen = Vec::new();
        for t in self.terms() {
            if t.is_var() && !seen.contains(t) {
                seen.push(t.clone());
            }
        }
        seen
    }

    pub fn is_higher_order(&self) -> bool {
        self.atoms().any(Atom::is_higher_order)
    }

    pub fn offset(&self, offset: u32) -> Clause {
        Clause {
            head: self.head.offset(offset),
            body: self.body.iter().map(|a| a.offset(offset)).collect(),
        }
    }
}

/// Storage that unification binds variables in.
pub trait Bindings {
    fn lookup(&self, var: VarId) -> Option<&Term>;
    fn bind(&mut self, var: VarId, term: Term);
}

/// Follow variable bindings until an unbound variable or a non-variable term.
pub fn deref<'a, B: Bindings + ?Sized>(bindings: &'a B, mut term: &'a Term) -> &'a Term {
    while let Some(v) = term.var_id() {
        match bindings.lookup(v) {
            Some(next) => term = next,
            None => break,
        }
    }
    term
}

/// Unify two terms in place. On failure, bindings made before the clash are
/// left behind; callers that need atomicity work on a copy or undo via a trail.
pub fn unify_terms<B: Bindings + ?Sized>(bindings: &mut B, x: &Term, y: &Term) -> bool {
    let x = deref(bindings, x).clone();
    let y = deref(bindings, y).clone();
    match (&x, &y) {
        (Term::FoVar(a), Term::FoVar(b)) | (Term::HoVar(a), Term::HoVar(b)) if a == b => true,
        (Term::FoVar(a), Term::FoVar(_) | Term::Value(_)) => {
            bindings.bind(*a, y);
            true
        }
        (Term::Value(_), Term::FoVar(b)) => {
            bindings.bind(*b, x);
            true
        }
        (Term::HoVar(a), Term::HoVar(_) | Term::Pred(_)) => {
            bindings.bind(*a, y);
            true
        }
        (Term::Pred(_), Term::HoVar(b)) => {
            bindings.bind(*b, x);
            true
        }
        (Term::Value(v), Term::Value(w)) => v == w,
        (Term::Pred(p), Term::Pred(q)) => p == q,
        _ => false,
    }
}

/// Unify two atoms in place, ignoring their negation flags.
pub fn unify_atoms<B: Bindings + ?Sized>(bindings: &mut B, a: &Atom, b: &Atom) -> bool {
    if a.args.len() != b.args.len() {
        return false;
    }
    if !unify_terms(bindings, &a.pred, &b.pred) {
        return false;
    }
    if let Term::Pred(p) = deref(bindings, &a.pred) {
        if p.arity != a.args.len() {
            return false;
        }
    }
    a.args.iter().zip(&b.args).all(|(x, y)| unify_terms(bindings, x, y))
}

/// A finite map from variables to terms, kept idempotent.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Substitution {
    map: BTreeMap<VarId, Term>,
}

impl Bindings for Substitution {
    fn lookup(&self, var: VarId) -> Option<&Term> {
        self.map.get(&var)
    }

    fn bind(&mut self, var: VarId, term: Term) {
        self.map.insert(var, term);
    }
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, var: VarId) -> Option<&Term> {
        self.map.get(&var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, &Term)> {
        self.map.iter()
    }

    /// Bind `var` to `term`, rejecting kind violations and self-bindings.
    pub fn with(mut self, var: Term, term: Term) -> Option<Self> {
        if unify_terms(&mut self, &var, &term) {
            self.normalize();
            Some(self)
        } else {
            None
        }
    }

    /// Resolve chains so every value is final.
    fn normalize(&mut self) {
        let keys: Vec<VarId> = self.map.keys().copied().collect();
        for k in keys {
            let resolved = deref(self, &self.map[&k]).clone();
            if resolved.var_id() == Some(k) {
                self.map.remove(&k);
            } else {
                self.map.insert(k, resolved);
            }
        }
    }

    pub fn apply_term(&self, t: &Term) -> Term {
        deref(self, t).clone()
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        Atom {
            pred: self.apply_term(&a.pred),
            args: a.args.iter().map(|t| self.apply_term(t)).collect(),
            negated: a.negated,
        }
    }

    pub fn apply_clause(&self, c: &Clause) -> Clause {
        Clause {
            head: self.apply_atom(&c.head),
            body: c.body.iter().map(|a| self.apply_atom(a)).collect(),
        }
    }
}

/// Most general unifier of `a` and `b` extending `s`, or `None`.
pub fn unify(a: &Atom, b: &Atom, s: &Substitution) -> Option<Substitution> {
    let mut out = s.clone();
    if unify_atoms(&mut out, a, b) {
        out.normalize();
        Some(out)
    } else {
        None
    }
}
