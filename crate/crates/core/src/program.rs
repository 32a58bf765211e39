//! Learned hypotheses as metarule substitutions.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::logic::{unify, Clause, PredSym, Substitution, Term, VarId};
use crate::metarule::Metarule;
use crate::syntax;

/// One metarule instantiation: a metarule plus a predicate symbol for each of
/// its existential variables, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionRecord {
    pub metarule: Arc<Metarule>,
    pub symbols: Vec<PredSym>,
}

impl SubstitutionRecord {
    pub fn head(&self) -> &PredSym {
        &self.symbols[0]
    }

    /// The clause obtained by grounding the metarule's existentials.
    pub fn project(&self) -> Clause {
        let mut s = Substitution::new();
        for (v, p) in self.metarule.existentials.iter().zip(&self.symbols) {
            s = s
                .with(Term::HoVar(*v), Term::Pred(p.clone()))
                .expect("existentials are distinct higher-order variables");
        }
        s.apply_clause(&self.metarule.template)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("clause `{0}` is not an instance of any given metarule")]
    NoMetarule(String),
}

/// An ordered set of substitution records.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub subs: Vec<SubstitutionRecord>,
}

impl Program {
    pub fn new(subs: Vec<SubstitutionRecord>) -> Self {
        Program { subs }
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn clauses(&self) -> Vec<Clause> {
        self.subs.iter().map(SubstitutionRecord::project).collect()
    }

    /// Head symbols in order of first definition.
    pub fn defined(&self) -> Vec<PredSym> {
        let mut out: Vec<PredSym> = Vec::new();
        for s in &self.subs {
            if !out.contains(s.head()) {
                out.push(s.head().clone());
            }
        }
        out
    }

    pub fn has_duplicates(&self) -> bool {
        self.subs.iter().enumerate().any(|(i, a)| self.subs[..i].contains(a))
    }

    /// Recover substitutions from clauses. Each clause is matched against the
    /// metarule with the fewest existentials that it instantiates, ties broken
    /// by library order, so a recursive clause reads as tailrec, not chain.
    pub fn from_clauses(clauses: &[Clause], metarules: &[Arc<Metarule>]) -> Result<Self, ProgramError> {
        let mut order: Vec<&Arc<Metarule>> = metarules.iter().collect();
        order.sort_by_key(|m| m.existentials.len());
        let mut subs = Vec::new();
        for c in clauses {
            let rec = order
                .iter()
                .find_map(|m| match_metarule(c, m))
                .ok_or_else(|| ProgramError::NoMetarule(syntax::print_clause(c)))?;
            subs.push(rec);
        }
        Ok(Program { subs })
    }
}

/// Match `clause` as an instance of `m`: existentials map to predicate
/// symbols, universals map one-to-one onto the clause's variables.
pub fn match_metarule(clause: &Clause, m: &Arc<Metarule>) -> Option<SubstitutionRecord> {
    let t = &m.template;
    if t.body.len() != clause.body.len() {
        return None;
    }
    let offset = clause.var_span();
    let renamed = t.offset(offset);
    let mut s = Substitution::new();
    for (a, b) in renamed.atoms().zip(clause.atoms()) {
        if a.negated != b.negated {
            return None;
        }
        s = unify(a, b, &s)?;
    }
    let mut symbols = Vec::new();
    for v in &m.existentials {
        match s.apply_term(&Term::HoVar(VarId(v.0 + offset))) {
            Term::Pred(p) => symbols.push(p),
            _ => return None,
        }
    }
    // universals must be a renaming
    let mut image: HashMap<VarId, VarId> = HashMap::new();
    for tv in t.vars() {
        let v = tv.var_id().unwrap();
        if m.is_existential(v) {
            continue;
        }
        let shifted = tv.offset(offset);
        let target = s.apply_term(&shifted);
        let w = target.var_id()?;
        if w.0 >= offset && w != shifted.var_id().unwrap() {
            return None;
        }
        if image.values().any(|x| *x == w) {
            return None;
        }
        image.insert(v, w);
    }
    Some(SubstitutionRecord {
        metarule: m.clone(),
        symbols,
    })
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", syntax::print_clauses(&self.clauses()))
    }
}

/// Invented symbol `name_i`.
pub fn invented_name(task: &str, i: usize) -> String {
    format!("{task}_{i}")
}

/// Whether `name` has the reserved `task_<index>` form.
pub fn invented_index(task: &str, name: &str) -> Option<usize> {
    name.strip_prefix(task)?.strip_prefix('_')?.parse().ok()
}
