//! Interpreted background knowledge: higher-order definitions proved by
//! meta-interpretation, so their predicate arguments may be invented.
//!
//! The shipped definitions are function-free; list traversal goes through the
//! bidirectional `cons/3` built-in.

use std::sync::Arc;

use thiserror::Error;

use crate::logic::{Atom, Clause, PredSym, Term, VarId};
use crate::syntax::{self, Item, Selection};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IbkError {
    #[error("higher-order definition has no clauses")]
    Empty,
    #[error("clause heads disagree: {0} vs {1}")]
    HeadMismatch(String, String),
    #[error("definition {0} has no higher-order atom")]
    NotHigherOrder(String),
    #[error("definition {0} negates {1}, which is not compiled")]
    BadNegation(String, String),
    #[error("unknown higher-order definition `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Parse(#[from] syntax::ParseError),
}

/// A named set of higher-order clauses sharing one head predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HigherOrderDefinition {
    pub sym: PredSym,
    pub clauses: Vec<Clause>,
    /// Whether each head argument position holds a predicate.
    pub ho_positions: Vec<bool>,
}

impl HigherOrderDefinition {
    /// Build a definition, inferring which head positions are higher-order: a
    /// position is higher-order if any clause uses its variable as a predicate.
    pub fn new(clauses: Vec<Clause>) -> Result<Self, IbkError> {
        let first = clauses.first().ok_or(IbkError::Empty)?;
        let sym = first
            .head
            .pred_sym()
            .cloned()
            .ok_or_else(|| IbkError::HeadMismatch(syntax::print_atom(&first.head), "a variable".into()))?;
        for c in &clauses {
            if c.head.pred_sym() != Some(&sym) {
                return Err(IbkError::HeadMismatch(sym.to_string(), syntax::print_atom(&c.head)));
            }
        }
        let mut ho = vec![false; sym.arity];
        for c in &clauses {
            for (i, arg) in c.head.args.iter().enumerate() {
                let Some(v) = arg.var_id() else { continue };
                if c.body.iter().any(|b| b.pred.var_id() == Some(v)) || matches!(arg, Term::HoVar(_)) {
                    ho[i] = true;
                }
            }
        }
        let clauses: Vec<Clause> = clauses.iter().map(|c| retype(c, &ho)).collect();
        if !clauses.iter().any(Clause::is_higher_order) {
            return Err(IbkError::NotHigherOrder(sym.to_string()));
        }
        Ok(HigherOrderDefinition {
            sym,
            clauses,
            ho_positions: ho,
        })
    }

    pub fn name(&self) -> &str {
        &self.sym.name
    }

    /// Reject negation of anything but compiled predicates or predicate
    /// arguments, which are resolved against compiled BK at proof time.
    pub fn check_negation(&self, is_compiled: impl Fn(&PredSym) -> bool) -> Result<(), IbkError> {
        for c in &self.clauses {
            for b in c.body.iter().filter(|b| b.negated) {
                if let Term::Pred(p) = &b.pred {
                    if !is_compiled(p) {
                        return Err(IbkError::BadNegation(self.sym.to_string(), p.to_string()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Make variables at higher-order head positions higher-order everywhere in the clause.
fn retype(c: &Clause, ho: &[bool]) -> Clause {
    let ho_vars: Vec<VarId> = c
        .head
        .args
        .iter()
        .zip(ho)
        .filter(|(_, h)| **h)
        .filter_map(|(t, _)| t.var_id())
        .collect();
    let fix = |t: &Term| match t {
        Term::FoVar(v) if ho_vars.contains(v) => Term::HoVar(*v),
        t => t.clone(),
    };
    let fix_atom = |a: &Atom| Atom {
        pred: fix(&a.pred),
        args: a.args.iter().map(fix).collect(),
        negated: a.negated,
    };
    Clause::new(fix_atom(&c.head), c.body.iter().map(fix_atom).collect())
}

/// Group `ibk(...)` clauses by head predicate, in first-appearance order.
pub fn definitions_from_clauses(clauses: Vec<Clause>) -> Result<Vec<HigherOrderDefinition>, IbkError> {
    let mut groups: Vec<(PredSym, Vec<Clause>)> = Vec::new();
    for c in clauses {
        let Some(p) = c.head.pred_sym().cloned() else {
            return Err(IbkError::HeadMismatch(
                "a predicate".into(),
                syntax::print_atom(&c.head),
            ));
        };
        match groups.iter_mut().find(|(q, _)| *q == p) {
            Some((_, cs)) => cs.push(c),
            None => groups.push((p, vec![c])),
        }
    }
    groups
        .into_iter()
        .map(|(_, cs)| HigherOrderDefinition::new(cs))
        .collect()
}

/// Parse an `.ibk` document; both `ibk(Head :- Body).` and bare clauses are accepted.
pub fn parse_definitions(src: &str) -> Result<Vec<HigherOrderDefinition>, IbkError> {
    let clauses = syntax::parse_document(src)?
        .into_iter()
        .filter_map(|item| match item {
            Item::Ibk(c) | Item::Clause(c) => Some(c),
            _ => None,
        })
        .collect();
    definitions_from_clauses(clauses)
}

const LIBRARY: &str = "
ibk(map(A,B,F) :- empty(A), empty(B)).
ibk(map(A,B,F) :- cons(X,Xs,A), cons(Y,Ys,B), F(X,Y), map(Xs,Ys,F)).
ibk(until(A,A,Cond,F) :- Cond(A)).
ibk(until(A,B,Cond,F) :- not(Cond(A)), F(A,C), until(C,B,Cond,F)).
ibk(ifthenelse(A,B,Cond,Then,Else) :- Cond(A), Then(A,B)).
ibk(ifthenelse(A,B,Cond,Then,Else) :- not(Cond(A)), Else(A,B)).
ibk(fold(A,Acc,Acc,F) :- empty(A)).
ibk(fold(A,Acc1,B,F) :- cons(X,Xs,A), F(X,Acc1,Acc2), fold(Xs,Acc2,B,F)).
ibk(reduceback(A,B,F) :- empty(A), empty(B)).
ibk(reduceback(A,B,F) :- cons(X,Xs,A), reduceback(Xs,C,F), F(C,X,B)).
ibk(closure(P,A,B) :- P(A,B)).
ibk(closure(P,A,B) :- P(A,C), closure(P,C,B)).
ibk(kstar(P,A,A)).
ibk(kstar(P,A,B) :- P(A,C), kstar(P,C,B)).
";

/// Every shipped definition: map/3, until/4, ifthenelse/5, fold/4,
/// reduceback/3, closure/3 and kstar/3.
pub fn ibk_library() -> Vec<Arc<HigherOrderDefinition>> {
    parse_definitions(LIBRARY)
        .expect("library parses")
        .into_iter()
        .map(Arc::new)
        .collect()
}

/// The default subset used by the experiments.
pub const STD_IBK: [&str; 3] = ["map", "until", "ifthenelse"];

pub fn select(sel: &Selection) -> Result<Vec<Arc<HigherOrderDefinition>>, IbkError> {
    let lib = ibk_library();
    let names: Vec<String> = match sel {
        Selection::All => return Ok(lib),
        Selection::Std => STD_IBK.iter().map(|s| s.to_string()).collect(),
        Selection::Names(ns) => ns.clone(),
    };
    names
        .iter()
        .map(|n| {
            lib.iter()
                .find(|d| d.name() == n)
                .cloned()
                .ok_or_else(|| IbkError::Unknown(n.clone()))
        })
        .collect()
}
