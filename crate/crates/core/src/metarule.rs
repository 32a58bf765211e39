//! Metarules: second-order clause templates and their classification.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::logic::{Clause, Term, VarId};
use crate::syntax::{self, Item, MetaruleDecl};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaruleError {
    #[error("metarule `{0}`: existential variable `{1}` does not occur in the template")]
    UnusedExistential(String, String),
    #[error("metarule `{0}`: the head predicate must be existentially quantified")]
    HeadNotExistential(String),
    #[error("metarule `{0}`: existential `{1}` is used as a first-order argument")]
    KindClash(String, String),
    #[error("unknown metarule `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Parse(#[from] syntax::ParseError),
}

/// A named template `P(..) :- Q(..), ...` whose existential variables are
/// instantiated to predicate symbols during learning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metarule {
    pub name: String,
    pub template: Clause,
    /// Existential variables in declaration order; the head predicate is first.
    pub existentials: Vec<VarId>,
    pub var_names: Vec<String>,
}

/// The `H^i_{j,k}` fragment a metarule belongs to: maximum literal arity `i`,
/// body length `j`, and `k` existentials beyond the `j+1` literal predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fragment {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H^{}_{{{},{}}}", self.i, self.j, self.k)
    }
}

impl Metarule {
    pub fn from_decl(decl: MetaruleDecl) -> Result<Self, MetaruleError> {
        let MetaruleDecl {
            name,
            existentials,
            clause,
            var_names,
        } = decl;
        let mut ids = Vec::new();
        for e in &existentials {
            match var_names.iter().position(|n| n == e) {
                Some(i) => ids.push(VarId(i as u32)),
                None => return Err(MetaruleError::UnusedExistential(name, e.clone())),
            }
        }
        for (id, e) in ids.iter().zip(&existentials) {
            if clause.terms().any(|t| *t == Term::FoVar(*id)) {
                return Err(MetaruleError::KindClash(name, e.clone()));
            }
        }
        match clause.head.pred {
            Term::HoVar(v) if ids.contains(&v) => {
                // keep the head predicate first
                let pos = ids.iter().position(|x| *x == v).unwrap();
                let head = ids.remove(pos);
                ids.insert(0, head);
            }
            _ => return Err(MetaruleError::HeadNotExistential(name)),
        }
        Ok(Metarule {
            name,
            template: clause,
            existentials: ids,
            var_names,
        })
    }

    pub fn parse(src: &str) -> Result<Vec<Metarule>, MetaruleError> {
        let mut out = Vec::new();
        for item in syntax::parse_document(src)? {
            if let Item::Metarule(d) = item {
                out.push(Metarule::from_decl(d)?);
            }
        }
        Ok(out)
    }

    pub fn head_var(&self) -> VarId {
        self.existentials[0]
    }

    pub fn head_arity(&self) -> usize {
        self.template.head.args.len()
    }

    pub fn is_existential(&self, v: VarId) -> bool {
        self.existentials.contains(&v)
    }

    /// Body literals whose predicate is the head variable.
    pub fn is_recursive(&self) -> bool {
        self.template.body.iter().any(|a| a.pred == self.template.head.pred)
    }

    pub fn classify(&self) -> Fragment {
        let i = self.template.atoms().map(|a| a.args.len()).max().unwrap_or(0);
        let j = self.template.body.len();
        let k = self.existentials.len().saturating_sub(j + 1);
        Fragment { i, j, k }
    }

    /// Whether the first-order skeleton is a forward chain
    /// `P(A,B) :- Q1(A,C1), ..., Qi(C_{i-1},B), R1(D1), ...`.
    ///
    /// Higher-order arguments are ignored, so curried chains qualify.
    pub fn is_forward_chained(&self) -> bool {
        let fo = |t: &Term| match t {
            Term::FoVar(v) => Some(*v),
            _ => None,
        };
        let head: Vec<VarId> = self.template.head.args.iter().filter_map(fo).collect();
        if head.len() != 2 || head[0] == head[1] {
            if head.len() == 2 {
                log::warn!(
                    "metarule `{}` has a repeated head variable and is not forward-chained",
                    self.name
                );
            }
            return false;
        }
        let (a, b) = (head[0], head[1]);
        let mut at = a;
        let mut seen = vec![a];
        let mut binary = 0;
        for lit in &self.template.body {
            if lit.negated {
                return false;
            }
            let vs: Vec<VarId> = lit.args.iter().filter_map(fo).collect();
            match vs.len() {
                1 => {}
                2 => {
                    if vs[0] != at || vs[1] == vs[0] {
                        return false;
                    }
                    if vs[1] != b && seen.contains(&vs[1]) {
                        return false;
                    }
                    at = vs[1];
                    seen.push(at);
                    binary += 1;
                }
                _ => return false,
            }
        }
        if binary == 0 || at != b {
            return false;
        }
        // unary literals may only test variables on the chain
        self.template.body.iter().all(|lit| {
            let vs: Vec<VarId> = lit.args.iter().filter_map(fo).collect();
            vs.len() != 1 || seen.contains(&vs[0])
        })
    }

    /// Print as a `metarule/3` directive.
    pub fn to_source(&self) -> String {
        let names = syntax::clause_var_names(&self.template);
        let ex: Vec<String> = self.existentials.iter().map(|v| names[v].clone()).collect();
        format!(
            "metarule({},[{}],{}).",
            self.name,
            ex.join(","),
            syntax::print_clause_body(&self.template)
        )
    }
}

const STANDARD: &str = "
metarule(monadic,   [P,Q],   P(A,A) :- Q(A)).
metarule(identity,  [P,Q],   P(A,B) :- Q(A,B)).
metarule(inverse,   [P,Q],   P(A,B) :- Q(B,A)).
metarule(didentity, [P,Q,R], P(A,B) :- Q(A,B), R(A,B)).
metarule(precon,    [P,Q,R], P(A,B) :- Q(A), R(A,B)).
metarule(postcon,   [P,Q,R], P(A,B) :- Q(A,B), R(B)).
metarule(curry1,    [P,Q,R], P(A,B) :- Q(A,B,R)).
metarule(curry2,    [P,Q,R,S], P(A,B) :- Q(A,B,R,S)).
metarule(curry3,    [P,Q,R,S,T], P(A,B) :- Q(A,B,R,S,T)).
metarule(chain,     [P,Q,R], P(A,B) :- Q(A,C), R(C,B)).
metarule(tailrec,   [P,Q],   P(A,B) :- Q(A,C), P(C,B)).
";

/// The eleven standard metarules, in library order.
pub fn standard_library() -> Vec<Arc<Metarule>> {
    Metarule::parse(STANDARD)
        .expect("standard metarules parse")
        .into_iter()
        .map(Arc::new)
        .collect()
}

/// The standard metarules the bottom-up engine accepts.
pub fn forward_chained_library() -> Vec<Arc<Metarule>> {
    standard_library()
        .into_iter()
        .filter(|m| m.is_forward_chained())
        .collect()
}

/// Pick metarules from the standard library by name, keeping the given order.
pub fn select(names: &[String]) -> Result<Vec<Arc<Metarule>>, MetaruleError> {
    let lib = standard_library();
    names
        .iter()
        .map(|n| {
            lib.iter()
                .find(|m| &m.name == n)
                .cloned()
                .ok_or_else(|| MetaruleError::Unknown(n.clone()))
        })
        .collect()
}
