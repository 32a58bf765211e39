//! Learning tasks, task files and engine configuration.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::bk::{BkError, CompiledRegistry};
use crate::ibk::{HigherOrderDefinition, IbkError};
use crate::logic::{Atom, Clause, PredSym};
use crate::metarule::{Metarule, MetaruleError};
use crate::program::invented_index;
use crate::syntax::{self, Item, ParseError, Selection};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("example {0} is both positive and negative")]
    Overlap(String),
    #[error("examples mix predicates {0} and {1}")]
    MixedPredicates(String, String),
    #[error("task has no positive examples")]
    NoPositives,
    #[error("target {0} is already defined in the background knowledge")]
    TargetDefined(String),
    #[error("symbol {0} clashes with the invented-symbol pattern for target `{1}`")]
    ReservedSymbol(String, String),
    #[error(transparent)]
    Bk(#[from] BkError),
    #[error(transparent)]
    Ibk(#[from] IbkError),
    #[error(transparent)]
    Metarule(#[from] MetaruleError),
}

/// Contents of a `.mil` task file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskFile {
    pub name: Option<String>,
    pub pos: Vec<Atom>,
    pub neg: Vec<Atom>,
    pub prims: Vec<PredSym>,
    pub metarules: Option<Selection>,
    pub interpreted: Option<Selection>,
    pub metarule_decls: Vec<Metarule>,
    pub ibk_clauses: Vec<Clause>,
    pub bk_clauses: Vec<Clause>,
}

/// Parse a task file, rejecting overlapping or mixed-predicate examples.
pub fn parse_task(text: &str) -> Result<TaskFile, TaskError> {
    let mut t = TaskFile::default();
    for item in syntax::parse_document(text)? {
        match item {
            Item::Pos(a) => t.pos.push(a),
            Item::Neg(a) => t.neg.push(a),
            Item::Prim(p) => t.prims.push(p),
            Item::Task(n) => t.name = Some(n),
            Item::Metarules(s) => t.metarules = Some(s),
            Item::Interpreted(s) => t.interpreted = Some(s),
            Item::Metarule(d) => t.metarule_decls.push(Metarule::from_decl(d)?),
            Item::Ibk(c) => t.ibk_clauses.push(c),
            Item::Clause(c) => t.bk_clauses.push(c),
        }
    }
    check_examples(&t.pos, &t.neg)?;
    Ok(t)
}

impl TaskFile {
    /// Assemble a task on top of `registry`: the file's clauses are compiled
    /// into it, its `prim/1` directives become the whitelist, and the
    /// metarule and interpreted selections default to the standard libraries.
    pub fn build(&self, mut registry: CompiledRegistry) -> Result<LearningTask, TaskError> {
        registry.add_clauses(self.bk_clauses.clone())?;
        if !self.prims.is_empty() {
            registry.set_prims(self.prims.clone())?;
        }
        let mut ibk = crate::ibk::select(self.interpreted.as_ref().unwrap_or(&Selection::Std))?;
        if !self.ibk_clauses.is_empty() {
            ibk.extend(
                crate::ibk::definitions_from_clauses(self.ibk_clauses.clone())?
                    .into_iter()
                    .map(Arc::new),
            );
        }
        let mut metarules = match self.metarules.as_ref().unwrap_or(&Selection::Std) {
            Selection::Std | Selection::All => crate::metarule::standard_library(),
            Selection::Names(ns) => crate::metarule::select(ns)?,
        };
        metarules.extend(self.metarule_decls.iter().cloned().map(Arc::new));
        LearningTask::new(self.pos.clone(), self.neg.clone(), Arc::new(registry), ibk, metarules)
    }
}

fn check_examples(pos: &[Atom], neg: &[Atom]) -> Result<Option<PredSym>, TaskError> {
    let mut target: Option<PredSym> = None;
    for a in pos.iter().chain(neg) {
        let p = a.pred_sym().cloned().expect("examples are ground");
        match &target {
            None => target = Some(p),
            Some(t) if *t != p => return Err(TaskError::MixedPredicates(t.to_string(), p.to_string())),
            _ => {}
        }
    }
    let pos_set: HashSet<&Atom> = pos.iter().collect();
    if let Some(a) = neg.iter().find(|a| pos_set.contains(a)) {
        return Err(TaskError::Overlap(syntax::print_atom(a)));
    }
    Ok(target)
}

/// A validated learning problem.
#[derive(Debug, Clone)]
pub struct LearningTask {
    pub target: PredSym,
    pub pos: Vec<Atom>,
    pub neg: Vec<Atom>,
    pub registry: Arc<CompiledRegistry>,
    pub ibk: Vec<Arc<HigherOrderDefinition>>,
    pub metarules: Vec<Arc<Metarule>>,
}

impl LearningTask {
    pub fn new(
        pos: Vec<Atom>,
        neg: Vec<Atom>,
        registry: Arc<CompiledRegistry>,
        ibk: Vec<Arc<HigherOrderDefinition>>,
        metarules: Vec<Arc<Metarule>>,
    ) -> Result<Self, TaskError> {
        if pos.is_empty() {
            return Err(TaskError::NoPositives);
        }
        let target = check_examples(&pos, &neg)?.expect("non-empty");
        if registry.is_compiled(&target) || ibk.iter().any(|d| d.sym.name == target.name) {
            return Err(TaskError::TargetDefined(target.to_string()));
        }
        for d in &ibk {
            d.check_negation(|p| registry.is_compiled(p))?;
        }
        let task = LearningTask {
            target,
            pos,
            neg,
            registry,
            ibk,
            metarules,
        };
        if let Some(bad) = task
            .signature()
            .into_iter()
            .find(|s| invented_index(&task.target.name, s).is_some())
        {
            return Err(TaskError::ReservedSymbol(bad, task.target.name.to_string()));
        }
        Ok(task)
    }

    /// Predicate names of the background knowledge.
    pub fn signature(&self) -> Vec<String> {
        let mut out: Vec<String> = self.registry.signature().iter().map(|p| p.name.to_string()).collect();
        out.extend(self.ibk.iter().map(|d| d.sym.name.to_string()));
        out
    }
}

/// Search limits shared by both engines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    /// Upper bound on program size for iterative deepening.
    pub max_clauses: usize,
    /// Resolution steps allowed per deductive proof attempt.
    pub step_budget: u64,
    pub wall_timeout: Duration,
    /// Reserved for harnesses; the engines are deterministic.
    pub seed: u64,
    /// Goals nested deeper than this in the proof tree are abandoned.
    pub max_proof_depth: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_clauses: 5,
            step_budget: 1_000_000,
            wall_timeout: Duration::from_secs(60),
            seed: 0,
            max_proof_depth: 500,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bk::Pack;

    #[test]
    fn parses_task_file() {
        let t = parse_task("prim(tail/2). pos(f([j,o,e],[i,n,d])).").unwrap();
        assert_eq!(t.prims, vec![PredSym::new("tail", 2)]);
        assert_eq!(t.pos.len(), 1);
        let t = parse_task("pos(f([a,b],[a])).").unwrap();
        assert_eq!(syntax::print_atom(&t.pos[0]), "f([a,b],[a])");
    }

    #[test]
    fn overlap_and_mixing_rejected() {
        assert!(matches!(
            parse_task("pos(f(1,2)). neg(f(1,2))."),
            Err(TaskError::Overlap(_))
        ));
        assert!(matches!(
            parse_task("pos(f(1,2)). neg(g(1,2))."),
            Err(TaskError::MixedPredicates(..))
        ));
    }

    #[test]
    fn builds_with_defaults_and_overrides() {
        let t = parse_task("pos(f([a,b],[b])). prim(tail/2). metarules([identity]).").unwrap();
        let task = t.build(CompiledRegistry::with_pack(Pack::List)).unwrap();
        assert_eq!(task.metarules.len(), 1);
        assert_eq!(task.ibk.len(), 3);
        assert_eq!(task.registry.prims(), [PredSym::new("tail", 2)]);
        let t =
            parse_task("pos(f(a,b)). edge(a,b). interpreted([closure]). metarule(m,[P,Q],P(A,B):-Q(B,A)).").unwrap();
        let task = t.build(CompiledRegistry::with_pack(Pack::List)).unwrap();
        assert_eq!(task.metarules.len(), 12);
        assert_eq!(task.ibk[0].name(), "closure");
        assert!(task.registry.is_compiled(&PredSym::new("edge", 2)));
    }

    #[test]
    fn reserved_and_defined_targets() {
        let reg = Arc::new(CompiledRegistry::with_pack(Pack::List));
        let pos = vec![syntax::parse_atom("head([1],1)").unwrap()];
        assert!(matches!(
            LearningTask::new(pos, vec![], reg.clone(), vec![], vec![]),
            Err(TaskError::TargetDefined(_))
        ));
        let mut clash = CompiledRegistry::with_pack(Pack::List);
        clash
            .add_clauses(syntax::parse_clauses("f_1(A,B) :- hold(A,B).", &[]).unwrap())
            .unwrap();
        let pos = vec![syntax::parse_atom("f(1,1)").unwrap()];
        assert!(matches!(
            LearningTask::new(pos, vec![], Arc::new(clash), vec![], vec![]),
            Err(TaskError::ReservedSymbol(..))
        ));
    }
}
