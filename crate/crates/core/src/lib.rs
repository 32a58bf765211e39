//! Meta-interpretive learning of higher-order logic programs.
//!
//! Two learners share one clause language: [`mi::learn`] is a top-down
//! meta-interpreter that proves examples by instantiating metarules and
//! unfolding higher-order definitions such as `map/3`, and [`fc::learn_fc`]
//! is a bottom-up learner that saturates a state-guarded fact store and
//! searches over metarule instantiations. [`complexity`] evaluates the
//! hypothesis-space and sample-complexity bounds that motivate abstraction.

pub mod bk;
pub mod complexity;
pub mod fc;
pub mod ibk;
pub mod logic;
pub mod metarule;
pub mod mi;
pub mod program;
pub mod syntax;
pub mod task;

pub use bk::{eval_compiled, CompiledRegistry, Pack};
pub use fc::{learn_fc, DeducedStore, FcError, FcLearned, FcLimits};
pub use ibk::{ibk_library, HigherOrderDefinition};
pub use logic::{unify, Atom, Clause, GroundValue, PredSym, Substitution, Term, VarId};
pub use metarule::{forward_chained_library, standard_library, Fragment, Metarule};
pub use mi::{eval, invent_symbols, learn, Learned, SearchOutcome, SearchStats, Verdict};
pub use program::{Program, SubstitutionRecord};
pub use task::{parse_task, EngineConfig, LearningTask, TaskError, TaskFile};
