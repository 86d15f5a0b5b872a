//! CDCL SAT engine with an external-propagator callback interface.
//!
//! The hook set mirrors IPASIR-UP: the engine notifies assignments and
//! backtracks, drains theory propagations after each Boolean fixpoint,
//! asks for the reason of a propagated literal only during conflict
//! analysis, and lets the theory veto complete assignments.

mod heap;
mod solver;

use std::fmt;
use std::ops::Not;
use std::time::Instant;

use thiserror::Error;

pub use solver::Solver;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn lit(self, positive: bool) -> Lit {
        Lit::new(self, positive)
    }
}

/// A literal: variable index in the high bits, negation in bit 0.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: Var, positive: bool) -> Lit {
        Lit(var.0 << 1 | (!positive) as u32)
    }

    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    pub fn code(self) -> usize {
        self.0 as usize
    }

    /// DIMACS form, variables numbered from 1.
    pub fn to_dimacs(self) -> i64 {
        let v = self.var().0 as i64 + 1;
        if self.is_positive() {
            v
        } else {
            -v
        }
    }

    pub fn from_dimacs(d: i64) -> Lit {
        assert!(d != 0, "DIMACS literal 0 is a terminator");
        Lit::new(Var(d.unsigned_abs() as u32 - 1), d > 0)
    }
}

impl Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

pub enum FinalCheck {
    Accept,
    /// Clauses that rule out the current complete assignment.
    Reject(Vec<Vec<Lit>>),
}

/// Theory side of the engine. All methods have no-op defaults so a plain
/// SAT problem can be solved with [`NoHooks`].
pub trait PropagatorHooks {
    fn on_assign(&mut self, _lit: Lit, _is_decision: bool) {}

    /// The engine undid every assignment above `level`.
    fn on_backtrack(&mut self, _level: usize) {}

    /// Next literal implied by the theory, if any. Called repeatedly until
    /// it returns `None`.
    fn cb_propagate(&mut self) -> Option<Lit> {
        None
    }

    /// Reason clause for a literal previously returned by
    /// [`cb_propagate`](Self::cb_propagate). Must contain that literal; all
    /// other literals must be false.
    fn cb_reason(&mut self, lit: Lit) -> Vec<Lit> {
        panic!("cb_reason called for {lit:?} but the theory never propagates")
    }

    fn cb_final_check(&mut self, _model: &[bool]) -> FinalCheck {
        FinalCheck::Accept
    }

    fn cb_has_external_clause(&mut self) -> Option<Vec<Lit>> {
        None
    }
}

pub struct NoHooks;

impl PropagatorHooks for NoHooks {}

#[derive(Clone, Debug)]
pub struct SatConfig {
    /// Drain [`PropagatorHooks::cb_propagate`] after every Boolean fixpoint.
    pub theory_propagation: bool,
    /// Only perturbs the initial branching order; 0 keeps index order.
    pub seed: u64,
    /// Record clause antecedents so an unsat core over the input clauses
    /// can be returned.
    pub track_core: bool,
    pub restart_base: u64,
}

impl Default for SatConfig {
    fn default() -> Self {
        SatConfig {
            theory_propagation: true,
            seed: 0,
            track_core: false,
            restart_base: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Budget {
    pub conflicts: Option<u64>,
    pub deadline: Option<Instant>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resource {
    Conflicts,
    Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown(Resource),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Learnt,
    Theory,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofStep {
    pub kind: StepKind,
    pub lits: Vec<Lit>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SatStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub theory_propagations: u64,
    /// Theory clauses that were falsified when they arrived, including
    /// final-check rejections.
    pub theory_conflicts: u64,
    pub final_checks: u64,
    pub final_check_rejections: u64,
    pub restarts: u64,
    pub reductions: u64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub verdict: Verdict,
    pub model: Option<Vec<bool>>,
    /// Learnt and theory clauses in the order they were derived.
    pub proof_log: Vec<ProofStep>,
    /// Indices (in insertion order) of input clauses used by the
    /// refutation. Only with [`SatConfig::track_core`].
    pub core: Option<Vec<usize>>,
    pub stats: SatStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Satisfied,
    Attached,
    UnitPropagating,
    ConflictingAt(usize),
    /// Falsified at level 0.
    GlobalConflict,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("invalid clause from theory: {0}")]
    InvalidClause(String),
}
