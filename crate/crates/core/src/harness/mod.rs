//! Command-level script execution, random problem generation,
//! differential testing and test-case reduction.

mod ddmin;
mod fuzz;
mod runner;

pub use ddmin::{ddmin, ddmin_assertions, Oracle, DDMIN_CALL_LIMIT};
pub use fuzz::{
    check_script, fuzz, gen_eq_diamond, generate, round_trip, CheckConfig, FuzzReport, FuzzSpec,
    FuzzWeights, TrialOutcome, CONFIGS,
};
pub use runner::{run_reference, run_script, RunConfig, RunReport};

use thiserror::Error;

use crate::model::ModelError;
use crate::proof::ProofError;
use crate::sat::SolveError;
use crate::smtlib::FrontendError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Proof(#[from] ProofError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("reference solver: {0}")]
    Reference(String),
    #[error("reference solver exceeded {0:?}")]
    Timeout(std::time::Duration),
    #[error("oracle gave different answers for identical input")]
    OracleFlaky,
    #[error("oracle does not hold on the input")]
    NotFailing,
}
