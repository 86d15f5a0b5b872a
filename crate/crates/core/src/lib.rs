//! Quantifier-free SMT solver for uninterpreted functions with equality.

pub mod euf;
pub mod sat;
pub mod smtlib;
pub mod terms;
pub mod preprocess;
pub mod cnf;
pub mod driver;
pub mod model;
pub mod proof;
pub mod harness;
