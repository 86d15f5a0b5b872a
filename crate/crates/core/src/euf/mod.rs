//! Congruence closure and the EUF theory propagator.

mod egraph;
mod theory;

pub use egraph::*;
pub use theory::*;
