//! End-to-end solving of an assertion list: preprocessing, CNF conversion
//! and the CDCL search with the EUF theory attached.

use std::time::{Duration, Instant};

use log::debug;

use crate::cnf::{tseitin, CnfProblem};
use crate::euf::EufTheory;
use crate::preprocess::{preprocess, PreproResult};
use crate::sat::{Budget, SatConfig, SolveError, SolveResult, Solver, Verdict};
use crate::terms::{TermId, TermStore};

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub preprocess: bool,
    pub theory_propagation: bool,
    pub seed: u64,
    pub conflict_budget: Option<u64>,
    pub timeout: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            preprocess: true,
            theory_propagation: true,
            seed: 0,
            conflict_budget: None,
            timeout: None,
        }
    }
}

pub struct Outcome {
    pub verdict: Verdict,
    pub assertions: Vec<TermId>,
    pub prepro: PreproResult,
    pub cnf: CnfProblem,
    pub sat: SolveResult,
    pub theory: EufTheory,
    pub elapsed: Duration,
}

pub fn solve(
    store: &mut TermStore,
    assertions: &[TermId],
    opts: &SolveOptions,
) -> Result<Outcome, SolveError> {
    let start = Instant::now();
    let prepro = preprocess(store, assertions, opts.preprocess);
    let cnf = tseitin(store, &prepro.assertions);
    debug!(
        "cnf: {} vars, {} clauses, {} atoms, {} bridges",
        cnf.num_vars,
        cnf.clauses.len(),
        cnf.atoms.len(),
        cnf.bridges.len()
    );
    let mut theory = EufTheory::new(store, &cnf);
    let mut sat = Solver::new(
        cnf.num_vars,
        SatConfig {
            theory_propagation: opts.theory_propagation,
            seed: opts.seed,
            ..Default::default()
        },
    );
    for c in &cnf.clauses {
        sat.add_clause(c);
    }
    let budget = Budget {
        conflicts: opts.conflict_budget,
        deadline: opts.timeout.map(|t| start + t),
    };
    let result = sat.solve(&mut theory, budget)?;
    debug!("sat: {:?} {:?}", result.verdict, result.stats);
    Ok(Outcome {
        verdict: result.verdict,
        assertions: assertions.to_vec(),
        prepro,
        cnf,
        sat: result,
        theory,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smtlib::parse_script;

    fn verdict(src: &str, opts: &SolveOptions) -> Verdict {
        let s = parse_script(src.as_bytes()).unwrap();
        let a = s.assertions();
        let mut st = s.store;
        solve(&mut st, &a, opts).unwrap().verdict
    }

    #[test]
    fn basic_verdicts_across_configurations() {
        let cases = [
            ("(declare-sort S 0)(declare-fun a () S)(assert (= a a))", Verdict::Sat),
            (
                "(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)(declare-fun f (S) S)\
                 (assert (= a b))(assert (not (= (f a) (f b))))",
                Verdict::Unsat,
            ),
            (
                "(declare-sort S 0)(declare-fun f (Bool) S)(declare-fun p () Bool)\
                 (assert (= (f p) (f (not p))))",
                Verdict::Sat,
            ),
            (
                "(declare-sort S 0)(declare-fun f (Bool) S)(declare-fun p () Bool)(declare-fun q () Bool)\
                 (assert (not (= (f p) (f q))))(assert (= p q))",
                Verdict::Unsat,
            ),
            (
                "(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)(declare-fun c () S)(declare-fun p () Bool)\
                 (assert (= (ite p a b) c))(assert (not (= a c)))(assert (not (= b c)))",
                Verdict::Unsat,
            ),
            (
                "(declare-sort S 0)(declare-fun f (Bool) S)(declare-fun p () Bool)(declare-fun q () Bool)(declare-fun r () Bool)\
                 (assert (distinct (f p) (f q) (f r)))",
                Verdict::Unsat,
            ),
        ];
        for pre in [true, false] {
            for prop in [true, false] {
                let opts = SolveOptions {
                    preprocess: pre,
                    theory_propagation: prop,
                    ..Default::default()
                };
                for (src, want) in &cases {
                    assert_eq!(verdict(src, &opts), *want, "{src} pre={pre} prop={prop}");
                }
            }
        }
    }
}
