//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ufsmt::euf::TermGraph;
use ufsmt::sat::{Budget, Lit, NoHooks, SatConfig, Solver, StepKind, Var, Verdict};
use ufsmt::terms::{Kind, TermId, TermStore};

/// External solver from `UFSMT_REFERENCE`, else `z3` on the search path.
pub fn reference_solver() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("UFSMT_REFERENCE") {
        let p = PathBuf::from(p);
        return p.exists().then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join("z3")).find(|p| p.is_file())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- CNF

/// A clause as two bit masks over at most 32 variables.
#[derive(Clone, Copy, Debug)]
pub struct MaskClause {
    pub pos: u32,
    pub neg: u32,
}

impl MaskClause {
    pub fn of(lits: &[Lit]) -> Self {
        let mut c = MaskClause { pos: 0, neg: 0 };
        for l in lits {
            let bit = 1u32 << l.var().0;
            if l.is_positive() {
                c.pos |= bit;
            } else {
                c.neg |= bit;
            }
        }
        c
    }

    pub fn holds(self, a: u32) -> bool {
        a & self.pos != 0 || !a & self.neg != 0
    }
}

pub fn random_cnf(r: &mut ChaCha8Rng, max_vars: usize) -> (usize, Vec<Vec<Lit>>) {
    let n = r.random_range(1..=max_vars);
    let ratio = r.random_range(2.0..6.0);
    let m = ((n as f64 * ratio) as usize).max(1);
    let clauses = (0..m)
        .map(|_| {
            let width = if r.random_bool(0.1) { r.random_range(1..=2) } else { 3 };
            (0..width)
                .map(|_| Var(r.random_range(0..n as u32)).lit(r.random_bool(0.5)))
                .collect()
        })
        .collect();
    (n, clauses)
}

/// Every satisfying assignment, as bit masks.
pub fn truth_table_models(n: usize, clauses: &[Vec<Lit>]) -> Vec<u32> {
    let masks: Vec<MaskClause> = clauses.iter().map(|c| MaskClause::of(c)).collect();
    (0..1u32 << n).filter(|&a| masks.iter().all(|c| c.holds(a))).collect()
}

pub struct SatRun {
    pub verdict: Verdict,
    pub model: Option<Vec<bool>>,
    pub learnt: Vec<Vec<Lit>>,
}

pub fn run_sat(n: usize, clauses: &[Vec<Lit>], seed: u64) -> SatRun {
    let mut s = Solver::new(n, SatConfig { seed, ..Default::default() });
    for c in clauses {
        s.add_clause(c);
    }
    let r = s.solve(&mut NoHooks, Budget::default()).expect("no theory");
    SatRun {
        verdict: r.verdict,
        model: r.model,
        learnt: r
            .proof_log
            .into_iter()
            .filter(|p| p.kind == StepKind::Learnt)
            .map(|p| p.lits)
            .collect(),
    }
}

// ---------------------------------------------------------------- EUF

pub struct EqProblem {
    pub store: TermStore,
    pub equations: Vec<(TermId, TermId)>,
    /// Every subterm of every equation.
    pub universe: Vec<TermId>,
}

/// Up to 30 ground equations over up to 10 constants and up to 3 unary or
/// binary functions of one sort.
pub fn random_equations(r: &mut ChaCha8Rng) -> EqProblem {
    let mut st = TermStore::new();
    let s = st.declare_sort("U", "U").unwrap();
    let nc = r.random_range(1..=10);
    let consts: Vec<TermId> = (0..nc)
        .map(|i| {
            let f = st.declare_fun(&format!("c{i}"), &format!("c{i}"), vec![], s).unwrap();
            st.mk_const(f).unwrap()
        })
        .collect();
    let nf = r.random_range(0..=3);
    let funs: Vec<_> = (0..nf)
        .map(|i| {
            let arity = r.random_range(1..=2);
            st.declare_fun(&format!("f{i}"), &format!("f{i}"), vec![s; arity], s).unwrap()
        })
        .collect();
    fn term(
        r: &mut ChaCha8Rng,
        st: &mut TermStore,
        consts: &[TermId],
        funs: &[ufsmt::terms::SymbolId],
        depth: usize,
    ) -> TermId {
        if depth == 0 || funs.is_empty() || r.random_bool(0.4) {
            return consts[r.random_range(0..consts.len())];
        }
        let f = funs[r.random_range(0..funs.len())];
        let arity = st.symbol(f).arity();
        let args: Vec<TermId> = (0..arity).map(|_| term(r, st, consts, funs, depth - 1)).collect();
        st.mk_app(f, &args).unwrap()
    }
    let ne = r.random_range(1..=30);
    let equations: Vec<(TermId, TermId)> = (0..ne)
        .map(|_| {
            let a = term(r, &mut st, &consts, &funs, 2);
            let b = term(r, &mut st, &consts, &funs, 2);
            (a, b)
        })
        .collect();
    let universe = st.subterms_of(equations.iter().flat_map(|&(a, b)| [a, b]));
    EqProblem { store: st, equations, universe }
}

/// Symmetry, transitivity and congruence applied until nothing changes.
/// Returns a class index per universe position.
pub fn brute_force_classes(p: &EqProblem, equations: &[(TermId, TermId)]) -> Vec<usize> {
    let pos = |t: TermId| p.universe.iter().position(|&u| u == t).expect("in universe");
    let mut class: Vec<usize> = (0..p.universe.len()).collect();
    fn relabel(class: &mut [usize], from: usize, to: usize) {
        for c in class.iter_mut() {
            if *c == from {
                *c = to;
            }
        }
    }
    for &(a, b) in equations {
        let (ca, cb) = (class[pos(a)], class[pos(b)]);
        if ca != cb {
            relabel(&mut class, ca, cb);
        }
    }
    loop {
        let mut changed = false;
        for i in 0..p.universe.len() {
            for j in i + 1..p.universe.len() {
                let (s, t) = (p.universe[i], p.universe[j]);
                if class[i] == class[j] {
                    continue;
                }
                let (Kind::App(f), Kind::App(g)) = (p.store.kind(s), p.store.kind(t)) else {
                    continue;
                };
                if f != g || p.store.args(s).is_empty() {
                    continue;
                }
                let same = p
                    .store
                    .args(s)
                    .iter()
                    .zip(p.store.args(t))
                    .all(|(&x, &y)| class[pos(x)] == class[pos(y)]);
                if same {
                    let (ci, cj) = (class[i], class[j]);
                    relabel(&mut class, ci, cj);
                    changed = true;
                }
            }
        }
        if !changed {
            return class;
        }
    }
}

/// The graph after merging every equation, labelled by its position.
pub fn closure(p: &EqProblem, equations: &[(TermId, TermId)], labels: &[u32]) -> TermGraph {
    let mut g = TermGraph::new();
    for &t in &p.universe {
        g.flatten(&p.store, t).unwrap();
    }
    for (&(a, b), &l) in equations.iter().zip(labels) {
        let (x, y) = (g.node(a).unwrap(), g.node(b).unwrap());
        g.egraph.merge(x, y, l).unwrap();
    }
    g
}

pub fn same_partition(p: &EqProblem, g: &TermGraph, oracle: &[usize]) -> bool {
    let n = p.universe.len();
    (0..n).all(|i| {
        (i + 1..n).all(|j| {
            let (a, b) = (g.node(p.universe[i]).unwrap(), g.node(p.universe[j]).unwrap());
            g.egraph.are_equal(a, b) == (oracle[i] == oracle[j])
        })
    })
}

/// Checks one explanation: labels were asserted and re-closing over them
/// alone equates the pair.
pub fn explanation_is_valid(p: &EqProblem, labels: &[u32], a: TermId, b: TermId) -> bool {
    if labels.iter().any(|&l| l as usize >= p.equations.len()) {
        return false;
    }
    let eqs: Vec<(TermId, TermId)> = labels.iter().map(|&l| p.equations[l as usize]).collect();
    let g = closure(p, &eqs, labels);
    g.egraph.are_equal(g.node(a).unwrap(), g.node(b).unwrap())
}

// ---------------------------------------------------------------- formulas

/// Truth value of a Bool formula whose atoms are looked up in `atom_value`.
pub fn eval_skeleton(st: &TermStore, t: TermId, atom_value: &dyn Fn(TermId) -> bool) -> bool {
    let args = st.args(t);
    let e = |x: TermId| eval_skeleton(st, x, atom_value);
    match st.kind(t) {
        Kind::True => true,
        Kind::False => false,
        Kind::Not => !e(args[0]),
        Kind::And => args.iter().all(|&x| e(x)),
        Kind::Or => args.iter().any(|&x| e(x)),
        Kind::Xor => args.iter().filter(|&&x| e(x)).count() % 2 == 1,
        Kind::Implies => {
            let (last, init) = args.split_last().unwrap();
            !init.iter().all(|&x| e(x)) || e(*last)
        }
        Kind::Ite => {
            if e(args[0]) {
                e(args[1])
            } else {
                e(args[2])
            }
        }
        Kind::Eq if st.is_bool(args[0]) => e(args[0]) == e(args[1]),
        Kind::Distinct if st.is_bool(args[0]) => {
            let vals: Vec<bool> = args.iter().map(|&x| e(x)).collect();
            vals.len() <= 2 && vals.windows(2).all(|w| w[0] != w[1])
        }
        _ => atom_value(t),
    }
}
