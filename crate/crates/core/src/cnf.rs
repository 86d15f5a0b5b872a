//! Tseitin conversion of Bool assertions to CNF over theory atoms.
//!
//! Bool-sorted terms that appear as arguments of uninterpreted functions,
//! and Bool-valued applications with arguments, are also tied to the
//! equality theory through two carrier constants: the atom `t = ⊤̂` must
//! agree with `t`'s literal, `t = ⊥̂` with its negation, and the two are
//! mutually exclusive.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use crate::sat::{Lit, Var};
use crate::smtlib::print_term;
use crate::terms::{Kind, TermId, TermStore};

pub const CARRIER_TRUE: &str = "__bool_true";
pub const CARRIER_FALSE: &str = "__bool_false";

/// What a SAT variable stands for in the theory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomDef {
    /// Equality between two non-Bool terms.
    Eq(TermId),
    /// A Bool application (propositional constant or predicate).
    Prop(TermId),
    /// `t = ⊤̂` for a bridged Bool term `t`.
    BridgeTrue(TermId),
    /// `t = ⊥̂` for a bridged Bool term `t`.
    BridgeFalse(TermId),
    /// `⊤̂ = ⊥̂`, asserted false.
    CarrierEq,
}

impl AtomDef {
    /// Atoms the equality theory observes.
    pub fn is_theory(self) -> bool {
        !matches!(self, AtomDef::Prop(_))
    }
}

#[derive(Clone, Debug, Default)]
pub struct AtomMap {
    atom_of: HashMap<AtomDef, Var>,
    term_of: HashMap<Var, AtomDef>,
    pub next_var: u32,
}

impl AtomMap {
    pub fn var_of(&self, a: AtomDef) -> Option<Var> {
        self.atom_of.get(&a).copied()
    }

    pub fn def_of(&self, v: Var) -> Option<AtomDef> {
        self.term_of.get(&v).copied()
    }

    /// All atoms ordered by variable.
    pub fn atoms(&self) -> Vec<(Var, AtomDef)> {
        let mut v: Vec<(Var, AtomDef)> = self.term_of.iter().map(|(&v, &d)| (v, d)).collect();
        v.sort();
        v
    }

    pub fn len(&self) -> usize {
        self.term_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_of.is_empty()
    }

    fn fresh(&mut self) -> Var {
        let v = Var(self.next_var);
        self.next_var += 1;
        v
    }

    fn atom(&mut self, a: AtomDef) -> Var {
        if let Some(v) = self.var_of(a) {
            return v;
        }
        let v = self.fresh();
        self.atom_of.insert(a, v);
        self.term_of.insert(v, a);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bridge {
    pub term: TermId,
    pub lit: Lit,
    pub eq_true: Var,
    pub eq_false: Var,
}

/// Definition of a non-Bool `ite` term, which is its own fresh constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IteDef {
    pub ite: TermId,
    pub cond: Lit,
    /// `(= ite then)`
    pub then_eq: TermId,
    /// `(= ite else)`
    pub else_eq: TermId,
}

#[derive(Clone, Debug, Default)]
pub struct CnfProblem {
    pub clauses: Vec<Vec<Lit>>,
    pub num_vars: usize,
    pub atoms: AtomMap,
    pub bridges: Vec<Bridge>,
    pub ites: Vec<IteDef>,
    /// Variable forced true, standing for the `true` constant.
    pub true_var: Option<Var>,
    pub lit_of: HashMap<TermId, Lit>,
    /// Root literal of each encoded formula, in order.
    pub roots: Vec<Lit>,
}

impl CnfProblem {
    pub fn lit(&self, t: TermId) -> Option<Lit> {
        self.lit_of.get(&t).copied()
    }

    pub fn carrier_var(&self) -> Option<Var> {
        self.atoms.var_of(AtomDef::CarrierEq)
    }

    /// DIMACS text preceded by one `c atom <var> <term>` line per atom.
    pub fn to_dimacs(&self, store: &TermStore) -> String {
        let mut out = String::new();
        for (v, def) in self.atoms.atoms() {
            let text = match def {
                AtomDef::Eq(t) | AtomDef::Prop(t) => print_term(store, t),
                AtomDef::BridgeTrue(t) => format!("(= {} {CARRIER_TRUE})", print_term(store, t)),
                AtomDef::BridgeFalse(t) => format!("(= {} {CARRIER_FALSE})", print_term(store, t)),
                AtomDef::CarrierEq => format!("(= {CARRIER_TRUE} {CARRIER_FALSE})"),
            };
            let _ = writeln!(out, "c atom {} {}", v.0 + 1, text);
        }
        let _ = writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let _ = write!(out, "{} ", l.to_dimacs());
            }
            out.push_str("0\n");
        }
        out
    }
}

/// Full encoding with theory atoms, bridges and `ite` definitions.
pub fn tseitin(store: &mut TermStore, assertions: &[TermId]) -> CnfProblem {
    let mut e = Encoder::new(store, true);
    for &a in assertions {
        e.assert(a);
    }
    e.finish()
}

/// Purely propositional abstraction: atoms are opaque and no theory
/// clauses are added.
pub fn skeleton(store: &mut TermStore, formulas: &[TermId]) -> CnfProblem {
    let mut e = Encoder::new(store, false);
    for &a in formulas {
        e.assert(a);
    }
    e.finish()
}

pub struct Encoder<'a> {
    store: &'a mut TermStore,
    theory: bool,
    cnf: CnfProblem,
    bridged: HashSet<TermId>,
    ite_done: HashSet<TermId>,
    terms_done: HashSet<TermId>,
    pending_terms: Vec<TermId>,
}

impl<'a> Encoder<'a> {
    pub fn new(store: &'a mut TermStore, theory: bool) -> Self {
        Encoder {
            store,
            theory,
            cnf: CnfProblem::default(),
            bridged: HashSet::new(),
            ite_done: HashSet::new(),
            terms_done: HashSet::new(),
            pending_terms: Vec::new(),
        }
    }

    pub fn store(&mut self) -> &mut TermStore {
        self.store
    }

    /// Encodes `t` and adds it as a unit clause.
    pub fn assert(&mut self, t: TermId) -> Lit {
        let l = self.lit(t);
        self.cnf.clauses.push(vec![l]);
        self.cnf.roots.push(l);
        l
    }

    /// Encodes a clause over Bool terms, each taken with its polarity.
    pub fn add_term_clause(&mut self, lits: &[(TermId, bool)]) -> Vec<Lit> {
        let mut clause: Vec<Lit> = Vec::new();
        for &(t, pol) in lits {
            let l = self.lit(t);
            clause.push(if pol { l } else { !l });
        }
        clause.sort();
        clause.dedup();
        self.cnf.clauses.push(clause.clone());
        clause
    }

    pub fn num_clauses(&self) -> usize {
        self.cnf.clauses.len()
    }

    pub fn finish(mut self) -> CnfProblem {
        self.cnf.num_vars = self.cnf.atoms.next_var as usize;
        self.cnf
    }

    fn true_lit(&mut self) -> Lit {
        if let Some(v) = self.cnf.true_var {
            return v.lit(true);
        }
        let v = self.cnf.atoms.fresh();
        self.cnf.true_var = Some(v);
        self.cnf.clauses.push(vec![v.lit(true)]);
        v.lit(true)
    }

    fn fresh(&mut self) -> Lit {
        self.cnf.atoms.fresh().lit(true)
    }

    fn clause(&mut self, c: Vec<Lit>) {
        self.cnf.clauses.push(c);
    }

    fn encoded_children(&self, t: TermId) -> &[TermId] {
        match self.store.kind(t) {
            Kind::Not | Kind::And | Kind::Or | Kind::Xor | Kind::Implies => self.store.args(t),
            Kind::Ite if self.store.is_bool(t) => self.store.args(t),
            Kind::Eq | Kind::Distinct if self.store.is_bool(self.store.args(t)[0]) => {
                self.store.args(t)
            }
            _ => &[],
        }
    }

    /// Literal of a Bool term, encoding it and its theory side conditions
    /// on first use.
    pub fn lit(&mut self, root: TermId) -> Lit {
        let l = self.lit_structural(root);
        self.drain_terms();
        l
    }

    fn lit_structural(&mut self, root: TermId) -> Lit {
        let mut stack = vec![(root, false)];
        while let Some((t, expanded)) = stack.pop() {
            if self.cnf.lit_of.contains_key(&t) {
                continue;
            }
            if !expanded {
                stack.push((t, true));
                for &c in self.encoded_children(t) {
                    if !self.cnf.lit_of.contains_key(&c) {
                        stack.push((c, false));
                    }
                }
                continue;
            }
            let l = self.encode_node(t);
            self.cnf.lit_of.insert(t, l);
        }
        self.cnf.lit_of[&root]
    }

    fn child(&self, t: TermId) -> Lit {
        self.cnf.lit_of[&t]
    }

    fn encode_node(&mut self, t: TermId) -> Lit {
        let args: Vec<TermId> = self.store.args(t).to_vec();
        match self.store.kind(t) {
            Kind::True => self.true_lit(),
            Kind::False => !self.true_lit(),
            Kind::App(_) => {
                let v = self.cnf.atoms.atom(AtomDef::Prop(t)).lit(true);
                if self.theory && !args.is_empty() {
                    self.cnf.lit_of.insert(t, v);
                    self.bridge(t);
                    self.pending_terms.push(t);
                }
                v
            }
            Kind::Not => !self.child(args[0]),
            Kind::And | Kind::Or => {
                let kids: Vec<Lit> = args.iter().map(|&a| self.child(a)).collect();
                self.gate(self.store.kind(t) == Kind::And, kids)
            }
            Kind::Implies => {
                let n = args.len();
                let mut kids: Vec<Lit> = args[..n - 1].iter().map(|&a| !self.child(a)).collect();
                kids.push(self.child(args[n - 1]));
                self.gate(false, kids)
            }
            Kind::Xor => {
                let kids: Vec<Lit> = args.iter().map(|&a| self.child(a)).collect();
                match kids.split_first() {
                    None => !self.true_lit(),
                    Some((&first, rest)) => {
                        let mut acc = first;
                        for &k in rest {
                            acc = self.xor2(acc, k);
                        }
                        acc
                    }
                }
            }
            Kind::Ite => {
                let (c, x, y) = (self.child(args[0]), self.child(args[1]), self.child(args[2]));
                let v = self.fresh();
                self.clause(vec![!c, !x, v]);
                self.clause(vec![!c, x, !v]);
                self.clause(vec![c, !y, v]);
                self.clause(vec![c, y, !v]);
                v
            }
            Kind::Eq => {
                if self.store.is_bool(args[0]) {
                    let (a, b) = (self.child(args[0]), self.child(args[1]));
                    !self.xor2(a, b)
                } else {
                    if self.theory {
                        self.pending_terms.extend(args.iter().copied());
                    }
                    self.cnf.atoms.atom(AtomDef::Eq(t)).lit(true)
                }
            }
            Kind::Distinct => {
                if self.store.is_bool(args[0]) {
                    if args.len() == 2 {
                        let (a, b) = (self.child(args[0]), self.child(args[1]));
                        self.xor2(a, b)
                    } else {
                        !self.true_lit()
                    }
                } else {
                    let mut kids = Vec::new();
                    for i in 0..args.len() {
                        for j in i + 1..args.len() {
                            let e = self
                                .store
                                .mk_eq(args[i], args[j])
                                .expect("distinct arguments share a sort");
                            kids.push(!self.lit_structural(e));
                        }
                    }
                    if kids.len() == 1 {
                        kids[0]
                    } else {
                        self.gate(true, kids)
                    }
                }
            }
        }
    }

    /// Fresh `v <-> and(kids)` or `v <-> or(kids)`.
    fn gate(&mut self, is_and: bool, kids: Vec<Lit>) -> Lit {
        match kids.len() {
            0 => {
                let t = self.true_lit();
                return if is_and { t } else { !t };
            }
            1 => return kids[0],
            _ => {}
        }
        let v = self.fresh();
        // For or, encode not-v <-> and(not kids).
        let (out, ks): (Lit, Vec<Lit>) = if is_and {
            (v, kids)
        } else {
            (!v, kids.iter().map(|&k| !k).collect())
        };
        let mut long = vec![out];
        for &k in &ks {
            self.clause(vec![!out, k]);
            long.push(!k);
        }
        self.clause(long);
        v
    }

    fn xor2(&mut self, a: Lit, b: Lit) -> Lit {
        let v = self.fresh();
        self.clause(vec![!v, a, b]);
        self.clause(vec![!v, !a, !b]);
        self.clause(vec![v, !a, b]);
        self.clause(vec![v, a, !b]);
        v
    }

    fn bridge(&mut self, t: TermId) {
        if !self.bridged.insert(t) {
            return;
        }
        if self.cnf.carrier_var().is_none() {
            let c = self.cnf.atoms.atom(AtomDef::CarrierEq);
            self.clause(vec![c.lit(false)]);
        }
        let p = self.cnf.lit_of[&t];
        let et = self.cnf.atoms.atom(AtomDef::BridgeTrue(t));
        let ef = self.cnf.atoms.atom(AtomDef::BridgeFalse(t));
        self.clause(vec![!p, et.lit(true)]);
        self.clause(vec![p, ef.lit(true)]);
        self.clause(vec![et.lit(false), ef.lit(false)]);
        self.cnf.bridges.push(Bridge {
            term: t,
            lit: p,
            eq_true: et,
            eq_false: ef,
        });
    }

    /// Walks non-Bool terms reachable from theory atoms, bridging Bool
    /// arguments and defining `ite` terms.
    fn drain_terms(&mut self) {
        while let Some(t) = self.pending_terms.pop() {
            if !self.terms_done.insert(t) {
                continue;
            }
            match self.store.kind(t) {
                Kind::App(_) => {
                    let args = self.store.args(t).to_vec();
                    for a in args {
                        if self.store.is_bool(a) {
                            self.lit_structural(a);
                            self.bridge(a);
                        } else {
                            self.pending_terms.push(a);
                        }
                    }
                }
                Kind::Ite if !self.store.is_bool(t) => {
                    let args = self.store.args(t).to_vec();
                    self.define_ite(t, args[0], args[1], args[2]);
                    self.pending_terms.push(args[1]);
                    self.pending_terms.push(args[2]);
                }
                _ => {}
            }
        }
    }

    fn define_ite(&mut self, ite: TermId, c: TermId, x: TermId, y: TermId) {
        if !self.ite_done.insert(ite) {
            return;
        }
        let cl = self.lit_structural(c);
        let then_eq = self.store.mk_eq(ite, x).expect("ite branches share its sort");
        let else_eq = self.store.mk_eq(ite, y).expect("ite branches share its sort");
        let te = self.lit_structural(then_eq);
        let ee = self.lit_structural(else_eq);
        self.clause(vec![!cl, te]);
        self.clause(vec![cl, ee]);
        self.cnf.ites.push(IteDef {
            ite,
            cond: cl,
            then_eq,
            else_eq,
        });
    }
}
