use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use super::egraph::{Conflict, Diseq, Label, NodeId, TermGraph};
use crate::cnf::{AtomDef, CnfProblem};
use crate::sat::{FinalCheck, Lit, PropagatorHooks, Var};
use crate::terms::TermStore;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EufError {
    #[error("variable {0} is not a theory atom")]
    UnknownAtom(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LemmaKind {
    Conflict,
    PropagationReason,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TheoryLemma {
    pub lits: Vec<Lit>,
    pub kind: LemmaKind,
}

#[derive(Clone, Copy, Debug)]
enum PropReason {
    Equal(NodeId, NodeId),
    Separated(NodeId, NodeId, Diseq),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EufStats {
    pub merges: u64,
    pub conflicts: u64,
    pub propagations: u64,
}

/// Congruence-closure theory solver driven by the SAT engine hooks.
pub struct EufTheory {
    graph: TermGraph,
    atom_nodes: Vec<Option<(NodeId, NodeId)>>,
    theory_vars: Vec<Var>,
    value: Vec<i8>,
    trail: Vec<Var>,
    trail_lim: Vec<usize>,
    conflict: Option<Vec<Lit>>,
    queue: VecDeque<Lit>,
    reasons: HashMap<Var, PropReason>,
    dirty: bool,
    pub lemmas: Vec<TheoryLemma>,
    pub stats: EufStats,
}

impl EufTheory {
    /// Flattens every theory atom of `cnf` at level 0.
    pub fn new(store: &TermStore, cnf: &CnfProblem) -> Self {
        let mut graph = TermGraph::new();
        let mut atom_nodes = vec![None; cnf.num_vars];
        let mut theory_vars = Vec::new();
        for (v, def) in cnf.atoms.atoms() {
            let pair = match def {
                AtomDef::Prop(_) => continue,
                AtomDef::Eq(t) => {
                    let args = store.args(t);
                    let a = graph.flatten(store, args[0]).expect("no disequalities yet");
                    let b = graph.flatten(store, args[1]).expect("no disequalities yet");
                    (a, b)
                }
                AtomDef::BridgeTrue(t) => {
                    let n = graph.flatten(store, t).expect("no disequalities yet");
                    (n, graph.carrier_true())
                }
                AtomDef::BridgeFalse(t) => {
                    let n = graph.flatten(store, t).expect("no disequalities yet");
                    (n, graph.carrier_false())
                }
                AtomDef::CarrierEq => (graph.carrier_true(), graph.carrier_false()),
            };
            atom_nodes[v.index()] = Some(pair);
            theory_vars.push(v);
        }
        EufTheory {
            graph,
            atom_nodes,
            theory_vars,
            value: vec![0; cnf.num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            conflict: None,
            queue: VecDeque::new(),
            reasons: HashMap::new(),
            dirty: true,
            lemmas: Vec::new(),
            stats: EufStats::default(),
        }
    }

    pub fn graph(&self) -> &TermGraph {
        &self.graph
    }

    pub fn atom_nodes(&self, v: Var) -> Option<(NodeId, NodeId)> {
        self.atom_nodes.get(v.index()).copied().flatten()
    }

    fn current_lit(&self, v: Var) -> Lit {
        v.lit(self.value[v.index()] > 0)
    }

    /// Clause made of the negations of the asserted literals behind
    /// `labels`.
    fn negated_premises(&self, labels: &[Label]) -> Vec<Lit> {
        labels
            .iter()
            .map(|&l| !self.current_lit(Var(l)))
            .collect()
    }

    fn conflict_clause(&self, c: Conflict) -> Vec<Lit> {
        let mut labels = self
            .graph
            .egraph
            .explain(c.diseq.a, c.diseq.b)
            .expect("conflict sides are equal");
        labels.push(c.diseq.label);
        labels.sort_unstable();
        labels.dedup();
        self.negated_premises(&labels)
    }

    /// Asserts a theory literal into the graph. A conflict is returned as
    /// the lemma that rules it out.
    pub fn assert_atom(&mut self, v: Var, positive: bool) -> Result<Result<(), TheoryLemma>, EufError> {
        let (a, b) = self.atom_nodes(v).ok_or(EufError::UnknownAtom(v.0))?;
        self.value[v.index()] = if positive { 1 } else { -1 };
        self.trail.push(v);
        let r = if positive {
            self.stats.merges += 1;
            self.graph.egraph.merge(a, b, v.0)
        } else {
            self.graph.egraph.assert_diseq(a, b, v.0)
        };
        self.dirty = true;
        Ok(r.map_err(|c| {
            self.stats.conflicts += 1;
            let lits = self.conflict_clause(c);
            let lemma = TheoryLemma {
                lits,
                kind: LemmaKind::Conflict,
            };
            self.lemmas.push(lemma.clone());
            lemma
        }))
    }

    fn scan(&mut self) {
        self.dirty = false;
        let eg = &self.graph.egraph;
        for &v in &self.theory_vars {
            if self.value[v.index()] != 0 {
                continue;
            }
            let (a, b) = self.atom_nodes[v.index()].expect("theory atom");
            if eg.are_equal(a, b) {
                self.reasons.insert(v, PropReason::Equal(a, b));
                self.queue.push_back(v.lit(true));
            } else if let Some(d) = eg.disequality_between(a, b) {
                self.reasons.insert(v, PropReason::Separated(a, b, d));
                self.queue.push_back(v.lit(false));
            }
        }
    }

    /// Explanation clause for a literal produced by propagation.
    pub fn explain_propagation(&mut self, lit: Lit) -> Vec<Lit> {
        let reason = *self
            .reasons
            .get(&lit.var())
            .expect("reason requested for a propagated literal");
        let eg = &self.graph.egraph;
        let mut labels = match reason {
            PropReason::Equal(a, b) => eg.explain(a, b).expect("still equal"),
            PropReason::Separated(a, b, d) => {
                let (da, db) = if eg.are_equal(a, d.a) { (d.a, d.b) } else { (d.b, d.a) };
                let mut l = eg.explain(a, da).expect("still equal");
                l.extend(eg.explain(b, db).expect("still equal"));
                l.push(d.label);
                l
            }
        };
        labels.sort_unstable();
        labels.dedup();
        let mut clause = vec![lit];
        clause.extend(self.negated_premises(&labels));
        self.lemmas.push(TheoryLemma {
            lits: clause.clone(),
            kind: LemmaKind::PropagationReason,
        });
        clause
    }
}

impl PropagatorHooks for EufTheory {
    fn on_assign(&mut self, lit: Lit, is_decision: bool) {
        if is_decision {
            self.trail_lim.push(self.trail.len());
            self.graph.egraph.push_level();
        }
        let v = lit.var();
        if self.atom_nodes(v).is_none() {
            return;
        }
        if self.conflict.is_some() {
            // The engine backtracks past this level before using the graph
            // again; only the assignment is recorded.
            self.value[v.index()] = if lit.is_positive() { 1 } else { -1 };
            self.trail.push(v);
            return;
        }
        if let Ok(Err(lemma)) = self.assert_atom(v, lit.is_positive()) {
            self.conflict = Some(lemma.lits);
        }
    }

    fn on_backtrack(&mut self, level: usize) {
        if level >= self.trail_lim.len() {
            return;
        }
        let lim = self.trail_lim[level];
        for &v in &self.trail[lim..] {
            self.value[v.index()] = 0;
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level);
        self.graph.egraph.pop_to(level);
        self.conflict = None;
        self.queue.clear();
        self.dirty = true;
    }

    fn cb_propagate(&mut self) -> Option<Lit> {
        if self.conflict.is_some() {
            return None;
        }
        loop {
            if self.queue.is_empty() && self.dirty {
                self.scan();
            }
            let l = self.queue.pop_front()?;
            if self.value[l.var().index()] == 0 {
                self.stats.propagations += 1;
                return Some(l);
            }
        }
    }

    fn cb_reason(&mut self, lit: Lit) -> Vec<Lit> {
        self.explain_propagation(lit)
    }

    fn cb_final_check(&mut self, _model: &[bool]) -> FinalCheck {
        match self.conflict.take() {
            Some(c) => FinalCheck::Reject(vec![c]),
            None => FinalCheck::Accept,
        }
    }

    fn cb_has_external_clause(&mut self) -> Option<Vec<Lit>> {
        self.conflict.take()
    }
}
