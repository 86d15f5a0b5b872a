//! Backtrackable congruence closure over curried terms with a proof forest.
//!
//! Terms are flattened into binary `apply` nodes over one constant per
//! function symbol. Merges follow the Nieuwenhuis–Oliveras scheme: a
//! signature table keyed by the representatives of both arguments, use
//! lists per representative and a pending queue. Every merge also adds an
//! edge to a proof forest so that [`EGraph::explain`] can recover the
//! asserted equations behind any derived equality.
//!
//! All mutations after construction are recorded on an undo trail.
//! `find` never compresses paths, union by size keeps it logarithmic and
//! `pop_to` restores the exact previous state.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::terms::{Kind, SymbolId, TermId, TermStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Label attached to an asserted equation or disequality. The owner of the
/// graph decides what it means (a SAT variable, an input index, ...).
pub type Label = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LeafKey {
    Symbol(SymbolId),
    /// Opaque term: `ite` over an uninterpreted sort, or a compound Bool
    /// formula in argument position.
    Term(TermId),
    /// The two constants of the internal Bool carrier sort.
    CarrierTrue,
    CarrierFalse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKey {
    Leaf(LeafKey),
    Apply(NodeId, NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Justification {
    Asserted(Label),
    Congruence(NodeId, NodeId),
    /// Merge whose justification lives outside the graph.
    Axiom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Diseq {
    pub a: NodeId,
    pub b: NodeId,
    pub label: Label,
}

/// A disequality whose two sides became equal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub diseq: Diseq,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("explain called on nodes in different classes")]
pub struct NotEqual;

#[derive(Clone, Debug)]
enum Undo {
    Union {
        child: NodeId,
        root: NodeId,
        use_len: usize,
        diseq_len: usize,
    },
    ProofEdge(NodeId, NodeId),
    SigInsert((NodeId, NodeId)),
    Diseq(NodeId, NodeId),
}

#[derive(Clone, Debug, Default)]
pub struct EGraph {
    keys: Vec<NodeKey>,
    index: HashMap<NodeKey, NodeId>,
    parent: Vec<NodeId>,
    size: Vec<u32>,
    use_list: Vec<Vec<NodeId>>,
    sig: HashMap<(NodeId, NodeId), NodeId>,
    proof: Vec<Option<(NodeId, Justification)>>,
    diseqs: Vec<Diseq>,
    diseq_of: Vec<Vec<u32>>,
    pending: Vec<(NodeId, NodeId, Justification)>,
    trail: Vec<Undo>,
    levels: Vec<usize>,
}

impl EGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_nodes(&self) -> usize {
        self.keys.len()
    }

    pub fn key(&self, n: NodeId) -> NodeKey {
        self.keys[n.index()]
    }

    pub fn lookup(&self, key: NodeKey) -> Option<NodeId> {
        self.index.get(&key).copied()
    }

    pub fn sig_table_len(&self) -> usize {
        self.sig.len()
    }

    pub fn level(&self) -> usize {
        self.levels.len()
    }

    fn push_node(&mut self, key: NodeKey) -> NodeId {
        debug_assert!(self.levels.is_empty(), "nodes must be created at level 0");
        let id = NodeId(self.keys.len() as u32);
        self.keys.push(key);
        self.index.insert(key, id);
        self.parent.push(id);
        self.size.push(1);
        self.use_list.push(Vec::new());
        self.proof.push(None);
        self.diseq_of.push(Vec::new());
        id
    }

    pub fn add_leaf(&mut self, leaf: LeafKey) -> NodeId {
        let key = NodeKey::Leaf(leaf);
        if let Some(&n) = self.index.get(&key) {
            return n;
        }
        self.push_node(key)
    }

    /// Interns `apply(f, arg)`. A node whose signature is already present
    /// is merged with the existing one.
    pub fn add_apply(&mut self, f: NodeId, arg: NodeId) -> Result<NodeId, Conflict> {
        let key = NodeKey::Apply(f, arg);
        if let Some(&n) = self.index.get(&key) {
            return Ok(n);
        }
        let n = self.push_node(key);
        let sig = (self.find(f), self.find(arg));
        match self.sig.get(&sig) {
            Some(&m) => self.merge_with(n, m, Justification::Congruence(n, m))?,
            None => {
                self.sig.insert(sig, n);
                self.use_list[sig.0.index()].push(n);
                if sig.1 != sig.0 {
                    self.use_list[sig.1.index()].push(n);
                }
            }
        }
        Ok(n)
    }

    pub fn find(&self, mut n: NodeId) -> NodeId {
        while self.parent[n.index()] != n {
            n = self.parent[n.index()];
        }
        n
    }

    pub fn are_equal(&self, a: NodeId, b: NodeId) -> bool {
        self.find(a) == self.find(b)
    }

    /// A recorded disequality separating the classes of `a` and `b`.
    pub fn disequality_between(&self, a: NodeId, b: NodeId) -> Option<Diseq> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        let (small, other) = if self.diseq_of[ra.index()].len() <= self.diseq_of[rb.index()].len() {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.diseq_of[small.index()].iter().find_map(|&i| {
            let d = self.diseqs[i as usize];
            let (x, y) = (self.find(d.a), self.find(d.b));
            ((x == small && y == other) || (x == other && y == small)).then_some(d)
        })
    }

    pub fn push_level(&mut self) {
        self.levels.push(self.trail.len());
    }

    pub fn pop_to(&mut self, level: usize) {
        if level >= self.levels.len() {
            return;
        }
        let mark = self.levels[level];
        self.levels.truncate(level);
        self.pending.clear();
        while self.trail.len() > mark {
            match self.trail.pop().expect("trail is non-empty") {
                Undo::Union {
                    child,
                    root,
                    use_len,
                    diseq_len,
                } => {
                    self.parent[child.index()] = child;
                    self.size[root.index()] -= self.size[child.index()];
                    self.use_list[root.index()].truncate(use_len);
                    self.diseq_of[root.index()].truncate(diseq_len);
                }
                Undo::ProofEdge(a, b) => {
                    if matches!(self.proof[a.index()], Some((p, _)) if p == b) {
                        self.proof[a.index()] = None;
                    } else {
                        debug_assert!(matches!(self.proof[b.index()], Some((p, _)) if p == a));
                        self.proof[b.index()] = None;
                    }
                }
                Undo::SigInsert(key) => {
                    self.sig.remove(&key);
                }
                Undo::Diseq(ra, rb) => {
                    self.diseqs.pop();
                    self.diseq_of[ra.index()].pop();
                    if ra != rb {
                        self.diseq_of[rb.index()].pop();
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, a: NodeId, b: NodeId, label: Label) -> Result<(), Conflict> {
        self.merge_with(a, b, Justification::Asserted(label))
    }

    pub fn merge_axiom(&mut self, a: NodeId, b: NodeId) -> Result<(), Conflict> {
        self.merge_with(a, b, Justification::Axiom)
    }

    pub fn assert_diseq(&mut self, a: NodeId, b: NodeId, label: Label) -> Result<(), Conflict> {
        let d = Diseq { a, b, label };
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Err(Conflict { diseq: d });
        }
        let idx = self.diseqs.len() as u32;
        self.diseqs.push(d);
        self.diseq_of[ra.index()].push(idx);
        self.diseq_of[rb.index()].push(idx);
        self.trail.push(Undo::Diseq(ra, rb));
        Ok(())
    }

    fn merge_with(&mut self, a: NodeId, b: NodeId, j: Justification) -> Result<(), Conflict> {
        self.pending.push((a, b, j));
        let mut conflict = None;
        while let Some((a, b, j)) = self.pending.pop() {
            let (mut ra, mut rb) = (self.find(a), self.find(b));
            if ra == rb {
                continue;
            }
            let (mut a, mut b) = (a, b);
            if self.size[ra.index()] > self.size[rb.index()] {
                std::mem::swap(&mut ra, &mut rb);
                std::mem::swap(&mut a, &mut b);
            }
            self.reroot(a);
            self.proof[a.index()] = Some((b, j));
            self.trail.push(Undo::ProofEdge(a, b));

            self.trail.push(Undo::Union {
                child: ra,
                root: rb,
                use_len: self.use_list[rb.index()].len(),
                diseq_len: self.diseq_of[rb.index()].len(),
            });
            self.parent[ra.index()] = rb;
            self.size[rb.index()] += self.size[ra.index()];

            for i in 0..self.use_list[ra.index()].len() {
                let n = self.use_list[ra.index()][i];
                let NodeKey::Apply(x, y) = self.keys[n.index()] else {
                    unreachable!("use lists only hold apply nodes");
                };
                let key = (self.find(x), self.find(y));
                match self.sig.get(&key) {
                    Some(&m) => {
                        if self.find(m) != self.find(n) {
                            self.pending.push((n, m, Justification::Congruence(n, m)));
                        }
                    }
                    None => {
                        self.sig.insert(key, n);
                        self.trail.push(Undo::SigInsert(key));
                        self.use_list[rb.index()].push(n);
                    }
                }
            }

            for i in 0..self.diseq_of[ra.index()].len() {
                let idx = self.diseq_of[ra.index()][i];
                self.diseq_of[rb.index()].push(idx);
                let d = self.diseqs[idx as usize];
                if conflict.is_none() && self.find(d.a) == self.find(d.b) {
                    conflict = Some(Conflict { diseq: d });
                }
            }
        }
        match conflict {
            Some(c) => Err(c),
            None => Ok(()),
        }
    }

    fn reroot(&mut self, a: NodeId) {
        let mut cur = a;
        let mut incoming: Option<(NodeId, Justification)> = None;
        loop {
            let next = self.proof[cur.index()].take();
            self.proof[cur.index()] = incoming;
            match next {
                None => break,
                Some((p, j)) => {
                    incoming = Some((cur, j));
                    cur = p;
                }
            }
        }
    }

    /// Labels of the asserted equations that imply `a = b`, sorted.
    /// Edges justified by [`Justification::Axiom`] contribute nothing.
    pub fn explain(&self, a: NodeId, b: NodeId) -> Result<Vec<Label>, NotEqual> {
        if !self.are_equal(a, b) {
            return Err(NotEqual);
        }
        let mut out = HashSet::new();
        let mut visited_edges = HashSet::new();
        let mut work = vec![(a, b)];
        while let Some((x, y)) = work.pop() {
            if x == y {
                continue;
            }
            let mut ancestors = HashSet::new();
            let mut cur = x;
            ancestors.insert(cur);
            while let Some((p, _)) = self.proof[cur.index()] {
                cur = p;
                ancestors.insert(cur);
            }
            let mut lca = y;
            while !ancestors.contains(&lca) {
                lca = self.proof[lca.index()]
                    .expect("nodes of one class share a proof tree")
                    .0;
            }
            for start in [x, y] {
                let mut cur = start;
                while cur != lca {
                    let (p, j) = self.proof[cur.index()].expect("path reaches the common ancestor");
                    if visited_edges.insert(cur) {
                        match j {
                            Justification::Asserted(l) => {
                                out.insert(l);
                            }
                            Justification::Congruence(n, m) => {
                                let (NodeKey::Apply(n1, n2), NodeKey::Apply(m1, m2)) =
                                    (self.keys[n.index()], self.keys[m.index()])
                                else {
                                    unreachable!("congruence edges join apply nodes");
                                };
                                work.push((n1, m1));
                                work.push((n2, m2));
                            }
                            Justification::Axiom => {}
                        }
                    }
                    cur = p;
                }
            }
        }
        let mut out: Vec<Label> = out.into_iter().collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Current equivalence classes as sorted vectors of node ids, ordered
    /// by their smallest member.
    pub fn classes(&self) -> Vec<Vec<NodeId>> {
        let mut by_root: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for i in 0..self.keys.len() {
            let n = NodeId(i as u32);
            by_root.entry(self.find(n)).or_default().push(n);
        }
        let mut classes: Vec<Vec<NodeId>> = by_root.into_values().collect();
        classes.sort_by_key(|c| c[0]);
        classes
    }
}

/// An [`EGraph`] paired with the mapping from terms to their flattened
/// nodes.
#[derive(Clone, Debug, Default)]
pub struct TermGraph {
    pub egraph: EGraph,
    node_of: HashMap<TermId, NodeId>,
    term_of: HashMap<NodeId, TermId>,
}

impl TermGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, t: TermId) -> Option<NodeId> {
        self.node_of.get(&t).copied()
    }

    /// The term a node stands for, when it is a full term rather than a
    /// partial application.
    pub fn term(&self, n: NodeId) -> Option<TermId> {
        self.term_of.get(&n).copied()
    }

    pub fn carrier_true(&mut self) -> NodeId {
        self.egraph.add_leaf(LeafKey::CarrierTrue)
    }

    pub fn carrier_false(&mut self) -> NodeId {
        self.egraph.add_leaf(LeafKey::CarrierFalse)
    }

    /// Maps `t` to its curried node. Applications become nested `apply`
    /// nodes over the symbol constant; any other non-application term is an
    /// opaque leaf. Idempotent.
    pub fn flatten(&mut self, store: &TermStore, t: TermId) -> Result<NodeId, Conflict> {
        if let Some(n) = self.node(t) {
            return Ok(n);
        }
        let n = match store.kind(t) {
            Kind::App(f) => {
                let mut cur = self.egraph.add_leaf(LeafKey::Symbol(f));
                for &a in store.args(t) {
                    let an = self.flatten(store, a)?;
                    cur = self.egraph.add_apply(cur, an)?;
                }
                cur
            }
            _ => self.egraph.add_leaf(LeafKey::Term(t)),
        };
        self.node_of.insert(t, n);
        self.term_of.insert(n, t);
        Ok(n)
    }

    /// Flattened terms in order of their node ids.
    pub fn terms(&self) -> Vec<(NodeId, TermId)> {
        let mut v: Vec<(NodeId, TermId)> = self.term_of.iter().map(|(&n, &t)| (n, t)).collect();
        v.sort();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(g: &mut EGraph, n: usize) -> Vec<NodeId> {
        let mut st = TermStore::new();
        let s = st.declare_sort("S", "S").unwrap();
        (0..n)
            .map(|i| {
                let f = st.declare_fun(&format!("c{i}"), "c", vec![], s).unwrap();
                let t = st.mk_const(f).unwrap();
                g.add_leaf(LeafKey::Term(t))
            })
            .collect()
    }

    #[test]
    fn transitivity_and_explain() {
        let mut g = EGraph::new();
        let v = leaves(&mut g, 3);
        g.merge(v[0], v[1], 1).unwrap();
        g.merge(v[1], v[2], 2).unwrap();
        assert!(g.are_equal(v[0], v[2]));
        assert_eq!(g.explain(v[0], v[1]).unwrap(), vec![1]);
        assert_eq!(g.explain(v[0], v[2]).unwrap(), vec![1, 2]);
    }

    #[test]
    fn congruence_and_conflict() {
        let mut g = EGraph::new();
        let v = leaves(&mut g, 3);
        let f = v[2];
        let fa = g.add_apply(f, v[0]).unwrap();
        let fb = g.add_apply(f, v[1]).unwrap();
        g.assert_diseq(fa, fb, 9).unwrap();
        let c = g.merge(v[0], v[1], 1).unwrap_err();
        assert_eq!(c.diseq.label, 9);
        assert_eq!(g.explain(fa, fb).unwrap(), vec![1]);
    }

    #[test]
    fn pop_restores_state() {
        let mut g = EGraph::new();
        let v = leaves(&mut g, 4);
        let fa = g.add_apply(v[3], v[0]).unwrap();
        let _fb = g.add_apply(v[3], v[1]).unwrap();
        let sig0 = g.sig_table_len();
        g.push_level();
        g.merge(v[0], v[1], 1).unwrap();
        g.push_level();
        g.merge(v[1], v[2], 2).unwrap();
        g.assert_diseq(v[0], v[3], 3).unwrap();
        g.pop_to(1);
        assert!(g.are_equal(v[0], v[1]));
        assert!(!g.are_equal(v[0], v[2]));
        g.pop_to(0);
        assert!(!g.are_equal(v[0], v[1]));
        assert_eq!(g.sig_table_len(), sig0);
        assert!(g.disequality_between(v[0], v[3]).is_none());
        assert_eq!(g.find(fa), fa);
    }

    #[test]
    fn diseq_lookup() {
        let mut g = EGraph::new();
        let v = leaves(&mut g, 3);
        g.assert_diseq(v[0], v[1], 5).unwrap();
        g.merge(v[1], v[2], 6).unwrap();
        assert_eq!(g.disequality_between(v[2], v[0]).map(|d| d.label), Some(5));
        assert!(g.assert_diseq(v[1], v[2], 7).is_err());
    }
}
