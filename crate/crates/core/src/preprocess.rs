//! Equisatisfiable rewriting of the assertion list: local simplification,
//! EUF-aware unit propagation and common-consequence extraction from
//! disjunctions of equality chains.
//!
//! Every rewrite that is not a propositional tautology over the atom
//! abstraction is backed by a recorded lemma, so that an unsat certificate
//! can justify the preprocessed problem from the original assertions.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::debug;

use crate::euf::{Conflict, Label, NodeId, TermGraph};
use crate::terms::{Kind, TermId, TermLit, TermStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PreproStats {
    pub units_propagated: usize,
    pub simplifications: usize,
    pub diamond_units: usize,
}

/// An equality entailed by a single disjunction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiamondUnit {
    pub unit: TermId,
    pub source: TermId,
    /// Position of `source` in the assertion list it was extracted from.
    pub source_index: usize,
}

#[derive(Clone, Debug, Default)]
pub struct PreproResult {
    pub assertions: Vec<TermId>,
    pub added_units: Vec<TermId>,
    pub diamond_units: Vec<DiamondUnit>,
    /// EUF-valid clauses over term literals justifying atom rewrites.
    pub lemmas: Vec<Vec<TermLit>>,
    pub stats: PreproStats,
}

/// Runs the full pipeline, or returns the input untouched when disabled.
pub fn preprocess(store: &mut TermStore, assertions: &[TermId], enabled: bool) -> PreproResult {
    if !enabled {
        return PreproResult {
            assertions: assertions.to_vec(),
            ..Default::default()
        };
    }
    let mut p = Preprocessor::new(store);
    let simplified: Vec<TermId> = assertions.iter().map(|&a| p.simplify(a)).collect();
    let mut current = p.unit_propagate(&simplified);
    let mut diamond = Vec::new();
    let present: HashSet<TermId> = current.iter().copied().collect();
    let mut added = Vec::new();
    for (i, &a) in current.iter().enumerate() {
        for u in diamond_extract(p.store, a) {
            if present.contains(&u) || added.contains(&u) {
                continue;
            }
            added.push(u);
            diamond.push(DiamondUnit {
                unit: u,
                source: a,
                source_index: i,
            });
        }
    }
    if !added.is_empty() {
        p.stats.diamond_units = added.len();
        current.extend(added.iter().copied());
        current = p.unit_propagate(&current);
    }
    debug!(
        "preprocess: {} -> {} assertions, {} diamond units, {} lemmas",
        assertions.len(),
        current.len(),
        added.len(),
        p.lemmas.len()
    );
    PreproResult {
        assertions: current,
        added_units: added,
        diamond_units: diamond,
        lemmas: p.lemmas,
        stats: p.stats,
    }
}

/// Bottom-up simplification of one Bool term.
pub fn simplify(store: &mut TermStore, t: TermId) -> TermId {
    Preprocessor::new(store).simplify(t)
}

/// Unit propagation to fixpoint over an assertion list.
pub fn unit_propagate(store: &mut TermStore, assertions: &[TermId]) -> Vec<TermId> {
    Preprocessor::new(store).unit_propagate(assertions)
}

/// True for the atoms unit propagation substitutes: Bool applications and
/// equalities between non-Bool terms.
pub fn is_atom(store: &TermStore, t: TermId) -> bool {
    match store.kind(t) {
        Kind::App(_) => store.is_bool(t),
        Kind::Eq => !store.is_bool(store.args(t)[0]),
        _ => false,
    }
}

fn as_unit(store: &TermStore, t: TermId) -> Option<(TermId, bool)> {
    if is_atom(store, t) {
        return Some((t, true));
    }
    if store.kind(t) == Kind::Not {
        let a = store.args(t)[0];
        if is_atom(store, a) {
            return Some((a, false));
        }
    }
    None
}

pub struct Preprocessor<'a> {
    pub store: &'a mut TermStore,
    pub lemmas: Vec<Vec<TermLit>>,
    pub stats: PreproStats,
    memo: HashMap<TermId, TermId>,
    seen_lemmas: HashSet<Vec<TermLit>>,
}

impl<'a> Preprocessor<'a> {
    pub fn new(store: &'a mut TermStore) -> Self {
        Preprocessor {
            store,
            lemmas: Vec::new(),
            stats: PreproStats::default(),
            memo: HashMap::new(),
            seen_lemmas: HashSet::new(),
        }
    }

    fn lemma(&mut self, mut lits: Vec<TermLit>) {
        lits.sort();
        lits.dedup();
        if self.seen_lemmas.insert(lits.clone()) {
            self.lemmas.push(lits);
        }
    }

    /// Children that must be in normal form before `t` is rewritten.
    /// Application arguments and conditions of term-level `ite` are left
    /// alone.
    fn rewrite_children(&self, t: TermId) -> Vec<TermId> {
        match self.store.kind(t) {
            Kind::True | Kind::False | Kind::App(_) => Vec::new(),
            Kind::Ite if !self.store.is_bool(t) => self.store.args(t)[1..].to_vec(),
            _ => self.store.args(t).to_vec(),
        }
    }

    pub fn simplify(&mut self, root: TermId) -> TermId {
        let mut stack = vec![(root, false)];
        while let Some((t, expanded)) = stack.pop() {
            if self.memo.contains_key(&t) {
                continue;
            }
            if !expanded {
                stack.push((t, true));
                for c in self.rewrite_children(t) {
                    if !self.memo.contains_key(&c) {
                        stack.push((c, false));
                    }
                }
                continue;
            }
            let r = self.rewrite(t);
            self.memo.insert(t, r);
        }
        self.memo[&root]
    }

    fn s(&self, t: TermId) -> TermId {
        self.memo.get(&t).copied().unwrap_or(t)
    }

    fn rewrite(&mut self, t: TermId) -> TermId {
        let args: Vec<TermId> = self.store.args(t).to_vec();
        match self.store.kind(t) {
            Kind::True | Kind::False | Kind::App(_) => t,
            Kind::Not => self.not(self.s(args[0])),
            Kind::And => {
                let kids: Vec<TermId> = args.iter().map(|&a| self.s(a)).collect();
                self.and_or(Kind::And, kids)
            }
            Kind::Or => {
                let kids: Vec<TermId> = args.iter().map(|&a| self.s(a)).collect();
                self.and_or(Kind::Or, kids)
            }
            Kind::Xor => {
                let kids: Vec<TermId> = args.iter().map(|&a| self.s(a)).collect();
                self.xor(kids)
            }
            Kind::Implies => {
                let kids: Vec<TermId> = args.iter().map(|&a| self.s(a)).collect();
                self.implies(kids)
            }
            Kind::Ite => {
                let (c, x, y) = (args[0], self.s(args[1]), self.s(args[2]));
                if self.store.is_bool(t) {
                    self.ite_bool(self.s(c), x, y)
                } else {
                    self.ite_term(c, x, y)
                }
            }
            Kind::Eq => {
                let (a, b) = (self.s(args[0]), self.s(args[1]));
                if self.store.is_bool(args[0]) {
                    self.eq_bool(a, b)
                } else {
                    self.eq_term(t, a, b)
                }
            }
            Kind::Distinct => {
                let kids: Vec<TermId> = args.iter().map(|&a| self.s(a)).collect();
                if self.store.is_bool(args[0]) {
                    self.distinct_bool(t, kids)
                } else {
                    self.distinct_term(t, &args, kids)
                }
            }
        }
    }

    fn hit(&mut self) {
        self.stats.simplifications += 1;
    }

    fn mk(&mut self, kind: Kind, args: &[TermId]) -> TermId {
        self.store
            .mk(kind, args)
            .expect("rewriting preserves sorts")
    }

    fn not(&mut self, a: TermId) -> TermId {
        match self.store.kind(a) {
            Kind::True => {
                self.hit();
                self.store.mk_false()
            }
            Kind::False => {
                self.hit();
                self.store.mk_true()
            }
            Kind::Not => {
                self.hit();
                self.store.args(a)[0]
            }
            _ => self.mk(Kind::Not, &[a]),
        }
    }

    fn complement_of(&self, x: TermId) -> Option<TermId> {
        (self.store.kind(x) == Kind::Not).then(|| self.store.args(x)[0])
    }

    fn and_or(&mut self, kind: Kind, kids: Vec<TermId>) -> TermId {
        let (neutral, absorbing) = if kind == Kind::And {
            (Kind::True, Kind::False)
        } else {
            (Kind::False, Kind::True)
        };
        let mut flat = Vec::new();
        for k in kids {
            if self.store.kind(k) == kind {
                self.hit();
                flat.extend_from_slice(self.store.args(k));
            } else {
                flat.push(k);
            }
        }
        let mut out = Vec::with_capacity(flat.len());
        let mut seen = HashSet::new();
        for k in flat {
            let kk = self.store.kind(k);
            if kk == neutral {
                self.hit();
                continue;
            }
            if kk == absorbing {
                self.hit();
                return k;
            }
            if !seen.insert(k) {
                self.hit();
                continue;
            }
            out.push(k);
        }
        if out
            .iter()
            .any(|&x| self.complement_of(x).is_some_and(|y| seen.contains(&y)))
        {
            self.hit();
            return self.store.mk_bool(kind == Kind::Or);
        }
        match out.len() {
            0 => self.store.mk_bool(kind == Kind::And),
            1 => out[0],
            _ => self.mk(kind, &out),
        }
    }

    fn xor(&mut self, kids: Vec<TermId>) -> TermId {
        let mut parity = false;
        let mut flat = Vec::new();
        for k in kids {
            if self.store.kind(k) == Kind::Xor {
                self.hit();
                flat.extend_from_slice(self.store.args(k));
            } else {
                flat.push(k);
            }
        }
        let mut out: Vec<TermId> = Vec::new();
        for k in flat {
            match self.store.kind(k) {
                Kind::False => self.hit(),
                Kind::True => {
                    self.hit();
                    parity = !parity;
                }
                _ => {
                    if let Some(pos) = out.iter().position(|&x| x == k) {
                        self.hit();
                        out.remove(pos);
                    } else {
                        out.push(k);
                    }
                }
            }
        }
        // x xor (not x) is true
        loop {
            let pair = out.iter().enumerate().find_map(|(i, &x)| {
                let y = self.complement_of(x)?;
                out.iter().position(|&z| z == y).map(|j| (i, j))
            });
            let Some((i, j)) = pair else { break };
            self.hit();
            let (hi, lo) = (i.max(j), i.min(j));
            out.remove(hi);
            out.remove(lo);
            parity = !parity;
        }
        let base = match out.len() {
            0 => return self.store.mk_bool(parity),
            1 => out[0],
            _ => self.mk(Kind::Xor, &out),
        };
        if parity {
            self.not(base)
        } else {
            base
        }
    }

    fn implies(&mut self, kids: Vec<TermId>) -> TermId {
        let (&last, premises) = kids.split_last().expect("implies has a conclusion");
        let mut concl = last;
        let mut prem: Vec<TermId> = premises.to_vec();
        while self.store.kind(concl) == Kind::Implies {
            self.hit();
            let (&l, p) = self.store.args(concl).split_last().expect("non-empty");
            prem.extend_from_slice(p);
            concl = l;
        }
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for p in prem {
            match self.store.kind(p) {
                Kind::True => self.hit(),
                Kind::False => {
                    self.hit();
                    return self.store.mk_true();
                }
                _ => {
                    if seen.insert(p) {
                        out.push(p);
                    } else {
                        self.hit();
                    }
                }
            }
        }
        if out
            .iter()
            .any(|&x| self.complement_of(x).is_some_and(|y| seen.contains(&y)))
        {
            self.hit();
            return self.store.mk_true();
        }
        if out.is_empty() {
            if kids.len() > 1 {
                self.hit();
            }
            return concl;
        }
        match self.store.kind(concl) {
            Kind::True => {
                self.hit();
                return concl;
            }
            Kind::False => {
                self.hit();
                let conj = self.and_or(Kind::And, out);
                return self.not(conj);
            }
            _ => {}
        }
        if seen.contains(&concl) {
            self.hit();
            return self.store.mk_true();
        }
        if self.complement_of(concl).is_some_and(|y| seen.contains(&y)) && out.len() == 1 {
            // (=> x (not x)) is (not x)
            self.hit();
            return concl;
        }
        out.push(concl);
        self.mk(Kind::Implies, &out)
    }

    fn ite_bool(&mut self, c: TermId, x: TermId, y: TermId) -> TermId {
        match self.store.kind(c) {
            Kind::True => {
                self.hit();
                return x;
            }
            Kind::False => {
                self.hit();
                return y;
            }
            _ => {}
        }
        if x == y {
            self.hit();
            return x;
        }
        match (self.store.kind(x), self.store.kind(y)) {
            (Kind::True, Kind::False) => {
                self.hit();
                c
            }
            (Kind::False, Kind::True) => {
                self.hit();
                self.not(c)
            }
            _ => self.mk(Kind::Ite, &[c, x, y]),
        }
    }

    /// Term-level `ite`: only constant conditions and equal branches.
    fn ite_term(&mut self, c: TermId, x: TermId, y: TermId) -> TermId {
        match self.store.kind(c) {
            Kind::True => {
                self.hit();
                x
            }
            Kind::False => {
                self.hit();
                y
            }
            _ if x == y => {
                self.hit();
                x
            }
            _ => self.mk(Kind::Ite, &[c, x, y]),
        }
    }

    fn eq_bool(&mut self, a: TermId, b: TermId) -> TermId {
        if a == b {
            self.hit();
            return self.store.mk_true();
        }
        for (x, y) in [(a, b), (b, a)] {
            match self.store.kind(x) {
                Kind::True => {
                    self.hit();
                    return y;
                }
                Kind::False => {
                    self.hit();
                    return self.not(y);
                }
                _ => {}
            }
        }
        if self.complement_of(a) == Some(b) || self.complement_of(b) == Some(a) {
            self.hit();
            return self.store.mk_false();
        }
        self.mk(Kind::Eq, &[a, b])
    }

    /// Records `old <-> new` for two non-Bool equality atoms.
    fn atom_rewrite(&mut self, old: TermId, new: TermId) {
        if old != new {
            self.lemma(vec![TermLit::neg(old), TermLit::pos(new)]);
            self.lemma(vec![TermLit::pos(old), TermLit::neg(new)]);
        }
    }

    fn eq_term(&mut self, t: TermId, a: TermId, b: TermId) -> TermId {
        let new = self.mk(Kind::Eq, &[a, b]);
        self.atom_rewrite(t, new);
        if a == b {
            self.hit();
            self.lemma(vec![TermLit::pos(new)]);
            return self.store.mk_true();
        }
        new
    }

    fn distinct_bool(&mut self, t: TermId, kids: Vec<TermId>) -> TermId {
        let unique: HashSet<TermId> = kids.iter().copied().collect();
        if kids.len() >= 3 || unique.len() < kids.len() {
            self.hit();
            return self.store.mk_false();
        }
        if kids == self.store.args(t) {
            return t;
        }
        self.mk(Kind::Distinct, &kids)
    }

    fn distinct_term(&mut self, t: TermId, orig: &[TermId], kids: Vec<TermId>) -> TermId {
        if kids != orig {
            for i in 0..orig.len() {
                for j in i + 1..orig.len() {
                    if (orig[i], orig[j]) != (kids[i], kids[j]) {
                        let old = self.mk(Kind::Eq, &[orig[i], orig[j]]);
                        let new = self.mk(Kind::Eq, &[kids[i], kids[j]]);
                        self.atom_rewrite(old, new);
                    }
                }
            }
        }
        let mut seen = HashSet::new();
        for &k in &kids {
            if !seen.insert(k) {
                self.hit();
                let refl = self.mk(Kind::Eq, &[k, k]);
                self.lemma(vec![TermLit::pos(refl)]);
                return self.store.mk_false();
            }
        }
        if kids == orig {
            t
        } else {
            self.mk(Kind::Distinct, &kids)
        }
    }

    /// Splits top-level conjunctions and drops `true`.
    fn split(&self, assertions: &[TermId]) -> Vec<TermId> {
        let mut out = Vec::new();
        let mut stack: Vec<TermId> = assertions.iter().rev().copied().collect();
        while let Some(a) = stack.pop() {
            match self.store.kind(a) {
                Kind::And => stack.extend(self.store.args(a).iter().rev().copied()),
                Kind::True => {}
                _ => out.push(a),
            }
        }
        out
    }

    pub fn unit_propagate(&mut self, assertions: &[TermId]) -> Vec<TermId> {
        let mut current = self.split(assertions);
        loop {
            if current.iter().any(|&a| self.store.kind(a) == Kind::False) {
                return vec![self.store.mk_false()];
            }
            let mut units: HashMap<TermId, bool> = HashMap::new();
            for &a in &current {
                if let Some((atom, pol)) = as_unit(self.store, a) {
                    if units.insert(atom, pol) == Some(!pol) {
                        return vec![self.store.mk_false()];
                    }
                }
            }
            let mut closure = match UnitClosure::build(self.store, &units) {
                Ok(c) => c,
                Err(lemma) => {
                    self.lemma(lemma);
                    return vec![self.store.mk_false()];
                }
            };
            let mut changed = false;
            let mut next = Vec::with_capacity(current.len());
            for &a in &current {
                if as_unit(self.store, a).is_some() {
                    next.push(a);
                    continue;
                }
                match self.substitute(a, &units, &mut closure) {
                    Ok(r) => {
                        if r != a {
                            changed = true;
                            let r = self.simplify(r);
                            next.push(r);
                        } else {
                            next.push(a);
                        }
                    }
                    Err(lemma) => {
                        self.lemma(lemma);
                        return vec![self.store.mk_false()];
                    }
                }
            }
            let next = self.split(&next);
            if !changed {
                return next;
            }
            current = next;
        }
    }

    /// Replaces unit atoms and atoms decided by the unit closure with
    /// constants, walking only the Boolean structure of `root`.
    fn substitute(
        &mut self,
        root: TermId,
        units: &HashMap<TermId, bool>,
        closure: &mut UnitClosure,
    ) -> Result<TermId, Vec<TermLit>> {
        let mut memo: HashMap<TermId, TermId> = HashMap::new();
        let mut stack = vec![(root, false)];
        while let Some((t, expanded)) = stack.pop() {
            if memo.contains_key(&t) {
                continue;
            }
            let descend = !is_atom(self.store, t)
                && self.store.is_bool(t)
                && !matches!(self.store.kind(t), Kind::True | Kind::False)
                && !(self.store.kind(t) == Kind::Distinct && !self.store.is_bool(self.store.args(t)[0]));
            if !expanded && descend {
                stack.push((t, true));
                for &c in self.store.args(t) {
                    if !memo.contains_key(&c) {
                        stack.push((c, false));
                    }
                }
                continue;
            }
            let r = if let Some(&v) = units.get(&t) {
                self.stats.units_propagated += 1;
                self.store.mk_bool(v)
            } else if is_atom(self.store, t) && self.store.kind(t) == Kind::Eq {
                match closure.decide(self.store, t)? {
                    Some((v, lemma)) => {
                        self.stats.units_propagated += 1;
                        self.lemma(lemma);
                        self.store.mk_bool(v)
                    }
                    None => t,
                }
            } else if self.store.kind(t) == Kind::Distinct && !self.store.is_bool(self.store.args(t)[0]) {
                match closure.distinct_violated(self.store, t)? {
                    Some(lemma) => {
                        self.stats.units_propagated += 1;
                        self.lemma(lemma);
                        self.store.mk_false()
                    }
                    None => t,
                }
            } else if descend {
                let args: Vec<TermId> = self.store.args(t).iter().map(|a| memo[a]).collect();
                if args == self.store.args(t) {
                    t
                } else {
                    self.mk(self.store.kind(t), &args)
                }
            } else {
                t
            };
            memo.insert(t, r);
        }
        Ok(memo[&root])
    }
}

/// Congruence closure over the equality units of an assertion list.
struct UnitClosure {
    graph: TermGraph,
    /// Label -> (atom, polarity of the unit)
    units: Vec<(TermId, bool)>,
}

impl UnitClosure {
    fn build(store: &TermStore, units: &HashMap<TermId, bool>) -> Result<Self, Vec<TermLit>> {
        let mut uc = UnitClosure {
            graph: TermGraph::new(),
            units: Vec::new(),
        };
        let mut eqs: Vec<(TermId, bool)> = units
            .iter()
            .filter(|(&t, _)| store.kind(t) == Kind::Eq)
            .map(|(&t, &v)| (t, v))
            .collect();
        eqs.sort();
        for (t, v) in eqs {
            let label = uc.units.len() as Label;
            uc.units.push((t, v));
            let (a, b) = uc.flatten_pair(store, t)?;
            let r = if v {
                uc.graph.egraph.merge(a, b, label)
            } else {
                uc.graph.egraph.assert_diseq(a, b, label)
            };
            r.map_err(|c| uc.conflict_lemma(c))?;
        }
        Ok(uc)
    }

    fn flatten_pair(&mut self, store: &TermStore, eq: TermId) -> Result<(NodeId, NodeId), Vec<TermLit>> {
        let args = store.args(eq);
        let a = self.graph.flatten(store, args[0]).map_err(|c| self.conflict_lemma(c))?;
        let b = self.graph.flatten(store, args[1]).map_err(|c| self.conflict_lemma(c))?;
        Ok((a, b))
    }

    /// Negated premises: a positive unit contributes its negation, a
    /// negative unit contributes its atom.
    fn premises(&self, labels: &[Label]) -> Vec<TermLit> {
        labels
            .iter()
            .map(|&l| {
                let (t, v) = self.units[l as usize];
                TermLit { term: t, positive: !v }
            })
            .collect()
    }

    fn conflict_lemma(&self, c: Conflict) -> Vec<TermLit> {
        let mut labels = self
            .graph
            .egraph
            .explain(c.diseq.a, c.diseq.b)
            .expect("conflicting disequality has equal sides");
        labels.push(c.diseq.label);
        self.premises(&labels)
    }

    /// Explanation of why `x` and `y` are separated by disequality `d`.
    fn diseq_labels(&self, x: NodeId, y: NodeId, d: crate::euf::Diseq) -> Vec<Label> {
        let eg = &self.graph.egraph;
        let (dx, dy) = if eg.are_equal(x, d.a) { (d.a, d.b) } else { (d.b, d.a) };
        let mut labels = eg.explain(x, dx).expect("same class");
        labels.extend(eg.explain(y, dy).expect("same class"));
        labels.push(d.label);
        labels
    }

    /// Truth value of a non-unit equality atom forced by the units, with
    /// its justifying lemma.
    fn decide(
        &mut self,
        store: &TermStore,
        atom: TermId,
    ) -> Result<Option<(bool, Vec<TermLit>)>, Vec<TermLit>> {
        let (a, b) = self.flatten_pair(store, atom)?;
        let eg = &self.graph.egraph;
        if eg.are_equal(a, b) {
            let labels = eg.explain(a, b).expect("equal");
            let mut lemma = self.premises(&labels);
            lemma.push(TermLit::pos(atom));
            return Ok(Some((true, lemma)));
        }
        if let Some(d) = eg.disequality_between(a, b) {
            let labels = self.diseq_labels(a, b, d);
            let mut lemma = self.premises(&labels);
            lemma.push(TermLit::neg(atom));
            return Ok(Some((false, lemma)));
        }
        Ok(None)
    }

    fn distinct_violated(
        &mut self,
        store: &mut TermStore,
        t: TermId,
    ) -> Result<Option<Vec<TermLit>>, Vec<TermLit>> {
        let args = store.args(t).to_vec();
        let mut nodes = Vec::with_capacity(args.len());
        for &a in &args {
            nodes.push(self.graph.flatten(store, a).map_err(|c| self.conflict_lemma(c))?);
        }
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                if self.graph.egraph.are_equal(nodes[i], nodes[j]) {
                    let labels = self.graph.egraph.explain(nodes[i], nodes[j]).expect("equal");
                    let mut lemma = self.premises(&labels);
                    let eq = store.mk_eq(args[i], args[j]).expect("same sort");
                    lemma.push(TermLit::pos(eq));
                    return Ok(Some(lemma));
                }
            }
        }
        Ok(None)
    }
}

/// Common consequences of a disjunction whose branches are equalities or
/// conjunctions of equalities. Returns unit equalities forming a spanning
/// forest of the classes every branch agrees on.
pub fn diamond_extract(store: &mut TermStore, assertion: TermId) -> Vec<TermId> {
    let Some(branches) = diamond_branches(store, assertion) else {
        return Vec::new();
    };
    let terms: Vec<TermId> = store
        .subterms(assertion)
        .into_iter()
        .filter(|&t| !store.is_bool(t))
        .collect();
    let mut keys: Vec<Vec<NodeId>> = vec![Vec::with_capacity(branches.len()); terms.len()];
    for branch in &branches {
        let Some(graph) = branch_closure(store, &terms, branch) else {
            // An inconsistent branch is false and entails everything;
            // it places no constraint on the common pairs.
            continue;
        };
        for (i, &t) in terms.iter().enumerate() {
            let n = graph.node(t).expect("flattened");
            keys[i].push(graph.egraph.find(n));
        }
    }
    let mut groups: BTreeMap<Vec<NodeId>, Vec<TermId>> = BTreeMap::new();
    for (i, &t) in terms.iter().enumerate() {
        groups.entry(keys[i].clone()).or_default().push(t);
    }
    let mut units = Vec::new();
    let mut classes: Vec<Vec<TermId>> = groups.into_values().filter(|g| g.len() > 1).collect();
    classes.sort();
    for mut class in classes {
        class.sort();
        let root = class[0];
        for &m in &class[1..] {
            units.push(store.mk_eq(root, m).expect("same sort"));
        }
    }
    units
}

/// The equality lists of each branch, when `t` has the required shape.
pub fn diamond_branches(store: &TermStore, t: TermId) -> Option<Vec<Vec<TermId>>> {
    if store.kind(t) != Kind::Or || store.args(t).is_empty() {
        return None;
    }
    let is_eq = |x: TermId| store.kind(x) == Kind::Eq && !store.is_bool(store.args(x)[0]);
    let mut branches = Vec::new();
    for &b in store.args(t) {
        if is_eq(b) {
            branches.push(vec![b]);
        } else if store.kind(b) == Kind::And && store.args(b).iter().all(|&x| is_eq(x)) {
            branches.push(store.args(b).to_vec());
        } else {
            return None;
        }
    }
    Some(branches)
}

/// Closure of one branch over `terms`, or `None` if it is inconsistent
/// (cannot happen without disequalities, kept for robustness).
pub fn branch_closure(store: &TermStore, terms: &[TermId], eqs: &[TermId]) -> Option<TermGraph> {
    let mut g = TermGraph::new();
    for &t in terms {
        g.flatten(store, t).ok()?;
    }
    for (i, &e) in eqs.iter().enumerate() {
        let a = g.flatten(store, store.args(e)[0]).ok()?;
        let b = g.flatten(store, store.args(e)[1]).ok()?;
        g.egraph.merge(a, b, i as Label).ok()?;
    }
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smtlib::{parse_script, print_term};

    fn setup(decls: &str, asserts: &str) -> (TermStore, Vec<TermId>) {
        let src = format!("{decls}{asserts}");
        let s = parse_script(src.as_bytes()).unwrap();
        let a = s.assertions();
        (s.store, a)
    }

    const DECLS: &str = "(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)(declare-fun c () S)\
        (declare-fun d () S)(declare-fun w () S)(declare-fun x () S)(declare-fun y () S)(declare-fun z () S)\
        (declare-fun f (S) S)(declare-fun p () Bool)(declare-fun q () Bool)(declare-fun r () Bool)\
        (declare-fun C () Bool)";

    fn simp_str(asserts: &str) -> String {
        let (mut st, a) = setup(DECLS, asserts);
        let r = simplify(&mut st, a[0]);
        print_term(&st, r)
    }

    #[test]
    fn simplification_examples() {
        assert_eq!(simp_str("(assert (= (f a) (f a)))"), "true");
        assert_eq!(simp_str("(assert (= (ite C (f a) (f a)) b))"), "(= (f a) b)");
        assert_eq!(simp_str("(assert (and p (not p) q))"), "false");
        assert_eq!(simp_str("(assert (not (not p)))"), "p");
        assert_eq!(simp_str("(assert (or p false (or q p)))"), "(or p q)");
        assert_eq!(simp_str("(assert (xor p false q p))"), "q");
        assert_eq!(simp_str("(assert (xor p true q))"), "(not (xor p q))");
        assert_eq!(simp_str("(assert (=> true p))"), "p");
        assert_eq!(simp_str("(assert (=> p false))"), "(not p)");
        assert_eq!(simp_str("(assert (distinct a b a))"), "false");
        assert_eq!(simp_str("(assert (distinct p q r))"), "false");
        assert_eq!(simp_str("(assert (ite true p q))"), "p");
        assert_eq!(simp_str("(assert (= p true))"), "p");
    }

    #[test]
    fn simplify_does_not_enter_application_arguments() {
        let (mut st, a) = setup(
            "(declare-sort S 0)(declare-fun g (Bool) S)(declare-fun p () Bool)(declare-fun b () S)",
            "(assert (= (g (not (not p))) b))",
        );
        let r = simplify(&mut st, a[0]);
        assert_eq!(r, a[0]);
    }

    #[test]
    fn reflexivity_is_recorded_as_lemma() {
        let (mut st, a) = setup(DECLS, "(assert (or p (= a a)))");
        let mut p = Preprocessor::new(&mut st);
        assert_eq!(p.simplify(a[0]), p.store.mk_true());
        assert_eq!(p.lemmas.len(), 1);
        assert_eq!(p.lemmas[0].len(), 1);
    }

    fn up(asserts: &str) -> Vec<String> {
        let (mut st, a) = setup(DECLS, asserts);
        let r = unit_propagate(&mut st, &a);
        r.iter().map(|&t| print_term(&st, t)).collect()
    }

    #[test]
    fn unit_propagation_examples() {
        assert_eq!(up("(assert p)(assert (or (not p) q))"), vec!["p", "q"]);
        assert_eq!(up("(assert (= a b))(assert (not (= a b)))"), vec!["false"]);
        assert_eq!(up("(assert (not p))(assert (xor p q))"), vec!["(not p)", "q"]);
        assert_eq!(up("(assert true)(assert true)"), Vec::<String>::new());
    }

    #[test]
    fn unit_propagation_uses_congruence() {
        let (mut st, a) = setup(DECLS, "(assert (= a b))(assert (or (= (f a) (f b)) p))");
        let mut p = Preprocessor::new(&mut st);
        let r = p.unit_propagate(&a);
        assert_eq!(r, vec![a[0]]);
        assert_eq!(p.lemmas.len(), 1);
        let (mut st, a) = setup(DECLS, "(assert (= a b))(assert (= b c))(assert (not (= a c)))");
        let r = unit_propagate(&mut st, &a);
        assert_eq!(r, vec![st.mk_false()]);
    }

    #[test]
    fn diamond_examples() {
        let (mut st, a) = setup(DECLS, "(assert (or (and (= x y) (= y z)) (and (= x w) (= w z))))");
        let u = diamond_extract(&mut st, a[0]);
        let printed: Vec<String> = u.iter().map(|&t| print_term(&st, t)).collect();
        assert_eq!(printed, vec!["(= x z)"]);

        let (mut st, a) = setup(DECLS, "(assert (or (= a b) (= a b)))");
        // `or` of a duplicated child is parsed as is; the extraction sees two branches.
        let u = diamond_extract(&mut st, a[0]);
        assert_eq!(u.len(), 1);
        assert_eq!(print_term(&st, u[0]), "(= a b)");

        let (mut st, a) = setup(DECLS, "(assert (or (and (= a b)) (and (= c d))))");
        assert!(diamond_extract(&mut st, a[0]).is_empty());

        let (mut st, a) = setup(DECLS, "(assert (or (= a b) p))");
        assert!(diamond_extract(&mut st, a[0]).is_empty());
    }

    #[test]
    fn diamond_uses_congruence() {
        let (mut st, a) = setup(DECLS, "(assert (or (and (= a b) (= c (f a)) (= d (f b))) (= c d)))");
        let u = diamond_extract(&mut st, a[0]);
        let printed: Vec<String> = u.iter().map(|&t| print_term(&st, t)).collect();
        assert_eq!(printed, vec!["(= c d)"]);
    }

    #[test]
    fn disabled_is_identity() {
        let (mut st, a) = setup(DECLS, "(assert (and p p))(assert (= a a))");
        let r = preprocess(&mut st, &a, false);
        assert_eq!(r.assertions, a);
        assert!(r.added_units.is_empty());
    }
}
