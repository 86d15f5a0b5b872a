//! Unsat certificates: the lemmas a refutation needs, a proof-assistant
//! script stating them, and an internal replay checker.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use thiserror::Error;

use crate::cnf::{AtomDef, CnfProblem, Encoder};
use crate::driver::Outcome;
use crate::euf::{Label, NodeId, TermGraph};
use crate::preprocess::{branch_closure, diamond_branches};
use crate::sat::{Budget, Lit, NoHooks, SatConfig, Solver, StepKind, Verdict};
use crate::terms::{Kind, SortId, TermId, TermLit, TermStore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("no certificate: verdict is not unsat")]
    NotUnsat,
    #[error("incomplete proof log: {0}")]
    IncompleteLog(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LemmaOrigin {
    Theory,
    Preprocess,
    IteAxiom,
    /// Common consequence of a disjunction; `source_index` points into the
    /// preprocessed assertion list.
    Diamond { source_index: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LemmaBody {
    Clause(Vec<TermLit>),
    Implication { source: TermId, unit: TermId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lemma {
    pub origin: LemmaOrigin,
    pub body: LemmaBody,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub store: TermStore,
    pub assumptions: Vec<TermId>,
    pub lemmas: Vec<Lemma>,
    /// Propositional abstraction of the assumptions and lemmas.
    pub skeleton: CnfProblem,
}

impl Certificate {
    pub fn count(&self, pred: impl Fn(LemmaOrigin) -> bool) -> usize {
        self.lemmas.iter().filter(|l| pred(l.origin)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Replay {
    Valid,
    Invalid {
        stage: u8,
        lemma: Option<usize>,
        reason: String,
    },
}

impl Replay {
    pub fn is_valid(&self) -> bool {
        *self == Replay::Valid
    }
}

/// Maps a clause over SAT atoms to term literals. Returns `None` for a
/// clause that is trivially true (it contains `⊤̂ ≠ ⊥̂`).
pub fn sat_clause_terms(cnf: &CnfProblem, lits: &[Lit]) -> Result<Option<Vec<TermLit>>, ProofError> {
    let mut out = Vec::with_capacity(lits.len());
    for &l in lits {
        let pos = l.is_positive();
        let def = cnf.atoms.def_of(l.var()).ok_or_else(|| {
            ProofError::IncompleteLog(format!("variable {} has no atom", l.var().0))
        })?;
        match def {
            AtomDef::Eq(t) | AtomDef::Prop(t) | AtomDef::BridgeTrue(t) => {
                out.push(TermLit { term: t, positive: pos })
            }
            AtomDef::BridgeFalse(t) => out.push(TermLit { term: t, positive: !pos }),
            AtomDef::CarrierEq if pos => {}
            AtomDef::CarrierEq => return Ok(None),
        }
    }
    out.sort();
    out.dedup();
    Ok(Some(out))
}

/// Refutes the skeleton, returning the set of lemma indices whose root
/// clauses appear in the unsat core, or `None` if it is satisfiable.
fn skeleton_core(store: &mut TermStore, assumptions: &[TermId], lemmas: &[Lemma]) -> Option<HashSet<usize>> {
    let (cnf, roots) = encode_with_roots(store, assumptions, lemmas);
    let mut s = Solver::new(cnf.num_vars, SatConfig { track_core: true, ..Default::default() });
    for c in &cnf.clauses {
        s.add_clause(c);
    }
    let r = s.solve(&mut NoHooks, Budget::default()).ok()?;
    if r.verdict != Verdict::Unsat {
        return None;
    }
    let core: HashSet<usize> = r.core.unwrap_or_default().into_iter().collect();
    Some(
        roots
            .iter()
            .enumerate()
            .filter(|(_, r)| core.contains(r))
            .map(|(i, _)| i)
            .collect(),
    )
}

/// Encodes assumptions and lemmas; returns the problem and, per lemma, the
/// index of the clause standing for it.
fn encode_with_roots(
    store: &mut TermStore,
    assumptions: &[TermId],
    lemmas: &[Lemma],
) -> (CnfProblem, Vec<usize>) {
    let implications: Vec<Option<TermId>> = lemmas
        .iter()
        .map(|l| match l.body {
            LemmaBody::Implication { source, unit } => {
                Some(store.mk(Kind::Implies, &[source, unit]).expect("Bool operands"))
            }
            LemmaBody::Clause(_) => None,
        })
        .collect();
    let mut e = Encoder::new(store, false);
    for &a in assumptions {
        e.assert(a);
    }
    let mut roots = Vec::with_capacity(lemmas.len());
    for (l, imp) in lemmas.iter().zip(implications) {
        match &l.body {
            LemmaBody::Clause(c) => {
                let pairs: Vec<(TermId, bool)> = c.iter().map(|x| (x.term, x.positive)).collect();
                e.add_term_clause(&pairs);
            }
            LemmaBody::Implication { .. } => {
                e.assert(imp.expect("implication term"));
            }
        }
        roots.push(e.num_clauses() - 1);
    }
    (e.finish(), roots)
}

fn skeleton_is_unsat(store: &mut TermStore, assumptions: &[TermId], lemmas: &[Lemma]) -> bool {
    skeleton_core(store, assumptions, lemmas).is_some()
}

/// Largest lemma count for which the certificate is shrunk to a
/// lemma-minimal set by deletion.
const MINIMIZE_LIMIT: usize = 400;

pub fn build_certificate(store: &TermStore, outcome: &Outcome) -> Result<Certificate, ProofError> {
    if outcome.verdict != Verdict::Unsat {
        return Err(ProofError::NotUnsat);
    }
    let mut store = store.clone();
    let mut lemmas: Vec<Lemma> = Vec::new();
    let mut seen: HashSet<Vec<TermLit>> = HashSet::new();
    let mut push_clause = |lemmas: &mut Vec<Lemma>, origin, c: Vec<TermLit>| {
        if seen.insert(c.clone()) {
            lemmas.push(Lemma { origin, body: LemmaBody::Clause(c) });
        }
    };
    for c in &outcome.prepro.lemmas {
        push_clause(&mut lemmas, LemmaOrigin::Preprocess, c.clone());
    }
    for d in &outcome.prepro.diamond_units {
        lemmas.push(Lemma {
            origin: LemmaOrigin::Diamond { source_index: d.source_index },
            body: LemmaBody::Implication { source: d.source, unit: d.unit },
        });
    }
    for ite in &outcome.cnf.ites {
        let c = store.args(ite.ite)[0];
        let mut a = vec![TermLit::neg(c), TermLit::pos(ite.then_eq)];
        let mut b = vec![TermLit::pos(c), TermLit::pos(ite.else_eq)];
        a.sort();
        b.sort();
        push_clause(&mut lemmas, LemmaOrigin::IteAxiom, a);
        push_clause(&mut lemmas, LemmaOrigin::IteAxiom, b);
    }
    for step in &outcome.sat.proof_log {
        if step.kind != StepKind::Theory {
            continue;
        }
        if let Some(c) = sat_clause_terms(&outcome.cnf, &step.lits)? {
            push_clause(&mut lemmas, LemmaOrigin::Theory, c);
        }
    }

    let assumptions = outcome.assertions.clone();
    let core = skeleton_core(&mut store, &assumptions, &lemmas).ok_or_else(|| {
        ProofError::IncompleteLog("skeleton over assumptions and lemmas is satisfiable".into())
    })?;
    let mut kept: Vec<Lemma> = lemmas
        .into_iter()
        .enumerate()
        .filter(|(i, _)| core.contains(i))
        .map(|(_, l)| l)
        .collect();
    if kept.len() <= MINIMIZE_LIMIT {
        let mut i = 0;
        while i < kept.len() {
            let mut trial = kept.clone();
            trial.remove(i);
            match skeleton_core(&mut store, &assumptions, &trial) {
                Some(core) => {
                    kept = trial
                        .into_iter()
                        .enumerate()
                        .filter(|(j, _)| core.contains(j))
                        .map(|(_, l)| l)
                        .collect();
                    i = i.min(kept.len());
                }
                None => i += 1,
            }
        }
    }
    let (skeleton, _) = encode_with_roots(&mut store, &assumptions, &kept);
    Ok(Certificate { store, assumptions, lemmas: kept, skeleton })
}

// ---------------------------------------------------------------------------
// Replay

struct Closure<'a> {
    store: &'a TermStore,
    g: TermGraph,
    top: NodeId,
    bot: NodeId,
    conflict: bool,
}

impl<'a> Closure<'a> {
    fn new(store: &'a TermStore) -> Self {
        let mut g = TermGraph::new();
        let top = g.carrier_true();
        let bot = g.carrier_false();
        g.egraph.assert_diseq(top, bot, 0).expect("fresh graph");
        let mut c = Closure { store, g, top, bot, conflict: false };
        for t in [store.find(Kind::True, &[]), store.find(Kind::False, &[])].into_iter().flatten() {
            c.assert_lit(t, store.kind(t) == Kind::True);
        }
        c
    }

    fn node(&mut self, t: TermId) -> Option<NodeId> {
        match self.g.flatten(self.store, t) {
            Ok(n) => Some(n),
            Err(_) => {
                self.conflict = true;
                None
            }
        }
    }

    fn record<E>(&mut self, r: Result<(), E>) {
        if r.is_err() {
            self.conflict = true;
        }
    }

    fn assert_lit(&mut self, t: TermId, value: bool) {
        if self.conflict {
            return;
        }
        let st = self.store;
        if st.kind(t) == Kind::Eq && !st.is_bool(st.args(t)[0]) {
            let (Some(a), Some(b)) = (self.node(st.args(t)[0]), self.node(st.args(t)[1])) else {
                return;
            };
            let r = if value {
                self.g.egraph.merge_axiom(a, b)
            } else {
                self.g.egraph.assert_diseq(a, b, Label::MAX)
            };
            self.record(r);
            // The same term may also sit under a function as a Bool leaf.
            if let Some(n) = self.node(t) {
                let target = if value { self.top } else { self.bot };
                let r = self.g.egraph.merge_axiom(n, target);
                self.record(r);
            }
        } else if let Some(n) = self.node(t) {
            let target = if value { self.top } else { self.bot };
            let r = self.g.egraph.merge_axiom(n, target);
            self.record(r);
        }
    }

    fn truth(&mut self, c: TermId) -> Option<bool> {
        let st = self.store;
        if st.kind(c) == Kind::Eq && !st.is_bool(st.args(c)[0]) {
            let a = self.node(st.args(c)[0])?;
            let b = self.node(st.args(c)[1])?;
            if self.g.egraph.are_equal(a, b) {
                return Some(true);
            }
            if self.g.egraph.disequality_between(a, b).is_some() {
                return Some(false);
            }
        }
        let n = self.node(c)?;
        if self.g.egraph.are_equal(n, self.top) {
            Some(true)
        } else if self.g.egraph.are_equal(n, self.bot) {
            Some(false)
        } else {
            None
        }
    }

    /// Applies the `ite` rules until nothing changes or a conflict arises.
    fn saturate(&mut self) {
        let mut done: HashSet<TermId> = HashSet::new();
        loop {
            if self.conflict {
                return;
            }
            let known = self.g.egraph.num_nodes();
            let ites: Vec<(NodeId, TermId)> = self
                .g
                .terms()
                .into_iter()
                .filter(|&(_, t)| self.store.kind(t) == Kind::Ite && !done.contains(&t))
                .collect();
            let mut changed = false;
            for (n, t) in ites {
                let args = self.store.args(t).to_vec();
                let (Some(x), Some(y)) = (self.node(args[1]), self.node(args[2])) else {
                    return;
                };
                let target = match self.truth(args[0]) {
                    Some(true) => Some(x),
                    Some(false) => Some(y),
                    None if self.g.egraph.are_equal(x, y) => Some(x),
                    None => None,
                };
                if self.conflict {
                    return;
                }
                if let Some(m) = target {
                    done.insert(t);
                    if !self.g.egraph.are_equal(n, m) {
                        let r = self.g.egraph.merge_axiom(n, m);
                        self.record(r);
                    }
                    changed = true;
                }
            }
            // Congruence over `ite`, which the graph keeps opaque.
            let mut sigs: HashMap<[NodeId; 3], NodeId> = HashMap::new();
            let all_ites: Vec<(NodeId, TermId)> =
                self.g.terms().into_iter().filter(|&(_, t)| self.store.kind(t) == Kind::Ite).collect();
            for (n, t) in all_ites {
                let args = self.store.args(t).to_vec();
                let mut sig = [n; 3];
                for (k, &a) in args.iter().enumerate() {
                    let Some(an) = self.node(a) else {
                        return;
                    };
                    sig[k] = self.g.egraph.find(an);
                }
                match sigs.get(&sig) {
                    Some(&m) if !self.g.egraph.are_equal(n, m) => {
                        let r = self.g.egraph.merge_axiom(n, m);
                        self.record(r);
                        changed = true;
                    }
                    Some(_) => {}
                    None => {
                        sigs.insert(sig, n);
                    }
                }
            }
            if self.conflict {
                return;
            }
            let eqs: Vec<(NodeId, TermId)> = self
                .g
                .terms()
                .into_iter()
                .filter(|&(_, t)| {
                    self.store.kind(t) == Kind::Eq
                        && !self.store.is_bool(self.store.args(t)[0])
                        && !done.contains(&t)
                })
                .collect();
            for (n, t) in eqs {
                let args = self.store.args(t).to_vec();
                let (Some(a), Some(b)) = (self.node(args[0]), self.node(args[1])) else {
                    return;
                };
                let eg = &mut self.g.egraph;
                let r = if eg.are_equal(n, self.top) {
                    (!eg.are_equal(a, b)).then(|| eg.merge_axiom(a, b))
                } else if eg.are_equal(n, self.bot) {
                    eg.disequality_between(a, b).is_none().then(|| eg.assert_diseq(a, b, Label::MAX))
                } else if eg.are_equal(a, b) {
                    Some(eg.merge_axiom(n, self.top))
                } else if eg.disequality_between(a, b).is_some() {
                    Some(eg.merge_axiom(n, self.bot))
                } else {
                    continue;
                };
                done.insert(t);
                if let Some(r) = r {
                    self.record(r);
                    changed = true;
                }
            }
            // Branches flattened in this round are visited in the next one.
            if !changed && self.g.egraph.num_nodes() == known {
                return;
            }
        }
    }
}

/// Whether the negation of `clause` is EUF-inconsistent.
pub fn clause_is_valid(store: &TermStore, clause: &[TermLit]) -> bool {
    let mut c = Closure::new(store);
    for l in clause {
        c.assert_lit(l.term, !l.positive);
    }
    c.saturate();
    c.conflict
}

/// Whether every branch of `source` forces `unit`.
pub fn implication_holds(store: &TermStore, source: TermId, unit: TermId) -> bool {
    let Some(branches) = diamond_branches(store, source) else {
        return false;
    };
    if store.kind(unit) != Kind::Eq {
        return false;
    }
    let mut terms: Vec<TermId> = store
        .subterms_of([source, unit])
        .into_iter()
        .filter(|&t| !store.is_bool(t))
        .collect();
    terms.dedup();
    let (x, y) = (store.args(unit)[0], store.args(unit)[1]);
    branches.iter().all(|b| match branch_closure(store, &terms, b) {
        None => true,
        Some(g) => {
            let (nx, ny) = (g.node(x).expect("flattened"), g.node(y).expect("flattened"));
            g.egraph.are_equal(nx, ny)
        }
    })
}

pub fn replay_check(c: &Certificate) -> Replay {
    for (i, l) in c.lemmas.iter().enumerate() {
        if let LemmaBody::Clause(cl) = &l.body {
            if !clause_is_valid(&c.store, cl) {
                return Replay::Invalid {
                    stage: 1,
                    lemma: Some(i),
                    reason: format!("lemma {} is not valid in EUF", i + 1),
                };
            }
        }
    }
    for (i, l) in c.lemmas.iter().enumerate() {
        if let LemmaBody::Implication { source, unit } = l.body {
            if !implication_holds(&c.store, source, unit) {
                return Replay::Invalid {
                    stage: 2,
                    lemma: Some(i),
                    reason: format!("lemma {} is not entailed by its source", i + 1),
                };
            }
        }
    }
    let mut store = c.store.clone();
    if !skeleton_is_unsat(&mut store, &c.assumptions, &c.lemmas) {
        return Replay::Invalid {
            stage: 3,
            lemma: None,
            reason: "propositional skeleton is satisfiable".into(),
        };
    }
    Replay::Valid
}

// ---------------------------------------------------------------------------
// Proof-assistant script

const LEAN_RESERVED: &[&str] = &[
    "axiom", "theorem", "lemma", "def", "fun", "let", "have", "show", "by", "from", "at", "if",
    "then", "else", "do", "match", "with", "open", "in", "Type", "Prop", "Sort", "True", "False",
    "Bool", "true", "false", "decide", "instance", "where", "end", "section", "namespace",
    "variable", "universe", "example", "import", "unsat", "Classical", "Not", "And", "Or",
];

fn generated_like(name: &str) -> bool {
    for p in ["a", "h", "lemma"] {
        if let Some(rest) = name.strip_prefix(p) {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                return true;
            }
        }
    }
    false
}

/// Lean identifier for a user name.
pub fn lean_ident(name: &str) -> String {
    let simple = name
        .bytes()
        .next()
        .is_some_and(|b| b.is_ascii_alphabetic())
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_');
    if simple && !LEAN_RESERVED.contains(&name) && !generated_like(name) {
        return name.to_string();
    }
    let clean: String = name
        .chars()
        .map(|c| if c == '«' || c == '»' || c.is_control() { '_' } else { c })
        .collect();
    if generated_like(name) || LEAN_RESERVED.contains(&name) {
        format!("«u.{clean}»")
    } else {
        format!("«{clean}»")
    }
}

fn lean_sort(store: &TermStore, s: SortId) -> String {
    if s == SortId::BOOL {
        "Prop".into()
    } else {
        lean_ident(&store.sort(s).name)
    }
}

/// Lean rendering of a term; Bool terms become propositions.
pub fn lean_term(store: &TermStore, root: TermId) -> String {
    let mut memo: HashMap<TermId, String> = HashMap::new();
    for t in store.subterms(root) {
        let a: Vec<&str> = store.args(t).iter().map(|x| memo[x].as_str()).collect();
        let join = |sep: &str, empty: &str| -> String {
            match a.len() {
                0 => empty.to_string(),
                1 => a[0].to_string(),
                _ => format!("({})", a.join(sep)),
            }
        };
        let bool_args = store.args(t).first().is_some_and(|&x| store.is_bool(x));
        let s = match store.kind(t) {
            Kind::True => "True".into(),
            Kind::False => "False".into(),
            Kind::App(f) => {
                let name = lean_ident(&store.symbol(f).name);
                if a.is_empty() {
                    name
                } else {
                    format!("({} {})", name, a.join(" "))
                }
            }
            Kind::Eq if bool_args => format!("({} ↔ {})", a[0], a[1]),
            Kind::Eq => format!("({} = {})", a[0], a[1]),
            Kind::Distinct => {
                let mut parts = Vec::new();
                for i in 0..a.len() {
                    for j in i + 1..a.len() {
                        parts.push(if bool_args {
                            format!("¬({} ↔ {})", a[i], a[j])
                        } else {
                            format!("({} ≠ {})", a[i], a[j])
                        });
                    }
                }
                if parts.len() == 1 {
                    parts.pop().unwrap_or_default()
                } else {
                    format!("({})", parts.join(" ∧ "))
                }
            }
            Kind::Not => format!("(¬{})", a[0]),
            Kind::And => join(" ∧ ", "True"),
            Kind::Or => join(" ∨ ", "False"),
            Kind::Implies => join(" → ", "True"),
            Kind::Xor => match a.len() {
                0 => "False".into(),
                1 => a[0].to_string(),
                _ => {
                    let parts: Vec<String> = a.iter().map(|x| format!("decide {x}")).collect();
                    format!("(({}) = true)", parts.join(" ^^ "))
                }
            },
            Kind::Ite => format!("(if {} then {} else {})", a[0], a[1], a[2]),
        };
        memo.insert(t, s);
    }
    memo.remove(&root).unwrap_or_default()
}

fn lean_clause(store: &TermStore, c: &[TermLit]) -> String {
    if c.is_empty() {
        return "False".into();
    }
    let parts: Vec<String> = c
        .iter()
        .map(|l| {
            let t = lean_term(store, l.term);
            if l.positive {
                t
            } else {
                format!("(¬{t})")
            }
        })
        .collect();
    parts.join(" ∨ ")
}

fn lemma_statement(store: &TermStore, l: &Lemma) -> String {
    match &l.body {
        LemmaBody::Clause(c) => lean_clause(store, c),
        LemmaBody::Implication { source, unit } => {
            format!("{} → {}", lean_term(store, *source), lean_term(store, *unit))
        }
    }
}

/// Proof-assistant script: axioms for sorts, symbols and assumptions, one
/// theorem per lemma closed by `grind`, and a final theorem closed by
/// `bv_decide` over the decided hypotheses.
pub fn emit_proof_script(c: &Certificate) -> String {
    let st = &c.store;
    let mut out = String::from("open Classical\n\n");
    for s in st.user_sorts() {
        let _ = writeln!(out, "axiom {} : Type", lean_sort(st, s));
    }
    for f in st.symbols() {
        let sym = st.symbol(f);
        let mut ty: Vec<String> = sym.arg_sorts.iter().map(|&s| lean_sort(st, s)).collect();
        ty.push(lean_sort(st, sym.ret_sort));
        let _ = writeln!(out, "axiom {} : {}", lean_ident(&sym.name), ty.join(" → "));
    }
    out.push('\n');
    for (i, &a) in c.assumptions.iter().enumerate() {
        let _ = writeln!(out, "axiom a{} : {}", i + 1, lean_term(st, a));
    }
    out.push('\n');
    for (i, l) in c.lemmas.iter().enumerate() {
        let kind = match l.origin {
            LemmaOrigin::Theory => "theory".to_string(),
            LemmaOrigin::Preprocess => "preprocessing".to_string(),
            LemmaOrigin::IteAxiom => "ite".to_string(),
            LemmaOrigin::Diamond { source_index } => format!("diamond, from preprocessed assertion {}", source_index + 1),
        };
        let _ = writeln!(out, "-- {kind}");
        let _ = writeln!(out, "theorem lemma{} : {} := by grind\n", i + 1, lemma_statement(st, l));
    }
    out.push_str("theorem unsat : False := by\n");
    let mut h = 0;
    for (i, &a) in c.assumptions.iter().enumerate() {
        h += 1;
        let _ = writeln!(
            out,
            "  have h{h} : decide ({}) = true := decide_eq_true a{}",
            lean_term(st, a),
            i + 1
        );
    }
    for (i, l) in c.lemmas.iter().enumerate() {
        h += 1;
        let _ = writeln!(
            out,
            "  have h{h} : decide ({}) = true := decide_eq_true lemma{}",
            lemma_statement(st, l),
            i + 1
        );
    }
    out.push_str("  bv_decide\n");
    out
}
