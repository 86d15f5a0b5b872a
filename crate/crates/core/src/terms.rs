//! Hash-consed sorts, function symbols and terms.
//!
//! Every term lives in a [`TermStore`] and is referred to by a dense
//! [`TermId`]. Interning guarantees that two structurally equal terms get
//! the same id, and children are always interned before their parents so
//! ids strictly decrease towards the leaves.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SortId(u32);

impl SortId {
    pub const BOOL: SortId = SortId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(u32);

impl SymbolId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// A Bool term with a polarity, the literal type of lemmas stated over
/// terms rather than SAT variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermLit {
    pub term: TermId,
    pub positive: bool,
}

impl TermLit {
    pub fn pos(term: TermId) -> Self {
        TermLit { term, positive: true }
    }

    pub fn neg(term: TermId) -> Self {
        TermLit { term, positive: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sort {
    pub name: String,
    /// Spelling used when printing (keeps `|quoted|` names intact).
    pub spelling: String,
    pub is_bool: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub spelling: String,
    pub arg_sorts: Vec<SortId>,
    pub ret_sort: SortId,
}

impl Symbol {
    pub fn arity(&self) -> usize {
        self.arg_sorts.len()
    }
}

/// Head of a term node. Arguments are stored separately in the node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    True,
    False,
    App(SymbolId),
    Eq,
    Distinct,
    Not,
    And,
    Or,
    Xor,
    Implies,
    Ite,
}

impl Kind {
    pub fn is_connective(self) -> bool {
        matches!(
            self,
            Kind::Not | Kind::And | Kind::Or | Kind::Xor | Kind::Implies
        )
    }

    fn name(self) -> &'static str {
        match self {
            Kind::True => "true",
            Kind::False => "false",
            Kind::App(_) => "application",
            Kind::Eq => "=",
            Kind::Distinct => "distinct",
            Kind::Not => "not",
            Kind::And => "and",
            Kind::Or => "or",
            Kind::Xor => "xor",
            Kind::Implies => "=>",
            Kind::Ite => "ite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct NodeKey {
    kind: Kind,
    args: Box<[TermId]>,
}

#[derive(Clone, Debug)]
struct Node {
    kind: Kind,
    args: Box<[TermId]>,
    sort: SortId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("sort mismatch in `{op}` argument {index}: expected {expected}, got {actual}")]
    SortMismatch {
        op: String,
        index: usize,
        expected: String,
        actual: String,
    },
    #[error("`{op}` expects {expected} argument(s), got {actual}")]
    Arity {
        op: String,
        expected: String,
        actual: usize,
    },
    #[error("symbol `{0}` redeclared with a different signature")]
    Redeclared(String),
    #[error("sort `{0}` is reserved")]
    ReservedSort(String),
}

/// Owner of all sorts, symbols and terms of one problem.
#[derive(Clone, Debug)]
pub struct TermStore {
    sorts: Vec<Sort>,
    sort_names: HashMap<String, SortId>,
    symbols: Vec<Symbol>,
    symbol_names: HashMap<String, SymbolId>,
    nodes: Vec<Node>,
    interned: HashMap<NodeKey, TermId>,
}

impl Default for TermStore {
    fn default() -> Self {
        Self::new()
    }
}

impl TermStore {
    pub fn new() -> Self {
        let mut store = TermStore {
            sorts: Vec::new(),
            sort_names: HashMap::new(),
            symbols: Vec::new(),
            symbol_names: HashMap::new(),
            nodes: Vec::new(),
            interned: HashMap::new(),
        };
        store.sorts.push(Sort {
            name: "Bool".into(),
            spelling: "Bool".into(),
            is_bool: true,
        });
        store.sort_names.insert("Bool".into(), SortId::BOOL);
        store
    }

    // ---- sorts -----------------------------------------------------------

    pub fn declare_sort(&mut self, name: &str, spelling: &str) -> Result<SortId, TermError> {
        if name == "Bool" {
            return Err(TermError::ReservedSort(name.into()));
        }
        if let Some(&id) = self.sort_names.get(name) {
            return Ok(id);
        }
        let id = SortId(self.sorts.len() as u32);
        self.sorts.push(Sort {
            name: name.into(),
            spelling: spelling.into(),
            is_bool: false,
        });
        self.sort_names.insert(name.into(), id);
        Ok(id)
    }

    pub fn sort(&self, id: SortId) -> &Sort {
        &self.sorts[id.index()]
    }

    pub fn sort_by_name(&self, name: &str) -> Option<SortId> {
        self.sort_names.get(name).copied()
    }

    /// All sorts except `Bool`, in declaration order.
    pub fn user_sorts(&self) -> impl Iterator<Item = SortId> + '_ {
        (1..self.sorts.len()).map(|i| SortId(i as u32))
    }

    // ---- symbols ---------------------------------------------------------

    pub fn declare_fun(
        &mut self,
        name: &str,
        spelling: &str,
        arg_sorts: Vec<SortId>,
        ret_sort: SortId,
    ) -> Result<SymbolId, TermError> {
        if let Some(&id) = self.symbol_names.get(name) {
            let sym = &self.symbols[id.index()];
            if sym.arg_sorts == arg_sorts && sym.ret_sort == ret_sort {
                return Ok(id);
            }
            return Err(TermError::Redeclared(name.into()));
        }
        let id = SymbolId(self.symbols.len() as u32);
        self.symbols.push(Symbol {
            name: name.into(),
            spelling: spelling.into(),
            arg_sorts,
            ret_sort,
        });
        self.symbol_names.insert(name.into(), id);
        Ok(id)
    }

    pub fn symbol(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id.index()]
    }

    pub fn symbol_by_name(&self, name: &str) -> Option<SymbolId> {
        self.symbol_names.get(name).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = SymbolId> + '_ {
        (0..self.symbols.len()).map(|i| SymbolId(i as u32))
    }

    // ---- terms -----------------------------------------------------------

    pub fn num_terms(&self) -> usize {
        self.nodes.len()
    }

    pub fn kind(&self, t: TermId) -> Kind {
        self.nodes[t.index()].kind
    }

    pub fn args(&self, t: TermId) -> &[TermId] {
        &self.nodes[t.index()].args
    }

    pub fn sort_of(&self, t: TermId) -> SortId {
        self.nodes[t.index()].sort
    }

    pub fn is_bool(&self, t: TermId) -> bool {
        self.sort_of(t) == SortId::BOOL
    }

    /// Interns a term, checking sorts. `Eq` arguments are ordered so that
    /// `(= a b)` and `(= b a)` share an id.
    pub fn mk(&mut self, kind: Kind, args: &[TermId]) -> Result<TermId, TermError> {
        let sort = self.check(kind, args)?;
        let mut args: Box<[TermId]> = args.into();
        if kind == Kind::Eq && args[0] > args[1] {
            args.swap(0, 1);
        }
        let key = NodeKey { kind, args };
        if let Some(&id) = self.interned.get(&key) {
            return Ok(id);
        }
        let id = TermId(self.nodes.len() as u32);
        self.nodes.push(Node {
            kind,
            args: key.args.clone(),
            sort,
        });
        self.interned.insert(key, id);
        Ok(id)
    }

    /// Looks up an already interned term without creating it.
    pub fn find(&self, kind: Kind, args: &[TermId]) -> Option<TermId> {
        let mut args: Box<[TermId]> = args.into();
        if kind == Kind::Eq && args.len() == 2 && args[0] > args[1] {
            args.swap(0, 1);
        }
        self.interned.get(&NodeKey { kind, args }).copied()
    }

    fn check(&self, kind: Kind, args: &[TermId]) -> Result<SortId, TermError> {
        let arity = |expected: &str| TermError::Arity {
            op: kind.name().into(),
            expected: expected.into(),
            actual: args.len(),
        };
        let mismatch = |index: usize, expected: SortId, actual: SortId| TermError::SortMismatch {
            op: kind.name().into(),
            index,
            expected: self.sort(expected).name.clone(),
            actual: self.sort(actual).name.clone(),
        };
        let all_bool = |from: usize| -> Result<(), TermError> {
            for (i, &a) in args.iter().enumerate().skip(from) {
                if !self.is_bool(a) {
                    return Err(mismatch(i, SortId::BOOL, self.sort_of(a)));
                }
            }
            Ok(())
        };
        match kind {
            Kind::True | Kind::False => {
                if !args.is_empty() {
                    return Err(arity("0"));
                }
                Ok(SortId::BOOL)
            }
            Kind::App(f) => {
                let sym = self.symbol(f);
                if sym.arg_sorts.len() != args.len() {
                    return Err(TermError::Arity {
                        op: sym.name.clone(),
                        expected: sym.arg_sorts.len().to_string(),
                        actual: args.len(),
                    });
                }
                for (i, (&a, &s)) in args.iter().zip(&sym.arg_sorts).enumerate() {
                    if self.sort_of(a) != s {
                        return Err(TermError::SortMismatch {
                            op: sym.name.clone(),
                            index: i,
                            expected: self.sort(s).name.clone(),
                            actual: self.sort(self.sort_of(a)).name.clone(),
                        });
                    }
                }
                Ok(sym.ret_sort)
            }
            Kind::Eq | Kind::Distinct => {
                if kind == Kind::Eq && args.len() != 2 {
                    return Err(arity("2"));
                }
                if args.len() < 2 {
                    return Err(arity("at least 2"));
                }
                let s = self.sort_of(args[0]);
                for (i, &a) in args.iter().enumerate().skip(1) {
                    if self.sort_of(a) != s {
                        return Err(mismatch(i, s, self.sort_of(a)));
                    }
                }
                Ok(SortId::BOOL)
            }
            Kind::Not => {
                if args.len() != 1 {
                    return Err(arity("1"));
                }
                all_bool(0)?;
                Ok(SortId::BOOL)
            }
            Kind::And | Kind::Or | Kind::Xor => {
                all_bool(0)?;
                Ok(SortId::BOOL)
            }
            Kind::Implies => {
                if args.is_empty() {
                    return Err(arity("at least 1"));
                }
                all_bool(0)?;
                Ok(SortId::BOOL)
            }
            Kind::Ite => {
                if args.len() != 3 {
                    return Err(arity("3"));
                }
                if !self.is_bool(args[0]) {
                    return Err(mismatch(0, SortId::BOOL, self.sort_of(args[0])));
                }
                let s = self.sort_of(args[1]);
                if self.sort_of(args[2]) != s {
                    return Err(mismatch(2, s, self.sort_of(args[2])));
                }
                Ok(s)
            }
        }
    }

    // ---- convenience constructors ----------------------------------------

    pub fn mk_true(&mut self) -> TermId {
        self.mk(Kind::True, &[]).expect("true is well-sorted")
    }

    pub fn mk_false(&mut self) -> TermId {
        self.mk(Kind::False, &[]).expect("false is well-sorted")
    }

    pub fn mk_bool(&mut self, value: bool) -> TermId {
        if value {
            self.mk_true()
        } else {
            self.mk_false()
        }
    }

    pub fn mk_const(&mut self, f: SymbolId) -> Result<TermId, TermError> {
        self.mk(Kind::App(f), &[])
    }

    pub fn mk_app(&mut self, f: SymbolId, args: &[TermId]) -> Result<TermId, TermError> {
        self.mk(Kind::App(f), args)
    }

    pub fn mk_eq(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk(Kind::Eq, &[a, b])
    }

    pub fn mk_not(&mut self, a: TermId) -> Result<TermId, TermError> {
        self.mk(Kind::Not, &[a])
    }

    pub fn mk_and(&mut self, args: &[TermId]) -> Result<TermId, TermError> {
        self.mk(Kind::And, args)
    }

    pub fn mk_or(&mut self, args: &[TermId]) -> Result<TermId, TermError> {
        self.mk(Kind::Or, args)
    }

    pub fn mk_ite(&mut self, c: TermId, t: TermId, e: TermId) -> Result<TermId, TermError> {
        self.mk(Kind::Ite, &[c, t, e])
    }

    /// Literal-style negation: strips a top-level `not` instead of stacking.
    pub fn negate(&mut self, a: TermId) -> TermId {
        match self.kind(a) {
            Kind::Not => self.args(a)[0],
            Kind::True => self.mk_false(),
            Kind::False => self.mk_true(),
            _ => self.mk_not(a).expect("negate expects a Bool term"),
        }
    }

    /// Each distinct subterm of `t` exactly once, children before parents.
    pub fn subterms(&self, t: TermId) -> Vec<TermId> {
        self.subterms_of(std::iter::once(t))
    }

    pub fn subterms_of(&self, roots: impl IntoIterator<Item = TermId>) -> Vec<TermId> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut stack: Vec<(TermId, bool)> = Vec::new();
        for r in roots {
            stack.push((r, false));
            while let Some((t, expanded)) = stack.pop() {
                if expanded {
                    out.push(t);
                    continue;
                }
                if !seen.insert(t) {
                    continue;
                }
                stack.push((t, true));
                for &c in self.args(t).iter().rev() {
                    if !seen.contains(&c) {
                        stack.push((c, false));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TermStore, SortId, TermId, TermId) {
        let mut st = TermStore::new();
        let s = st.declare_sort("S", "S").unwrap();
        let a = st.declare_fun("a", "a", vec![], s).unwrap();
        let b = st.declare_fun("b", "b", vec![], s).unwrap();
        let a = st.mk_const(a).unwrap();
        let b = st.mk_const(b).unwrap();
        (st, s, a, b)
    }

    #[test]
    fn eq_is_hash_consed_and_symmetric() {
        let (mut st, _, a, b) = setup();
        let e1 = st.mk_eq(a, a).unwrap();
        let e2 = st.mk_eq(a, a).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(st.mk_eq(a, b).unwrap(), st.mk_eq(b, a).unwrap());
    }

    #[test]
    fn eq_sort_mismatch() {
        let (mut st, _, a, _) = setup();
        let p = st.declare_fun("p", "p", vec![], SortId::BOOL).unwrap();
        let p = st.mk_const(p).unwrap();
        let err = st.mk_eq(a, p).unwrap_err();
        assert!(matches!(err, TermError::SortMismatch { index: 1, .. }), "{err}");
    }

    #[test]
    fn sorts_of_terms() {
        let (mut st, s, a, b) = setup();
        let t_sort = st.declare_sort("T", "T").unwrap();
        let f = st.declare_fun("f", "f", vec![s], t_sort).unwrap();
        let tt = st.mk_true();
        assert_eq!(st.sort_of(tt), SortId::BOOL);
        let fa = st.mk_app(f, &[a]).unwrap();
        assert_eq!(st.sort_of(fa), t_sort);
        let c = st.mk_eq(a, b).unwrap();
        let ite = st.mk_ite(c, a, b).unwrap();
        assert_eq!(st.sort_of(ite), s);
    }

    #[test]
    fn subterms_share_dag_nodes() {
        let (mut st, s, a, b) = setup();
        assert_eq!(st.subterms(a), vec![a]);
        let g = st.declare_fun("g", "g", vec![s, s], s).unwrap();
        let gab = st.mk_app(g, &[a, b]).unwrap();
        assert_eq!(st.subterms(gab), vec![a, b, gab]);
        let f = st.declare_fun("f", "f", vec![s], s).unwrap();
        let fa = st.mk_app(f, &[a]).unwrap();
        let e = st.mk_eq(fa, fa).unwrap();
        assert_eq!(st.subterms(e).len(), 3);
    }

    #[test]
    fn redeclaration_rules() {
        let (mut st, s, _, _) = setup();
        assert!(st.declare_fun("a", "a", vec![], s).is_ok());
        assert!(matches!(
            st.declare_fun("a", "a", vec![s], s),
            Err(TermError::Redeclared(_))
        ));
    }

    #[test]
    fn children_precede_parents() {
        let (mut st, s, a, b) = setup();
        let f = st.declare_fun("f", "f", vec![s, s], s).unwrap();
        let t = st.mk_app(f, &[b, a]).unwrap();
        let e = st.mk_eq(t, a).unwrap();
        for id in [t, e] {
            assert!(st.args(id).iter().all(|&c| c < id));
        }
    }
}
