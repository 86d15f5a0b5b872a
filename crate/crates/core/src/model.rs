//! Finite models for satisfiable problems: construction from the final
//! congruence classes, SMT-LIB printing, a re-encoding as a validation
//! script, and an independent evaluator.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write;

use thiserror::Error;

use crate::driver::Outcome;
use crate::euf::{LeafKey, NodeId, NodeKey};
use crate::smtlib::{parse_script, quote_symbol, write_term, FrontendError};
use crate::terms::{Kind, SortId, SymbolId, TermId, TermStore};
use crate::cnf::AtomDef;
use crate::sat::Verdict;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no model: verdict is not sat")]
    NotSat,
    #[error("conflicting entries for {symbol} in the function table")]
    InternalInconsistency { symbol: String },
    #[error("validation script does not parse: {0}")]
    Script(#[from] FrontendError),
    #[error("validation failed: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    /// Element index within its sort's universe.
    Elem(SortId, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FunTable {
    pub entries: BTreeMap<Vec<Value>, Value>,
    pub default: Option<Value>,
}

#[derive(Clone, Debug, Default)]
pub struct Model {
    /// Element names per user sort.
    pub universe: BTreeMap<SortId, Vec<String>>,
    pub consts: BTreeMap<SymbolId, Value>,
    pub funs: BTreeMap<SymbolId, FunTable>,
}

impl Model {
    pub fn default_value(&self, sort: SortId) -> Value {
        if sort == SortId::BOOL {
            Value::Bool(false)
        } else {
            Value::Elem(sort, 0)
        }
    }

    pub fn universe_size(&self, sort: SortId) -> usize {
        if sort == SortId::BOOL {
            2
        } else {
            self.universe.get(&sort).map_or(1, |u| u.len())
        }
    }

    /// Value of `f` applied to `args`.
    pub fn apply(&self, store: &TermStore, f: SymbolId, args: &[Value]) -> Value {
        let sym = store.symbol(f);
        if args.is_empty() {
            return self
                .consts
                .get(&f)
                .copied()
                .unwrap_or_else(|| self.default_value(sym.ret_sort));
        }
        match self.funs.get(&f) {
            Some(table) => table
                .entries
                .get(args)
                .copied()
                .or(table.default)
                .unwrap_or_else(|| self.default_value(sym.ret_sort)),
            None => self.default_value(sym.ret_sort),
        }
    }
}

fn element_name(store: &TermStore, sort: SortId, k: usize) -> String {
    format!("@{}!val!{}", store.sort(sort).name, k)
}

/// Builds a model from the congruence classes of an accepted assignment.
pub fn build_model(store: &TermStore, outcome: &Outcome) -> Result<Model, ModelError> {
    if outcome.verdict != Verdict::Sat {
        return Err(ModelError::NotSat);
    }
    let sat_model = outcome.sat.model.as_ref().ok_or(ModelError::NotSat)?;
    let graph = outcome.theory.graph();
    let eg = &graph.egraph;
    let mut model = Model::default();

    let ct = eg.lookup(NodeKey::Leaf(LeafKey::CarrierTrue)).map(|n| eg.find(n));
    let cf = eg.lookup(NodeKey::Leaf(LeafKey::CarrierFalse)).map(|n| eg.find(n));
    let mut elem_of_root: HashMap<NodeId, Value> = HashMap::new();
    for class in eg.classes() {
        let sort = class
            .iter()
            .filter_map(|&n| graph.term(n))
            .map(|t| store.sort_of(t))
            .find(|&s| s != SortId::BOOL);
        if let Some(s) = sort {
            let elems = model.universe.entry(s).or_default();
            let k = elems.len();
            elems.push(element_name(store, s, k));
            elem_of_root.insert(eg.find(class[0]), Value::Elem(s, k));
        }
    }
    for s in store.user_sorts() {
        model
            .universe
            .entry(s)
            .or_insert_with(|| vec![element_name(store, s, 0)]);
    }
    let prop_value = |t: TermId| -> Option<bool> {
        let v = outcome.cnf.atoms.var_of(AtomDef::Prop(t))?;
        Some(sat_model[v.index()])
    };
    let node_value = |n: NodeId, t: TermId| -> Value {
        let r = eg.find(n);
        if store.is_bool(t) {
            if Some(r) == ct {
                Value::Bool(true)
            } else if Some(r) == cf {
                Value::Bool(false)
            } else {
                let lit = outcome.cnf.lit(t);
                Value::Bool(lit.is_some_and(|l| sat_model[l.var().index()] == l.is_positive()))
            }
        } else {
            elem_of_root[&r]
        }
    };

    for f in store.symbols() {
        let sym = store.symbol(f);
        if sym.arity() == 0 {
            let t = store.find(Kind::App(f), &[]);
            let v = match t {
                Some(t) if sym.ret_sort == SortId::BOOL => {
                    Value::Bool(prop_value(t).or_else(|| {
                        graph.node(t).map(|n| node_value(n, t) == Value::Bool(true))
                    }).unwrap_or(false))
                }
                Some(t) => match graph.node(t) {
                    Some(n) => node_value(n, t),
                    None => model.default_value(sym.ret_sort),
                },
                None => model.default_value(sym.ret_sort),
            };
            model.consts.insert(f, v);
        }
    }
    for (n, t) in graph.terms() {
        let Kind::App(f) = store.kind(t) else { continue };
        let args = store.args(t);
        if args.is_empty() {
            continue;
        }
        let mut key = Vec::with_capacity(args.len());
        for &a in args {
            let an = graph.node(a).expect("arguments are flattened with their application");
            key.push(node_value(an, a));
        }
        let val = if store.is_bool(t) {
            match prop_value(t) {
                Some(b) => Value::Bool(b),
                None => node_value(n, t),
            }
        } else {
            node_value(n, t)
        };
        let table = model.funs.entry(f).or_default();
        if let Some(&old) = table.entries.get(&key) {
            if old != val {
                return Err(ModelError::InternalInconsistency {
                    symbol: store.symbol(f).name.clone(),
                });
            }
        }
        table.entries.insert(key, val);
    }
    for f in store.symbols() {
        let sym = store.symbol(f);
        if sym.arity() > 0 {
            let d = model.default_value(sym.ret_sort);
            model.funs.entry(f).or_default().default = Some(d);
        }
    }
    Ok(model)
}

fn value_text(store: &TermStore, m: &Model, v: Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Elem(s, k) => format!(
            "(as {} {})",
            quote_symbol(&m.universe[&s][k]),
            store.sort(s).spelling
        ),
    }
}

/// `get-model` response text.
pub fn print_model(store: &TermStore, m: &Model) -> String {
    let mut out = String::from("(\n");
    for f in store.symbols() {
        let sym = store.symbol(f);
        let ret = &store.sort(sym.ret_sort).spelling;
        if sym.arity() == 0 {
            let v = m.apply(store, f, &[]);
            let _ = writeln!(
                out,
                "  (define-fun {} () {} {})",
                sym.spelling,
                ret,
                value_text(store, m, v)
            );
            continue;
        }
        let params: Vec<String> = sym
            .arg_sorts
            .iter()
            .enumerate()
            .map(|(i, &s)| format!("(x!{} {})", i, store.sort(s).spelling))
            .collect();
        let empty = FunTable::default();
        let table = m.funs.get(&f).unwrap_or(&empty);
        let default = table.default.unwrap_or_else(|| m.default_value(sym.ret_sort));
        let mut body = value_text(store, m, default);
        for (key, &v) in table.entries.iter().rev() {
            if v == default {
                continue;
            }
            let conds: Vec<String> = key
                .iter()
                .enumerate()
                .map(|(i, &a)| format!("(= x!{} {})", i, value_text(store, m, a)))
                .collect();
            let cond = if conds.len() == 1 {
                conds[0].clone()
            } else {
                format!("(and {})", conds.join(" "))
            };
            body = format!("(ite {} {} {})", cond, value_text(store, m, v), body);
        }
        let _ = writeln!(
            out,
            "  (define-fun {} ({}) {} {})",
            sym.spelling,
            params.join(" "),
            ret,
            body
        );
    }
    out.push(')');
    out
}

/// Largest argument product for which function tables are completed with
/// explicit default entries.
pub const COMPLETION_LIMIT: usize = 10_000;

/// A script whose satisfiability certifies `m` as a model of
/// `assertions`. Universe elements become fresh constants that are
/// pairwise distinct.
pub fn emit_validation_script(store: &TermStore, assertions: &[TermId], m: &Model) -> String {
    let mut out = String::from("(set-logic QF_UF)\n");
    let mut taken: HashSet<String> = store.symbols().map(|f| store.symbol(f).name.clone()).collect();
    for s in store.user_sorts() {
        let _ = writeln!(out, "(declare-sort {} 0)", store.sort(s).spelling);
    }
    for f in store.symbols() {
        let sym = store.symbol(f);
        let args: Vec<&str> = sym.arg_sorts.iter().map(|&s| store.sort(s).spelling.as_str()).collect();
        let _ = writeln!(
            out,
            "(declare-fun {} ({}) {})",
            sym.spelling,
            args.join(" "),
            store.sort(sym.ret_sort).spelling
        );
    }
    let mut elem_const: HashMap<(SortId, usize), String> = HashMap::new();
    for (&s, elems) in &m.universe {
        for k in 0..elems.len() {
            let mut name = format!("{}!val!{}", store.sort(s).name, k);
            while taken.contains(&name) {
                name.push('!');
            }
            taken.insert(name.clone());
            let q = quote_symbol(&name);
            let _ = writeln!(out, "(declare-fun {} () {})", q, store.sort(s).spelling);
            elem_const.insert((s, k), q);
        }
        if elems.len() >= 2 {
            let names: Vec<&str> = (0..elems.len()).map(|k| elem_const[&(s, k)].as_str()).collect();
            let _ = writeln!(out, "(assert (distinct {}))", names.join(" "));
        }
    }
    let text = |v: Value| -> String {
        match v {
            Value::Bool(b) => b.to_string(),
            Value::Elem(s, k) => elem_const[&(s, k)].clone(),
        }
    };
    let bind = |out: &mut String, lhs: String, v: Value| {
        let _ = match v {
            Value::Bool(true) => writeln!(out, "(assert {lhs})"),
            Value::Bool(false) => writeln!(out, "(assert (not {lhs}))"),
            Value::Elem(..) => writeln!(out, "(assert (= {lhs} {}))", text(v)),
        };
    };
    for f in store.symbols() {
        let sym = store.symbol(f);
        if sym.arity() == 0 {
            bind(&mut out, sym.spelling.clone(), m.apply(store, f, &[]));
            continue;
        }
        let sizes: Vec<usize> = sym.arg_sorts.iter().map(|&s| m.universe_size(s)).collect();
        let product = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        let tuples: Vec<Vec<Value>> = match product {
            Some(p) if p <= COMPLETION_LIMIT => all_tuples(&sym.arg_sorts, &sizes),
            _ => m.funs.get(&f).map(|t| t.entries.keys().cloned().collect()).unwrap_or_default(),
        };
        for key in tuples {
            let v = m.apply(store, f, &key);
            let args: Vec<String> = key.iter().map(|&a| text(a)).collect();
            bind(&mut out, format!("({} {})", sym.spelling, args.join(" ")), v);
        }
    }
    for &a in assertions {
        out.push_str("(assert ");
        write_term(store, a, &mut out);
        out.push_str(")\n");
    }
    out.push_str("(check-sat)\n");
    out
}

fn all_tuples(sorts: &[SortId], sizes: &[usize]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for (&s, &n) in sorts.iter().zip(sizes) {
        let mut next = Vec::with_capacity(out.len() * n);
        for t in &out {
            for k in 0..n {
                let mut t2 = t.clone();
                t2.push(if s == SortId::BOOL {
                    Value::Bool(k == 1)
                } else {
                    Value::Elem(s, k)
                });
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

/// Evaluates a term bottom-up.
pub fn evaluate(store: &TermStore, m: &Model, t: TermId) -> Value {
    let mut vals: HashMap<TermId, Value> = HashMap::new();
    for s in store.subterms(t) {
        let args: Vec<Value> = store.args(s).iter().map(|a| vals[a]).collect();
        let b = |i: usize| matches!(args[i], Value::Bool(true));
        let v = match store.kind(s) {
            Kind::True => Value::Bool(true),
            Kind::False => Value::Bool(false),
            Kind::App(f) => m.apply(store, f, &args),
            Kind::Eq => Value::Bool(args[0] == args[1]),
            Kind::Distinct => {
                let set: HashSet<Value> = args.iter().copied().collect();
                Value::Bool(set.len() == args.len())
            }
            Kind::Not => Value::Bool(!b(0)),
            Kind::And => Value::Bool((0..args.len()).all(b)),
            Kind::Or => Value::Bool((0..args.len()).any(b)),
            Kind::Xor => Value::Bool((0..args.len()).filter(|&i| b(i)).count() % 2 == 1),
            Kind::Implies => {
                let n = args.len();
                Value::Bool((0..n - 1).any(|i| !b(i)) || b(n - 1))
            }
            Kind::Ite => {
                if b(0) {
                    args[1]
                } else {
                    args[2]
                }
            }
        };
        vals.insert(s, v);
    }
    vals[&t]
}

/// First assertion that evaluates to false, if any.
pub fn first_violation(store: &TermStore, m: &Model, assertions: &[TermId]) -> Option<usize> {
    assertions
        .iter()
        .position(|&a| evaluate(store, m, a) != Value::Bool(true))
}

/// Checks a validation script with the evaluator: a witness structure is
/// read off the binding-shaped assertions (constant equalities, pointwise
/// function entries, Bool literals), then every assertion must hold in it.
pub fn check_validation_script(text: &str) -> Result<(), ModelError> {
    let script = parse_script(text.as_bytes())?;
    let store = &script.store;
    let asserts = script.assertions();

    // Union-find over 0-ary user-sort constants.
    let consts: Vec<SymbolId> = store
        .symbols()
        .filter(|&f| store.symbol(f).arity() == 0 && store.symbol(f).ret_sort != SortId::BOOL)
        .collect();
    let index: HashMap<SymbolId, usize> = consts.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let mut parent: Vec<usize> = (0..consts.len()).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let const_sym = |t: TermId| -> Option<SymbolId> {
        match store.kind(t) {
            Kind::App(f) if store.args(t).is_empty() && !store.is_bool(t) => Some(f),
            _ => None,
        }
    };
    for &a in &asserts {
        if store.kind(a) == Kind::Eq {
            let (x, y) = (store.args(a)[0], store.args(a)[1]);
            if let (Some(f), Some(g)) = (const_sym(x), const_sym(y)) {
                let (rx, ry) = (root(&mut parent, index[&f]), root(&mut parent, index[&g]));
                parent[rx] = ry;
            }
        }
    }
    let mut m = Model::default();
    let mut elem: HashMap<usize, usize> = HashMap::new();
    for (i, &f) in consts.iter().enumerate() {
        let r = root(&mut parent, i);
        let s = store.symbol(f).ret_sort;
        let elems = m.universe.entry(s).or_default();
        let k = *elem.entry(r).or_insert_with(|| {
            elems.push(format!("e{}", elems.len()));
            elems.len() - 1
        });
        m.consts.insert(f, Value::Elem(s, k));
    }
    for s in store.user_sorts() {
        m.universe.entry(s).or_insert_with(|| vec!["e0".into()]);
    }
    let simple_value = |m: &Model, t: TermId| -> Option<Value> {
        match store.kind(t) {
            Kind::True => Some(Value::Bool(true)),
            Kind::False => Some(Value::Bool(false)),
            Kind::App(f) if store.args(t).is_empty() => Some(m.apply(store, f, &[])),
            _ => None,
        }
    };
    let mut tables: BTreeMap<SymbolId, BTreeMap<Vec<Value>, Value>> = BTreeMap::new();
    for &a in &asserts {
        let (lhs, v) = match store.kind(a) {
            Kind::App(_) => (a, Some(Value::Bool(true))),
            Kind::Not => (store.args(a)[0], Some(Value::Bool(false))),
            Kind::Eq if !store.is_bool(store.args(a)[0]) => {
                let (x, y) = (store.args(a)[0], store.args(a)[1]);
                let app = |t: TermId| store.kind(t) != Kind::Ite && !store.args(t).is_empty();
                match (app(x), app(y)) {
                    (true, false) => (x, simple_value(&m, y)),
                    (false, true) => (y, simple_value(&m, x)),
                    _ => continue,
                }
            }
            _ => continue,
        };
        let Kind::App(f) = store.kind(lhs) else { continue };
        let Some(v) = v else { continue };
        if store.args(lhs).is_empty() {
            if store.is_bool(lhs) {
                m.consts.entry(f).or_insert(v);
            }
            continue;
        }
        let key: Option<Vec<Value>> = store.args(lhs).iter().map(|&x| simple_value(&m, x)).collect();
        let Some(key) = key else { continue };
        tables.entry(f).or_default().entry(key).or_insert(v);
    }
    for (f, entries) in tables {
        m.funs.insert(f, FunTable { entries, default: None });
    }
    match first_violation(store, &m, &asserts) {
        None => Ok(()),
        Some(i) => {
            let mut t = String::new();
            write_term(store, asserts[i], &mut t);
            Err(ModelError::Invalid(format!("assertion {} is false: {t}", i + 1)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{solve, SolveOptions};

    fn model_of(src: &str, opts: &SolveOptions) -> (TermStore, Vec<TermId>, Model) {
        let s = parse_script(src.as_bytes()).unwrap();
        let a = s.assertions();
        let mut st = s.store;
        let out = solve(&mut st, &a, opts).unwrap();
        let m = build_model(&st, &out).unwrap();
        (st, a, m)
    }

    #[test]
    fn single_element_universe() {
        let (st, a, m) = model_of("(declare-sort S 0)(declare-fun a () S)(assert (= a a))", &SolveOptions::default());
        let s = st.sort_by_name("S").unwrap();
        assert_eq!(m.universe[&s], vec!["@S!val!0"]);
        let text = print_model(&st, &m);
        assert_eq!(text, "(\n  (define-fun a () S (as @S!val!0 S))\n)");
        let v = emit_validation_script(&st, &a, &m);
        assert!(!v.contains("distinct"));
        check_validation_script(&v).unwrap();
    }

    #[test]
    fn disequal_constants_get_two_elements() {
        let (st, a, m) = model_of(
            "(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)(assert (not (= a b)))",
            &SolveOptions::default(),
        );
        let s = st.sort_by_name("S").unwrap();
        assert_eq!(m.universe[&s].len(), 2);
        assert_eq!(first_violation(&st, &m, &a), None);
        check_validation_script(&emit_validation_script(&st, &a, &m)).unwrap();
    }

    #[test]
    fn function_table_from_classes() {
        for pre in [true, false] {
            let (st, a, m) = model_of(
                "(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)(declare-fun f (S) S)\
                 (assert (= (f a) b))(assert (not (= a b)))",
                &SolveOptions { preprocess: pre, ..Default::default() },
            );
            assert_eq!(first_violation(&st, &m, &a), None);
            let f = st.symbol_by_name("f").unwrap();
            let va = m.apply(&st, st.symbol_by_name("a").unwrap(), &[]);
            let vb = m.apply(&st, st.symbol_by_name("b").unwrap(), &[]);
            assert_eq!(m.apply(&st, f, &[va]), vb);
            let printed = print_model(&st, &m);
            assert!(printed.contains("(define-fun f ((x!0 S)) S (ite"));
            check_validation_script(&emit_validation_script(&st, &a, &m)).unwrap();
        }
    }

    #[test]
    fn bridged_distinct_argument_validates() {
        let (st, a, m) = model_of(
            "(declare-sort S 0)(declare-fun f (Bool) S)(declare-fun c0 () S)(declare-fun c2 () S)\
             (assert (not (= (f (distinct c0 c2)) (f false))))",
            &SolveOptions::default(),
        );
        assert_eq!(first_violation(&st, &m, &a), None);
        check_validation_script(&emit_validation_script(&st, &a, &m)).unwrap();
    }

    #[test]
    fn evaluator_basics() {
        let s = parse_script(
            b"(declare-sort S 0)(declare-fun a () S)(assert (= a a))(assert (xor true true true))",
        )
        .unwrap();
        let m = Model::default();
        for a in s.assertions() {
            assert_eq!(evaluate(&s.store, &m, a), Value::Bool(true));
        }
    }

    #[test]
    fn wrong_model_is_rejected() {
        let bad = "(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)\
                   (declare-fun e0 () S)(declare-fun e1 () S)(assert (distinct e0 e1))\
                   (assert (= a e0))(assert (= b e0))(assert (not (= a b)))(check-sat)";
        assert!(check_validation_script(bad).is_err());
    }
}
