use std::collections::HashMap;
use std::str::FromStr;

use super::fuzz::{check_script, CheckConfig};
use super::runner::run_reference;
use super::HarnessError;
use crate::driver::{solve, SolveOptions};
use crate::sat::Verdict;
use crate::smtlib::{parse_script, script_text};
use crate::terms::{Kind, SortId, TermId, TermStore};

/// Predicates a reduced script must keep satisfying.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Oracle {
    /// Known verdicts differ between preprocessing on and off.
    PreproDiff,
    /// Any of the differential checks reports a problem.
    AnyFailure,
    /// The solver returns an error or panics.
    Crash,
    /// The default configuration answers this verdict.
    Verdict(Verdict),
    /// The default configuration and the reference disagree.
    ReferenceDiff,
}

impl FromStr for Oracle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "prepro-diff" => Oracle::PreproDiff,
            "any" | "any-failure" => Oracle::AnyFailure,
            "crash" => Oracle::Crash,
            "sat" => Oracle::Verdict(Verdict::Sat),
            "unsat" => Oracle::Verdict(Verdict::Unsat),
            "reference-diff" => Oracle::ReferenceDiff,
            _ => {
                return Err(format!(
                    "unknown oracle `{s}` (expected prepro-diff, any-failure, crash, sat, unsat, reference-diff)"
                ))
            }
        })
    }
}

fn verdict_with(text: &str, preprocess: bool, cfg: &CheckConfig) -> Option<Result<Verdict, String>> {
    let script = parse_script(text.as_bytes()).ok()?;
    let asserts = script.assertions();
    let mut store = script.store;
    let opts = SolveOptions {
        preprocess,
        seed: cfg.seed,
        conflict_budget: cfg.conflict_budget,
        timeout: Some(cfg.timeout),
        ..Default::default()
    };
    let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| solve(&mut store, &asserts, &opts)));
    Some(match r {
        Ok(Ok(o)) => Ok(o.verdict),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err("panic".into()),
    })
}

impl Oracle {
    pub fn holds(&self, text: &str, cfg: &CheckConfig) -> bool {
        let known = |v: &Option<Result<Verdict, String>>| match v {
            Some(Ok(v)) if !matches!(v, Verdict::Unknown(_)) => Some(*v),
            _ => None,
        };
        match self {
            Oracle::PreproDiff => {
                let a = known(&verdict_with(text, true, cfg));
                let b = known(&verdict_with(text, false, cfg));
                matches!((a, b), (Some(x), Some(y)) if x != y)
            }
            Oracle::AnyFailure => {
                parse_script(text.as_bytes()).is_ok() && !check_script(text, cfg).problems.is_empty()
            }
            Oracle::Crash => matches!(verdict_with(text, true, cfg), Some(Err(_))),
            Oracle::Verdict(v) => known(&verdict_with(text, true, cfg)) == Some(*v),
            Oracle::ReferenceDiff => {
                let Some(bin) = &cfg.reference else { return false };
                let Some(a) = known(&verdict_with(text, true, cfg)) else { return false };
                match run_reference(bin, text, cfg.timeout) {
                    Ok(r) if !matches!(r, Verdict::Unknown(_)) => r != a,
                    _ => false,
                }
            }
        }
    }
}

/// Bound on oracle evaluations for one reduction.
pub const DDMIN_CALL_LIMIT: usize = 20_000;

struct Reducer<'a> {
    oracle: &'a mut dyn FnMut(&str) -> bool,
    cache: HashMap<String, bool>,
    calls: usize,
}

impl Reducer<'_> {
    fn test(&mut self, text: &str) -> bool {
        if let Some(&r) = self.cache.get(text) {
            return r;
        }
        if self.calls >= DDMIN_CALL_LIMIT {
            return false;
        }
        self.calls += 1;
        let r = (self.oracle)(text);
        self.cache.insert(text.to_string(), r);
        r
    }
}

fn render(store: &TermStore, asserts: &[TermId]) -> String {
    script_text(store, asserts)
}

fn split(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let end = start + (n - start) / (parts - i);
        out.push((start, end));
        start = end;
    }
    out
}

fn ddmin_list(r: &mut Reducer, store: &TermStore, mut items: Vec<TermId>) -> Vec<TermId> {
    let mut n = 2usize;
    while items.len() >= 2 {
        let chunks = split(items.len(), n.min(items.len()));
        let mut reduced = false;
        for &(s, e) in &chunks {
            let subset: Vec<TermId> = items[s..e].to_vec();
            if r.test(&render(store, &subset)) {
                items = subset;
                n = 2;
                reduced = true;
                break;
            }
        }
        if !reduced && chunks.len() > 2 {
            for &(s, e) in &chunks {
                let comp: Vec<TermId> = items[..s].iter().chain(&items[e..]).copied().collect();
                if r.test(&render(store, &comp)) {
                    items = comp;
                    n = (n - 1).max(2);
                    reduced = true;
                    break;
                }
            }
        }
        if !reduced {
            if n >= items.len() {
                break;
            }
            n = (2 * n).min(items.len());
        }
    }
    if items.len() == 1 && r.test(&render(store, &[])) {
        items.clear();
    }
    items
}

/// Counts nodes other than the Bool constants.
fn weight(store: &TermStore, t: TermId) -> usize {
    store
        .subterms(t)
        .into_iter()
        .filter(|&s| !matches!(store.kind(s), Kind::True | Kind::False))
        .count()
}

/// Replaces every occurrence of `from` in `t` by `to`.
fn substitute(store: &mut TermStore, t: TermId, from: TermId, to: TermId) -> TermId {
    let mut memo: HashMap<TermId, TermId> = HashMap::new();
    for s in store.subterms(t) {
        let r = if s == from {
            to
        } else {
            let args: Vec<TermId> = store.args(s).iter().map(|a| memo[a]).collect();
            if args == store.args(s) {
                s
            } else {
                store.mk(store.kind(s), &args).unwrap_or(s)
            }
        };
        memo.insert(s, r);
    }
    memo[&t]
}

fn first_constant(store: &mut TermStore, sort: SortId) -> Option<TermId> {
    let f = store
        .symbols()
        .find(|&f| store.symbol(f).arity() == 0 && store.symbol(f).ret_sort == sort)?;
    store.mk_const(f).ok()
}

/// Smaller same-sorted replacements for `s`.
fn candidates(store: &mut TermStore, s: TermId) -> Vec<TermId> {
    let mut out = Vec::new();
    let kind = store.kind(s);
    let args = store.args(s).to_vec();
    let sort = store.sort_of(s);
    if sort == SortId::BOOL {
        if matches!(kind, Kind::True | Kind::False) {
            return out;
        }
        out.push(store.mk_true());
        out.push(store.mk_false());
        if kind.is_connective() || kind == Kind::Ite {
            out.extend(args.iter().copied().filter(|&a| store.is_bool(a)));
        }
        if matches!(kind, Kind::And | Kind::Or | Kind::Xor) && args.len() >= 3 {
            for i in 0..args.len() {
                let rest: Vec<TermId> = args.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &a)| a).collect();
                if let Ok(t) = store.mk(kind, &rest) {
                    out.push(t);
                }
            }
        }
    } else {
        if !args.is_empty() || kind == Kind::Ite {
            if let Some(c) = first_constant(store, sort) {
                out.push(c);
            }
        }
        out.extend(args.iter().copied().filter(|&a| store.sort_of(a) == sort));
    }
    out.retain(|&c| c != s);
    out
}

fn shrink_structure(r: &mut Reducer, store: &mut TermStore, asserts: &mut [TermId]) -> bool {
    let mut changed = false;
    for i in 0..asserts.len() {
        'restart: loop {
            let a = asserts[i];
            let mut subs = store.subterms(a);
            subs.reverse();
            let w = weight(store, a);
            for s in subs {
                for c in candidates(store, s) {
                    let na = substitute(store, a, s, c);
                    if na == a || weight(store, na) >= w {
                        continue;
                    }
                    let mut trial = asserts.to_vec();
                    trial[i] = na;
                    if r.test(&render(store, &trial)) {
                        asserts[i] = na;
                        changed = true;
                        continue 'restart;
                    }
                }
            }
            break;
        }
    }
    changed
}

/// Reduces a failing script: ddmin over the assertion list, then
/// structural shrinking inside assertions, repeated to a fixpoint. The
/// input is returned verbatim when nothing can be removed.
pub fn ddmin(text: &str, oracle: &mut dyn FnMut(&str) -> bool) -> Result<String, HarnessError> {
    reduce(text, oracle, true)
}

/// Assertion-level ddmin only.
pub fn ddmin_assertions(text: &str, oracle: &mut dyn FnMut(&str) -> bool) -> Result<String, HarnessError> {
    reduce(text, oracle, false)
}

fn reduce(text: &str, oracle: &mut dyn FnMut(&str) -> bool, structural: bool) -> Result<String, HarnessError> {
    let script = parse_script(text.as_bytes())?;
    let first = oracle(text);
    if first != oracle(text) {
        return Err(HarnessError::OracleFlaky);
    }
    if !first {
        return Err(HarnessError::NotFailing);
    }
    let original = script.assertions();
    let mut store = script.store;
    let mut r = Reducer {
        oracle,
        cache: HashMap::new(),
        calls: 0,
    };
    r.cache.insert(text.to_string(), true);
    if !r.test(&render(&store, &original)) {
        return Ok(text.to_string());
    }
    let mut asserts = original.clone();
    loop {
        asserts = ddmin_list(&mut r, &store, asserts);
        if !structural || !shrink_structure(&mut r, &mut store, &mut asserts) {
            break;
        }
    }
    if asserts == original {
        return Ok(text.to_string());
    }
    let out = render(&store, &asserts);
    if !(r.oracle)(&out) {
        return Err(HarnessError::OracleFlaky);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_pair_is_found() {
        let mut src = String::from("(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)(declare-fun c () S)");
        for i in 0..48 {
            src.push_str(&format!("(declare-fun p{i} () Bool)"));
        }
        for i in 0..48 {
            src.push_str(&format!("(assert (or p{i} (= a c)))"));
            if i == 20 {
                src.push_str("(assert (= a b))");
            }
        }
        src.push_str("(assert (not (= b a)))(check-sat)");
        let cfg = CheckConfig::default();
        let oracle = Oracle::Verdict(Verdict::Unsat);
        let out = ddmin_assertions(&src, &mut |t: &str| oracle.holds(t, &cfg)).unwrap();
        let s = parse_script(out.as_bytes()).unwrap();
        assert_eq!(s.assertions().len(), 2, "{out}");
        let out = ddmin(&src, &mut |t: &str| oracle.holds(t, &cfg)).unwrap();
        assert!(parse_script(out.as_bytes()).unwrap().assertions().len() <= 2);
        assert!(oracle.holds(&out, &cfg));
    }

    #[test]
    fn minimal_input_is_unchanged() {
        let src = "(declare-fun p () Bool)(assert (and p (not p)))(check-sat)";
        let cfg = CheckConfig::default();
        let oracle = Oracle::Verdict(Verdict::Unsat);
        let out = ddmin(src, &mut |t: &str| oracle.holds(t, &cfg)).unwrap();
        // `false` alone is smaller and still unsat.
        assert!(out.contains("(assert false)"));
        let src = "(assert false)(check-sat)";
        assert_eq!(ddmin(src, &mut |t: &str| oracle.holds(t, &cfg)).unwrap(), src);
    }

    #[test]
    fn flaky_oracle_is_detected() {
        let mut flip = false;
        let r = ddmin("(assert true)", &mut |_: &str| {
            flip = !flip;
            flip
        });
        assert!(matches!(r, Err(HarnessError::OracleFlaky)));
    }
}
