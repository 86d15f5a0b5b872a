use std::fmt::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::runner::{run_reference, verdict_token};
use crate::driver::{solve, SolveOptions};
use crate::model::{build_model, check_validation_script, emit_validation_script, first_violation};
use crate::proof::{build_certificate, replay_check};
use crate::sat::Verdict;
use crate::smtlib::{parse_script, script_text};

/// Relative weights of the generator's choices.
#[derive(Clone, Debug)]
pub struct FuzzWeights {
    pub not: u32,
    pub and: u32,
    pub or: u32,
    pub xor: u32,
    pub implies: u32,
    pub iff: u32,
    pub bool_ite: u32,
    pub atom: u32,
    pub eq: u32,
    pub bool_var: u32,
    pub predicate: u32,
    pub distinct: u32,
    pub constant: u32,
    pub app: u32,
    pub term_ite: u32,
    pub leaf: u32,
    /// Chance in percent that a function argument is Bool.
    pub bool_arg_pct: u32,
    /// Chance in percent that a function returns Bool.
    pub predicate_pct: u32,
}

impl Default for FuzzWeights {
    fn default() -> Self {
        FuzzWeights {
            not: 3,
            and: 3,
            or: 4,
            xor: 2,
            implies: 2,
            iff: 1,
            bool_ite: 1,
            atom: 6,
            eq: 8,
            bool_var: 3,
            predicate: 2,
            distinct: 1,
            constant: 1,
            app: 4,
            term_ite: 1,
            leaf: 5,
            bool_arg_pct: 25,
            predicate_pct: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FuzzSpec {
    pub num_sorts: usize,
    pub num_consts: usize,
    pub num_funs: usize,
    pub bool_vars: usize,
    pub max_depth: usize,
    pub num_asserts: usize,
    pub seed: u64,
    pub weights: FuzzWeights,
}

impl Default for FuzzSpec {
    fn default() -> Self {
        FuzzSpec {
            num_sorts: 1,
            num_consts: 4,
            num_funs: 2,
            bool_vars: 2,
            max_depth: 3,
            num_asserts: 4,
            seed: 0,
            weights: FuzzWeights::default(),
        }
    }
}

const BOOL: usize = usize::MAX;

struct Gen<'a> {
    spec: &'a FuzzSpec,
    rng: ChaCha8Rng,
    /// (name, sort) of constants.
    consts: Vec<(String, usize)>,
    /// (name, arg sorts, result sort); `BOOL` marks Bool.
    funs: Vec<(String, Vec<usize>, usize)>,
    num_sorts: usize,
}

fn pick(rng: &mut ChaCha8Rng, weights: &[u32]) -> usize {
    let total: u32 = weights.iter().sum();
    if total == 0 {
        return 0;
    }
    let mut x = rng.random_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

impl Gen<'_> {
    fn sort_name(&self, s: usize) -> String {
        if s == BOOL {
            "Bool".into()
        } else {
            format!("S{s}")
        }
    }

    fn term(&mut self, sort: usize, depth: usize) -> String {
        let w = &self.spec.weights;
        let apps: Vec<usize> = (0..self.funs.len()).filter(|&i| self.funs[i].2 == sort).collect();
        let choice = if depth == 0 {
            0
        } else {
            pick(
                &mut self.rng,
                &[w.leaf, if apps.is_empty() { 0 } else { w.app }, w.term_ite],
            )
        };
        match choice {
            1 => {
                let f = apps[self.rng.random_range(0..apps.len())];
                let (name, args, _) = self.funs[f].clone();
                let parts: Vec<String> = args.iter().map(|&s| self.any(s, depth - 1)).collect();
                format!("({} {})", name, parts.join(" "))
            }
            2 => {
                let c = self.formula(depth - 1);
                let x = self.term(sort, depth - 1);
                let y = self.term(sort, depth - 1);
                format!("(ite {c} {x} {y})")
            }
            _ => {
                let cands: Vec<&String> =
                    self.consts.iter().filter(|(_, s)| *s == sort).map(|(n, _)| n).collect();
                cands[self.rng.random_range(0..cands.len())].clone()
            }
        }
    }

    fn any(&mut self, sort: usize, depth: usize) -> String {
        if sort == BOOL {
            self.formula(depth)
        } else {
            self.term(sort, depth)
        }
    }

    fn atom(&mut self, depth: usize) -> String {
        let w = &self.spec.weights;
        let preds: Vec<usize> = (0..self.funs.len()).filter(|&i| self.funs[i].2 == BOOL).collect();
        let choice = pick(
            &mut self.rng,
            &[
                w.eq,
                if self.spec.bool_vars > 0 { w.bool_var } else { 0 },
                if preds.is_empty() { 0 } else { w.predicate },
                w.distinct,
                w.constant,
            ],
        );
        match choice {
            1 => format!("p{}", self.rng.random_range(0..self.spec.bool_vars)),
            2 => {
                let f = preds[self.rng.random_range(0..preds.len())];
                let (name, args, _) = self.funs[f].clone();
                let parts: Vec<String> = args.iter().map(|&s| self.any(s, depth.saturating_sub(1))).collect();
                format!("({} {})", name, parts.join(" "))
            }
            3 => {
                let s = self.rng.random_range(0..self.num_sorts);
                let n = self.rng.random_range(2..=3);
                let parts: Vec<String> = (0..n).map(|_| self.term(s, depth.saturating_sub(1))).collect();
                format!("(distinct {})", parts.join(" "))
            }
            4 => if self.rng.random_bool(0.5) { "true" } else { "false" }.into(),
            _ => {
                let s = self.rng.random_range(0..self.num_sorts);
                let x = self.term(s, depth.saturating_sub(1));
                let y = self.term(s, depth.saturating_sub(1));
                format!("(= {x} {y})")
            }
        }
    }

    fn formula(&mut self, depth: usize) -> String {
        if depth == 0 {
            return self.atom(0);
        }
        let w = &self.spec.weights;
        let choice = pick(
            &mut self.rng,
            &[w.atom, w.not, w.and, w.or, w.xor, w.implies, w.iff, w.bool_ite],
        );
        let d = depth - 1;
        match choice {
            1 => format!("(not {})", self.formula(d)),
            2..=5 => {
                let head = ["and", "or", "xor", "=>"][choice - 2];
                let n = self.rng.random_range(2..=if choice == 4 { 4 } else { 3 });
                let parts: Vec<String> = (0..n).map(|_| self.formula(d)).collect();
                format!("({head} {})", parts.join(" "))
            }
            6 => format!("(= {} {})", self.formula(d), self.formula(d)),
            7 => format!("(ite {} {} {})", self.formula(d), self.formula(d), self.formula(d)),
            _ => self.atom(depth),
        }
    }
}

/// A well-sorted random script, fully determined by `spec` and `seed`.
pub fn generate(spec: &FuzzSpec, seed: u64) -> String {
    let num_sorts = spec.num_sorts.max(1);
    let mut g = Gen {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        consts: Vec::new(),
        funs: Vec::new(),
        num_sorts,
    };
    for i in 0..spec.num_consts.max(num_sorts) {
        let s = if i < num_sorts { i } else { g.rng.random_range(0..num_sorts) };
        g.consts.push((format!("c{i}"), s));
    }
    for i in 0..spec.num_funs {
        let arity = g.rng.random_range(1..=3);
        let args: Vec<usize> = (0..arity)
            .map(|_| {
                if g.rng.random_range(0..100) < spec.weights.bool_arg_pct {
                    BOOL
                } else {
                    g.rng.random_range(0..num_sorts)
                }
            })
            .collect();
        let ret = if g.rng.random_range(0..100) < spec.weights.predicate_pct {
            BOOL
        } else {
            g.rng.random_range(0..num_sorts)
        };
        g.funs.push((format!("f{i}"), args, ret));
    }
    let mut out = String::from("(set-logic QF_UF)\n");
    for s in 0..num_sorts {
        let _ = writeln!(out, "(declare-sort S{s} 0)");
    }
    for (n, s) in &g.consts {
        let _ = writeln!(out, "(declare-fun {n} () S{s})");
    }
    for i in 0..spec.bool_vars {
        let _ = writeln!(out, "(declare-fun p{i} () Bool)");
    }
    for (n, args, ret) in g.funs.clone() {
        let a: Vec<String> = args.iter().map(|&s| g.sort_name(s)).collect();
        let _ = writeln!(out, "(declare-fun {n} ({}) {})", a.join(" "), g.sort_name(ret));
    }
    for _ in 0..spec.num_asserts {
        let f = g.formula(spec.max_depth);
        let _ = writeln!(out, "(assert {f})");
    }
    out.push_str("(check-sat)\n");
    out
}

/// `(x_i = z_i ∧ z_i = x_{i+1}) ∨ (x_i = v_i ∧ v_i = x_{i+1})` for each
/// `i`, and `x_1 ≠ x_{n+1}`.
pub fn gen_eq_diamond(n: usize) -> String {
    let n = n.max(1);
    let mut out = String::from("(set-logic QF_UF)\n(declare-sort S 0)\n");
    for i in 1..=n + 1 {
        let _ = writeln!(out, "(declare-fun x{i} () S)");
    }
    for i in 1..=n {
        let _ = writeln!(out, "(declare-fun z{i} () S)");
        let _ = writeln!(out, "(declare-fun v{i} () S)");
    }
    for i in 1..=n {
        let j = i + 1;
        let _ = writeln!(
            out,
            "(assert (or (and (= x{i} z{i}) (= z{i} x{j})) (and (= x{i} v{i}) (= v{i} x{j}))))"
        );
    }
    let _ = writeln!(out, "(assert (not (= x1 x{})))", n + 1);
    out.push_str("(check-sat)\n");
    out
}

/// The three solver configurations compared on every trial, by name.
pub const CONFIGS: [(&str, bool, bool); 3] = [
    ("default", true, true),
    ("no-prepro", false, true),
    ("no-th-prop", true, false),
];

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub reference: Option<PathBuf>,
    pub timeout: Duration,
    pub conflict_budget: Option<u64>,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            reference: None,
            timeout: Duration::from_secs(10),
            conflict_budget: Some(200_000),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrialOutcome {
    /// One verdict per entry of [`CONFIGS`].
    pub verdicts: Vec<Verdict>,
    pub reference: Option<Verdict>,
    pub problems: Vec<String>,
    /// Some configuration bridged a Bool term into the equality theory.
    pub bridged: bool,
    pub models_checked: usize,
    pub certificates_checked: usize,
    pub round_trip_ok: bool,
}

impl TrialOutcome {
    pub fn verdict(&self) -> Option<Verdict> {
        self.verdicts.iter().copied().find(|v| !matches!(v, Verdict::Unknown(_)))
    }
}

/// Rendering in which the arguments of `=` are ordered textually, so that
/// two stores interning the same terms in different orders agree.
fn canonical(store: &crate::terms::TermStore, root: crate::terms::TermId) -> String {
    use crate::terms::Kind;
    let mut memo: std::collections::HashMap<crate::terms::TermId, String> = Default::default();
    for t in store.subterms(root) {
        let mut args: Vec<String> = store.args(t).iter().map(|a| memo[a].clone()).collect();
        if store.kind(t) == Kind::Eq {
            args.sort();
        }
        let head = match store.kind(t) {
            Kind::App(f) => store.symbol(f).spelling.clone(),
            k => format!("{k:?}"),
        };
        let s = if args.is_empty() { head } else { format!("({head} {})", args.join(" ")) };
        memo.insert(t, s);
    }
    memo.remove(&root).unwrap_or_default()
}

/// Printer/parser round trip: the printed script reparses to the same
/// assertions, up to the orientation of equalities.
pub fn round_trip(text: &str) -> Result<bool, crate::smtlib::FrontendError> {
    let s = parse_script(text.as_bytes())?;
    let a = s.assertions();
    let printed = script_text(&s.store, &a);
    let s2 = parse_script(printed.as_bytes())?;
    let b = s2.assertions();
    Ok(a.len() == b.len()
        && a.iter().zip(&b).all(|(&x, &y)| canonical(&s.store, x) == canonical(&s2.store, y)))
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown payload".into())
}

/// Solves `text` under every configuration, validating models and
/// replaying certificates, and compares the verdicts.
pub fn check_script(text: &str, cfg: &CheckConfig) -> TrialOutcome {
    let mut t = TrialOutcome::default();
    match round_trip(text) {
        Ok(ok) => {
            t.round_trip_ok = ok;
            if !ok {
                t.problems.push("printer/parser round trip differs".into());
            }
        }
        Err(e) => {
            t.problems.push(format!("parse: {e}"));
            return t;
        }
    }
    for (name, pre, prop) in CONFIGS {
        let script = parse_script(text.as_bytes()).expect("parsed above");
        let asserts = script.assertions();
        let mut store = script.store;
        let opts = SolveOptions {
            preprocess: pre,
            theory_propagation: prop,
            seed: cfg.seed,
            conflict_budget: cfg.conflict_budget,
            timeout: Some(cfg.timeout),
        };
        let out = match catch_unwind(AssertUnwindSafe(|| solve(&mut store, &asserts, &opts))) {
            Ok(Ok(o)) => o,
            Ok(Err(e)) => {
                t.problems.push(format!("{name}: solver error: {e}"));
                t.verdicts.push(Verdict::Unknown(crate::sat::Resource::Time));
                continue;
            }
            Err(p) => {
                t.problems.push(format!("{name}: solver panicked: {}", panic_text(&p)));
                t.verdicts.push(Verdict::Unknown(crate::sat::Resource::Time));
                continue;
            }
        };
        t.bridged |= !out.cnf.bridges.is_empty();
        t.verdicts.push(out.verdict);
        match out.verdict {
            Verdict::Sat => {
                t.models_checked += 1;
                let built = catch_unwind(AssertUnwindSafe(|| build_model(&store, &out)))
                    .unwrap_or_else(|p| Err(crate::model::ModelError::Invalid(format!("panic: {}", panic_text(&p)))));
                match built {
                    Ok(m) => {
                        if let Some(i) = first_violation(&store, &m, &asserts) {
                            t.problems.push(format!("{name}: model falsifies assertion {}", i + 1));
                        }
                        let v = emit_validation_script(&store, &asserts, &m);
                        if let Err(e) = check_validation_script(&v) {
                            t.problems.push(format!("{name}: validation script: {e}"));
                        }
                        if let (Some(bin), "default") = (&cfg.reference, name) {
                            match run_reference(bin, &v, cfg.timeout) {
                                Ok(Verdict::Sat) | Ok(Verdict::Unknown(_)) | Err(_) => {}
                                Ok(Verdict::Unsat) => t
                                    .problems
                                    .push(format!("{name}: reference rejects the validation script")),
                            }
                        }
                    }
                    Err(e) => t.problems.push(format!("{name}: model: {e}")),
                }
            }
            Verdict::Unsat => {
                t.certificates_checked += 1;
                let built = catch_unwind(AssertUnwindSafe(|| build_certificate(&store, &out)))
                    .unwrap_or_else(|p| Err(crate::proof::ProofError::IncompleteLog(format!("panic: {}", panic_text(&p)))));
                match built {
                    Ok(c) => {
                        if let crate::proof::Replay::Invalid { stage, reason, .. } = replay_check(&c) {
                            t.problems.push(format!("{name}: replay stage {stage}: {reason}"));
                        }
                    }
                    Err(e) => t.problems.push(format!("{name}: certificate: {e}")),
                }
            }
            Verdict::Unknown(_) => {}
        }
    }
    let known: Vec<Verdict> = t
        .verdicts
        .iter()
        .copied()
        .filter(|v| !matches!(v, Verdict::Unknown(_)))
        .collect();
    if known.windows(2).any(|w| w[0] != w[1]) {
        let names: Vec<String> = CONFIGS
            .iter()
            .zip(&t.verdicts)
            .map(|((n, ..), v)| format!("{n}={}", verdict_token(*v)))
            .collect();
        t.problems.push(format!("configurations disagree: {}", names.join(" ")));
    }
    if let Some(bin) = &cfg.reference {
        match run_reference(bin, text, cfg.timeout) {
            Ok(r) => {
                t.reference = Some(r);
                if let (Some(v), false) = (t.verdict(), matches!(r, Verdict::Unknown(_))) {
                    if v != r {
                        t.problems.push(format!(
                            "reference disagrees: {} vs {}",
                            verdict_token(v),
                            verdict_token(r)
                        ));
                    }
                }
            }
            Err(e) => t.problems.push(format!("reference: {e}")),
        }
    }
    t
}

#[derive(Clone, Debug, Default)]
pub struct FuzzReport {
    pub trials: usize,
    pub sat: usize,
    pub unsat: usize,
    pub unknown: usize,
    pub failures: usize,
    pub bridged_trials: usize,
    pub models_checked: usize,
    pub certificates_checked: usize,
    pub saved: Vec<PathBuf>,
    pub messages: Vec<String>,
}

/// Runs `trials` generated scripts; trial `i` uses seed `spec.seed + i`.
/// Failing scripts are written to `failures_dir` when given.
pub fn fuzz(
    spec: &FuzzSpec,
    trials: usize,
    cfg: &CheckConfig,
    failures_dir: Option<&Path>,
) -> std::io::Result<FuzzReport> {
    let mut r = FuzzReport {
        trials,
        ..Default::default()
    };
    for i in 0..trials {
        let seed = spec.seed.wrapping_add(i as u64);
        let text = generate(spec, seed);
        let t = check_script(&text, cfg);
        match t.verdict() {
            Some(Verdict::Sat) => r.sat += 1,
            Some(Verdict::Unsat) => r.unsat += 1,
            _ => r.unknown += 1,
        }
        r.bridged_trials += t.bridged as usize;
        r.models_checked += t.models_checked;
        r.certificates_checked += t.certificates_checked;
        if !t.problems.is_empty() {
            r.failures += 1;
            for p in &t.problems {
                r.messages.push(format!("seed {seed}: {p}"));
            }
            if let Some(dir) = failures_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("fail-{seed}.smt2"));
                let mut body = String::new();
                for p in &t.problems {
                    let _ = writeln!(body, "; {p}");
                }
                body.push_str(&text);
                std::fs::write(&path, body)?;
                r.saved.push(path);
            }
        }
    }
    Ok(r)
}
