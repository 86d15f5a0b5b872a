//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach standard output.
//!
//! Criterion 2 needs an external solver: `UFSMT_REFERENCE=<path>` or `z3`
//! on the search path. Without one it is reported as skipped.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use ufsmt::driver::{solve, SolveOptions};
use ufsmt::harness::{check_script, gen_eq_diamond, generate, run_reference, run_script, CheckConfig, FuzzSpec, RunConfig};
use ufsmt::proof::{build_certificate, replay_check, LemmaBody};
use ufsmt::sat::Verdict;
use ufsmt::smtlib::parse_script;

const TRIALS: usize = 10_000;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Line {
    criterion: u8,
    title: &'static str,
    status: Status,
    detail: String,
}

fn line(criterion: u8, title: &'static str, ok: bool, detail: String) -> Line {
    Line {
        criterion,
        title,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn solve_text(text: &str, pre: bool, prop: bool, budget: Option<u64>) -> (Verdict, Duration, ufsmt::sat::SatStats) {
    let script = parse_script(text.as_bytes()).unwrap();
    let asserts = script.assertions();
    let mut store = script.store;
    let opts = SolveOptions {
        preprocess: pre,
        theory_propagation: prop,
        conflict_budget: budget,
        timeout: Some(Duration::from_secs(120)),
        ..Default::default()
    };
    let t = Instant::now();
    let out = solve(&mut store, &asserts, &opts).unwrap();
    (out.verdict, t.elapsed(), out.sat.stats)
}

fn diamond() -> Line {
    let text = gen_eq_diamond(100);
    let (v_fast, t_fast, _) = solve_text(&text, true, true, None);
    let (v_slow, t_slow, _) = solve_text(&text, false, false, Some(100_000));
    let fast_ok = v_fast == Verdict::Unsat && t_fast < Duration::from_secs(1);
    let slow_ok = matches!(v_slow, Verdict::Unknown(_)) || t_slow > t_fast * 10;
    let mut counts = Vec::new();
    for n in 4..=10 {
        let (v, _, s) = solve_text(&gen_eq_diamond(n), false, false, None);
        assert_eq!(v, Verdict::Unsat);
        counts.push(s.theory_conflicts);
    }
    let trend_ok = counts.iter().zip(4u32..).all(|(&c, n)| c >= 1 << (n - 2))
        && counts.windows(2).all(|w| w[0] <= w[1]);
    line(
        1,
        "diamond speedup",
        fast_ok && slow_ok && trend_ok,
        format!(
            "n=100 prepro {:?} in {:.3}s; ablated {:?} after {:.2}s; rejections n=4..10 {:?}",
            v_fast,
            t_fast.as_secs_f64(),
            v_slow,
            t_slow.as_secs_f64(),
            counts
        ),
    )
}

/// Regression scripts, eq_diamond instances and generated scripts of
/// several shapes.
fn local_corpus() -> Vec<String> {
    let mut out = Vec::new();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/regressions");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    for f in files {
        out.push(std::fs::read_to_string(f).unwrap());
    }
    // Without preprocessing the family is exponential; keep it small.
    for n in 1..=12 {
        out.push(gen_eq_diamond(n));
    }
    let shapes = [
        FuzzSpec::default(),
        FuzzSpec { num_sorts: 2, num_consts: 5, num_funs: 3, max_depth: 4, num_asserts: 5, ..Default::default() },
        FuzzSpec { num_consts: 3, bool_vars: 3, max_depth: 2, num_asserts: 8, ..Default::default() },
    ];
    for (k, spec) in shapes.iter().enumerate() {
        for i in 0..10 {
            out.push(generate(spec, 900_000 + 100 * k as u64 + i));
        }
    }
    out
}

fn reference_agreement() -> Line {
    let title = "reference agreement on a local corpus";
    let Some(bin) = reference_solver() else {
        return Line {
            criterion: 2,
            title,
            status: Status::Skip,
            detail: "no reference solver (set UFSMT_REFERENCE)".into(),
        };
    };
    let corpus = local_corpus();
    let mut agree = 0;
    let mut complete = 0;
    let mut notes = Vec::new();
    for (i, text) in corpus.iter().enumerate() {
        let (a, ..) = solve_text(text, true, true, None);
        let (b, ..) = solve_text(text, false, true, None);
        let r = run_reference(&bin, text, Duration::from_secs(30));
        if !matches!(a, Verdict::Unknown(_)) && !matches!(b, Verdict::Unknown(_)) {
            complete += 1;
        }
        match r {
            Ok(r) if r == a && r == b => agree += 1,
            other => notes.push(format!("#{i}: {a:?}/{b:?} vs {other:?}")),
        }
    }
    line(
        2,
        title,
        corpus.len() >= 50 && agree == corpus.len() && complete == corpus.len(),
        format!("{agree}/{} agree, {complete} complete both ways {notes:?}", corpus.len()),
    )
}

fn congruence_oracle() -> Line {
    let mut bad = 0;
    for seed in 0..TRIALS as u64 {
        let p = random_equations(&mut rng(seed));
        let labels: Vec<u32> = (0..p.equations.len() as u32).collect();
        let g = closure(&p, &p.equations, &labels);
        if !same_partition(&p, &g, &brute_force_classes(&p, &p.equations)) {
            bad += 1;
        }
    }
    line(3, "congruence closure vs fixpoint oracle", bad == 0, format!("{TRIALS} sets, {bad} mismatches"))
}

fn explain_validity() -> Line {
    let mut pairs = 0usize;
    let mut bad = 0usize;
    let mut seed = 1_000_000u64;
    while pairs < TRIALS {
        let p = random_equations(&mut rng(seed));
        seed += 1;
        let labels: Vec<u32> = (0..p.equations.len() as u32).collect();
        let g = closure(&p, &p.equations, &labels);
        let mut r = rng(seed ^ 0x5eed);
        for _ in 0..4 {
            let a = p.universe[rand::Rng::random_range(&mut r, 0..p.universe.len())];
            let b = p.universe[rand::Rng::random_range(&mut r, 0..p.universe.len())];
            let (x, y) = (g.node(a).unwrap(), g.node(b).unwrap());
            if !g.egraph.are_equal(x, y) {
                continue;
            }
            pairs += 1;
            let ex = g.egraph.explain(x, y).unwrap();
            if !explanation_is_valid(&p, &ex, a, b) {
                bad += 1;
            }
        }
    }
    line(4, "explain validity", bad == 0, format!("{pairs} equated pairs, {bad} invalid"))
}

fn sat_oracle() -> Line {
    let mut wrong = 0;
    let mut bad_learnt = 0;
    let mut learnt_checked = 0;
    for seed in 0..TRIALS as u64 {
        let mut r = rng(seed + 7_000_000);
        let (n, clauses) = random_cnf(&mut r, 20);
        let models = truth_table_models(n, &clauses);
        let run = run_sat(n, &clauses, 0);
        let model_ok = match &run.model {
            Some(m) => {
                let bits = m.iter().enumerate().fold(0u32, |a, (i, &b)| a | (b as u32) << i);
                models.contains(&bits)
            }
            None => true,
        };
        if (run.verdict == Verdict::Sat) != !models.is_empty() || !model_ok {
            wrong += 1;
        }
        if seed % 10 == 0 {
            for c in &run.learnt {
                learnt_checked += 1;
                let mc = MaskClause::of(c);
                if !models.iter().all(|&a| mc.holds(a)) {
                    bad_learnt += 1;
                }
            }
        }
    }
    line(
        5,
        "SAT engine vs truth table",
        wrong == 0 && bad_learnt == 0,
        format!("{TRIALS} CNFs, {wrong} wrong; {learnt_checked} learnt clauses on 1000 instances, {bad_learnt} not entailed"),
    )
}

/// Seeded script of one of three shapes.
fn fuzz_script(i: usize) -> String {
    let spec = match i % 3 {
        0 => FuzzSpec::default(),
        1 => {
            let mut s = FuzzSpec { num_sorts: 2, num_consts: 5, num_funs: 3, max_depth: 4, num_asserts: 5, ..Default::default() };
            s.weights.bool_arg_pct = 50;
            s
        }
        _ => FuzzSpec { num_consts: 3, bool_vars: 3, max_depth: 2, num_asserts: 8, ..Default::default() },
    };
    generate(&spec, 50_000 + i as u64)
}

struct Campaign {
    sat: usize,
    unsat: usize,
    unknown: usize,
    models: usize,
    certificates: usize,
    model_problems: Vec<String>,
    cert_problems: Vec<String>,
    disagreements: Vec<String>,
    round_trip_failures: usize,
    unsat_scripts: Vec<String>,
    sat_scripts: Vec<String>,
}

fn campaign() -> Campaign {
    let cfg = CheckConfig::default();
    let mut c = Campaign {
        sat: 0,
        unsat: 0,
        unknown: 0,
        models: 0,
        certificates: 0,
        model_problems: Vec::new(),
        cert_problems: Vec::new(),
        disagreements: Vec::new(),
        round_trip_failures: 0,
        unsat_scripts: Vec::new(),
        sat_scripts: Vec::new(),
    };
    for i in 0..TRIALS {
        let text = fuzz_script(i);
        let t = check_script(&text, &cfg);
        match t.verdict() {
            Some(Verdict::Sat) => {
                c.sat += 1;
                c.sat_scripts.push(text.clone());
            }
            Some(Verdict::Unsat) => {
                c.unsat += 1;
                c.unsat_scripts.push(text.clone());
            }
            _ => c.unknown += 1,
        }
        c.models += t.models_checked;
        c.certificates += t.certificates_checked;
        c.round_trip_failures += !t.round_trip_ok as usize;
        for p in t.problems {
            let tagged = format!("trial {i}: {p}");
            if p.contains("model") || p.contains("validation") {
                c.model_problems.push(tagged);
            } else if p.contains("replay") || p.contains("certificate") {
                c.cert_problems.push(tagged);
            } else {
                c.disagreements.push(tagged);
            }
        }
    }
    c
}

fn model_soundness(c: &Campaign) -> Line {
    let mut external = String::from("no reference solver");
    let mut external_bad = 0;
    if let Some(bin) = reference_solver() {
        let cfg = CheckConfig { reference: Some(bin), ..Default::default() };
        let sample: Vec<&String> = c.sat_scripts.iter().step_by((c.sat_scripts.len() / 200).max(1)).collect();
        for s in &sample {
            external_bad += check_script(s, &cfg)
                .problems
                .iter()
                .filter(|p| p.contains("validation") || p.contains("model"))
                .count();
        }
        external = format!("{} validation scripts sent to the reference, {external_bad} rejected", sample.len());
    }
    line(
        6,
        "model soundness",
        c.model_problems.is_empty() && external_bad == 0 && c.models > 0,
        format!("{} models checked, {} problems {:?}; {external}", c.models, c.model_problems.len(), c.model_problems),
    )
}

fn certificate_soundness(c: &Campaign) -> Line {
    let mut mutants = 0usize;
    let mut caught = 0usize;
    for text in c.unsat_scripts.iter().take(600) {
        let script = parse_script(text.as_bytes()).unwrap();
        let asserts = script.assertions();
        let mut store = script.store;
        let out = solve(&mut store, &asserts, &SolveOptions::default()).unwrap();
        let cert = build_certificate(&store, &out).unwrap();
        for (k, lemma) in cert.lemmas.iter().enumerate() {
            let LemmaBody::Clause(lits) = &lemma.body else {
                continue;
            };
            for j in 0..lits.len() {
                let mut m = cert.clone();
                let LemmaBody::Clause(ml) = &mut m.lemmas[k].body else { unreachable!() };
                ml[j].positive = !ml[j].positive;
                mutants += 1;
                caught += !replay_check(&m).is_valid() as usize;
            }
        }
    }
    let rate = caught as f64 / mutants.max(1) as f64;
    line(
        7,
        "certificate soundness",
        c.cert_problems.is_empty() && c.certificates > 0 && rate >= 0.95,
        format!(
            "{} certificates replayed, {} problems {:?}; {caught}/{mutants} lemma mutations caught ({:.1}%)",
            c.certificates,
            c.cert_problems.len(),
            c.cert_problems,
            rate * 100.0
        ),
    )
}

fn ablation(c: &Campaign) -> Line {
    line(
        8,
        "ablation consistency",
        c.disagreements.is_empty() && c.unknown == 0,
        format!(
            "{TRIALS} trials: {} sat, {} unsat, {} unknown, {} disagreements {:?}",
            c.sat, c.unsat, c.unknown, c.disagreements.len(), c.disagreements
        ),
    )
}

fn round_trip_and_determinism(c: &Campaign) -> Line {
    let mut differing = 0;
    let cfg = RunConfig { proof_replay: true, validate: true, seed: 7, ..Default::default() };
    for i in (0..TRIALS).step_by(20) {
        let text = fuzz_script(i);
        let a = run_script(&text, &cfg).unwrap();
        let b = run_script(&text, &cfg).unwrap();
        if a.stdout != b.stdout || a.proof_script != b.proof_script {
            differing += 1;
        }
    }
    line(
        9,
        "round trip and determinism",
        c.round_trip_failures == 0 && differing == 0,
        format!("{} round-trip failures over {TRIALS} scripts; {differing}/{} reruns differ", c.round_trip_failures, TRIALS / 20),
    )
}

fn main() {
    let start = Instant::now();
    let mut lines = std::thread::scope(|s| {
        let jobs = [
            s.spawn(diamond),
            s.spawn(reference_agreement),
            s.spawn(congruence_oracle),
            s.spawn(explain_validity),
            s.spawn(sat_oracle),
        ];
        let c = campaign();
        let mut out: Vec<Line> = jobs.into_iter().map(|j| j.join().expect("criterion panicked")).collect();
        out.push(model_soundness(&c));
        out.push(certificate_soundness(&c));
        out.push(ablation(&c));
        out.push(round_trip_and_determinism(&c));
        out
    });
    lines.sort_by_key(|l| l.criterion);
    let mut failed = false;
    for l in &lines {
        let tag = match l.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed = true;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("criterion {} {tag}: {} ({})", l.criterion, l.title, l.detail);
    }
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if failed {
        std::process::exit(1);
    }
}
