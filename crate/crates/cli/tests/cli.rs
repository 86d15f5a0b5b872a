use std::io::Write;
use std::process::{Command, Output, Stdio};

fn ufsmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ufsmt")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn script(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".smt2").tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

const CONGRUENCE: &str = "(declare-sort S 0)(declare-fun f (S) S)(declare-fun a () S)(declare-fun b () S)\
                          (assert (= a b))(assert (not (= (f a) (f b))))(check-sat)";

#[test]
fn verdict_tokens_on_their_own_line() {
    let f = script(CONGRUENCE);
    let o = ufsmt(&["solve", f.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "unsat\n");
    let f = script("(declare-fun p () Bool)(assert p)(check-sat)(get-model)");
    let out = stdout(&ufsmt(&["solve", f.path().to_str().unwrap()]));
    assert!(out.starts_with("sat\n"));
    assert!(out.contains("(define-fun p () Bool true)"), "{out}");
}

#[test]
fn reads_standard_input() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ufsmt"))
        .args(["solve", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"(assert false)(check-sat)").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(stdout(&o), "unsat\n");
}

#[test]
fn proof_is_written_and_replayed() {
    let f = script(CONGRUENCE);
    let dir = tempfile::tempdir().unwrap();
    let proof = dir.path().join("p.lean");
    for flags in [&[][..], &["--no-prepro"], &["--no-th-prop"]] {
        let mut args = vec!["solve", f.path().to_str().unwrap(), "--proof-replay", "--proof", proof.to_str().unwrap()];
        args.extend_from_slice(flags);
        let o = ufsmt(&args);
        assert_eq!(stdout(&o), "unsat\nproof-replay: valid\n");
        let text = std::fs::read_to_string(&proof).unwrap();
        assert!(text.contains("theorem unsat : False"));
    }
}

#[test]
fn validation_of_a_bridged_model() {
    let f = script(
        "(declare-sort S 0)(declare-fun f (Bool) S)(declare-fun p () Bool)(declare-fun q () Bool)\
         (assert (not (= (f p) (f q))))(check-sat)",
    );
    let o = ufsmt(&["solve", f.path().to_str().unwrap(), "--validate"]);
    assert_eq!(stdout(&o), "sat\nvalidation: valid\n");
}

#[test]
fn dumps_cnf_and_lemmas() {
    let f = script(CONGRUENCE);
    let dir = tempfile::tempdir().unwrap();
    let (cnf, lemmas) = (dir.path().join("c.cnf"), dir.path().join("l.smt2"));
    let o = ufsmt(&[
        "solve",
        f.path().to_str().unwrap(),
        "--no-prepro",
        "--dump-cnf",
        cnf.to_str().unwrap(),
        "--dump-lemmas",
        lemmas.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&cnf).unwrap().contains("p cnf "));
    assert!(std::fs::read_to_string(&lemmas).unwrap().contains("(f a)"));
}

#[test]
fn timeout_must_be_positive() {
    let f = script(CONGRUENCE);
    let o = ufsmt(&["solve", f.path().to_str().unwrap(), "--timeout", "0"]);
    assert!(!o.status.success());
}

#[test]
fn unknown_under_a_small_budget() {
    let f = script(&ufsmt_diamond(12));
    let o = ufsmt(&["solve", f.path().to_str().unwrap(), "--no-prepro", "--no-th-prop", "--conflict-budget", "10"]);
    assert_eq!(stdout(&o), "unknown\n");
}

fn ufsmt_diamond(n: usize) -> String {
    stdout(&ufsmt(&["gen-diamond", &n.to_string()]))
}

#[test]
fn diamond_generator_output_is_unsat() {
    let text = ufsmt_diamond(3);
    assert_eq!(text.matches("(assert").count(), 4);
    let f = script(&text);
    assert_eq!(stdout(&ufsmt(&["solve", f.path().to_str().unwrap()])), "unsat\n");
    assert!(!ufsmt(&["gen-diamond", "0"]).status.success());
}

#[test]
fn ddmin_reports_a_non_failing_input() {
    let f = script(CONGRUENCE);
    let o = ufsmt(&["ddmin", f.path().to_str().unwrap(), "--oracle", "any-failure"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ddmin_reduces_to_the_verdict() {
    let f = script(
        "(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)(declare-fun c () S)\
         (assert (= a b))(assert (= b c))(assert (not (= a a)))(assert (= c a))(check-sat)",
    );
    let o = ufsmt(&["ddmin", f.path().to_str().unwrap(), "--oracle", "unsat"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.matches("(assert").count(), 1, "{out}");
}

#[test]
fn fuzz_run_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let o = ufsmt(&["fuzz", "--trials", "40", "--seed", "3", "--failures", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("failures 0"));
}

#[test]
fn bench_writes_csv() {
    let o = ufsmt(&["bench", "--min", "2", "--max", "3"]);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("n,config,verdict,seconds,conflicts,theory_conflicts,final_check_rejections,decisions")
    );
    assert_eq!(lines.count(), 6);
}
