use std::io::{Read, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::HarnessError;
use crate::driver::{solve, SolveOptions};
use crate::model::{build_model, check_validation_script, emit_validation_script, first_violation, print_model, Model};
use crate::proof::{build_certificate, emit_proof_script, replay_check, sat_clause_terms, Replay};
use crate::sat::{SatStats, Verdict};
use crate::smtlib::{parse_script, print_term, CommandKind};
use crate::terms::{TermLit, TermStore};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub no_prepro: bool,
    pub no_th_prop: bool,
    pub proof: Option<PathBuf>,
    pub proof_replay: bool,
    pub validate: bool,
    pub reference: Option<PathBuf>,
    pub timeout: Duration,
    pub seed: u64,
    pub conflict_budget: Option<u64>,
    pub dump_cnf: Option<PathBuf>,
    pub dump_lemmas: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            no_prepro: false,
            no_th_prop: false,
            proof: None,
            proof_replay: false,
            validate: false,
            reference: None,
            timeout: Duration::from_secs(60),
            seed: 0,
            conflict_budget: None,
            dump_cnf: None,
            dump_lemmas: None,
        }
    }
}

impl RunConfig {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            preprocess: !self.no_prepro,
            theory_propagation: !self.no_th_prop,
            seed: self.seed,
            conflict_budget: self.conflict_budget,
            timeout: Some(self.timeout),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    /// Everything meant for standard output.
    pub stdout: String,
    /// Error and warning messages for the diagnostic stream.
    pub diagnostics: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub stats: Vec<SatStats>,
    pub validation: Option<Result<(), String>>,
    pub replay: Option<Replay>,
    pub proof_script: Option<String>,
    pub elapsed: Duration,
}

pub fn verdict_token(v: Verdict) -> &'static str {
    match v {
        Verdict::Sat => "sat",
        Verdict::Unsat => "unsat",
        Verdict::Unknown(_) => "unknown",
    }
}

fn clause_text(store: &TermStore, c: &[TermLit]) -> String {
    let lits: Vec<String> = c
        .iter()
        .map(|l| {
            let t = print_term(store, l.term);
            if l.positive {
                t
            } else {
                format!("(not {t})")
            }
        })
        .collect();
    match lits.len() {
        0 => "false".into(),
        1 => lits[0].clone(),
        _ => format!("(or {})", lits.join(" ")),
    }
}

/// Executes the commands of a script. A script without `check-sat` is
/// checked once at the end.
pub fn run_script(text: &str, cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    let start = Instant::now();
    let script = parse_script(text.as_bytes())?;
    let mut report = RunReport {
        diagnostics: script.warnings.clone(),
        ..Default::default()
    };
    let mut store = script.store;
    let mut commands: Vec<CommandKind> = script.commands.iter().map(|c| c.kind.clone()).collect();
    if !commands.contains(&CommandKind::CheckSat) {
        let at = commands
            .iter()
            .position(|c| *c == CommandKind::Exit)
            .unwrap_or(commands.len());
        commands.insert(at, CommandKind::CheckSat);
    }
    let opts = cfg.solve_options();
    let mut asserts = Vec::new();
    let mut last_model: Option<Model> = None;
    let mut last_verdict: Option<Verdict> = None;
    let mut first = true;
    for cmd in commands {
        match cmd {
            CommandKind::Assert(t) => asserts.push(t),
            CommandKind::CheckSat => {
                let out = solve(&mut store, &asserts, &opts)?;
                report.stdout.push_str(verdict_token(out.verdict));
                report.stdout.push('\n');
                report.verdicts.push(out.verdict);
                report.stats.push(out.sat.stats);
                last_verdict = Some(out.verdict);
                last_model = None;
                if first {
                    if let Some(p) = &cfg.dump_cnf {
                        std::fs::write(p, out.cnf.to_dimacs(&store))?;
                    }
                    if let Some(p) = &cfg.dump_lemmas {
                        let mut s = String::new();
                        for c in &out.prepro.lemmas {
                            s.push_str("; preprocessing\n");
                            s.push_str(&clause_text(&store, c));
                            s.push('\n');
                        }
                        for l in &out.theory.lemmas {
                            if let Some(c) = sat_clause_terms(&out.cnf, &l.lits)? {
                                s.push_str(&format!("; theory {:?}\n", l.kind));
                                s.push_str(&clause_text(&store, &c));
                                s.push('\n');
                            }
                        }
                        std::fs::write(p, s)?;
                    }
                }
                if let Some(bin) = cfg.reference.as_deref().filter(|_| first) {
                    let sub = crate::smtlib::script_text(&store, &asserts);
                    match run_reference(bin, &sub, cfg.timeout) {
                        Ok(r) => {
                            report.stdout.push_str(&format!("reference: {}\n", verdict_token(r)));
                            let known = |v: Verdict| !matches!(v, Verdict::Unknown(_));
                            if known(r) && known(out.verdict) && r != out.verdict {
                                report.diagnostics.push(format!(
                                    "verdict differs from reference: {} vs {}",
                                    verdict_token(out.verdict),
                                    verdict_token(r)
                                ));
                            }
                        }
                        Err(e) => report.diagnostics.push(e.to_string()),
                    }
                }
                match out.verdict {
                    Verdict::Sat => {
                        let m = build_model(&store, &out)?;
                        if cfg.validate && first {
                            let res = validate(&store, &asserts, &m, cfg);
                            report.stdout.push_str(&match &res {
                                Ok(()) => "validation: valid\n".to_string(),
                                Err(e) => format!("validation: invalid ({e})\n"),
                            });
                            report.validation = Some(res);
                        }
                        last_model = Some(m);
                    }
                    Verdict::Unsat if first && (cfg.proof.is_some() || cfg.proof_replay) => {
                        let cert = build_certificate(&store, &out)?;
                        let text = emit_proof_script(&cert);
                        if let Some(p) = &cfg.proof {
                            std::fs::write(p, &text)?;
                        }
                        if cfg.proof_replay {
                            let r = replay_check(&cert);
                            report.stdout.push_str(&match &r {
                                Replay::Valid => "proof-replay: valid\n".to_string(),
                                Replay::Invalid { stage, reason, .. } => {
                                    format!("proof-replay: invalid (stage {stage}: {reason})\n")
                                }
                            });
                            report.replay = Some(r);
                        }
                        report.proof_script = Some(text);
                    }
                    _ => {}
                }
                first = false;
            }
            CommandKind::GetModel => match (&last_verdict, &last_model) {
                (Some(Verdict::Sat), Some(m)) => {
                    report.stdout.push_str(&print_model(&store, m));
                    report.stdout.push('\n');
                }
                (None, _) => report
                    .diagnostics
                    .push("(error \"get-model is only allowed after check-sat\")".into()),
                _ => report
                    .diagnostics
                    .push("(error \"model is not available: last check-sat was not sat\")".into()),
            },
            CommandKind::Exit => break,
            _ => {}
        }
    }
    report.elapsed = start.elapsed();
    Ok(report)
}

fn validate(store: &TermStore, asserts: &[crate::terms::TermId], m: &Model, cfg: &RunConfig) -> Result<(), String> {
    if let Some(i) = first_violation(store, m, asserts) {
        return Err(format!("assertion {} is false in the model", i + 1));
    }
    let script = emit_validation_script(store, asserts, m);
    check_validation_script(&script).map_err(|e| e.to_string())?;
    if let Some(bin) = &cfg.reference {
        match run_reference(bin, &script, cfg.timeout) {
            Ok(Verdict::Sat) => {}
            Ok(v) => return Err(format!("reference solver answered {}", verdict_token(v))),
            Err(e) => warn!("validation script not checked externally: {e}"),
        }
    }
    Ok(())
}

/// Runs an external solver on `text` and reads its first verdict line.
/// The child is killed once `timeout` has elapsed.
pub fn run_reference(bin: &Path, text: &str, timeout: Duration) -> Result<Verdict, HarnessError> {
    let mut file = tempfile::Builder::new().suffix(".smt2").tempfile()?;
    file.write_all(text.as_bytes())?;
    file.flush()?;
    let mut child = Command::new(bin)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()?;
    let mut out = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = out.read_to_string(&mut s);
        s
    });
    let deadline = Instant::now() + timeout;
    loop {
        if child.try_wait()?.is_some() {
            break;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(HarnessError::Timeout(timeout));
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    let stdout = reader.join().unwrap_or_default();
    debug!("reference output: {stdout:?}");
    match stdout.lines().map(str::trim).find(|l| !l.is_empty()) {
        Some("sat") => Ok(Verdict::Sat),
        Some("unsat") => Ok(Verdict::Unsat),
        Some("unknown" | "timeout") => Ok(Verdict::Unknown(crate::sat::Resource::Time)),
        Some(other) => Err(HarnessError::Reference(other.to_string())),
        None => Err(HarnessError::Reference("no output".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_model_discipline() {
        let cfg = RunConfig::default();
        let r = run_script("(declare-sort S 0)(declare-fun a () S)(get-model)(assert (= a a))(check-sat)(get-model)", &cfg).unwrap();
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.stdout.starts_with("sat\n("));
        let r = run_script("(assert false)(check-sat)(get-model)", &cfg).unwrap();
        assert_eq!(r.stdout, "unsat\n");
        assert_eq!(r.diagnostics.len(), 1);
    }

    #[test]
    fn script_without_check_sat_is_checked_once() {
        let r = run_script("(assert true)", &RunConfig::default()).unwrap();
        assert_eq!(r.stdout, "sat\n");
    }
}
