use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ufsmt::driver::{solve, SolveOptions};
use ufsmt::harness::{
    ddmin, fuzz, gen_eq_diamond, run_script, CheckConfig, FuzzSpec, HarnessError, Oracle, RunConfig,
};
use ufsmt::proof::Replay;
use ufsmt::sat::Verdict;
use ufsmt::smtlib::parse_script;

#[derive(Parser)]
#[command(name = "ufsmt", version, about = "QF_UF solver with model validation and proof certificates")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an SMT-LIB script (`-` reads standard input).
    Solve(SolveArgs),
    /// Differential fuzzing over generated scripts.
    Fuzz(FuzzArgs),
    /// Reduce a failing script.
    Ddmin(DdminArgs),
    /// Print the eq_diamond instance of size n.
    GenDiamond { n: usize },
    /// Time the eq_diamond family under each configuration, as CSV.
    Bench(BenchArgs),
}

fn parse_timeout(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("timeout must be positive".into())
    }
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long)]
    no_prepro: bool,
    #[arg(long)]
    no_th_prop: bool,
    /// Write the proof script of an unsat answer here.
    #[arg(long)]
    proof: Option<PathBuf>,
    /// Replay the certificate of an unsat answer.
    #[arg(long)]
    proof_replay: bool,
    /// Validate the model of a sat answer.
    #[arg(long)]
    validate: bool,
    /// External solver binary used for cross-checks.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value = "60", value_parser = parse_timeout)]
    timeout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    conflict_budget: Option<u64>,
    #[arg(long)]
    dump_cnf: Option<PathBuf>,
    #[arg(long)]
    dump_lemmas: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    sorts: usize,
    #[arg(long, default_value_t = 4)]
    consts: usize,
    #[arg(long, default_value_t = 2)]
    funs: usize,
    #[arg(long, default_value_t = 2)]
    bool_vars: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 4)]
    asserts: usize,
    /// Percent chance of a Bool function argument.
    #[arg(long, default_value_t = 25)]
    bool_arg_pct: u32,
    /// Failing scripts are saved here.
    #[arg(long, default_value = "failures")]
    failures: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "10", value_parser = parse_timeout)]
    timeout: f64,
    #[arg(long, default_value_t = 200_000)]
    conflict_budget: u64,
}

#[derive(Args)]
struct DdminArgs {
    file: PathBuf,
    /// prepro-diff, any-failure, crash, sat, unsat or reference-diff.
    #[arg(long)]
    oracle: String,
    /// Output path; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "10", value_parser = parse_timeout)]
    timeout: f64,
    #[arg(long, default_value_t = 200_000)]
    conflict_budget: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    min: usize,
    #[arg(long, default_value_t = 14)]
    max: usize,
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long, default_value = "10", value_parser = parse_timeout)]
    timeout: f64,
    #[arg(long, default_value_t = 100_000)]
    conflict_budget: u64,
}

fn read_input(path: &PathBuf) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode> {
    let text = read_input(&a.file)?;
    let cfg = RunConfig {
        no_prepro: a.no_prepro,
        no_th_prop: a.no_th_prop,
        proof: a.proof,
        proof_replay: a.proof_replay,
        validate: a.validate,
        reference: a.reference,
        timeout: Duration::from_secs_f64(a.timeout),
        seed: a.seed,
        conflict_budget: a.conflict_budget,
        dump_cnf: a.dump_cnf,
        dump_lemmas: a.dump_lemmas,
    };
    let report = run_script(&text, &cfg)?;
    print!("{}", report.stdout);
    for d in &report.diagnostics {
        eprintln!("{d}");
    }
    let failed = matches!(report.validation, Some(Err(_)))
        || matches!(report.replay, Some(Replay::Invalid { .. }));
    Ok(if failed { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn cmd_fuzz(a: FuzzArgs) -> Result<ExitCode> {
    let mut spec = FuzzSpec {
        num_sorts: a.sorts,
        num_consts: a.consts,
        num_funs: a.funs,
        bool_vars: a.bool_vars,
        max_depth: a.depth,
        num_asserts: a.asserts,
        seed: a.seed,
        ..Default::default()
    };
    spec.weights.bool_arg_pct = a.bool_arg_pct;
    let cfg = CheckConfig {
        reference: a.reference,
        timeout: Duration::from_secs_f64(a.timeout),
        conflict_budget: Some(a.conflict_budget),
        seed: 0,
    };
    let r = fuzz(&spec, a.trials, &cfg, Some(&a.failures))?;
    for m in &r.messages {
        eprintln!("{m}");
    }
    println!(
        "trials {} sat {} unsat {} unknown {} failures {} bridged {} models {} certificates {}",
        r.trials, r.sat, r.unsat, r.unknown, r.failures, r.bridged_trials, r.models_checked, r.certificates_checked
    );
    Ok(if r.failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_ddmin(a: DdminArgs) -> Result<ExitCode> {
    let text = read_input(&a.file)?;
    let oracle: Oracle = a.oracle.parse().map_err(anyhow::Error::msg)?;
    if oracle == Oracle::ReferenceDiff && a.reference.is_none() {
        bail!("--oracle reference-diff needs --reference");
    }
    let cfg = CheckConfig {
        reference: a.reference,
        timeout: Duration::from_secs_f64(a.timeout),
        conflict_budget: Some(a.conflict_budget),
        seed: 0,
    };
    match ddmin(&text, &mut |t: &str| oracle.holds(t, &cfg)) {
        Ok(out) => {
            match &a.output {
                Some(p) => std::fs::write(p, &out)?,
                None => print!("{out}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(HarnessError::NotFailing) => {
            eprintln!("the oracle does not hold on the input");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record([
        "n",
        "config",
        "verdict",
        "seconds",
        "conflicts",
        "theory_conflicts",
        "final_check_rejections",
        "decisions",
    ])?;
    let configs = [("default", true, true), ("no-prepro", false, true), ("no-prepro-no-th-prop", false, false)];
    let mut n = a.min.max(1);
    while n <= a.max {
        let text = gen_eq_diamond(n);
        for (name, pre, prop) in configs {
            let script = parse_script(text.as_bytes())?;
            let asserts = script.assertions();
            let mut store = script.store;
            let opts = SolveOptions {
                preprocess: pre,
                theory_propagation: prop,
                conflict_budget: Some(a.conflict_budget),
                timeout: Some(Duration::from_secs_f64(a.timeout)),
                ..Default::default()
            };
            let t = Instant::now();
            let out = solve(&mut store, &asserts, &opts)?;
            let secs = t.elapsed().as_secs_f64();
            let verdict = match out.verdict {
                Verdict::Sat => "sat",
                Verdict::Unsat => "unsat",
                Verdict::Unknown(_) => "unknown",
            };
            let s = out.sat.stats;
            w.write_record([
                n.to_string(),
                name.to_string(),
                verdict.to_string(),
                format!("{secs:.6}"),
                s.conflicts.to_string(),
                s.theory_conflicts.to_string(),
                s.final_check_rejections.to_string(),
                s.decisions.to_string(),
            ])?;
        }
        w.flush()?;
        n += a.step.max(1);
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Fuzz(a) => cmd_fuzz(a),
        Cmd::Ddmin(a) => cmd_ddmin(a),
        Cmd::GenDiamond { n } => {
            if n == 0 {
                bail!("n must be at least 1");
            }
            print!("{}", gen_eq_diamond(n));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    // Nested s-expression trees are freed recursively; give deep inputs
    // room.
    let worker = std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(move || run(cli))
        .expect("spawn solver thread");
    match worker.join() {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("error: solver thread panicked");
            ExitCode::from(101)
        }
    }
}
