use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::heap::VarHeap;
use super::{
    Budget, FinalCheck, Lit, Placement, PropagatorHooks, ProofStep, Resource, SatConfig, SatStats,
    SolveError, SolveResult, StepKind, Var, Verdict,
};

const UNDEF: i8 = 0;
const TRUE: i8 = 1;
const FALSE: i8 = -1;

type CRef = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Reason {
    None,
    Decision,
    Clause(CRef),
    /// Propagated by the theory; the clause is fetched on demand.
    Theory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    Input(usize),
    Learnt,
    Theory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Antecedent {
    Clause(CRef),
    Unit(u32),
}

#[derive(Clone, Debug)]
struct Clause {
    lits: Vec<Lit>,
    origin: Origin,
    lbd: u32,
    activity: f64,
    deleted: bool,
    antecedents: Vec<Antecedent>,
}

#[derive(Clone, Copy, Debug)]
struct Watcher {
    cref: CRef,
    blocker: Lit,
}

pub struct Solver {
    config: SatConfig,
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Reason>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    notified: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f64,
    heap: VarHeap,
    phase: Vec<bool>,
    seen: Vec<bool>,
    num_inputs: usize,
    num_learnts: usize,
    max_learnts: f64,
    /// Set when an input clause is falsified at level 0 before search.
    root_conflict: Option<CRef>,
    empty_input: Option<usize>,
    proof_log: Vec<ProofStep>,
    stats: SatStats,
}

enum Step {
    Continue,
    Done(Verdict),
}

impl Solver {
    pub fn new(num_vars: usize, config: SatConfig) -> Solver {
        let mut activity = vec![0.0; num_vars];
        if config.seed != 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for a in activity.iter_mut() {
                *a = rng.random::<f64>() * 1e-5;
            }
        }
        let mut heap = VarHeap::new(num_vars);
        for v in 0..num_vars as u32 {
            heap.insert(v, &activity);
        }
        Solver {
            config,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            assigns: vec![UNDEF; num_vars],
            level: vec![0; num_vars],
            reason: vec![Reason::None; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            notified: 0,
            activity,
            var_inc: 1.0,
            cla_inc: 1.0,
            heap,
            phase: vec![false; num_vars],
            seen: vec![false; num_vars],
            num_inputs: 0,
            num_learnts: 0,
            max_learnts: 0.0,
            root_conflict: None,
            empty_input: None,
            proof_log: Vec::new(),
            stats: SatStats::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.assigns.len()
    }

    /// Adds an input clause and returns its index. Duplicate literals are
    /// merged; tautologies are counted but not stored.
    pub fn add_clause(&mut self, lits: &[Lit]) -> usize {
        let idx = self.num_inputs;
        self.num_inputs += 1;
        let mut ls: Vec<Lit> = lits.to_vec();
        ls.sort();
        ls.dedup();
        if ls.windows(2).any(|w| w[0].var() == w[1].var()) {
            return idx;
        }
        for l in &ls {
            assert!(l.var().index() < self.num_vars(), "literal {l:?} out of range");
        }
        match ls.len() {
            0 => {
                if self.empty_input.is_none() {
                    self.empty_input = Some(idx);
                }
            }
            1 => {
                let cref = self.store(ls.clone(), Origin::Input(idx), Vec::new());
                let l = ls[0];
                match self.value(l) {
                    UNDEF => self.enqueue(l, Reason::Clause(cref)),
                    FALSE if self.root_conflict.is_none() => self.root_conflict = Some(cref),
                    _ => {}
                }
            }
            _ => {
                let cref = self.store(ls, Origin::Input(idx), Vec::new());
                self.attach(cref);
            }
        }
        idx
    }

    pub fn solve(
        &mut self,
        hooks: &mut dyn PropagatorHooks,
        budget: Budget,
    ) -> Result<SolveResult, SolveError> {
        self.max_learnts = (self.clauses.len() as f64 / 3.0).max(2000.0);
        let verdict = self.search(hooks, budget)?;
        let model = (verdict == Verdict::Sat)
            .then(|| self.assigns.iter().map(|&a| a == TRUE).collect());
        let core = (verdict == Verdict::Unsat && self.config.track_core)
            .then(|| self.compute_core());
        Ok(SolveResult {
            verdict,
            model,
            proof_log: std::mem::take(&mut self.proof_log),
            core,
            stats: self.stats,
        })
    }

    fn value(&self, l: Lit) -> i8 {
        let a = self.assigns[l.var().index()];
        if l.is_positive() {
            a
        } else {
            -a
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn store(&mut self, lits: Vec<Lit>, origin: Origin, antecedents: Vec<Antecedent>) -> CRef {
        let cref = self.clauses.len() as CRef;
        self.clauses.push(Clause {
            lits,
            origin,
            lbd: 0,
            activity: 0.0,
            deleted: false,
            antecedents,
        });
        cref
    }

    fn attach(&mut self, cref: CRef) {
        let c = &self.clauses[cref as usize];
        let (l0, l1) = (c.lits[0], c.lits[1]);
        self.watches[l0.code()].push(Watcher { cref, blocker: l1 });
        self.watches[l1.code()].push(Watcher { cref, blocker: l0 });
    }

    fn enqueue(&mut self, l: Lit, reason: Reason) {
        let v = l.var().index();
        debug_assert_eq!(self.assigns[v], UNDEF);
        self.assigns[v] = if l.is_positive() { TRUE } else { FALSE };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<CRef> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[false_lit.code()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref;
                if self.clauses[cref as usize].deleted {
                    continue;
                }
                let first = {
                    let c = &mut self.clauses[cref as usize].lits;
                    if c[0] == false_lit {
                        c.swap(0, 1);
                    }
                    c[0]
                };
                if first != w.blocker && self.value(first) == TRUE {
                    ws[j] = Watcher { cref, blocker: first };
                    j += 1;
                    continue;
                }
                let len = self.clauses[cref as usize].lits.len();
                let mut moved = false;
                for k in 2..len {
                    let lk = self.clauses[cref as usize].lits[k];
                    if self.value(lk) != FALSE {
                        let c = &mut self.clauses[cref as usize].lits;
                        c.swap(1, k);
                        self.watches[lk.code()].push(Watcher { cref, blocker: first });
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = Watcher { cref, blocker: first };
                j += 1;
                if self.value(first) == FALSE {
                    conflict = Some(cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, Reason::Clause(cref));
                }
            }
            ws.truncate(j);
            let slot = &mut self.watches[false_lit.code()];
            ws.append(slot);
            *slot = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn backtrack(&mut self, level: usize, hooks: &mut dyn PropagatorHooks) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level];
        for idx in (lim..self.trail.len()).rev() {
            let l = self.trail[idx];
            let v = l.var().index();
            self.phase[v] = l.is_positive();
            self.assigns[v] = UNDEF;
            self.reason[v] = Reason::None;
            self.heap.insert(v as u32, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level);
        self.qhead = self.qhead.min(lim);
        if self.notified > lim {
            self.notified = lim;
        }
        hooks.on_backtrack(level);
    }

    fn notify(&mut self, hooks: &mut dyn PropagatorHooks) {
        while self.notified < self.trail.len() {
            let l = self.trail[self.notified];
            let is_decision = self.reason[l.var().index()] == Reason::Decision;
            self.notified += 1;
            hooks.on_assign(l, is_decision);
        }
    }

    fn bump_var(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v as u32, &self.activity);
    }

    fn bump_clause(&mut self, cref: CRef) {
        let c = &mut self.clauses[cref as usize];
        if c.origin == Origin::Learnt {
            c.activity += self.cla_inc;
            if c.activity > 1e20 {
                for c in self.clauses.iter_mut() {
                    c.activity *= 1e-20;
                }
                self.cla_inc *= 1e-20;
            }
        }
    }

    /// Reason clause of an assigned variable, fetching it from the theory
    /// if it was propagated there.
    fn reason_clause(
        &mut self,
        v: usize,
        hooks: &mut dyn PropagatorHooks,
    ) -> Result<CRef, SolveError> {
        match self.reason[v] {
            Reason::Clause(c) => Ok(c),
            Reason::Theory => {
                let l = if self.assigns[v] == TRUE {
                    Var(v as u32).lit(true)
                } else {
                    Var(v as u32).lit(false)
                };
                let mut lits = hooks.cb_reason(l);
                self.check_clause(&lits)?;
                let pos = lits
                    .iter()
                    .position(|&x| x == l)
                    .ok_or_else(|| SolveError::InvalidClause(format!("reason for {l:?} lacks it")))?;
                lits.swap(0, pos);
                for &x in &lits[1..] {
                    if self.value(x) != FALSE {
                        return Err(SolveError::InvalidClause(format!(
                            "reason for {l:?} has non-false literal {x:?}"
                        )));
                    }
                }
                if lits.len() > 1 {
                    let best = (1..lits.len())
                        .max_by_key(|&k| self.level[lits[k].var().index()])
                        .expect("non-empty tail");
                    lits.swap(1, best);
                }
                self.proof_log.push(ProofStep {
                    kind: StepKind::Theory,
                    lits: lits.clone(),
                });
                let cref = self.store(lits, Origin::Theory, Vec::new());
                if self.clauses[cref as usize].lits.len() > 1 {
                    self.attach(cref);
                }
                self.reason[v] = Reason::Clause(cref);
                Ok(cref)
            }
            Reason::Decision | Reason::None => {
                panic!("variable {v} has no reason clause")
            }
        }
    }

    fn check_clause(&self, lits: &[Lit]) -> Result<(), SolveError> {
        let mut vars = HashSet::new();
        for l in lits {
            if l.var().index() >= self.num_vars() {
                return Err(SolveError::InvalidClause(format!("literal {l:?} out of range")));
            }
            if !vars.insert(l.var()) {
                return Err(SolveError::InvalidClause(format!(
                    "variable {} occurs twice",
                    l.var().0 + 1
                )));
            }
        }
        Ok(())
    }

    /// First-UIP analysis. Returns the learnt clause (asserting literal
    /// first, highest remaining level second), the backjump level and the
    /// antecedents used.
    fn analyze(
        &mut self,
        confl: CRef,
        hooks: &mut dyn PropagatorHooks,
    ) -> Result<(Vec<Lit>, usize, Vec<Antecedent>), SolveError> {
        let track = self.config.track_core;
        let current = self.decision_level() as u32;
        let mut learnt = vec![Lit::new(Var(0), true)];
        let mut antecedents = Vec::new();
        let mut root_seen: Vec<u32> = Vec::new();
        let mut counter = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let mut cref = confl;
        loop {
            self.bump_clause(cref);
            if track {
                antecedents.push(Antecedent::Clause(cref));
            }
            let lits = self.clauses[cref as usize].lits.clone();
            for &q in &lits {
                if Some(q) == p {
                    continue;
                }
                let v = q.var().index();
                if self.seen[v] {
                    continue;
                }
                if self.level[v] == 0 {
                    if track {
                        self.seen[v] = true;
                        root_seen.push(v as u32);
                    }
                    continue;
                }
                self.seen[v] = true;
                self.bump_var(v);
                if self.level[v] == current {
                    counter += 1;
                } else {
                    learnt.push(q);
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().index()] {
                    break;
                }
            }
            let pl = self.trail[idx];
            let pv = pl.var().index();
            self.seen[pv] = false;
            counter -= 1;
            p = Some(pl);
            if counter == 0 {
                break;
            }
            cref = self.reason_clause(pv, hooks)?;
        }
        learnt[0] = !p.expect("conflict has a literal at the current level");
        for l in &learnt[1..] {
            self.seen[l.var().index()] = false;
        }
        for &v in &root_seen {
            self.seen[v as usize] = false;
            antecedents.push(Antecedent::Unit(v));
        }
        let bt = if learnt.len() == 1 {
            0
        } else {
            let best = (1..learnt.len())
                .max_by_key(|&k| self.level[learnt[k].var().index()])
                .expect("non-empty tail");
            learnt.swap(1, best);
            self.level[learnt[1].var().index()] as usize
        };
        Ok((learnt, bt, antecedents))
    }

    fn lbd(&mut self, lits: &[Lit]) -> u32 {
        let mut levels: Vec<u32> = lits.iter().map(|l| self.level[l.var().index()]).collect();
        levels.sort_unstable();
        levels.dedup();
        levels.len() as u32
    }

    /// Analyzes a conflict at the current level, learns and backjumps.
    fn resolve_conflict(
        &mut self,
        confl: CRef,
        hooks: &mut dyn PropagatorHooks,
    ) -> Result<Step, SolveError> {
        self.stats.conflicts += 1;
        if self.decision_level() == 0 {
            self.root_conflict = Some(confl);
            return Ok(Step::Done(Verdict::Unsat));
        }
        let (learnt, bt, antecedents) = self.analyze(confl, hooks)?;
        let lbd = self.lbd(&learnt);
        self.backtrack(bt, hooks);
        self.proof_log.push(ProofStep {
            kind: StepKind::Learnt,
            lits: learnt.clone(),
        });
        let first = learnt[0];
        let long = learnt.len() > 1;
        let cref = self.store(learnt, Origin::Learnt, antecedents);
        self.clauses[cref as usize].lbd = lbd;
        self.bump_clause(cref);
        if long {
            self.attach(cref);
            self.num_learnts += 1;
        }
        self.enqueue(first, Reason::Clause(cref));
        self.var_inc /= 0.95;
        self.cla_inc /= 0.999;
        Ok(Step::Continue)
    }

    /// Inserts a theory clause at any point of the search, backjumping as
    /// needed so that the watch invariants hold.
    fn place_clause(
        &mut self,
        lits: Vec<Lit>,
        hooks: &mut dyn PropagatorHooks,
    ) -> Result<(Placement, Option<CRef>), SolveError> {
        self.check_clause(&lits)?;
        if lits.iter().any(|&l| self.value(l) == TRUE && self.level[l.var().index()] == 0) {
            return Ok((Placement::Satisfied, None));
        }
        let mut lits = lits;
        let rank = |s: &Solver, l: Lit| -> (u8, i64) {
            match s.value(l) {
                TRUE => (0, s.level[l.var().index()] as i64),
                UNDEF => (1, 0),
                _ => (2, -(s.level[l.var().index()] as i64)),
            }
        };
        lits.sort_by_key(|&l| rank(self, l));
        self.proof_log.push(ProofStep {
            kind: StepKind::Theory,
            lits: lits.clone(),
        });
        if lits.is_empty() {
            let cref = self.store(lits, Origin::Theory, Vec::new());
            self.backtrack(0, hooks);
            return Ok((Placement::GlobalConflict, Some(cref)));
        }
        let cref = self.store(lits.clone(), Origin::Theory, Vec::new());
        if lits.len() == 1 {
            let l = lits[0];
            if self.value(l) == FALSE && self.level[l.var().index()] == 0 {
                return Ok((Placement::GlobalConflict, Some(cref)));
            }
            self.backtrack(0, hooks);
            if self.value(l) == UNDEF {
                self.enqueue(l, Reason::Clause(cref));
            }
            return Ok((Placement::UnitPropagating, Some(cref)));
        }
        self.attach(cref);
        let (l0, l1) = (lits[0], lits[1]);
        let lvl0 = self.level[l0.var().index()] as usize;
        let lvl1 = self.level[l1.var().index()] as usize;
        match (self.value(l0), self.value(l1)) {
            (TRUE, _) => Ok((Placement::Satisfied, Some(cref))),
            (UNDEF, UNDEF) => Ok((Placement::Attached, Some(cref))),
            (UNDEF, _) => {
                self.backtrack(lvl1, hooks);
                self.enqueue(l0, Reason::Clause(cref));
                Ok((Placement::UnitPropagating, Some(cref)))
            }
            _ => {
                if lvl0 == 0 {
                    return Ok((Placement::GlobalConflict, Some(cref)));
                }
                if lvl0 == lvl1 {
                    self.backtrack(lvl0, hooks);
                    Ok((Placement::ConflictingAt(lvl0), Some(cref)))
                } else {
                    self.backtrack(lvl1, hooks);
                    self.enqueue(l0, Reason::Clause(cref));
                    Ok((Placement::UnitPropagating, Some(cref)))
                }
            }
        }
    }

    fn handle_theory_clause(
        &mut self,
        lits: Vec<Lit>,
        hooks: &mut dyn PropagatorHooks,
    ) -> Result<Step, SolveError> {
        let (placement, cref) = self.place_clause(lits, hooks)?;
        match placement {
            Placement::ConflictingAt(_) => {
                self.stats.theory_conflicts += 1;
                self.resolve_conflict(cref.expect("stored"), hooks)
            }
            Placement::GlobalConflict => {
                self.stats.theory_conflicts += 1;
                self.stats.conflicts += 1;
                self.root_conflict = cref;
                Ok(Step::Done(Verdict::Unsat))
            }
            _ => Ok(Step::Continue),
        }
    }

    fn out_of_budget(&self, budget: &Budget) -> Option<Resource> {
        if let Some(limit) = budget.conflicts {
            if self.stats.conflicts >= limit {
                return Some(Resource::Conflicts);
            }
        }
        if let Some(deadline) = budget.deadline {
            if Instant::now() >= deadline {
                return Some(Resource::Time);
            }
        }
        None
    }

    fn search(
        &mut self,
        hooks: &mut dyn PropagatorHooks,
        budget: Budget,
    ) -> Result<Verdict, SolveError> {
        if self.empty_input.is_some() || self.root_conflict.is_some() {
            return Ok(Verdict::Unsat);
        }
        let mut restart_index = 0u32;
        let mut restart_limit = luby(restart_index) * self.config.restart_base;
        let mut conflicts_since_restart = 0u64;
        let mut ticks = 0u64;
        loop {
            ticks += 1;
            if ticks.is_multiple_of(256) {
                if let Some(r) = self.out_of_budget(&budget) {
                    return Ok(Verdict::Unknown(r));
                }
            }
            if let Some(confl) = self.propagate() {
                if let Step::Done(v) = self.resolve_conflict(confl, hooks)? {
                    return Ok(v);
                }
                conflicts_since_restart += 1;
                if let Some(r) = self.out_of_budget(&budget) {
                    return Ok(Verdict::Unknown(r));
                }
                if conflicts_since_restart >= restart_limit {
                    conflicts_since_restart = 0;
                    restart_index += 1;
                    restart_limit = luby(restart_index) * self.config.restart_base;
                    self.stats.restarts += 1;
                    self.backtrack(0, hooks);
                }
                if self.num_learnts as f64 >= self.max_learnts {
                    self.reduce_db();
                }
                continue;
            }
            self.notify(hooks);
            if let Some(clause) = hooks.cb_has_external_clause() {
                if let Step::Done(v) = self.handle_theory_clause(clause, hooks)? {
                    return Ok(v);
                }
                continue;
            }
            if self.config.theory_propagation {
                if let Some(l) = hooks.cb_propagate() {
                    if l.var().index() >= self.num_vars() {
                        return Err(SolveError::InvalidClause(format!(
                            "propagated literal {l:?} out of range"
                        )));
                    }
                    match self.value(l) {
                        TRUE => {}
                        UNDEF => {
                            self.stats.theory_propagations += 1;
                            self.enqueue(l, Reason::Theory);
                            // Explaining later could pick up literals
                            // assigned after this one.
                            self.reason_clause(l.var().index(), hooks)?;
                        }
                        _ => {
                            let reason = hooks.cb_reason(l);
                            if !reason.contains(&l) {
                                return Err(SolveError::InvalidClause(format!(
                                    "reason for {l:?} lacks it"
                                )));
                            }
                            if let Step::Done(v) = self.handle_theory_clause(reason, hooks)? {
                                return Ok(v);
                            }
                        }
                    }
                    continue;
                }
            }
            match self.pick_branch() {
                Some(v) => {
                    self.stats.decisions += 1;
                    self.trail_lim.push(self.trail.len());
                    let l = Var(v).lit(self.phase[v as usize]);
                    self.enqueue(l, Reason::Decision);
                }
                None => {
                    self.stats.final_checks += 1;
                    let model: Vec<bool> = self.assigns.iter().map(|&a| a == TRUE).collect();
                    match hooks.cb_final_check(&model) {
                        FinalCheck::Accept => return Ok(Verdict::Sat),
                        FinalCheck::Reject(clauses) => {
                            if clauses.is_empty() {
                                return Err(SolveError::InvalidClause(
                                    "final check rejected without a clause".into(),
                                ));
                            }
                            self.stats.final_check_rejections += 1;
                            for c in clauses {
                                if let Step::Done(v) = self.handle_theory_clause(c, hooks)? {
                                    return Ok(v);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn pick_branch(&mut self) -> Option<u32> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v as usize] == UNDEF {
                return Some(v);
            }
        }
        None
    }

    fn locked(&self, cref: CRef) -> bool {
        let c = &self.clauses[cref as usize];
        let l = c.lits[0];
        self.value(l) == TRUE && self.reason[l.var().index()] == Reason::Clause(cref)
    }

    /// Deletes about half of the learnt clauses with glue above 3,
    /// keeping reasons and the most active ones.
    fn reduce_db(&mut self) {
        self.stats.reductions += 1;
        let mut candidates: Vec<CRef> = (0..self.clauses.len() as CRef)
            .filter(|&c| {
                let cl = &self.clauses[c as usize];
                cl.origin == Origin::Learnt && !cl.deleted && cl.lits.len() > 2 && cl.lbd > 3
            })
            .filter(|&c| !self.locked(c))
            .collect();
        candidates.sort_by(|&a, &b| {
            let (ca, cb) = (&self.clauses[a as usize], &self.clauses[b as usize]);
            cb.lbd
                .cmp(&ca.lbd)
                .then(ca.activity.partial_cmp(&cb.activity).unwrap_or(std::cmp::Ordering::Equal))
        });
        let remove = candidates.len() / 2;
        for &c in &candidates[..remove] {
            let cl = &mut self.clauses[c as usize];
            cl.deleted = true;
            // Keep antecedents for core extraction; the literals are not needed.
            if !self.config.track_core {
                cl.lits = Vec::new();
                cl.lits.shrink_to_fit();
            }
            self.num_learnts -= 1;
        }
        for ws in self.watches.iter_mut() {
            ws.retain(|w| !self.clauses[w.cref as usize].deleted);
        }
        self.max_learnts *= 1.1;
    }

    /// Input clauses reachable from the final conflict through learnt
    /// clause antecedents and level-0 reasons.
    fn compute_core(&self) -> Vec<usize> {
        let mut core = Vec::new();
        if let Some(i) = self.empty_input {
            core.push(i);
            return core;
        }
        let Some(root) = self.root_conflict else {
            return core;
        };
        let mut stack = vec![Antecedent::Clause(root)];
        for l in &self.clauses[root as usize].lits {
            stack.push(Antecedent::Unit(l.var().0));
        }
        let mut visited = HashSet::new();
        while let Some(a) = stack.pop() {
            if !visited.insert(a) {
                continue;
            }
            match a {
                Antecedent::Clause(c) => {
                    let cl = &self.clauses[c as usize];
                    match cl.origin {
                        Origin::Input(i) => core.push(i),
                        Origin::Theory => {}
                        Origin::Learnt => stack.extend(cl.antecedents.iter().copied()),
                    }
                }
                Antecedent::Unit(v) => {
                    if self.assigns[v as usize] == UNDEF {
                        continue;
                    }
                    if let Reason::Clause(c) = self.reason[v as usize] {
                        stack.push(Antecedent::Clause(c));
                        for l in &self.clauses[c as usize].lits {
                            if l.var().0 != v {
                                stack.push(Antecedent::Unit(l.var().0));
                            }
                        }
                    }
                }
            }
        }
        core.sort_unstable();
        core.dedup();
        core
    }
}

/// Luby sequence 1 1 2 1 1 2 4 ...
fn luby(i: u32) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i as u64 + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    let mut i = i as u64;
    while size - 1 != i {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size;
    }
    1u64 << seq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sat::NoHooks;

    fn lits(ds: &[i64]) -> Vec<Lit> {
        ds.iter().map(|&d| Lit::from_dimacs(d)).collect()
    }

    fn solve(n: usize, cnf: &[&[i64]], track_core: bool) -> SolveResult {
        let mut s = Solver::new(n, SatConfig { track_core, ..Default::default() });
        for c in cnf {
            s.add_clause(&lits(c));
        }
        s.solve(&mut NoHooks, Budget::default()).unwrap()
    }

    fn satisfies(model: &[bool], cnf: &[&[i64]]) -> bool {
        cnf.iter().all(|c| {
            c.iter()
                .any(|&d| model[d.unsigned_abs() as usize - 1] == (d > 0))
        })
    }

    #[test]
    fn luby_prefix() {
        let seq: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn small_sat_and_unsat() {
        let cnf: &[&[i64]] = &[&[1, 2], &[-1, 2], &[1, -2]];
        let r = solve(2, cnf, false);
        assert_eq!(r.verdict, Verdict::Sat);
        assert!(satisfies(r.model.as_ref().unwrap(), cnf));
        let cnf: &[&[i64]] = &[&[1, 2], &[-1, 2], &[1, -2], &[-1, -2]];
        let r = solve(2, cnf, true);
        assert_eq!(r.verdict, Verdict::Unsat);
        assert_eq!(r.core.unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn empty_clause_and_units() {
        let r = solve(1, &[&[1], &[]], true);
        assert_eq!(r.verdict, Verdict::Unsat);
        assert_eq!(r.core.unwrap(), vec![1]);
        let r = solve(1, &[&[1], &[-1]], true);
        assert_eq!(r.verdict, Verdict::Unsat);
        assert_eq!(r.core.unwrap(), vec![0, 1]);
    }

    #[test]
    fn pigeonhole_three_into_two() {
        // p(i,h) = 2*i + h + 1
        let mut cnf: Vec<Vec<i64>> = Vec::new();
        for i in 0..3 {
            cnf.push(vec![2 * i + 1, 2 * i + 2]);
        }
        for h in 0..2 {
            for i in 0..3 {
                for j in i + 1..3 {
                    cnf.push(vec![-(2 * i + h + 1), -(2 * j + h + 1)]);
                }
            }
        }
        let refs: Vec<&[i64]> = cnf.iter().map(|c| c.as_slice()).collect();
        let r = solve(6, &refs, true);
        assert_eq!(r.verdict, Verdict::Unsat);
        assert!(!r.proof_log.is_empty());
    }

    #[test]
    fn conflict_budget_gives_unknown() {
        let mut cnf: Vec<Vec<i64>> = Vec::new();
        let (p, h) = (8i64, 7i64);
        let var = |i: i64, j: i64| i * h + j + 1;
        for i in 0..p {
            cnf.push((0..h).map(|j| var(i, j)).collect());
        }
        for j in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    cnf.push(vec![-var(a, j), -var(b, j)]);
                }
            }
        }
        let mut s = Solver::new((p * h) as usize, SatConfig::default());
        for c in &cnf {
            s.add_clause(&lits(c));
        }
        let r = s
            .solve(&mut NoHooks, Budget { conflicts: Some(10), deadline: None })
            .unwrap();
        assert_eq!(r.verdict, Verdict::Unknown(Resource::Conflicts));
    }

    /// Rejects every full assignment with a from-scratch blocking clause
    /// until a designated model is found.
    struct Blocker {
        n: usize,
        target: Vec<bool>,
    }

    impl PropagatorHooks for Blocker {
        fn cb_final_check(&mut self, model: &[bool]) -> FinalCheck {
            if model[..self.n] == self.target[..] {
                FinalCheck::Accept
            } else {
                FinalCheck::Reject(vec![(0..self.n)
                    .map(|v| Var(v as u32).lit(!model[v]))
                    .collect()])
            }
        }
    }

    #[test]
    fn final_check_blocking_reaches_target() {
        let mut s = Solver::new(3, SatConfig::default());
        let mut hooks = Blocker { n: 3, target: vec![true, false, true] };
        let r = s.solve(&mut hooks, Budget::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Sat);
        assert_eq!(r.model.unwrap(), vec![true, false, true]);
        assert!(r.stats.final_check_rejections > 0);
    }

    struct DupReject;

    impl PropagatorHooks for DupReject {
        fn cb_final_check(&mut self, _model: &[bool]) -> FinalCheck {
            FinalCheck::Reject(vec![lits(&[1, -1])])
        }
    }

    #[test]
    fn duplicate_variable_is_rejected() {
        let mut s = Solver::new(1, SatConfig::default());
        let err = s.solve(&mut DupReject, Budget::default()).unwrap_err();
        assert!(matches!(err, SolveError::InvalidClause(_)));
    }

    /// Propagates x2 whenever x1 is true, with reason {-1, 2}.
    struct Implier {
        x1: bool,
        pending: bool,
        reasons_asked: usize,
    }

    impl PropagatorHooks for Implier {
        fn on_assign(&mut self, lit: Lit, _d: bool) {
            if lit == Lit::from_dimacs(1) {
                self.x1 = true;
                self.pending = true;
            }
        }
        fn on_backtrack(&mut self, _level: usize) {
            self.x1 = false;
            self.pending = false;
        }
        fn cb_propagate(&mut self) -> Option<Lit> {
            if self.pending {
                self.pending = false;
                Some(Lit::from_dimacs(2))
            } else {
                None
            }
        }
        fn cb_reason(&mut self, _lit: Lit) -> Vec<Lit> {
            self.reasons_asked += 1;
            lits(&[-1, 2])
        }
    }

    #[test]
    fn lazy_theory_reason_used_in_conflict() {
        let mut s = Solver::new(2, SatConfig::default());
        s.add_clause(&lits(&[1]));
        s.add_clause(&lits(&[-2]));
        let mut hooks = Implier { x1: false, pending: false, reasons_asked: 0 };
        let r = s.solve(&mut hooks, Budget::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Unsat);
        assert_eq!(hooks.reasons_asked, 1);
        assert!(r.proof_log.iter().any(|s| s.kind == StepKind::Theory));
    }
}
