//! Running every solver on every problem and collecting raw-value histories.

use std::fmt;
use std::str::FromStr;

use dfop::objective::{TransformKind, TransformSchedule};
use dfop::{minimize, DfoError, Point, SolverConfig, SolverTrace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nelder_mead::{nelder_mead, NelderMeadConfig};
use crate::problems::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    /// Trust-region solver that re-evaluates its set under each transformation.
    Dfop,
    /// The same solver fed only one new value per iteration.
    DfopNewuoaMode,
    /// The same solver on the untransformed problem.
    Noiseless,
    NelderMead,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] =
        [SolverKind::Dfop, SolverKind::DfopNewuoaMode, SolverKind::Noiseless, SolverKind::NelderMead];

    pub fn id(&self) -> &'static str {
        match self {
            SolverKind::Dfop => "dfop",
            SolverKind::DfopNewuoaMode => "dfop-newuoa-mode",
            SolverKind::Noiseless => "newuoa-n",
            SolverKind::NelderMead => "nelder-mead",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.id() == s || (s == "noiseless" && *k == SolverKind::Noiseless))
            .ok_or_else(|| format!("unknown solver '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub solver: String,
    pub problem: String,
    pub seed: u64,
    /// Best untransformed objective after each distinct evaluation.
    pub history: Vec<f64>,
    pub nf: usize,
    /// Untransformed objective at the starting point.
    pub f0: f64,
    pub f_opt: f64,
    pub x_opt: Vec<f64>,
    pub status: String,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(solver: &str, problem: &ProblemInstance, seed: u64, error: String) -> Self {
        let f0 = problem.value(&problem.x0);
        RunRecord {
            solver: solver.into(),
            problem: problem.name.clone(),
            seed,
            history: Vec::new(),
            nf: 0,
            f0,
            f_opt: f0,
            x_opt: problem.x0.clone(),
            status: "Failed".into(),
            error: Some(error),
        }
    }

    fn from_trace(solver: &str, problem: &ProblemInstance, seed: u64, trace: SolverTrace) -> Self {
        let mut history = trace.history;
        running_min(&mut history);
        RunRecord {
            solver: solver.into(),
            problem: problem.name.clone(),
            seed,
            nf: history.len(),
            f0: problem.value(&problem.x0),
            f_opt: history.last().copied().unwrap_or(trace.f_opt_raw),
            history,
            x_opt: trace.x_opt,
            status: format!("{:?}", trace.status),
            error: trace.message.filter(|_| trace.status == dfop::Status::Aborted),
        }
    }
}

pub(crate) fn running_min(v: &mut [f64]) {
    for i in 1..v.len() {
        if !(v[i] <= v[i - 1]) {
            v[i] = v[i - 1];
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    /// Evaluation budget; `400 n` when unset.
    pub budget: Option<usize>,
    pub rho_beg: f64,
    pub rho_end: f64,
    /// Replaces every problem's own transformation when set.
    pub transform: Option<TransformKind>,
    /// Interpolation points of the trust-region solvers; `2n + 1` when unset.
    pub m: Option<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { budget: None, rho_beg: 1.0, rho_end: 1e-8, transform: None, m: None }
    }
}

impl SuiteConfig {
    pub fn budget_for(&self, n: usize) -> usize {
        self.budget.unwrap_or(400 * n)
    }
}

/// The transformation `solver` sees on `problem`.
pub fn schedule_for(problem: &ProblemInstance, solver: SolverKind, seed: u64, cfg: &SuiteConfig) -> TransformSchedule {
    match solver {
        SolverKind::Noiseless => TransformSchedule::identity(),
        _ => TransformSchedule::new(cfg.transform.clone().unwrap_or_else(|| problem.transform.clone()), seed),
    }
}

/// Full trace of one of the trust-region solvers.
pub fn dfop_trace(
    problem: &ProblemInstance,
    solver: SolverKind,
    seed: u64,
    cfg: &SuiteConfig,
) -> dfop::Result<SolverTrace> {
    if solver == SolverKind::NelderMead {
        return Err(DfoError::InvalidParameter("nelder-mead has no trust-region trace".into()));
    }
    let x0 = Point::new(problem.x0.clone())?;
    let sc = SolverConfig {
        rho_beg: cfg.rho_beg,
        rho_end: cfg.rho_end,
        m: cfg.m,
        max_evals: cfg.budget_for(problem.dimension),
        newuoa_mode: solver == SolverKind::DfopNewuoaMode,
        seed: Some(seed),
        ..SolverConfig::default()
    };
    minimize(problem.spec(), schedule_for(problem, solver, seed, cfg), &x0, &sc)
}

/// Run record of an already computed trace.
pub fn record_from_trace(problem: &ProblemInstance, solver: SolverKind, seed: u64, trace: SolverTrace) -> RunRecord {
    RunRecord::from_trace(solver.id(), problem, seed, trace)
}

/// One solver on one problem.
pub fn run_one(problem: &ProblemInstance, solver: SolverKind, seed: u64, cfg: &SuiteConfig) -> RunRecord {
    if solver != SolverKind::NelderMead {
        return match dfop_trace(problem, solver, seed, cfg) {
            Ok(t) => RunRecord::from_trace(solver.id(), problem, seed, t),
            Err(e) => RunRecord::failed(solver.id(), problem, seed, e.to_string()),
        };
    }
    let x0 = match Point::new(problem.x0.clone()) {
        Ok(p) => p,
        Err(e) => return RunRecord::failed(solver.id(), problem, seed, e.to_string()),
    };
    let nm = NelderMeadConfig { budget: cfg.budget_for(problem.dimension), ..NelderMeadConfig::default() };
    match nelder_mead(&problem.spec(), schedule_for(problem, solver, seed, cfg), &x0, &nm) {
        Ok(mut r) => {
            r.problem = problem.name.clone();
            r.seed = seed;
            r
        }
        Err(e) => RunRecord::failed(solver.id(), problem, seed, e.to_string()),
    }
}

/// Every `(problem, solver, seed)` combination, in that nesting order,
/// computed in parallel on the current rayon pool.
pub fn run_suite(
    problems: &[ProblemInstance],
    solvers: &[SolverKind],
    seeds: &[u64],
    cfg: &SuiteConfig,
) -> Vec<RunRecord> {
    let jobs: Vec<(usize, SolverKind, u64)> = (0..problems.len())
        .flat_map(|p| solvers.iter().flat_map(move |&s| seeds.iter().map(move |&seed| (p, s, seed))))
        .collect();
    jobs.par_iter()
        .map(|&(p, s, seed)| {
            let r = run_one(&problems[p], s, seed, cfg);
            if let Some(e) = &r.error {
                log::warn!("{} on {} (seed {seed}) failed: {e}", s.id(), problems[p].name);
            }
            r
        })
        .collect()
}

/// Long noiseless run used as the best known value when a problem has none.
pub fn reference_value(problem: &ProblemInstance, budget: usize) -> f64 {
    if let Some(f) = problem.f_best {
        return f;
    }
    let cfg = SuiteConfig { budget: Some(budget), rho_end: 1e-10, ..SuiteConfig::default() };
    let r = run_one(problem, SolverKind::Noiseless, 0, &cfg);
    r.f_opt
}

pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("solver,problem,seed,nf,f0,f_opt,status,error\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{},\"{}\"\n",
            r.solver,
            r.problem,
            r.seed,
            r.nf,
            r.f0,
            r.f_opt,
            r.status,
            r.error.as_deref().unwrap_or("").replace('"', "'")
        ));
    }
    out
}

/// Long format, one row per evaluation.
pub fn histories_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("solver,problem,seed,eval,best_f\n");
    for r in records {
        for (i, v) in r.history.iter().enumerate() {
            out.push_str(&format!("{},{},{},{},{:e}\n", r.solver, r.problem, r.seed, i + 1, v));
        }
    }
    out
}

/// Row of the per-algorithm summary: evaluations, best value and whether
/// it is below `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub problem: String,
    pub seed: u64,
    pub nf: usize,
    pub f_opt: f64,
    pub solved: bool,
}

pub fn summary(records: &[RunRecord], threshold: f64) -> Vec<SummaryRow> {
    records
        .iter()
        .map(|r| SummaryRow {
            algorithm: r.solver.clone(),
            problem: r.problem.clone(),
            seed: r.seed,
            nf: r.nf,
            f_opt: r.f_opt,
            solved: r.error.is_none() && r.f_opt < threshold,
        })
        .collect()
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out =
        format!("{:<18} {:<14} {:>6} {:>8} {:>12} {:>4}\n", "Algorithm", "Problem", "Seed", "NF", "F_opt", "Flag");
    for r in rows {
        out.push_str(&format!(
            "{:<18} {:<14} {:>6} {:>8} {:>12.3e} {:>4}\n",
            r.algorithm,
            r.problem,
            r.seed,
            r.nf,
            r.f_opt,
            if r.solved { "Y" } else { "N" }
        ));
    }
    out
}
