//! Performance and sensitivity profiles.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::problems::ProblemInstance;
use crate::suite::{run_one, RunRecord, SolverKind, SuiteConfig};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProfileError {
    #[error("records do not cover solver {solver} on problem {problem}")]
    IncompleteGrid { solver: String, problem: String },
    #[error("no records")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Logarithmic grid of `points` values from 1 to `max`.
pub fn alpha_grid(max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![1.0];
    }
    let step = max.ln() / (points - 1) as f64;
    let mut g: Vec<f64> = (0..points).map(|i| (i as f64 * step).exp()).collect();
    g[points - 1] = max;
    g
}

pub fn default_alpha_grid() -> Vec<f64> {
    alpha_grid(64.0, 200)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub tau: f64,
    pub solvers: Vec<String>,
    pub problems: Vec<String>,
    /// Cost of each solver on each problem, `None` on failure. Indexed
    /// `[solver][problem]`.
    pub cost: Vec<Vec<Option<f64>>>,
    /// Ratio to the cheapest successful solver, `+inf` on failure.
    pub ratio: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// Fraction of problems with `ratio <= alpha`, per solver.
    pub curves: Vec<Vec<f64>>,
    /// Problems left out, with the reason.
    pub excluded: Vec<(String, String)>,
    /// Problems scored against the best value found by the solvers.
    pub substituted_best: Vec<String>,
}

impl ProfileTable {
    pub fn curve(&self, solver: &str) -> Option<&[f64]> {
        self.solvers.iter().position(|s| s == solver).map(|i| self.curves[i].as_slice())
    }

    /// `pi_s(alpha)` at an arbitrary `alpha`.
    pub fn value_at(&self, solver: &str, alpha: f64) -> Option<f64> {
        let i = self.solvers.iter().position(|s| s == solver)?;
        Some(fraction_within(&self.ratio[i], alpha))
    }

    pub fn curves_csv(&self) -> String {
        let mut out = format!("alpha,{}\n", self.solvers.join(","));
        for (j, a) in self.alpha.iter().enumerate() {
            let row: Vec<String> = self.curves.iter().map(|c| c[j].to_string()).collect();
            out.push_str(&format!("{a},{}\n", row.join(",")));
        }
        out
    }

    pub fn ratios_csv(&self) -> String {
        let mut out = String::from("solver,problem,cost,ratio\n");
        for (i, s) in self.solvers.iter().enumerate() {
            for (j, p) in self.problems.iter().enumerate() {
                let cost = self.cost[i][j].map(|c| c.to_string()).unwrap_or_default();
                out.push_str(&format!("{s},{p},{cost},{}\n", self.ratio[i][j]));
            }
        }
        out
    }
}

fn fraction_within(ratios: &[f64], alpha: f64) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    let hit = ratios.iter().filter(|&&r| r <= alpha * (1.0 + 1e-12)).count();
    hit as f64 / ratios.len() as f64
}

/// Builds ratios and curves from a cost table indexed `[solver][problem]`.
/// Costs below `floor` are raised to it before forming ratios.
pub fn profile_from_costs(
    tau: f64,
    solvers: Vec<String>,
    problems: Vec<String>,
    cost: Vec<Vec<Option<f64>>>,
    alpha: Vec<f64>,
    floor: f64,
) -> ProfileTable {
    let np = problems.len();
    let best: Vec<Option<f64>> =
        (0..np).map(|p| cost.iter().filter_map(|c| c[p]).map(|c| c.max(floor)).min_by(f64::total_cmp)).collect();
    let ratio: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| {
            row.iter()
                .zip(&best)
                .map(|(c, b)| match (c, b) {
                    (Some(c), Some(b)) => c.max(floor) / b,
                    _ => f64::INFINITY,
                })
                .collect()
        })
        .collect();
    let curves = ratio.iter().map(|r| alpha.iter().map(|&a| fraction_within(r, a)).collect()).collect();
    ProfileTable {
        tau,
        solvers,
        problems,
        cost,
        ratio,
        alpha,
        curves,
        excluded: Vec::new(),
        substituted_best: Vec::new(),
    }
}

/// How to score problems without a known best value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingBest {
    Exclude,
    /// Use the best value found by any run, and flag the problem.
    BestFound,
}

/// First evaluation count at which the run reaches accuracy `tau`.
pub fn evaluations_to_accuracy(record: &RunRecord, f_best: f64, tau: f64) -> Option<usize> {
    let span = f_best - record.f0;
    if !(span < 0.0) {
        return None;
    }
    record.history.iter().position(|&f| (f - record.f0) / span >= 1.0 - tau).map(|i| i + 1)
}

/// Performance profile over every `(problem, seed)` pair in `records`.
/// `best` holds best known values; other problems are handled per `missing`.
pub fn performance_profile(
    records: &[RunRecord],
    tau: f64,
    best: &HashMap<String, f64>,
    missing: MissingBest,
    alpha: Vec<f64>,
) -> Result<ProfileTable, ProfileError> {
    if records.is_empty() {
        return Err(ProfileError::Empty);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(ProfileError::InvalidParameter(format!("tau = {tau} outside [0, 1]")));
    }
    let mut solvers: Vec<String> = Vec::new();
    for r in records {
        if !solvers.contains(&r.solver) {
            solvers.push(r.solver.clone());
        }
    }
    let seeds_per_problem = {
        let mut m: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
        for r in records {
            let e = m.entry(r.problem.as_str()).or_default();
            if !e.contains(&r.seed) {
                e.push(r.seed);
            }
        }
        m
    };
    let mut problem_order: Vec<(String, u64)> = Vec::new();
    for r in records {
        let key = (r.problem.clone(), r.seed);
        if !problem_order.contains(&key) {
            problem_order.push(key);
        }
    }
    let lookup: HashMap<(&str, &str, u64), &RunRecord> =
        records.iter().map(|r| ((r.solver.as_str(), r.problem.as_str(), r.seed), r)).collect();

    let mut excluded = Vec::new();
    let mut substituted = Vec::new();
    let mut problems = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for (p, seed) in &problem_order {
        let runs: Vec<&RunRecord> = solvers
            .iter()
            .map(|s| {
                lookup
                    .get(&(s.as_str(), p.as_str(), *seed))
                    .copied()
                    .ok_or_else(|| ProfileError::IncompleteGrid { solver: s.clone(), problem: p.clone() })
            })
            .collect::<Result<_, _>>()?;
        let f_best = match best.get(p) {
            Some(&b) => b,
            None => match missing {
                MissingBest::Exclude => {
                    log::warn!("{p}: no best known value, excluded from the profile");
                    excluded.push((p.clone(), "no best known value".to_string()));
                    continue;
                }
                MissingBest::BestFound => {
                    if !substituted.contains(p) {
                        substituted.push(p.clone());
                    }
                    records.iter().filter(|r| &r.problem == p).map(|r| r.f_opt).fold(f64::INFINITY, f64::min)
                }
            },
        };
        if !(f_best < runs[0].f0) {
            excluded.push((p.clone(), "starting point already optimal".to_string()));
            continue;
        }
        let name = if seeds_per_problem[p.as_str()].len() > 1 { format!("{p}#{seed}") } else { p.clone() };
        problems.push(name);
        columns.push(runs.iter().map(|r| evaluations_to_accuracy(r, f_best, tau).map(|n| n as f64)).collect());
    }
    let cost: Vec<Vec<Option<f64>>> = (0..solvers.len()).map(|s| columns.iter().map(|c| c[s]).collect()).collect();
    let mut table = profile_from_costs(tau, solvers, problems, cost, alpha, 0.0);
    table.excluded = excluded;
    table.substituted_best = substituted;
    Ok(table)
}

/// `m` random permutations of `0..n`.
pub fn random_permutations(n: usize, m: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect()
}

pub fn permutation_matrix(perm: &[usize]) -> Vec<Vec<u8>> {
    let n = perm.len();
    perm.iter().map(|&j| (0..n).map(|c| u8::from(c == j)).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfStats {
    pub solver: String,
    pub problem: String,
    pub nf: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Every permuted run reached the accuracy.
    pub solved: bool,
}

pub fn mean_std(v: &[usize]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / m;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / m;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub table: ProfileTable,
    pub stats: Vec<NfStats>,
}

/// Which permutations to solve under.
#[derive(Debug, Clone)]
pub enum Permutations {
    Random {
        count: usize,
        seed: u64,
    },
    /// `count` copies of the identity.
    Identity {
        count: usize,
    },
    Explicit(Vec<Vec<usize>>),
}

/// Sensitivity profile: each solver solves `F(P_i x)` for every permutation
/// and the standard deviation of the evaluation counts replaces the cost.
/// Standard deviations below one evaluation count as one in the ratios.
pub fn sensitivity_profile(
    problems: &[ProblemInstance],
    solvers: &[SolverKind],
    perms: &Permutations,
    seed: u64,
    tau: f64,
    best: &HashMap<String, f64>,
    cfg: &SuiteConfig,
    alpha: Vec<f64>,
) -> Result<SensitivityResult, ProfileError> {
    let count = match perms {
        Permutations::Random { count, .. } | Permutations::Identity { count } => *count,
        Permutations::Explicit(v) => v.len(),
    };
    if count < 2 {
        return Err(ProfileError::InvalidParameter(format!("need at least 2 permutations, got {count}")));
    }
    let mut stats = Vec::new();
    let mut cost = vec![Vec::new(); solvers.len()];
    for (pi, p) in problems.iter().enumerate() {
        let list = match perms {
            Permutations::Random { count, seed: s } => {
                random_permutations(p.dimension, *count, s.wrapping_add(pi as u64))
            }
            Permutations::Identity { count } => vec![(0..p.dimension).collect(); *count],
            Permutations::Explicit(v) => v.clone(),
        };
        let f_best = best.get(&p.name).copied().or(p.f_best);
        for (si, &s) in solvers.iter().enumerate() {
            let runs: Vec<RunRecord> = list.par_iter().map(|perm| run_one(&p.permuted(perm), s, seed, cfg)).collect();
            let nf: Vec<usize> = runs.iter().map(|r| r.nf).collect();
            let (mean, std) = mean_std(&nf);
            let solved = match f_best {
                Some(b) => runs.iter().all(|r| r.error.is_none() && evaluations_to_accuracy(r, b, tau).is_some()),
                None => runs.iter().all(|r| r.error.is_none()),
            };
            cost[si].push(solved.then_some(std));
            stats.push(NfStats { solver: s.id().into(), problem: p.name.clone(), nf, mean, std, solved });
        }
    }
    let table = profile_from_costs(
        tau,
        solvers.iter().map(|s| s.id().to_string()).collect(),
        problems.iter().map(|p| p.name.clone()).collect(),
        cost,
        alpha,
        1.0,
    );
    Ok(SensitivityResult { table, stats })
}
