//! The subcommands. Each writes only below its output directory and returns
//! whether every run finished without error.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dfop::analysis::budget_audit;
use dfop::objective::TransformKind;
use dfop_bench::plot::{gnuplot_data, profile_chart, profile_series};
use dfop_bench::profile::{alpha_grid, Permutations};
use dfop_bench::suite::{histories_csv, record_from_trace, records_csv, reference_value, summary, summary_table};
use dfop_bench::{
    dfop_trace, performance_profile, problem_library, run_one, run_suite, schedule_for, sensitivity_profile,
    MissingBest, ProblemInstance, RunRecord, SolverKind,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::manifest::{Plan, ProfileSpec};

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().context("starting worker pool")
}

fn stem(problem: &str, solver: SolverKind, seed: u64) -> String {
    format!("{problem}_{}_s{seed}", solver.id())
}

fn is_private(kind: &TransformKind) -> bool {
    matches!(kind, TransformKind::AdditiveDp(_) | TransformKind::MixedDp(_))
}

/// Budgets for the trust-region runs under a noise mechanism, written as
/// `budgets/<problem>_<solver>_s<seed>.csv`.
fn write_budgets(plan: &Plan, jobs: &[(usize, SolverKind, u64)]) -> Result<usize> {
    let dir = plan.output().join("budgets");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let window = plan.manifest.audit.window;
    let results: Vec<Result<Option<(String, String)>>> = jobs
        .par_iter()
        .map(|&(p, s, seed)| {
            let problem = &plan.problems[p];
            let schedule = schedule_for(problem, s, seed, &plan.suite);
            if s == SolverKind::NelderMead || !is_private(&schedule.kind) {
                return Ok(None);
            }
            let trace = dfop_trace(problem, s, seed, &plan.suite)?;
            let ledger = budget_audit(&problem.spec(), &schedule, &trace, window)?;
            Ok(Some((format!("{}.csv", stem(&problem.name, s, seed)), ledger.to_csv())))
        })
        .collect();
    let mut written = 0;
    for r in results {
        if let Some((name, csv)) = r? {
            write(&dir, &name, &csv)?;
            written += 1;
        }
    }
    if written == 0 {
        log::warn!("audit requested but no run uses a noise mechanism");
    }
    Ok(written)
}

fn jobs(plan: &Plan) -> Vec<(usize, SolverKind, u64)> {
    (0..plan.problems.len())
        .flat_map(|p| plan.solvers.iter().flat_map(move |&s| plan.manifest.seeds.iter().map(move |&seed| (p, s, seed))))
        .collect()
}

fn write_summary(plan: &Plan, records: &[RunRecord]) -> Result<String> {
    let rows = summary(records, plan.manifest.threshold);
    let table = summary_table(&rows);
    write(plan.output(), "summary.txt", &table)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    write(plan.output(), "summary.csv", &String::from_utf8(w.into_inner()?)?)?;
    Ok(table)
}

/// Solves every `(problem, solver, seed)` and writes full traces.
pub fn solve(plan: &Plan) -> Result<bool> {
    fs::create_dir_all(plan.output()).with_context(|| format!("creating {}", plan.output().display()))?;
    let jobs = jobs(plan);
    let outcomes: Vec<(RunRecord, Option<dfop::SolverTrace>)> = pool(plan.manifest.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(p, s, seed)| {
                let problem = &plan.problems[p];
                if s == SolverKind::NelderMead {
                    return (run_one(problem, s, seed, &plan.suite), None);
                }
                match dfop_trace(problem, s, seed, &plan.suite) {
                    Ok(t) => (record_from_trace(problem, s, seed, t.clone()), Some(t)),
                    Err(e) => (RunRecord::failed(s.id(), problem, seed, e.to_string()), None),
                }
            })
            .collect()
    });
    let mut records = Vec::new();
    for ((p, s, seed), (record, trace)) in jobs.iter().zip(outcomes) {
        let name = stem(&plan.problems[*p].name, *s, *seed);
        match &trace {
            Some(t) => {
                write(plan.output(), &format!("{name}.trace.json"), &t.to_json())?;
                write(plan.output(), &format!("{name}.records.csv"), &t.records_csv())?;
            }
            None => write(plan.output(), &format!("{name}.run.json"), &serde_json::to_string_pretty(&record)?)?,
        }
        let x: Vec<String> = record.x_opt.iter().map(|v| format!("{v:.6e}")).collect();
        println!(
            "{} {} seed {}: status {}, NF {}, F_opt {:.6e}, x_opt [{}]{}",
            record.problem,
            record.solver,
            record.seed,
            record.status,
            record.nf,
            record.f_opt,
            x.join(", "),
            record.error.as_deref().map(|e| format!(", error: {e}")).unwrap_or_default()
        );
        records.push(record);
    }
    print!("{}", write_summary(plan, &records)?);
    if plan.manifest.audit.enabled {
        pool(plan.manifest.workers)?.install(|| write_budgets(plan, &jobs))?;
    }
    Ok(records.iter().all(|r| r.error.is_none()))
}

/// Best known value per problem: analytic where known, else a long
/// noiseless reference run when configured.
fn best_values(problems: &[ProblemInstance], profile: &ProfileSpec) -> BTreeMap<String, f64> {
    let refs: Vec<(String, Option<f64>)> = problems
        .par_iter()
        .map(|p| {
            let v = match (p.f_best, profile.reference_budget) {
                (Some(f), _) => Some(f),
                (None, Some(budget)) => Some(reference_value(p, budget)),
                (None, None) => None,
            };
            (p.name.clone(), v)
        })
        .collect();
    refs.into_iter().filter_map(|(n, v)| v.map(|v| (n, v))).collect()
}

fn tau_label(tau: f64) -> String {
    format!("{tau:e}")
}

/// Profile CSV, ratio CSV, SVG and gnuplot data for every tau.
fn write_profiles(
    dir: &Path,
    records: &[RunRecord],
    best: &BTreeMap<String, f64>,
    missing: MissingBest,
    profile: &ProfileSpec,
) -> Result<()> {
    let best: HashMap<String, f64> = best.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for &tau in &profile.taus {
        let alpha = alpha_grid(profile.alpha_max, profile.alpha_points);
        let table = performance_profile(records, tau, &best, missing, alpha)?;
        let t = tau_label(tau);
        write(dir, &format!("profile_tau{t}.csv"), &table.curves_csv())?;
        write(dir, &format!("ratios_tau{t}.csv"), &table.ratios_csv())?;
        write(dir, &format!("profile_tau{t}.svg"), &profile_chart(&table, "performance profile"))?;
        write(dir, &format!("profile_tau{t}.dat"), &gnuplot_data(&profile_series(&table)))?;
        for (p, why) in &table.excluded {
            log::warn!("tau {t}: {p} excluded ({why})");
        }
    }
    Ok(())
}

fn best_csv(best: &BTreeMap<String, f64>) -> String {
    let mut out = String::from("problem,f_best\n");
    for (p, v) in best {
        out.push_str(&format!("{p},{v:e}\n"));
    }
    out
}

/// Runs the suite and writes records, histories, summary and profiles.
pub fn bench(plan: &Plan) -> Result<bool> {
    let out = plan.output();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let profile = &plan.manifest.profile;
    let missing = profile.missing_best()?;
    let (records, best) = pool(plan.manifest.workers)?.install(|| {
        let records = run_suite(&plan.problems, &plan.solvers, &plan.manifest.seeds, &plan.suite);
        let best = best_values(&plan.problems, profile);
        (records, best)
    });
    write(out, "runs.csv", &records_csv(&records))?;
    write(out, "histories.csv", &histories_csv(&records))?;
    write(out, "best.csv", &best_csv(&best))?;
    print!("{}", write_summary(plan, &records)?);
    write_profiles(out, &records, &best, missing, profile)?;
    if let Some(sens) = &profile.sensitivity {
        let best_map: HashMap<String, f64> = best.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let result = pool(plan.manifest.workers)?.install(|| {
            sensitivity_profile(
                &plan.problems,
                &plan.solvers,
                &Permutations::Random { count: sens.permutations, seed: sens.seed },
                plan.manifest.seeds[0],
                sens.tau,
                &best_map,
                &plan.suite,
                alpha_grid(profile.alpha_max, profile.alpha_points),
            )
        })?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["solver", "problem", "mean_nf", "std_nf", "solved", "nf"])?;
        for s in &result.stats {
            let nf: Vec<String> = s.nf.iter().map(|v| v.to_string()).collect();
            w.write_record([
                s.solver.clone(),
                s.problem.clone(),
                s.mean.to_string(),
                s.std.to_string(),
                s.solved.to_string(),
                nf.join(" "),
            ])?;
        }
        write(out, "sensitivity_stats.csv", &String::from_utf8(w.into_inner()?)?)?;
        write(out, "sensitivity_profile.csv", &result.table.curves_csv())?;
        write(out, "sensitivity_profile.svg", &profile_chart(&result.table, "sensitivity profile"))?;
    }
    if plan.manifest.audit.enabled {
        pool(plan.manifest.workers)?.install(|| write_budgets(plan, &jobs(plan)))?;
    }
    Ok(records.iter().all(|r| r.error.is_none()))
}

/// Budgets only.
pub fn audit(plan: &Plan) -> Result<bool> {
    fs::create_dir_all(plan.output()).with_context(|| format!("creating {}", plan.output().display()))?;
    let n = pool(plan.manifest.workers)?.install(|| write_budgets(plan, &jobs(plan)))?;
    println!("wrote {n} budget files to {}", plan.output().join("budgets").display());
    Ok(true)
}

#[derive(Deserialize)]
struct RunRow {
    solver: String,
    problem: String,
    seed: u64,
    nf: usize,
    f0: f64,
    f_opt: f64,
    status: String,
    error: String,
}

#[derive(Deserialize)]
struct HistoryRow {
    solver: String,
    problem: String,
    seed: u64,
    best_f: f64,
}

#[derive(Deserialize)]
struct BestRow {
    problem: String,
    f_best: f64,
}

/// Run records rebuilt from `runs.csv` and `histories.csv` of a bench run.
pub fn read_runs(dir: &Path) -> Result<(Vec<RunRecord>, BTreeMap<String, f64>)> {
    let open = |name: &str| -> Result<csv::Reader<fs::File>> {
        let path = dir.join(name);
        csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))
    };
    let mut histories: HashMap<(String, String, u64), Vec<f64>> = HashMap::new();
    for row in open("histories.csv")?.deserialize() {
        let row: HistoryRow = row.context("histories.csv")?;
        histories.entry((row.solver, row.problem, row.seed)).or_default().push(row.best_f);
    }
    let mut records = Vec::new();
    for row in open("runs.csv")?.deserialize() {
        let row: RunRow = row.context("runs.csv")?;
        let history = histories.remove(&(row.solver.clone(), row.problem.clone(), row.seed)).unwrap_or_default();
        if history.len() != row.nf {
            anyhow::bail!(
                "{} on {} seed {}: {} history rows for NF {}",
                row.solver,
                row.problem,
                row.seed,
                history.len(),
                row.nf
            );
        }
        records.push(RunRecord {
            solver: row.solver,
            problem: row.problem,
            seed: row.seed,
            history,
            nf: row.nf,
            f0: row.f0,
            f_opt: row.f_opt,
            x_opt: Vec::new(),
            status: row.status,
            error: (!row.error.is_empty()).then_some(row.error),
        });
    }
    let mut best = BTreeMap::new();
    if dir.join("best.csv").exists() {
        for row in open("best.csv")?.deserialize() {
            let row: BestRow = row.context("best.csv")?;
            best.insert(row.problem, row.f_best);
        }
    }
    Ok((records, best))
}

/// Recomputes profiles from the CSV files of an earlier bench run.
pub fn profile(dir: &Path, output: Option<PathBuf>, spec: &ProfileSpec) -> Result<bool> {
    let (records, best) = read_runs(dir)?;
    let out = output.unwrap_or_else(|| dir.to_path_buf());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_profiles(&out, &records, &best, spec.missing_best()?, spec)?;
    println!("profiles for {} runs written to {}", records.len(), out.display());
    Ok(true)
}

/// Name, dimension, best known value and default transformation of every
/// registered problem.
pub fn list_problems() -> String {
    let mut out = format!("{:<14} {:>4} {:>10}  {}\n", "name", "n", "f_best", "transformation");
    for p in problem_library() {
        let kind = match &p.transform {
            TransformKind::Identity => "identity",
            TransformKind::Translation { .. } => "translation",
            TransformKind::Linear { .. } => "linear",
            TransformKind::AdditiveDp(_) => "additive laplace",
            TransformKind::MixedDp(_) => "mixed laplace/uniform",
            TransformKind::CustomTable(_) | TransformKind::Custom(_) => "custom",
        };
        let best = p.f_best.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!("{:<14} {:>4} {:>10}  {}\n", p.name, p.dimension, best, kind));
    }
    out
}
