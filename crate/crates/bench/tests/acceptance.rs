//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use dfop::analysis::{model_from_values, transform_space, translation_equivalence_check};
use dfop::model::{
    build_initial_points, solve_initial_model, update_model, InterpolationSet, KktSystem, QuadraticModel,
};
use dfop::objective::{ObjectiveSpec, TransformKind, TransformSchedule};
use dfop::privacy::{
    audit_budgets, laplace_pdf, sample_laplace, BudgetSource, IterateValues, LaplaceParams, MixParams, UniformParams,
};
use dfop::rng::CounterRng;
use dfop::subproblems::{trsapp, TrustRegion};
use dfop::{minimize, Point, Schedule, SolverConfig};
use dfop_bench::problems::{self, mixed_mechanism, quartic_noise_configs, quartic_problem, sphere_family};
use dfop_bench::profile::{default_alpha_grid, performance_profile, MissingBest};
use dfop_bench::suite::{reference_value, run_one, run_suite, SolverKind, SuiteConfig};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(name: &str, pass: bool, detail: String) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Perturbed copy of the initial stencil around a random base.
fn random_set(rng: &mut ChaCha8Rng, n: usize, m: usize) -> InterpolationSet {
    let base = uniform_vec(rng, n, -1.0, 1.0);
    let rho = rng.random_range(0.3..1.0);
    let mut pts = build_initial_points(&base, rho, m).unwrap();
    for p in pts.iter_mut() {
        for v in p.iter_mut() {
            *v += rho * rng.random_range(-0.25..0.25);
        }
    }
    let values = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    InterpolationSet::new(pts, base, values).unwrap()
}

/// The interpolation KKT matrix assembled entry by entry.
fn dense_w(points: &[DVector<f64>], base: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = (points.len(), base.len());
    let ys: Vec<DVector<f64>> = points.iter().map(|p| p - base).collect();
    let mut w = DMatrix::zeros(m + n + 1, m + n + 1);
    for i in 0..m {
        for j in 0..m {
            w[(i, j)] = 0.5 * ys[i].dot(&ys[j]).powi(2);
        }
        w[(i, m)] = 1.0;
        w[(m, i)] = 1.0;
        for l in 0..n {
            w[(i, m + 1 + l)] = ys[i][l];
            w[(m + 1 + l, i)] = ys[i][l];
        }
    }
    w
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn kkt_updates_match_dense_solve() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let n = 2 + inst % 2;
        let m = 2 * n + 1;
        let mut set = random_set(&mut rng, n, m);
        let mut kkt = KktSystem::build(&set).unwrap();
        let q = solve_initial_model(&set, &kkt);
        let t = rng.random_range(0..m);
        loop {
            let x = set.x_opt() + uniform_vec(&mut rng, n, -0.8, 0.8);
            let (mut s2, mut k2) = (set.clone(), kkt.clone());
            if k2.update_h(&mut s2, t, &x, 1e-8).is_ok() {
                set = s2;
                kkt = k2;
                break;
            }
        }
        let r: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q2 = update_model(&q, &kkt, &set, &r, t).unwrap();

        let w = dense_w(set.points(), set.base());
        let mut rhs = DVector::zeros(m + n + 1);
        rhs.rows_mut(0, m).copy_from_slice(&r);
        let sol = w.lu().solve(&rhs).unwrap();
        let base = set.base();
        let c = q.value(base) + sol[m];
        let g = q.gradient(base) + sol.rows(m + 1, n);
        let mut hess = q.hessian();
        for j in 0..m {
            let y = set.point(j) - base;
            hess.ger(sol[j], &y, &y, 1.0);
        }
        worst = worst.max(rel_err(q2.value(base), c));
        worst = worst.max((q2.gradient(base) - &g).amax() / g.amax().max(1.0));
        worst = worst.max((q2.hessian() - &hess).amax() / hess.amax().max(1.0));
    }
    let el = start.elapsed();
    report(
        "model updates match a dense KKT solve",
        worst <= 1e-8 && within(el, 10),
        format!("max relative error {worst:.2e} over 100 instances in {el:.2?}"),
    );
}

#[test]
fn inverse_stays_accurate_over_replacements() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut set = random_set(&mut rng, 3, 7);
    let mut kkt = KktSystem::build(&set).unwrap();
    let mut done = 0;
    while done < 50 {
        let t = rng.random_range(0..7);
        let x = uniform_vec(&mut rng, 3, -1.5, 1.5);
        let (mut s2, mut k2) = (set.clone(), kkt.clone());
        if k2.update_h(&mut s2, t, &x, 1e-6).is_ok() {
            set = s2;
            kkt = k2;
            done += 1;
        }
    }
    let prod = dense_w(set.points(), set.base()) * kkt.h();
    let err = (prod - DMatrix::identity(11, 11)).amax();
    let el = start.elapsed();
    report(
        "inverse KKT matrix after 50 replacements",
        err <= 1e-6 && within(el, 5),
        format!("max |W H - I| = {err:.2e} in {el:.2?}"),
    );
}

#[test]
fn update_coefficients_satisfy_side_conditions() {
    let spec = ObjectiveSpec::private_only("chrosen6", 6, problems::chrosen);
    let schedule = TransformSchedule::new(mixed_mechanism(1.0), 5);
    let cfg = SolverConfig { rho_beg: 0.5, rho_end: 1e-9, max_evals: 6000, ..SolverConfig::default() };
    let trace = minimize(spec, schedule, &Point::new(vec![-0.5; 6]).unwrap(), &cfg).unwrap();
    let mut worst = 0.0f64;
    for a in &trace.update_audits {
        let s = a.scale.max(f64::MIN_POSITIVE);
        worst = worst.max(a.lambda_sum / s).max(a.lambda_moment / s);
    }
    let iterations = trace.records.len();
    report(
        "update coefficients sum to zero with zero first moment",
        worst <= 1e-9 && iterations >= 200 && trace.update_audits.len() >= 200,
        format!(
            "worst scaled violation {worst:.2e} over {} updates, {iterations} iterations",
            trace.update_audits.len()
        ),
    );
}

#[test]
fn translated_objective_gives_identical_run() {
    let spec = ObjectiveSpec::private_only("chrosen5", 5, problems::chrosen);
    let cfg = SolverConfig { rho_beg: 0.5, rho_end: 1e-6, max_evals: 2000, ..SolverConfig::default() };
    let x0 = Point::new(vec![-0.5; 5]).unwrap();
    let rep = translation_equivalence_check(&spec, Schedule::affine(0.0, 1.0), &x0, &cfg).unwrap();
    report(
        "translation by k leaves iterates unchanged and shifts constants by k",
        rep.same_path
            && rep.max_iterate_deviation <= 1e-10
            && rep.max_constant_deviation <= 1e-9
            && rep.compared_models > 0,
        format!(
            "paths {}, iterate deviation {:.2e} and constant deviation {:.2e} over {} paired models before that",
            rep.diverged_at.map_or("agree throughout".into(), |k| format!("split at k = {k}")),
            rep.max_iterate_deviation,
            rep.max_constant_deviation,
            rep.compared_models
        ),
    );
}

#[test]
fn classical_path_is_identical_without_transformation() {
    let cases: Vec<(ObjectiveSpec, Vec<f64>)> = vec![
        (ObjectiveSpec::private_only("chrosen5", 5, problems::chrosen), vec![-0.5; 5]),
        (ObjectiveSpec::private_only("rosenbrock4", 4, problems::rosenbrock), vec![-1.2, 1.0, -1.2, 1.0]),
        (ObjectiveSpec::private_only("arwhead5", 5, problems::arwhead), vec![1.5; 5]),
        (ObjectiveSpec::private_only("tridia6", 6, problems::tridia), vec![1.0; 6]),
        (quartic_problem(TransformKind::Identity).spec(), vec![10.0; 10]),
    ];
    let mut identical = 0;
    for (spec, x0) in &cases {
        let x0 = Point::new(x0.clone()).unwrap();
        let base = SolverConfig { rho_end: 1e-7, max_evals: 3000, ..SolverConfig::default() };
        let a = minimize(spec.clone(), TransformSchedule::identity(), &x0, &base).unwrap();
        let b = minimize(spec.clone(), TransformSchedule::identity(), &x0, &SolverConfig { newuoa_mode: true, ..base })
            .unwrap();
        // Debug output compares NaN ratios as equal and prints floats exactly
        if format!("{a:?}") == format!("{b:?}") {
            identical += 1;
        }
    }
    report(
        "one-hot and full residual paths agree under the identity",
        identical == cases.len(),
        format!("{identical}/{} traces bitwise identical", cases.len()),
    );
}

#[test]
fn noisy_quartic_solved_only_with_resampling() {
    let start = Instant::now();
    let cfg_for = |kind: TransformKind| SuiteConfig {
        budget: Some(3000),
        rho_beg: 1.0,
        rho_end: 1e-8,
        transform: Some(kind),
        m: None,
    };
    let jobs: Vec<(usize, SolverKind, u64)> = (0..6)
        .flat_map(|c| {
            [SolverKind::Dfop, SolverKind::DfopNewuoaMode]
                .into_iter()
                .flat_map(move |s| (0..10).map(move |seed| (c, s, seed)))
        })
        .collect();
    let configs = quartic_noise_configs();
    let problem = quartic_problem(TransformKind::Identity);
    let results: Vec<(usize, SolverKind, f64)> = jobs
        .par_iter()
        .map(|&(c, s, seed)| (c, s, run_one(&problem, s, seed, &cfg_for(configs[c].1.clone())).f_opt))
        .collect();
    let el = start.elapsed();
    let mut pass = within(el, 120);
    let mut parts = Vec::new();
    for (c, (name, _)) in configs.iter().enumerate() {
        let solved = |s: SolverKind| results.iter().filter(|r| r.0 == c && r.1 == s && r.2 <= 1e-3).count();
        let (d, n) = (solved(SolverKind::Dfop), 10 - solved(SolverKind::DfopNewuoaMode));
        pass &= d >= 8 && n >= 7;
        parts.push(format!("{name}: dfop Y {d}/10, classical N {n}/10"));
    }
    report("noisy quartic benchmark", pass, format!("{} in {el:.2?}", parts.join("; ")));
}

#[test]
fn profile_under_mixed_noise_tracks_noiseless() {
    let start = Instant::now();
    let probs = sphere_family();
    let cfg = SuiteConfig { transform: Some(mixed_mechanism(100.0)), ..SuiteConfig::default() };
    let recs = run_suite(&probs, &SolverKind::ALL, &[0], &cfg);
    let refs: Vec<f64> = probs.par_iter().map(|p| reference_value(p, 20_000)).collect();
    let mut best = HashMap::new();
    for (p, r) in probs.iter().zip(refs) {
        let found = recs.iter().filter(|x| x.problem == p.name).map(|x| x.f_opt).fold(f64::INFINITY, f64::min);
        best.insert(p.name.clone(), r.min(found));
    }
    let table = performance_profile(&recs, 1e-5, &best, MissingBest::Exclude, default_alpha_grid()).unwrap();
    let dfop = table.curve("dfop").unwrap();
    let classical = table.curve("dfop-newuoa-mode").unwrap();
    let noiseless = table.curve("newuoa-n").unwrap();
    let dominates = dfop.iter().zip(classical).all(|(a, b)| a >= b);
    let gap = table
        .alpha
        .iter()
        .zip(dfop.iter().zip(noiseless))
        .filter(|(a, _)| **a >= 4.0)
        .map(|(_, (d, n))| (d - n).abs())
        .fold(0.0, f64::max);
    let el = start.elapsed();
    report(
        "performance profile with mixed noise",
        dominates && gap <= 0.15 && within(el, 600),
        format!(
            "{} problems, dfop >= classical everywhere: {dominates}, max gap to noiseless for alpha >= 4: {gap:.3}, pi(4): dfop {:.2} classical {:.2} noiseless {:.2}, {el:.2?}",
            table.problems.len(),
            table.value_at("dfop", 4.0).unwrap(),
            table.value_at("dfop-newuoa-mode", 4.0).unwrap(),
            table.value_at("newuoa-n", 4.0).unwrap(),
        ),
    );
}

#[test]
fn privacy_budget_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let coef = rng.random_range(0.5..200.0);
        let c = rng.random_range(0.1..100.0);
        let window = rng.random_range(2..8);
        let lap = LaplaceParams::new(Schedule::power_law(coef, -1.0), c).unwrap();
        let mix = MixParams::new(lap, UniformParams { halfwidth: Schedule::power_law(1.0, -1.0) }, 0.5).unwrap();
        let it: Vec<IterateValues> = (1..=40)
            .map(|k| IterateValues {
                k,
                h: rng.random_range(-5.0..5.0),
                fh: rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            })
            .collect();
        let ledger = audit_budgets(BudgetSource::Mixed(&mix), 9, &it, window).unwrap();
        for (idx, rec) in ledger.records().iter().enumerate() {
            let end = idx + 1;
            let start = (end + 1).saturating_sub(window);
            let mut gs = 0.0f64;
            let mut lr = 0.0f64;
            for j in start..end {
                gs = gs.max((it[j].h - it[j + 1].h).abs());
                lr = lr.max((it[j + 1].fh.abs() / it[j].fh.abs()).ln().abs());
            }
            let expect = gs / ((coef / it[end].k as f64) * c) + lr;
            worst = worst.max(rel_err(rec.eps_total, expect));
        }
    }
    let mut ratio_excess = f64::NEG_INFINITY;
    for b in [0.1, 1.0, 7.5] {
        for mult in [0.1, 1.0, 5.0] {
            let shift = mult * b;
            for i in 0..10_000 {
                let s = -10.0 * b + 20.0 * b * i as f64 / 9_999.0;
                let ratio = laplace_pdf(b, s) / laplace_pdf(b, s - shift);
                ratio_excess = ratio_excess.max(ratio - ((shift / b).exp() + 1e-12));
            }
        }
    }
    report(
        "budget sums and density ratio bound",
        worst <= 1e-12 && ratio_excess <= 0.0,
        format!("max relative budget error {worst:.2e}, max density ratio excess {ratio_excess:.2e}"),
    );
}

#[test]
fn additive_mechanism_is_empirically_private() {
    let start = Instant::now();
    let (gs, c, eps) = (1.0, 1.0, 1.0);
    let b = gs / (c * eps);
    let samples = 100_000u64;
    let draw = |seed: u64, h: f64| -> Vec<f64> {
        let rng = CounterRng::new(seed);
        (1..=samples).map(|k| h + c * sample_laplace(b, &rng, k, 0).unwrap()).collect()
    };
    let a = draw(1, 0.0);
    let bb = draw(2, gs);
    let (lo, width, bins) = (-12.0, 0.25, 100usize);
    let hist = |v: &[f64]| {
        let mut h = vec![0u64; bins];
        for &x in v {
            let i = ((x - lo) / width).floor();
            if i >= 0.0 && (i as usize) < bins {
                h[i as usize] += 1;
            }
        }
        h
    };
    let (ha, hb) = (hist(&a), hist(&bb));
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..bins {
        let (x, y) = (ha[i] as f64, hb[i] as f64);
        if x < 500.0 || y < 500.0 {
            continue;
        }
        checked += 1;
        let sigma = (1.0 / x + 1.0 / y).sqrt();
        let excess = (x / y).ln().abs() - eps;
        worst = worst.max(excess / sigma);
        if excess > 3.0 * sigma {
            violations += 1;
        }
    }
    let el = start.elapsed();
    report(
        "histogram ratio of the additive mechanism",
        violations == 0 && checked > 0 && within(el, 10),
        format!("{checked} bins checked, {violations} beyond 3 sigma, worst {worst:.2} sigma, {el:.2?}"),
    );
}

/// Exact trust-region minimizer through the secular equation; returns the
/// step and the multiplier.
fn exact_trust_region(b: &DMatrix<f64>, g: &DVector<f64>, delta: f64) -> (DVector<f64>, f64) {
    let n = g.len();
    let eig = SymmetricEigen::new(b.clone());
    let lmin = eig.eigenvalues.min();
    let step = |w: f64| -> DVector<f64> { -(b + DMatrix::identity(n, n) * w).lu().solve(g).unwrap() };
    if lmin > 0.0 {
        let d = step(0.0);
        if d.norm() <= delta {
            return (d, 0.0);
        }
    }
    let mut lo = (-lmin).max(0.0);
    let mut hi = lo + g.norm() / delta + b.norm() + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if step(mid).norm() > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (step(hi), hi)
}

#[test]
fn transform_space_keeps_trust_region_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let (n, m) = (2, 5);
    let mut worst = 0.0f64;
    let mut min_dim = usize::MAX;
    let mut instances = 0;
    while instances < 20 {
        let mut set = random_set(&mut rng, n, m);
        let a = uniform_vec(&mut rng, 3, -1.0, 1.0);
        let vals: Vec<f64> = set
            .points()
            .iter()
            .map(|p| (p[0] - a[0]).powi(2) + 2.0 * (p[1] - a[1]).powi(2) + a[2] * p[0] * p[1] + 0.3 * p[0].powi(3))
            .collect();
        set.set_values(vals).unwrap();
        let kkt = KktSystem::build(&set).unwrap();
        let q_prev = QuadraticModel::explicit(
            set.base().clone(),
            rng.random_range(-1.0..1.0),
            uniform_vec(&mut rng, n, -1.0, 1.0),
            DMatrix::from_diagonal(&uniform_vec(&mut rng, n, 0.5, 2.0)),
        );
        let delta = rng.random_range(0.1..1.0);
        let tr = TrustRegion::new(set.x_opt().clone(), delta, 0.1 * delta).unwrap();
        let q = model_from_values(&q_prev, &kkt, &set, set.values());
        let (d_star, _) = exact_trust_region(&q.hessian(), &q.gradient(&tr.center), delta);
        let sol = transform_space(&kkt, &set, &q_prev, &d_star, &tr).unwrap();
        if sol.curvature_margin <= 1e-6 {
            // hard case: the minimizer is not unique, nothing to preserve
            continue;
        }
        instances += 1;
        min_dim = min_dim.min(sol.basis.len());
        for _ in 0..5 {
            let comb: Vec<f64> = (0..sol.basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = sol.sample(&kkt, &set, &comb);
            let q2 = model_from_values(&q_prev, &kkt, &set, &v);
            let (d2, _) = exact_trust_region(&q2.hessian(), &q2.gradient(&tr.center), delta);
            worst = worst.max((d2 - &d_star).norm());
        }
    }
    report(
        "alternative value vectors keep the trust-region step",
        worst <= 1e-6 && min_dim >= m - n,
        format!("max step change {worst:.2e}, smallest null space dimension {min_dim}"),
    );
}

#[test]
fn subproblem_steps_are_near_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..100 {
        let th = rng.random_range(0.0..PI);
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let eig = DMatrix::from_diagonal(&uniform_vec(&mut rng, 2, 0.05, 10.0));
        let b = &rot * eig * rot.transpose();
        let g = uniform_vec(&mut rng, 2, -3.0, 3.0);
        let delta = rng.random_range(0.05..3.0);
        let q = QuadraticModel::explicit(DVector::zeros(2), 0.0, g, b);
        let center = DVector::zeros(2);
        let tr = TrustRegion::new(center.clone(), delta, 0.1 * delta).unwrap();
        let step = trsapp(&q, &tr);
        let achieved = q.value(&center) - q.value(&step.d);
        let mut grid_best = 0.0f64;
        for i in 1..=100 {
            let r = delta * i as f64 / 100.0;
            for j in 0..100 {
                let a = 2.0 * PI * j as f64 / 100.0;
                let d = DVector::from_vec(vec![r * a.cos(), r * a.sin()]);
                grid_best = grid_best.max(q.value(&center) - q.value(&d));
            }
        }
        worst_gap = worst_gap.max(grid_best - achieved);
        assert!(step.d.norm() <= delta * (1.0 + 1e-10));
    }
    let spec = ObjectiveSpec::private_only("rosenbrock4", 4, problems::rosenbrock);
    let schedule = TransformSchedule::new(quartic_noise_configs()[4].1.clone(), 3);
    let cfg = SolverConfig { rho_end: 1e-8, max_evals: 4000, ..SolverConfig::default() };
    let trace = minimize(spec, schedule, &Point::new(vec![-1.2, 1.0, -1.2, 1.0]).unwrap(), &cfg).unwrap();
    let cauchy_failures =
        trace.step_audits.iter().filter(|a| a.predicted_reduction < a.cauchy_bound() * (1.0 - 1e-9) - 1e-15).count();
    report(
        "subproblem reduction against a grid and the Cauchy bound",
        worst_gap <= 1e-6 && cauchy_failures == 0 && !trace.step_audits.is_empty(),
        format!(
            "grid optimum exceeds achieved reduction by at most {worst_gap:.2e}; {cauchy_failures}/{} solver steps below the Cauchy bound",
            trace.step_audits.len()
        ),
    );
}
