//! Diagnostics of how transformations move the solutions of the model and
//! of the objective, and the set of value vectors that leave the
//! trust-region minimizer of the model unchanged.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DfoError, Result};
use crate::model::{InterpolationSet, KktSystem, QuadraticModel};
use crate::objective::{ObjectiveSpec, OverrideTable, TransformKind, TransformSchedule};
use crate::point::{Point, PointKey};
use crate::privacy::{audit_budgets, BudgetLedger, BudgetSource, IterateValues};
use crate::schedule::Schedule;
use crate::solver::{minimize, ModelSnapshot, SolverConfig, SolverTrace, StepKind};
use crate::subproblems::TrustRegion;

/// Step norms of the model minimizers, one per trust-region iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub k: Vec<u64>,
    pub model_shift: Vec<f64>,
    /// Trust-region radius each step was computed for.
    pub radius: Vec<f64>,
    pub solution_shift: Option<f64>,
}

/// `||d_k||` of every trust-region step in the trace.
pub fn model_solution_shift(trace: &SolverTrace) -> ShiftReport {
    let mut r = ShiftReport { k: Vec::new(), model_shift: Vec::new(), radius: Vec::new(), solution_shift: None };
    for rec in &trace.records {
        if matches!(rec.kind, StepKind::TrustRegion | StepKind::Short) {
            r.k.push(rec.k);
            r.model_shift.push(rec.step_norm);
            r.radius.push(rec.step_radius);
        }
    }
    r
}

/// Objective with a known list of local minimizers, searched for other
/// minimizers inside `[lower, upper]^n`.
#[derive(Clone)]
pub struct AnalyticProblem {
    pub name: String,
    pub dimension: usize,
    pub objective: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub minimizers: Option<Vec<Vec<f64>>>,
    pub lower: f64,
    pub upper: f64,
}

/// A transformation `F -> T(F)` of a whole function.
#[derive(Clone)]
pub enum FunctionTransform {
    Identity,
    /// `scale * F + shift`; monotonic when `scale > 0`.
    Linear {
        scale: f64,
        shift: f64,
    },
    /// `(x, F(x)) -> T(F)(x)`, free to create or destroy minimizers.
    Synthetic(Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>),
}

/// Sum of distances between the ordered local minimizers of `F` and of
/// `T(F)`; infinite when their numbers differ.
pub fn solution_shift(problem: &AnalyticProblem, transform: &FunctionTransform) -> Result<f64> {
    let Some(known) = &problem.minimizers else {
        return Err(DfoError::Unsupported(format!("{} has no analytic minimizer list", problem.name)));
    };
    let mut before: Vec<Vec<f64>> = known.clone();
    sort_points(&mut before);
    match transform {
        FunctionTransform::Identity => Ok(0.0),
        FunctionTransform::Linear { scale, .. } if *scale > 0.0 => Ok(0.0),
        FunctionTransform::Linear { scale, .. } => {
            Err(DfoError::InvalidParameter(format!("linear transform needs a positive scale, got {scale}")))
        }
        FunctionTransform::Synthetic(t) => {
            let f = problem.objective.clone();
            let t = t.clone();
            let g = move |x: &[f64]| t(x, f(x));
            let mut after = local_minimizers(&g, problem.dimension, problem.lower, problem.upper)?;
            sort_points(&mut after);
            if after.len() != before.len() {
                return Ok(f64::INFINITY);
            }
            Ok(before
                .iter()
                .zip(&after)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
                .sum())
        }
    }
}

fn sort_points(v: &mut [Vec<f64>]) {
    v.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    for _ in 0..200 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - gr * (b - a);
        d = a + gr * (b - a);
        if (b - a).abs() < 1e-12 * (1.0 + a.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Grid search plus local refinement for interior local minimizers in one
/// or two dimensions.
fn local_minimizers(f: &dyn Fn(&[f64]) -> f64, n: usize, lo: f64, hi: f64) -> Result<Vec<Vec<f64>>> {
    let mut found: Vec<Vec<f64>> = Vec::new();
    let tol = 1e-6 * (hi - lo);
    let push = |p: Vec<f64>, found: &mut Vec<Vec<f64>>| {
        if !found.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < tol * 10.0)) {
            found.push(p);
        }
    };
    match n {
        1 => {
            let steps = 4000;
            let h = (hi - lo) / steps as f64;
            let v: Vec<f64> = (0..=steps).map(|i| f(&[lo + i as f64 * h])).collect();
            for i in 1..steps {
                if v[i] <= v[i - 1] && v[i] < v[i + 1] {
                    let x = golden_min(|t| f(&[t]), lo + (i - 1) as f64 * h, lo + (i + 1) as f64 * h);
                    push(vec![x], &mut found);
                }
            }
        }
        2 => {
            let steps = 400;
            let h = (hi - lo) / steps as f64;
            let at = |i: usize, j: usize| f(&[lo + i as f64 * h, lo + j as f64 * h]);
            let grid: Vec<Vec<f64>> = (0..=steps).map(|i| (0..=steps).map(|j| at(i, j)).collect()).collect();
            for i in 1..steps {
                for j in 1..steps {
                    let c = grid[i][j];
                    let mut is_min = true;
                    for (di, dj) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                        let o = grid[(i as i64 + di) as usize][(j as i64 + dj) as usize];
                        // strict against later neighbours, weak against earlier ones
                        if o < c || (o == c && (di, dj) > (0, 0)) {
                            is_min = false;
                            break;
                        }
                    }
                    if is_min {
                        let mut p = [lo + i as f64 * h, lo + j as f64 * h];
                        for _ in 0..30 {
                            let q = p;
                            p[0] = golden_min(|t| f(&[t, p[1]]), p[0] - h, p[0] + h);
                            p[1] = golden_min(|t| f(&[p[0], t]), p[1] - h, p[1] + h);
                            if (p[0] - q[0]).abs() + (p[1] - q[1]).abs() < 1e-12 {
                                break;
                            }
                        }
                        push(p.to_vec(), &mut found);
                    }
                }
            }
        }
        _ => {
            return Err(DfoError::Unsupported(format!("minimizer search in dimension {n}")));
        }
    }
    Ok(found)
}

/// Value vectors on the interpolation set whose model keeps `d*` as its
/// trust-region minimizer: `particular_values + span(basis)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpaceSolution {
    pub particular_values: Vec<f64>,
    pub basis: Vec<DVector<f64>>,
    pub omega: f64,
    /// Smallest eigenvalue of `hess Q + omega I` for the particular values.
    pub curvature_margin: f64,
    /// Coefficient matrix of the linear system in the value increments.
    pub coefficients: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl TransformSpaceSolution {
    /// `particular_values + sum_i c_i basis_i`, with the combination scaled
    /// down so that the Hessian change stays below half the curvature
    /// margin and `d*` remains the unique minimizer.
    pub fn sample(&self, kkt: &KktSystem, set: &InterpolationSet, combination: &[f64]) -> Vec<f64> {
        let m = set.m();
        let mut u = DVector::zeros(m);
        for (c, b) in combination.iter().zip(&self.basis) {
            u.axpy(*c, b, 1.0);
        }
        let (lambda, _, _) = kkt.coefficients(u.as_slice());
        let mut dh = DMatrix::zeros(set.n(), set.n());
        for j in 0..m {
            dh.ger(lambda[j], &set.y(j), &set.y(j), 1.0);
        }
        let norm = dh.norm();
        let scale = if norm > 0.5 * self.curvature_margin { 0.5 * self.curvature_margin / norm } else { 1.0 };
        self.particular_values.iter().zip(u.iter()).map(|(p, v)| p + scale * v).collect()
    }

    /// Overrides for one iteration of a custom-table transformation.
    pub fn to_override_table(&self, set: &InterpolationSet, k: u64, values: &[f64]) -> OverrideTable {
        let mut table = OverrideTable::new();
        let entry = table.entry(k).or_default();
        for (p, v) in set.points().iter().zip(values) {
            entry.insert(PointKey::of(p), *v);
        }
        table
    }
}

/// Model with the values `values` on `set`, built as `q_prev` plus the least
/// Frobenius norm correction.
pub fn model_from_values(
    q_prev: &QuadraticModel,
    kkt: &KktSystem,
    set: &InterpolationSet,
    values: &[f64],
) -> QuadraticModel {
    let mut q = q_prev.clone();
    let r: Vec<f64> = set.points().iter().zip(values).map(|(p, v)| v - q_prev.value(p)).collect();
    let (lambda, c, g) = kkt.solve(set, &r);
    let mut d = QuadraticModel::zero(set);
    d.add_coefficients(&lambda, c, &g);
    // fold the correction into an explicit model so the implicit slots of
    // q_prev need not match the set
    let base = q.base().clone();
    q = QuadraticModel::explicit(
        base.clone(),
        q.value(&base) + d.value(&base),
        q.gradient(&base) + d.gradient(&base),
        q.hessian() + d.hessian(),
    );
    q
}

/// Builds the linear system whose solutions are the value vectors that keep
/// `d_star` as the trust-region minimizer, from `set.values()` as the
/// reference values.
pub fn transform_space(
    kkt: &KktSystem,
    set: &InterpolationSet,
    q_prev: &QuadraticModel,
    d_star: &DVector<f64>,
    tr: &TrustRegion,
) -> Result<TransformSpaceSolution> {
    let (n, m) = (set.n(), set.m());
    let h = kkt.h();
    let z = &tr.center + d_star - set.base();
    // column j: gradient at center + d* of the correction with unit increment at point j
    let mut coef = DMatrix::zeros(n, m);
    for j in 0..m {
        let mut col = DVector::zeros(n);
        for i in 0..m {
            let yi = set.y(i);
            col.axpy(h[(i, j)] * yi.dot(&z), &yi, 1.0);
        }
        for l in 0..n {
            col[l] += h[(m + 1 + l, j)];
        }
        coef.set_column(j, &col);
    }
    let q_ref = model_from_values(q_prev, kkt, set, set.values());
    let hess = q_ref.hessian();
    let dn = d_star.norm();
    let omega = if dn < tr.delta * (1.0 - 1e-8) || dn == 0.0 {
        0.0
    } else {
        let grad_end = q_ref.gradient(&(&tr.center + d_star));
        (-d_star.dot(&grad_end) / (dn * dn)).max(0.0)
    };
    let shifted = &hess + DMatrix::identity(n, n) * omega;
    let margin = SymmetricEigen::new(shifted.clone()).eigenvalues.min();
    let hp = q_prev.hessian();
    let rhs = -(q_prev.gradient(&tr.center) + (&hp + DMatrix::identity(n, n) * omega) * d_star);
    let u_ref = DVector::from_iterator(m, set.points().iter().zip(set.values()).map(|(p, v)| v - q_prev.value(p)));

    // padded square SVD for a full right basis
    let mut padded = DMatrix::zeros(m.max(n), m);
    padded.view_mut((0, 0), (n, m)).copy_from(&coef);
    let svd = padded.svd(true, true);
    let v_t = svd.v_t.as_ref().expect("requested");
    let u_mat = svd.u.as_ref().expect("requested");
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * m as f64;
    let mut basis = Vec::new();
    let mut pinv_res = DVector::zeros(m);
    let resid_ref = &coef * &u_ref - &rhs;
    let mut padded_res = DVector::zeros(m.max(n));
    padded_res.rows_mut(0, n).copy_from(&resid_ref);
    for (i, s) in svd.singular_values.iter().enumerate() {
        let vi = v_t.row(i).transpose();
        if *s > tol {
            let ui = u_mat.column(i);
            pinv_res.axpy(ui.dot(&padded_res) / s, &vi, 1.0);
        } else {
            basis.push(vi.into_owned());
        }
    }
    // rows of V^T beyond the singular values (only when m > rows) are null too
    for i in svd.singular_values.len()..v_t.nrows() {
        basis.push(v_t.row(i).transpose().into_owned());
    }
    let u_p = &u_ref - pinv_res;
    let check = (&coef * &u_p - &rhs).norm();
    let scale = 1.0 + rhs.norm() + coef.norm() * u_p.norm();
    if !(check <= 1e-8 * scale) {
        return Err(DfoError::DegenerateGeometry(format!("transform-space system inconsistent, residual {check:e}")));
    }
    let particular_values: Vec<f64> = set.points().iter().zip(u_p.iter()).map(|(p, u)| q_prev.value(p) + u).collect();
    Ok(TransformSpaceSolution { particular_values, basis, omega, curvature_margin: margin, coefficients: coef, rhs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    /// Both runs produced records of the same kinds and counts.
    pub same_path: bool,
    /// Iteration of the first record whose kind or index differs.
    pub diverged_at: Option<u64>,
    /// Largest coordinate deviation of `x_opt` over the records before any
    /// divergence.
    pub max_iterate_deviation: f64,
    /// Largest `|(c_shifted - c) - shift(k)|` over recorded models.
    pub max_constant_deviation: f64,
    /// Largest deviation of gradients and Hessians between paired models.
    pub max_coefficient_deviation: f64,
    pub compared_models: usize,
}

/// Solves the problem as given and translated by `shift(k)` and compares the
/// two runs.
pub fn translation_equivalence_check(
    spec: &ObjectiveSpec,
    shift: Schedule,
    x0: &Point,
    cfg: &SolverConfig,
) -> Result<TranslationReport> {
    let cfg = SolverConfig { record_models: true, ..cfg.clone() };
    let plain = minimize(spec.clone(), TransformSchedule::identity(), x0, &cfg)?;
    let moved = minimize(spec.clone(), TransformSchedule::new(TransformKind::Translation { shift }, 0), x0, &cfg)?;
    let common = plain.records.iter().zip(&moved.records).take_while(|(a, b)| a.kind == b.kind && a.k == b.k).count();
    let diverged_at = if common < plain.records.len().max(moved.records.len()) {
        Some(plain.records.get(common).or(moved.records.get(common)).map_or(0, |r| r.k))
    } else {
        None
    };
    let same_path = diverged_at.is_none();
    let mut iterate = 0.0f64;
    for (a, b) in plain.records.iter().zip(&moved.records).take(common) {
        for (p, q) in a.x_opt.iter().zip(&b.x_opt) {
            iterate = iterate.max((p - q).abs());
        }
    }
    let last_k = diverged_at.unwrap_or(u64::MAX);
    // the last snapshot at each iteration describes the model used there
    let by_k = |models: &[ModelSnapshot]| -> BTreeMap<u64, ModelSnapshot> {
        models.iter().map(|m| (m.k, m.clone())).collect()
    };
    let moved_by_k = by_k(&moved.models);
    let pairs: Vec<_> = by_k(&plain.models)
        .into_values()
        .filter(|a| a.k < last_k)
        .filter_map(|a| moved_by_k.get(&a.k).map(|b| (a, b.clone())))
        .collect();
    let (mut constant, mut coefficient) = (0.0f64, 0.0f64);
    for (a, b) in &pairs {
        if a.model.base() != b.model.base() {
            // re-express about the same point before comparing
            let x = a.model.base();
            constant = constant.max((b.model.value(x) - a.model.value(x) - shift.at(b.k)).abs());
            coefficient = coefficient.max((b.model.gradient(x) - a.model.gradient(x)).amax());
        } else {
            constant = constant.max((b.model.c - a.model.c - shift.at(b.k)).abs());
            coefficient = coefficient.max((&b.model.g - &a.model.g).amax());
        }
        coefficient = coefficient.max((b.model.hessian() - a.model.hessian()).amax());
    }
    Ok(TranslationReport {
        same_path,
        diverged_at,
        max_iterate_deviation: iterate,
        max_constant_deviation: constant,
        max_coefficient_deviation: coefficient,
        compared_models: pairs.len(),
    })
}

/// Budgets of a recorded run, using the true values at the best point of
/// every iteration. `schedule` must carry the seed the run used.
pub fn budget_audit(
    spec: &ObjectiveSpec,
    schedule: &TransformSchedule,
    trace: &SolverTrace,
    window: usize,
) -> Result<BudgetLedger> {
    let mut iterates: Vec<IterateValues> = Vec::new();
    for rec in &trace.records {
        let v = IterateValues { k: rec.k, h: (spec.private_part)(&rec.x_opt), fh: spec.value(&rec.x_opt) };
        match iterates.last_mut() {
            Some(last) if last.k == rec.k => *last = v,
            _ => iterates.push(v),
        }
    }
    let source = match &schedule.kind {
        TransformKind::AdditiveDp(p) => BudgetSource::Additive(p),
        TransformKind::MixedDp(p) => BudgetSource::Mixed(p),
        other => return Err(DfoError::Unsupported(format!("no privacy budget for {other:?}"))),
    };
    audit_budgets(source, schedule.seed, &iterates, window)
}
