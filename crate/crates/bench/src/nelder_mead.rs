//! Nelder-Mead simplex search that re-evaluates its whole simplex under the
//! current transformation at every iteration.

use dfop::objective::{Objective, ObjectiveSpec, TransformSchedule};
use dfop::{DfoError, Point, Result};
use nalgebra::{DMatrix, DVector};

use crate::suite::{running_min, RunRecord};

#[derive(Debug, Clone)]
pub struct NelderMeadConfig {
    pub budget: usize,
    /// Edge length of the initial right-angled simplex.
    pub initial_step: f64,
    /// Stop once every vertex is this close to the best one.
    pub xtol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { budget: 4000, initial_step: 1.0, xtol: 1e-10 }
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

pub fn nelder_mead(
    spec: &ObjectiveSpec,
    schedule: TransformSchedule,
    x0: &Point,
    cfg: &NelderMeadConfig,
) -> Result<RunRecord> {
    let n = x0.dim();
    let mut simplex = vec![x0.vector().clone()];
    for i in 0..n {
        let mut v = x0.vector().clone();
        v[i] += cfg.initial_step;
        simplex.push(v);
    }
    nelder_mead_from(spec, schedule, simplex, cfg)
}

/// Starts from an explicit simplex of `n + 1` affinely independent vertices.
pub fn nelder_mead_from(
    spec: &ObjectiveSpec,
    schedule: TransformSchedule,
    mut simplex: Vec<DVector<f64>>,
    cfg: &NelderMeadConfig,
) -> Result<RunRecord> {
    let n = spec.dimension;
    if simplex.len() != n + 1 {
        return Err(DfoError::InvalidParameter(format!("simplex needs {} vertices, got {}", n + 1, simplex.len())));
    }
    if cfg.budget < n + 2 {
        return Err(DfoError::InvalidParameter(format!("budget {} too small for dimension {n}", cfg.budget)));
    }
    let edges = DMatrix::from_fn(n, n, |r, c| simplex[c + 1][r] - simplex[0][r]);
    let sv = edges.singular_values();
    if sv.min() <= 1e-12 * sv.max().max(f64::MIN_POSITIVE) {
        return Err(DfoError::InvalidParameter("initial simplex is degenerate".into()));
    }
    let f0 = spec.value(simplex[0].as_slice());
    let mut obj = Objective::new(spec.clone(), schedule)?;
    let mut history = Vec::new();
    let mut k = 1u64;
    let mut vals = obj.evaluate_batch(&simplex, k)?;
    let record = |obj: &Objective, simplex: &[DVector<f64>], vals: &[f64], history: &mut Vec<f64>| {
        let best = argmin(vals);
        let raw = obj.raw_value(&simplex[best]).unwrap_or(f64::INFINITY);
        while history.len() < obj.nf() {
            history.push(raw);
        }
    };
    record(&obj, &simplex, &vals, &mut history);
    let mut status = "BudgetExhausted";
    let max_iter = 100 * cfg.budget;
    for _ in 0..max_iter {
        if obj.nf() >= cfg.budget {
            break;
        }
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = simplex[1..].iter().map(|v| (v - &simplex[0]).amax()).fold(0.0, f64::max);
        if spread <= cfg.xtol {
            status = "Converged";
            break;
        }
        k += 1;
        vals = obj.evaluate_batch(&simplex, k)?;
        // the order may change under the new transformation
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let centroid = simplex[..n].iter().fold(DVector::zeros(n), |acc, v| acc + v) / n as f64;
        let worst = simplex[n].clone();
        let along = |t: f64| &centroid + (&centroid - &worst) * t;
        let xr = along(REFLECT);
        let fr = obj.evaluate_batch(std::slice::from_ref(&xr), k)?[0];
        if fr < vals[0] {
            let xe = along(EXPAND);
            let fe = if obj.nf() < cfg.budget {
                obj.evaluate_batch(std::slice::from_ref(&xe), k)?[0]
            } else {
                f64::INFINITY
            };
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, limit) = if fr < vals[n] { (along(CONTRACT), fr) } else { (along(-CONTRACT), vals[n]) };
            let fc = if obj.nf() < cfg.budget {
                obj.evaluate_batch(std::slice::from_ref(&xc), k)?[0]
            } else {
                f64::INFINITY
            };
            if fc < limit {
                simplex[n] = xc;
                vals[n] = fc;
            } else if obj.nf() < cfg.budget {
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    *v = &best + (&*v - &best) * SHRINK;
                }
                let shrunk = obj.evaluate_batch(&simplex[1..], k)?;
                vals[1..].copy_from_slice(&shrunk);
            }
        }
        record(&obj, &simplex, &vals, &mut history);
    }
    running_min(&mut history);
    let best = argmin(&vals);
    Ok(RunRecord {
        solver: "nelder-mead".into(),
        problem: spec.name.clone(),
        seed: obj.schedule().seed,
        nf: history.len(),
        f0,
        f_opt: history.last().copied().unwrap_or(f0),
        history,
        x_opt: simplex[best].as_slice().to_vec(),
        status: status.into(),
        error: None,
    })
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_sphere() {
        let spec = ObjectiveSpec::private_only("sphere", 2, |x| x[0] * x[0] + x[1] * x[1]);
        let x0 = Point::new(vec![1.0, -0.7]).unwrap();
        let cfg = NelderMeadConfig { budget: 500, ..NelderMeadConfig::default() };
        let r = nelder_mead(&spec, TransformSchedule::identity(), &x0, &cfg).unwrap();
        assert!(r.f_opt <= 1e-6, "{}", r.f_opt);
        assert!(r.nf <= 500);
        assert_eq!(r.history.len(), r.nf);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn degenerate_simplex_is_rejected() {
        let spec = ObjectiveSpec::private_only("sphere", 2, |x| x[0] * x[0] + x[1] * x[1]);
        let s = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![2.0, 2.0]),
        ];
        let r = nelder_mead_from(&spec, TransformSchedule::identity(), s, &NelderMeadConfig::default());
        assert!(matches!(r, Err(DfoError::InvalidParameter(_))));
    }

    #[test]
    fn budget_is_respected() {
        let spec =
            ObjectiveSpec::private_only("rosen", 2, |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
        let x0 = Point::new(vec![-1.2, 1.0]).unwrap();
        let cfg = NelderMeadConfig { budget: 40, ..NelderMeadConfig::default() };
        let r = nelder_mead(&spec, TransformSchedule::identity(), &x0, &cfg).unwrap();
        assert!(r.nf <= 40 + 2, "{}", r.nf);
    }
}
