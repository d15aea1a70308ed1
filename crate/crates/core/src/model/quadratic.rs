use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kkt::KktSystem;
use super::set::InterpolationSet;
use crate::error::{DfoError, Result};

/// `Q(x) = c + y^T g + y^T E y / 2 + sum_j lambda_j (y^T y_j)^2 / 2` with
/// `y = x - x0`: an explicit Hessian part `E` plus implicit rank-one terms
/// attached to displacements `y_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    base: DVector<f64>,
    pub c: f64,
    pub g: DVector<f64>,
    pub hess_explicit: DMatrix<f64>,
    lambda: DVector<f64>,
    ys: Vec<DVector<f64>>,
}

impl QuadraticModel {
    /// The zero model with implicit slots for the points of `set`.
    pub fn zero(set: &InterpolationSet) -> Self {
        let n = set.n();
        Self {
            base: set.base().clone(),
            c: 0.0,
            g: DVector::zeros(n),
            hess_explicit: DMatrix::zeros(n, n),
            lambda: DVector::zeros(set.m()),
            ys: set.ys(),
        }
    }

    /// A model with no implicit terms.
    pub fn explicit(base: DVector<f64>, c: f64, g: DVector<f64>, hess: DMatrix<f64>) -> Self {
        Self { base, c, g, hess_explicit: hess, lambda: DVector::zeros(0), ys: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// `(lambda_j, y_j)` pairs of the implicit Hessian.
    pub fn hess_implicit(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.lambda.iter().copied().zip(self.ys.iter())
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let y = x - &self.base;
        let mut q = self.c + y.dot(&self.g) + 0.5 * y.dot(&(&self.hess_explicit * &y));
        for (l, yj) in self.hess_implicit() {
            if l != 0.0 {
                q += 0.5 * l * y.dot(yj).powi(2);
            }
        }
        q
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = x - &self.base;
        &self.g + self.hess_vec(&y)
    }

    pub fn hess_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.hess_explicit * v;
        for (l, yj) in self.hess_implicit() {
            if l != 0.0 {
                out.axpy(l * yj.dot(v), yj, 1.0);
            }
        }
        out
    }

    /// The full Hessian `E + sum_j lambda_j y_j y_j^T`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let mut h = self.hess_explicit.clone();
        for (l, yj) in self.hess_implicit() {
            if l != 0.0 {
                h.ger(l, yj, yj, 1.0);
            }
        }
        h
    }

    /// Moves the implicit term of slot `t` into the explicit Hessian and
    /// attaches the slot to a new displacement.
    pub fn replace_implicit_point(&mut self, t: usize, y_new: DVector<f64>) {
        let l = self.lambda[t];
        if l != 0.0 {
            let yt = self.ys[t].clone();
            self.hess_explicit.ger(l, &yt, &yt, 1.0);
        }
        self.lambda[t] = 0.0;
        self.ys[t] = y_new;
    }

    /// Adds `D(x) = c + y^T g + sum_j lambda_j (y^T y_j)^2 / 2` whose `lambda`
    /// refers to the current implicit displacements.
    pub fn add_coefficients(&mut self, lambda: &DVector<f64>, c: f64, g: &DVector<f64>) {
        self.lambda += lambda;
        self.c += c;
        self.g += g;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| DfoError::InvalidParameter(format!("model dump: {e}")))
    }
}

/// `(sum_j lambda_j, ||sum_j lambda_j y_j||)`; both vanish for a least
/// Frobenius norm update.
pub fn side_conditions(lambda: &DVector<f64>, set: &InterpolationSet) -> (f64, f64) {
    let mut moment = DVector::zeros(set.n());
    for (j, l) in lambda.iter().enumerate() {
        moment.axpy(*l, &set.y(j), 1.0);
    }
    (lambda.sum(), moment.norm())
}

/// The minimum Frobenius norm interpolant of `set.values()`.
pub fn solve_initial_model(set: &InterpolationSet, kkt: &KktSystem) -> QuadraticModel {
    let mut q = QuadraticModel::zero(set);
    let (lambda, c, g) = kkt.solve(set, set.values());
    q.add_coefficients(&lambda, c, &g);
    q
}

/// `Q_new = Q_old + D` with `D` the least Frobenius norm quadratic taking the
/// values `r` on the updated set. `kkt` and `set` must already contain the
/// replacement of point `t`.
pub fn update_model(
    q_old: &QuadraticModel,
    kkt: &KktSystem,
    set: &InterpolationSet,
    r: &[f64],
    t: usize,
) -> Result<QuadraticModel> {
    if r.len() != set.m() {
        return Err(DfoError::DimensionMismatch { expected: set.m(), got: r.len() });
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(DfoError::InvalidParameter("non-finite residual".into()));
    }
    let mut q = q_old.clone();
    q.replace_implicit_point(t, set.y(t));
    let (lambda, c, g) = kkt.solve(set, r);
    q.add_coefficients(&lambda, c, &g);
    Ok(q)
}

/// The `t`-th Lagrange function: 1 at point `t`, 0 at the other points.
pub fn lagrange_function(kkt: &KktSystem, set: &InterpolationSet, t: usize) -> QuadraticModel {
    let mut e = vec![0.0; set.m()];
    e[t] = 1.0;
    let mut q = QuadraticModel::zero(set);
    let (lambda, c, g) = kkt.solve(set, &e);
    q.add_coefficients(&lambda, c, &g);
    q
}

/// Re-expresses `model` about `new_base`, moves the base of `set` and
/// refactorizes `H`.
pub fn shift_base(
    model: &QuadraticModel,
    set: &mut InterpolationSet,
    new_base: &DVector<f64>,
) -> Result<(QuadraticModel, KktSystem)> {
    let c = model.value(new_base);
    let g = model.gradient(new_base);
    let hess = model.hessian();
    let old_base = set.base().clone();
    set.set_base(new_base.clone());
    let kkt = match KktSystem::build(set) {
        Ok(k) => k,
        Err(e) => {
            set.set_base(old_base);
            return Err(e);
        }
    };
    let mut q = QuadraticModel::zero(set);
    q.c = c;
    q.g = g;
    q.hess_explicit = hess;
    Ok((q, kkt))
}
