use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::set::InterpolationSet;
use crate::error::{DfoError, Result};

/// Relative floor on `|sigma|` below which a point replacement is refused.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;
const CONDITION_LIMIT: f64 = 1e14;

/// `W = [A X^T; X 0]` of size `m + n + 1` with
/// `A_ij = ((x_i - x0)^T (x_j - x0))^2 / 2` and `X = [1 ... 1; x_1 - x0 ... x_m - x0]`.
pub fn build_w_matrix(set: &InterpolationSet) -> DMatrix<f64> {
    let (n, m) = (set.n(), set.m());
    let ys = set.ys();
    let mut w = DMatrix::zeros(m + n + 1, m + n + 1);
    for i in 0..m {
        for j in 0..=i {
            let a = 0.5 * ys[i].dot(&ys[j]).powi(2);
            w[(i, j)] = a;
            w[(j, i)] = a;
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

/// Scalars of replacing point `t` by a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateScalars {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    /// `alpha * beta + tau^2`.
    pub sigma: f64,
    pub w: DVector<f64>,
    pub hw: DVector<f64>,
}

impl UpdateScalars {
    /// `|alpha| |beta| + tau^2`, insensitive to rounding flipping the sign of
    /// `alpha * beta`. Used to rank candidates.
    pub fn sigma_abs(&self) -> f64 {
        self.alpha.abs() * self.beta.abs() + self.tau * self.tau
    }

    pub fn floor(&self, rel: f64) -> f64 {
        rel * (self.alpha.abs() * self.beta.abs()).max(self.tau * self.tau).max(1.0)
    }
}

/// The inverse `H = W^{-1}` of the interpolation KKT matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSystem {
    h: DMatrix<f64>,
    n: usize,
    m: usize,
}

fn scaling(set: &InterpolationSet) -> DVector<f64> {
    let (n, m) = (set.n(), set.m());
    let s = set.scale().max(f64::MIN_POSITIVE.sqrt());
    let mut d = DVector::zeros(m + n + 1);
    for i in 0..m {
        d[i] = 1.0 / (s * s);
    }
    d[m] = s * s;
    for l in 0..n {
        d[m + 1 + l] = s;
    }
    d
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn symmetrize(h: &mut DMatrix<f64>) {
    let k = h.nrows();
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
}

impl KktSystem {
    /// Factorizes `W` from scratch. Inversion works on `D W D` with a
    /// diagonal scaling that makes all blocks of order one.
    pub fn build(set: &InterpolationSet) -> Result<Self> {
        let (n, m) = (set.n(), set.m());
        let d = scaling(set);
        let w = build_w_matrix(set);
        let scaled = DMatrix::from_fn(m + n + 1, m + n + 1, |i, j| d[i] * w[(i, j)] * d[j]);
        let inv = scaled
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| DfoError::DegenerateGeometry("KKT matrix is singular".into()))?;
        let cond = norm1(&scaled) * norm1(&inv);
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(DfoError::DegenerateGeometry(format!("KKT condition estimate {cond:e}")));
        }
        let mut h = DMatrix::from_fn(m + n + 1, m + n + 1, |i, j| d[i] * inv[(i, j)] * d[j]);
        symmetrize(&mut h);
        Ok(Self { h, n, m })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `w(x)`: `((x_i - x0)^T (x - x0))^2 / 2`, then 1, then `x - x0`.
    pub fn w_vector(set: &InterpolationSet, x: &DVector<f64>) -> DVector<f64> {
        let (n, m) = (set.n(), set.m());
        let y = x - set.base();
        let mut w = DVector::zeros(m + n + 1);
        for i in 0..m {
            w[i] = 0.5 * (set.point(i) - set.base()).dot(&y).powi(2);
        }
        w[m] = 1.0;
        w.rows_mut(m + 1, n).copy_from(&y);
        w
    }

    pub fn scalars(&self, set: &InterpolationSet, t: usize, x: &DVector<f64>) -> UpdateScalars {
        let w = Self::w_vector(set, x);
        let hw = &self.h * &w;
        let y = x - set.base();
        let alpha = self.h[(t, t)];
        let beta = 0.5 * y.norm_squared().powi(2) - w.dot(&hw);
        let tau = hw[t];
        UpdateScalars { alpha, beta, tau, sigma: alpha * beta + tau * tau, w, hw }
    }

    /// Replaces point `t` of `set` by `x_new` (its value is left to the
    /// caller) and updates `H` with the rank-structured inverse formula.
    pub fn update_h(
        &mut self,
        set: &mut InterpolationSet,
        t: usize,
        x_new: &DVector<f64>,
        sigma_floor: f64,
    ) -> Result<UpdateScalars> {
        let sc = self.scalars(set, t, x_new);
        if !sc.sigma.is_finite() || sc.sigma.abs() <= sc.floor(sigma_floor) {
            return Err(DfoError::NearSingularUpdate { sigma: sc.sigma });
        }
        let k = self.m + self.n + 1;
        let mut v = -&sc.hw;
        v[t] += 1.0;
        let u = self.h.column(t).into_owned();
        let inv = 1.0 / sc.sigma;
        for j in 0..k {
            for i in 0..k {
                self.h[(i, j)] +=
                    inv * (sc.alpha * v[i] * v[j] - sc.beta * u[i] * u[j] + sc.tau * (u[i] * v[j] + v[i] * u[j]));
            }
        }
        symmetrize(&mut self.h);
        let value = set.values()[t];
        set.replace(t, x_new.clone(), value);
        Ok(sc)
    }

    /// `max |W H - I|` in the scaled coordinates used for factorization.
    pub fn drift(&self, set: &InterpolationSet) -> f64 {
        let d = scaling(set);
        let w = build_w_matrix(set);
        let k = self.m + self.n + 1;
        let prod = w * &self.h;
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let e = d[i] * prod[(i, j)] / d[j] - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(e.abs());
            }
        }
        worst
    }

    /// Refactorizes when the drift exceeds `tol`; returns whether it did.
    pub fn audit(&mut self, set: &InterpolationSet, tol: f64) -> Result<bool> {
        if self.drift(set) > tol {
            *self = Self::build(set)?;
            return Ok(true);
        }
        Ok(false)
    }

    /// `(lambda, c, g) = H (r, 0)`.
    pub fn coefficients(&self, r: &[f64]) -> (DVector<f64>, f64, DVector<f64>) {
        assert_eq!(r.len(), self.m);
        let rv = DVector::from_column_slice(r);
        let top = self.h.columns(0, self.m) * rv;
        let lambda = top.rows(0, self.m).into_owned();
        let c = top[self.m];
        let g = top.rows(self.m + 1, self.n).into_owned();
        (lambda, c, g)
    }

    /// `(lambda, c, g)` solving `W (lambda, c, g) = (r, 0)`, with one step of
    /// iterative refinement against the exact `W` of `set`. `lambda` is then
    /// projected onto `{sum lambda_j = 0, sum lambda_j y_j = 0}`, which holds
    /// for the exact solution, and `(c, g)` refitted by least squares.
    pub fn solve(&self, set: &InterpolationSet, r: &[f64]) -> (DVector<f64>, f64, DVector<f64>) {
        assert_eq!(r.len(), self.m);
        let (m, n) = (self.m, self.n);
        let w = build_w_matrix(set);
        let mut rhs = DVector::zeros(m + n + 1);
        rhs.rows_mut(0, m).copy_from_slice(r);
        let x = self.h.columns(0, m) * DVector::from_column_slice(r);
        let res = &rhs - &w * &x;
        let x = x + &self.h * res;
        let xt = w.view((0, m), (m, n + 1)).into_owned();
        let qr = xt.clone().qr();
        let q = qr.q();
        let mut lambda = x.rows(0, m).into_owned();
        for _ in 0..2 {
            let proj = &q * (q.transpose() * &lambda);
            lambda -= proj;
        }
        let fit = DVector::from_column_slice(r) - w.view((0, 0), (m, m)) * &lambda;
        let Some(v) = qr.r().solve_upper_triangular(&(q.transpose() * fit)) else {
            return (lambda, x[m], x.rows(m + 1, n).into_owned());
        };
        (lambda, v[0], v.rows(1, n).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::set::build_initial_set;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, m: usize) -> InterpolationSet {
        let pts: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))).collect();
        let base = DVector::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
        InterpolationSet::new(pts, base, vec![0.0; m]).unwrap()
    }

    fn max_abs(a: &DMatrix<f64>) -> f64 {
        a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn solve_keeps_side_conditions_under_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let set = random_set(&mut rng, 3, 7);
            let mut kkt = KktSystem::build(&set).unwrap();
            // perturb H as accumulated updates would
            for v in kkt.h.iter_mut() {
                *v *= 1.0 + 1e-7 * rng.random_range(-1.0..1.0);
            }
            let r: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (lambda, c, g) = kkt.solve(&set, &r);
            let ys = set.ys();
            let scale = lambda.abs().sum() * ys.iter().map(|y| y.norm()).fold(1.0, f64::max);
            let moment = ys.iter().zip(lambda.iter()).fold(DVector::zeros(3), |acc, (y, l)| acc + *l * y);
            assert!(lambda.sum().abs() <= 1e-12 * scale);
            assert!(moment.norm() <= 1e-12 * scale);
            for i in 0..7 {
                let v: f64 =
                    c + ys[i].dot(&g) + (0..7).map(|j| 0.5 * lambda[j] * ys[i].dot(&ys[j]).powi(2)).sum::<f64>();
                assert!((v - r[i]).abs() <= 1e-9, "{} vs {}", v, r[i]);
            }
        }
    }

    #[test]
    fn one_dimensional_a_block() {
        let set = build_initial_set(&DVector::from_element(1, 0.0), 1.0, 3).unwrap();
        let w = build_w_matrix(&set);
        let a = w.view((0, 0), (3, 3)).into_owned();
        assert_eq!(a, DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5]));
        assert_eq!(w, w.transpose());
    }

    #[test]
    fn h_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let set = random_set(&mut rng, 3, 7);
            let kkt = KktSystem::build(&set).unwrap();
            let direct = build_w_matrix(&set).try_inverse().unwrap();
            assert!(max_abs(&(kkt.h() - direct)) < 1e-10 * (1.0 + max_abs(kkt.h())));
        }
    }

    #[test]
    fn singular_geometry_is_reported() {
        // all points on a line in 2-D
        let pts: Vec<DVector<f64>> = (0..5).map(|i| DVector::from_column_slice(&[i as f64, 0.0])).collect();
        let set = InterpolationSet::new(pts, DVector::zeros(2), vec![0.0; 5]).unwrap();
        assert!(matches!(KktSystem::build(&set), Err(DfoError::DegenerateGeometry(_))));
    }

    #[test]
    fn self_replacement_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut set = random_set(&mut rng, 2, 5);
        let mut kkt = KktSystem::build(&set).unwrap();
        let before = kkt.h().clone();
        let x = set.point(2).clone();
        kkt.update_h(&mut set, 2, &x, DEFAULT_SIGMA_FLOOR).unwrap();
        assert!(max_abs(&(kkt.h() - before)) < 1e-10 * (1.0 + max_abs(kkt.h())));
        assert!(kkt.drift(&set) < 1e-10);
    }

    #[test]
    fn replacement_matches_rebuilt_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut set = random_set(&mut rng, 2, 5);
            let mut kkt = KktSystem::build(&set).unwrap();
            let t = rng.random_range(0..5);
            let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            kkt.update_h(&mut set, t, &x, DEFAULT_SIGMA_FLOOR).unwrap();
            assert_eq!(set.point(t), &x);
            let direct = build_w_matrix(&set).try_inverse().unwrap();
            assert!(max_abs(&(kkt.h() - &direct)) < 1e-8 * (1.0 + max_abs(&direct)));
        }
    }

    #[test]
    fn fifty_replacements_stay_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut set = random_set(&mut rng, 3, 7);
        let mut kkt = KktSystem::build(&set).unwrap();
        let mut done = 0;
        while done < 50 {
            let t = rng.random_range(0..7);
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            if kkt.update_h(&mut set, t, &x, 1e-6).is_ok() {
                done += 1;
            }
        }
        let raw = build_w_matrix(&set) * kkt.h() - DMatrix::identity(11, 11);
        assert!(max_abs(&raw) <= 1e-6, "{}", max_abs(&raw));
        assert!(max_abs(&(kkt.h() - kkt.h().transpose())) <= 1e-10);
    }

    #[test]
    fn tiny_sigma_is_refused() {
        let mut set = build_initial_set(&DVector::zeros(2), 1.0, 5).unwrap();
        let mut kkt = KktSystem::build(&set).unwrap();
        // swapping point 1 for the image of point 3 duplicates a point
        let x = set.point(3).clone();
        let err = kkt.update_h(&mut set, 1, &x, DEFAULT_SIGMA_FLOOR).unwrap_err();
        assert!(matches!(err, DfoError::NearSingularUpdate { .. }));
    }

    #[test]
    fn coefficients_solve_the_kkt_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = random_set(&mut rng, 2, 6);
        let kkt = KktSystem::build(&set).unwrap();
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lambda, c, g) = kkt.coefficients(&r);
        let mut rhs = DVector::zeros(9);
        rhs.rows_mut(0, 6).copy_from_slice(&r);
        let sol = build_w_matrix(&set).lu().solve(&rhs).unwrap();
        assert_abs_diff_eq!(lambda, sol.rows(0, 6).into_owned(), epsilon = 1e-9);
        assert_abs_diff_eq!(c, sol[6], epsilon = 1e-9);
        assert_abs_diff_eq!(g, sol.rows(7, 2).into_owned(), epsilon = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn scaled_build_handles_tiny_radii(seed in 0u64..1000, exp in -6i32..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = 10f64.powi(exp);
            let pts: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_fn(2, |_, _| s * rng.random_range(-1.0..1.0))).collect();
            let set = InterpolationSet::new(pts, DVector::zeros(2), vec![0.0; 5]).unwrap();
            if let Ok(kkt) = KktSystem::build(&set) {
                prop_assert!(kkt.drift(&set) < 1e-6);
            }
        }
    }
}
