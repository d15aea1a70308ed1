//! Trust-region kernels: approximate minimization of the model in a ball,
//! and the two geometry-improving maximizations of a Lagrange function and
//! of the update denominator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DfoError, Result};
use crate::model::{lagrange_function, InterpolationSet, KktSystem, QuadraticModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub center: DVector<f64>,
    pub delta: f64,
    pub rho: f64,
}

impl TrustRegion {
    pub fn new(center: DVector<f64>, delta: f64, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && delta >= rho && delta.is_finite()) {
            return Err(DfoError::InvalidParameter(format!("need 0 < rho <= delta, got rho = {rho}, delta = {delta}")));
        }
        Ok(Self { center, delta, rho })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub d: DVector<f64>,
    /// `Q(center) - Q(center + d)`.
    pub predicted_reduction: f64,
    /// Smallest Rayleigh quotient of the search directions, or 0 when the
    /// step reached the boundary.
    pub crvmin: f64,
    pub on_boundary: bool,
    /// Rayleigh quotients `p^T B p / p^T p` of the conjugate directions used.
    pub rayleigh: Vec<f64>,
}

const BOUNDARY_PASSES: usize = 10;
const ANGLE_SAMPLES: usize = 64;

/// Step length `s >= 0` with `||d + s p|| = delta`.
fn to_boundary(d: &DVector<f64>, p: &DVector<f64>, delta: f64) -> f64 {
    let pp = p.norm_squared();
    let dp = d.dot(p);
    let dd = d.norm_squared();
    let disc = (dp * dp + pp * (delta * delta - dd)).max(0.0);
    // stable root of pp s^2 + 2 dp s + dd - delta^2 = 0
    if dp >= 0.0 {
        (delta * delta - dd).max(0.0) / (dp + disc.sqrt())
    } else {
        (disc.sqrt() - dp) / pp
    }
}

/// Which extremum of a trigonometric polynomial to look for.
#[derive(Clone, Copy)]
enum Extremum {
    Min,
    MaxAbs,
}

/// Fits the trigonometric polynomial of the given degree through equally
/// spaced samples of `f` (exact when `f` has at most that degree) and returns
/// its extremum over one period as `(angle, value)`. Newton's method on the
/// analytic derivative keeps the angle a smooth function of the data.
fn optimize_angle(f: impl Fn(f64) -> f64, degree: usize, kind: Extremum) -> (f64, f64) {
    let tau = std::f64::consts::TAU;
    let m = 4 * degree + 4;
    let samples: Vec<f64> = (0..m).map(|i| f(tau * i as f64 / m as f64)).collect();
    let mut a = vec![0.0; degree + 1];
    let mut b = vec![0.0; degree + 1];
    for (i, &v) in samples.iter().enumerate() {
        let th = tau * i as f64 / m as f64;
        a[0] += v / m as f64;
        for j in 1..=degree {
            let (sn, cs) = (j as f64 * th).sin_cos();
            a[j] += 2.0 * v * cs / m as f64;
            b[j] += 2.0 * v * sn / m as f64;
        }
    }
    let eval = |th: f64| {
        let (mut v, mut d1, mut d2) = (a[0], 0.0, 0.0);
        for j in 1..=degree {
            let jf = j as f64;
            let (sn, cs) = (jf * th).sin_cos();
            v += a[j] * cs + b[j] * sn;
            d1 += jf * (b[j] * cs - a[j] * sn);
            d2 -= jf * jf * (a[j] * cs + b[j] * sn);
        }
        (v, d1, d2)
    };
    let grid = ANGLE_SAMPLES.max(8 * degree);
    let h = tau / grid as f64;
    let score = |v: f64| match kind {
        Extremum::Min => v,
        Extremum::MaxAbs => -v.abs(),
    };
    let (mut th, mut best) = (0.0, f64::INFINITY);
    for i in 0..grid {
        let t = i as f64 * h;
        let s = score(eval(t).0);
        if s < best {
            best = s;
            th = t;
        }
    }
    let sign = match kind {
        Extremum::Min => 1.0,
        Extremum::MaxAbs => -eval(th).0.signum(),
    };
    let start = th;
    for _ in 0..50 {
        let (_, d1, d2) = eval(th);
        let (g, c) = (sign * d1, sign * d2);
        if !(c > 0.0) {
            break;
        }
        let step = (-g / c).clamp(-h, h);
        th += step;
        if (th - start).abs() > h {
            th = start;
            break;
        }
        if step.abs() <= 1e-15 * (1.0 + th.abs()) {
            break;
        }
    }
    if score(eval(th).0) > best {
        th = start;
    }
    (th, f(th))
}

/// Truncated conjugate gradients for `min Q(center + d)` subject to
/// `||d|| <= delta`, followed by a search along the boundary when the
/// boundary is reached.
pub fn trsapp(q: &QuadraticModel, tr: &TrustRegion) -> StepResult {
    let n = q.n();
    let g = q.gradient(&tr.center);
    let delta = tr.delta;
    let mut d = DVector::zeros(n);
    let mut rayleigh = Vec::new();
    let gnorm0 = g.norm();
    if gnorm0 == 0.0 || !gnorm0.is_finite() {
        return StepResult { d, predicted_reduction: 0.0, crvmin: 0.0, on_boundary: false, rayleigh };
    }
    let mut r = -&g;
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut total = 0.0;
    let mut crvmin = f64::INFINITY;
    let mut on_boundary = false;
    for _ in 0..n {
        let bp = q.hess_vec(&p);
        let curv = p.dot(&bp);
        let pp = p.norm_squared();
        let rq = curv / pp;
        rayleigh.push(rq);
        let step_full = if curv > 0.0 { rr / curv } else { f64::INFINITY };
        let step_bd = to_boundary(&d, &p, delta);
        if step_full >= step_bd {
            d.axpy(step_bd, &p, 1.0);
            on_boundary = true;
            break;
        }
        crvmin = crvmin.min(rq);
        let red = 0.5 * step_full * rr;
        d.axpy(step_full, &p, 1.0);
        r.axpy(-step_full, &bp, 1.0);
        total += red;
        let rr_new = r.norm_squared();
        if rr_new.sqrt() <= 1e-10 * gnorm0 || red < 1e-2 * total {
            break;
        }
        p = &r + (rr_new / rr) * &p;
        rr = rr_new;
    }
    let qd = |d: &DVector<f64>| g.dot(d) + 0.5 * d.dot(&q.hess_vec(d));
    if on_boundary {
        crvmin = 0.0;
        boundary_search(q, &g, &mut d, delta);
    } else if !crvmin.is_finite() {
        crvmin = 0.0;
    }
    d = clamp_to_ball(d, delta);
    let mut pred = -qd(&d);
    if !(pred >= 0.0) {
        d.fill(0.0);
        pred = 0.0;
    }
    StepResult { d, predicted_reduction: pred, crvmin, on_boundary, rayleigh }
}

/// Rotates `d` (with `||d|| = delta`) in the plane of `d` and the tangential
/// model gradient while the model keeps decreasing.
fn boundary_search(q: &QuadraticModel, g: &DVector<f64>, d: &mut DVector<f64>, delta: f64) {
    let mut bd = q.hess_vec(d);
    let mut qcur = g.dot(d) + 0.5 * d.dot(&bd);
    for _ in 0..BOUNDARY_PASSES {
        let grad = g + &bd;
        let dn = d.norm();
        if dn == 0.0 {
            return;
        }
        let u1 = &*d / dn;
        let mut s = &grad - grad.dot(&u1) * &u1;
        let sn = s.norm();
        if sn <= 1e-10 * grad.norm() || sn == 0.0 {
            return;
        }
        s /= -sn;
        let bu1 = &bd / dn;
        let bs = q.hess_vec(&s);
        let (g1, g2) = (g.dot(&u1), g.dot(&s));
        let (b11, b12, b22) = (u1.dot(&bu1), u1.dot(&bs), s.dot(&bs));
        let model = |t: f64| {
            let (c, sn) = (delta * t.cos(), delta * t.sin());
            c * g1 + sn * g2 + 0.5 * (c * c * b11 + 2.0 * c * sn * b12 + sn * sn * b22)
        };
        let (theta, v) = optimize_angle(model, 2, Extremum::Min);
        if !(v < qcur) {
            return;
        }
        let improvement = qcur - v;
        *d = delta * theta.cos() * &u1 + delta * theta.sin() * &s;
        bd = delta * theta.cos() * &bu1 + delta * theta.sin() * &bs;
        qcur = v;
        if improvement <= 1e-2 * (-qcur).abs() {
            return;
        }
    }
}

fn orthogonal_unit(v: &DVector<f64>, against: &DVector<f64>) -> Option<DVector<f64>> {
    let an = against.norm_squared();
    let mut w = v.clone();
    if an > 0.0 {
        // two Gram-Schmidt passes
        for _ in 0..2 {
            w -= (w.dot(against) / an) * against;
        }
    }
    let wn = w.norm();
    (wn > 1e-8 * v.norm() && wn > 0.0).then(|| w / wn)
}

fn clamp_to_ball(mut d: DVector<f64>, delta: f64) -> DVector<f64> {
    let dn = d.norm();
    if dn > delta {
        d *= delta / dn;
    }
    d
}

/// Approximately maximizes `|l_t(center + d)|` over `||d|| <= delta`, with
/// `l_t` the `t`-th Lagrange function. Returns the step and `l_t` there.
pub fn biglag(kkt: &KktSystem, set: &InterpolationSet, t: usize, tr: &TrustRegion) -> Result<(DVector<f64>, f64)> {
    let l = lagrange_function(kkt, set, t);
    biglag_with(&l, set, t, tr)
}

pub(crate) fn biglag_with(
    l: &QuadraticModel,
    set: &InterpolationSet,
    t: usize,
    tr: &TrustRegion,
) -> Result<(DVector<f64>, f64)> {
    let n = set.n();
    let delta = tr.delta;
    let l0 = l.value(&tr.center);
    let gl = l.gradient(&tr.center);
    let value = |d: &DVector<f64>| l0 + gl.dot(d) + 0.5 * d.dot(&l.hess_vec(d));
    let mut dirs: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    if gl.norm() > 0.0 {
        dirs.push(gl.normalize());
    }
    let to_t = set.point(t) - &tr.center;
    if to_t.norm() > 0.0 {
        dirs.push(to_t.normalize());
    }
    let mut best_d = DVector::zeros(n);
    let mut best = l0.abs();
    for u in &dirs {
        let a = gl.dot(u);
        let c = u.dot(&l.hess_vec(u));
        let mut cands = vec![delta, -delta];
        if c != 0.0 {
            let s = -a / c;
            if s.abs() < delta {
                cands.push(s);
            }
        }
        for s in cands {
            let v = (l0 + s * a + 0.5 * s * s * c).abs();
            if v > best {
                best = v;
                best_d = s * u;
            }
        }
    }
    if best < 1e-12 {
        return Err(DfoError::DegenerateLagrange);
    }
    if (best_d.norm() - delta).abs() <= 1e-12 * delta {
        for _ in 0..n.max(1) {
            let grad = &gl + l.hess_vec(&best_d);
            let Some(s) = orthogonal_unit(&grad, &best_d) else { break };
            let u1 = &best_d / best_d.norm();
            let bu1 = l.hess_vec(&u1);
            let bs = l.hess_vec(&s);
            let (g1, g2) = (gl.dot(&u1), gl.dot(&s));
            let (b11, b12, b22) = (u1.dot(&bu1), u1.dot(&bs), s.dot(&bs));
            let f = |th: f64| {
                let (c, sn) = (delta * th.cos(), delta * th.sin());
                l0 + c * g1 + sn * g2 + 0.5 * (c * c * b11 + 2.0 * c * sn * b12 + sn * sn * b22)
            };
            let (th, v) = optimize_angle(f, 2, Extremum::MaxAbs);
            if v.abs() <= best * (1.0 + 1e-10) {
                break;
            }
            best = v.abs();
            best_d = delta * th.cos() * &u1 + delta * th.sin() * &s;
        }
    }
    let best_d = clamp_to_ball(best_d, delta);
    let v = value(&best_d);
    Ok((best_d, v))
}

/// Approximately maximizes the update denominator `|sigma(center + d)|` for
/// replacing point `t`, starting from the step `d_start`. Never returns a
/// step worse than `d_start`.
pub fn bigden(
    kkt: &KktSystem,
    set: &InterpolationSet,
    t: usize,
    tr: &TrustRegion,
    d_start: &DVector<f64>,
    sigma_floor: f64,
) -> Result<(DVector<f64>, f64)> {
    let l = lagrange_function(kkt, set, t);
    let sigma = |d: &DVector<f64>| kkt.scalars(set, t, &(&tr.center + d)).sigma;
    let mut best_d = d_start.clone();
    let mut best = sigma(&best_d).abs();
    let delta = tr.delta;
    let n = set.n();
    for _ in 0..n.max(1) {
        let start = best;
        let dn = best_d.norm();
        let u1 = if dn > 0.0 {
            &best_d / dn
        } else {
            match orthogonal_unit(&l.gradient(&tr.center), &DVector::zeros(n)) {
                Some(u) => u,
                None => break,
            }
        };
        let dirs = [l.gradient(&(&tr.center + &best_d)), set.point(t) - &tr.center];
        for dir in dirs {
            let Some(s) = orthogonal_unit(&dir, &u1) else { continue };
            let f = |th: f64| sigma(&(delta * th.cos() * &u1 + delta * th.sin() * &s));
            // sigma is quartic in the step, so degree four in the angle
            let (th, v) = optimize_angle(f, 4, Extremum::MaxAbs);
            if v.abs() > best {
                best = v.abs();
                best_d = delta * th.cos() * &u1 + delta * th.sin() * &s;
            }
        }
        if best <= start * (1.0 + 1e-8) {
            break;
        }
    }
    let best_d = clamp_to_ball(best_d, delta);
    let sc = kkt.scalars(set, t, &(&tr.center + &best_d));
    if sc.sigma.abs() <= sc.floor(sigma_floor) {
        return Err(DfoError::GeometryRebuild);
    }
    Ok((best_d, sc.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_initial_set, solve_initial_model, DEFAULT_SIGMA_FLOOR};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(g: &[f64], b: DMatrix<f64>) -> QuadraticModel {
        let n = g.len();
        QuadraticModel::explicit(DVector::zeros(n), 0.0, DVector::from_column_slice(g), b)
    }

    fn tr(n: usize, delta: f64) -> TrustRegion {
        TrustRegion::new(DVector::zeros(n), delta, delta.min(1e-3)).unwrap()
    }

    #[test]
    fn linear_model_steps_to_boundary() {
        let q = model(&[3.0, -4.0], DMatrix::zeros(2, 2));
        let s = trsapp(&q, &tr(2, 10.0));
        assert!((&s.d - DVector::from_column_slice(&[-6.0, 8.0])).norm() < 1e-10);
        assert!(s.on_boundary);
        assert_eq!(s.crvmin, 0.0);
        assert!((s.predicted_reduction - 50.0).abs() < 1e-9);
    }

    #[test]
    fn interior_newton_step() {
        let b = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let g = [1.0, -2.0, 0.5];
        let q = model(&g, b.clone());
        let s = trsapp(&q, &tr(3, 10.0));
        let newton = -b.lu().solve(&DVector::from_column_slice(&g)).unwrap();
        assert!((&s.d - newton).norm() < 1e-6);
        assert!(!s.on_boundary);
        assert!(s.crvmin > 0.0);
    }

    #[test]
    fn zero_gradient_convex_gives_zero_step() {
        let q = model(&[0.0, 0.0], DMatrix::identity(2, 2));
        let s = trsapp(&q, &tr(2, 1.0));
        assert_eq!(s.d.norm(), 0.0);
    }

    #[test]
    fn angle_search_finds_trig_extrema() {
        let f = |t: f64| 0.3 + 1.1 * t.cos() - 0.4 * t.sin() + 0.7 * (2.0 * t).cos() + 0.2 * (2.0 * t).sin();
        let grid = |sign: f64| {
            (0..200_000)
                .map(|i| std::f64::consts::TAU * i as f64 / 200_000.0)
                .map(|t| sign * f(t))
                .fold(f64::INFINITY, f64::min)
        };
        let (_, v) = optimize_angle(f, 2, Extremum::Min);
        assert!((v - grid(1.0)).abs() < 1e-9);
        let (_, v) = optimize_angle(f, 2, Extremum::MaxAbs);
        assert!((v.abs() - (-grid(-1.0)).max(-grid(1.0))).abs() < 1e-9);
        let quartic = |t: f64| (t.cos() + 0.5 * t.sin()).powi(4) - 0.3 * t.sin().powi(2);
        let (_, v) = optimize_angle(quartic, 4, Extremum::MaxAbs);
        let best =
            (0..200_000).map(|i| quartic(std::f64::consts::TAU * i as f64 / 200_000.0).abs()).fold(0.0, f64::max);
        assert!((v.abs() - best).abs() < 1e-9);
    }

    fn ball_grid_min(q: &QuadraticModel, delta: f64) -> f64 {
        let mut best = 0.0f64;
        for i in 0..=100 {
            for j in 0..=100 {
                let d = DVector::from_column_slice(&[
                    -delta + 2.0 * delta * i as f64 / 100.0,
                    -delta + 2.0 * delta * j as f64 / 100.0,
                ]);
                if d.norm() <= delta {
                    best = best.min(q.value(&d));
                }
            }
        }
        for i in 0..10_000 {
            let a = std::f64::consts::TAU * i as f64 / 10_000.0;
            best = best.min(q.value(&DVector::from_column_slice(&[delta * a.cos(), delta * a.sin()])));
        }
        best
    }

    #[test]
    fn two_dimensional_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..40 {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let mut b = &a * a.transpose();
            if case % 2 == 1 {
                // indefinite half of the time
                b = &a + a.transpose();
            }
            let g = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let q = model(&g, b);
            let s = trsapp(&q, &tr(2, 1.0));
            assert!(s.d.norm() <= 1.0 + 1e-10);
            assert!(q.value(&s.d) <= ball_grid_min(&q, 1.0) + 1e-6, "case {case}");
        }
    }

    #[test]
    fn biglag_one_dimensional() {
        let set = build_initial_set(&DVector::zeros(1), 1.0, 3).unwrap();
        let kkt = KktSystem::build(&set).unwrap();
        let (d, v) = biglag(&kkt, &set, 1, &tr(1, 1.0)).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!((v.abs() - 1.0).abs() < 1e-12);
    }

    fn random_geometry(rng: &mut ChaCha8Rng) -> (InterpolationSet, KktSystem) {
        loop {
            let pts: Vec<DVector<f64>> =
                (0..5).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
            let Ok(set) = InterpolationSet::new(pts, DVector::zeros(2), vec![0.0; 5]) else { continue };
            if let Ok(kkt) = KktSystem::build(&set) {
                return (set, kkt);
            }
        }
    }

    fn centered(set: &InterpolationSet, delta: f64) -> TrustRegion {
        TrustRegion::new(set.x_opt().clone(), delta, delta * 0.1).unwrap()
    }

    #[test]
    fn biglag_beats_candidate_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..30 {
            let (set, kkt) = random_geometry(&mut rng);
            let t = (set.opt_index() + 1 + rng.random_range(0..4)) % 5;
            let trr = centered(&set, 0.5);
            let (d, v) = biglag(&kkt, &set, t, &trr).unwrap();
            assert!(d.norm() <= 0.5 * (1.0 + 1e-10));
            let l = lagrange_function(&kkt, &set, t);
            assert!((l.value(&(&trr.center + &d)) - v).abs() < 1e-10);
            let mut sweep = 0.0f64;
            for i in 0..2000 {
                let a = std::f64::consts::TAU * i as f64 / 2000.0;
                let p = &trr.center + DVector::from_column_slice(&[0.5 * a.cos(), 0.5 * a.sin()]);
                sweep = sweep.max(l.value(&p).abs());
            }
            assert!(v.abs() >= 0.8 * sweep);
        }
    }

    #[test]
    fn bigden_improves_and_reports_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let (set, kkt) = random_geometry(&mut rng);
            let t = (set.opt_index() + 1) % 5;
            let trr = centered(&set, 0.5);
            let (dl, _) = biglag(&kkt, &set, t, &trr).unwrap();
            let s_lag = kkt.scalars(&set, t, &(&trr.center + &dl)).sigma.abs();
            let (d, sigma) = bigden(&kkt, &set, t, &trr, &dl, DEFAULT_SIGMA_FLOOR).unwrap();
            assert!(d.norm() <= 0.5 * (1.0 + 1e-10), "{} {}", d.norm(), dl.norm());
            assert!(sigma.abs() >= s_lag);
            // independent recomputation of alpha, beta, tau
            let x = &trr.center + &d;
            let w = KktSystem::w_vector(&set, &x);
            let hw = kkt.h() * &w;
            let y = &x - set.base();
            let alpha = kkt.h()[(t, t)];
            let beta = 0.5 * y.norm_squared().powi(2) - w.dot(&hw);
            let s2 = alpha * beta + hw[t] * hw[t];
            assert!((s2 - sigma).abs() <= 1e-10 * (1.0 + sigma.abs()));
            let mut grid = 0.0f64;
            for i in 0..10_000 {
                let a = std::f64::consts::TAU * i as f64 / 10_000.0;
                let p = &trr.center + DVector::from_column_slice(&[0.5 * a.cos(), 0.5 * a.sin()]);
                grid = grid.max(kkt.scalars(&set, t, &p).sigma.abs());
            }
            assert!(sigma.abs() >= 0.5 * grid);
        }
    }

    #[test]
    fn model_from_set_gives_feasible_step() {
        let mut set = build_initial_set(&DVector::from_column_slice(&[1.0, 1.0, 1.0]), 0.5, 7).unwrap();
        let v = set.points().iter().map(|x| x.norm_squared()).collect();
        set.set_values(v).unwrap();
        let kkt = KktSystem::build(&set).unwrap();
        let q = solve_initial_model(&set, &kkt);
        let s = trsapp(&q, &centered(&set, 0.5));
        assert!(s.d.norm() <= 0.5 * (1.0 + 1e-10));
        assert!(s.predicted_reduction > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn cauchy_decrease_and_crvmin(seed in 0u64..10_000, n in 1usize..6, delta in 0.01f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let b = &a + a.transpose();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q = model(&g, b.clone());
            let s = trsapp(&q, &tr(n, delta));
            prop_assert!(s.d.norm() <= delta * (1.0 + 1e-10));
            prop_assert!(s.predicted_reduction >= 0.0);
            let gn = DVector::from_column_slice(&g).norm();
            let bn = b.norm().max(1e-300);
            let cauchy = 0.5 * gn * delta.min(gn / bn);
            prop_assert!(s.predicted_reduction >= cauchy * (1.0 - 1e-10));
            for rq in &s.rayleigh {
                prop_assert!(s.crvmin <= rq + 1e-12 || s.on_boundary);
            }
            if s.on_boundary {
                prop_assert_eq!(s.crvmin, 0.0);
            }
        }
    }
}
