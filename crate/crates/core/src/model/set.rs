use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DfoError, Result};

/// `m` interpolation points around a base point `x0`, with the current
/// (transformed) objective values at those points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationSet {
    points: Vec<DVector<f64>>,
    base: DVector<f64>,
    opt: usize,
    values: Vec<f64>,
}

fn check_m(n: usize, m: usize) -> Result<()> {
    let max = (n + 1) * (n + 2) / 2;
    if m < n + 2 || m > max {
        return Err(DfoError::InvalidParameter(format!(
            "number of interpolation points {m} outside [{}, {max}] for n = {n}",
            n + 2
        )));
    }
    Ok(())
}

impl InterpolationSet {
    pub fn new(points: Vec<DVector<f64>>, base: DVector<f64>, values: Vec<f64>) -> Result<Self> {
        let n = base.len();
        if n == 0 {
            return Err(DfoError::InvalidParameter("dimension must be >= 1".into()));
        }
        check_m(n, points.len())?;
        if values.len() != points.len() {
            return Err(DfoError::DimensionMismatch { expected: points.len(), got: values.len() });
        }
        for p in &points {
            if p.len() != n {
                return Err(DfoError::DimensionMismatch { expected: n, got: p.len() });
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(DfoError::DegenerateGeometry(format!("points {j} and {i} coincide")));
                }
            }
        }
        let mut set = Self { points, base, opt: 0, values };
        set.recompute_opt();
        Ok(set)
    }

    pub fn n(&self) -> usize {
        self.base.len()
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &DVector<f64> {
        &self.points[i]
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn opt_index(&self) -> usize {
        self.opt
    }

    pub fn x_opt(&self) -> &DVector<f64> {
        &self.points[self.opt]
    }

    pub fn f_opt(&self) -> f64 {
        self.values[self.opt]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Displacement of point `i` from the base.
    pub fn y(&self, i: usize) -> DVector<f64> {
        &self.points[i] - &self.base
    }

    pub fn ys(&self) -> Vec<DVector<f64>> {
        (0..self.m()).map(|i| self.y(i)).collect()
    }

    /// Largest coordinate magnitude of any displacement from the base.
    pub fn scale(&self) -> f64 {
        self.points.iter().map(|p| (p - &self.base).amax()).fold(0.0, f64::max)
    }

    /// Replaces all values; the best point is recomputed.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.m() {
            return Err(DfoError::DimensionMismatch { expected: self.m(), got: values.len() });
        }
        self.values = values;
        self.recompute_opt();
        Ok(())
    }

    /// Replaces point `t`, leaving the best index untouched.
    pub fn replace(&mut self, t: usize, x: DVector<f64>, value: f64) {
        self.points[t] = x;
        self.values[t] = value;
    }

    pub fn set_opt(&mut self, i: usize) {
        assert!(i < self.m());
        self.opt = i;
    }

    /// Index of the smallest value; ties keep the lowest index.
    pub fn recompute_opt(&mut self) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        self.opt = best;
    }

    pub(crate) fn set_base(&mut self, base: DVector<f64>) {
        self.base = base;
    }

    pub fn max_distance_from_opt(&self) -> (usize, f64) {
        let xo = self.x_opt();
        self.points.iter().enumerate().map(|(i, p)| (i, (p - xo).norm())).fold((self.opt, 0.0), |a, b| {
            if b.1 > a.1 {
                b
            } else {
                a
            }
        })
    }
}

/// `x0`, then `x0 + rho e_i`, then `x0 - rho e_i`, then `x0 + rho (e_i + e_j)`
/// for pairs `i < j` in lexicographic order, truncated to `m` points.
pub fn build_initial_points(x0: &DVector<f64>, rho_beg: f64, m: usize) -> Result<Vec<DVector<f64>>> {
    let n = x0.len();
    if n == 0 {
        return Err(DfoError::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(rho_beg > 0.0 && rho_beg.is_finite()) {
        return Err(DfoError::InvalidParameter(format!("initial radius must be > 0, got {rho_beg}")));
    }
    check_m(n, m)?;
    let mut pts = Vec::with_capacity(m);
    pts.push(x0.clone());
    for sign in [1.0, -1.0] {
        for i in 0..n {
            if pts.len() == m {
                return Ok(pts);
            }
            let mut p = x0.clone();
            p[i] += sign * rho_beg;
            pts.push(p);
        }
    }
    'outer: for i in 0..n {
        for j in i + 1..n {
            if pts.len() == m {
                break 'outer;
            }
            let mut p = x0.clone();
            p[i] += rho_beg;
            p[j] += rho_beg;
            pts.push(p);
        }
    }
    Ok(pts)
}

/// Initial set with base `x0` and zero values, to be filled by the caller.
pub fn build_initial_set(x0: &DVector<f64>, rho_beg: f64, m: usize) -> Result<InterpolationSet> {
    let pts = build_initial_points(x0, rho_beg, m)?;
    let values = vec![0.0; pts.len()];
    InterpolationSet::new(pts, x0.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn two_dimensional_pattern() {
        let s = build_initial_set(&v(&[0.0, 0.0]), 1.0, 5).unwrap();
        let expect = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in s.points().iter().zip(expect) {
            assert_eq!(p.as_slice(), e);
        }
    }

    #[test]
    fn one_dimensional_pattern() {
        let s = build_initial_set(&v(&[2.0]), 0.5, 3).unwrap();
        let got: Vec<f64> = s.points().iter().map(|p| p[0]).collect();
        assert_eq!(got, vec![2.0, 2.5, 1.5]);
    }

    #[test]
    fn full_quadratic_count_uses_cross_terms() {
        let s = build_initial_set(&v(&[0.0, 0.0, 0.0]), 1.0, 10).unwrap();
        assert_eq!(s.point(7).as_slice(), &[1.0, 1.0, 0.0]);
        assert_eq!(s.point(9).as_slice(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_m_and_radius() {
        assert!(build_initial_set(&v(&[0.0, 0.0]), 1.0, 3).is_err());
        assert!(build_initial_set(&v(&[0.0, 0.0]), 1.0, 7).is_err());
        assert!(build_initial_set(&v(&[0.0, 0.0]), 0.0, 5).is_err());
    }

    #[test]
    fn opt_tracks_minimum() {
        let mut s = build_initial_set(&v(&[0.0]), 1.0, 3).unwrap();
        s.set_values(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.opt_index(), 1);
        assert_eq!(s.f_opt(), 1.0);
    }

    proptest! {
        #[test]
        fn points_are_separated(n in 1usize..7, frac in 0f64..1.0, rho in 1e-6f64..1e3, c in -100f64..100.0) {
            let lo = n + 2;
            let hi = (n + 1) * (n + 2) / 2;
            let m = lo + ((hi - lo) as f64 * frac) as usize;
            let x0 = DVector::from_element(n, c);
            let pts = build_initial_points(&x0, rho, m).unwrap();
            prop_assert_eq!(pts.len(), m);
            for i in 0..m {
                for j in 0..i {
                    prop_assert!((&pts[i] - &pts[j]).norm() >= rho * 1e-8);
                }
            }
        }
    }
}
