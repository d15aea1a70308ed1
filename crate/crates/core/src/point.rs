use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DfoError, Result};

/// A finite point in `R^n`, `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(DVector<f64>);

/// Exact bit-pattern identity of a point's coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointKey(Vec<u64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(coords))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(DfoError::InvalidParameter("point must have dimension >= 1".into()));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(DfoError::InvalidParameter(format!("non-finite coordinate {bad}")));
        }
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn key(&self) -> PointKey {
        PointKey::of(&self.0)
    }
}

impl PointKey {
    pub fn of(v: &DVector<f64>) -> Self {
        // -0.0 and 0.0 name the same point
        Self(v.iter().map(|x| (x + 0.0).to_bits()).collect())
    }

    pub fn bits(&self) -> &[u64] {
        &self.0
    }
}

impl From<Point> for DVector<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl std::ops::Deref for Point {
    type Target = DVector<f64>;

    fn deref(&self) -> &Self::Target {
        &self.0
    }
}
