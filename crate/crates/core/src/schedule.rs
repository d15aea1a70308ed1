use serde::{Deserialize, Serialize};

/// A per-iteration coefficient `offset + coef * k^power`, a pure function of
/// the iteration index `k >= 1`.
///
/// `Lap(100/k)` scales are `Schedule::power_law(100.0, -1.0)`, a translation by
/// `k` is `Schedule::power_law(1.0, 1.0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub coef: f64,
    #[serde(default)]
    pub power: f64,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Self { offset: value, coef: 0.0, power: 0.0 }
    }

    pub fn power_law(coef: f64, power: f64) -> Self {
        Self { offset: 0.0, coef, power }
    }

    pub fn affine(offset: f64, slope: f64) -> Self {
        Self { offset, coef: slope, power: 1.0 }
    }

    pub fn at(&self, k: u64) -> f64 {
        let k = k as f64;
        let scaled = if self.power == 0.0 {
            self.coef
        } else if self.power == 1.0 {
            self.coef * k
        } else if self.power == -1.0 {
            self.coef / k
        } else {
            self.coef * k.powf(self.power)
        };
        self.offset + scaled
    }
}
