//! Noise mechanisms applied to the private part `h` of an objective, and the
//! per-iteration privacy budgets they provide.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{DfoError, Result};
use crate::rng::{CounterRng, DRAW_COIN, DRAW_LAPLACE, DRAW_UNIFORM};
use crate::schedule::Schedule;

/// Additive Laplace mechanism: `h + C * eta_k`, `eta_k ~ Lap(b_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub scale: Schedule,
    pub c: f64,
}

/// Multiplicative operator: `h + gamma_k * (f + h)`, `gamma_k ~ U(-u_k, u_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformParams {
    pub halfwidth: Schedule,
}

/// Mixed mechanism: one coin per iteration picks the additive operator with
/// probability `prob_additive`, the multiplicative one otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub laplace: LaplaceParams,
    pub uniform: UniformParams,
    pub prob_additive: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    /// Additive Laplace noise.
    A,
    /// Multiplicative uniform noise.
    B,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::A => write!(f, "A"),
            Mechanism::B => write!(f, "B"),
        }
    }
}

/// All random quantities of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationDraws {
    pub k: u64,
    pub eta: f64,
    pub gamma: f64,
    pub mechanism: Mechanism,
}

impl LaplaceParams {
    pub fn new(scale: Schedule, c: f64) -> Result<Self> {
        let p = Self { scale, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(DfoError::InvalidParameter(format!("laplace coefficient C must be > 0, got {}", self.c)));
        }
        Ok(())
    }

    pub fn b_at(&self, k: u64) -> Result<f64> {
        let b = self.scale.at(k);
        if !(b > 0.0 && b.is_finite()) {
            return Err(DfoError::InvalidParameter(format!("laplace scale b_{k} = {b} must be > 0")));
        }
        Ok(b)
    }
}

impl UniformParams {
    /// Half-width `u_k`, required in `(0, 1]`.
    pub fn u_at(&self, k: u64) -> Result<f64> {
        let u = self.halfwidth.at(k);
        if !(u > 0.0 && u <= 1.0) {
            return Err(DfoError::InvalidParameter(format!("uniform half-width u_{k} = {u} must lie in (0, 1]")));
        }
        Ok(u)
    }
}

impl MixParams {
    pub fn new(laplace: LaplaceParams, uniform: UniformParams, prob_additive: f64) -> Result<Self> {
        let p = Self { laplace, uniform, prob_additive };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.laplace.validate()?;
        if !(0.0..=1.0).contains(&self.prob_additive) {
            return Err(DfoError::InvalidParameter(format!(
                "prob_additive must lie in [0, 1], got {}",
                self.prob_additive
            )));
        }
        Ok(())
    }
}

/// Inverse-CDF map from `u ~ U(-1/2, 1/2)` to `Lap(b)`.
pub fn laplace_from_uniform(b: f64, u: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(DfoError::InvalidParameter(format!("laplace scale must be > 0, got {b}")));
    }
    if !(u > -0.5 && u < 0.5) {
        return Err(DfoError::InvalidParameter(format!("uniform draw {u} outside (-1/2, 1/2)")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(-b * u.signum() * (-2.0 * u.abs()).ln_1p())
}

/// Draws `Lap(b)` from the counter stream at `(k, index)`.
pub fn sample_laplace(b: f64, rng: &CounterRng, k: u64, index: u64) -> Result<f64> {
    laplace_from_uniform(b, rng.centered(k, index))
}

pub fn laplace_pdf(b: f64, x: f64) -> f64 {
    (-x.abs() / b).exp() / (2.0 * b)
}

/// The iteration-`k` draws of the additive mechanism alone.
pub fn additive_draws(params: &LaplaceParams, rng: &CounterRng, k: u64) -> Result<IterationDraws> {
    let eta = sample_laplace(params.b_at(k)?, rng, k, DRAW_LAPLACE)?;
    Ok(IterationDraws { k, eta, gamma: 0.0, mechanism: Mechanism::A })
}

/// The iteration-`k` coin and draws of the mixed mechanism.
pub fn mixed_draws(params: &MixParams, rng: &CounterRng, k: u64) -> Result<IterationDraws> {
    params.validate()?;
    let coin = rng.uniform(k, DRAW_COIN);
    let mechanism = if coin < params.prob_additive { Mechanism::A } else { Mechanism::B };
    let (eta, gamma) = match mechanism {
        Mechanism::A => (sample_laplace(params.laplace.b_at(k)?, rng, k, DRAW_LAPLACE)?, 0.0),
        Mechanism::B => (0.0, 2.0 * params.uniform.u_at(k)? * rng.centered(k, DRAW_UNIFORM)),
    };
    Ok(IterationDraws { k, eta, gamma, mechanism })
}

pub fn additive_encrypt(h_value: f64, params: &LaplaceParams, eta_k: f64) -> f64 {
    h_value + params.c * eta_k
}

pub fn multiplicative_encrypt(f_value: f64, h_value: f64, gamma_k: f64, k: u64) -> Result<f64> {
    let total = f_value + h_value;
    if total == 0.0 {
        return Err(DfoError::DegenerateEncryption { k });
    }
    Ok(h_value + gamma_k * total)
}

pub fn mixed_encrypt(
    f_value: f64,
    h_value: f64,
    params: &MixParams,
    draws: &IterationDraws,
) -> Result<(f64, Mechanism)> {
    match draws.mechanism {
        Mechanism::A => Ok((additive_encrypt(h_value, &params.laplace, draws.eta), Mechanism::A)),
        Mechanism::B => Ok((multiplicative_encrypt(f_value, h_value, draws.gamma, draws.k)?, Mechanism::B)),
    }
}

/// Largest successive absolute difference of `h` over a window of iterates.
pub fn global_sensitivity(window: &[f64]) -> Result<f64> {
    if window.len() < 2 {
        return Err(DfoError::InvalidParameter("sensitivity window needs at least 2 values".into()));
    }
    Ok(window.windows(2).map(|p| (p[0] - p[1]).abs()).fold(0.0, f64::max))
}

pub fn budget_additive(gs: f64, b_k: f64, c: f64) -> Result<f64> {
    if !(b_k > 0.0) || !(c > 0.0) {
        return Err(DfoError::InvalidParameter(format!("b_k = {b_k} and C = {c} must be > 0")));
    }
    if !(gs >= 0.0) {
        return Err(DfoError::InvalidParameter(format!("global sensitivity {gs} must be >= 0")));
    }
    Ok(gs / (b_k * c))
}

/// Largest `|ln(|v_{j+1}| / |v_j|)|` over successive values of `f + h`.
pub fn budget_multiplicative(window_fh: &[f64]) -> Result<f64> {
    if window_fh.contains(&0.0) {
        return Err(DfoError::DegenerateEncryption { k: 0 });
    }
    Ok(window_fh.windows(2).map(|p| (p[1].abs().ln() - p[0].abs().ln()).abs()).fold(0.0, f64::max))
}

pub fn budget_mixed(eps_add: f64, eps_mult: f64) -> Result<f64> {
    if !(eps_add >= 0.0 && eps_mult >= 0.0) {
        return Err(DfoError::InvalidParameter("budgets must be >= 0".into()));
    }
    Ok(eps_add + eps_mult)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub k: u64,
    pub mechanism: Mechanism,
    pub gs: f64,
    pub b_k: f64,
    pub c: f64,
    pub eps_additive: f64,
    pub eps_multiplicative: f64,
    pub eps_total: f64,
}

/// Append-only, k-ordered record of per-iteration budgets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    records: Vec<BudgetRecord>,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: BudgetRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.k <= last.k {
                return Err(DfoError::Protocol(format!("budget record for k = {} after k = {}", record.k, last.k)));
            }
        }
        if !(record.eps_total >= 0.0) {
            return Err(DfoError::InvalidParameter(format!("negative budget at k = {}", record.k)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[BudgetRecord] {
        &self.records
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mechanism,gs,b_k,c,eps_k,eps_prime_k,eps_bar_k\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.k, r.mechanism, r.gs, r.b_k, r.c, r.eps_additive, r.eps_multiplicative, r.eps_total
            ));
        }
        out
    }
}

/// Private and total objective values at the best point of iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateValues {
    pub k: u64,
    pub h: f64,
    pub fh: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum BudgetSource<'a> {
    Additive(&'a LaplaceParams),
    Mixed(&'a MixParams),
}

/// Per-iteration budgets over the last `window` iterates, computed by the
/// data owner from true values. Additive-only runs carry no multiplicative
/// term; mixed runs sum both terms whichever operator fired.
pub fn audit_budgets(
    source: BudgetSource<'_>,
    seed: u64,
    iterates: &[IterateValues],
    window: usize,
) -> Result<BudgetLedger> {
    if window < 2 {
        return Err(DfoError::InvalidParameter(format!("budget window must be >= 2, got {window}")));
    }
    let rng = CounterRng::new(seed);
    let mut ledger = BudgetLedger::new();
    for end in 1..iterates.len() {
        let start = (end + 1).saturating_sub(window);
        let span = &iterates[start..=end];
        let k = iterates[end].k;
        let hs: Vec<f64> = span.iter().map(|v| v.h).collect();
        let gs = global_sensitivity(&hs)?;
        let (laplace, mechanism) = match source {
            BudgetSource::Additive(p) => (p, Mechanism::A),
            BudgetSource::Mixed(p) => (&p.laplace, mixed_draws(p, &rng, k)?.mechanism),
        };
        let b_k = laplace.b_at(k)?;
        let eps_additive = budget_additive(gs, b_k, laplace.c)?;
        let eps_multiplicative = match source {
            BudgetSource::Additive(_) => 0.0,
            BudgetSource::Mixed(_) => {
                let fh: Vec<f64> = span.iter().map(|v| v.fh).collect();
                budget_multiplicative(&fh).map_err(|_| DfoError::DegenerateEncryption { k })?
            }
        };
        ledger.push(BudgetRecord {
            k,
            mechanism,
            gs,
            b_k,
            c: laplace.c,
            eps_additive,
            eps_multiplicative,
            eps_total: budget_mixed(eps_additive, eps_multiplicative)?,
        })?;
    }
    Ok(ledger)
}
