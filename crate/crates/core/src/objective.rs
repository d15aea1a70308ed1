//! Objectives `F = f + h`, their per-iteration transformations `F_k = T_k(F)`
//! and the batch evaluation protocol: every batch at iteration `k` is computed
//! under one shared transformation, and each distinct point calls the black
//! box only once.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DfoError, Result};
use crate::model::{InterpolationSet, QuadraticModel};
use crate::point::{Point, PointKey};
use crate::privacy::{self, IterationDraws, LaplaceParams, Mechanism, MixParams};
use crate::rng::CounterRng;
use crate::schedule::Schedule;

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Value-level transformation `(k, F(x)) -> F_k(x)`.
pub type ValueTransform = Arc<dyn Fn(u64, f64) -> f64 + Send + Sync>;
/// Per-iteration value overrides keyed by point.
pub type OverrideTable = HashMap<u64, HashMap<PointKey, f64>>;

/// `F(x) = f(x) + h(x)` with `f` public and `h` private.
#[derive(Clone)]
pub struct ObjectiveSpec {
    pub name: String,
    pub dimension: usize,
    pub public_part: Evaluator,
    pub private_part: Evaluator,
}

impl ObjectiveSpec {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        public_part: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        private_part: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dimension, public_part: Arc::new(public_part), private_part: Arc::new(private_part) }
    }

    /// An objective with `f = 0`, entirely private.
    pub fn private_only(
        name: impl Into<String>,
        dimension: usize,
        h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, dimension, |_| 0.0, h)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.public_part)(x) + (self.private_part)(x)
    }
}

impl fmt::Debug for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectiveSpec")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .finish_non_exhaustive()
    }
}

#[derive(Clone)]
pub enum TransformKind {
    Identity,
    /// `F_k = F + shift(k)`.
    Translation {
        shift: Schedule,
    },
    /// `F_k = scale(k) * F + shift(k)` with `scale(k) > 0`.
    Linear {
        scale: Schedule,
        shift: Schedule,
    },
    /// `F_k = f + h + C * eta_k`.
    AdditiveDp(LaplaceParams),
    /// Per-iteration coin between the additive and multiplicative operators.
    MixedDp(MixParams),
    /// Raw values unless overridden for `(k, point)`.
    CustomTable(Arc<OverrideTable>),
    /// Arbitrary `(k, F) -> F_k`.
    Custom(ValueTransform),
}

impl fmt::Debug for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformKind::Identity => write!(f, "Identity"),
            TransformKind::Translation { shift } => f.debug_struct("Translation").field("shift", shift).finish(),
            TransformKind::Linear { scale, shift } => {
                f.debug_struct("Linear").field("scale", scale).field("shift", shift).finish()
            }
            TransformKind::AdditiveDp(p) => f.debug_tuple("AdditiveDp").field(p).finish(),
            TransformKind::MixedDp(p) => f.debug_tuple("MixedDp").field(p).finish(),
            TransformKind::CustomTable(t) => write!(f, "CustomTable({} iterations)", t.len()),
            TransformKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformSchedule {
    pub kind: TransformKind,
    pub seed: u64,
    /// Draw independent noise for every point instead of one draw per
    /// iteration. Breaks the shared-noise assumption the solver relies on.
    pub per_point_noise: bool,
}

impl TransformSchedule {
    pub fn new(kind: TransformKind, seed: u64) -> Self {
        Self { kind, seed, per_point_noise: false }
    }

    pub fn identity() -> Self {
        Self::new(TransformKind::Identity, 0)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            TransformKind::AdditiveDp(p) => p.validate(),
            TransformKind::MixedDp(p) => p.validate(),
            _ => Ok(()),
        }
    }

    fn is_random(&self) -> bool {
        matches!(self.kind, TransformKind::AdditiveDp(_) | TransformKind::MixedDp(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CachedEval {
    /// Order of first evaluation, starting at 0.
    pub id: usize,
    pub f: f64,
    pub h: f64,
}

impl CachedEval {
    pub fn value(&self) -> f64 {
        self.f + self.h
    }
}

/// One row of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub k: u64,
    pub point_id: usize,
    pub f: f64,
    pub h: f64,
    pub noise: f64,
    pub value: f64,
}

/// Cache of black-box results and, when auditing, the noise that was applied.
#[derive(Debug, Clone, Default)]
pub struct EvaluationLedger {
    cache: HashMap<PointKey, CachedEval>,
    first_seen: Vec<DVector<f64>>,
    draws: BTreeMap<u64, IterationDraws>,
    audit: Vec<AuditRow>,
}

impl EvaluationLedger {
    /// Number of distinct points ever evaluated.
    pub fn nf(&self) -> usize {
        self.first_seen.len()
    }

    pub fn get(&self, x: &DVector<f64>) -> Option<&CachedEval> {
        self.cache.get(&PointKey::of(x))
    }

    /// Points in the order they were first evaluated.
    pub fn points(&self) -> &[DVector<f64>] {
        &self.first_seen
    }

    /// Untransformed `F` of every distinct point, in evaluation order.
    pub fn raw_history(&self) -> Vec<f64> {
        self.first_seen.iter().map(|x| self.cache[&PointKey::of(x)].value()).collect()
    }

    pub fn audit_rows(&self) -> &[AuditRow] {
        &self.audit
    }

    pub fn audit_csv(&self) -> String {
        let mut out = String::from("k,point_id,f,h,noise,F_k\n");
        for r in &self.audit {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.k, r.point_id, r.f, r.h, r.noise, r.value));
        }
        out
    }
}

/// A stateful objective: spec, transformation and ledger.
#[derive(Debug, Clone)]
pub struct Objective {
    spec: ObjectiveSpec,
    schedule: TransformSchedule,
    rng: CounterRng,
    ledger: EvaluationLedger,
    last_k: Option<u64>,
    audit: bool,
}

impl Objective {
    pub fn new(spec: ObjectiveSpec, schedule: TransformSchedule) -> Result<Self> {
        if spec.dimension == 0 {
            return Err(DfoError::InvalidParameter("dimension must be >= 1".into()));
        }
        schedule.validate()?;
        let rng = CounterRng::new(schedule.seed);
        Ok(Self { spec, schedule, rng, ledger: EvaluationLedger::default(), last_k: None, audit: false })
    }

    /// Records noise draws and every returned value. A real data provider
    /// would not reveal these; use for testing and offline budget audits.
    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &TransformSchedule {
        &self.schedule
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn nf(&self) -> usize {
        self.ledger.nf()
    }

    pub fn ledger(&self) -> &EvaluationLedger {
        &self.ledger
    }

    pub fn last_k(&self) -> Option<u64> {
        self.last_k
    }

    /// Noise draws per iteration; only available when auditing.
    pub fn noise_record(&self) -> Option<&BTreeMap<u64, IterationDraws>> {
        self.audit.then_some(&self.ledger.draws)
    }

    /// Untransformed `F(x)` of an already evaluated point.
    pub fn raw_value(&self, x: &DVector<f64>) -> Option<f64> {
        self.ledger.get(x).map(CachedEval::value)
    }

    pub fn evaluate_points(&mut self, points: &[Point], k: u64) -> Result<Vec<f64>> {
        let v: Vec<DVector<f64>> = points.iter().map(|p| p.vector().clone()).collect();
        self.evaluate_batch(&v, k)
    }

    /// `F_k` at every point, all under the single iteration-`k` transformation.
    /// `k` must be at least 1 and may not decrease between calls.
    pub fn evaluate_batch(&mut self, points: &[DVector<f64>], k: u64) -> Result<Vec<f64>> {
        if k == 0 {
            return Err(DfoError::Protocol("iteration index must be >= 1".into()));
        }
        if let Some(last) = self.last_k {
            if k < last {
                return Err(DfoError::Protocol(format!("iteration index decreased from {last} to {k}")));
            }
        }
        for x in points {
            if x.len() != self.spec.dimension {
                return Err(DfoError::DimensionMismatch { expected: self.spec.dimension, got: x.len() });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DfoError::InvalidParameter(format!("non-finite point {:?}", x.as_slice())));
            }
        }
        self.last_k = Some(k);
        let draws = self.iteration_draws(k)?;
        let mut out = Vec::with_capacity(points.len());
        for x in points {
            let cached = self.lookup_or_evaluate(x)?;
            let (value, noise) = self.transform(k, x, cached, draws.as_ref())?;
            if !value.is_finite() {
                return Err(DfoError::EvaluationFailure { point: x.as_slice().to_vec(), value });
            }
            if self.audit {
                self.ledger.audit.push(AuditRow { k, point_id: cached.id, f: cached.f, h: cached.h, noise, value });
            }
            out.push(value);
        }
        Ok(out)
    }

    fn lookup_or_evaluate(&mut self, x: &DVector<f64>) -> Result<CachedEval> {
        let key = PointKey::of(x);
        if let Some(c) = self.ledger.cache.get(&key) {
            return Ok(*c);
        }
        let f = (self.spec.public_part)(x.as_slice());
        let h = (self.spec.private_part)(x.as_slice());
        if !f.is_finite() || !h.is_finite() {
            return Err(DfoError::EvaluationFailure { point: x.as_slice().to_vec(), value: f + h });
        }
        let c = CachedEval { id: self.ledger.first_seen.len(), f, h };
        self.ledger.cache.insert(key, c);
        self.ledger.first_seen.push(x.clone());
        Ok(c)
    }

    fn iteration_draws(&mut self, k: u64) -> Result<Option<IterationDraws>> {
        if !self.schedule.is_random() {
            return Ok(None);
        }
        if let Some(d) = self.ledger.draws.get(&k) {
            return Ok(Some(*d));
        }
        let d = match &self.schedule.kind {
            TransformKind::AdditiveDp(p) => privacy::additive_draws(p, &self.rng, k)?,
            TransformKind::MixedDp(p) => privacy::mixed_draws(p, &self.rng, k)?,
            _ => unreachable!(),
        };
        self.ledger.draws.insert(k, d);
        Ok(Some(d))
    }

    fn point_draws(&self, k: u64, x: &DVector<f64>, shared: IterationDraws) -> Result<IterationDraws> {
        if !self.schedule.per_point_noise {
            return Ok(shared);
        }
        // independent stream per point, keyed by its coordinates
        let index = 3 + (fnv1a(&PointKey::of(x)) >> 4);
        let mut d = shared;
        match &self.schedule.kind {
            TransformKind::AdditiveDp(p) => d.eta = privacy::sample_laplace(p.b_at(k)?, &self.rng, k, index)?,
            TransformKind::MixedDp(p) => match d.mechanism {
                Mechanism::A => d.eta = privacy::sample_laplace(p.laplace.b_at(k)?, &self.rng, k, index)?,
                Mechanism::B => d.gamma = 2.0 * p.uniform.u_at(k)? * self.rng.centered(k, index),
            },
            _ => {}
        }
        Ok(d)
    }

    /// Returns `(F_k(x), F_k(x) - F(x))`.
    fn transform(&self, k: u64, x: &DVector<f64>, c: CachedEval, draws: Option<&IterationDraws>) -> Result<(f64, f64)> {
        let raw = c.value();
        let value = match &self.schedule.kind {
            TransformKind::Identity => raw,
            TransformKind::Translation { shift } => raw + shift.at(k),
            TransformKind::Linear { scale, shift } => {
                let s = scale.at(k);
                if !(s > 0.0) {
                    return Err(DfoError::InvalidParameter(format!("linear scale at k = {k} is {s}, must be > 0")));
                }
                s * raw + shift.at(k)
            }
            TransformKind::AdditiveDp(p) => {
                let d = self.point_draws(k, x, *draws.expect("draws"))?;
                c.f + privacy::additive_encrypt(c.h, p, d.eta)
            }
            TransformKind::MixedDp(p) => {
                let d = self.point_draws(k, x, *draws.expect("draws"))?;
                c.f + privacy::mixed_encrypt(c.f, c.h, p, &d)?.0
            }
            TransformKind::CustomTable(table) => {
                table.get(&k).and_then(|m| m.get(&PointKey::of(x)).copied()).unwrap_or(raw)
            }
            TransformKind::Custom(t) => t(k, raw),
        };
        Ok((value, value - raw))
    }
}

fn fnv1a(key: &PointKey) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for word in key.bits() {
        for b in word.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// `(F_{k+1}(x_new) - F_k(x_opt)) - (Q_old(x_new) - Q_old(x_opt))`.
pub fn delta_k(f_new_at_xnew: f64, f_old_at_xopt: f64, q_old_at_xnew: f64, q_old_at_xopt: f64) -> Result<f64> {
    let all = [f_new_at_xnew, f_old_at_xopt, q_old_at_xnew, q_old_at_xopt];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(DfoError::InvalidParameter(format!("non-finite input to delta_k: {all:?}")));
    }
    Ok((f_new_at_xnew - f_old_at_xopt) - (q_old_at_xnew - q_old_at_xopt))
}

/// Right-hand side of the model update from values before and after the
/// transformation changed: `fresh[i] - old[i]` off `t`, `delta` at `t`.
pub fn residual_from_values(old: &[f64], fresh: &[f64], t: usize, delta: f64) -> Vec<f64> {
    old.iter().zip(fresh).enumerate().map(|(i, (o, f))| if i == t { delta } else { f - o }).collect()
}

/// Evaluates the set and `x_new` at `k + 1` and returns the update residual
/// for replacing point `t` by `x_new`, along with the fresh values of the
/// current set points and of `x_new`.
pub fn residual_vector(
    objective: &mut Objective,
    set: &InterpolationSet,
    k: u64,
    x_new: &DVector<f64>,
    t: usize,
    q_old: &QuadraticModel,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if t >= set.m() {
        return Err(DfoError::InvalidParameter(format!("drop index {t} out of range 0..{}", set.m())));
    }
    let mut batch: Vec<DVector<f64>> = set.points().to_vec();
    batch.push(x_new.clone());
    let mut fresh = objective.evaluate_batch(&batch, k + 1)?;
    let f_new = fresh.pop().expect("batch contains x_new");
    let opt = set.opt_index();
    let x_opt = set.point(opt);
    let delta = delta_k(f_new, set.values()[opt], q_old.value(x_new), q_old.value(x_opt))?;
    Ok((residual_from_values(set.values(), &fresh, t, delta), fresh, f_new))
}
