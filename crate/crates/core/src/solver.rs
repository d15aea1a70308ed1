//! The outer trust-region loop.
//!
//! Every evaluation of a new point happens in one batch together with all
//! retained interpolation points, at a fresh iteration index, so the model
//! can be moved to the new transformed objective before the new point is
//! interpolated.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DfoError, Result};
use crate::model::{
    build_initial_points, shift_base, side_conditions, solve_initial_model, update_model, InterpolationSet, KktSystem,
    QuadraticModel, DEFAULT_SIGMA_FLOOR,
};
use crate::objective::{delta_k, residual_from_values, Objective, ObjectiveSpec, TransformSchedule};
use crate::point::Point;
use crate::subproblems::{bigden, biglag, trsapp, TrustRegion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rho_beg: f64,
    pub rho_end: f64,
    /// Number of interpolation points; `2n + 1` when unset.
    pub m: Option<usize>,
    pub max_evals: usize,
    /// Ignore the per-iteration change of the transformation: only the new
    /// point is evaluated and the residual is one-hot, as in classical
    /// model-based solvers.
    pub newuoa_mode: bool,
    /// Overrides the seed of the transformation schedule when set.
    pub seed: Option<u64>,
    pub sigma_floor: f64,
    /// Refactorize `H` when `max |W H - I|` exceeds this.
    pub drift_tol: f64,
    /// Keep a copy of the model after every update.
    pub record_models: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho_beg: 1.0,
            rho_end: 1e-6,
            m: None,
            max_evals: 10_000,
            newuoa_mode: false,
            seed: None,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            drift_tol: 1e-6,
            record_models: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<usize> {
        if !(self.rho_end > 0.0 && self.rho_end < self.rho_beg && self.rho_beg.is_finite()) {
            return Err(DfoError::InvalidParameter(format!(
                "need 0 < rho_end < rho_beg, got rho_beg = {}, rho_end = {}",
                self.rho_beg, self.rho_end
            )));
        }
        let m = self.m.unwrap_or(2 * n + 1);
        let max = (n + 1) * (n + 2) / 2;
        if m < n + 2 || m > max {
            return Err(DfoError::InvalidParameter(format!("m = {m} outside [{}, {max}]", n + 2)));
        }
        if self.max_evals < m + 1 {
            return Err(DfoError::InvalidParameter(format!("max_evals = {} must exceed m = {m}", self.max_evals)));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    /// The radius schedule reached `rho_end`.
    Converged,
    BudgetExhausted,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Initial,
    /// Trust-region step that was evaluated.
    TrustRegion,
    /// Trust-region step shorter than `rho / 2`, not evaluated.
    Short,
    /// Geometry-improving step.
    Geometry,
    /// Interpolation set rebuilt around the best point.
    Rebuild,
    RhoReduction,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u64,
    pub kind: StepKind,
    pub x_opt: Vec<f64>,
    /// Untransformed objective at `x_opt`.
    pub f_opt_raw: f64,
    /// Transformed objective at `x_opt` under the latest transformation.
    pub f_opt: f64,
    pub delta: f64,
    pub rho: f64,
    pub ratio: f64,
    pub step_norm: f64,
    /// Radius the step was computed for.
    pub step_radius: f64,
    /// Index of the replaced interpolation point, if any.
    pub moved: Option<usize>,
    pub nf: usize,
}

/// Side conditions of the coefficients `lambda` of one model update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateAudit {
    pub k: u64,
    /// `|sum_j lambda_j|`.
    pub lambda_sum: f64,
    /// `||sum_j lambda_j y_j||`.
    pub lambda_moment: f64,
    /// `sum_j |lambda_j| * max(1, max_j ||y_j||)`, the size of the sums
    /// without cancellation.
    pub scale: f64,
}

/// Inputs and outcome of one trust-region subproblem solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub k: u64,
    pub delta: f64,
    pub gradient_norm: f64,
    /// Spectral norm of the model Hessian.
    pub hessian_norm: f64,
    pub predicted_reduction: f64,
}

impl StepAudit {
    /// `||g|| min(delta, ||g|| / ||B||) / 2`.
    pub fn cauchy_bound(&self) -> f64 {
        let ratio = if self.hessian_norm > 0.0 { self.gradient_norm / self.hessian_norm } else { f64::INFINITY };
        0.5 * self.gradient_norm * self.delta.min(ratio)
    }
}

fn update_audit(k: u64, lambda: &DVector<f64>, set: &InterpolationSet) -> UpdateAudit {
    let (sum, moment) = side_conditions(lambda, set);
    let ymax = (0..set.m()).map(|j| set.y(j).norm()).fold(1.0, f64::max);
    UpdateAudit { k, lambda_sum: sum.abs(), lambda_moment: moment, scale: lambda.abs().sum() * ymax }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub k: u64,
    pub x_opt: Vec<f64>,
    pub model: QuadraticModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub x_opt: Vec<f64>,
    pub f_opt: f64,
    pub f_opt_raw: f64,
    pub status: Status,
    pub message: Option<String>,
    pub nf: usize,
    pub k_final: u64,
    /// Untransformed objective at the solver's best point after each
    /// distinct evaluation; length `nf`.
    pub history: Vec<f64>,
    pub models: Vec<ModelSnapshot>,
    /// `||grad Q(x_opt)||` of the final model.
    pub final_model_gradient_norm: f64,
    /// Longest run of consecutive evaluated steps with `||d|| >= rho / 2`.
    pub longest_long_step_run: usize,
    pub rebuilds: usize,
    pub refactorizations: usize,
    pub update_audits: Vec<UpdateAudit>,
    pub step_audits: Vec<StepAudit>,
}

impl SolverTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn records_csv(&self) -> String {
        let mut out = String::from("k,kind,f_opt_raw,f_opt,delta,rho,ratio,step_norm,step_radius,moved,nf,x_opt\n");
        for r in &self.records {
            let x: Vec<String> = r.x_opt.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{},{:?},{},{},{},{},{},{},{},{},{},\"{}\"\n",
                r.k,
                r.kind,
                r.f_opt_raw,
                r.f_opt,
                r.delta,
                r.rho,
                r.ratio,
                r.step_norm,
                r.step_radius,
                r.moved.map(|m| m.to_string()).unwrap_or_default(),
                r.nf,
                x.join(" ")
            ));
        }
        out
    }
}

/// New trust-region radius after a step with reduction ratio `ratio`.
pub fn update_trust_region(delta: f64, ratio: f64, step_norm: f64, rho: f64) -> f64 {
    let mut d = if ratio <= 0.1 {
        0.5 * step_norm
    } else if ratio <= 0.7 {
        (0.5 * delta).max(step_norm)
    } else {
        (0.5 * delta).max(2.0 * step_norm)
    };
    if d <= 1.5 * rho {
        d = rho;
    }
    d.max(rho)
}

/// Next lower bound on the trust-region radius.
pub fn reduce_rho(rho: f64, rho_end: f64) -> f64 {
    let ratio = rho / rho_end;
    if ratio <= 16.0 {
        rho_end
    } else if ratio <= 250.0 {
        (rho * rho_end).sqrt()
    } else {
        0.1 * rho
    }
}

/// Minimizes `spec` under `schedule` from `x0`.
pub fn minimize(
    spec: ObjectiveSpec,
    mut schedule: TransformSchedule,
    x0: &Point,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    if let Some(seed) = cfg.seed {
        schedule.seed = seed;
    }
    let mut objective = Objective::new(spec, schedule)?;
    minimize_objective(&mut objective, x0, cfg)
}

/// Minimizes a prepared objective, leaving its ledger for inspection.
/// Configuration errors are returned; failures during the run are reported
/// through [`Status::Aborted`].
pub fn minimize_objective(objective: &mut Objective, x0: &Point, cfg: &SolverConfig) -> Result<SolverTrace> {
    if x0.dim() != objective.dimension() {
        return Err(DfoError::DimensionMismatch { expected: objective.dimension(), got: x0.dim() });
    }
    let m = cfg.validate(x0.dim())?;
    let mut run = Run::new(objective, cfg, m);
    let outcome = run.initialize(x0.vector()).and_then(|_| run.iterate());
    Ok(run.finish(outcome))
}

enum Stop {
    Converged,
    Budget,
}

struct State {
    set: InterpolationSet,
    kkt: KktSystem,
    q: QuadraticModel,
}

struct Run<'a> {
    obj: &'a mut Objective,
    cfg: &'a SolverConfig,
    m: usize,
    k: u64,
    st: Option<State>,
    rho: f64,
    delta: f64,
    records: Vec<IterationRecord>,
    history: Vec<f64>,
    models: Vec<ModelSnapshot>,
    long_run: usize,
    longest_long_run: usize,
    rebuilds: usize,
    refactorizations: usize,
    iterations: usize,
    step_radius: f64,
    update_audits: Vec<UpdateAudit>,
    step_audits: Vec<StepAudit>,
}

struct Evaluated {
    fresh: Option<Vec<f64>>,
    f_new: f64,
}

impl<'a> Run<'a> {
    fn new(obj: &'a mut Objective, cfg: &'a SolverConfig, m: usize) -> Self {
        Self {
            obj,
            cfg,
            m,
            k: 0,
            st: None,
            rho: cfg.rho_beg,
            delta: cfg.rho_beg,
            records: Vec::new(),
            history: Vec::new(),
            models: Vec::new(),
            long_run: 0,
            longest_long_run: 0,
            rebuilds: 0,
            refactorizations: 0,
            iterations: 0,
            step_radius: 0.0,
            update_audits: Vec::new(),
            step_audits: Vec::new(),
        }
    }

    fn st(&self) -> &State {
        self.st.as_ref().expect("initialized")
    }

    fn st_mut(&mut self) -> &mut State {
        self.st.as_mut().expect("initialized")
    }

    fn budget_left(&self) -> usize {
        self.cfg.max_evals.saturating_sub(self.obj.nf())
    }

    fn push_history(&mut self, x_opt: &DVector<f64>) {
        let raw = self.obj.raw_value(x_opt).unwrap_or(f64::NAN);
        while self.history.len() < self.obj.nf() {
            self.history.push(raw);
        }
    }

    /// Evaluates `points` as prefix batches at consecutive iterations, as in
    /// the start-up phase, and returns the values of the last batch. When
    /// the transformation is ignored, each point keeps the value it had
    /// when first evaluated instead.
    fn evaluate_prefixes(&mut self, points: &[DVector<f64>]) -> Result<Vec<f64>> {
        let mut vals = Vec::new();
        let mut first = Vec::with_capacity(points.len());
        for j in 1..=points.len() {
            self.k += 1;
            vals = if self.cfg.newuoa_mode {
                let v = self.obj.evaluate_batch(&points[j - 1..j], self.k)?;
                first.push(v[0]);
                first.clone()
            } else {
                self.obj.evaluate_batch(&points[..j], self.k)?
            };
            let best = (0..j).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
            self.push_history(&points[best]);
        }
        Ok(vals)
    }

    fn initialize(&mut self, x0: &DVector<f64>) -> Result<()> {
        let pts = build_initial_points(x0, self.cfg.rho_beg, self.m)?;
        let vals = self.evaluate_prefixes(&pts)?;
        let set = InterpolationSet::new(pts, x0.clone(), vals)?;
        let kkt = KktSystem::build(&set)?;
        let q = solve_initial_model(&set, &kkt);
        self.st = Some(State { set, kkt, q });
        self.snapshot();
        self.record(StepKind::Initial, f64::NAN, 0.0, None);
        Ok(())
    }

    fn snapshot(&mut self) {
        if self.cfg.record_models {
            let st = self.st();
            let snap = ModelSnapshot { k: self.k, x_opt: st.set.x_opt().as_slice().to_vec(), model: st.q.clone() };
            self.models.push(snap);
        }
    }

    fn record(&mut self, kind: StepKind, ratio: f64, step_norm: f64, moved: Option<usize>) {
        let radius = self.step_radius;
        let st = self.st();
        let x = st.set.x_opt();
        let rec = IterationRecord {
            k: self.k,
            kind,
            x_opt: x.as_slice().to_vec(),
            f_opt_raw: self.obj.raw_value(x).unwrap_or(f64::NAN),
            f_opt: st.set.f_opt(),
            delta: self.delta,
            rho: self.rho,
            ratio,
            step_norm,
            step_radius: radius,
            moved,
            nf: self.obj.nf(),
        };
        self.records.push(rec);
    }

    /// One batch at the next iteration index: the whole set plus `x_new`,
    /// or only `x_new` when the transformation is ignored.
    fn evaluate_step(&mut self, x_new: &DVector<f64>) -> Result<Evaluated> {
        self.k += 1;
        if self.cfg.newuoa_mode {
            let v = self.obj.evaluate_batch(std::slice::from_ref(x_new), self.k)?;
            return Ok(Evaluated { fresh: None, f_new: v[0] });
        }
        let mut batch = self.st().set.points().to_vec();
        batch.push(x_new.clone());
        let mut v = self.obj.evaluate_batch(&batch, self.k)?;
        let f_new = v.pop().expect("non-empty batch");
        Ok(Evaluated { fresh: Some(v), f_new })
    }

    /// Value of the current best point under the latest transformation.
    fn f_opt_now(&self, ev: &Evaluated) -> f64 {
        let st = self.st();
        match &ev.fresh {
            Some(f) => f[st.set.opt_index()],
            None => st.set.f_opt(),
        }
    }

    /// Moves the model to the fresh values without changing the set.
    fn resync(&mut self, ev: &Evaluated) -> Result<()> {
        let Some(fresh) = &ev.fresh else { return Ok(()) };
        let k = self.k;
        let st = self.st.as_mut().expect("initialized");
        let r: Vec<f64> = fresh.iter().zip(st.set.values()).map(|(a, b)| a - b).collect();
        if r.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        let (lambda, c, g) = st.kkt.solve(&st.set, &r);
        st.q.add_coefficients(&lambda, c, &g);
        let audit = update_audit(k, &lambda, &st.set);
        let opt = st.set.opt_index();
        st.set.set_values(fresh.clone())?;
        st.set.set_opt(opt);
        self.update_audits.push(audit);
        self.snapshot();
        Ok(())
    }

    /// Replaces point `t` by `x_new` and updates `H` and the model.
    fn replace(&mut self, t: usize, x_new: &DVector<f64>, ev: &Evaluated) -> Result<()> {
        let floor = self.cfg.sigma_floor;
        let drift_tol = self.cfg.drift_tol;
        let st = self.st.as_mut().expect("initialized");
        let opt = st.set.opt_index();
        let x_opt = st.set.x_opt().clone();
        let f_opt_old = st.set.f_opt();
        let delta = delta_k(ev.f_new, f_opt_old, st.q.value(x_new), st.q.value(&x_opt))?;
        let r = match &ev.fresh {
            Some(fresh) => residual_from_values(st.set.values(), fresh, t, delta),
            None => {
                let mut r = vec![0.0; st.set.m()];
                r[t] = delta;
                r
            }
        };
        let mut new_set = st.set.clone();
        let mut new_kkt = st.kkt.clone();
        new_kkt.update_h(&mut new_set, t, x_new, floor)?;
        let q = update_model(&st.q, &new_kkt, &new_set, &r, t)?;
        let audit = update_audit(self.k, &new_kkt.solve(&new_set, &r).0, &new_set);
        let mut values = match &ev.fresh {
            Some(f) => f.clone(),
            None => new_set.values().to_vec(),
        };
        values[t] = ev.f_new;
        let f_opt_now = values[opt];
        new_set.set_values(values)?;
        new_set.set_opt(if ev.f_new < f_opt_now { t } else { opt });
        if new_kkt.audit(&new_set, drift_tol)? {
            self.refactorizations += 1;
        }
        st.set = new_set;
        st.kkt = new_kkt;
        st.q = q;
        self.update_audits.push(audit);
        self.snapshot();
        Ok(())
    }

    /// Replaces the whole set by the initial pattern around the best point
    /// with radius `rho`.
    fn rebuild(&mut self) -> Result<Option<Stop>> {
        let x_opt = self.st().set.x_opt().clone();
        if self.budget_left() < self.m - 1 {
            return Ok(Some(Stop::Budget));
        }
        let pts = build_initial_points(&x_opt, self.rho, self.m)?;
        self.k += 1;
        let vals = self.obj.evaluate_batch(&pts, self.k)?;
        let set = InterpolationSet::new(pts, x_opt.clone(), vals)?;
        let kkt = KktSystem::build(&set)?;
        let q = solve_initial_model(&set, &kkt);
        self.st = Some(State { set, kkt, q });
        let best = self.st().set.x_opt().clone();
        self.push_history(&best);
        self.rebuilds += 1;
        self.delta = self.delta.max(self.rho);
        self.snapshot();
        self.record(StepKind::Rebuild, f64::NAN, 0.0, None);
        Ok(None)
    }

    fn maybe_shift_base(&mut self) -> Result<()> {
        let st = self.st();
        let gap = (st.set.x_opt() - st.set.base()).norm_squared();
        if gap > 1e3 * self.delta * self.delta {
            let x_opt = st.set.x_opt().clone();
            let st = self.st_mut();
            let mut set = st.set.clone();
            let (q, kkt) = shift_base(&st.q, &mut set, &x_opt)?;
            st.set = set;
            st.q = q;
            st.kkt = kkt;
        }
        Ok(())
    }

    /// Index maximizing the weighted update denominator, excluding the best
    /// point, with its score.
    fn choose_move(&self, x_new: &DVector<f64>) -> (usize, f64) {
        let st = self.st();
        let opt = st.set.opt_index();
        let sc = st.kkt.scalars(&st.set, opt, x_new);
        let x_opt = st.set.x_opt();
        let mut best = (usize::MAX, -1.0);
        for t in 0..st.set.m() {
            if t == opt {
                continue;
            }
            let alpha = st.kkt.h()[(t, t)];
            let tau = sc.hw[t];
            let sigma = alpha.abs() * sc.beta.abs() + tau * tau;
            let dist = (st.set.point(t) - x_opt).norm() / self.delta;
            let score = sigma * dist.powi(4).max(1.0);
            if score > best.1 {
                best = (t, score);
            }
        }
        best
    }

    fn iterate(&mut self) -> Result<Stop> {
        let max_iterations = 50 * self.cfg.max_evals + 1000;
        let mut diffs: Vec<f64> = Vec::new();
        let mut nf_saved = self.obj.nf();
        loop {
            self.iterations += 1;
            if self.iterations > max_iterations {
                return Err(DfoError::Protocol("iteration limit reached without progress".into()));
            }
            self.maybe_shift_base()?;
            let tr = TrustRegion::new(self.st().set.x_opt().clone(), self.delta, self.rho)?;
            let step = trsapp(&self.st().q, &tr);
            let q = &self.st().q;
            let hessian_norm = nalgebra::SymmetricEigen::new(q.hessian()).eigenvalues.amax();
            self.step_audits.push(StepAudit {
                k: self.k,
                delta: self.delta,
                gradient_norm: q.gradient(&tr.center).norm(),
                hessian_norm,
                predicted_reduction: step.predicted_reduction,
            });
            self.step_radius = self.delta;
            let dnorm = step.d.norm().min(self.delta);
            let ratio;
            let last_short;
            let mut terminate = false;
            if step.d.norm() < 0.5 * self.rho {
                last_short = Some(step.d.clone());
                self.long_run = 0;
                self.delta *= 0.1;
                ratio = -1.0;
                if self.delta <= 1.5 * self.rho {
                    self.delta = self.rho;
                }
                self.record(StepKind::Short, ratio, step.d.norm(), None);
                if self.obj.nf() > nf_saved + 2 && diffs.len() >= 3 {
                    let limit = 0.125 * step.crvmin * self.rho * self.rho;
                    let worst = diffs.iter().rev().take(3).fold(0.0f64, |a, b| a.max(*b));
                    if step.crvmin > 0.0 && worst <= limit {
                        terminate = true;
                    }
                }
            } else {
                last_short = None;
                self.long_run += 1;
                self.longest_long_run = self.longest_long_run.max(self.long_run);
                if self.budget_left() == 0 {
                    return Ok(Stop::Budget);
                }
                let x_opt = self.st().set.x_opt().clone();
                let x_new = &x_opt + &step.d;
                let q_opt = self.st().q.value(&x_opt);
                let vquad = self.st().q.value(&x_new) - q_opt;
                let ev = self.evaluate_step(&x_new)?;
                let f_opt_now = self.f_opt_now(&ev);
                let pred = -vquad;
                ratio = if pred <= 1e-14 * (1.0 + f_opt_now.abs()) { -1.0 } else { (f_opt_now - ev.f_new) / pred };
                diffs.push((ev.f_new - f_opt_now - vquad).abs());
                self.delta = update_trust_region(self.delta, ratio, dnorm, self.rho);
                if dnorm > self.rho {
                    nf_saved = self.obj.nf();
                }
                let (t, score) = self.choose_move(&x_new);
                let moved = if t == usize::MAX || (ev.f_new >= f_opt_now && score <= 1.0) {
                    self.resync(&ev)?;
                    None
                } else {
                    match self.replace(t, &x_new, &ev) {
                        Ok(()) => Some(t),
                        Err(DfoError::NearSingularUpdate { .. }) | Err(DfoError::DegenerateGeometry(_)) => {
                            self.resync(&ev)?;
                            if let Some(stop) = self.rebuild()? {
                                return Ok(stop);
                            }
                            None
                        }
                        Err(e) => return Err(e),
                    }
                };
                let x = self.st().set.x_opt().clone();
                self.push_history(&x);
                self.record(StepKind::TrustRegion, ratio, step.d.norm(), moved);
                if ratio >= 0.1 {
                    continue;
                }
            }

            if !terminate {
                let (knew, dist) = self.st().set.max_distance_from_opt();
                if dist >= 2.0 * self.delta {
                    if let Some(stop) = self.geometry_step(knew, dist, &mut diffs)? {
                        return Ok(stop);
                    }
                    continue;
                }
                if ratio > 0.0 || dnorm.max(self.delta) > self.rho {
                    continue;
                }
            }

            // the current rho is finished
            if self.rho > self.cfg.rho_end {
                let old = self.rho;
                self.rho = reduce_rho(self.rho, self.cfg.rho_end);
                self.delta = (0.5 * old).max(self.rho);
                nf_saved = self.obj.nf();
                diffs.clear();
                self.record(StepKind::RhoReduction, ratio, 0.0, None);
                continue;
            }
            if let Some(d) = last_short {
                self.final_step(&d)?;
            }
            return Ok(Stop::Converged);
        }
    }

    fn geometry_step(&mut self, knew: usize, dist: f64, diffs: &mut Vec<f64>) -> Result<Option<Stop>> {
        let dstep = (0.1 * dist).min(0.5 * self.delta).max(self.rho);
        self.step_radius = dstep;
        let st = self.st();
        let tr = TrustRegion { center: st.set.x_opt().clone(), delta: dstep, rho: self.rho };
        let d = match biglag(&st.kkt, &st.set, knew, &tr) {
            Ok((d, _)) => d,
            Err(DfoError::DegenerateLagrange) => return self.rebuild(),
            Err(e) => return Err(e),
        };
        let sc = st.kkt.scalars(&st.set, knew, &(&tr.center + &d));
        let d = if sc.sigma.abs() <= 0.8 * sc.tau * sc.tau {
            match bigden(&st.kkt, &st.set, knew, &tr, &d, self.cfg.sigma_floor) {
                Ok((d, _)) => d,
                Err(DfoError::GeometryRebuild) => return self.rebuild(),
                Err(e) => return Err(e),
            }
        } else {
            d
        };
        if self.budget_left() == 0 {
            return Ok(Some(Stop::Budget));
        }
        let x_opt = tr.center.clone();
        let x_new = &x_opt + &d;
        let vquad = self.st().q.value(&x_new) - self.st().q.value(&x_opt);
        let ev = self.evaluate_step(&x_new)?;
        let f_opt_now = self.f_opt_now(&ev);
        diffs.push((ev.f_new - f_opt_now - vquad).abs());
        match self.replace(knew, &x_new, &ev) {
            Ok(()) => {}
            Err(DfoError::NearSingularUpdate { .. }) | Err(DfoError::DegenerateGeometry(_)) => {
                self.resync(&ev)?;
                if let Some(stop) = self.rebuild()? {
                    return Ok(Some(stop));
                }
            }
            Err(e) => return Err(e),
        }
        let x = self.st().set.x_opt().clone();
        self.push_history(&x);
        self.record(StepKind::Geometry, f64::NAN, d.norm(), Some(knew));
        Ok(None)
    }

    /// Tries the last short step once before returning.
    fn final_step(&mut self, d: &DVector<f64>) -> Result<()> {
        if d.norm() == 0.0 || self.budget_left() == 0 {
            return Ok(());
        }
        let x_new = self.st().set.x_opt() + d;
        let ev = self.evaluate_step(&x_new)?;
        let f_opt_now = self.f_opt_now(&ev);
        if ev.f_new < f_opt_now {
            let (t, _) = self.choose_move(&x_new);
            if t == usize::MAX || self.replace(t, &x_new, &ev).is_err() {
                // keep the better point even if the model cannot absorb it
                let st = self.st_mut();
                let opt = st.set.opt_index();
                st.set.replace(opt, x_new.clone(), ev.f_new);
            }
        } else {
            self.resync(&ev)?;
        }
        let x = self.st().set.x_opt().clone();
        self.push_history(&x);
        self.record(StepKind::Final, f64::NAN, d.norm(), None);
        Ok(())
    }

    fn finish(self, outcome: Result<Stop>) -> SolverTrace {
        let (status, message) = match outcome {
            Ok(Stop::Converged) => (Status::Converged, None),
            Ok(Stop::Budget) => (Status::BudgetExhausted, None),
            Err(e) => (Status::Aborted, Some(e.to_string())),
        };
        let (x_opt, f_opt, f_opt_raw, gnorm) = match &self.st {
            Some(st) => {
                let x = st.set.x_opt();
                (
                    x.as_slice().to_vec(),
                    st.set.f_opt(),
                    self.obj.raw_value(x).unwrap_or(f64::NAN),
                    st.q.gradient(x).norm(),
                )
            }
            None => (Vec::new(), f64::NAN, f64::NAN, f64::NAN),
        };
        let mut history = self.history;
        let last = history.last().copied().unwrap_or(f64::NAN);
        history.resize(self.obj.nf(), last);
        SolverTrace {
            records: self.records,
            x_opt,
            f_opt,
            f_opt_raw,
            status,
            message,
            nf: self.obj.nf(),
            k_final: self.k,
            history,
            models: self.models,
            final_model_gradient_norm: gnorm,
            longest_long_step_run: self.longest_long_run,
            rebuilds: self.rebuilds,
            refactorizations: self.refactorizations,
            update_audits: self.update_audits,
            step_audits: self.step_audits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trust_region_branches() {
        assert_eq!(update_trust_region(1.0, 0.9, 1.0, 0.01), 2.0);
        assert_eq!(update_trust_region(1.0, -0.5, 0.4, 0.01), 0.2);
        assert_eq!(update_trust_region(1.0, 0.5, 0.3, 0.01), 0.5);
        assert_eq!(update_trust_region(1.0, -1.0, 0.02, 0.01), 0.01);
        // snapped to rho when at most 1.5 rho
        assert_eq!(update_trust_region(1.0, 0.05, 0.028, 0.01), 0.01);
        for &ratio in &[-3.0, 0.0, 0.1, 0.5, 0.7, 2.0] {
            for &d in &[0.0, 1e-3, 0.5, 3.0] {
                assert!(update_trust_region(1.0, ratio, d, 0.05) >= 0.05);
            }
        }
    }

    #[test]
    fn rho_schedule() {
        assert!((reduce_rho(1.0, 1e-6) - 0.1).abs() < 1e-15);
        assert_eq!(reduce_rho(1e-5, 1e-6), 1e-6);
        assert!((reduce_rho(1e-4, 1e-6) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        assert_eq!(cfg.validate(3).unwrap(), 7);
        cfg.rho_end = 2.0;
        assert!(cfg.validate(3).is_err());
        let cfg = SolverConfig { m: Some(4), ..SolverConfig::default() };
        assert!(cfg.validate(3).is_err());
        let cfg = SolverConfig { max_evals: 5, ..SolverConfig::default() };
        assert!(cfg.validate(3).is_err());
    }
}
