//! Run manifests: one TOML file fixes every input of a run.

use std::path::{Path, PathBuf};

use dfop::objective::TransformKind;
use dfop::privacy::{LaplaceParams, MixParams, UniformParams};
use dfop::{Schedule, SolverConfig};
use dfop_bench::problems::{mixed_mechanism, problem_library, quartic_noise_configs, sphere_family};
use dfop_bench::{MissingBest, ProblemInstance, SolverKind, SuiteConfig};
use serde::Deserialize;

/// A manifest that cannot be run as written.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ManifestError(pub String);

fn bad(msg: impl Into<String>) -> ManifestError {
    ManifestError(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Problem names, or `sphere-family` / `all` for whole collections.
    #[serde(default)]
    pub problems: Vec<String>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<String>,
    /// Required: runs never draw seeds from the environment.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Evaluation budget per run; `400 n` when unset.
    pub budget: Option<usize>,
    #[serde(default = "default_rho_beg")]
    pub rho_beg: f64,
    #[serde(default = "default_rho_end")]
    pub rho_end: f64,
    /// Interpolation points; `2n + 1` when unset.
    pub m: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; all cores when unset.
    pub workers: Option<usize>,
    /// A run is flagged Y when its best value is below this.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Replaces the problems' own transformations when present.
    pub mechanism: Option<MechanismSpec>,
    #[serde(default)]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub audit: AuditSpec,
}

fn default_solvers() -> Vec<String> {
    vec!["dfop".into()]
}

fn default_rho_beg() -> f64 {
    1.0
}

fn default_rho_end() -> f64 {
    1e-8
}

fn default_output() -> PathBuf {
    PathBuf::from("dfop-out")
}

fn default_threshold() -> f64 {
    1e-3
}

/// Transformation applied by the black box. Schedules are tables with
/// `offset`, `coef` and `power` keys meaning `offset + coef * k^power`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MechanismSpec {
    Identity,
    Translation {
        shift: Schedule,
    },
    Linear {
        scale: Schedule,
        shift: Schedule,
    },
    /// `h + c * eta_k`, `eta_k ~ Lap(b_k)`.
    Additive {
        b: Schedule,
        c: f64,
    },
    /// Additive operator with probability `prob_additive`, otherwise
    /// `h + gamma_k (f + h)`, `gamma_k ~ U(-u_k, u_k)`.
    Mixed {
        b: Schedule,
        u: Schedule,
        c: f64,
        #[serde(default = "half")]
        prob_additive: f64,
    },
    /// A named configuration: one of the quartic benchmark's noise
    /// settings, or `mixed-100` for `Lap(100/k)` mixed with `U(1/k)`, `C = 100`.
    Preset {
        name: String,
    },
}

fn half() -> f64 {
    0.5
}

impl MechanismSpec {
    pub fn to_kind(&self) -> Result<TransformKind, ManifestError> {
        let err = |e: dfop::DfoError| bad(format!("mechanism: {e}"));
        let kind = match self {
            MechanismSpec::Identity => TransformKind::Identity,
            MechanismSpec::Translation { shift } => TransformKind::Translation { shift: *shift },
            MechanismSpec::Linear { scale, shift } => TransformKind::Linear { scale: *scale, shift: *shift },
            MechanismSpec::Additive { b, c } => TransformKind::AdditiveDp(LaplaceParams::new(*b, *c).map_err(err)?),
            MechanismSpec::Mixed { b, u, c, prob_additive } => TransformKind::MixedDp(
                MixParams::new(
                    LaplaceParams::new(*b, *c).map_err(err)?,
                    UniformParams { halfwidth: *u },
                    *prob_additive,
                )
                .map_err(err)?,
            ),
            MechanismSpec::Preset { name } => {
                if name == "mixed-100" {
                    mixed_mechanism(100.0)
                } else {
                    quartic_noise_configs().into_iter().find(|(n, _)| n == name).map(|(_, k)| k).ok_or_else(|| {
                        let names: Vec<String> = quartic_noise_configs().into_iter().map(|(n, _)| n).collect();
                        bad(format!("unknown preset '{name}'; known: mixed-100, {}", names.join(", ")))
                    })?
                }
            }
        };
        // schedules are only checked when used; catch the obvious mistakes now
        match &kind {
            TransformKind::AdditiveDp(p) => {
                p.b_at(1).map_err(err)?;
            }
            TransformKind::MixedDp(p) => {
                p.laplace.b_at(1).map_err(err)?;
                p.uniform.u_at(1).map_err(err)?;
            }
            TransformKind::Linear { scale, .. } if !(scale.at(1) > 0.0) => {
                return Err(bad("mechanism: linear scale must be positive"));
            }
            _ => {}
        }
        Ok(kind)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "default_alpha_points")]
    pub alpha_points: usize,
    /// `best-found` or `exclude` for problems without a best known value.
    #[serde(default = "default_missing")]
    pub missing: String,
    /// Budget of the noiseless run that supplies a best known value for
    /// problems without one; no reference runs when unset.
    pub reference_budget: Option<usize>,
    pub sensitivity: Option<SensitivitySpec>,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            taus: default_taus(),
            alpha_max: default_alpha_max(),
            alpha_points: default_alpha_points(),
            missing: default_missing(),
            reference_budget: None,
            sensitivity: None,
        }
    }
}

fn default_taus() -> Vec<f64> {
    vec![1e-1, 1e-3, 1e-5]
}

fn default_alpha_max() -> f64 {
    64.0
}

fn default_alpha_points() -> usize {
    200
}

fn default_missing() -> String {
    "best-found".into()
}

impl ProfileSpec {
    pub fn missing_best(&self) -> Result<MissingBest, ManifestError> {
        match self.missing.as_str() {
            "best-found" => Ok(MissingBest::BestFound),
            "exclude" => Ok(MissingBest::Exclude),
            other => Err(bad(format!("profile.missing must be 'best-found' or 'exclude', got '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(bad("profile.taus must be non-empty values in (0, 1]"));
        }
        if !(self.alpha_max > 1.0) || self.alpha_points < 2 {
            return Err(bad("profile needs alpha_max > 1 and alpha_points >= 2"));
        }
        if let Some(s) = &self.sensitivity {
            if s.permutations < 2 {
                return Err(bad("profile.sensitivity.permutations must be at least 2"));
            }
            if !(s.tau > 0.0 && s.tau <= 1.0) {
                return Err(bad("profile.sensitivity.tau must lie in (0, 1]"));
            }
        }
        self.missing_best().map(|_| ())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySpec {
    pub permutations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sensitivity_tau")]
    pub tau: f64,
}

fn default_sensitivity_tau() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default)]
    pub enabled: bool,
    /// Iterations whose best values enter the global sensitivity.
    #[serde(default = "default_window")]
    pub window: usize,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self { enabled: false, window: default_window() }
    }
}

fn default_window() -> usize {
    5
}

/// Command-line values that take precedence over the manifest.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Problem to run (repeatable); replaces the manifest's list.
    #[arg(long = "problem")]
    pub problems: Vec<String>,
    /// Solver to run (repeatable); replaces the manifest's list.
    #[arg(long = "solver")]
    pub solvers: Vec<String>,
    /// Seed (repeatable); replaces the manifest's list.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub rho_beg: Option<f64>,
    #[arg(long)]
    pub rho_end: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write per-iteration privacy budgets.
    #[arg(long)]
    pub audit: bool,
}

/// A validated manifest with every name resolved.
pub struct Plan {
    pub manifest: Manifest,
    pub problems: Vec<ProblemInstance>,
    pub solvers: Vec<SolverKind>,
    pub suite: SuiteConfig,
}

impl Plan {
    pub fn output(&self) -> &Path {
        &self.manifest.output
    }
}

pub fn load(path: &Path, over: &Overrides) -> Result<Plan, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let mut manifest: Manifest = toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    apply(&mut manifest, over);
    plan(manifest)
}

fn apply(m: &mut Manifest, o: &Overrides) {
    if !o.problems.is_empty() {
        m.problems = o.problems.clone();
    }
    if !o.solvers.is_empty() {
        m.solvers = o.solvers.clone();
    }
    if !o.seeds.is_empty() {
        m.seeds = o.seeds.clone();
    }
    if o.budget.is_some() {
        m.budget = o.budget;
    }
    if let Some(v) = o.rho_beg {
        m.rho_beg = v;
    }
    if let Some(v) = o.rho_end {
        m.rho_end = v;
    }
    if let Some(v) = &o.output {
        m.output = v.clone();
    }
    if o.workers.is_some() {
        m.workers = o.workers;
    }
    if let Some(v) = o.threshold {
        m.threshold = v;
    }
    m.audit.enabled |= o.audit;
}

pub fn resolve_problems(names: &[String]) -> Result<Vec<ProblemInstance>, ManifestError> {
    if names.is_empty() {
        return Err(bad("no problems given"));
    }
    let library = problem_library();
    let mut out: Vec<ProblemInstance> = Vec::new();
    for name in names {
        let found: Vec<ProblemInstance> = match name.as_str() {
            "all" => library.clone(),
            "sphere-family" => sphere_family(),
            _ => vec![library
                .iter()
                .find(|p| &p.name == name)
                .cloned()
                .ok_or_else(|| bad(format!("unknown problem '{name}' (see list-problems)")))?],
        };
        for p in found {
            if !out.iter().any(|q| q.name == p.name) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

fn plan(manifest: Manifest) -> Result<Plan, ManifestError> {
    let problems = resolve_problems(&manifest.problems)?;
    if manifest.solvers.is_empty() {
        return Err(bad("no solvers given"));
    }
    let solvers =
        manifest.solvers.iter().map(|s| s.parse::<SolverKind>().map_err(bad)).collect::<Result<Vec<_>, _>>()?;
    if manifest.seeds.is_empty() {
        return Err(bad("seeds must be listed explicitly"));
    }
    if manifest.workers == Some(0) {
        return Err(bad("workers must be at least 1"));
    }
    if !(manifest.threshold > 0.0) {
        return Err(bad("threshold must be positive"));
    }
    if manifest.budget == Some(0) {
        return Err(bad("budget must be positive"));
    }
    if manifest.audit.window == 0 {
        return Err(bad("audit.window must be at least 1"));
    }
    manifest.profile.validate()?;
    let transform = manifest.mechanism.as_ref().map(MechanismSpec::to_kind).transpose()?;
    let suite = SuiteConfig {
        budget: manifest.budget,
        rho_beg: manifest.rho_beg,
        rho_end: manifest.rho_end,
        transform,
        m: manifest.m,
    };
    for p in &problems {
        let sc = SolverConfig {
            rho_beg: suite.rho_beg,
            rho_end: suite.rho_end,
            m: suite.m,
            max_evals: suite.budget_for(p.dimension),
            ..SolverConfig::default()
        };
        sc.validate(p.dimension).map_err(|e| bad(format!("{}: {e}", p.name)))?;
    }
    Ok(Plan { manifest, problems, solvers, suite })
}
