//! Test problems `F = f + h` with a public part `f` and a private part `h`.

use std::fmt;
use std::sync::Arc;

use dfop::objective::{Evaluator, ObjectiveSpec, TransformKind};
use dfop::privacy::{LaplaceParams, MixParams, UniformParams};
use dfop::Schedule;

#[derive(Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub dimension: usize,
    pub f: Evaluator,
    pub h: Evaluator,
    pub x0: Vec<f64>,
    pub x_best: Option<Vec<f64>>,
    pub f_best: Option<f64>,
    /// Transformation applied by default when the problem is solved.
    pub transform: TransformKind,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("f_best", &self.f_best)
            .field("transform", &self.transform)
            .finish_non_exhaustive()
    }
}

impl ProblemInstance {
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x) + (self.h)(x)
    }

    pub fn spec(&self) -> ObjectiveSpec {
        let (f, h) = (self.f.clone(), self.h.clone());
        ObjectiveSpec::new(self.name.clone(), self.dimension, move |x| f(x), move |x| h(x))
    }

    /// The same problem in permuted coordinates, `x -> F(P x)` with
    /// `(P x)_i = x_{perm_i}`.
    pub fn permuted(&self, perm: &[usize]) -> ProblemInstance {
        assert_eq!(perm.len(), self.dimension);
        let p: Arc<[usize]> = perm.into();
        let wrap = |g: Evaluator| -> Evaluator {
            let p = p.clone();
            Arc::new(move |x: &[f64]| {
                let y: Vec<f64> = p.iter().map(|&i| x[i]).collect();
                g(&y)
            })
        };
        // x_best of the permuted problem satisfies (P x)_i = x_best_i
        let x_best = self.x_best.as_ref().map(|b| {
            let mut out = vec![0.0; b.len()];
            for (i, &j) in perm.iter().enumerate() {
                out[j] = b[i];
            }
            out
        });
        let mut x0 = vec![0.0; self.dimension];
        for (i, &j) in perm.iter().enumerate() {
            x0[j] = self.x0[i];
        }
        ProblemInstance {
            name: self.name.clone(),
            dimension: self.dimension,
            f: wrap(self.f.clone()),
            h: wrap(self.h.clone()),
            x0,
            x_best,
            f_best: self.f_best,
            transform: self.transform.clone(),
        }
    }
}

fn lap(coef: f64, c: f64) -> LaplaceParams {
    LaplaceParams::new(Schedule::power_law(coef, -1.0), c).expect("valid Laplace schedule")
}

fn unif(coef: f64, power: f64) -> UniformParams {
    UniformParams { halfwidth: Schedule::power_law(coef, power) }
}

/// Mixed mechanism with `eta_k ~ Lap(100/k)`, `gamma_k ~ U(-1/k, 1/k)` and
/// the given noise multiplier.
pub fn mixed_mechanism(c: f64) -> TransformKind {
    TransformKind::MixedDp(MixParams::new(lap(100.0, c), unif(1.0, -1.0), 0.5).expect("valid mix"))
}

/// The six noise configurations of the quartic benchmark, all with `C = 1`.
pub fn quartic_noise_configs() -> Vec<(String, TransformKind)> {
    vec![
        ("lap(1/k)".into(), TransformKind::AdditiveDp(lap(1.0, 1.0))),
        ("lap(100/k)".into(), TransformKind::AdditiveDp(lap(100.0, 1.0))),
        ("lap(10/k)".into(), TransformKind::AdditiveDp(lap(10.0, 1.0))),
        (
            "u(1/k)".into(),
            TransformKind::MixedDp(MixParams::new(lap(1.0, 1.0), unif(1.0, -1.0), 0.0).expect("valid mix")),
        ),
        (
            "lap(100/k)+u(1/k)".into(),
            TransformKind::MixedDp(MixParams::new(lap(100.0, 1.0), unif(1.0, -1.0), 0.5).expect("valid mix")),
        ),
        (
            "lap(100/k)+u(k/1e4)".into(),
            TransformKind::MixedDp(MixParams::new(lap(100.0, 1.0), unif(1e-4, 1.0), 0.5).expect("valid mix")),
        ),
    ]
}

/// `f = sum x_i^4`, `h = sum x_i^2`, `n = 10`, `x0 = (10, ..., 10)`.
pub fn quartic_problem(transform: TransformKind) -> ProblemInstance {
    ProblemInstance {
        name: "quartic10".into(),
        dimension: 10,
        f: Arc::new(|x: &[f64]| x.iter().map(|v| v.powi(4)).sum()),
        h: Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
        x0: vec![10.0; 10],
        x_best: Some(vec![0.0; 10]),
        f_best: Some(0.0),
        transform,
    }
}

fn sphere_penalty(x: &[f64]) -> f64 {
    100.0 * (x.iter().map(|v| v * v).sum::<f64>() - 1.0).powi(2)
}

/// `f = 100 (sum x_i^2 - 1)^2` with `h = arglina`, `n = 20`, `x0 = 1`.
pub fn arglina_problem() -> ProblemInstance {
    ProblemInstance {
        name: "arglina20".into(),
        dimension: 20,
        f: Arc::new(sphere_penalty),
        h: Arc::new(arglina),
        x0: vec![1.0; 20],
        x_best: None,
        f_best: None,
        transform: mixed_mechanism(100.0),
    }
}

pub fn arglina(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean - 1.0).powi(2)).sum::<f64>() + n * (mean + 1.0).powi(2)
}

pub fn chrosen(x: &[f64]) -> f64 {
    x.windows(2).map(|w| 4.0 * (w[0] - w[1] * w[1]).powi(2) + (1.0 - w[1]).powi(2)).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.chunks_exact(2).map(|c| 100.0 * (c[1] - c[0] * c[0]).powi(2) + (1.0 - c[0]).powi(2)).sum()
}

pub fn powellsg(x: &[f64]) -> f64 {
    x.chunks_exact(4)
        .map(|c| {
            (c[0] + 10.0 * c[1]).powi(2)
                + 5.0 * (c[2] - c[3]).powi(2)
                + (c[1] - 2.0 * c[2]).powi(4)
                + 10.0 * (c[0] - c[3]).powi(4)
        })
        .sum()
}

pub fn woods(x: &[f64]) -> f64 {
    x.chunks_exact(4)
        .map(|c| {
            100.0 * (c[1] - c[0] * c[0]).powi(2)
                + (1.0 - c[0]).powi(2)
                + 90.0 * (c[3] - c[2] * c[2]).powi(2)
                + (1.0 - c[2]).powi(2)
                + 10.1 * ((c[1] - 1.0).powi(2) + (c[3] - 1.0).powi(2))
                + 19.8 * (c[1] - 1.0) * (c[3] - 1.0)
        })
        .sum()
}

pub fn arwhead(x: &[f64]) -> f64 {
    let last = x[x.len() - 1];
    x[..x.len() - 1].iter().map(|v| -4.0 * v + 3.0 + (v * v + last * last).powi(2)).sum()
}

pub fn dqrtic(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(i, v)| (v - (i + 1) as f64).powi(4)).sum()
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn vardim(x: &[f64]) -> f64 {
    let s: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 1.0)).sum();
    x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() + s * s + s.powi(4)
}

pub fn freuroth(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (-13.0 + a + ((5.0 - b) * b - 2.0) * b).powi(2) + (-29.0 + a + ((b + 1.0) * b - 14.0) * b).powi(2)
        })
        .sum()
}

pub fn chebquad(x: &[f64]) -> f64 {
    let n = x.len();
    let mut sums = vec![0.0; n];
    for &xj in x {
        let y = 2.0 * xj - 1.0;
        let (mut prev, mut cur) = (1.0, y);
        for s in sums.iter_mut() {
            *s += cur;
            let next = 2.0 * y * cur - prev;
            prev = cur;
            cur = next;
        }
    }
    sums.iter()
        .enumerate()
        .map(|(i, s)| {
            let deg = (i + 1) as f64;
            let integral = if (i + 1) % 2 == 0 { -1.0 / (deg * deg - 1.0) } else { 0.0 };
            (s / n as f64 - integral).powi(2)
        })
        .sum()
}

pub fn broydn3d(x: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 { x[i - 1] } else { 0.0 };
            let next = if i + 1 < n { x[i + 1] } else { 0.0 };
            ((3.0 - 2.0 * x[i]) * x[i] - prev - 2.0 * next + 1.0).powi(2)
        })
        .sum()
}

pub fn bdqrtic(x: &[f64]) -> f64 {
    let n = x.len();
    let last = x[n - 1];
    x.windows(4)
        .map(|w| {
            (-4.0 * w[0] + 3.0).powi(2)
                + (w[0] * w[0] + 2.0 * w[1] * w[1] + 3.0 * w[2] * w[2] + 4.0 * w[3] * w[3] + 5.0 * last * last).powi(2)
        })
        .sum()
}

pub fn engval1(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[0] * w[0] + w[1] * w[1]).powi(2) - 4.0 * w[0] + 3.0).sum()
}

pub fn penalty1(x: &[f64]) -> f64 {
    let s: f64 = x.iter().map(|v| v * v).sum();
    1e-5 * x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() + (s - 0.25).powi(2)
}

pub fn argtrig(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let c: f64 = x.iter().map(|v| v.cos()).sum();
    x.iter().enumerate().map(|(i, v)| (n - c + (i + 1) as f64 * (1.0 - v.cos()) - v.sin()).powi(2)).sum()
}

pub fn tridia(x: &[f64]) -> f64 {
    (x[0] - 1.0).powi(2)
        + x.windows(2).enumerate().map(|(i, w)| (i + 2) as f64 * (2.0 * w[1] - w[0]).powi(2)).sum::<f64>()
}

pub fn liarwhd(x: &[f64]) -> f64 {
    x.iter().map(|v| 4.0 * (v * v - x[0]).powi(2) + (v - 1.0).powi(2)).sum()
}

pub fn nondquar(x: &[f64]) -> f64 {
    let n = x.len();
    let last = x[n - 1];
    (x[0] - x[1]).powi(2)
        + x.windows(2).take(n - 2).map(|w| (w[0] + w[1] + last).powi(4)).sum::<f64>()
        + (x[n - 2] + last).powi(2)
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(i, v)| ((i + 1) as f64 * v).powi(2)).sum()
}

pub fn dqdrtic(x: &[f64]) -> f64 {
    x.windows(3).map(|w| w[0] * w[0] + 100.0 * w[1] * w[1] + 100.0 * w[2] * w[2]).sum()
}

pub fn edensch(x: &[f64]) -> f64 {
    16.0 + x
        .windows(2)
        .map(|w| (w[0] - 2.0).powi(4) + (w[0] * w[1] - 2.0 * w[1]).powi(2) + (w[1] + 1.0).powi(2))
        .sum::<f64>()
}

pub fn sinquad(x: &[f64]) -> f64 {
    let n = x.len();
    let (first, last) = (x[0], x[n - 1]);
    (first - 1.0).powi(4)
        + x[1..n - 1].iter().map(|v| ((v - last).sin() - first * first + v * v).powi(2)).sum::<f64>()
        + (last * last - first * first).powi(2)
}

pub fn dixmaana(x: &[f64]) -> f64 {
    let n = x.len();
    let m = n / 3;
    let mut s = 1.0;
    for i in 0..n {
        s += x[i] * x[i];
        if i + 1 < n {
            s += 0.125 * x[i] * x[i] * x[i + 1] * x[i + 1];
        }
        if i + m < n {
            s += 0.125 * x[i] * x[i] * x[i + m].powi(4);
        }
        if i + 2 * m < n {
            s += 0.125 * x[i] * x[i + 2 * m];
        }
    }
    s
}

pub fn genhumps(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| (2.0 * w[0]).sin().powi(2) * (2.0 * w[1]).sin().powi(2) + 0.05 * (w[0] * w[0] + w[1] * w[1]))
        .sum()
}

type Named = (&'static str, fn(&[f64]) -> f64);

/// Private parts with closed forms that accept any `n >= 3`.
pub fn private_functions() -> Vec<Named> {
    vec![
        ("arglina", arglina),
        ("argtrig", argtrig),
        ("arwhead", arwhead),
        ("bdqrtic", bdqrtic),
        ("broydn3d", broydn3d),
        ("chebquad", chebquad),
        ("chrosen", chrosen),
        ("dixmaana", dixmaana),
        ("dqdrtic", dqdrtic),
        ("dqrtic", dqrtic),
        ("edensch", edensch),
        ("engval1", engval1),
        ("freuroth", freuroth),
        ("genhumps", genhumps),
        ("liarwhd", liarwhd),
        ("nondquar", nondquar),
        ("penalty1", penalty1),
        ("power", power),
        ("rosenbrock", rosenbrock),
        ("sinquad", sinquad),
        ("sphere", sphere),
        ("tridia", tridia),
        ("vardim", vardim),
    ]
}

/// `f = 100 (sum x_i^2 - 1)^2` plus each closed-form private part, `n = 10`,
/// `x0 = (1, ..., 1)`, mixed mechanism with `C = 1`.
pub fn sphere_family() -> Vec<ProblemInstance> {
    private_functions()
        .into_iter()
        .map(|(name, h)| ProblemInstance {
            name: format!("{name}10"),
            dimension: 10,
            f: Arc::new(sphere_penalty),
            h: Arc::new(h),
            x0: vec![1.0; 10],
            x_best: None,
            f_best: None,
            transform: mixed_mechanism(1.0),
        })
        .collect()
}

/// Every registered problem.
pub fn problem_library() -> Vec<ProblemInstance> {
    let mut out = vec![quartic_problem(quartic_noise_configs().remove(0).1), arglina_problem()];
    out.extend(sphere_family());
    out
}

pub fn find_problem(name: &str) -> Option<ProblemInstance> {
    problem_library().into_iter().find(|p| p.name == name)
}
