//! Derivative-free trust-region minimization of black-box objectives whose
//! output is transformed, encrypted or noised from one iteration to the next.
//!
//! The solver keeps a quadratic model of the *current* transformed objective
//! `F_k = T_k(F)` built from `m` interpolation points. Whenever a new point is
//! evaluated, every retained point is re-evaluated under the same
//! transformation and the model is moved by a least Frobenius norm change
//! whose right-hand side carries the per-point change `F_{k+1}(x_i) - F_k(x_i)`
//! instead of the one-hot residual of classical model updates. For a black box
//! that adds one shared noise draw per iteration (or rescales by a positive
//! factor) this keeps the model consistent with the noiseless problem.
//!
//! Modules:
//!
//! * [`objective`] – objectives `F = f + h`, per-iteration transformations and
//!   the evaluation ledger.
//! * [`privacy`] – Laplace and mixed noise mechanisms and privacy budgets.
//! * [`model`] – interpolation set, KKT inverse and quadratic models.
//! * [`subproblems`] – trust-region step, Lagrange and denominator maximization.
//! * [`solver`] – the outer trust-region loop.
//! * [`analysis`] – solution shifts and model-minimum-preserving transforms.

pub mod analysis;
pub mod error;
pub mod model;
pub mod objective;
pub mod point;
pub mod privacy;
pub mod rng;
pub mod schedule;
pub mod solver;
pub mod subproblems;

pub use error::{DfoError, Result};
pub use objective::{Objective, ObjectiveSpec, TransformKind, TransformSchedule};
pub use point::Point;
pub use schedule::Schedule;
pub use solver::{minimize, minimize_objective, SolverConfig, SolverTrace, Status};
