//! Benchmark problems, baseline solvers and performance/sensitivity profiles
//! for the `dfop` solver.

pub mod nelder_mead;
pub mod plot;
pub mod problems;
pub mod profile;
pub mod suite;

pub use nelder_mead::{nelder_mead, NelderMeadConfig};
pub use problems::{find_problem, problem_library, ProblemInstance};
pub use profile::{performance_profile, sensitivity_profile, MissingBest, ProfileTable};
pub use suite::{dfop_trace, record_from_trace, run_one, run_suite, schedule_for, RunRecord, SolverKind, SuiteConfig};
