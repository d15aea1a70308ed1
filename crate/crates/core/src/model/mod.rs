//! Interpolation geometry, the inverse KKT matrix and quadratic models.

mod kkt;
mod quadratic;
mod set;

pub use kkt::{build_w_matrix, KktSystem, UpdateScalars, DEFAULT_SIGMA_FLOOR};
pub use quadratic::{
    lagrange_function, shift_base, side_conditions, solve_initial_model, update_model, QuadraticModel,
};
pub use set::{build_initial_points, build_initial_set, InterpolationSet};
