//! Grids, scalar fields, the builtin problem catalog, and validation of the
//! standing structural assumptions (uniform convexity of H, quadratic x-growth
//! of D_x H, degenerate nonnegative diffusion, obstacle compatibility).

mod catalog;
mod field;
mod grid;
mod problem;
mod trig;

pub use catalog::{catalog_problem, known_ergodic_constant, CATALOG_KEYS};
pub use field::ScalarField;
pub use grid::{build_grid, TorusGrid};
pub use problem::{
    hamiltonian_eval, lagrangian_eval, penalty_bound_constant, validate_problem, DiffusionSpec,
    HamiltonianFamily, HamiltonianSpec, ProblemSpec, SampledProblem, ValidationCheck,
    ValidationReport,
};
pub use trig::{TrigPoly, TrigTerm};
