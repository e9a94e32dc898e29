//! Numerical laboratory for obstacle problems of degenerate viscous
//! Hamilton-Jacobi equations on the torus T^n (n = 1, 2):
//!
//! ```text
//! max{ u_t - tr(A(x) D^2 u) + H(x, Du), u - psi } = 0,   u(.,0) = u0 <= psi,
//! ```
//!
//! with convex H(x,p) = |p - b(x)|^2/2 + V(x) and degenerate diagonal
//! diffusion A(x) >= 0.
//!
//! The crate builds, at desk scale, the machinery needed to observe the
//! quantitative structure of the large-time behavior of such problems:
//!
//! - monotone Lax-Friedrichs stepping with exact obstacle projection
//!   ([`schemes`], [`cauchy`]),
//! - the penalized approximation with penalty `gamma^delta(r) = r_+^2 / (2 sqrt(delta))`
//!   and artificial viscosity `delta^2`, including the `delta^{1/4}` penalty
//!   bound and the `eps^{1/2}` stability gap ([`schemes::penalty`], [`cauchy`]),
//! - ergodic (cell) problems and the constant `c_H`, by discounted marching
//!   and long-time slopes, plus the approximated problems with viscosity
//!   `eps^4` and `c^eps = max{0, c_H^eps}` ([`ergodic`]),
//! - a discrete nonlinear adjoint: the dual density sigma transported
//!   backward by the exact transpose of each linearized forward step, so the
//!   mass identities hold to roundoff ([`adjoint`]),
//! - Monte Carlo verification of the optimal-stopping control representation
//!   ([`stopping`]),
//! - a batch experiment driver with reproducible reports ([`experiments`]).
//!
//! Run `cargo run --release --example <name>` for guided tours of each
//! capability, or the `hjob` binary for batch experiments.

pub mod adjoint;
pub mod cauchy;
pub mod config;
pub mod domain;
pub mod ergodic;
mod error;
pub mod experiments;
pub mod report;
pub mod schemes;
pub mod stopping;

pub use error::{Error, Result};
