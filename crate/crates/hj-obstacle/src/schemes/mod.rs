//! Monotone spatial discretization: Lax-Friedrichs flux, CFL control, the
//! penalty with its exact scaling, single-step updates, and the linearized
//! step with its exact transpose.

mod flux;
mod linearized;
pub mod penalty;
mod step;

pub use flux::{cfl_dt, numerical_hamiltonian};
pub use linearized::LinearizedStep;
pub use penalty::{penalty, penalty_prime};
pub use step::{step_penalized, step_projected, RateStats};

pub(crate) use step::{explicit_rate, step_penalized_raw, step_projected_raw};

use crate::domain::{SampledProblem, ScalarField};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Knobs of the spatial scheme and time stepping.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Lax-Friedrichs dissipation per axis; must dominate |D_p H| along the
    /// run (validated every step, never re-chosen).
    pub lambda: [f64; 2],
    /// Fraction of the CFL bound actually used, in (0, 1].
    pub cfl_safety: f64,
    /// Penalty scale delta of gamma^delta; `None` disables the penalty.
    pub penalty_delta: Option<f64>,
    /// Coefficient of the artificial Laplacian (delta^2 for the penalized
    /// Cauchy problem, eps^4 for the approximated ergodic problems).
    pub artificial_viscosity: f64,
    /// Time rescaling: the equation is `eps w_t + ... = 0`; 1 for
    /// unrescaled runs.
    pub epsilon: f64,
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "cfl_safety",
                message: format!("must lie in (0, 1], got {}", self.cfl_safety),
            });
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                message: format!("must be positive, got {}", self.epsilon),
            });
        }
        if !(self.artificial_viscosity >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "artificial_viscosity",
                message: format!("must be nonnegative, got {}", self.artificial_viscosity),
            });
        }
        if let Some(d) = self.penalty_delta {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "penalty_delta",
                    message: format!("must be positive, got {d}"),
                });
            }
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                message: format!("must be nonnegative, got {:?}", self.lambda),
            });
        }
        Ok(())
    }

    /// Parameters for the projection scheme on the physical problem.
    pub fn projection(sp: &SampledProblem, initial: &ScalarField) -> Self {
        SchemeParams {
            lambda: auto_lambda(sp, initial.values()),
            cfl_safety: 0.5,
            penalty_delta: None,
            artificial_viscosity: 0.0,
            epsilon: 1.0,
        }
    }

    /// Parameters for the penalized rescaled problem with penalty `delta`
    /// and artificial viscosity `delta^2`.
    pub fn penalized(sp: &SampledProblem, initial: &ScalarField, eps: f64, delta: f64) -> Self {
        SchemeParams {
            lambda: auto_lambda(sp, initial.values()),
            cfl_safety: 0.5,
            penalty_delta: Some(delta),
            artificial_viscosity: delta * delta,
            epsilon: eps,
        }
    }
}

/// Dissipation choice: `1.1 x` the larger of the initial field's one-sided
/// |D_p H| and a problem-derived gradient scale
/// `max |b| + sqrt(2 (max H(x,0) - min V))` that covers the stationary
/// profiles the run can grow into, floored at 1. The run re-validates (and
/// aborts) rather than re-choosing, so one fixed lambda governs the whole
/// trajectory.
pub fn auto_lambda(sp: &SampledProblem, initial: &[f64]) -> [f64; 2] {
    let grid = sp.grid;
    let dim = grid.dim();
    let h = grid.spacing();
    let mut max_onesided = [0.0f64; 2];
    for i in 0..grid.node_count() {
        for k in 0..dim {
            let p_plus = (initial[grid.shift_up(i, k)] - initial[i]) / h;
            let p_minus = (initial[i] - initial[grid.shift_down(i, k)]) / h;
            let b = sp.drift[k][i];
            let m = (p_plus - b).abs().max((p_minus - b).abs());
            if m > max_onesided[k] {
                max_onesided[k] = m;
            }
        }
    }
    let mut max_h0 = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    for i in 0..grid.node_count() {
        let mut bb = 0.0;
        for k in 0..dim {
            bb += sp.drift[k][i] * sp.drift[k][i];
        }
        max_h0 = max_h0.max(0.5 * bb + sp.potential[i]);
        min_v = min_v.min(sp.potential[i]);
    }
    let bernstein = sp.max_drift + (2.0 * (max_h0 - min_v).max(0.0)).sqrt();
    let mut lambda = [0.0; 2];
    for k in 0..dim {
        lambda[k] = 1.1 * max_onesided[k].max(bernstein).max(1.0);
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, catalog_problem};

    #[test]
    fn auto_lambda_covers_stationary_gradients() {
        // eikonal-cos develops |Dv| up to 2 from flat initial data
        let prob = catalog_problem("eikonal-cos-1d").unwrap();
        let g = build_grid(1, 128).unwrap();
        let sp = SampledProblem::new(&prob, g);
        let lambda = auto_lambda(&sp, &sp.u0);
        assert!(lambda[0] >= 2.0, "lambda {lambda:?} too small for eikonal-cos");
    }

    #[test]
    fn params_validation_rejects_bad_values() {
        let mut p = SchemeParams {
            lambda: [1.0, 1.0],
            cfl_safety: 0.5,
            penalty_delta: None,
            artificial_viscosity: 0.0,
            epsilon: 1.0,
        };
        assert!(p.validate().is_ok());
        p.cfl_safety = 0.0;
        assert!(p.validate().is_err());
        p.cfl_safety = 0.5;
        p.penalty_delta = Some(0.0);
        assert!(p.validate().is_err());
    }
}
