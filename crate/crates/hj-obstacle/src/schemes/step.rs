//! Single-step forward updates: the explicit monotone spatial operator and
//! the two time steppers (penalized and projected).

use super::linearized::LinearizedStep;
use super::penalty::implicit_penalty_node;
use super::{flux, SchemeParams};
use crate::domain::{SampledProblem, ScalarField};
use crate::{Error, Result};

/// Per-step observability for the dissipation audit.
#[derive(Debug, Clone, Copy, Default)]
pub struct RateStats {
    /// max over nodes of |H_{p_k}(x, centered gradient)| per axis.
    pub max_dph: [f64; 2],
}

impl RateStats {
    /// Errors if the frozen Lax-Friedrichs dissipation was exceeded.
    pub fn check_lambda(&self, params: &SchemeParams, dim: usize, step: usize) -> Result<()> {
        for k in 0..dim {
            if self.max_dph[k] > params.lambda[k] {
                return Err(Error::LambdaExceeded {
                    observed: self.max_dph[k],
                    lambda: params.lambda[k],
                    step,
                });
            }
        }
        Ok(())
    }
}

/// Explicit spatial rate
/// `out_i = tr(A D^2 w)_i + nu (Delta w)_i - H_hat_i(w)`,
/// the right-hand side of `eps w_t = ...` before penalty and sources.
pub(crate) fn explicit_rate(
    sp: &SampledProblem,
    params: &SchemeParams,
    w: &[f64],
    out: &mut [f64],
) -> RateStats {
    let grid = sp.grid;
    let dim = grid.dim();
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let inv_2h = 0.5 / h;
    let mut stats = RateStats::default();
    for i in 0..grid.node_count() {
        let wi = w[i];
        let mut rate = 0.0;
        let mut ham = sp.potential[i];
        for k in 0..dim {
            let up = w[grid.shift_up(i, k)];
            let dn = w[grid.shift_down(i, k)];
            let second = (up - 2.0 * wi + dn) * inv_h2;
            rate += (sp.diffusion[k][i] + params.artificial_viscosity) * second;
            // LF flux: H at the centered gradient minus lambda/2 (p+ - p-)
            let centered = (up - dn) * inv_2h;
            let d = centered - sp.drift[k][i];
            ham += 0.5 * d * d;
            ham -= 0.5 * params.lambda[k] * (up - 2.0 * wi + dn) / h;
            let a = d.abs();
            if a > stats.max_dph[k] {
                stats.max_dph[k] = a;
            }
        }
        rate -= ham;
        out[i] = rate;
    }
    stats
}

/// One penalized step of
/// `eps w_t - tr(A D^2 w) + H(x, Dw) + gamma^delta(w - psi) = nu Delta w`:
/// explicit monotone update of the spatial terms, then the penalty advanced
/// implicitly at each node, plus the frozen-coefficient linearization of the
/// whole map at `w`.
pub fn step_penalized(
    sp: &SampledProblem,
    params: &SchemeParams,
    w: &ScalarField,
    dt: f64,
) -> Result<(ScalarField, LinearizedStep)> {
    params.validate()?;
    let bound = flux::cfl_dt(sp, params, w.values())?;
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound });
    }
    let mut next = vec![0.0; w.values().len()];
    let stats = step_penalized_raw(sp, params, w.values(), dt, &mut next, 0.0)?;
    stats.check_lambda(params, sp.grid.dim(), 0)?;
    let lin = LinearizedStep::build(sp, params, dt, w.values(), &next);
    Ok((ScalarField::from_raw(sp.grid, next), lin))
}

/// Hot path shared by the solvers: writes the stepped field into `out` and
/// returns the dissipation stats. `source` is an optional constant forcing
/// (used by stationary marching); `out` doubles as rate scratch.
pub(crate) fn step_penalized_raw(
    sp: &SampledProblem,
    params: &SchemeParams,
    w: &[f64],
    dt: f64,
    out: &mut [f64],
    source: f64,
) -> Result<RateStats> {
    let stats = explicit_rate(sp, params, w, out);
    let scale = dt / params.epsilon;
    match params.penalty_delta {
        None => {
            for (o, wi) in out.iter_mut().zip(w) {
                *o = wi + scale * (*o + source);
            }
        }
        Some(delta) => {
            for i in 0..w.len() {
                let what = w[i] + scale * (out[i] + source);
                let (y, _) = implicit_penalty_node(params.epsilon, dt, delta, what, sp.psi[i])?;
                out[i] = y;
            }
        }
    }
    Ok(stats)
}

/// One projected step of the obstacle problem
/// `max{u_t - tr(A D^2 u) + H(x, Du), u - psi} = 0`:
/// explicit update then nodewise `min(psi, .)`, so feasibility `u <= psi`
/// is exact.
pub fn step_projected(
    sp: &SampledProblem,
    params: &SchemeParams,
    u: &ScalarField,
    dt: f64,
) -> Result<ScalarField> {
    params.validate()?;
    let bound = flux::cfl_dt(sp, params, u.values())?;
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound });
    }
    let mut next = vec![0.0; u.values().len()];
    let stats = step_projected_raw(sp, params, u.values(), dt, &mut next);
    stats.check_lambda(params, sp.grid.dim(), 0)?;
    Ok(ScalarField::from_raw(sp.grid, next))
}

pub(crate) fn step_projected_raw(
    sp: &SampledProblem,
    params: &SchemeParams,
    u: &[f64],
    dt: f64,
    out: &mut [f64],
) -> RateStats {
    let stats = explicit_rate(sp, params, u, out);
    let scale = dt / params.epsilon;
    for i in 0..u.len() {
        let cand = u[i] + scale * out[i];
        out[i] = cand.min(sp.psi[i]);
    }
    stats
}
