//! Discrete nonlinear adjoint: the dual density sigma transported backward
//! from a terminal Dirac by the exact transpose of each linearized forward
//! step.
//!
//! Because the backward operator is the transpose of the forward tangent
//! (not a separate discretization of the dual PDE), nonnegativity of sigma,
//! monotonicity of its mass, and the penalty/mass balance identities are
//! algebraic facts of the discrete system, checkable to roundoff:
//!
//! - `mass(t) = sum_x sigma(x, t) h^n` is nondecreasing in t and equals 1
//!   at t = 1,
//! - `integral of (gamma^delta)' sigma over space-time = eps (mass(1) - mass(0)) <= eps`,
//! - `eps * integral of sigma + iterated tail integral = eps`, whence
//!   `integral of sigma <= 1`.

mod audits;

pub use audits::{
    argmax_time_derivative, energy_audit, fit_loglog_slope, forward_and_adjoint,
    key_estimate_integrals, key_stability_measure, KeyStabilityConfig,
};

use crate::cauchy::FieldTrajectory;
use crate::domain::{ScalarField, TorusGrid};
use crate::report::ExperimentReport;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdjointOptions {
    /// Verify `<apply f, sigma> = <f, apply^T sigma>` at every step with a
    /// fixed positive probe field.
    pub check_duality: bool,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        AdjointOptions {
            check_duality: true,
        }
    }
}

/// Backward dual trajectory (constructed descending, stored ascending).
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    grid: TorusGrid,
    eps: f64,
    delta: Option<f64>,
    x0: usize,
    /// Times of the stored sigma snapshots, matching the forward snapshots.
    times: Vec<f64>,
    sigma: Vec<ScalarField>,
    /// Discrete mass at every time level t_k = k dt, k = 0..steps.
    masses: Vec<f64>,
    /// Penalty/mass pairing per step, the discrete
    /// `integral over [t_k, t_{k+1}] of (gamma^delta)' sigma`.
    penalty_pairings: Vec<f64>,
    dt: f64,
    steps: usize,
    /// Largest per-step relative duality error (0 when unchecked).
    duality_max_rel: f64,
    /// Smallest sigma value seen anywhere (nonnegativity witness).
    min_sigma: f64,
}

impl AdjointTrajectory {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn x0(&self) -> usize {
        self.x0
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.sigma
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn penalty_pairings(&self) -> &[f64] {
        &self.penalty_pairings
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn duality_max_rel(&self) -> f64 {
        self.duality_max_rel
    }

    pub fn min_sigma(&self) -> f64 {
        self.min_sigma
    }

    /// Left-rectangle space-time integral of sigma, the quadrature under
    /// which the mass identities are exact.
    pub fn spacetime_integral(&self) -> f64 {
        self.masses[..self.steps].iter().sum::<f64>() * self.dt
    }
}

/// Propagates the terminal Dirac `sigma(., 1) = h^{-n}` at `x0` backward by
/// applying the exact transpose of every logged forward step.
pub fn solve_adjoint(
    forward: &FieldTrajectory,
    x0: usize,
    opts: &AdjointOptions,
) -> Result<AdjointTrajectory> {
    let log = forward.step_log().ok_or(Error::MissingStepLog)?;
    let grid = forward.grid();
    let nodes = grid.node_count();
    if x0 >= nodes {
        return Err(Error::InvalidParameter {
            name: "x0",
            message: format!("node {x0} outside grid of {nodes} nodes"),
        });
    }
    let steps = forward.step_count();
    let dt = log.dt;
    // map stored forward times to step levels so sigma snapshots align
    let stored_levels: Vec<usize> = forward
        .times()
        .iter()
        .map(|t| (t / dt).round() as usize)
        .collect();

    let mut sigma = vec![0.0; nodes];
    sigma[x0] = 1.0 / grid.cell_volume();
    let cell = grid.cell_volume();

    let mut masses = vec![0.0; steps + 1];
    masses[steps] = sigma.iter().sum::<f64>() * cell;
    let mut pairings = vec![0.0; steps];
    let mut snap_rev: Vec<(usize, ScalarField)> = Vec::new();
    if stored_levels.contains(&steps) {
        snap_rev.push((steps, ScalarField::from_raw(grid, sigma.clone())));
    }

    // fixed positive probe for the per-step duality audit
    let probe: Vec<f64> = (0..nodes)
        .map(|i| 0.5 + 0.5 * ((i as f64 * 0.618_033_988_749_894_8).fract()))
        .collect();
    let mut probe_out = vec![0.0; nodes];
    let mut next = vec![0.0; nodes];
    let mut duality_max_rel = 0.0f64;
    let mut min_sigma = 0.0f64;

    for m in (0..steps).rev() {
        let lin = forward.linearized_step(m)?;
        pairings[m] = forward.params().epsilon * lin.penalty_mass_absorption(&sigma);
        if opts.check_duality {
            lin.apply(&probe, &mut probe_out);
            let lhs: f64 = probe_out.iter().zip(&sigma).map(|(a, b)| a * b).sum();
            lin.apply_transpose(&sigma, &mut next);
            let rhs: f64 = probe.iter().zip(&next).map(|(a, b)| a * b).sum();
            let denom = lhs.abs().max(rhs.abs()).max(1e-300);
            duality_max_rel = duality_max_rel.max(((lhs - rhs) / denom).abs());
        } else {
            lin.apply_transpose(&sigma, &mut next);
        }
        std::mem::swap(&mut sigma, &mut next);
        for v in &sigma {
            min_sigma = min_sigma.min(*v);
        }
        masses[m] = sigma.iter().sum::<f64>() * cell;
        if stored_levels.contains(&m) {
            snap_rev.push((m, ScalarField::from_raw(grid, sigma.clone())));
        }
    }

    snap_rev.sort_by_key(|(level, _)| *level);
    let times: Vec<f64> = snap_rev
        .iter()
        .map(|(level, _)| {
            if *level == steps {
                forward.t_final()
            } else {
                *level as f64 * dt
            }
        })
        .collect();
    let snapshots: Vec<ScalarField> = snap_rev.into_iter().map(|(_, s)| s).collect();

    Ok(AdjointTrajectory {
        grid,
        eps: forward.params().epsilon,
        delta: forward.params().penalty_delta,
        x0,
        times,
        sigma: snapshots,
        masses,
        penalty_pairings: pairings,
        dt,
        steps,
        duality_max_rel,
        min_sigma,
    })
}

/// Audits the dual mass structure: nonnegativity, mass monotonicity, the
/// penalty/mass balance, the iterated-tail identity, and the space-time
/// mass bound, all with the same quadrature as the discrete steps.
pub fn adjoint_mass_report(adjoint: &AdjointTrajectory, forward: &FieldTrajectory) -> ExperimentReport {
    let mut report = ExperimentReport::new("adjoint-mass");
    let eps = forward.params().epsilon;
    debug_assert_eq!(adjoint.eps, eps);
    debug_assert_eq!(adjoint.delta, forward.params().penalty_delta);

    report.scalar("min_sigma", adjoint.min_sigma);
    report.check_bool(
        "sigma-nonnegative",
        adjoint.min_sigma >= 0.0,
        adjoint.min_sigma,
        "sigma >= 0 exactly at every node and level",
    );

    let mut worst_decrease = 0.0f64;
    for pair in adjoint.masses.windows(2) {
        worst_decrease = worst_decrease.max(pair[0] - pair[1]);
    }
    report.scalar("worst_mass_decrease", worst_decrease);
    // the diagonal penalty factor removes mass exactly; the transposed
    // transport conserves it only up to summation roundoff
    report.check_le(
        "mass-monotone",
        worst_decrease,
        1e-14,
        "mass(t) nondecreasing in t up to summation roundoff",
    );

    let pairing_total: f64 = adjoint.penalty_pairings.iter().sum();
    let mass_gain = eps * (adjoint.masses[adjoint.steps] - adjoint.masses[0]);
    let identity2 = (pairing_total - mass_gain).abs();
    report.scalar("penalty_pairing_total", pairing_total);
    report.scalar("identity_ii_residual", identity2);
    report.check_le(
        "identity-ii",
        identity2,
        1e-10 * eps,
        "penalty pairing equals eps (mass(1) - mass(0))",
    );
    report.check_le(
        "pairing-below-eps",
        pairing_total,
        eps * (1.0 + 1e-12),
        "total pairing bounded by eps",
    );

    let spacetime = adjoint.spacetime_integral();
    report.scalar("sigma_spacetime_mass", spacetime);
    report.check_le(
        "spacetime-mass",
        spacetime,
        1.0 + 1e-12,
        "space-time integral of sigma at most 1",
    );

    // eps * iint sigma + sum_k dt * tail_k = eps with the same rectangles
    let mut tail = 0.0;
    let mut tails = vec![0.0; adjoint.steps];
    for k in (0..adjoint.steps).rev() {
        tail += adjoint.penalty_pairings[k];
        tails[k] = tail;
    }
    let inner: f64 = tails.iter().sum::<f64>() * adjoint.dt;
    let identity3 = (eps * spacetime + inner - eps).abs();
    report.scalar("identity_iii_residual", identity3);
    report.check_le(
        "identity-iii",
        identity3,
        1e-10 * eps.max(1.0),
        "eps mass + iterated penalty tail returns eps",
    );

    report.scalar("duality_max_rel", adjoint.duality_max_rel);
    report.check_le(
        "per-step-duality",
        adjoint.duality_max_rel,
        1e-12,
        "transpose pairing exact per step",
    );
    report
}
