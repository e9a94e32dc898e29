//! Full forward solvers for the obstacle problem, its rescaled penalized
//! approximation, and the stability-gap / penalty-sensitivity measurements.

mod export;

pub use export::{export_trajectory, sha256_file, TrajectoryManifest};

use crate::domain::{ProblemSpec, SampledProblem, ScalarField, TorusGrid};
use crate::schemes::{
    cfl_dt, step_penalized_raw, step_projected_raw, LinearizedStep, SchemeParams,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Snapshot retention policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StorePolicy {
    /// Keep every time level (memory scales with step count).
    All,
    /// Keep about this many evenly spaced levels plus both endpoints.
    Sampled(usize),
    /// Keep only t = 0 and the final time.
    Endpoints,
}

impl Default for StorePolicy {
    fn default() -> Self {
        StorePolicy::Sampled(256)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub store_policy: StorePolicy,
    /// Retain every intermediate field and step size for adjoint replay.
    pub keep_step_log: bool,
    /// Cap on the time step; the CFL bound always applies on top.
    pub dt_max: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            store_policy: StorePolicy::default(),
            keep_step_log: false,
            dt_max: None,
        }
    }
}

/// Which step operator advanced the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepMode {
    Projected,
    Penalized,
}

/// Every intermediate time level, kept only on request; rebuilding the
/// linearized step of level m needs the fields at m and m+1.
#[derive(Debug, Clone)]
pub struct StepLog {
    pub dt: f64,
    pub fields: Vec<Vec<f64>>,
}

/// Time-stamped sequence of solution snapshots from one forward run.
#[derive(Debug, Clone)]
pub struct FieldTrajectory {
    sp: Arc<SampledProblem>,
    params: SchemeParams,
    mode: StepMode,
    times: Vec<f64>,
    snapshots: Vec<ScalarField>,
    step_log: Option<StepLog>,
    steps: usize,
    dt: f64,
    t_final: f64,
    /// Running max over all nodes and all steps of (w - psi)_+.
    max_overshoot: f64,
    /// Field one step before the final time, for backward differences.
    penultimate: Vec<f64>,
}

impl FieldTrajectory {
    pub fn grid(&self) -> TorusGrid {
        self.sp.grid
    }

    pub fn sampled_problem(&self) -> &SampledProblem {
        &self.sp
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn mode(&self) -> StepMode {
        self.mode
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }

    pub fn final_snapshot(&self) -> &ScalarField {
        self.snapshots.last().expect("trajectory stores endpoints")
    }

    pub fn initial_snapshot(&self) -> &ScalarField {
        self.snapshots.first().expect("trajectory stores endpoints")
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn max_overshoot(&self) -> f64 {
        self.max_overshoot
    }

    pub fn step_log(&self) -> Option<&StepLog> {
        self.step_log.as_ref()
    }

    /// Backward difference time derivative at the final time, per node.
    pub fn final_time_derivative(&self) -> Vec<f64> {
        self.final_snapshot()
            .values()
            .iter()
            .zip(&self.penultimate)
            .map(|(a, b)| (a - b) / self.dt)
            .collect()
    }

    /// Rebuilds the linearized step of time level `m` (from t_m to t_{m+1}).
    pub fn linearized_step(&self, m: usize) -> Result<LinearizedStep> {
        let log = self.step_log.as_ref().ok_or(Error::MissingStepLog)?;
        Ok(LinearizedStep::build(
            &self.sp,
            &self.params,
            log.dt,
            &log.fields[m],
            &log.fields[m + 1],
        ))
    }

    /// Re-runs the logged steps from the first field and reports the max
    /// deviation from the stored final snapshot (bit-identical stepping, so
    /// this is a consistency probe of the log itself).
    pub fn replay_residual(&self) -> Result<f64> {
        let log = self.step_log.as_ref().ok_or(Error::MissingStepLog)?;
        let mut w = log.fields[0].clone();
        let mut next = vec![0.0; w.len()];
        for _ in 0..self.steps {
            match self.mode {
                StepMode::Penalized => {
                    step_penalized_raw(&self.sp, &self.params, &w, log.dt, &mut next, 0.0)?;
                }
                StepMode::Projected => {
                    step_projected_raw(&self.sp, &self.params, &w, log.dt, &mut next);
                }
            }
            std::mem::swap(&mut w, &mut next);
        }
        let last = self.final_snapshot().values();
        Ok(w.iter()
            .zip(last)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Uniform-step march of either step operator to exactly `t_final`.
pub(crate) fn march(
    sp: Arc<SampledProblem>,
    params: SchemeParams,
    mode: StepMode,
    t_final: f64,
    opts: &SolveOptions,
) -> Result<FieldTrajectory> {
    params.validate()?;
    if !(t_final > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_final",
            message: format!("must be positive, got {t_final}"),
        });
    }
    let mut dt0 = cfl_dt(&sp, &params, &sp.u0)?;
    if let Some(cap) = opts.dt_max {
        if cap <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "dt_max",
                message: format!("must be positive, got {cap}"),
            });
        }
        dt0 = dt0.min(cap);
    }
    let steps = (t_final / dt0).ceil() as usize;
    if steps > 80_000_000 {
        return Err(Error::InvalidParameter {
            name: "t_final",
            message: format!("{steps} steps exceed the desk-scale budget"),
        });
    }
    let dt = t_final / steps as f64;
    let store_stride = match opts.store_policy {
        StorePolicy::All => 1,
        StorePolicy::Sampled(count) => (steps / count.max(1)).max(1),
        StorePolicy::Endpoints => usize::MAX,
    };

    let nodes = sp.grid.node_count();
    let mut w = sp.u0.clone();
    let mut next = vec![0.0; nodes];
    let mut times = vec![0.0];
    let mut snapshots = vec![ScalarField::from_raw(sp.grid, w.clone())];
    let mut log_fields = if opts.keep_step_log {
        let mut v = Vec::with_capacity(steps + 1);
        v.push(w.clone());
        v
    } else {
        Vec::new()
    };
    let mut max_overshoot = overshoot(&w, &sp.psi);
    let mut penultimate = w.clone();

    for m in 0..steps {
        let stats = match mode {
            StepMode::Penalized => step_penalized_raw(&sp, &params, &w, dt, &mut next, 0.0)?,
            StepMode::Projected => step_projected_raw(&sp, &params, &w, dt, &mut next),
        };
        stats.check_lambda(&params, sp.grid.dim(), m)?;
        if m + 1 == steps {
            penultimate.copy_from_slice(&w);
        }
        std::mem::swap(&mut w, &mut next);
        max_overshoot = max_overshoot.max(overshoot(&w, &sp.psi));
        if opts.keep_step_log {
            log_fields.push(w.clone());
        }
        let is_last = m + 1 == steps;
        if is_last || (m + 1) % store_stride == 0 {
            let t = if is_last { t_final } else { (m + 1) as f64 * dt };
            if *times.last().unwrap() < t {
                times.push(t);
                snapshots.push(ScalarField::from_raw(sp.grid, w.clone()));
            }
        }
    }

    Ok(FieldTrajectory {
        sp,
        params,
        mode,
        times,
        snapshots,
        step_log: opts.keep_step_log.then_some(StepLog {
            dt,
            fields: log_fields,
        }),
        steps,
        dt,
        t_final,
        max_overshoot,
        penultimate,
    })
}

fn overshoot(w: &[f64], psi: &[f64]) -> f64 {
    w.iter().zip(psi).fold(0.0f64, |m, (a, b)| m.max(a - b))
}

/// Projection-scheme trajectory of the obstacle problem from u0 to time T.
/// Every snapshot satisfies `u <= psi` exactly.
pub fn solve_obstacle(
    problem: &ProblemSpec,
    t_final: f64,
    grid: TorusGrid,
    opts: &SolveOptions,
) -> Result<FieldTrajectory> {
    let sp = Arc::new(SampledProblem::new(problem, grid));
    let params = SchemeParams::projection(&sp, &sp.u0_field());
    march(sp, params, StepMode::Projected, t_final, opts)
}

/// Same, with caller-supplied scheme parameters.
pub fn solve_obstacle_with(
    problem: &ProblemSpec,
    t_final: f64,
    grid: TorusGrid,
    params: SchemeParams,
    opts: &SolveOptions,
) -> Result<FieldTrajectory> {
    let sp = Arc::new(SampledProblem::new(problem, grid));
    march(sp, params, StepMode::Projected, t_final, opts)
}

/// Penalized rescaled approximation on t in [0, 1]: penalty scale `delta`,
/// artificial viscosity `delta^2`, time scaling `eps`.
pub fn solve_penalized(
    problem: &ProblemSpec,
    eps: f64,
    delta: f64,
    grid: TorusGrid,
    opts: &SolveOptions,
) -> Result<FieldTrajectory> {
    check_unit_interval("eps", eps)?;
    check_unit_interval("delta", delta)?;
    let sp = Arc::new(SampledProblem::new(problem, grid));
    let params = SchemeParams::penalized(&sp, &sp.u0_field(), eps, delta);
    march(sp, params, StepMode::Penalized, 1.0, opts)
}

fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidParameter {
            name,
            message: format!("must lie in (0, 1), got {v}"),
        });
    }
    Ok(())
}

/// `||w^{eps, eps^2}(., 1) - u(., 1/eps)||_inf`: the penalization error at
/// rescaled time 1 against the projection scheme run to physical time
/// 1/eps on the same grid with the matching physical step, so the grid
/// error cancels and the penalization error is isolated.
pub fn stability_gap(problem: &ProblemSpec, eps: f64, grid: TorusGrid) -> Result<f64> {
    stability_gap_custom(problem, eps, Some(eps * eps), grid)
}

/// As [`stability_gap`] with an explicit penalty scale; `None` disables the
/// penalty and the artificial viscosity entirely, which makes the two runs
/// identical up to time-integrator roundoff.
pub fn stability_gap_custom(
    problem: &ProblemSpec,
    eps: f64,
    delta: Option<f64>,
    grid: TorusGrid,
) -> Result<f64> {
    check_unit_interval("eps", eps)?;
    let sp = Arc::new(SampledProblem::new(problem, grid));
    let u0 = sp.u0_field();
    let mut params_pen = match delta {
        Some(d) => {
            check_unit_interval("delta", d)?;
            SchemeParams::penalized(&sp, &u0, eps, d)
        }
        None => SchemeParams {
            penalty_delta: None,
            artificial_viscosity: 0.0,
            epsilon: eps,
            ..SchemeParams::projection(&sp, &u0)
        },
    };
    // one shared step count: rescaled dt and physical dt differ by eps
    let dt_bound = cfl_dt(&sp, &params_pen, &sp.u0)?;
    let steps = (1.0 / dt_bound).ceil() as usize;
    let dt_r = 1.0 / steps as f64;
    params_pen.cfl_safety = 1.0; // dt fixed explicitly below the bound
    let opts = SolveOptions {
        store_policy: StorePolicy::Endpoints,
        keep_step_log: false,
        dt_max: Some(dt_r),
    };
    let pen = march(sp.clone(), params_pen, StepMode::Penalized, 1.0, &opts)?;

    let params_proj = SchemeParams {
        penalty_delta: None,
        artificial_viscosity: 0.0,
        epsilon: 1.0,
        cfl_safety: 1.0,
        lambda: params_pen.lambda,
    };
    let dt_p = dt_r / eps;
    let opts_p = SolveOptions {
        store_policy: StorePolicy::Endpoints,
        keep_step_log: false,
        dt_max: Some(dt_p),
    };
    let proj = march(sp, params_proj, StepMode::Projected, 1.0 / eps, &opts_p)?;
    Ok(pen.final_snapshot().max_abs_diff(proj.final_snapshot()))
}

/// Finite-difference surrogate for the delta-derivative of the penalized
/// solution: `||w^{eps, 1.05 delta}(., 1) - w^{eps, delta}(., 1)||_inf / (0.05 delta)`.
pub fn delta_sensitivity(
    problem: &ProblemSpec,
    eps: f64,
    delta: f64,
    grid: TorusGrid,
) -> Result<f64> {
    check_unit_interval("eps", eps)?;
    check_unit_interval("delta", delta)?;
    let bump = 1.05 * delta;
    check_unit_interval("delta (bumped)", bump)?;
    let sp = Arc::new(SampledProblem::new(problem, grid));
    let u0 = sp.u0_field();
    let params_a = SchemeParams::penalized(&sp, &u0, eps, delta);
    let params_b = SchemeParams::penalized(&sp, &u0, eps, bump);
    // shared step so the integrator error cancels in the difference
    let dt = cfl_dt(&sp, &params_a, &sp.u0)?.min(cfl_dt(&sp, &params_b, &sp.u0)?);
    let steps = (1.0 / dt).ceil() as usize;
    let dt = 1.0 / steps as f64;
    let opts = SolveOptions {
        store_policy: StorePolicy::Endpoints,
        keep_step_log: false,
        dt_max: Some(dt),
    };
    let run = |params: SchemeParams| {
        let mut p = params;
        p.cfl_safety = 1.0;
        march(sp.clone(), p, StepMode::Penalized, 1.0, &opts)
    };
    let a = run(params_a)?;
    let b = run(params_b)?;
    Ok(a.final_snapshot().max_abs_diff(b.final_snapshot()) / (0.05 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, catalog_problem, penalty_bound_constant};

    #[test]
    fn supercritical_exact_linear_decay() {
        let prob = catalog_problem("supercritical-1d").unwrap();
        let g = build_grid(1, 128).unwrap();
        let traj = solve_obstacle(&prob, 2.0, g, &SolveOptions::default()).unwrap();
        let err = traj
            .final_snapshot()
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max((v + 2.0).abs()));
        assert!(err <= 1e-3, "u(., 2) deviates from -2 by {err}");
    }

    #[test]
    fn subcritical_flat_reaches_obstacle() {
        let prob = catalog_problem("subcritical-obstacle-1d").unwrap();
        let g = build_grid(1, 128).unwrap();
        let traj = solve_obstacle(&prob, 10.0, g, &SolveOptions::default()).unwrap();
        assert!(traj.final_snapshot().max_abs() <= 5e-3);
        // feasibility is exact along the way
        for snap in traj.snapshots() {
            for (v, psi) in snap.values().iter().zip(&traj.sampled_problem().psi) {
                assert!(v <= psi);
            }
        }
    }

    #[test]
    fn comparison_principle_between_initial_data() {
        let prob = catalog_problem("subcritical-cos-obstacle-1d").unwrap();
        let mut lower = prob.clone();
        lower.initial = lower.initial.clone().with_constant(-0.2);
        let g = build_grid(1, 64).unwrap();
        let opts = SolveOptions {
            store_policy: StorePolicy::Sampled(32),
            ..Default::default()
        };
        let lo = solve_obstacle(&lower, 2.0, g, &opts).unwrap();
        let hi = solve_obstacle(&prob, 2.0, g, &opts).unwrap();
        assert_eq!(lo.times().len(), hi.times().len());
        for (a, b) in lo.snapshots().iter().zip(hi.snapshots()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!(*x <= y + 1e-12);
            }
        }
    }

    #[test]
    fn trajectories_are_nonexpansive_in_time() {
        let prob = catalog_problem("subcritical-cos-obstacle-1d").unwrap();
        let mut other = prob.clone();
        other.initial = other.initial.clone().with_constant(-0.15);
        let g = build_grid(1, 64).unwrap();
        let opts = SolveOptions {
            store_policy: StorePolicy::Sampled(16),
            ..Default::default()
        };
        let a = solve_obstacle(&prob, 3.0, g, &opts).unwrap();
        let b = solve_obstacle(&other, 3.0, g, &opts).unwrap();
        let mut prev = f64::INFINITY;
        for (sa, sb) in a.snapshots().iter().zip(b.snapshots()) {
            let d = sa.max_abs_diff(sb);
            assert!(d <= prev + 1e-12, "distance grew: {prev} -> {d}");
            prev = d;
        }
    }

    #[test]
    fn replay_reproduces_forward_run() {
        let prob = catalog_problem("subcritical-cos-obstacle-1d").unwrap();
        let g = build_grid(1, 64).unwrap();
        let opts = SolveOptions {
            keep_step_log: true,
            ..Default::default()
        };
        let traj = solve_penalized(&prob, 0.3, 0.09, g, &opts).unwrap();
        assert_eq!(traj.replay_residual().unwrap(), 0.0);
    }

    #[test]
    fn bitwise_determinism_of_solver() {
        let prob = catalog_problem("degenerate-diag-2d").unwrap();
        let g = build_grid(2, 16).unwrap();
        let a = solve_obstacle(&prob, 0.5, g, &SolveOptions::default()).unwrap();
        let b = solve_obstacle(&prob, 0.5, g, &SolveOptions::default()).unwrap();
        for (sa, sb) in a.snapshots().iter().zip(b.snapshots()) {
            assert_eq!(sa.values(), sb.values());
        }
    }

    #[test]
    fn penalized_inactive_obstacle_matches_unconstrained() {
        // psi pushed out of reach: the penalty never fires and the run with
        // delta and viscosity forced off coincides with the projection
        // solver stepped at the same physical dt
        let prob = catalog_problem("eikonal-cos-1d").unwrap().without_obstacle();
        let g = build_grid(1, 64).unwrap();
        let eps = 0.5;
        let traj = solve_penalized(&prob, eps, 0.25, g, &SolveOptions::default()).unwrap();
        assert_eq!(traj.max_overshoot(), 0.0);
        let gap = stability_gap_custom(&prob, eps, None, g).unwrap();
        assert!(gap <= 1e-6, "gap {gap}");
    }

    #[test]
    fn penalty_overshoot_respects_quarter_root_bound() {
        for key in ["subcritical-obstacle-1d", "subcritical-cos-obstacle-1d"] {
            let prob = catalog_problem(key).unwrap();
            let g = build_grid(1, 128).unwrap();
            let c_psi = penalty_bound_constant(&prob, g);
            for eps in [0.4, 0.2, 0.1] {
                let delta = eps * eps;
                let traj =
                    solve_penalized(&prob, eps, delta, g, &SolveOptions::default()).unwrap();
                let bound = c_psi * delta.powf(0.25);
                assert!(
                    traj.max_overshoot() <= bound * (1.0 + 1e-9),
                    "{key} eps {eps}: overshoot {} above {bound}",
                    traj.max_overshoot()
                );
            }
        }
    }

    #[test]
    fn uniform_gradient_bound_across_epsilon() {
        let prob = catalog_problem("subcritical-cos-obstacle-1d").unwrap();
        let g = build_grid(1, 128).unwrap();
        let mut lips = Vec::new();
        for eps in [0.4, 0.2, 0.1, 0.05] {
            let traj =
                solve_penalized(&prob, eps, eps * eps, g, &SolveOptions::default()).unwrap();
            lips.push(traj.final_snapshot().lipschitz());
        }
        let max = lips.iter().fold(0.0f64, |m, v| m.max(*v));
        let min = lips.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(
            max <= 2.0 * min.max(1e-12),
            "Lipschitz constants vary too much: {lips:?}"
        );
    }

    #[test]
    fn stability_gap_decreases_with_epsilon() {
        let prob = catalog_problem("subcritical-obstacle-1d").unwrap();
        let g = build_grid(1, 128).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.4, 0.2, 0.1, 0.05] {
            let gap = stability_gap(&prob, eps, g).unwrap();
            assert!(gap < prev, "gap not decreasing at eps {eps}: {gap} >= {prev}");
            prev = gap;
        }
    }

    #[test]
    fn delta_sensitivity_shape() {
        let prob = catalog_problem("subcritical-obstacle-1d").unwrap();
        let g = build_grid(1, 64).unwrap();
        let eps = 0.3;
        let mut prev = 0.0;
        for delta in [1e-2, 1e-3, 1e-4] {
            let s = delta_sensitivity(&prob, eps, delta, g).unwrap();
            let bound = 10.0 * (1.0 / eps + 1.0 / delta.powf(0.75));
            assert!(s <= bound, "sensitivity {s} above {bound} at delta {delta}");
            assert!(s >= prev, "sensitivity should grow as delta shrinks");
            prev = s;
        }
    }

    #[test]
    fn lax_friedrichs_converges_on_smooth_solution() {
        // u_t + |u_x|^2/2 = 0 with u0 = 0.1 cos(2 pi x), pre-shock horizon
        // t = 0.1; exact solution by characteristics x = y + t u0'(y),
        // u = u0(y) + t u0'(y)^2 / 2, solved for y by Newton.
        let u0 = |y: f64| 0.1 * (std::f64::consts::TAU * y).cos();
        let du0 = |y: f64| -0.1 * std::f64::consts::TAU * (std::f64::consts::TAU * y).sin();
        let t = 0.1;
        let exact = |x: f64| {
            let mut y = x;
            for _ in 0..60 {
                let f = y + t * du0(y) - x;
                let fp = 1.0 + t * (-0.1)
                    * std::f64::consts::TAU
                    * std::f64::consts::TAU
                    * (std::f64::consts::TAU * y).cos();
                y -= f / fp;
            }
            u0(y) + t * du0(y) * du0(y) / 2.0
        };
        let prob = ProblemSpec {
            name: "smooth".into(),
            dim: 1,
            hamiltonian: crate::domain::HamiltonianSpec::quadratic(
                crate::domain::TrigPoly::zero(),
                vec![crate::domain::TrigPoly::zero()],
            ),
            diffusion: crate::domain::DiffusionSpec::Zero,
            obstacle: crate::domain::TrigPoly::constant(1e6),
            initial: crate::domain::TrigPoly::cosine(1, 0.1, 0.0),
        };
        let mut errors = Vec::new();
        for n in [128usize, 256, 512] {
            let g = build_grid(1, n).unwrap();
            let traj = solve_obstacle(&prob, t, g, &SolveOptions::default()).unwrap();
            let mut err = 0.0f64;
            for (i, v) in traj.final_snapshot().values().iter().enumerate() {
                let x = g.coords(i)[0];
                err = err.max((v - exact(x)).abs());
            }
            errors.push(err);
        }
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        assert!(
            order1 >= 0.8 && order2 >= 0.8,
            "observed orders {order1:.2}, {order2:.2} from errors {errors:?}"
        );
    }
}
