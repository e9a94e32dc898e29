//! Problem data: Hamiltonian, diffusion, obstacle, initial datum, and the
//! validation of the standing assumptions.

use super::field::ScalarField;
use super::grid::TorusGrid;
use super::trig::TrigPoly;
use serde::{Deserialize, Serialize};

/// Supported Hamiltonian families. Only the uniformly convex quadratic
/// family is built in: it admits exact Legendre transforms, and its Hessian
/// `D^2_pp H = I` meets the convexity requirement with `theta = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianFamily {
    #[default]
    QuadraticWithDrift,
}

/// H(x, p) = |p - b(x)|^2 / 2 + V(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub family: HamiltonianFamily,
    /// Potential V(x).
    pub potential: TrigPoly,
    /// Drift b(x), one component per axis.
    pub drift: Vec<TrigPoly>,
    /// Convexity constant theta with D^2_pp H >= 2 theta I; fixed at 1/2
    /// by the family.
    pub theta: f64,
}

impl HamiltonianSpec {
    pub fn quadratic(potential: TrigPoly, drift: Vec<TrigPoly>) -> Self {
        HamiltonianSpec {
            family: HamiltonianFamily::QuadraticWithDrift,
            potential,
            drift,
            theta: 0.5,
        }
    }

    fn drift_at(&self, x: &[f64]) -> [f64; 2] {
        let mut b = [0.0; 2];
        for (k, poly) in self.drift.iter().enumerate() {
            b[k] = poly.eval(x);
        }
        b
    }
}

/// Value, p-gradient and x-gradient of H at (x, p).
pub fn hamiltonian_eval(spec: &HamiltonianSpec, x: &[f64], p: &[f64]) -> (f64, [f64; 2], [f64; 2]) {
    let b = spec.drift_at(x);
    let mut value = spec.potential.eval(x);
    let mut grad_p = [0.0; 2];
    let mut grad_x = [0.0; 2];
    for k in 0..p.len() {
        let d = p[k] - b[k];
        value += 0.5 * d * d;
        grad_p[k] = d;
    }
    for axis in 0..x.len() {
        let mut g = spec.potential.deriv(x, axis);
        for (k, poly) in spec.drift.iter().enumerate() {
            g -= (p[k] - b[k]) * poly.deriv(x, axis);
        }
        grad_x[axis] = g;
    }
    (value, grad_p, grad_x)
}

/// Closed-form Lagrangian L(x, q) = |q|^2 / 2 + b(x).q - V(x) of the
/// quadratic family (the Legendre transform of H in p).
pub fn lagrangian_eval(spec: &HamiltonianSpec, x: &[f64], q: &[f64]) -> f64 {
    let HamiltonianFamily::QuadraticWithDrift = spec.family;
    let b = spec.drift_at(x);
    let mut v = -spec.potential.eval(x);
    for k in 0..q.len() {
        v += 0.5 * q[k] * q[k] + b[k] * q[k];
    }
    v
}

/// Diffusion matrix forms; all are diagonal so the 5-point stencil stays
/// monotone in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "form")]
pub enum DiffusionSpec {
    Zero,
    ConstantIsotropic { value: f64 },
    DiagonalVariable { entries: Vec<TrigPoly> },
}

impl DiffusionSpec {
    /// a^{kk}(x) for axis k.
    pub fn entry(&self, x: &[f64], axis: usize) -> f64 {
        match self {
            DiffusionSpec::Zero => 0.0,
            DiffusionSpec::ConstantIsotropic { value } => *value,
            DiffusionSpec::DiagonalVariable { entries } => {
                entries.get(axis).map_or(0.0, |p| p.eval(x))
            }
        }
    }

    /// d/dx_j of a^{kk}, needed for obstacle curvature bounds.
    pub fn entry_deriv2(&self, x: &[f64], axis: usize, j: usize, l: usize) -> f64 {
        match self {
            DiffusionSpec::DiagonalVariable { entries } => {
                entries.get(axis).map_or(0.0, |p| p.deriv2(x, j, l))
            }
            _ => {
                let _ = (x, j, l);
                0.0
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DiffusionSpec::Zero)
            || matches!(self, DiffusionSpec::ConstantIsotropic { value } if *value == 0.0)
    }
}

/// A complete problem instance on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub hamiltonian: HamiltonianSpec,
    pub diffusion: DiffusionSpec,
    /// Obstacle psi.
    pub obstacle: TrigPoly,
    /// Initial datum u0 (must satisfy u0 <= psi nodewise).
    pub initial: TrigPoly,
}

impl ProblemSpec {
    pub fn obstacle_field(&self, grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.obstacle.eval(x))
    }

    pub fn initial_field(&self, grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.initial.eval(x))
    }

    /// Same problem with the obstacle pushed out of reach, for runs of the
    /// unconstrained equation.
    pub fn without_obstacle(&self) -> ProblemSpec {
        let mut p = self.clone();
        p.obstacle = TrigPoly::constant(1e6);
        p.initial = self.initial.clone();
        p.name = format!("{}-noobstacle", self.name);
        p
    }
}

/// Outcome of one validation check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub assumption: String,
    pub passed: bool,
    pub detail: String,
}

/// Nodewise validation report for the standing assumptions; violations are
/// reported per assumption with the offending node, never raised.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub problem: String,
    pub checks: Vec<ValidationCheck>,
    /// Empirical growth constant sup |D_x H| / (1 + |p|^2) over the grid
    /// and the stated p-box.
    pub growth_constant: f64,
    pub p_box: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Checks compatibility u0 <= psi, positive semi-definiteness of A, the
/// Hessian bound D^2_pp H >= 2 theta, and measures the (H2) growth constant
/// over the p-box |p|_inf <= 4.
pub fn validate_problem(problem: &ProblemSpec, grid: TorusGrid) -> ValidationReport {
    let mut checks = Vec::new();
    let psi = problem.obstacle_field(grid);
    let u0 = problem.initial_field(grid);

    let bad = (0..grid.node_count()).find(|&i| u0.values()[i] > psi.values()[i]);
    checks.push(ValidationCheck {
        assumption: "compatibility u0 <= psi".into(),
        passed: bad.is_none(),
        detail: match bad {
            None => "u0 <= psi at every node".into(),
            Some(i) => format!(
                "violated at node {i} (x = {:?}): u0 = {} > psi = {}",
                &grid.coords(i)[..grid.dim()],
                u0.values()[i],
                psi.values()[i]
            ),
        },
    });

    let mut psd_bad = None;
    'outer: for i in 0..grid.node_count() {
        let x = grid.coords(i);
        for axis in 0..grid.dim() {
            if problem.diffusion.entry(&x[..grid.dim()], axis) < 0.0 {
                psd_bad = Some((i, axis));
                break 'outer;
            }
        }
    }
    checks.push(ValidationCheck {
        assumption: "diffusion A(x) >= 0".into(),
        passed: psd_bad.is_none(),
        detail: match psd_bad {
            None => "diagonal entries nonnegative at every node".into(),
            Some((i, axis)) => format!("a^{{{axis}{axis}}} < 0 at node {i}"),
        },
    });

    let theta_ok = problem.hamiltonian.theta <= 0.5;
    checks.push(ValidationCheck {
        assumption: "convexity D^2_pp H >= 2 theta".into(),
        passed: theta_ok,
        detail: format!(
            "quadratic family has D^2_pp H = I; declared theta = {}",
            problem.hamiltonian.theta
        ),
    });

    // (H2) growth constant over a stated p-box, sampled on grid nodes.
    let p_box = 4.0;
    let mut growth: f64 = 0.0;
    let samples = [-p_box, -1.0, 0.0, 1.0, p_box];
    for i in 0..grid.node_count() {
        let x = grid.coords(i);
        for &p0 in &samples {
            for &p1 in samples.iter().take(if grid.dim() == 2 { 5 } else { 1 }) {
                let p = [p0, if grid.dim() == 2 { p1 } else { 0.0 }];
                let (_, _, gx) = hamiltonian_eval(&problem.hamiltonian, &x[..grid.dim()], &p[..grid.dim()]);
                let norm = (gx[0] * gx[0] + gx[1] * gx[1]).sqrt();
                let psq = p[..grid.dim()].iter().map(|v| v * v).sum::<f64>();
                growth = growth.max(norm / (1.0 + psq));
            }
        }
    }

    ValidationReport {
        problem: problem.name.clone(),
        checks,
        growth_constant: growth,
        p_box,
    }
}

/// Problem data sampled once on a grid; hot loops read these arrays.
#[derive(Debug, Clone)]
pub struct SampledProblem {
    pub grid: TorusGrid,
    /// V(x) per node.
    pub potential: Vec<f64>,
    /// b_k(x) per node, one vector per axis.
    pub drift: Vec<Vec<f64>>,
    /// a^{kk}(x) per node, one vector per axis (empty entries mean zero).
    pub diffusion: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub u0: Vec<f64>,
    /// max_x tr A(x).
    pub max_trace_a: f64,
    /// max_x |b(x)| per axis.
    pub max_drift: f64,
}

impl SampledProblem {
    pub fn new(problem: &ProblemSpec, grid: TorusGrid) -> Self {
        let dim = grid.dim();
        let nodes = grid.node_count();
        let mut potential = vec![0.0; nodes];
        let mut drift = vec![vec![0.0; nodes]; dim];
        let mut diffusion = vec![vec![0.0; nodes]; dim];
        let mut psi = vec![0.0; nodes];
        let mut u0 = vec![0.0; nodes];
        let mut max_trace_a = 0.0f64;
        let mut max_drift = 0.0f64;
        for i in 0..nodes {
            let c = grid.coords(i);
            let x = &c[..dim];
            potential[i] = problem.hamiltonian.potential.eval(x);
            psi[i] = problem.obstacle.eval(x);
            u0[i] = problem.initial.eval(x);
            let mut tr = 0.0;
            for axis in 0..dim {
                if let Some(b) = problem.hamiltonian.drift.get(axis) {
                    drift[axis][i] = b.eval(x);
                    max_drift = max_drift.max(drift[axis][i].abs());
                }
                diffusion[axis][i] = problem.diffusion.entry(x, axis);
                tr += diffusion[axis][i];
            }
            max_trace_a = max_trace_a.max(tr);
        }
        SampledProblem {
            grid,
            potential,
            drift,
            diffusion,
            psi,
            u0,
            max_trace_a,
            max_drift,
        }
    }

    pub fn psi_field(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, self.psi.clone())
    }

    pub fn u0_field(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, self.u0.clone())
    }
}

/// The constructive penalty-bound constant of the obstacle:
/// `C_psi = sqrt(2 max_x(|tr(A D^2 psi)| + |H(x, D psi)| + |Delta psi|))`,
/// so that `psi + C_psi delta^{1/4}` is a supersolution of the penalized
/// problem and `(w - psi)_+ <= C_psi delta^{1/4}`.
pub fn penalty_bound_constant(problem: &ProblemSpec, grid: TorusGrid) -> f64 {
    let dim = grid.dim();
    let mut worst = 0.0f64;
    for i in 0..grid.node_count() {
        let c = grid.coords(i);
        let x = &c[..dim];
        let mut dpsi = [0.0; 2];
        let mut tr_a_d2 = 0.0;
        let mut laplacian = 0.0;
        for axis in 0..dim {
            dpsi[axis] = problem.obstacle.deriv(x, axis);
            let d2 = problem.obstacle.deriv2(x, axis, axis);
            tr_a_d2 += problem.diffusion.entry(x, axis) * d2;
            laplacian += d2;
        }
        let (h_val, _, _) = hamiltonian_eval(&problem.hamiltonian, x, &dpsi[..dim]);
        worst = worst.max(tr_a_d2.abs() + h_val.abs() + laplacian.abs());
    }
    (2.0 * worst).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::grid::build_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plain_quadratic() -> HamiltonianSpec {
        HamiltonianSpec::quadratic(TrigPoly::zero(), vec![TrigPoly::zero()])
    }

    #[test]
    fn hamiltonian_zero_case() {
        let spec = plain_quadratic();
        let (v, gp, gx) = hamiltonian_eval(&spec, &[0.3], &[0.0]);
        assert_eq!(v, 0.0);
        assert_eq!(gp[0], 0.0);
        assert_eq!(gx[0], 0.0);
    }

    #[test]
    fn hamiltonian_closed_form() {
        // V = cos(2 pi x), b = 0, x = 0, p = 2: value 3, grad_p 2, grad_x 0
        let spec = HamiltonianSpec::quadratic(TrigPoly::cosine(1, 1.0, 0.0), vec![TrigPoly::zero()]);
        let (v, gp, gx) = hamiltonian_eval(&spec, &[0.0], &[2.0]);
        assert!((v - 3.0).abs() < 1e-15);
        assert!((gp[0] - 2.0).abs() < 1e-15);
        assert!(gx[0].abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_gradients_match_finite_differences() {
        let spec = HamiltonianSpec::quadratic(
            TrigPoly::cosine(1, 0.8, -0.1).with_term([2, 1], 0.2, 0.3),
            vec![
                TrigPoly::cosine(1, 0.4, 0.0),
                TrigPoly::zero().with_term([1, 1], 0.0, 0.25),
            ],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let p = [rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0];
            let (_, gp, gx) = hamiltonian_eval(&spec, &x, &p);
            let step = 1e-6;
            for axis in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[axis] += step;
                pm[axis] -= step;
                let fp = hamiltonian_eval(&spec, &x, &pp).0;
                let fm = hamiltonian_eval(&spec, &x, &pm).0;
                assert!((gp[axis] - (fp - fm) / (2.0 * step)).abs() < 1e-6);

                let mut xp = x;
                let mut xm = x;
                xp[axis] += step;
                xm[axis] -= step;
                let fxp = hamiltonian_eval(&spec, &xp, &p).0;
                let fxm = hamiltonian_eval(&spec, &xm, &p).0;
                assert!((gx[axis] - (fxp - fxm) / (2.0 * step)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gradient_error_is_second_order_in_step() {
        let spec = HamiltonianSpec::quadratic(
            TrigPoly::cosine(2, 0.9, 0.0),
            vec![TrigPoly::cosine(1, 0.3, 0.0)],
        );
        let x = [0.37];
        let p = [1.2];
        let (_, _, gx) = hamiltonian_eval(&spec, &x, &p);
        let err = |step: f64| {
            let fp = hamiltonian_eval(&spec, &[x[0] + step], &p).0;
            let fm = hamiltonian_eval(&spec, &[x[0] - step], &p).0;
            ((fp - fm) / (2.0 * step) - gx[0]).abs()
        };
        let e1 = err(1e-3);
        let e2 = err(5e-4);
        // centered differences are O(step^2): halving the step gains ~4x
        assert!(e1 / e2 > 3.0, "e1 = {e1}, e2 = {e2}");
    }

    #[test]
    fn lagrangian_zero_and_closed_form() {
        let spec = plain_quadratic();
        assert_eq!(lagrangian_eval(&spec, &[0.1], &[0.0]), 0.0);
        let neg = HamiltonianSpec::quadratic(TrigPoly::constant(-1.0), vec![TrigPoly::zero()]);
        assert_eq!(lagrangian_eval(&neg, &[0.1], &[0.0]), 1.0);
    }

    #[test]
    fn lagrangian_is_legendre_transform() {
        let spec = HamiltonianSpec::quadratic(
            TrigPoly::cosine(1, 0.5, 0.2),
            vec![TrigPoly::cosine(1, 0.0, 0.0).with_term([1, 0], 0.3, 0.1)],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = [rng.gen::<f64>()];
            let q = [rng.gen::<f64>() * 3.0 - 1.5];
            let l = lagrangian_eval(&spec, &x, &q);
            // L(x,q) >= p.q - H(x,p) for sampled p, equality near p = q + b
            let mut best = f64::NEG_INFINITY;
            for k in 0..1000 {
                let p = [-6.0 + 12.0 * k as f64 / 999.0];
                let (h, _, _) = hamiltonian_eval(&spec, &x, &p);
                let cand = p[0] * q[0] - h;
                assert!(l >= cand - 1e-9, "L not dominating at p = {}", p[0]);
                best = best.max(cand);
            }
            let b = spec.drift[0].eval(&x);
            let (h_star, _, _) = hamiltonian_eval(&spec, &x, &[q[0] + b]);
            let exact = (q[0] + b) * q[0] - h_star;
            assert!((l - exact).abs() < 1e-10, "duality gap {}", (l - exact).abs());
            assert!(best <= l + 1e-9);
        }
    }

    #[test]
    fn validation_passes_and_flags() {
        let g = build_grid(1, 32).unwrap();
        let ok = ProblemSpec {
            name: "test".into(),
            dim: 1,
            hamiltonian: plain_quadratic(),
            diffusion: DiffusionSpec::Zero,
            obstacle: TrigPoly::constant(0.0),
            initial: TrigPoly::constant(-1.0),
        };
        assert!(validate_problem(&ok, g).all_passed());

        let mut bad = ok.clone();
        bad.initial = TrigPoly::constant(0.1);
        let report = validate_problem(&bad, g);
        assert!(!report.all_passed());
        assert!(report.checks[0].detail.contains("node"));
    }

    #[test]
    fn degenerate_diffusion_is_psd() {
        // a(x) = sin^2(2 pi x) = 1/2 - cos(4 pi x)/2, zero at several nodes
        let g = build_grid(1, 64).unwrap();
        let p = ProblemSpec {
            name: "degenerate".into(),
            dim: 1,
            hamiltonian: plain_quadratic(),
            diffusion: DiffusionSpec::DiagonalVariable {
                entries: vec![TrigPoly::cosine(2, -0.5, 0.5)],
            },
            obstacle: TrigPoly::constant(1.0),
            initial: TrigPoly::constant(0.0),
        };
        let report = validate_problem(&p, g);
        assert!(report.all_passed());
    }
}
