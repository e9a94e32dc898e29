//! Lax-Friedrichs numerical Hamiltonian and the CFL time step.

use super::SchemeParams;
use crate::domain::{HamiltonianSpec, SampledProblem};
use crate::{Error, Result};

/// Monotone Lax-Friedrichs flux
/// `H(x, (p^- + p^+)/2) - sum_k (lambda_k / 2)(p_k^+ - p_k^-)`.
///
/// Consistent (equals H when `p^- = p^+`) and monotone whenever
/// `lambda_k >= |H_{p_k}|` on the range of centered gradients.
pub fn numerical_hamiltonian(
    spec: &HamiltonianSpec,
    x: &[f64],
    p_minus: &[f64],
    p_plus: &[f64],
    lambda: &[f64],
) -> f64 {
    let mut p_bar = [0.0; 2];
    for k in 0..p_minus.len() {
        p_bar[k] = 0.5 * (p_minus[k] + p_plus[k]);
    }
    let (value, _, _) = crate::domain::hamiltonian_eval(spec, x, &p_bar[..p_minus.len()]);
    let mut v = value;
    for k in 0..p_minus.len() {
        v -= 0.5 * lambda[k] * (p_plus[k] - p_minus[k]);
    }
    v
}

/// Explicit-part CFL bound
/// `dt = cfl_safety * eps / (2 max tr A / h^2 + 2 dim nu / h^2 + sum_k lambda_k / h)`,
/// which keeps every stencil weight of the explicit update nonnegative.
/// The `eps` division accounts for rescaled runs where the update rate is
/// `1/eps` times the spatial operator.
pub fn cfl_dt(sp: &SampledProblem, params: &SchemeParams, current: &[f64]) -> Result<f64> {
    if let Some(bad) = current.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteField(bad));
    }
    let grid = sp.grid;
    let h = grid.spacing();
    let dim = grid.dim();
    let mut denom = 2.0 * sp.max_trace_a / (h * h);
    denom += 2.0 * dim as f64 * params.artificial_viscosity / (h * h);
    for k in 0..dim {
        denom += params.lambda[k] / h;
    }
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter {
            name: "cfl",
            message: "explicit operator has zero speed; set a positive lambda".into(),
        });
    }
    Ok(params.cfl_safety * params.epsilon / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, DiffusionSpec, HamiltonianSpec, ProblemSpec, TrigPoly};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sampled(diffusion: DiffusionSpec, n: usize) -> SampledProblem {
        let p = ProblemSpec {
            name: "t".into(),
            dim: 1,
            hamiltonian: HamiltonianSpec::quadratic(TrigPoly::zero(), vec![TrigPoly::zero()]),
            diffusion,
            obstacle: TrigPoly::constant(1.0),
            initial: TrigPoly::zero(),
        };
        SampledProblem::new(&p, build_grid(1, n).unwrap())
    }

    #[test]
    fn flux_is_consistent() {
        let spec = HamiltonianSpec::quadratic(TrigPoly::cosine(1, 0.4, 0.1), vec![TrigPoly::zero()]);
        for p in [-1.5, 0.0, 2.0] {
            let exact = crate::domain::hamiltonian_eval(&spec, &[0.3], &[p]).0;
            let flux = numerical_hamiltonian(&spec, &[0.3], &[p], &[p], &[2.0]);
            assert!((flux - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn flux_arithmetic_case() {
        // V = 0, b = 0, p- = 0, p+ = 2, lambda = 2: H(1) - 1*2 = 0.5 - 2 = -1.5
        let spec = HamiltonianSpec::quadratic(TrigPoly::zero(), vec![TrigPoly::zero()]);
        let v = numerical_hamiltonian(&spec, &[0.0], &[0.0], &[2.0], &[2.0]);
        assert!((v + 1.5).abs() < 1e-15);
    }

    #[test]
    fn flux_is_monotone_in_sampled_directions() {
        let spec = HamiltonianSpec::quadratic(
            TrigPoly::cosine(1, 0.5, 0.0),
            vec![TrigPoly::cosine(1, 0.3, 0.0)],
        );
        let lambda = [3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bump = 1e-3;
        for _ in 0..1000 {
            let x = [rng.gen::<f64>()];
            let pm = [rng.gen::<f64>() * 4.0 - 2.0];
            let pp = [rng.gen::<f64>() * 4.0 - 2.0];
            let base = numerical_hamiltonian(&spec, &x, &pm, &pp, &lambda);
            // nondecreasing in p^-
            let up_m = numerical_hamiltonian(&spec, &x, &[pm[0] + bump], &pp, &lambda);
            assert!(up_m >= base - 1e-12);
            // nonincreasing in p^+
            let up_p = numerical_hamiltonian(&spec, &x, &pm, &[pp[0] + bump], &lambda);
            assert!(up_p <= base + 1e-12);
        }
    }

    #[test]
    fn cfl_arithmetic_case() {
        // A = 0, nu = 0, lambda = 2, h = 1/128, dim 1, safety 0.5
        let sp = sampled(DiffusionSpec::Zero, 128);
        let params = SchemeParams {
            lambda: [2.0, 0.0],
            cfl_safety: 0.5,
            penalty_delta: None,
            artificial_viscosity: 0.0,
            epsilon: 1.0,
        };
        let dt = cfl_dt(&sp, &params, &vec![0.0; 128]).unwrap();
        assert!((dt - 0.5 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn cfl_scaling_with_resolution_and_diffusion() {
        let params = SchemeParams {
            lambda: [2.0, 0.0],
            cfl_safety: 0.5,
            penalty_delta: None,
            artificial_viscosity: 0.0,
            epsilon: 1.0,
        };
        let dt_128 = cfl_dt(&sampled(DiffusionSpec::Zero, 128), &params, &vec![0.0; 128]).unwrap();
        let dt_256 = cfl_dt(&sampled(DiffusionSpec::Zero, 256), &params, &vec![0.0; 256]).unwrap();
        assert!((dt_128 / dt_256 - 2.0).abs() < 1e-12);

        // with A = I the step scales like h^2
        let visc = DiffusionSpec::ConstantIsotropic { value: 1.0 };
        let dt_v128 = cfl_dt(&sampled(visc.clone(), 128), &params, &vec![0.0; 128]).unwrap();
        let dt_v512 = cfl_dt(&sampled(visc, 512), &params, &vec![0.0; 512]).unwrap();
        let ratio = dt_v128 / dt_v512;
        // dominated by the 2/h^2 term: ratio approaches 16
        assert!(ratio > 12.0 && ratio < 16.5, "ratio {ratio}");
    }
}
