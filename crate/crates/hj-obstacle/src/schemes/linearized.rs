//! Matrix-free linearization of one penalized forward step and its exact
//! algebraic transpose.
//!
//! The forward step is `w_next = P(E(w))` with `E` the explicit update of
//! advection/diffusion/dissipation and `P` the nodewise implicit penalty
//! solve. Its derivative at `w` is
//!
//! ```text
//! dG = D . (I + (dt/eps) M),
//! M f = sum_k [ (a_k + nu + lambda_k h / 2) D2_k f - q_k C_k f ],
//! ```
//!
//! where `q_k = H_{p_k}(x, centered Dw)` is the frozen advection field,
//! `D2_k`/`C_k` are the periodic second/centered first differences, and
//! `D = diag(eps / (eps + dt (gamma^delta)'(w_next - psi)))` is the
//! derivative of the implicit penalty solve. `apply_transpose` implements
//! `dG^T = (I + (dt/eps) M^T) . D` entry-exactly, which is the discrete
//! dual transport `(a sigma)_xx + div(q sigma)` with the same dissipation;
//! transposition, not rediscretization, is what turns the dual mass
//! identities into algebraic facts.

use super::penalty::penalty_prime_unchecked;
use super::SchemeParams;
use crate::domain::{SampledProblem, TorusGrid};

#[derive(Debug, Clone)]
pub struct LinearizedStep {
    grid: TorusGrid,
    dt: f64,
    eps: f64,
    /// a_k + nu + lambda_k h / 2 per axis per node (second-difference weights).
    second_coef: Vec<Vec<f64>>,
    /// Frozen advection H_{p_k}(x, centered Dw) per axis per node.
    advection: Vec<Vec<f64>>,
    /// Raw penalty weights (gamma^delta)'(w_next - psi) per node.
    penalty_prime: Vec<f64>,
    /// Diagonal derivative of the implicit penalty solve,
    /// d = eps / (eps + dt penalty_prime).
    penalty_diag: Vec<f64>,
}

impl LinearizedStep {
    /// Freezes the linearization of the step from `w_pre` to `w_post`
    /// (the penalty weight is evaluated where the implicit solve placed it).
    pub fn build(
        sp: &SampledProblem,
        params: &SchemeParams,
        dt: f64,
        w_pre: &[f64],
        w_post: &[f64],
    ) -> Self {
        let grid = sp.grid;
        let dim = grid.dim();
        let h = grid.spacing();
        let inv_2h = 0.5 / h;
        let nodes = grid.node_count();
        let mut second_coef = vec![vec![0.0; nodes]; dim];
        let mut advection = vec![vec![0.0; nodes]; dim];
        let mut penalty_prime = vec![0.0; nodes];
        let mut penalty_diag = vec![1.0; nodes];
        for i in 0..nodes {
            for k in 0..dim {
                let up = w_pre[grid.shift_up(i, k)];
                let dn = w_pre[grid.shift_down(i, k)];
                advection[k][i] = (up - dn) * inv_2h - sp.drift[k][i];
                second_coef[k][i] =
                    sp.diffusion[k][i] + params.artificial_viscosity + 0.5 * params.lambda[k] * h;
            }
            if let Some(delta) = params.penalty_delta {
                let gp = penalty_prime_unchecked(delta, w_post[i] - sp.psi[i]);
                penalty_prime[i] = gp;
                penalty_diag[i] = params.epsilon / (params.epsilon + dt * gp);
            }
        }
        LinearizedStep {
            grid,
            dt,
            eps: params.epsilon,
            second_coef,
            advection,
            penalty_prime,
            penalty_diag,
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn penalty_prime(&self) -> &[f64] {
        &self.penalty_prime
    }

    pub fn penalty_diag(&self) -> &[f64] {
        &self.penalty_diag
    }

    /// The advection+diffusion rate `M f` alone (no identity, no time step,
    /// no penalty). Annihilates constants exactly.
    pub fn apply_advection_diffusion(&self, f: &[f64], out: &mut [f64]) {
        let grid = self.grid;
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        for i in 0..f.len() {
            let mut acc = 0.0;
            for k in 0..grid.dim() {
                let up = f[grid.shift_up(i, k)];
                let dn = f[grid.shift_down(i, k)];
                acc += self.second_coef[k][i] * (up - 2.0 * f[i] + dn) * inv_h2;
                acc -= self.advection[k][i] * (up - dn) * inv_2h;
            }
            out[i] = acc;
        }
    }

    /// One linearized forward update `out = D (f + (dt/eps) M f)`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let grid = self.grid;
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        let scale = self.dt / self.eps;
        for i in 0..f.len() {
            let mut acc = 0.0;
            for k in 0..grid.dim() {
                let up = f[grid.shift_up(i, k)];
                let dn = f[grid.shift_down(i, k)];
                acc += self.second_coef[k][i] * (up - 2.0 * f[i] + dn) * inv_h2;
                acc -= self.advection[k][i] * (up - dn) * inv_2h;
            }
            out[i] = self.penalty_diag[i] * (f[i] + scale * acc);
        }
    }

    /// Exact algebraic transpose `out = (I + (dt/eps) M^T)(D g)`:
    /// `M^T s = sum_k [ D2_k(c_k s) + C_k(q_k s) ]` by periodicity and the
    /// antisymmetry of the centered difference.
    pub fn apply_transpose(&self, g: &[f64], out: &mut [f64]) {
        let grid = self.grid;
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        let scale = self.dt / self.eps;
        for j in 0..g.len() {
            let gj = self.penalty_diag[j] * g[j];
            let mut acc = 0.0;
            for k in 0..grid.dim() {
                let up = grid.shift_up(j, k);
                let dn = grid.shift_down(j, k);
                let s_up = self.penalty_diag[up] * g[up];
                let s_dn = self.penalty_diag[dn] * g[dn];
                acc += (self.second_coef[k][up] * s_up - 2.0 * self.second_coef[k][j] * gj
                    + self.second_coef[k][dn] * s_dn)
                    * inv_h2;
                acc += (self.advection[k][up] * s_up - self.advection[k][dn] * s_dn) * inv_2h;
            }
            out[j] = gj + scale * acc;
        }
    }

    /// Mass lost to the penalty when transposing one step:
    /// `sum_i (1 - d_i) s_i h^n` with `s = D g`; equals
    /// `(dt/eps) sum_i d_i (gamma^delta)' g_i h^n` and feeds the discrete
    /// dual mass identities.
    pub fn penalty_mass_absorption(&self, g: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..g.len() {
            acc += (1.0 - self.penalty_diag[i]) * g[i];
        }
        acc * self.grid.cell_volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, catalog_problem, ScalarField};
    use crate::schemes::{cfl_dt, step_penalized};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(key: &str, n: usize) -> (SampledProblem, SchemeParams) {
        let prob = catalog_problem(key).unwrap();
        let g = build_grid(prob.dim, n).unwrap();
        let sp = SampledProblem::new(&prob, g);
        let params = SchemeParams {
            lambda: [3.0, 3.0],
            cfl_safety: 0.5,
            penalty_delta: Some(0.09),
            artificial_viscosity: 0.0081,
            epsilon: 0.3,
        };
        (sp, params)
    }

    #[test]
    fn transpose_is_exact_against_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (key, n) in [("subcritical-cos-obstacle-1d", 128), ("degenerate-diag-2d", 16)] {
            let (sp, params) = setup(key, n);
            let dt = cfl_dt(&sp, &params, &sp.u0).unwrap();
            // linearize around a field that actually touches the penalty
            let start = ScalarField::from_raw(
                sp.grid,
                sp.psi.iter().map(|p| p + 0.05).collect::<Vec<_>>(),
            );
            let (_, lin) = step_penalized(&sp, &params, &start, dt).unwrap();
            let nodes = sp.grid.node_count();
            let mut out_f = vec![0.0; nodes];
            let mut out_g = vec![0.0; nodes];
            for _ in 0..100 {
                let f: Vec<f64> = (0..nodes).map(|_| rng.gen::<f64>()).collect();
                let g: Vec<f64> = (0..nodes).map(|_| rng.gen::<f64>()).collect();
                lin.apply(&f, &mut out_f);
                lin.apply_transpose(&g, &mut out_g);
                let lhs: f64 = out_f.iter().zip(&g).map(|(a, b)| a * b).sum();
                let rhs: f64 = f.iter().zip(&out_g).map(|(a, b)| a * b).sum();
                let denom = lhs.abs().max(rhs.abs()).max(1e-300);
                assert!(
                    ((lhs - rhs) / denom).abs() < 1e-12,
                    "{key}: duality gap {}",
                    ((lhs - rhs) / denom).abs()
                );
            }
        }
    }

    #[test]
    fn advection_diffusion_annihilates_constants() {
        let (sp, params) = setup("subcritical-cos-obstacle-1d", 128);
        let dt = cfl_dt(&sp, &params, &sp.u0).unwrap();
        let (_, lin) = step_penalized(&sp, &params, &sp.u0_field(), dt).unwrap();
        let ones = vec![1.0; sp.grid.node_count()];
        let mut out = vec![0.0; sp.grid.node_count()];
        lin.apply_advection_diffusion(&ones, &mut out);
        for v in &out {
            assert!(v.abs() <= 1e-12, "constant not annihilated: {v}");
        }
    }

    #[test]
    fn linearized_matches_directional_derivative_of_step() {
        let (sp, params) = setup("subcritical-cos-obstacle-1d", 64);
        let dt = cfl_dt(&sp, &params, &sp.u0).unwrap();
        let base = ScalarField::from_raw(
            sp.grid,
            sp.psi.iter().map(|p| p + 0.02).collect::<Vec<_>>(),
        );
        let (_, lin) = step_penalized(&sp, &params, &base, dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dir: Vec<f64> = (0..sp.grid.node_count())
            .map(|_| rng.gen::<f64>() - 0.5)
            .collect();
        let t = 1e-6;
        let plus = ScalarField::from_raw(
            sp.grid,
            base.values().iter().zip(&dir).map(|(b, d)| b + t * d).collect(),
        );
        let minus = ScalarField::from_raw(
            sp.grid,
            base.values().iter().zip(&dir).map(|(b, d)| b - t * d).collect(),
        );
        let (sp_plus, _) = step_penalized(&sp, &params, &plus, dt).unwrap();
        let (sp_minus, _) = step_penalized(&sp, &params, &minus, dt).unwrap();
        let mut lin_dir = vec![0.0; sp.grid.node_count()];
        lin.apply(&dir, &mut lin_dir);
        for i in 0..sp.grid.node_count() {
            let fd = (sp_plus.values()[i] - sp_minus.values()[i]) / (2.0 * t);
            assert!(
                (fd - lin_dir[i]).abs() < 1e-5,
                "node {i}: fd {fd} vs lin {}",
                lin_dir[i]
            );
        }
    }
}
