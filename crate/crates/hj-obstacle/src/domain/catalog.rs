//! Builtin problem catalog, addressable by string key.

use super::problem::{DiffusionSpec, HamiltonianSpec, ProblemSpec};
use super::trig::TrigPoly;
use crate::{Error, Result};

/// Catalog keys in a fixed order.
pub const CATALOG_KEYS: [&str; 6] = [
    "supercritical-1d",
    "subcritical-obstacle-1d",
    "subcritical-cos-obstacle-1d",
    "eikonal-cos-1d",
    "viscous-eikonal-1d",
    "degenerate-diag-2d",
];

/// When the ergodic constant of a catalog problem is known in closed form
/// (eikonal family: c_H = max V), return it.
pub fn known_ergodic_constant(key: &str) -> Option<f64> {
    match key {
        "supercritical-1d" => Some(1.0),
        "subcritical-obstacle-1d" => Some(-1.0),
        "subcritical-cos-obstacle-1d" => None, // diffusion shifts it below max V = -0.7
        "eikonal-cos-1d" => Some(1.0),
        _ => None,
    }
}

/// Looks up a builtin problem by key.
pub fn catalog_problem(key: &str) -> Result<ProblemSpec> {
    let p = match key {
        // H = |p|^2/2 + 1, A = 0, psi = 0, u0 = 0. c_H = 1 > 0 and
        // u(x, t) = -t exactly: the regime where the obstacle is escaped.
        "supercritical-1d" => ProblemSpec {
            name: key.into(),
            dim: 1,
            hamiltonian: HamiltonianSpec::quadratic(TrigPoly::constant(1.0), vec![TrigPoly::zero()]),
            diffusion: DiffusionSpec::Zero,
            obstacle: TrigPoly::constant(0.0),
            initial: TrigPoly::constant(0.0),
        },
        // H = |p|^2/2 - 1, A = 0, psi = 0, u0 = -1. c_H = -1 < 0; the
        // solution rises onto the obstacle and the limit is V = psi = 0.
        "subcritical-obstacle-1d" => ProblemSpec {
            name: key.into(),
            dim: 1,
            hamiltonian: HamiltonianSpec::quadratic(TrigPoly::constant(-1.0), vec![TrigPoly::zero()]),
            diffusion: DiffusionSpec::Zero,
            obstacle: TrigPoly::constant(0.0),
            initial: TrigPoly::constant(-1.0),
        },
        // Spatially structured subcritical obstacle case with strictly
        // positive variable diffusion; the workhorse for adjoint audits.
        // V = 0.4 cos(2 pi x) - 1.1 (max V = -0.7 so c_H < 0),
        // a(x) = 0.06 + 0.04 cos(2 pi x) >= 0.02, psi = 0.25 sin(2 pi x).
        "subcritical-cos-obstacle-1d" => ProblemSpec {
            name: key.into(),
            dim: 1,
            hamiltonian: HamiltonianSpec::quadratic(
                TrigPoly::cosine(1, 0.4, -1.1),
                vec![TrigPoly::zero()],
            ),
            diffusion: DiffusionSpec::DiagonalVariable {
                entries: vec![TrigPoly::cosine(1, 0.04, 0.06)],
            },
            obstacle: TrigPoly::zero().with_term([1, 0], 0.0, 0.25),
            initial: TrigPoly::zero().with_term([1, 0], 0.0, 0.25).with_constant(-0.5),
        },
        // H = |p|^2/2 + cos(2 pi x), A = 0. Ergodic constant c_H = max V = 1;
        // obstacle kept finite but high so cell-problem machinery stays total.
        "eikonal-cos-1d" => ProblemSpec {
            name: key.into(),
            dim: 1,
            hamiltonian: HamiltonianSpec::quadratic(TrigPoly::cosine(1, 1.0, 0.0), vec![TrigPoly::zero()]),
            diffusion: DiffusionSpec::Zero,
            obstacle: TrigPoly::constant(2.0),
            initial: TrigPoly::constant(0.0),
        },
        // Same potential with constant isotropic diffusion 0.05.
        "viscous-eikonal-1d" => ProblemSpec {
            name: key.into(),
            dim: 1,
            hamiltonian: HamiltonianSpec::quadratic(TrigPoly::cosine(1, 1.0, 0.0), vec![TrigPoly::zero()]),
            diffusion: DiffusionSpec::ConstantIsotropic { value: 0.05 },
            obstacle: TrigPoly::constant(2.0),
            initial: TrigPoly::constant(0.0),
        },
        // 2D subcritical case with drift and degenerate diagonal diffusion
        // a^{kk} = 0.05 sin^2(pi x_k), vanishing on the coordinate lines.
        "degenerate-diag-2d" => ProblemSpec {
            name: key.into(),
            dim: 2,
            hamiltonian: HamiltonianSpec::quadratic(
                TrigPoly::constant(-1.0)
                    .with_term([1, 0], 0.3, 0.0)
                    .with_term([0, 1], 0.2, 0.0),
                vec![
                    TrigPoly::zero().with_term([0, 1], 0.0, 0.2),
                    TrigPoly::zero().with_term([1, 0], 0.0, 0.2),
                ],
            ),
            diffusion: DiffusionSpec::DiagonalVariable {
                entries: vec![
                    TrigPoly::constant(0.025).with_term([1, 0], -0.025, 0.0),
                    TrigPoly::constant(0.025).with_term([0, 1], -0.025, 0.0),
                ],
            },
            obstacle: TrigPoly::zero().with_term([1, 0], 0.2, 0.0),
            initial: TrigPoly::zero().with_term([1, 0], 0.2, 0.0).with_constant(-0.3),
        },
        other => return Err(Error::UnknownProblem(other.into())),
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::grid::build_grid;
    use crate::domain::problem::validate_problem;

    #[test]
    fn every_catalog_problem_validates_on_every_grid_size() {
        for key in CATALOG_KEYS {
            let p = catalog_problem(key).unwrap();
            for n in [8, 16, 64, 128] {
                let g = build_grid(p.dim, n).unwrap();
                let report = validate_problem(&p, g);
                assert!(report.all_passed(), "{key} fails at N = {n}: {report:?}");
            }
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            catalog_problem("no-such-problem"),
            Err(Error::UnknownProblem(_))
        ));
    }

    #[test]
    fn degenerate_2d_diffusion_vanishes_on_axes() {
        let p = catalog_problem("degenerate-diag-2d").unwrap();
        let a0 = p.diffusion.entry(&[0.0, 0.3], 0);
        assert!(a0.abs() < 1e-15, "a^{{00}} should vanish at x_0 = 0, got {a0}");
        let a_mid = p.diffusion.entry(&[0.5, 0.3], 0);
        assert!((a_mid - 0.05).abs() < 1e-15);
    }
}
