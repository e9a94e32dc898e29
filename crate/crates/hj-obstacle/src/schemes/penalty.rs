//! The penalty function gamma^delta(r) = r_+^2 / (2 sqrt(delta)).
//!
//! Equivalently gamma(delta^{-1/4} r) with gamma(r) = r_+^2 / 2; this exact
//! scaling couples the penalty strength to the artificial viscosity
//! delta^2 and is what the stability analysis leans on.

use crate::{Error, Result};

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "penalty_delta",
            message: format!("must be positive, got {delta}"),
        });
    }
    Ok(())
}

/// gamma^delta(r) = r_+^2 / (2 sqrt(delta)); zero for r <= 0.
pub fn penalty(delta: f64, r: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(penalty_unchecked(delta, r))
}

/// (gamma^delta)'(r) = r_+ / sqrt(delta).
pub fn penalty_prime(delta: f64, r: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(penalty_prime_unchecked(delta, r))
}

#[inline]
pub(crate) fn penalty_unchecked(delta: f64, r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r / (2.0 * delta.sqrt())
    }
}

#[inline]
pub(crate) fn penalty_prime_unchecked(delta: f64, r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r / delta.sqrt()
    }
}

/// Solves the nodewise implicit penalty equation
/// `eps (y - what) / dt + gamma^delta(y - psi) = 0`
/// by safeguarded Newton (bracket [psi, what], <= 30 iterations,
/// residual <= 1e-12 scaled). Returns `(y, d)` where
/// `d = eps / (eps + dt (gamma^delta)'(y - psi))` is the derivative of the
/// solve with respect to the predictor, the diagonal factor of the
/// linearized step.
pub(crate) fn implicit_penalty_node(
    eps: f64,
    dt: f64,
    delta: f64,
    what: f64,
    psi: f64,
) -> Result<(f64, f64)> {
    if what <= psi {
        return Ok((what, 1.0));
    }
    // F(y) = eps (y - what) + dt gamma^delta(y - psi), increasing and convex,
    // with F(psi) < 0 <= F(what): the root lies in (psi, what].
    let scale = eps * (1.0 + what.abs()) + dt;
    let tol = 1e-12 * scale.max(1.0);
    let mut lo = psi;
    let mut hi = what;
    let mut y = what;
    for _ in 0..30 {
        let f = eps * (y - what) + dt * penalty_unchecked(delta, y - psi);
        if f.abs() <= tol {
            return Ok((y, eps / (eps + dt * penalty_prime_unchecked(delta, y - psi))));
        }
        if f > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let fp = eps + dt * penalty_prime_unchecked(delta, y - psi);
        let mut next = y - f / fp;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == y {
            return Ok((y, eps / (eps + dt * penalty_prime_unchecked(delta, y - psi))));
        }
        y = next;
    }
    let residual = eps * (y - what) + dt * penalty_unchecked(delta, y - psi);
    Err(Error::NewtonStalled {
        residual,
        iterations: 30,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_for_nonpositive_arguments() {
        for delta in [1e-4, 0.01, 0.5] {
            for r in [-10.0, -1e-12, 0.0] {
                assert_eq!(penalty(delta, r).unwrap(), 0.0);
                assert_eq!(penalty_prime(delta, r).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn quarter_power_scaling() {
        // gamma^delta(delta^{1/4}) = 1/2 for any delta
        for delta in [1e-8f64, 1e-4, 1e-2, 0.9] {
            let r = delta.powf(0.25);
            assert!((penalty(delta, r).unwrap() - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn supersolution_margin_value() {
        // gamma^delta(C delta^{1/4}) = C^2/2, here C = 3, delta = 1e-4
        let v = penalty(1e-4, 3.0 * 0.1).unwrap();
        assert!((v - 4.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_delta() {
        assert!(penalty(0.0, 1.0).is_err());
        assert!(penalty(-1.0, 1.0).is_err());
        assert!(penalty_prime(0.0, 1.0).is_err());
    }

    #[test]
    fn implicit_node_solves_the_scalar_equation() {
        let (eps, dt, delta) = (0.3, 1e-3, 0.04);
        let (y, d) = implicit_penalty_node(eps, dt, delta, 0.7, 0.1).unwrap();
        let residual = eps * (y - 0.7) + dt * penalty_unchecked(delta, y - 0.1);
        assert!(residual.abs() < 1e-11);
        assert!(y < 0.7 && y > 0.1);
        assert!(d > 0.0 && d <= 1.0);
        // below the obstacle nothing happens
        let (y2, d2) = implicit_penalty_node(eps, dt, delta, -0.2, 0.1).unwrap();
        assert_eq!(y2, -0.2);
        assert_eq!(d2, 1.0);
    }

    #[test]
    fn implicit_node_handles_stiff_scales() {
        // delta = eps^2 with small eps is the regime the solver must absorb
        let eps = 1e-3;
        let delta = eps * eps;
        let dt = 1e-2;
        let (y, _) = implicit_penalty_node(eps, dt, delta, 1.0, 0.0).unwrap();
        let residual = eps * (y - 1.0) + dt * penalty_unchecked(delta, y);
        assert!(residual.abs() < 1e-10, "residual {residual}");
    }
}
