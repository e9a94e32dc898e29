//! Trigonometric polynomials on the torus.
//!
//! All coefficient functions of a problem (potential, drift, diffusion
//! entries, obstacle, initial datum) are finite sums
//!
//! ```text
//! f(x) = c0 + sum_k [ a_k cos(2 pi k.x) + b_k sin(2 pi k.x) ]
//! ```
//!
//! over integer wave vectors k. Values and derivatives are evaluated
//! analytically, so no interpolation error enters the test surface.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    /// Integer wave vector; the second entry is ignored in 1D.
    pub wave: [i32; 2],
    pub cos_coef: f64,
    pub sin_coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrigPoly {
    pub constant: f64,
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `c + a cos(2 pi k x_0)`, the most common 1D building block.
    pub fn cosine(k: i32, amplitude: f64, offset: f64) -> Self {
        TrigPoly {
            constant: offset,
            terms: vec![TrigTerm {
                wave: [k, 0],
                cos_coef: amplitude,
                sin_coef: 0.0,
            }],
        }
    }

    pub fn with_term(mut self, wave: [i32; 2], cos_coef: f64, sin_coef: f64) -> Self {
        self.terms.push(TrigTerm {
            wave,
            cos_coef,
            sin_coef,
        });
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let phase = self.phase(t, x);
            v += t.cos_coef * phase.cos() + t.sin_coef * phase.sin();
        }
        v
    }

    /// Analytic partial derivative along `axis`.
    pub fn deriv(&self, x: &[f64], axis: usize) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            let k = TAU * t.wave[axis] as f64;
            let phase = self.phase(t, x);
            v += k * (-t.cos_coef * phase.sin() + t.sin_coef * phase.cos());
        }
        v
    }

    /// Analytic second partial derivative along axes `(a, b)`.
    pub fn deriv2(&self, x: &[f64], a: usize, b: usize) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            let ka = TAU * t.wave[a] as f64;
            let kb = TAU * t.wave[b] as f64;
            let phase = self.phase(t, x);
            v -= ka * kb * (t.cos_coef * phase.cos() + t.sin_coef * phase.sin());
        }
        v
    }

    fn phase(&self, t: &TrigTerm, x: &[f64]) -> f64 {
        let mut p = TAU * t.wave[0] as f64 * x[0];
        if x.len() > 1 {
            p += TAU * t.wave[1] as f64 * x[1];
        }
        p
    }

    /// Max of |f| over a fine 1D/2D sample (for bounds, not exactness).
    pub fn abs_bound(&self) -> f64 {
        self.constant.abs() + self.terms.iter().map(|t| t.cos_coef.abs() + t.sin_coef.abs()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_deriv(p: &TrigPoly, x: &[f64], axis: usize, step: f64) -> f64 {
        let mut xp = [x[0], *x.get(1).unwrap_or(&0.0)];
        let mut xm = xp;
        xp[axis] += step;
        xm[axis] -= step;
        (p.eval(&xp[..x.len()]) - p.eval(&xm[..x.len()])) / (2.0 * step)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = TrigPoly::cosine(1, 0.7, -0.2).with_term([2, 1], 0.3, -0.4);
        let x = [0.3, 0.7];
        for axis in 0..2 {
            let exact = p.deriv(&x, axis);
            let approx = fd_deriv(&p, &x, axis, 1e-6);
            assert!((exact - approx).abs() < 1e-6, "axis {axis}: {exact} vs {approx}");
        }
        // second derivative via first derivatives
        let step = 1e-5;
        let mut xp = x;
        xp[0] += step;
        let mut xm = x;
        xm[0] -= step;
        let fd2 = (p.deriv(&xp, 0) - p.deriv(&xm, 0)) / (2.0 * step);
        assert!((p.deriv2(&x, 0, 0) - fd2).abs() < 1e-5);
    }

    #[test]
    fn sin_squared_identity() {
        // sin^2(pi x) = 1/2 - cos(2 pi x)/2 stays nonnegative
        let p = TrigPoly::cosine(1, -0.5, 0.5);
        for j in 0..64 {
            let x = [j as f64 / 64.0];
            let s = (std::f64::consts::PI * x[0]).sin();
            assert!((p.eval(&x) - s * s).abs() < 1e-14);
        }
    }
}
