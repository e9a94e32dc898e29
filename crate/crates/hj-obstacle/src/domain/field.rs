//! Scalar grid fields.

use super::grid::TorusGrid;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One real value per grid node. Houses solution snapshots, obstacles,
/// initial data, correctors, and adjoint densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::FieldLength {
                got: values.len(),
                want: grid.node_count(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField(bad));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|i| {
                let c = grid.coords(i);
                f(&c[..grid.dim()])
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.node_count()],
        }
    }

    /// Crate-internal fast path; callers guarantee length and finiteness.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Discrete integral sum_i f_i h^n.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Largest one-sided difference quotient over all nodes and axes,
    /// the discrete Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        let g = self.grid;
        let h = g.spacing();
        let mut m = 0.0f64;
        for i in 0..g.node_count() {
            for axis in 0..g.dim() {
                let up = self.values[g.shift_up(i, axis)];
                m = m.max(((up - self.values[i]) / h).abs());
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::grid::build_grid;

    #[test]
    fn length_and_finiteness_are_enforced() {
        let g = build_grid(1, 8).unwrap();
        assert!(matches!(
            ScalarField::from_values(g, vec![0.0; 7]),
            Err(Error::FieldLength { got: 7, want: 8 })
        ));
        let mut vals = vec![0.0; 8];
        vals[3] = f64::NAN;
        assert!(matches!(
            ScalarField::from_values(g, vals),
            Err(Error::NonFiniteField(3))
        ));
    }

    #[test]
    fn integral_of_constant_is_value() {
        let g = build_grid(2, 16).unwrap();
        let f = ScalarField::constant(g, 2.5);
        assert!((f.integral() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_of_linear_in_index() {
        let g = build_grid(1, 8).unwrap();
        // sawtooth with unit slope except at the periodic seam
        let f = ScalarField::from_fn(g, |x| x[0]);
        assert!((f.lipschitz() - 7.0).abs() < 1e-12); // seam jump dominates
    }
}
