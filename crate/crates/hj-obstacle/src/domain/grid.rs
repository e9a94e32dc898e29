//! Uniform periodic lattices on the torus.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform periodic lattice on T^n, n in {1, 2}, with `points_per_axis`
/// nodes per axis and spacing `h = 1 / points_per_axis`.
///
/// Node coordinates are `j / points_per_axis`; all arithmetic that must be
/// exact (indexing, wrap-around) is done on the integer representation, `h`
/// is a derived convenience.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points_per_axis: usize,
}

/// Builds the periodic lattice, rejecting unsupported dimensions and
/// resolutions below 8 points per axis.
pub fn build_grid(dim: usize, points_per_axis: usize) -> Result<TorusGrid> {
    if dim == 0 || dim > 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if points_per_axis < 8 {
        return Err(Error::InvalidResolution(points_per_axis));
    }
    Ok(TorusGrid {
        dim,
        points_per_axis,
    })
}

impl TorusGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_axis as f64
    }

    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Cell volume h^n, the weight of one node in discrete integrals.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinates of node `index` (row-major, axis 0 fastest).
    pub fn coords(&self, index: usize) -> [f64; 2] {
        let n = self.points_per_axis;
        let ix = index % n;
        let iy = index / n;
        [ix as f64 / n as f64, iy as f64 / n as f64]
    }

    /// Neighbor in +e_axis direction with periodic wrap.
    #[inline]
    pub fn shift_up(&self, index: usize, axis: usize) -> usize {
        let n = self.points_per_axis;
        match axis {
            0 => {
                let ix = index % n;
                if ix + 1 == n {
                    index + 1 - n
                } else {
                    index + 1
                }
            }
            _ => {
                let iy = index / n;
                if iy + 1 == n {
                    index + n - n * n
                } else {
                    index + n
                }
            }
        }
    }

    /// Neighbor in -e_axis direction with periodic wrap.
    #[inline]
    pub fn shift_down(&self, index: usize, axis: usize) -> usize {
        let n = self.points_per_axis;
        match axis {
            0 => {
                let ix = index % n;
                if ix == 0 {
                    index + n - 1
                } else {
                    index - 1
                }
            }
            _ => {
                let iy = index / n;
                if iy == 0 {
                    index + n * n - n
                } else {
                    index - n
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_1d_basics() {
        let g = build_grid(1, 8).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.spacing(), 0.125);
        assert_eq!(g.spacing() * g.points_per_axis() as f64, 1.0);
    }

    #[test]
    fn grid_2d_basics() {
        let g = build_grid(2, 16).unwrap();
        assert_eq!(g.node_count(), 256);
        assert_eq!(g.spacing(), 0.0625);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            build_grid(3, 16),
            Err(Error::UnsupportedDimension(3))
        ));
        assert!(matches!(build_grid(0, 16), Err(Error::UnsupportedDimension(0))));
        assert!(matches!(build_grid(1, 0), Err(Error::InvalidResolution(0))));
        assert!(matches!(build_grid(1, 7), Err(Error::InvalidResolution(7))));
    }

    #[test]
    fn wraparound_is_total() {
        let g = build_grid(2, 8).unwrap();
        for i in 0..g.node_count() {
            for axis in 0..2 {
                let up = g.shift_up(i, axis);
                let down = g.shift_down(i, axis);
                assert!(up < g.node_count());
                assert!(down < g.node_count());
                assert_eq!(g.shift_down(up, axis), i);
                assert_eq!(g.shift_up(down, axis), i);
            }
        }
    }

    #[test]
    fn coords_cover_unit_cell() {
        let g = build_grid(1, 8).unwrap();
        assert_eq!(g.coords(0)[0], 0.0);
        assert_eq!(g.coords(4)[0], 0.5);
        assert!(g.coords(7)[0] < 1.0);
    }
}
