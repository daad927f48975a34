use crate::error::{Error, Result};

/// Tangential velocity imposed on the top wall of the cavity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lid {
    /// `16 x² (1 − x)²` on the unit interval (scaled to `lx`): vanishes in the corners.
    Regularized,
    /// Constant unit lid speed.
    Uniform,
}

impl Lid {
    /// Lid speed at abscissa `x` of a wall of length `lx`.
    pub fn speed(self, x: f64, lx: f64) -> f64 {
        match self {
            Lid::Regularized => {
                let s = x / lx;
                16.0 * s * s * (1.0 - s) * (1.0 - s)
            }
            Lid::Uniform => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Doubly periodic box.
    Periodic,
    /// Closed box with no-slip walls and a moving top lid.
    Cavity(Lid),
}

/// Uniform MAC grid.
///
/// `u` lives on x-faces at `(i hx, (j + ½) hy)` and `v` on y-faces at
/// `((i + ½) hx, j hy)`. For the periodic box both components have `nx × ny`
/// nodes; for the cavity the wall faces are stored too, so `u` has
/// `(nx + 1) × ny` nodes and `v` has `nx × (ny + 1)`. Arrays are row-major
/// with the x index running fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub bc: Boundary,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, bc: Boundary) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::Config(format!("grid needs at least 4x4 cells, got {nx}x{ny}")));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::Config(format!("domain extents must be positive, got {lx} x {ly}")));
        }
        Ok(Self { nx, ny, lx, ly, bc })
    }

    /// `[0, 2π]²` periodic box.
    pub fn periodic_2pi(n: usize) -> Result<Self> {
        let l = 2.0 * std::f64::consts::PI;
        Self::new(n, n, l, l, Boundary::Periodic)
    }

    /// Unit-square cavity.
    pub fn unit_cavity(n: usize, lid: Lid) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0, Boundary::Cavity(lid))
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Mesh size used by length-scale heuristics.
    pub fn h(&self) -> f64 {
        self.hx().max(self.hy())
    }

    #[inline]
    pub fn is_periodic(&self) -> bool {
        self.bc == Boundary::Periodic
    }

    pub fn lid(&self) -> Option<Lid> {
        match self.bc {
            Boundary::Cavity(lid) => Some(lid),
            Boundary::Periodic => None,
        }
    }

    /// Columns and rows of the `u` array.
    #[inline]
    pub fn u_dims(&self) -> (usize, usize) {
        match self.bc {
            Boundary::Periodic => (self.nx, self.ny),
            Boundary::Cavity(_) => (self.nx + 1, self.ny),
        }
    }

    /// Columns and rows of the `v` array.
    #[inline]
    pub fn v_dims(&self) -> (usize, usize) {
        match self.bc {
            Boundary::Periodic => (self.nx, self.ny),
            Boundary::Cavity(_) => (self.nx, self.ny + 1),
        }
    }

    pub fn u_len(&self) -> usize {
        let (c, r) = self.u_dims();
        c * r
    }

    pub fn v_len(&self) -> usize {
        let (c, r) = self.v_dims();
        c * r
    }

    /// Corner lattice `(i hx, j hy)`: `nx × ny` when periodic, `(nx+1) × (ny+1)` otherwise.
    #[inline]
    pub fn corner_dims(&self) -> (usize, usize) {
        match self.bc {
            Boundary::Periodic => (self.nx, self.ny),
            Boundary::Cavity(_) => (self.nx + 1, self.ny + 1),
        }
    }

    pub fn u_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    pub fn v_position(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), j as f64 * self.hy())
    }

    /// Trapezoid weight along x for a node at integer position `i` on a lattice
    /// whose ends are walls (cavity only).
    #[inline]
    fn wall_weight(n_cells: usize, idx: usize, h: f64) -> f64 {
        if idx == 0 || idx == n_cells {
            0.5 * h
        } else {
            h
        }
    }

    /// Quadrature weights of the `u` nodes; they sum to `lx · ly`.
    pub fn u_weights(&self) -> Vec<f64> {
        let (hx, hy) = (self.hx(), self.hy());
        let (nc, nr) = self.u_dims();
        let mut w = Vec::with_capacity(nc * nr);
        for _j in 0..nr {
            for i in 0..nc {
                w.push(match self.bc {
                    Boundary::Periodic => hx * hy,
                    Boundary::Cavity(_) => Self::wall_weight(self.nx, i, hx) * hy,
                });
            }
        }
        w
    }

    /// Quadrature weights of the `v` nodes; they sum to `lx · ly`.
    pub fn v_weights(&self) -> Vec<f64> {
        let (hx, hy) = (self.hx(), self.hy());
        let (nc, nr) = self.v_dims();
        let mut w = Vec::with_capacity(nc * nr);
        for j in 0..nr {
            for _i in 0..nc {
                w.push(match self.bc {
                    Boundary::Periodic => hx * hy,
                    Boundary::Cavity(_) => hx * Self::wall_weight(self.ny, j, hy),
                });
            }
        }
        w
    }

    /// Weights of the corner lattice (trapezoid in both directions for the cavity).
    pub fn corner_weights(&self) -> Vec<f64> {
        let (hx, hy) = (self.hx(), self.hy());
        let (nc, nr) = self.corner_dims();
        let mut w = Vec::with_capacity(nc * nr);
        for j in 0..nr {
            for i in 0..nc {
                w.push(match self.bc {
                    Boundary::Periodic => hx * hy,
                    Boundary::Cavity(_) => {
                        Self::wall_weight(self.nx, i, hx) * Self::wall_weight(self.ny, j, hy)
                    }
                });
            }
        }
        w
    }

    /// Lid speed above `u` column `i` (zero when periodic).
    pub fn lid_speed(&self, i: usize) -> f64 {
        match self.bc {
            Boundary::Cavity(lid) => lid.speed(i as f64 * self.hx(), self.lx),
            Boundary::Periodic => 0.0,
        }
    }

    /// Poincaré constant `C_P` with `‖w‖ ≤ C_P ‖∇w‖` for admissible fields.
    pub fn poincare_constant(&self) -> f64 {
        use std::f64::consts::PI;
        match self.bc {
            Boundary::Periodic => self.lx.max(self.ly) / (2.0 * PI),
            Boundary::Cavity(_) => {
                let lam = PI * PI * (1.0 / (self.lx * self.lx) + 1.0 / (self.ly * self.ly));
                1.0 / lam.sqrt()
            }
        }
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!("grid mismatch: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_area() {
        for g in [
            Grid::new(8, 6, 1.5, 0.5, Boundary::Periodic).unwrap(),
            Grid::new(8, 6, 1.5, 0.5, Boundary::Cavity(Lid::Regularized)).unwrap(),
        ] {
            let area = g.lx * g.ly;
            for w in [g.u_weights(), g.v_weights(), g.corner_weights()] {
                assert!(w.iter().all(|&x| x > 0.0));
                assert!((w.iter().sum::<f64>() - area).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::new(3, 8, 1.0, 1.0, Boundary::Periodic).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0, Boundary::Periodic).is_err());
    }

    #[test]
    fn regularized_lid_vanishes_in_corners() {
        assert_eq!(Lid::Regularized.speed(0.0, 1.0), 0.0);
        assert_eq!(Lid::Regularized.speed(1.0, 1.0), 0.0);
        assert!((Lid::Regularized.speed(0.5, 1.0) - 1.0).abs() < 1e-15);
    }
}
