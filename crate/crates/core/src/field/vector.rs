use super::grid::Grid;
use crate::error::{Error, Result};

/// Discrete velocity field on a MAC grid.
///
/// `lid` is the multiple of the grid's lid profile imposed as tangential
/// velocity on the top wall: 1 for a physical cavity field, 0 for
/// fluctuations and POD modes. It is carried linearly through every
/// algebraic operation so that `lift + Σ aⱼ φⱼ` has the right boundary data.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub lid: f64,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.u_len()],
            v: vec![0.0; grid.v_len()],
            lid: 0.0,
        }
    }

    pub fn from_parts(grid: Grid, u: Vec<f64>, v: Vec<f64>, lid: f64) -> Result<Self> {
        if u.len() != grid.u_len() || v.len() != grid.v_len() {
            return Err(Error::Shape(format!(
                "component lengths ({}, {}) do not match grid ({}, {})",
                u.len(),
                v.len(),
                grid.u_len(),
                grid.v_len()
            )));
        }
        Ok(Self { grid, u, v, lid })
    }

    /// Samples `(fu, fv)` at the staggered node positions.
    ///
    /// Normal velocities on cavity walls are forced to zero.
    pub fn from_fn(grid: Grid, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let mut f = Self::zeros(grid);
        let (uc, ur) = grid.u_dims();
        for j in 0..ur {
            for i in 0..uc {
                let (x, y) = grid.u_position(i, j);
                f.u[j * uc + i] = fu(x, y);
            }
        }
        let (vc, vr) = grid.v_dims();
        for j in 0..vr {
            for i in 0..vc {
                let (x, y) = grid.v_position(i, j);
                f.v[j * vc + i] = fv(x, y);
            }
        }
        f.enforce_walls();
        f
    }

    /// Zeroes the normal component on cavity walls.
    pub fn enforce_walls(&mut self) {
        if self.grid.is_periodic() {
            return;
        }
        let (uc, ur) = self.grid.u_dims();
        for j in 0..ur {
            self.u[j * uc] = 0.0;
            self.u[j * uc + uc - 1] = 0.0;
        }
        let (vc, vr) = self.grid.v_dims();
        for i in 0..vc {
            self.v[i] = 0.0;
            self.v[(vr - 1) * vc + i] = 0.0;
        }
    }

    pub fn check_same_grid(&self, other: &VectorField) -> Result<()> {
        self.grid.check_same(&other.grid)
    }

    pub fn scale(&mut self, s: f64) {
        self.u.iter_mut().for_each(|x| *x *= s);
        self.v.iter_mut().for_each(|x| *x *= s);
        self.lid *= s;
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += s · other`
    pub fn axpy(&mut self, s: f64, other: &VectorField) -> Result<()> {
        self.check_same_grid(other)?;
        self.u.iter_mut().zip(&other.u).for_each(|(a, b)| *a += s * b);
        self.v.iter_mut().zip(&other.v).for_each(|(a, b)| *a += s * b);
        self.lid += s * other.lid;
        Ok(())
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    /// `base + Σ cₖ fieldsₖ`
    pub fn combine(base: &VectorField, coeffs: &[f64], fields: &[VectorField]) -> Result<Self> {
        if coeffs.len() > fields.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} fields",
                coeffs.len(),
                fields.len()
            )));
        }
        let mut out = base.clone();
        for (c, f) in coeffs.iter().zip(fields) {
            out.axpy(*c, f)?;
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.lid.is_finite() && self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.lid == 0.0 && self.u.iter().chain(&self.v).all(|&x| x == 0.0)
    }
}
