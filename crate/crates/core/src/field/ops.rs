//! Inner products, discrete gradients and the trilinear convection forms.
//!
//! Gradients are compact differences located between nodes: `∂u/∂x` and
//! `∂v/∂y` at cell centres, `∂u/∂y` and `∂v/∂x` on the corner lattice. Walls
//! enter through reflected ghost values, which makes
//! `h10_inner(a, b) = −(Δₕ a, b)` hold exactly for the five-point MAC
//! Laplacian [`laplacian`] whenever `b` has homogeneous boundary data.

use super::grid::{Boundary, Grid};
use super::vector::VectorField;
use crate::error::Result;

#[inline]
fn wrap_dec(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

#[inline]
fn wrap_inc(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

/// Discrete L² inner product `Σ w (a_u b_u + a_v b_v)`.
pub fn l2_inner(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.check_same_grid(b)?;
    Ok(l2_inner_weighted(a, b, &Weights::new(&a.grid)))
}

/// Cached quadrature weights for repeated inner products on one grid.
#[derive(Clone, Debug)]
pub struct Weights {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub center: f64,
    pub corner: Vec<f64>,
}

impl Weights {
    pub fn new(grid: &Grid) -> Self {
        Self {
            u: grid.u_weights(),
            v: grid.v_weights(),
            center: grid.hx() * grid.hy(),
            corner: grid.corner_weights(),
        }
    }
}

pub(crate) fn l2_inner_weighted(a: &VectorField, b: &VectorField, w: &Weights) -> f64 {
    let su: f64 = a.u.iter().zip(&b.u).zip(&w.u).map(|((x, y), w)| w * x * y).sum();
    let sv: f64 = a.v.iter().zip(&b.v).zip(&w.v).map(|((x, y), w)| w * x * y).sum();
    su + sv
}

/// Compact gradient of a field, see the module docs for the locations.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub dudx: Vec<f64>,
    pub dudy: Vec<f64>,
    pub dvdx: Vec<f64>,
    pub dvdy: Vec<f64>,
}

pub fn gradient(f: &VectorField) -> Gradient {
    let g = &f.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let (nx, ny) = (g.nx, g.ny);
    let (uc, _) = g.u_dims();
    let (vc, _) = g.v_dims();
    let (kc, kr) = g.corner_dims();
    let periodic = g.is_periodic();

    let mut dudx = vec![0.0; nx * ny];
    let mut dvdy = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let ip = if periodic { wrap_inc(i, nx) } else { i + 1 };
            let jp = if periodic { wrap_inc(j, ny) } else { j + 1 };
            dudx[j * nx + i] = (f.u[j * uc + ip] - f.u[j * uc + i]) / hx;
            dvdy[j * nx + i] = (f.v[jp * vc + i] - f.v[j * vc + i]) / hy;
        }
    }

    let mut dudy = vec![0.0; kc * kr];
    let mut dvdx = vec![0.0; kc * kr];
    for j in 0..kr {
        for i in 0..kc {
            let k = j * kc + i;
            if periodic {
                let jm = wrap_dec(j, ny);
                let im = wrap_dec(i, nx);
                dudy[k] = (f.u[j * uc + i] - f.u[jm * uc + i]) / hy;
                dvdx[k] = (f.v[j * vc + i] - f.v[j * vc + im]) / hx;
            } else {
                // u column i, between rows j-1 and j; walls at j = 0 and j = ny.
                dudy[k] = if j == 0 {
                    2.0 * f.u[i] / hy
                } else if j == ny {
                    2.0 * (f.lid * g.lid_speed(i) - f.u[(ny - 1) * uc + i]) / hy
                } else {
                    (f.u[j * uc + i] - f.u[(j - 1) * uc + i]) / hy
                };
                // v row j, between columns i-1 and i; side walls carry no tangential slip.
                dvdx[k] = if i == 0 {
                    2.0 * f.v[j * vc] / hx
                } else if i == nx {
                    -2.0 * f.v[j * vc + nx - 1] / hx
                } else {
                    (f.v[j * vc + i] - f.v[j * vc + i - 1]) / hx
                };
            }
        }
    }
    Gradient { dudx, dudy, dvdx, dvdy }
}

pub(crate) fn gradient_inner(a: &Gradient, b: &Gradient, w: &Weights) -> f64 {
    let c: f64 = a
        .dudx
        .iter()
        .zip(&b.dudx)
        .chain(a.dvdy.iter().zip(&b.dvdy))
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * w.center;
    let k: f64 = a
        .dudy
        .iter()
        .zip(&b.dudy)
        .zip(&w.corner)
        .map(|((x, y), w)| w * x * y)
        .sum::<f64>()
        + a.dvdx
            .iter()
            .zip(&b.dvdx)
            .zip(&w.corner)
            .map(|((x, y), w)| w * x * y)
            .sum::<f64>();
    c + k
}

/// Discrete H¹₀ inner product `(∇a, ∇b)`.
pub fn h10_inner(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.check_same_grid(b)?;
    let w = Weights::new(&a.grid);
    Ok(gradient_inner(&gradient(a), &gradient(b), &w))
}

/// Five-point MAC Laplacian with reflected ghost values at the walls.
///
/// Wall-normal nodes of the cavity are left at zero.
pub fn laplacian(f: &VectorField) -> VectorField {
    let g = &f.grid;
    let (hx2, hy2) = (g.hx() * g.hx(), g.hy() * g.hy());
    let mut out = VectorField::zeros(*g);
    let (uc, ur) = g.u_dims();
    let (vc, vr) = g.v_dims();
    match g.bc {
        Boundary::Periodic => {
            let (nx, ny) = (g.nx, g.ny);
            for j in 0..ny {
                let (jm, jp) = (wrap_dec(j, ny), wrap_inc(j, ny));
                for i in 0..nx {
                    let (im, ip) = (wrap_dec(i, nx), wrap_inc(i, nx));
                    let u = &f.u;
                    out.u[j * uc + i] = (u[j * uc + ip] - 2.0 * u[j * uc + i] + u[j * uc + im]) / hx2
                        + (u[jp * uc + i] - 2.0 * u[j * uc + i] + u[jm * uc + i]) / hy2;
                    let v = &f.v;
                    out.v[j * vc + i] = (v[j * vc + ip] - 2.0 * v[j * vc + i] + v[j * vc + im]) / hx2
                        + (v[jp * vc + i] - 2.0 * v[j * vc + i] + v[jm * vc + i]) / hy2;
                }
            }
        }
        Boundary::Cavity(_) => {
            let u = &f.u;
            for j in 0..ur {
                for i in 1..uc - 1 {
                    let c = u[j * uc + i];
                    let xx = (u[j * uc + i + 1] - 2.0 * c + u[j * uc + i - 1]) / hx2;
                    let below = if j == 0 { -c } else { u[(j - 1) * uc + i] };
                    let above = if j == ur - 1 {
                        2.0 * f.lid * g.lid_speed(i) - c
                    } else {
                        u[(j + 1) * uc + i]
                    };
                    out.u[j * uc + i] = xx + (above - 2.0 * c + below) / hy2;
                }
            }
            let v = &f.v;
            for j in 1..vr - 1 {
                for i in 0..vc {
                    let c = v[j * vc + i];
                    let left = if i == 0 { -c } else { v[j * vc + i - 1] };
                    let right = if i == vc - 1 { -c } else { v[j * vc + i + 1] };
                    let yy = (v[(j + 1) * vc + i] - 2.0 * c + v[(j - 1) * vc + i]) / hy2;
                    out.v[j * vc + i] = (right - 2.0 * c + left) / hx2 + yy;
                }
            }
        }
    }
    out
}

/// Per-field data needed to evaluate `a · ∇v` at the velocity nodes.
///
/// Derivatives at a node are the average of the two compact differences
/// around it; the transverse advecting velocity is the four-point average of
/// the other component.
#[derive(Clone, Debug)]
pub struct AdvectionData {
    /// `∂u/∂x`, `∂u/∂y` at `u` nodes.
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    /// `∂v/∂x`, `∂v/∂y` at `v` nodes.
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    /// `v` interpolated to `u` nodes and `u` interpolated to `v` nodes.
    pub v_at_u: Vec<f64>,
    pub u_at_v: Vec<f64>,
}

impl AdvectionData {
    pub fn new(f: &VectorField) -> Self {
        let g = &f.grid;
        let grad = gradient(f);
        let (nx, ny) = (g.nx, g.ny);
        let (uc, ur) = g.u_dims();
        let (vc, vr) = g.v_dims();
        let (kc, _) = g.corner_dims();
        let periodic = g.is_periodic();

        let mut ux = vec![0.0; uc * ur];
        let mut uy = vec![0.0; uc * ur];
        let mut v_at_u = vec![0.0; uc * ur];
        for j in 0..ur {
            for i in 0..uc {
                let k = j * uc + i;
                ux[k] = if periodic {
                    0.5 * (grad.dudx[j * nx + wrap_dec(i, nx)] + grad.dudx[j * nx + i])
                } else if i == 0 {
                    grad.dudx[j * nx]
                } else if i == nx {
                    grad.dudx[j * nx + nx - 1]
                } else {
                    0.5 * (grad.dudx[j * nx + i - 1] + grad.dudx[j * nx + i])
                };
                let jp = if periodic { wrap_inc(j, ny) } else { j + 1 };
                uy[k] = 0.5 * (grad.dudy[j * kc + i] + grad.dudy[jp * kc + i]);

                let (c0, c1) = if periodic {
                    (wrap_dec(i, nx), i)
                } else if i == 0 {
                    (0, 0)
                } else if i == nx {
                    (nx - 1, nx - 1)
                } else {
                    (i - 1, i)
                };
                let v = &f.v;
                v_at_u[k] = 0.25
                    * (v[j * vc + c0] + v[j * vc + c1] + v[jp * vc + c0] + v[jp * vc + c1]);
            }
        }

        let mut vx = vec![0.0; vc * vr];
        let mut vy = vec![0.0; vc * vr];
        let mut u_at_v = vec![0.0; vc * vr];
        for j in 0..vr {
            for i in 0..vc {
                let k = j * vc + i;
                let ip = if periodic { wrap_inc(i, nx) } else { i + 1 };
                vx[k] = 0.5 * (grad.dvdx[j * kc + i] + grad.dvdx[j * kc + ip]);
                vy[k] = if periodic {
                    0.5 * (grad.dvdy[wrap_dec(j, ny) * nx + i] + grad.dvdy[j * nx + i])
                } else if j == 0 {
                    grad.dvdy[i]
                } else if j == ny {
                    grad.dvdy[(ny - 1) * nx + i]
                } else {
                    0.5 * (grad.dvdy[(j - 1) * nx + i] + grad.dvdy[j * nx + i])
                };

                let (r0, r1) = if periodic {
                    (wrap_dec(j, ny), j)
                } else if j == 0 {
                    (0, 0)
                } else if j == ny {
                    (ny - 1, ny - 1)
                } else {
                    (j - 1, j)
                };
                let u = &f.u;
                u_at_v[k] = 0.25
                    * (u[r0 * uc + i] + u[r0 * uc + ip] + u[r1 * uc + i] + u[r1 * uc + ip]);
            }
        }
        Self { ux, uy, vx, vy, v_at_u, u_at_v }
    }
}

/// `a · ∇v` evaluated at the velocity nodes, returned with zero lid data.
pub fn advect(a: &VectorField, ad: &AdvectionData, vd: &AdvectionData) -> VectorField {
    let mut out = VectorField::zeros(a.grid);
    for (k, o) in out.u.iter_mut().enumerate() {
        *o = a.u[k] * vd.ux[k] + ad.v_at_u[k] * vd.uy[k];
    }
    for (k, o) in out.v.iter_mut().enumerate() {
        *o = ad.u_at_v[k] * vd.vx[k] + a.v[k] * vd.vy[k];
    }
    out
}

/// Convective trilinear form `b(a, v, w) = (a · ∇v, w)`.
pub fn trilinear_b(a: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
    a.check_same_grid(v)?;
    a.check_same_grid(w)?;
    let conv = advect(a, &AdvectionData::new(a), &AdvectionData::new(v));
    Ok(l2_inner_weighted(&conv, w, &Weights::new(&a.grid)))
}

/// Skew-symmetrized form `b*(a, v, w) = ½ (b(a, v, w) − b(a, w, v))`.
///
/// Evaluated as the difference of two separate `b` evaluations, so
/// `b*(a, v, v)` is exactly zero in floating point.
pub fn trilinear_b_star(a: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
    let b1 = trilinear_b(a, v, w)?;
    let b2 = trilinear_b(a, w, v)?;
    Ok(0.5 * (b1 - b2))
}

/// Discrete divergence at cell centres.
pub fn divergence(f: &VectorField) -> Vec<f64> {
    let grad = gradient(f);
    grad.dudx.iter().zip(&grad.dvdy).map(|(a, b)| a + b).collect()
}
