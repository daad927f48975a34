//! Direct pressure Poisson solvers on cell centres.
//!
//! The MAC divergence of the MAC gradient is the five-point Laplacian with
//! periodic or homogeneous Neumann closure. Both are diagonalised by fast
//! transforms: complex FFTs for the periodic box, DCT-II for the cavity.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::Grid;

/// DCT-II and its inverse through a length-2n complex FFT.
struct Dct {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `exp(-iπk/2n)`
    twiddle: Vec<Complex64>,
}

impl Dct {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        let twiddle = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2 * n) as f64))
            .collect();
        Self {
            n,
            fwd: planner.plan_fft_forward(2 * n),
            inv: planner.plan_fft_inverse(2 * n),
            twiddle,
        }
    }

    /// `X_k = Σ_m x_m cos(πk(2m+1)/2n)`
    fn forward(&self, x: &mut [f64], buf: &mut [Complex64]) {
        let n = self.n;
        for m in 0..n {
            buf[m] = Complex64::new(x[m], 0.0);
            buf[2 * n - 1 - m] = Complex64::new(x[m], 0.0);
        }
        self.fwd.process(buf);
        for k in 0..n {
            x[k] = 0.5 * (self.twiddle[k] * buf[k]).re;
        }
    }

    /// Exact inverse of [`Dct::forward`].
    fn inverse(&self, x: &mut [f64], buf: &mut [Complex64]) {
        let n = self.n;
        for k in 0..n {
            let c = if k == 0 { 1.0 } else { 2.0 } / n as f64;
            buf[k] = c * x[k] * self.twiddle[k].conj();
        }
        buf[n..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        self.inv.process(buf);
        for m in 0..n {
            x[m] = buf[m].re;
        }
    }
}

enum Transform {
    Periodic {
        row: Arc<dyn Fft<f64>>,
        row_inv: Arc<dyn Fft<f64>>,
        col: Arc<dyn Fft<f64>>,
        col_inv: Arc<dyn Fft<f64>>,
    },
    Neumann {
        row: Dct,
        col: Dct,
    },
}

/// Solver for `Δₕ p = rhs` on the cell centres of a grid.
pub struct PoissonSolver {
    grid: Grid,
    transform: Transform,
    /// Eigenvalues of the 1-D second difference along x and y.
    ex: Vec<f64>,
    ey: Vec<f64>,
    tol: f64,
}

impl PoissonSolver {
    pub fn new(grid: Grid, tol: f64) -> Self {
        let mut planner = FftPlanner::new();
        let (nx, ny) = (grid.nx, grid.ny);
        let (hx, hy) = (grid.hx(), grid.hy());
        let periodic = grid.is_periodic();
        // Period of the cosine: n for periodic, 2n for the Neumann closure.
        let eig = |n: usize, h: f64| -> Vec<f64> {
            let period = if periodic { n } else { 2 * n } as f64;
            (0..n).map(|k| (2.0 * (2.0 * PI * k as f64 / period).cos() - 2.0) / (h * h)).collect()
        };
        let transform = if periodic {
            Transform::Periodic {
                row: planner.plan_fft_forward(nx),
                row_inv: planner.plan_fft_inverse(nx),
                col: planner.plan_fft_forward(ny),
                col_inv: planner.plan_fft_inverse(ny),
            }
        } else {
            Transform::Neumann {
                row: Dct::new(nx, &mut planner),
                col: Dct::new(ny, &mut planner),
            }
        };
        Self { grid, transform, ex: eig(nx, hx), ey: eig(ny, hy), tol }
    }

    /// Five-point Laplacian of a cell-centred field with the solver's closure.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (hx2, hy2) = (self.grid.hx().powi(2), self.grid.hy().powi(2));
        let periodic = self.grid.is_periodic();
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = p[j * nx + i];
                let nb = |ii: Option<usize>, jj: Option<usize>| match (ii, jj) {
                    (Some(ii), Some(jj)) => p[jj * nx + ii],
                    _ => c,
                };
                let (im, ip, jm, jp) = if periodic {
                    (
                        Some((i + nx - 1) % nx),
                        Some((i + 1) % nx),
                        Some((j + ny - 1) % ny),
                        Some((j + 1) % ny),
                    )
                } else {
                    (
                        i.checked_sub(1),
                        (i + 1 < nx).then_some(i + 1),
                        j.checked_sub(1),
                        (j + 1 < ny).then_some(j + 1),
                    )
                };
                out[j * nx + i] = (nb(im, Some(j)) - 2.0 * c + nb(ip, Some(j))) / hx2
                    + (nb(Some(i), jm) - 2.0 * c + nb(Some(i), jp)) / hy2;
            }
        }
        out
    }

    /// Solves for the zero-mean `p`. The mean of `rhs` (zero up to round-off
    /// for a compatible right-hand side) is removed first.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        if rhs.len() != nx * ny {
            return Err(Error::Shape(format!("poisson rhs has {} entries, expected {}", rhs.len(), nx * ny)));
        }
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        let b: Vec<f64> = rhs.iter().map(|x| x - mean).collect();
        let p = match &self.transform {
            Transform::Periodic { row, row_inv, col, col_inv } => {
                let mut z: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                for r in z.chunks_mut(nx) {
                    row.process(r);
                }
                let mut colbuf = vec![Complex64::new(0.0, 0.0); ny];
                for i in 0..nx {
                    for j in 0..ny {
                        colbuf[j] = z[j * nx + i];
                    }
                    col.process(&mut colbuf);
                    for j in 0..ny {
                        let lam = self.ex[i] + self.ey[j];
                        colbuf[j] = if i == 0 && j == 0 { Complex64::new(0.0, 0.0) } else { colbuf[j] / lam };
                    }
                    col_inv.process(&mut colbuf);
                    for j in 0..ny {
                        z[j * nx + i] = colbuf[j];
                    }
                }
                for r in z.chunks_mut(nx) {
                    row_inv.process(r);
                }
                let scale = 1.0 / (nx * ny) as f64;
                z.iter().map(|c| c.re * scale).collect::<Vec<_>>()
            }
            Transform::Neumann { row, col } => {
                let mut p = b.clone();
                let mut buf = vec![Complex64::new(0.0, 0.0); 2 * nx.max(ny)];
                for r in p.chunks_mut(nx) {
                    row.forward(r, &mut buf[..2 * nx]);
                }
                let mut colv = vec![0.0; ny];
                for i in 0..nx {
                    for j in 0..ny {
                        colv[j] = p[j * nx + i];
                    }
                    col.forward(&mut colv, &mut buf[..2 * ny]);
                    for j in 0..ny {
                        let lam = self.ex[i] + self.ey[j];
                        colv[j] = if i == 0 && j == 0 { 0.0 } else { colv[j] / lam };
                    }
                    col.inverse(&mut colv, &mut buf[..2 * ny]);
                    for j in 0..ny {
                        p[j * nx + i] = colv[j];
                    }
                }
                for r in p.chunks_mut(nx) {
                    row.inverse(r, &mut buf[..2 * nx]);
                }
                p
            }
        };

        let lp = self.apply(&p);
        let num: f64 = lp.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if den > 0.0 && num > self.tol * den {
            return Err(Error::Poisson { residual: num / den });
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Boundary, Lid};

    #[test]
    fn dct_round_trip_and_known_values() {
        let mut planner = FftPlanner::new();
        let d = Dct::new(5, &mut planner);
        let x0 = [1.0, -2.0, 0.5, 3.0, 0.25];
        let mut x = x0;
        let mut buf = vec![Complex64::new(0.0, 0.0); 10];
        d.forward(&mut x, &mut buf);
        // direct O(n²) definition
        for (k, xk) in x.iter().enumerate() {
            let direct: f64 = x0
                .iter()
                .enumerate()
                .map(|(m, v)| v * (PI * k as f64 * (2 * m + 1) as f64 / 10.0).cos())
                .sum();
            assert!((xk - direct).abs() < 1e-12);
        }
        d.inverse(&mut x, &mut buf);
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn solves_both_closures() {
        for bc in [Boundary::Periodic, Boundary::Cavity(Lid::Regularized)] {
            let g = Grid::new(12, 10, 1.0, 0.7, bc).unwrap();
            let s = PoissonSolver::new(g, 1e-10);
            let rhs: Vec<f64> = (0..120).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.3).collect();
            let p = s.solve(&rhs).unwrap();
            let mean = rhs.iter().sum::<f64>() / 120.0;
            let lp = s.apply(&p);
            for (a, b) in lp.iter().zip(&rhs) {
                assert!((a - (b - mean)).abs() < 1e-10);
            }
        }
    }
}
