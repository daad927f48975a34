//! Reduced Galerkin operators and the ROM differential filter.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{advect, gradient, gradient_inner, l2_inner_weighted, AdvectionData, Gradient, VectorField, Weights};
use crate::pod::PodBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvectionForm {
    /// `b*(a, v, w) = ½ (b(a, v, w) − b(a, w, v))`, energy-neutral.
    Skew,
    /// `b(a, v, w) = (a·∇v, w)`.
    Standard,
}

/// Galerkin operators over the augmented index `0..=r`, where index 0 is the lift.
#[derive(Clone, Debug, PartialEq)]
pub struct RomOperators {
    pub r: usize,
    pub nu: f64,
    pub form: ConvectionForm,
    /// `M_ij = (φ_i, φ_j)`, `r × r` over the modes only.
    pub mass: DMatrix<f64>,
    /// `A_ij = (∇φ_i, ∇φ_j)`, `(r+1) × (r+1)`.
    pub stiffness: DMatrix<f64>,
    /// `B[i][j][k]` = form(φ_j, φ_k, φ_i), dense `(r+1)³`, i fastest-last.
    ///
    /// Row `i = 0` is not used by the time stepper but completes the tensor
    /// so contractions with `a₀ = 1` reproduce `b*(u, u, u) = 0`.
    pub advection: Vec<f64>,
    /// `f_i = (f, φ_i)`, length `r`.
    pub forcing: DVector<f64>,
}

impl RomOperators {
    #[inline]
    pub fn b(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.r + 1;
        self.advection[(i * n + j) * n + k]
    }

    /// Operators of the leading `r` modes.
    pub fn truncate(&self, r: usize) -> Result<RomOperators> {
        if r > self.r {
            return Err(Error::Rank { requested: r, available: self.r, threshold: crate::pod::RANK_THRESHOLD });
        }
        let (n, m) = (self.r + 1, r + 1);
        let mut advection = vec![0.0; m * m * m];
        for i in 0..m {
            for j in 0..m {
                let src = (i * n + j) * n;
                advection[(i * m + j) * m..(i * m + j) * m + m].copy_from_slice(&self.advection[src..src + m]);
            }
        }
        Ok(RomOperators {
            r,
            nu: self.nu,
            form: self.form,
            mass: self.mass.view((0, 0), (r, r)).into_owned(),
            stiffness: self.stiffness.view((0, 0), (m, m)).into_owned(),
            advection,
            forcing: self.forcing.rows(0, r).into_owned(),
        })
    }

    /// `A` restricted to the modes `1..=r`.
    pub fn mode_stiffness(&self) -> DMatrix<f64> {
        self.stiffness.view((1, 1), (self.r, self.r)).into_owned()
    }

    /// `Σ_i a_i Σ_jk B[i][j][k] a_j a_k` over the augmented index with `a₀ = 1`.
    pub fn skew_contraction(&self, a: &[f64]) -> f64 {
        let n = self.r + 1;
        let aug: Vec<f64> = std::iter::once(1.0).chain(a.iter().copied()).collect();
        let mut s = 0.0;
        for i in 0..n {
            let mut si = 0.0;
            for j in 0..n {
                for k in 0..n {
                    si += self.b(i, j, k) * aug[j] * aug[k];
                }
            }
            s += aug[i] * si;
        }
        s
    }
}

/// Assembles mass, stiffness and advection operators of the leading `r` modes.
pub fn assemble_operators(basis: &PodBasis, r: usize, nu: f64, form: ConvectionForm) -> Result<RomOperators> {
    if r > basis.rank() {
        return Err(Error::Rank { requested: r, available: basis.rank(), threshold: crate::pod::RANK_THRESHOLD });
    }
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::Config(format!("nu must be positive, got {nu}")));
    }
    let w = Weights::new(&basis.grid);
    let n = r + 1;
    let fields: Vec<&VectorField> = std::iter::once(&basis.lift).chain(basis.modes[..r].iter()).collect();

    let mass = DMatrix::from_fn(r, r, |i, j| l2_inner_weighted(fields[i + 1], fields[j + 1], &w));

    let grads: Vec<Gradient> = fields.par_iter().map(|f| gradient(f)).collect();
    let mut stiffness = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = gradient_inner(&grads[i], &grads[j], &w);
            stiffness[(i, j)] = v;
            stiffness[(j, i)] = v;
        }
    }

    // T[i][j][k] = b(φ_j, φ_k, φ_i)
    let ad: Vec<AdvectionData> = fields.par_iter().map(|f| AdvectionData::new(f)).collect();
    let slabs: Vec<Vec<f64>> = (0..n * n)
        .into_par_iter()
        .map(|jk| {
            let (j, k) = (jk / n, jk % n);
            let conv = advect(fields[j], &ad[j], &ad[k]);
            fields.iter().map(|phi_i| l2_inner_weighted(&conv, phi_i, &w)).collect()
        })
        .collect();
    let t = |i: usize, j: usize, k: usize| slabs[j * n + k][i];
    let mut advection = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                advection[(i * n + j) * n + k] = match form {
                    ConvectionForm::Standard => t(i, j, k),
                    ConvectionForm::Skew => 0.5 * (t(i, j, k) - t(k, j, i)),
                };
            }
        }
    }

    Ok(RomOperators { r, nu, form, mass, stiffness, advection, forcing: DVector::zeros(r) })
}

/// ROM differential filter `F = (M + δ²A)⁻¹ M` on the modes `1..=r`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOp {
    pub delta: f64,
    pub f: DMatrix<f64>,
    /// `I − F`
    pub i_minus_f: DMatrix<f64>,
    /// `M (I − F)`, the symmetric relaxation operator used by the time stepper.
    pub relax: DMatrix<f64>,
}

impl FilterOp {
    pub fn r(&self) -> usize {
        self.f.nrows()
    }
}

pub fn build_filter(ops: &RomOperators, delta: f64) -> Result<FilterOp> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Config(format!("filter radius must be non-negative, got {delta}")));
    }
    let r = ops.r;
    if delta == 0.0 {
        return Ok(FilterOp {
            delta,
            f: DMatrix::identity(r, r),
            i_minus_f: DMatrix::zeros(r, r),
            relax: DMatrix::zeros(r, r),
        });
    }
    let m = &ops.mass;
    let s = m + ops.mode_stiffness() * (delta * delta);
    let f = match s.clone().cholesky() {
        Some(ch) => ch.solve(m),
        None => s
            .lu()
            .solve(m)
            .ok_or_else(|| Error::Singular(format!("M + δ²A is singular for δ = {delta}")))?,
    };
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular(format!("filter has non-finite entries for δ = {delta}")));
    }
    let i_minus_f = DMatrix::identity(r, r) - &f;
    let mut relax = m - m * &f;
    relax = (&relax + relax.transpose()) * 0.5;
    Ok(FilterOp { delta, f, i_minus_f, relax })
}

/// `√(aᵀ M (I − F) a)`; round-off negatives down to `−1e-12·‖a‖²` are clamped.
pub fn star_norm(a: &[f64], filter: &FilterOp) -> Result<f64> {
    Ok(star_norm_sq(a, filter)?.sqrt())
}

pub fn star_norm_sq(a: &[f64], filter: &FilterOp) -> Result<f64> {
    let r = filter.r();
    if a.len() != r {
        return Err(Error::Shape(format!("coefficient vector of length {} for a rank-{r} filter", a.len())));
    }
    let v = DVector::from_column_slice(a);
    let q = v.dot(&(&filter.relax * &v));
    let scale = v.norm_squared();
    if q >= 0.0 {
        Ok(q)
    } else if q >= -1e-12 * scale {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("I - F is not positive semidefinite: aᵀ(I−F)a = {q:e}")))
    }
}
