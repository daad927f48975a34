//! L² proper orthogonal decomposition by the method of snapshots.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{gradient, gradient_inner, l2_inner_weighted, Gradient, Grid, VectorField, Weights};
use crate::fom::SnapshotSet;

/// Eigenvalues below this fraction of λ₁ are treated as numerically zero.
pub const RANK_THRESHOLD: f64 = 1e-12;

/// Upper bound on the subspace-iteration refinement steps in [`compute_pod`].
const SUBSPACE_STEPS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    pub grid: Grid,
    pub lift: VectorField,
    pub modes: Vec<VectorField>,
    /// Non-increasing, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `‖∇φⱼ‖²`
    pub gradnorms: Vec<f64>,
    /// Mean squared L² and H¹₀ norms of the snapshot components outside the
    /// retained modes, i.e. the contribution of the eigenvalues beyond `R` up
    /// to the rank of the Gramian. Zero when every nonzero mode is kept.
    pub rest_l2: f64,
    pub rest_h10: f64,
}

/// Truncation diagnostics indexed by the ROM dimension `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct TailSums {
    /// `Λ_L2(r)` for `r = 0..=R`.
    pub l2: Vec<f64>,
    /// `Λ_H10(r)` for `r = 0..=R`.
    pub h10: Vec<f64>,
    /// `‖S_r‖₂` for `r = 1..=R`, stored at index `r − 1`.
    pub s_norm: Vec<f64>,
}

impl TailSums {
    pub fn s_norm_at(&self, r: usize) -> f64 {
        if r == 0 {
            0.0
        } else {
            self.s_norm[r - 1]
        }
    }
}

/// Symmetric matrix of pairwise weighted inner products.
fn inner_matrix<T: Sync>(items: &[T], f: impl Fn(&T, &T) -> f64 + Sync) -> DMatrix<f64> {
    let n = items.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| f(&items[i], &items[j])).collect())
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// `K_ij = (u_i, u_j) / (M + 1)`.
pub fn build_gramian(snaps: &SnapshotSet) -> DMatrix<f64> {
    let w = Weights::new(&snaps.grid);
    let scale = 1.0 / snaps.len() as f64;
    inner_matrix(&snaps.fields, |a, b| l2_inner_weighted(a, b, &w)) * scale
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// Full Gramian spectrum, clamped at zero.
pub fn pod_spectrum(snaps: &SnapshotSet) -> Vec<f64> {
    let (vals, _) = sorted_eigen(build_gramian(snaps));
    vals.into_iter().map(|x| x.max(0.0)).collect()
}

/// Number of eigenvalues above `RANK_THRESHOLD · λ₁`.
pub fn numerical_rank(spectrum: &[f64]) -> usize {
    match spectrum.first() {
        Some(&l1) if l1 > 0.0 => spectrum.iter().take_while(|&&x| x > RANK_THRESHOLD * l1).count(),
        _ => 0,
    }
}

/// Orthonormalizes `v` against `basis` with two Gram–Schmidt passes.
fn orthonormalize(mut v: VectorField, basis: &[VectorField], w: &Weights) -> Result<VectorField> {
    for _ in 0..2 {
        for q in basis {
            let c = l2_inner_weighted(&v, q, w);
            v.axpy(-c, q)?;
        }
    }
    let n = l2_inner_weighted(&v, &v, w).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Numerical("POD mode collapsed during re-orthonormalization".into()));
    }
    v.scale(1.0 / n);
    Ok(v)
}

/// Rayleigh–Ritz on the span of `vs`: orthonormalize, then rotate by the left
/// singular vectors of the projected snapshot coefficients. Returns the Ritz
/// modes and singular values in decreasing order.
fn ritz(vs: Vec<VectorField>, snaps: &SnapshotSet, w: &Weights) -> Result<(Vec<VectorField>, Vec<f64>)> {
    let rank = vs.len();
    let mut q: Vec<VectorField> = Vec::with_capacity(rank);
    for v in vs {
        let o = orthonormalize(v, &q, w)?;
        q.push(o);
    }
    // C_jl = (u_l, q_j); λ = σ²/(M+1) is accurate to O(ε √(λ₁λⱼ)).
    let cols: Vec<Vec<f64>> = snaps
        .fields
        .par_iter()
        .map(|u| q.iter().map(|qj| l2_inner_weighted(u, qj, w)).collect())
        .collect();
    let c = DMatrix::from_fn(rank, snaps.len(), |j, l| cols[l][j]);
    let svd = c.svd(true, false);
    let u_mat = svd.u.ok_or_else(|| Error::Numerical("SVD did not return singular vectors".into()))?;
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let modes: Vec<VectorField> = order
        .par_iter()
        .map(|&k| {
            let coeffs: Vec<f64> = (0..rank).map(|j| u_mat[(j, k)]).collect();
            let mut m = VectorField::combine(&VectorField::zeros(snaps.grid), &coeffs, &q)?;
            // sign convention: the largest snapshot coefficient is non-negative
            let big = snaps
                .fields
                .iter()
                .map(|u| l2_inner_weighted(u, &m, w))
                .fold(0.0_f64, |b, x| if x.abs() > b.abs() { x } else { b });
            if big < 0.0 {
                m.scale(-1.0);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let sigma = order.iter().map(|&k| svd.singular_values[k]).collect();
    Ok((modes, sigma))
}

/// Leading `rank` POD modes of the snapshot fluctuations.
///
/// The Gramian eigenvectors give the modes; a Rayleigh–Ritz pass in field
/// space (re-orthonormalization followed by an SVD of the projected snapshot
/// coefficients) then removes the `ε λ₁/λⱼ` loss of orthogonality that the
/// method of snapshots suffers for small eigenvalues. The energy of the
/// snapshots outside the retained span is kept so the tail sums cover the
/// whole rank of the Gramian.
pub fn compute_pod(snaps: &SnapshotSet, rank: usize) -> Result<PodBasis> {
    if rank == 0 {
        return Err(Error::Config("POD rank must be at least 1".into()));
    }
    let m1 = snaps.len() as f64;
    let w = Weights::new(&snaps.grid);
    let (vals, vecs) = sorted_eigen(build_gramian(snaps));
    let vals: Vec<f64> = vals.into_iter().map(|x| x.max(0.0)).collect();
    let available = numerical_rank(&vals);
    if rank > available {
        return Err(Error::Rank { requested: rank, available, threshold: RANK_THRESHOLD });
    }

    let raw: Vec<VectorField> = (0..rank)
        .into_par_iter()
        .map(|j| {
            let s = 1.0 / (m1 * vals[j]).sqrt();
            let coeffs: Vec<f64> = (0..snaps.len()).map(|l| vecs[(l, j)] * s).collect();
            VectorField::combine(&VectorField::zeros(snaps.grid), &coeffs, &snaps.fields)
        })
        .collect::<Result<_>>()?;
    let (mut modes, mut sigma) = ritz(raw, snaps, &w)?;
    // Subspace iteration with the snapshot correlation operator. The Gramian
    // eigenvectors of small eigenvalues carry O(ε λ₁/gap) components outside
    // the dominant subspace; each step damps them by λ_{R+1}/λ_R.
    for _ in 0..SUBSPACE_STEPS {
        if sigma.iter().any(|s| *s <= 0.0) {
            break;
        }
        let stepped: Vec<VectorField> = modes
            .par_iter()
            .map(|m| {
                let a: Vec<f64> = snaps.fields.iter().map(|u| l2_inner_weighted(u, m, &w)).collect();
                VectorField::combine(&VectorField::zeros(snaps.grid), &a, &snaps.fields)
            })
            .collect::<Result<_>>()?;
        let (next, next_sigma) = ritz(stepped, snaps, &w)?;
        let change = sigma
            .iter()
            .zip(&next_sigma)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0_f64, f64::max);
        modes = next;
        sigma = next_sigma;
        if change < 1e-15 {
            break;
        }
    }
    let eigenvalues: Vec<f64> = sigma.iter().map(|s| s * s / m1).collect();

    let gradnorms = modes
        .par_iter()
        .map(|m| {
            let g = gradient(m);
            gradient_inner(&g, &g, &w)
        })
        .collect();

    let rest: Vec<(f64, f64)> = snaps
        .fields
        .par_iter()
        .map(|u| {
            let mut e = u.clone();
            for m in &modes {
                let a = l2_inner_weighted(u, m, &w);
                e.axpy(-a, m)?;
            }
            let g = gradient(&e);
            Ok((l2_inner_weighted(&e, &e, &w), gradient_inner(&g, &g, &w)))
        })
        .collect::<Result<_>>()?;
    let rest_l2 = rest.iter().map(|x| x.0).sum::<f64>() / m1;
    let rest_h10 = rest.iter().map(|x| x.1).sum::<f64>() / m1;

    Ok(PodBasis {
        grid: snaps.grid,
        lift: snaps.lift.clone(),
        modes,
        eigenvalues,
        gradnorms,
        rest_l2,
        rest_h10,
    })
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    fn check_r(&self, r: usize) -> Result<()> {
        if r > self.rank() {
            return Err(Error::Rank { requested: r, available: self.rank(), threshold: RANK_THRESHOLD });
        }
        Ok(())
    }

    /// Mass matrix `(φ_i, φ_j)` of the leading `r` modes.
    pub fn mass(&self, r: usize) -> Result<DMatrix<f64>> {
        self.check_r(r)?;
        let w = Weights::new(&self.grid);
        Ok(inner_matrix(&self.modes[..r], |a, b| l2_inner_weighted(a, b, &w)))
    }

    /// Stiffness matrix `S_ij = (∇φ_j, ∇φ_i)` of the leading `r` modes.
    pub fn stiffness(&self, r: usize) -> Result<DMatrix<f64>> {
        self.check_r(r)?;
        let w = Weights::new(&self.grid);
        let grads: Vec<Gradient> = self.modes[..r].par_iter().map(gradient).collect();
        Ok(inner_matrix(&grads, |a, b| gradient_inner(a, b, &w)))
    }

    pub fn tails(&self) -> Result<TailSums> {
        let rr = self.rank();
        let mut l2 = vec![0.0; rr + 1];
        let mut h10 = vec![0.0; rr + 1];
        l2[rr] = self.rest_l2;
        h10[rr] = self.rest_h10;
        for r in (0..rr).rev() {
            l2[r] = l2[r + 1] + self.eigenvalues[r];
            h10[r] = h10[r + 1] + self.gradnorms[r] * self.eigenvalues[r];
        }
        let s = self.stiffness(rr)?;
        let mut s_norm: Vec<f64> = (1..=rr)
            .into_par_iter()
            .map(|r| {
                let block = s.view((0, 0), (r, r)).into_owned();
                SymmetricEigen::new(block).eigenvalues.max()
            })
            .collect();
        // the largest eigenvalue of nested principal blocks is non-decreasing
        // (Cauchy interlacing); remove round-off wiggles
        for r in 1..s_norm.len() {
            s_norm[r] = s_norm[r].max(s_norm[r - 1]);
        }
        Ok(TailSums { l2, h10, s_norm })
    }

    /// Coefficients `aⱼ = (u, φⱼ)` of the L² projection onto the leading `r` modes.
    pub fn project(&self, u: &VectorField, r: usize) -> Result<Vec<f64>> {
        self.check_r(r)?;
        u.check_same_grid(&self.lift)?;
        let w = Weights::new(&self.grid);
        Ok(self.modes[..r].iter().map(|m| l2_inner_weighted(u, m, &w)).collect())
    }

    /// `Σ aⱼ φⱼ` (without the lift).
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<VectorField> {
        self.check_r(coeffs.len())?;
        VectorField::combine(&VectorField::zeros(self.grid), coeffs, &self.modes)
    }

    /// Leading `r` modes as a new basis.
    pub fn truncate(&self, r: usize) -> Result<PodBasis> {
        self.check_r(r)?;
        Ok(PodBasis {
            grid: self.grid,
            lift: self.lift.clone(),
            modes: self.modes[..r].to_vec(),
            eigenvalues: self.eigenvalues[..r].to_vec(),
            gradnorms: self.gradnorms[..r].to_vec(),
            rest_l2: self.rest_l2 + self.eigenvalues[r..].iter().sum::<f64>(),
            rest_h10: self.rest_h10
                + self.eigenvalues[r..].iter().zip(&self.gradnorms[r..]).map(|(l, g)| l * g).sum::<f64>(),
        })
    }
}

/// Free-function form of [`PodBasis::project`].
pub fn project_p_r(u: &VectorField, basis: &PodBasis, r: usize) -> Result<Vec<f64>> {
    basis.project(u, r)
}
