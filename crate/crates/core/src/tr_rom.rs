//! Time integration of the Galerkin and time-relaxation ROMs.
//!
//! With `ā = (1, a)` the augmented coefficient vector (index 0 is the lift),
//! the semi-discrete system is
//!
//! ```text
//! M ȧ + ν A ā + χ M(I − F) a + B(ā, ā) = f
//! ```
//!
//! Splitting the convection into lift and mode parts gives the constant
//! `c_i = B_i00`, the linear `E_ik = B_i0k + B_ik0` and the quadratic
//! `Q(a)_i = Σ_jk≥1 B_ijk a_j a_k`.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};
use crate::rom_ops::{star_norm_sq, ConvectionForm, FilterOp, RomOperators};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Fully implicit backward Euler; carries the energy estimate.
    ImplicitBe,
    /// BDF3 for the linear terms, EXT3 for convection.
    SemiImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonlinearSolver {
    /// Oseen-type fixed point with damping 1, falling back to ½ when the residual grows.
    Picard,
    Newton,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrRomParams {
    pub r: usize,
    pub nu: f64,
    pub dt: f64,
    pub chi: f64,
    pub delta: f64,
    pub scheme: Scheme,
    pub form: ConvectionForm,
    pub solver: NonlinearSolver,
    pub tol: f64,
    pub max_iter: usize,
    pub steps: usize,
    /// Time of the initial row.
    pub t0: f64,
}

impl TrRomParams {
    pub fn new(r: usize, nu: f64, dt: f64, steps: usize) -> Self {
        Self {
            r,
            nu,
            dt,
            chi: 0.0,
            delta: 0.0,
            scheme: Scheme::ImplicitBe,
            form: ConvectionForm::Skew,
            solver: NonlinearSolver::Picard,
            tol: 1e-10,
            max_iter: 50,
            steps,
            t0: 0.0,
        }
    }

    pub fn validate(&self, ops: &RomOperators, filter: &FilterOp) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.dt) || !pos(self.tol) || !pos(self.nu) {
            return Err(Error::Config("dt, nu and tol must be positive".into()));
        }
        if !(self.chi.is_finite() && self.chi >= 0.0) {
            return Err(Error::Config(format!("chi must be non-negative, got {}", self.chi)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if ops.r != self.r || filter.r() != self.r {
            return Err(Error::Shape(format!(
                "params r = {}, operators r = {}, filter r = {}",
                self.r,
                ops.r,
                filter.r()
            )));
        }
        if ops.form != self.form {
            return Err(Error::Config(format!("operators use {:?} convection, params ask for {:?}", ops.form, self.form)));
        }
        if filter.delta != self.delta {
            return Err(Error::Config(format!("filter radius {} does not match params delta {}", filter.delta, self.delta)));
        }
        if (ops.nu - self.nu).abs() > 1e-15 * self.nu {
            return Err(Error::Config(format!("operators assembled for nu = {}, params nu = {}", ops.nu, self.nu)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// `‖u_r‖² = aᵀMa`
    pub energy: f64,
    /// `‖∇u_r‖² = aᵀAa` over the modes
    pub grad: f64,
    /// `‖u_r‖_*²`
    pub star_sq: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub r: usize,
    pub times: Vec<f64>,
    /// One row of `r` coefficients per time.
    pub coeffs: Vec<Vec<f64>>,
    /// One entry per row; empty for trajectories read back from disk.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Set when the run was cut short by the divergence guard.
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Split convection and the cached linear pieces of one operator set.
pub struct Stepper<'a> {
    ops: &'a RomOperators,
    params: TrRomParams,
    /// `νA_rr + χM(I−F) + E`, without the time-derivative mass term.
    lin_static: DMatrix<f64>,
    /// `f − νA_r0 − c`
    source: DVector<f64>,
    relax: Option<&'a DMatrix<f64>>,
    filter: &'a FilterOp,
}

impl<'a> Stepper<'a> {
    pub fn new(params: &TrRomParams, ops: &'a RomOperators, filter: &'a FilterOp) -> Result<Self> {
        params.validate(ops, filter)?;
        let r = ops.r;
        let mut lin = ops.mode_stiffness() * params.nu;
        let relax = (params.chi != 0.0 && filter.delta != 0.0).then_some(&filter.relax);
        if let Some(rel) = relax {
            lin += rel * params.chi;
        }
        let mut source = ops.forcing.clone();
        for i in 0..r {
            for k in 0..r {
                lin[(i, k)] += ops.b(i + 1, 0, k + 1) + ops.b(i + 1, k + 1, 0);
            }
            source[i] -= params.nu * ops.stiffness[(i + 1, 0)] + ops.b(i + 1, 0, 0);
        }
        Ok(Self { ops, params: params.clone(), lin_static: lin, source, relax, filter })
    }

    /// `C(w)_ik = Σ_j B_ijk w_j`
    fn oseen(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let r = self.ops.r;
        DMatrix::from_fn(r, r, |i, k| (0..r).map(|j| self.ops.b(i + 1, j + 1, k + 1) * w[j]).sum())
    }

    /// `D(w)_ij = Σ_k B_ijk w_k`
    fn oseen_transpose(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let r = self.ops.r;
        DMatrix::from_fn(r, r, |i, j| (0..r).map(|k| self.ops.b(i + 1, j + 1, k + 1) * w[k]).sum())
    }

    fn quadratic(&self, a: &DVector<f64>) -> DVector<f64> {
        self.oseen(a) * a
    }

    /// Full convection including the lift: `c + E a + Q(a)`.
    fn convection(&self, a: &DVector<f64>) -> DVector<f64> {
        let r = self.ops.r;
        let mut n = self.quadratic(a);
        for i in 0..r {
            n[i] += self.ops.b(i + 1, 0, 0);
            for k in 0..r {
                n[i] += (self.ops.b(i + 1, 0, k + 1) + self.ops.b(i + 1, k + 1, 0)) * a[k];
            }
        }
        n
    }

    /// Backward Euler step of size `dt`; returns the new coefficients and the iteration count.
    pub fn step_be(&self, a_n: &DVector<f64>, dt: f64) -> Result<(DVector<f64>, usize)> {
        let m = &self.ops.mass;
        let lin = m / dt + &self.lin_static;
        let rhs = m * a_n / dt + &self.source;
        let residual = |a: &DVector<f64>| &lin * a + self.quadratic(a) - &rhs;
        let scale = rhs.norm().max((m * a_n / dt).norm()).max(f64::MIN_POSITIVE);

        let mut a = a_n.clone();
        let mut res = residual(&a).norm() / scale;
        if res <= self.params.tol {
            return Ok((a, 0));
        }
        let mut omega = 1.0;
        for it in 1..=self.params.max_iter {
            let jac = match self.params.solver {
                NonlinearSolver::Picard => &lin + self.oseen(&a),
                NonlinearSolver::Newton => &lin + self.oseen(&a) + self.oseen_transpose(&a),
            };
            let lu = LU::new(jac);
            let candidate = match self.params.solver {
                NonlinearSolver::Picard => lu.solve(&rhs),
                NonlinearSolver::Newton => lu.solve(&(-residual(&a))).map(|d| &a + d),
            }
            .ok_or_else(|| Error::Singular("nonlinear step matrix is singular".into()))?;
            let mut next = &a + (&candidate - &a) * omega;
            let mut next_res = residual(&next).norm() / scale;
            if next_res > res && omega == 1.0 {
                omega = 0.5;
                next = &a + (&candidate - &a) * omega;
                next_res = residual(&next).norm() / scale;
            }
            if !next_res.is_finite() || next.iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence("non-finite coefficients in nonlinear solve".into()));
            }
            a = next;
            res = next_res;
            if res <= self.params.tol {
                return Ok((a, it));
            }
        }
        Err(Error::NonConvergence { iterations: self.params.max_iter, residual: res })
    }

    pub fn diagnostics(&self, a: &DVector<f64>, iterations: usize) -> Result<StepDiagnostics> {
        let energy = a.dot(&(&self.ops.mass * a));
        let grad = a.dot(&(self.ops.mode_stiffness() * a));
        let star_sq = match self.relax {
            Some(_) => star_norm_sq(a.as_slice(), self.filter)?,
            None => 0.0,
        };
        Ok(StepDiagnostics { energy, grad, star_sq, iterations })
    }
}

/// One implicit backward Euler step.
pub fn step_implicit_be(
    a_n: &[f64],
    params: &TrRomParams,
    ops: &RomOperators,
    filter: &FilterOp,
) -> Result<Vec<f64>> {
    let st = Stepper::new(params, ops, filter)?;
    if a_n.len() != ops.r {
        return Err(Error::Shape(format!("initial vector has length {}, expected {}", a_n.len(), ops.r)));
    }
    Ok(st.step_be(&DVector::from_column_slice(a_n), params.dt)?.0.as_slice().to_vec())
}

/// BDF3/EXT3 integrator with a cached factorization of the implicit matrix.
struct SemiImplicit<'s, 'a> {
    st: &'s Stepper<'a>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// `f − νA_r0`; the constant convection term is part of the extrapolation.
    source: DVector<f64>,
}

impl<'s, 'a> SemiImplicit<'s, 'a> {
    fn new(st: &'s Stepper<'a>) -> Result<Self> {
        let p = &st.params;
        let mut mat = st.ops.mass.clone() * (11.0 / (6.0 * p.dt)) + st.ops.mode_stiffness() * p.nu;
        if let Some(rel) = st.relax {
            mat += rel * p.chi;
        }
        let lu = LU::new(mat);
        if !lu.is_invertible() {
            return Err(Error::Singular("BDF3 system matrix is singular".into()));
        }
        let mut source = st.source.clone();
        for i in 0..st.ops.r {
            source[i] += st.ops.b(i + 1, 0, 0);
        }
        Ok(Self { st, lu, source })
    }

    /// `hist = [a^{n-2}, a^{n-1}, a^n]`, `conv` the convection at the same rows.
    fn step(&self, hist: [&DVector<f64>; 3], conv: [&DVector<f64>; 3]) -> Result<DVector<f64>> {
        let st = self.st;
        let p = &st.params;
        let m = &st.ops.mass;
        let bdf = (hist[2] * 3.0 - hist[1] * 1.5 + hist[0] * (1.0 / 3.0)) / p.dt;
        let ext = conv[2] * 3.0 - conv[1] * 3.0 + conv[0];
        let rhs = m * bdf + &self.source - ext;
        self.lu.solve(&rhs).ok_or_else(|| Error::Singular("BDF3 solve failed".into()))
    }
}

/// Integrates `params.steps` steps from `initial`.
///
/// Step failures are returned as [`Error::AtStep`]. Blow-up past `1e6` times
/// the initial scale truncates the trajectory and sets `diverged`.
pub fn run_rom(initial: &[f64], params: &TrRomParams, ops: &RomOperators, filter: &FilterOp) -> Result<Trajectory> {
    let st = Stepper::new(params, ops, filter)?;
    if initial.len() != ops.r {
        return Err(Error::Shape(format!("initial vector has length {}, expected {}", initial.len(), ops.r)));
    }
    let a0 = DVector::from_column_slice(initial);
    let limit = 1e6 * a0.norm().max(1.0);
    let dt = params.dt;
    let mut traj = Trajectory {
        r: ops.r,
        times: vec![params.t0],
        coeffs: vec![initial.to_vec()],
        diagnostics: vec![st.diagnostics(&a0, 0)?],
        diverged: false,
    };
    let at = |step: usize, e: Error| Error::AtStep { step, source: Box::new(e) };

    let semi = match params.scheme {
        Scheme::SemiImplicit => Some(SemiImplicit::new(&st)?),
        Scheme::ImplicitBe => None,
    };
    let mut hist: Vec<DVector<f64>> = vec![a0.clone()];
    let mut conv: Vec<DVector<f64>> = vec![st.convection(&a0)];

    for n in 1..=params.steps {
        let prev = hist.last().expect("history is never empty");
        let result = match (&semi, n) {
            (None, _) => st.step_be(prev, dt),
            // Richardson-extrapolated backward Euler keeps the start-up error at third order.
            (Some(_), 1 | 2) => (|| {
                let (full, i1) = st.step_be(prev, dt)?;
                let (half, i2) = st.step_be(prev, 0.5 * dt)?;
                let (half2, i3) = st.step_be(&half, 0.5 * dt)?;
                Ok((half2 * 2.0 - full, i1 + i2 + i3))
            })(),
            (Some(si), _) => {
                let k = hist.len();
                si.step([&hist[k - 3], &hist[k - 2], &hist[k - 1]], [&conv[k - 3], &conv[k - 2], &conv[k - 1]])
                    .map(|a| (a, 1))
            }
        };
        let (a, iters) = match result {
            Ok(x) => x,
            Err(Error::Divergence(_)) => {
                traj.diverged = true;
                break;
            }
            Err(e) => return Err(at(n, e)),
        };
        if a.iter().any(|x| !x.is_finite()) || a.norm() > limit {
            traj.diverged = true;
            break;
        }
        traj.diagnostics.push(st.diagnostics(&a, iters).map_err(|e| at(n, e))?);
        traj.times.push(params.t0 + n as f64 * dt);
        traj.coeffs.push(a.as_slice().to_vec());
        if semi.is_some() {
            conv.push(st.convection(&a));
            if conv.len() > 3 {
                conv.remove(0);
            }
        }
        hist.push(a);
        if hist.len() > 3 {
            hist.remove(0);
        }
    }
    Ok(traj)
}

/// Per-step check of the discrete energy inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    /// `‖u_r^n‖²`
    pub energy: Vec<f64>,
    /// `νΔt Σ_{k≤n} ‖∇u_r^k‖²`
    pub dissipation: Vec<f64>,
    /// `2χΔt Σ_{k≤n} ‖u_r^k‖_*²`
    pub relaxation: Vec<f64>,
    /// `rhs − lhs` of the one-step inequality, for steps `1..=n`.
    pub slack: Vec<f64>,
    pub step_ok: Vec<bool>,
    /// `C_{s,r} = ‖u⁰‖² + (Δt/ν) Σ ‖f‖₋₁²`
    pub bound: f64,
    pub accumulated_ok: bool,
}

impl StabilityReport {
    pub fn all_ok(&self) -> bool {
        self.accumulated_ok && self.step_ok.iter().all(|&b| b)
    }

    /// Smallest slack relative to the energy scale of its step.
    pub fn min_relative_slack(&self) -> f64 {
        self.slack
            .iter()
            .enumerate()
            .map(|(n, s)| s / self.energy[n].max(self.energy[n + 1]).max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Relative round-off allowance of the stability inequality.
pub const STABILITY_TOL: f64 = 1e-12;

/// Checks `‖uⁿ⁺¹‖² − ‖uⁿ‖² + νΔt‖∇uⁿ⁺¹‖² + 2χΔt‖uⁿ⁺¹‖_*² ≤ (Δt/ν)‖f‖₋₁²`
/// at every step and the accumulated bound against `C_{s,r}`.
///
/// `f_dual_bound` is an upper bound for `‖f‖₋₁`, e.g. `C_P ‖f‖`.
pub fn stability_check(traj: &Trajectory, params: &TrRomParams, u0_norm: f64, f_dual_bound: f64) -> Result<StabilityReport> {
    if params.scheme != Scheme::ImplicitBe || params.form != ConvectionForm::Skew {
        return Err(Error::Config(
            "the energy inequality is only guaranteed for implicit backward Euler with skew-symmetric convection".into(),
        ));
    }
    if traj.diagnostics.len() != traj.len() {
        return Err(Error::Config("trajectory carries no diagnostics".into()));
    }
    let (dt, nu, chi) = (params.dt, params.nu, params.chi);
    let forcing = dt / nu * f_dual_bound * f_dual_bound;
    let steps = traj.len() - 1;
    let bound = u0_norm * u0_norm + steps as f64 * forcing;

    let energy: Vec<f64> = traj.diagnostics.iter().map(|d| d.energy).collect();
    let mut dissipation = vec![0.0];
    let mut relaxation = vec![0.0];
    let mut slack = Vec::with_capacity(steps);
    let mut step_ok = Vec::with_capacity(steps);
    for n in 0..steps {
        let d = &traj.diagnostics[n + 1];
        let diss = nu * dt * d.grad;
        let rel = 2.0 * chi * dt * d.star_sq;
        dissipation.push(dissipation[n] + diss);
        relaxation.push(relaxation[n] + rel);
        let s = forcing - (energy[n + 1] - energy[n] + diss + rel);
        slack.push(s);
        step_ok.push(s >= -STABILITY_TOL * energy[n].max(energy[n + 1]).max(f64::MIN_POSITIVE));
    }
    let total = energy[steps] + dissipation[steps] + relaxation[steps];
    let accumulated_ok = total <= bound + STABILITY_TOL * bound.max(f64::MIN_POSITIVE);
    Ok(StabilityReport { energy, dissipation, relaxation, slack, step_ok, bound, accumulated_ok })
}
