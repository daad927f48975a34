//! Finite-difference full-order Navier–Stokes solver used to generate snapshots.
//!
//! MAC grid, central differences, SSP-RK3 in time with a Chorin projection
//! after every stage. Pressure is solved directly (see [`poisson`]).

pub mod poisson;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{advect, divergence, l2_inner, laplacian, AdvectionData, Boundary, Grid, Lid, VectorField};
use poisson::PoissonSolver;

pub const CFL_LIMIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FomCase {
    /// Decaying Taylor–Green vortex on `[0, 2π]²`, optionally perturbed.
    TaylorGreen,
    /// Unit-square cavity driven by the top lid.
    LidCavity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FomConfig {
    pub case: FomCase,
    pub nx: usize,
    pub ny: usize,
    /// Inverse Reynolds number.
    pub nu: f64,
    pub dt: f64,
    /// First sample time; for the cavity also the time of the lift field.
    pub t_start: f64,
    pub t_end: f64,
    pub dt_sample: f64,
    /// Cavity only: `16x²(1−x)²` lid instead of a uniform one.
    pub regularized_lid: bool,
    pub poisson_tol: f64,
    /// Taylor–Green only: amplitude of a solenoidal multi-wavenumber perturbation.
    pub perturbation: f64,
    /// Seeds the perturbation phases.
    pub seed: u64,
}

impl Default for FomConfig {
    fn default() -> Self {
        Self {
            case: FomCase::TaylorGreen,
            nx: 64,
            ny: 64,
            nu: 0.01,
            dt: 1e-3,
            t_start: 0.0,
            t_end: 1.0,
            dt_sample: 0.01,
            regularized_lid: true,
            poisson_tol: 1e-10,
            perturbation: 0.0,
            seed: 0,
        }
    }
}

/// Converts `t / dt` to an integer step count, rejecting non-integer ratios.
fn step_count(t: f64, dt: f64, what: &str) -> Result<usize> {
    let ratio = t / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.abs().max(1.0) || n < 0.0 {
        return Err(Error::Config(format!("{what} = {t} is not a non-negative integer multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

impl FomConfig {
    pub fn grid(&self) -> Result<Grid> {
        match self.case {
            FomCase::TaylorGreen => {
                let l = 2.0 * PI;
                Grid::new(self.nx, self.ny, l, l, Boundary::Periodic)
            }
            FomCase::LidCavity => {
                let lid = if self.regularized_lid { Lid::Regularized } else { Lid::Uniform };
                Grid::new(self.nx, self.ny, 1.0, 1.0, Boundary::Cavity(lid))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.nu) {
            return Err(Error::Config(format!("nu must be positive, got {}", self.nu)));
        }
        if !positive(self.dt) || !positive(self.dt_sample) {
            return Err(Error::Config("dt and dt_sample must be positive".into()));
        }
        if !(self.t_start >= 0.0 && self.t_end > self.t_start) {
            return Err(Error::Config(format!(
                "need 0 <= t_start < t_end, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if !(positive(self.poisson_tol) && self.poisson_tol < 1e-2) {
            return Err(Error::Config(format!("poisson_tol out of range: {}", self.poisson_tol)));
        }
        if !(self.perturbation.is_finite() && self.perturbation >= 0.0) {
            return Err(Error::Config("perturbation must be non-negative".into()));
        }
        step_count(self.dt_sample, self.dt, "dt_sample")?;
        step_count(self.t_start, self.dt, "t_start")?;
        step_count(self.t_end - self.t_start, self.dt_sample, "t_end - t_start")?;

        // Velocity scale is 1 for both built-in cases.
        let umax = 1.0 + self.perturbation;
        let cfl = self.dt * umax * (1.0 / grid.hx()).max(1.0 / grid.hy());
        if cfl > CFL_LIMIT {
            return Err(Error::Config(format!("estimated CFL {cfl:.3} exceeds {CFL_LIMIT}")));
        }
        let diff = self.nu * self.dt * (1.0 / grid.hx().powi(2) + 1.0 / grid.hy().powi(2));
        if diff > CFL_LIMIT {
            return Err(Error::Config(format!("diffusion number {diff:.3} exceeds {CFL_LIMIT}")));
        }
        Ok(())
    }

    /// Number of stored snapshots, `(t_end − t_start)/Δt_s + 1`.
    pub fn snapshot_count(&self) -> Result<usize> {
        Ok(step_count(self.t_end - self.t_start, self.dt_sample, "t_end - t_start")? + 1)
    }

    /// SHA-256 of the canonical debug rendering of the config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Time-ordered snapshot fluctuations and the lift they are measured from.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub grid: Grid,
    pub lift: VectorField,
    pub fields: Vec<VectorField>,
    pub times: Vec<f64>,
    /// Hash of the generating config; not persisted by the file codec.
    pub provenance: Option<String>,
}

impl SnapshotSet {
    pub fn new(lift: VectorField, fields: Vec<VectorField>, times: Vec<f64>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Shape("snapshot set needs at least one field".into()));
        }
        if fields.len() != times.len() {
            return Err(Error::Shape(format!("{} fields but {} times", fields.len(), times.len())));
        }
        for f in &fields {
            lift.check_same_grid(f)?;
        }
        Ok(Self { grid: lift.grid, lift, fields, times, provenance: None })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Full field `φ₀ + u'_k`.
    pub fn raw(&self, k: usize) -> Result<VectorField> {
        self.lift.add(&self.fields[k])
    }
}

/// `(sin x cos y, −cos x sin y) e^{−2νt}` on a periodic `[0, 2π]²` grid.
pub fn taylor_green_exact(t: f64, nu: f64, grid: Grid) -> Result<VectorField> {
    let l = 2.0 * PI;
    if !grid.is_periodic() || (grid.lx - l).abs() > 1e-12 || (grid.ly - l).abs() > 1e-12 {
        return Err(Error::Config("Taylor-Green needs a periodic [0, 2pi]^2 grid".into()));
    }
    let decay = (-2.0 * nu * t).exp();
    Ok(VectorField::from_fn(
        grid,
        |x, y| x.sin() * y.cos() * decay,
        |x, y| -x.cos() * y.sin() * decay,
    ))
}

pub fn kinetic_energy(f: &VectorField) -> f64 {
    0.5 * l2_inner(f, f).expect("field paired with itself")
}

/// Wavevectors of the Taylor–Green perturbation; distinct |k|² give distinct decay rates.
const PERTURBATION_WAVES: [(f64, f64); 10] = [
    (2.0, 1.0),
    (2.0, 2.0),
    (3.0, 0.0),
    (3.0, 1.0),
    (3.0, 2.0),
    (4.0, 0.0),
    (4.0, 1.0),
    (3.0, 3.0),
    (4.0, 2.0),
    (5.0, 1.0),
];

/// Velocity of a streamfunction sampled on the corner lattice, so the result
/// is discretely divergence-free.
fn from_streamfunction(grid: Grid, psi: impl Fn(f64, f64) -> f64) -> VectorField {
    let (hx, hy) = (grid.hx(), grid.hy());
    VectorField::from_fn(
        grid,
        |x, y| (psi(x, y + 0.5 * hy) - psi(x, y - 0.5 * hy)) / hy,
        |x, y| -(psi(x + 0.5 * hx, y) - psi(x - 0.5 * hx, y)) / hx,
    )
}

fn initial_field(cfg: &FomConfig, grid: Grid) -> Result<VectorField> {
    match cfg.case {
        FomCase::TaylorGreen => {
            let mut u = taylor_green_exact(0.0, cfg.nu, grid)?;
            if cfg.perturbation > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let phases: Vec<f64> = PERTURBATION_WAVES.iter().map(|_| 2.0 * PI * rng.random::<f64>()).collect();
                let amp = cfg.perturbation;
                let p = from_streamfunction(grid, |x, y| {
                    PERTURBATION_WAVES
                        .iter()
                        .zip(&phases)
                        .map(|(&(kx, ky), th)| (kx * x + ky * y + th).sin() / (kx * kx + ky * ky))
                        .sum::<f64>()
                        * amp
                });
                u.axpy(1.0, &p)?;
            }
            Ok(u)
        }
        FomCase::LidCavity => {
            let mut u = VectorField::zeros(grid);
            u.lid = 1.0;
            Ok(u)
        }
    }
}

/// Explicit projection solver state.
pub struct FomSolver {
    pub grid: Grid,
    nu: f64,
    dt: f64,
    poisson: PoissonSolver,
    u: VectorField,
    step: usize,
    last_change: f64,
}

impl FomSolver {
    pub fn new(cfg: &FomConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let poisson = PoissonSolver::new(grid, cfg.poisson_tol);
        let mut s = Self {
            grid,
            nu: cfg.nu,
            dt: cfg.dt,
            poisson,
            u: initial_field(cfg, grid)?,
            step: 0,
            last_change: f64::NAN,
        };
        s.u = s.project(s.u.clone())?;
        Ok(s)
    }

    pub fn state(&self) -> &VectorField {
        &self.u
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// `‖uⁿ⁺¹ − uⁿ‖_∞ / Δt` of the last step.
    pub fn steady_residual(&self) -> f64 {
        self.last_change
    }

    /// `−(u·∇)u + νΔu` with the wall-normal nodes held at zero.
    fn rhs(&self, u: &VectorField) -> VectorField {
        let ad = AdvectionData::new(u);
        let mut r = laplacian(u);
        r.scale(self.nu);
        let n = advect(u, &ad, &ad);
        r.axpy(-1.0, &n).expect("same grid");
        r.lid = 0.0;
        r.enforce_walls();
        r
    }

    fn project(&self, mut w: VectorField) -> Result<VectorField> {
        let div = divergence(&w);
        let p = self.poisson.solve(&div)?;
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let (uc, ur) = g.u_dims();
        let (vc, vr) = g.v_dims();
        let periodic = g.is_periodic();
        for j in 0..ur {
            for i in 0..uc {
                let (l, r) = if periodic {
                    ((i + nx - 1) % nx, i)
                } else if i == 0 || i == nx {
                    continue;
                } else {
                    (i - 1, i)
                };
                w.u[j * uc + i] -= (p[j * nx + r] - p[j * nx + l]) / hx;
            }
        }
        for j in 0..vr {
            let (b, t) = if periodic {
                ((j + ny - 1) % ny, j)
            } else if j == 0 || j == ny {
                continue;
            } else {
                (j - 1, j)
            };
            for i in 0..vc {
                w.v[j * vc + i] -= (p[t * nx + i] - p[b * nx + i]) / hy;
            }
        }
        Ok(w)
    }

    fn check_cfl(&self, u: &VectorField) -> Result<()> {
        let umax = u.u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let vmax = u.v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let cfl = self.dt * (umax / self.grid.hx()).max(vmax / self.grid.hy());
        if !cfl.is_finite() || cfl > CFL_LIMIT {
            return Err(Error::Cfl { time: self.time(), cfl, limit: CFL_LIMIT });
        }
        Ok(())
    }

    /// One SSP-RK3 step.
    pub fn step(&mut self) -> Result<()> {
        self.check_cfl(&self.u)?;
        let dt = self.dt;
        let u0 = &self.u;

        let mut u1 = u0.clone();
        u1.axpy(dt, &self.rhs(u0))?;
        let u1 = self.project(u1)?;

        let mut u2 = u1.clone();
        u2.axpy(dt, &self.rhs(&u1))?;
        u2.scale(0.25);
        u2.axpy(0.75, u0)?;
        let u2 = self.project(u2)?;

        let mut u3 = u2.clone();
        u3.axpy(dt, &self.rhs(&u2))?;
        u3.scale(2.0 / 3.0);
        u3.axpy(1.0 / 3.0, u0)?;
        let mut u3 = self.project(u3)?;
        // keep the boundary multiplier exact despite the convex combinations
        u3.lid = u0.lid;

        if !u3.is_finite() {
            return Err(Error::Divergence(format!("non-finite velocity at t = {}", self.time() + dt)));
        }
        self.last_change = u3.sub(&self.u)?.max_abs() / dt;
        self.u = u3;
        self.step += 1;
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Integrates the configured case and collects fluctuation snapshots on `[t_start, t_end]`.
pub fn run_fom(cfg: &FomConfig) -> Result<SnapshotSet> {
    let mut solver = FomSolver::new(cfg)?;
    let start = step_count(cfg.t_start, cfg.dt, "t_start")?;
    let stride = step_count(cfg.dt_sample, cfg.dt, "dt_sample")?;
    let count = cfg.snapshot_count()?;

    solver.advance(start)?;
    let lift = match cfg.case {
        FomCase::TaylorGreen => VectorField::zeros(solver.grid),
        FomCase::LidCavity => solver.state().clone(),
    };
    let mut fields = Vec::with_capacity(count);
    let mut times = Vec::with_capacity(count);
    for k in 0..count {
        if k > 0 {
            solver.advance(stride)?;
        }
        fields.push(solver.state().sub(&lift)?);
        times.push(cfg.t_start + k as f64 * cfg.dt_sample);
    }
    let mut set = SnapshotSet::new(lift, fields, times)?;
    set.provenance = Some(cfg.hash());
    Ok(set)
}
