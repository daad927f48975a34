//! TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{FomCase, FomConfig};
use crate::rom_ops::ConvectionForm;
use crate::study::{log_grid, Metric, SweepSpec};
use crate::tr_rom::{NonlinearSolver, Scheme, TrRomParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the Taylor–Green perturbation phases.
    #[serde(default)]
    pub seed: u64,
    pub fom: FomSection,
    #[serde(default)]
    pub pod: PodSection,
    #[serde(default)]
    pub rom: RomSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseName {
    TaylorGreen,
    LidCavity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FomSection {
    pub case: CaseName,
    pub nx: usize,
    /// Defaults to `nx`.
    pub ny: Option<usize>,
    pub nu: f64,
    pub dt: f64,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    pub dt_sample: f64,
    #[serde(default = "yes")]
    pub regularized_lid: bool,
    #[serde(default = "default_poisson_tol")]
    pub poisson_tol: f64,
    #[serde(default)]
    pub perturbation: f64,
}

fn yes() -> bool {
    true
}

fn default_poisson_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodSection {
    pub rank: usize,
}

impl Default for PodSection {
    fn default() -> Self {
        Self { rank: 20 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    ImplicitBe,
    SemiImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormName {
    Skew,
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    Picard,
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// L² projection of the first snapshot.
    Projection,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomSection {
    pub r: usize,
    /// Defaults to the FOM sampling interval.
    pub dt: Option<f64>,
    pub chi: f64,
    pub delta: f64,
    pub scheme: SchemeName,
    pub form: FormName,
    pub solver: SolverName,
    pub tol: f64,
    pub max_iter: usize,
    /// Defaults to covering the snapshot window.
    pub steps: Option<usize>,
    pub initial: InitialKind,
}

impl Default for RomSection {
    fn default() -> Self {
        Self {
            r: 4,
            dt: None,
            chi: 0.0,
            delta: 0.0,
            scheme: SchemeName::ImplicitBe,
            form: FormName::Skew,
            solver: SolverName::Picard,
            tol: 1e-10,
            max_iter: 50,
            steps: None,
            initial: InitialKind::Projection,
        }
    }
}

/// Explicit values or `{ lo, hi, n }` log-spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Log { lo: f64, hi: f64, n: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Values(Vec::new())
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match *self {
            GridSpec::Values(ref v) => Ok(v.clone()),
            GridSpec::Log { lo, hi, n } => {
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(Error::Config(format!("log grid needs 0 < lo <= hi, got [{lo}, {hi}]")));
                }
                Ok(log_grid(lo, hi, n))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub rs: Vec<usize>,
    pub deltas: GridSpec,
    pub chis: GridSpec,
    /// Rank of the reference projection; defaults to the POD rank.
    pub r_ref: Option<usize>,
    /// Measure wall time per point; makes the CSV non-reproducible.
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    L2,
    H10,
    AvgH10,
}

impl From<MetricName> for Metric {
    fn from(m: MetricName) -> Self {
        match m {
            MetricName::L2 => Metric::L2,
            MetricName::H10 => Metric::H10,
            MetricName::AvgH10 => Metric::AvgH10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub metric: MetricName,
    pub tolerance: f64,
    /// δ values whose χ ratios drive the extrapolation.
    pub anchors: Vec<f64>,
    /// FOM resolution proxy and regularity indices of the error-bound table.
    pub n: f64,
    pub k: f64,
    pub s: f64,
    /// χ used for the term-magnitude table.
    pub chi: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { metric: MetricName::H10, tolerance: 0.05, anchors: Vec::new(), n: 8.0, k: 1.0, s: 0.0, chi: 0.2 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn fom_config(&self) -> FomConfig {
        let f = &self.fom;
        FomConfig {
            case: match f.case {
                CaseName::TaylorGreen => FomCase::TaylorGreen,
                CaseName::LidCavity => FomCase::LidCavity,
            },
            nx: f.nx,
            ny: f.ny.unwrap_or(f.nx),
            nu: f.nu,
            dt: f.dt,
            t_start: f.t_start,
            t_end: f.t_end,
            dt_sample: f.dt_sample,
            regularized_lid: f.regularized_lid,
            poisson_tol: f.poisson_tol,
            perturbation: f.perturbation,
            seed: self.seed,
        }
    }

    pub fn rom_dt(&self) -> f64 {
        self.rom.dt.unwrap_or(self.fom.dt_sample)
    }

    /// ROM steps per snapshot sample.
    pub fn rom_stride(&self) -> Result<usize> {
        let ratio = self.fom.dt_sample / self.rom_dt();
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "rom dt {} must divide the sampling interval {}",
                self.rom_dt(),
                self.fom.dt_sample
            )));
        }
        Ok(n as usize)
    }

    pub fn rom_params(&self) -> Result<TrRomParams> {
        let r = &self.rom;
        let window = ((self.fom.t_end - self.fom.t_start) / self.fom.dt_sample).round() as usize;
        Ok(TrRomParams {
            r: r.r,
            nu: self.fom.nu,
            dt: self.rom_dt(),
            chi: r.chi,
            delta: r.delta,
            scheme: match r.scheme {
                SchemeName::ImplicitBe => Scheme::ImplicitBe,
                SchemeName::SemiImplicit => Scheme::SemiImplicit,
            },
            form: match r.form {
                FormName::Skew => ConvectionForm::Skew,
                FormName::Standard => ConvectionForm::Standard,
            },
            solver: match r.solver {
                SolverName::Picard => NonlinearSolver::Picard,
                SolverName::Newton => NonlinearSolver::Newton,
            },
            tol: r.tol,
            max_iter: r.max_iter,
            steps: match r.steps {
                Some(s) => s,
                None => window * self.rom_stride()?,
            },
            t0: self.fom.t_start,
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        Ok(SweepSpec { rs: self.sweep.rs.clone(), deltas: self.sweep.deltas.values()?, chis: self.sweep.chis.values()? })
    }

    pub fn r_ref(&self) -> usize {
        self.sweep.r_ref.unwrap_or(self.pod.rank)
    }

    pub fn validate(&self) -> Result<()> {
        self.fom_config().validate()?;
        if self.pod.rank == 0 {
            return Err(Error::Config("pod.rank must be positive".into()));
        }
        if self.rom.r == 0 || self.rom.r > self.pod.rank {
            return Err(Error::Config(format!("rom.r = {} must lie in 1..={}", self.rom.r, self.pod.rank)));
        }
        let dt = self.rom_dt();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("rom dt must be positive, got {dt}")));
        }
        self.rom_stride()?;
        let r = &self.rom;
        if !(r.chi.is_finite() && r.chi >= 0.0 && r.delta.is_finite() && r.delta >= 0.0) {
            return Err(Error::Config("rom chi and delta must be non-negative".into()));
        }
        if !(r.tol > 0.0) || r.max_iter == 0 {
            return Err(Error::Config("rom tol and max_iter must be positive".into()));
        }
        let spec = self.sweep_spec()?;
        let r_ref = self.r_ref();
        if r_ref > self.pod.rank {
            return Err(Error::Config(format!("sweep.r_ref = {r_ref} exceeds pod.rank = {}", self.pod.rank)));
        }
        if let Some(&bad) = spec.rs.iter().find(|&&x| x == 0 || x > r_ref) {
            return Err(Error::Config(format!("sweep r = {bad} must lie in 1..={r_ref}")));
        }
        if spec.deltas.iter().chain(&spec.chis).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("sweep deltas and chis must be non-negative".into()));
        }
        let s = &self.study;
        if !(s.tolerance >= 0.0 && s.n > 0.0 && s.k >= 0.0 && s.s >= 0.0 && s.chi >= 0.0) {
            return Err(Error::Config("study options out of range".into()));
        }
        Ok(())
    }
}
