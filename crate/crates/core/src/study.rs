//! Error metrics, χ scaling formulas and the parameter sweep harness.

use std::cmp::Ordering;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fom::SnapshotSet;
use crate::pod::{PodBasis, TailSums};
use crate::rom_ops::{build_filter, FilterOp, RomOperators};
use crate::tr_rom::{run_rom, Scheme, TrRomParams, Trajectory};

// ---------------------------------------------------------------------------
// error metrics

/// Rank-`R` projection coefficients of every snapshot, used as the reference
/// solution of the error metrics.
#[derive(Clone, Debug)]
pub struct ReferenceProjection {
    pub r_ref: usize,
    pub times: Vec<f64>,
    pub coeffs: Vec<DVector<f64>>,
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    pub l2: f64,
    pub h10: f64,
    pub avg_h10: f64,
}

impl ReferenceProjection {
    pub fn new(snaps: &SnapshotSet, basis: &PodBasis, r_ref: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = snaps
            .fields
            .par_iter()
            .map(|u| basis.project(u, r_ref))
            .collect::<Result<_>>()?;
        Ok(Self {
            r_ref,
            times: snaps.times.clone(),
            coeffs: rows.into_iter().map(DVector::from_vec).collect(),
            mass: basis.mass(r_ref)?,
            stiffness: basis.stiffness(r_ref)?,
        })
    }

    /// Trajectory row of every reference time.
    pub fn align(&self, traj: &Trajectory) -> Result<Vec<usize>> {
        let mut rows = Vec::with_capacity(self.times.len());
        let mut n = 0;
        for &t in &self.times {
            let tol = 1e-9 * t.abs().max(1.0);
            while n < traj.times.len() && traj.times[n] < t - tol {
                n += 1;
            }
            if n == traj.times.len() || (traj.times[n] - t).abs() > tol {
                return Err(Error::Shape(format!("time grids misaligned: no trajectory row at t = {t}")));
            }
            rows.push(n);
        }
        Ok(rows)
    }

    fn differences(&self, traj: &Trajectory) -> Result<Vec<DVector<f64>>> {
        if traj.r > self.r_ref {
            return Err(Error::Shape(format!("trajectory rank {} exceeds reference rank {}", traj.r, self.r_ref)));
        }
        let rows = self.align(traj)?;
        Ok(rows
            .iter()
            .zip(&self.coeffs)
            .map(|(&n, c)| {
                let mut d = -c;
                for (j, a) in traj.coeffs[n].iter().enumerate() {
                    d[j] += a;
                }
                d
            })
            .collect())
    }

    /// `ε_L2`, `ε_H10` and the H¹₀ error of the time mean.
    pub fn errors(&self, traj: &Trajectory) -> Result<ErrorMetrics> {
        let diffs = self.differences(traj)?;
        let count = diffs.len() as f64;
        let quad = |m: &DMatrix<f64>, d: &DVector<f64>| d.dot(&(m * d));
        let l2 = diffs.iter().map(|d| quad(&self.mass, d)).sum::<f64>() / count;
        let h10 = diffs.iter().map(|d| quad(&self.stiffness, d)).sum::<f64>() / count;
        let mean = diffs.iter().fold(DVector::zeros(self.r_ref), |acc, d| acc + d) / count;
        Ok(ErrorMetrics { l2, h10, avg_h10: quad(&self.stiffness, &mean) })
    }
}

pub fn error_l2(traj: &Trajectory, snaps: &SnapshotSet, basis: &PodBasis, r_ref: usize) -> Result<f64> {
    Ok(ReferenceProjection::new(snaps, basis, r_ref)?.errors(traj)?.l2)
}

pub fn error_h10(traj: &Trajectory, snaps: &SnapshotSet, basis: &PodBasis, r_ref: usize) -> Result<f64> {
    Ok(ReferenceProjection::new(snaps, basis, r_ref)?.errors(traj)?.h10)
}

pub fn error_avg_h10(traj: &Trajectory, snaps: &SnapshotSet, basis: &PodBasis, r_ref: usize) -> Result<f64> {
    Ok(ReferenceProjection::new(snaps, basis, r_ref)?.errors(traj)?.avg_h10)
}

// ---------------------------------------------------------------------------
// χ scaling

/// Inputs of the error-bound terms and χ formulas. `n` may be infinite to
/// switch off every FOM-discretization term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiInputs {
    pub nu: f64,
    pub dt: f64,
    pub n: f64,
    pub k: f64,
    pub s: f64,
    pub delta: f64,
    pub lambda_l2: f64,
    pub lambda_h10: f64,
    pub s_norm: f64,
    pub c_sr: f64,
}

impl ChiInputs {
    /// Inputs where only the POD tails, δ and `C_{s,r}` matter.
    pub fn tails_only(lambda_l2: f64, lambda_h10: f64, delta: f64, c_sr: f64) -> Self {
        Self {
            nu: 1.0,
            dt: 0.0,
            n: f64::INFINITY,
            k: 1.0,
            s: 0.0,
            delta,
            lambda_l2,
            lambda_h10,
            s_norm: 0.0,
            c_sr,
        }
    }

    fn np(&self, e: f64) -> f64 {
        self.n.powf(e)
    }

    /// `𝓛 = N^{−2k−2} + Δt⁶ + Λ_L2`
    pub fn cal_l(&self) -> f64 {
        self.np(-2.0 * self.k - 2.0) + self.dt.powi(6) + self.lambda_l2
    }

    /// `𝓗 = N^{−2k} + ‖S_r‖N^{−2k−2} + (1+‖S_r‖)Δt⁶ + Λ_H10`
    pub fn cal_h(&self) -> f64 {
        self.np(-2.0 * self.k)
            + self.s_norm * self.np(-2.0 * self.k - 2.0)
            + (1.0 + self.s_norm) * self.dt.powi(6)
            + self.lambda_h10
    }
}

/// One row of the error-bound magnitude table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermTable {
    pub n_2s2: f64,
    pub dt2: f64,
    pub chi2_delta4: f64,
    pub chi2_n_2k2: f64,
    pub chi2_lambda_l2: f64,
    pub sqrt_lambda_prod: f64,
    pub n_2k: f64,
    pub s_norm_n_2k2: f64,
    pub lambda_h10: f64,
}

impl TermTable {
    pub const HEADERS: [&'static str; 9] = [
        "N^(-2s-2)",
        "dt^2",
        "chi^2 delta^4",
        "chi^2 N^(-2k-2)",
        "chi^2 L2-tail",
        "sqrt(L2-tail H10-tail)",
        "N^(-2k)",
        "|S_r| N^(-2k-2)",
        "H10-tail",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.n_2s2,
            self.dt2,
            self.chi2_delta4,
            self.chi2_n_2k2,
            self.chi2_lambda_l2,
            self.sqrt_lambda_prod,
            self.n_2k,
            self.s_norm_n_2k2,
            self.lambda_h10,
        ]
    }
}

pub fn term_magnitudes(inp: &ChiInputs, chi: f64) -> TermTable {
    let chi2 = chi * chi;
    TermTable {
        n_2s2: inp.np(-2.0 * inp.s - 2.0),
        dt2: inp.dt * inp.dt,
        chi2_delta4: chi2 * inp.delta.powi(4),
        chi2_n_2k2: chi2 * inp.np(-2.0 * inp.k - 2.0),
        chi2_lambda_l2: chi2 * inp.lambda_l2,
        sqrt_lambda_prod: (inp.lambda_l2 * inp.lambda_h10).sqrt(),
        n_2k: inp.np(-2.0 * inp.k),
        s_norm_n_2k2: inp.s_norm * inp.np(-2.0 * inp.k - 2.0),
        lambda_h10: inp.lambda_h10,
    }
}

/// Which exponent the `√Λ_H10` factor of `𝒜` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TermAVariant {
    /// `N^{−k−1}`, as in the bound the term abbreviates.
    #[default]
    Corrected,
    /// `N^{k−1}` in place of `N^{−k−1}`; kept for audit only.
    AsPrinted,
}

pub fn term_a(inp: &ChiInputs) -> f64 {
    term_a_with(inp, TermAVariant::Corrected)
}

pub fn term_a_with(inp: &ChiInputs, variant: TermAVariant) -> f64 {
    let k = inp.k;
    let dt3 = inp.dt.powi(3);
    let ss = inp.s_norm.sqrt();
    let s1 = (1.0 + inp.s_norm).sqrt();
    let (sl, sh) = (inp.lambda_l2.sqrt(), inp.lambda_h10.sqrt());
    let nk1 = inp.np(-k - 1.0);
    let h_factor = match variant {
        TermAVariant::Corrected => nk1,
        TermAVariant::AsPrinted => inp.np(k - 1.0),
    };
    inp.np(-2.0 * k - 1.0)
        + dt3 * inp.np(-k)
        + ss * nk1 * dt3
        + s1 * nk1 * dt3
        + s1 * inp.dt.powi(6)
        + inp.np(-k) * sl
        + ss * inp.np(-2.0 * k - 2.0)
        + (h_factor + dt3) * sh
        + ss * nk1 * sl
        + s1 * dt3 * sl
}

/// Coefficients `(p, q)` of `F(χ) = p/χ + qχ`.
fn objective_coefficients(inp: &ChiInputs) -> (f64, f64) {
    let nu = inp.nu;
    let p = (inp.dt * inp.dt + inp.np(-2.0 * inp.s - 2.0) + term_a(inp) + (inp.lambda_l2 * inp.lambda_h10).sqrt()) / nu
        + (nu + inp.c_sr / nu) * inp.cal_h();
    let d2 = inp.delta * inp.delta;
    let q = (d2 * d2 + inp.cal_l() + d2 * inp.cal_h()) / nu;
    (p, q)
}

/// The relaxation-term bound `F(χ)` whose minimizer is [`chi_theory_full`].
pub fn objective_f(inp: &ChiInputs, chi: f64) -> f64 {
    let (p, q) = objective_coefficients(inp);
    p / chi + q * chi
}

fn checked_sqrt_ratio(num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Numerical(format!("chi formula has denominator {den}")));
    }
    if !(num >= 0.0) {
        return Err(Error::Numerical(format!("chi formula has numerator {num}")));
    }
    Ok((num / den).sqrt())
}

pub fn chi_theory_full(inp: &ChiInputs) -> Result<f64> {
    let (p, q) = objective_coefficients(inp);
    checked_sqrt_ratio(p, q)
}

/// `√((√(Λ_L2Λ_H10) + C Λ_H10) / (Λ_L2 + δ²Λ_H10 + δ⁴))`
pub fn chi_theory_simplified(inp: &ChiInputs) -> Result<f64> {
    let (l, h, d2) = (inp.lambda_l2, inp.lambda_h10, inp.delta * inp.delta);
    checked_sqrt_ratio((l * h).sqrt() + inp.c_sr * h, l + d2 * h + d2 * d2)
}

/// `√(Λ_H10 / (Λ_L2 + δ²Λ_H10 + δ⁴))`
pub fn chi_theory_r(inp: &ChiInputs) -> Result<f64> {
    let (l, h, d2) = (inp.lambda_l2, inp.lambda_h10, inp.delta * inp.delta);
    checked_sqrt_ratio(h, l + d2 * h + d2 * d2)
}

/// Radii where the simplified χ changes regime: `δ₁ = √(Λ_L2/Λ_H10)` ends
/// the constant regime and `δ₂ = √Λ_H10` starts the `δ⁻²` regime.
pub fn theory_breakpoints(lambda_l2: f64, lambda_h10: f64) -> (f64, f64) {
    ((lambda_l2 / lambda_h10).sqrt(), lambda_h10.sqrt())
}

/// Energy-based filter radius `(Λh^{2/3} + (1−Λ)L^{2/3})^{3/2}` with `Λ` the
/// retained energy fraction of the first `r` eigenvalues.
pub fn delta_energy(r: usize, eigenvalues: &[f64], h: f64, l: f64) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(Error::Config("delta_energy needs a non-empty spectrum".into()));
    }
    if !(h > 0.0 && l > 0.0) {
        return Err(Error::Config(format!("delta_energy needs h, L > 0, got {h}, {l}")));
    }
    if r > eigenvalues.len() {
        return Err(Error::Rank { requested: r, available: eigenvalues.len(), threshold: 0.0 });
    }
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("delta_energy needs a positive total energy".into()));
    }
    // the endpoints are returned as given; the power round trip is not exact
    if r == 0 {
        return Ok(l);
    }
    if r == eigenvalues.len() {
        return Ok(h);
    }
    let frac = eigenvalues[..r].iter().sum::<f64>() / total;
    let inner = frac * h.powf(2.0 / 3.0) + (1.0 - frac) * l.powf(2.0 / 3.0);
    Ok(inner.powf(1.5))
}

/// `C_{s,r} = ‖u⁰‖² + (Δt/ν) Σ ‖fⁿ‖₋₁²`.
pub fn stability_constant(u0_norm: f64, dt: f64, nu: f64, f_dual: &[f64]) -> f64 {
    u0_norm * u0_norm + dt / nu * f_dual.iter().map(|f| f * f).sum::<f64>()
}

// ---------------------------------------------------------------------------
// records and χ_effective

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
            RunStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "diverged" => Ok(RunStatus::Diverged),
            "failed" => Ok(RunStatus::Failed),
            _ => Err(Error::Codec(format!("unknown run status {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRecord {
    pub r: usize,
    pub delta: f64,
    pub chi: f64,
    pub eps_l2: f64,
    pub eps_h10: f64,
    pub eps_avg_h10: f64,
    pub lambda_l2: f64,
    pub lambda_h10: f64,
    pub s_norm: f64,
    pub scheme: Scheme,
    pub status: RunStatus,
    pub wall_time: f64,
}

/// Orders by `(r, δ, χ)`.
pub fn record_order(a: &StudyRecord, b: &StudyRecord) -> Ordering {
    a.r.cmp(&b.r).then(a.delta.total_cmp(&b.delta)).then(a.chi.total_cmp(&b.chi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    L2,
    H10,
    AvgH10,
}

impl Metric {
    pub fn of(self, rec: &StudyRecord) -> f64 {
        match self {
            Metric::L2 => rec.eps_l2,
            Metric::H10 => rec.eps_h10,
            Metric::AvgH10 => rec.eps_avg_h10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiEffective {
    pub r: usize,
    pub delta: f64,
    pub chi_optimal: f64,
    pub metric_optimal: f64,
    pub chi_eff: f64,
    /// Failed or diverged runs left out of the selection.
    pub excluded: usize,
}

/// Largest χ whose metric is within `tol` of the best one, over records of a
/// single `(r, δ)`. Ties in the optimum go to the larger χ.
pub fn find_chi_effective(records: &[StudyRecord], metric: Metric, tol: f64) -> Result<ChiEffective> {
    let first = records.first().ok_or_else(|| Error::Config("no records to select chi from".into()))?;
    if records.iter().any(|x| x.r != first.r || x.delta != first.delta) {
        return Err(Error::Config("chi selection needs records sharing r and delta".into()));
    }
    let ok: Vec<&StudyRecord> = records
        .iter()
        .filter(|x| x.status == RunStatus::Ok && metric.of(x).is_finite())
        .collect();
    let best = ok
        .iter()
        .copied()
        .min_by(|a, b| metric.of(a).total_cmp(&metric.of(b)).then(b.chi.total_cmp(&a.chi)))
        .ok_or_else(|| Error::Numerical(format!("all runs failed for r = {}, delta = {}", first.r, first.delta)))?;
    let threshold = (1.0 + tol) * metric.of(best);
    let chi_eff = ok
        .iter()
        .filter(|x| metric.of(x) <= threshold)
        .map(|x| x.chi)
        .fold(best.chi, f64::max);
    Ok(ChiEffective {
        r: first.r,
        delta: first.delta,
        chi_optimal: best.chi,
        metric_optimal: metric.of(best),
        chi_eff,
        excluded: records.len() - ok.len(),
    })
}

/// [`find_chi_effective`] for every `(r, δ)` group, in `(r, δ)` order.
pub fn chi_effective_table(records: &[StudyRecord], metric: Metric, tol: f64) -> Vec<Result<ChiEffective>> {
    let mut sorted: Vec<StudyRecord> = records.to_vec();
    sorted.sort_by(record_order);
    sorted
        .chunk_by(|a, b| a.r == b.r && a.delta == b.delta)
        .map(|g| find_chi_effective(g, metric, tol))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    /// δ or r of the anchor; informational.
    pub at: f64,
    pub chi_eff: f64,
    pub chi_theory: f64,
}

/// Mean of `χ_eff / χ_theory` over the anchors.
pub fn extrapolation_ratio(anchors: &[Anchor]) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::Config("extrapolation needs at least one anchor".into()));
    }
    let mut sum = 0.0;
    for a in anchors {
        if !(a.chi_theory > 0.0) {
            return Err(Error::Numerical(format!("anchor at {} has chi_theory = {}", a.at, a.chi_theory)));
        }
        sum += a.chi_eff / a.chi_theory;
    }
    Ok(sum / anchors.len() as f64)
}

/// `ρ̄ · χ_theory` at every target.
pub fn extrapolate_chi(anchors: &[Anchor], target_theory: &[f64]) -> Result<Vec<f64>> {
    let rho = extrapolation_ratio(anchors)?;
    Ok(target_theory.iter().map(|t| rho * t).collect())
}

// ---------------------------------------------------------------------------
// regression

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Sum of squared residuals in log space.
    pub sse: f64,
}

fn fit_logs(lx: &[f64], ly: &[f64]) -> RateFit {
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    RateFit { slope, intercept, r2, sse }
}

fn logs(xs: &[f64], ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Config("a rate fit needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Config("rate fits need finite positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    if lx.iter().all(|x| *x == lx[0]) {
        return Err(Error::Config("rate fits need at least two distinct x values".into()));
    }
    Ok((lx, ys.iter().map(|y| y.ln()).collect()))
}

/// Least squares line through `(log x, log y)`.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    let (lx, ly) = logs(xs, ys)?;
    Ok(fit_logs(&lx, &ly))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiecewiseFit {
    /// Geometric mean of the last left and first right abscissa.
    pub breakpoint: f64,
    pub left: RateFit,
    pub right: RateFit,
}

/// Two independent log-log lines split at the breakpoint with the smallest
/// total squared residual. Each side keeps at least two points.
pub fn fit_piecewise(xs: &[f64], ys: &[f64]) -> Result<PiecewiseFit> {
    let (lx, ly) = logs(xs, ys)?;
    let mut idx: Vec<usize> = (0..lx.len()).collect();
    idx.sort_by(|&a, &b| lx[a].total_cmp(&lx[b]));
    let lx: Vec<f64> = idx.iter().map(|&i| lx[i]).collect();
    let ly: Vec<f64> = idx.iter().map(|&i| ly[i]).collect();
    if lx.len() < 4 {
        return Err(Error::Config("a piecewise fit needs at least four points".into()));
    }
    let mut best: Option<PiecewiseFit> = None;
    for s in 2..=lx.len() - 2 {
        if lx[s - 1] == lx[s] || lx[..s].iter().all(|x| *x == lx[0]) || lx[s..].iter().all(|x| *x == lx[s]) {
            continue;
        }
        let left = fit_logs(&lx[..s], &ly[..s]);
        let right = fit_logs(&lx[s..], &ly[s..]);
        let cand = PiecewiseFit { breakpoint: (0.5 * (lx[s - 1] + lx[s])).exp(), left, right };
        let total = left.sse + right.sse;
        if best.is_none_or(|b| total < b.left.sse + b.right.sse) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Config("no admissible breakpoint".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFit {
    /// Geometric midpoints between adjacent segments, ascending.
    pub breakpoints: Vec<f64>,
    pub fits: Vec<RateFit>,
}

impl SegmentFit {
    pub fn sse(&self) -> f64 {
        self.fits.iter().map(|f| f.sse).sum()
    }
}

/// Least-squares fit of `k` contiguous log-log line segments, each over at least two
/// distinct abscissae. Exhaustive over split points via dynamic programming.
pub fn fit_segments(xs: &[f64], ys: &[f64], k: usize) -> Result<SegmentFit> {
    let (lx, ly) = logs(xs, ys)?;
    let mut idx: Vec<usize> = (0..lx.len()).collect();
    idx.sort_by(|&a, &b| lx[a].total_cmp(&lx[b]));
    let lx: Vec<f64> = idx.iter().map(|&i| lx[i]).collect();
    let ly: Vec<f64> = idx.iter().map(|&i| ly[i]).collect();
    let n = lx.len();
    if k == 0 || n < 2 * k {
        return Err(Error::Config(format!("{k} segments need at least {} points", 2 * k)));
    }
    // A segment [i, j) is admissible when it does not split tied abscissae and spans two values.
    let admissible = |i: usize, j: usize| {
        j - i >= 2 && lx[j - 1] > lx[i] && (i == 0 || lx[i - 1] < lx[i]) && (j == n || lx[j - 1] < lx[j])
    };
    // best[m][j]: minimum SSE covering the first j points with m segments, and the split used.
    let mut best = vec![vec![(f64::INFINITY, 0usize); n + 1]; k + 1];
    best[0][0].0 = 0.0;
    for m in 1..=k {
        for j in 2 * m..=n {
            for i in 2 * (m - 1)..=j - 2 {
                if !best[m - 1][i].0.is_finite() || !admissible(i, j) {
                    continue;
                }
                let c = best[m - 1][i].0 + fit_logs(&lx[i..j], &ly[i..j]).sse;
                if c < best[m][j].0 {
                    best[m][j] = (c, i);
                }
            }
        }
    }
    if !best[k][n].0.is_finite() {
        return Err(Error::Config("no admissible segmentation".into()));
    }
    let mut cuts = vec![n];
    let mut j = n;
    for m in (1..=k).rev() {
        j = best[m][j].1;
        cuts.push(j);
    }
    cuts.reverse();
    let fits = cuts.windows(2).map(|w| fit_logs(&lx[w[0]..w[1]], &ly[w[0]..w[1]])).collect();
    let breakpoints = cuts[1..k].iter().map(|&c| (0.5 * (lx[c - 1] + lx[c])).exp()).collect();
    Ok(SegmentFit { breakpoints, fits })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let ratio = hi / lo;
            let mut v: Vec<f64> = (0..n).map(|i| lo * ratio.powf(i as f64 / (n - 1) as f64)).collect();
            v[n - 1] = hi;
            v
        }
    }
}

// ---------------------------------------------------------------------------
// sweeps

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSpec {
    pub rs: Vec<usize>,
    pub deltas: Vec<f64>,
    pub chis: Vec<f64>,
}

/// Shared, read-only inputs of every sweep point.
pub struct SweepSetup<'a> {
    /// Operators at the largest swept `r` or beyond.
    pub ops: &'a RomOperators,
    pub reference: &'a ReferenceProjection,
    pub tails: &'a TailSums,
    /// Supplies ν, Δt, scheme, form, solver and step count; `r`, χ, δ are overwritten.
    pub template: TrRomParams,
    /// Initial coefficients of length at least the largest swept `r`.
    pub initial: Vec<f64>,
    /// Off by default so records stay bit-reproducible.
    pub record_wall_time: bool,
}

/// Runs every `(r, δ, χ)` point and returns records sorted by `(r, δ, χ)`.
/// Failing points are recorded with their status and NaN errors.
pub fn run_sweep(spec: &SweepSpec, setup: &SweepSetup) -> Result<Vec<StudyRecord>> {
    let rmax = setup.ops.r.min(setup.reference.r_ref).min(setup.initial.len());
    if let Some(&r) = spec.rs.iter().find(|&&r| r == 0 || r > rmax) {
        return Err(Error::Rank { requested: r, available: rmax, threshold: crate::pod::RANK_THRESHOLD });
    }
    if spec.deltas.iter().chain(&spec.chis).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Config("sweep radii and chi values must be finite and non-negative".into()));
    }
    let mut rs = spec.rs.clone();
    rs.sort_unstable();
    rs.dedup();
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (deltas, chis) = (sorted(&spec.deltas), sorted(&spec.chis));

    let ops: Vec<RomOperators> = rs.iter().map(|&r| setup.ops.truncate(r)).collect::<Result<_>>()?;
    let filters: Vec<Vec<Result<FilterOp>>> = ops
        .iter()
        .map(|o| deltas.par_iter().map(|&d| build_filter(o, d)).collect())
        .collect();

    let (nd, nc) = (deltas.len(), chis.len());
    let points: Vec<(usize, usize, usize)> = (0..rs.len())
        .flat_map(|a| (0..nd).flat_map(move |b| (0..nc).map(move |c| (a, b, c))))
        .collect();
    let records = points
        .par_iter()
        .map(|&(a, b, c)| {
            let (r, delta, chi) = (rs[a], deltas[b], chis[c]);
            let params = TrRomParams { r, chi, delta, ..setup.template.clone() };
            let start = Instant::now();
            let outcome = filters[a][b]
                .as_ref()
                .map_err(|e| Error::Numerical(e.to_string()))
                .and_then(|f| run_rom(&setup.initial[..r], &params, &ops[a], f))
                .and_then(|t| if t.diverged { Ok((t, RunStatus::Diverged)) } else { Ok((t, RunStatus::Ok)) });
            let (errs, status) = match outcome {
                Ok((t, RunStatus::Ok)) => match setup.reference.errors(&t) {
                    Ok(e) => (e, RunStatus::Ok),
                    Err(_) => (nan_errors(), RunStatus::Failed),
                },
                Ok((_, s)) => (nan_errors(), s),
                Err(_) => (nan_errors(), RunStatus::Failed),
            };
            StudyRecord {
                r,
                delta,
                chi,
                eps_l2: errs.l2,
                eps_h10: errs.h10,
                eps_avg_h10: errs.avg_h10,
                lambda_l2: setup.tails.l2[r],
                lambda_h10: setup.tails.h10[r],
                s_norm: setup.tails.s_norm_at(r),
                scheme: params.scheme,
                status,
                wall_time: if setup.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 },
            }
        })
        .collect();
    Ok(records)
}

fn nan_errors() -> ErrorMetrics {
    ErrorMetrics { l2: f64::NAN, h10: f64::NAN, avg_h10: f64::NAN }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(chi: f64, m: f64) -> StudyRecord {
        StudyRecord {
            r: 4,
            delta: 0.1,
            chi,
            eps_l2: m,
            eps_h10: m,
            eps_avg_h10: m,
            lambda_l2: 1.0,
            lambda_h10: 1.0,
            s_norm: 1.0,
            scheme: Scheme::ImplicitBe,
            status: RunStatus::Ok,
            wall_time: 0.0,
        }
    }

    #[test]
    fn chi_effective_rule() {
        let rs = [rec(0.1, 1.0), rec(0.2, 0.95), rec(0.5, 0.97), rec(1.0, 1.5)];
        let e = find_chi_effective(&rs, Metric::H10, 0.05).unwrap();
        assert_eq!(e.chi_optimal, 0.2);
        assert_eq!(e.chi_eff, 0.5);
        let flat = [rec(0.1, 1.0), rec(0.3, 1.0), rec(3.0, 1.0)];
        assert_eq!(find_chi_effective(&flat, Metric::H10, 0.05).unwrap().chi_eff, 3.0);
        assert_eq!(find_chi_effective(&flat[..1], Metric::H10, 0.05).unwrap().chi_eff, 0.1);
    }

    #[test]
    fn chi_effective_skips_failures() {
        let mut bad = rec(5.0, f64::NAN);
        bad.status = RunStatus::Diverged;
        let e = find_chi_effective(&[rec(0.1, 1.0), bad.clone()], Metric::H10, 0.05).unwrap();
        assert_eq!((e.chi_eff, e.excluded), (0.1, 1));
        assert!(find_chi_effective(&[bad], Metric::H10, 0.05).is_err());
        let mut other = rec(0.1, 1.0);
        other.delta = 0.2;
        assert!(find_chi_effective(&[rec(0.1, 1.0), other], Metric::H10, 0.05).is_err());
    }

    #[test]
    fn extrapolation_rules() {
        let a = [Anchor { at: 0.2, chi_eff: 2.0, chi_theory: 1.0 }, Anchor { at: 0.3, chi_eff: 4.0, chi_theory: 2.0 }];
        assert_eq!(extrapolate_chi(&a, &[3.0]).unwrap(), vec![6.0]);
        assert_eq!(extrapolate_chi(&a[..1], &[0.5, 1.5]).unwrap(), vec![1.0, 3.0]);
        assert!(extrapolate_chi(&[], &[1.0]).is_err());
        assert!(extrapolate_chi(&[Anchor { at: 0.1, chi_eff: 1.0, chi_theory: 0.0 }], &[1.0]).is_err());
    }

    #[test]
    fn exact_power_law_fit() {
        let xs = [0.1, 0.5, 2.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        let f = fit_rate(&xs, &ys).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_rate(&[1.0], &[1.0]).is_err());
        assert!(fit_rate(&[1.0, -1.0], &[1.0, 1.0]).is_err());
        assert!(fit_rate(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn piecewise_fit_finds_the_kink() {
        let xs = log_grid(1e-3, 1.0, 13);
        let ys: Vec<f64> = xs.iter().map(|&x| if x <= 0.03 { 5.0 } else { 5.0 * (x / 0.03).powf(-1.5) }).collect();
        let p = fit_piecewise(&xs, &ys).unwrap();
        assert!(p.left.slope.abs() < 1e-9);
        assert!((p.right.slope + 1.5).abs() < 1e-9);
        assert!(p.breakpoint > 0.02 && p.breakpoint < 0.05);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.001, 5.0, 35);
        assert_eq!(g.len(), 35);
        assert!((g[0] - 0.001).abs() < 1e-15 && (g[34] - 5.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(log_grid(1.0, 2.0, 0).is_empty());
    }

    #[test]
    fn status_strings_round_trip() {
        for s in [RunStatus::Ok, RunStatus::Diverged, RunStatus::Failed] {
            assert_eq!(RunStatus::parse(s.as_str()).unwrap(), s);
        }
        assert!(RunStatus::parse("fine").is_err());
    }
}
