#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trrom::{ConvectionForm, FomCase, FomConfig, RomOperators};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Random operators with skew convection. `lift` switches the index-0 couplings on.
pub fn random_ops(r: usize, nu: f64, b_scale: f64, lift: bool, seed: u64) -> RomOperators {
    let mut g = rng(seed);
    let n = r + 1;
    let mass = random_spd(r, &mut g);
    let mut stiffness = random_spd(n, &mut g);
    let mut t = vec![0.0; n * n * n];
    for x in t.iter_mut() {
        *x = g.random_range(-1.0..1.0) * b_scale;
    }
    let mut advection = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let touches_lift = i == 0 || j == 0 || k == 0;
                if touches_lift && !lift {
                    continue;
                }
                advection[(i * n + j) * n + k] = 0.5 * (t[(i * n + j) * n + k] - t[(k * n + j) * n + i]);
            }
        }
    }
    if !lift {
        for i in 0..n {
            stiffness[(0, i)] = 0.0;
            stiffness[(i, 0)] = 0.0;
        }
    }
    RomOperators { r, nu, form: ConvectionForm::Skew, mass, stiffness, advection, forcing: DVector::zeros(r) }
}

/// Operators with `M = I`, diagonal `A` and no convection.
pub fn diagonal_ops(diag: &[f64], nu: f64) -> RomOperators {
    let r = diag.len();
    let n = r + 1;
    let mut stiffness = DMatrix::zeros(n, n);
    for (i, d) in diag.iter().enumerate() {
        stiffness[(i + 1, i + 1)] = *d;
    }
    RomOperators {
        r,
        nu,
        form: ConvectionForm::Skew,
        mass: DMatrix::identity(r, r),
        stiffness,
        advection: vec![0.0; n * n * n],
        forcing: DVector::zeros(r),
    }
}

/// Small cavity run, quick enough for ordinary tests.
pub fn small_cavity() -> FomConfig {
    FomConfig {
        case: FomCase::LidCavity,
        nx: 24,
        ny: 24,
        nu: 1e-2,
        dt: 0.01,
        t_start: 1.0,
        t_end: 3.0,
        dt_sample: 0.05,
        ..FomConfig::default()
    }
}

/// Perturbed Taylor–Green run with a rich spectrum and a zero lift.
pub fn perturbed_tg(n: usize) -> FomConfig {
    FomConfig {
        case: FomCase::TaylorGreen,
        nx: n,
        ny: n,
        nu: 0.01,
        dt: 0.01,
        t_start: 0.0,
        t_end: 2.0,
        dt_sample: 0.05,
        perturbation: 0.2,
        seed: 7,
        ..FomConfig::default()
    }
}
