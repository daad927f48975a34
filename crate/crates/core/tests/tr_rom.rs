mod common;

use common::{diagonal_ops, random_ops};
use nalgebra::{DMatrix, DVector};
use trrom::tr_rom::{stability_check, NonlinearSolver, Scheme};
use trrom::{build_filter, run_rom, Error, FilterOp, RomOperators, TrRomParams};

fn params(r: usize, nu: f64, dt: f64, steps: usize) -> TrRomParams {
    TrRomParams { tol: 1e-13, ..TrRomParams::new(r, nu, dt, steps) }
}

fn last(traj: &trrom::Trajectory) -> DVector<f64> {
    DVector::from_column_slice(traj.coeffs.last().unwrap())
}

/// Right-hand side of `M ȧ = f − νA ā − χ M(I−F) a − B(ā, ā)` from the tensor directly.
fn semi_discrete_residual(ops: &RomOperators, filter: &FilterOp, chi: f64, a: &DVector<f64>) -> DVector<f64> {
    let r = ops.r;
    let aug: Vec<f64> = std::iter::once(1.0).chain(a.iter().copied()).collect();
    let relax = if chi != 0.0 && filter.delta != 0.0 { &filter.relax * a * chi } else { DVector::zeros(r) };
    DVector::from_fn(r, |i, _| {
        let mut v = ops.forcing[i] - relax[i];
        for j in 0..=r {
            v -= ops.nu * ops.stiffness[(i + 1, j)] * aug[j];
            for k in 0..=r {
                v -= ops.b(i + 1, j, k) * aug[j] * aug[k];
            }
        }
        v
    })
}

#[test]
fn steady_state_is_preserved_by_both_schemes() {
    let mut ops = random_ops(4, 0.05, 0.3, true, 11);
    let filter = build_filter(&ops, 0.2).unwrap();
    let chi = 0.7;
    let target = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.05]);
    ops.forcing = -semi_discrete_residual(&ops, &filter, chi, &target);
    assert!(semi_discrete_residual(&ops, &filter, chi, &target).norm() < 1e-14);
    for scheme in [Scheme::ImplicitBe, Scheme::SemiImplicit] {
        let p = TrRomParams { chi, delta: 0.2, scheme, ..params(4, 0.05, 0.01, 50) };
        let traj = run_rom(target.as_slice(), &p, &ops, &filter).unwrap();
        assert!(!traj.diverged);
        let err = (last(&traj) - &target).norm();
        assert!(err < 1e-10, "{scheme:?} drifted by {err:e}");
    }
}

fn final_error_slope(scheme: Scheme, dts: &[f64], reference_dt: f64) -> f64 {
    let ops = random_ops(4, 0.1, 0.3, true, 5);
    let filter = build_filter(&ops, 0.3).unwrap();
    let a0 = [0.4, -0.3, 0.2, 0.1];
    let run = |s: Scheme, dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let p = TrRomParams { chi: 0.5, delta: 0.3, scheme: s, ..params(4, 0.1, dt, steps) };
        last(&run_rom(&a0, &p, &ops, &filter).unwrap())
    };
    let reference = run(Scheme::SemiImplicit, reference_dt);
    let errs: Vec<f64> = dts.iter().map(|&dt| (run(scheme, dt) - &reference).norm()).collect();
    trrom::study::fit_rate(dts, &errs).unwrap().slope
}

#[test]
fn semi_implicit_is_third_order() {
    let slope = final_error_slope(Scheme::SemiImplicit, &[0.1, 0.05, 0.025, 0.0125], 1e-4);
    assert!((2.7..=3.3).contains(&slope), "slope {slope}");
}

#[test]
fn backward_euler_is_first_order() {
    let slope = final_error_slope(Scheme::ImplicitBe, &[0.02, 0.01, 0.005, 0.0025], 1e-4);
    assert!((0.9..=1.1).contains(&slope), "slope {slope}");
}

#[test]
fn linear_steady_state_matches_direct_solve() {
    let mut ops = random_ops(5, 0.5, 0.0, false, 3);
    ops.forcing = DVector::from_vec(vec![1.0, -0.5, 0.25, 0.0, 2.0]);
    let filter = build_filter(&ops, 0.1).unwrap();
    let chi = 0.3;
    let lhs = ops.mode_stiffness() * ops.nu + &filter.relax * chi;
    let exact = lhs.lu().solve(&ops.forcing).unwrap();
    for scheme in [Scheme::ImplicitBe, Scheme::SemiImplicit] {
        let p = TrRomParams { chi, delta: 0.1, scheme, ..params(5, 0.5, 0.05, 4000) };
        let traj = run_rom(&[0.0; 5], &p, &ops, &filter).unwrap();
        let err = (last(&traj) - &exact).norm() / exact.norm();
        assert!(err < 1e-8, "{scheme:?} steady state off by {err:e}");
    }
}

#[test]
fn zero_radius_or_zero_chi_is_the_galerkin_rom() {
    let ops = random_ops(3, 0.02, 0.5, true, 9);
    let a0 = [0.1, 0.2, -0.3];
    let galerkin = {
        let f = build_filter(&ops, 0.0).unwrap();
        run_rom(&a0, &params(3, 0.02, 0.01, 40), &ops, &f).unwrap()
    };
    for scheme in [Scheme::ImplicitBe, Scheme::SemiImplicit] {
        let g = {
            let f = build_filter(&ops, 0.0).unwrap();
            run_rom(&a0, &TrRomParams { scheme, ..params(3, 0.02, 0.01, 40) }, &ops, &f).unwrap()
        };
        let no_delta = {
            let f = build_filter(&ops, 0.0).unwrap();
            let p = TrRomParams { scheme, chi: 5.0, ..params(3, 0.02, 0.01, 40) };
            run_rom(&a0, &p, &ops, &f).unwrap()
        };
        let no_chi = {
            let f = build_filter(&ops, 0.4).unwrap();
            let p = TrRomParams { scheme, delta: 0.4, ..params(3, 0.02, 0.01, 40) };
            run_rom(&a0, &p, &ops, &f).unwrap()
        };
        assert_eq!(g.coeffs, no_delta.coeffs);
        assert_eq!(g.coeffs, no_chi.coeffs);
        if scheme == Scheme::ImplicitBe {
            assert_eq!(g.coeffs, galerkin.coeffs);
        }
    }
}

#[test]
fn larger_chi_damps_more() {
    let ops = diagonal_ops(&[1.0, 4.0, 9.0, 16.0, 25.0], 0.01);
    let filter = build_filter(&ops, 0.3).unwrap();
    let a0 = [1.0, 1.0, 1.0, 1.0, 1.0];
    for scheme in [Scheme::ImplicitBe, Scheme::SemiImplicit] {
        let energies: Vec<f64> = [0.0, 0.1, 0.5, 1.0, 5.0]
            .iter()
            .map(|&chi| {
                let p = TrRomParams { chi, delta: 0.3, scheme, ..params(5, 0.01, 0.01, 100) };
                run_rom(&a0, &p, &ops, &filter).unwrap().diagnostics.last().unwrap().energy
            })
            .collect();
        assert!(energies.windows(2).all(|w| w[1] < w[0]), "{scheme:?}: {energies:?}");
    }
}

#[test]
fn newton_agrees_with_picard() {
    let ops = random_ops(6, 0.01, 1.0, true, 21);
    let filter = build_filter(&ops, 0.1).unwrap();
    let a0 = [0.5, -0.4, 0.3, 0.2, -0.1, 0.05];
    let run = |solver| {
        let p = TrRomParams { chi: 0.2, delta: 0.1, solver, ..params(6, 0.01, 0.05, 60) };
        run_rom(&a0, &p, &ops, &filter).unwrap()
    };
    let (pic, newt) = (run(NonlinearSolver::Picard), run(NonlinearSolver::Newton));
    for (a, b) in pic.coeffs.iter().zip(&newt.coeffs) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
    let pic_iters: usize = pic.diagnostics.iter().map(|d| d.iterations).sum();
    let newt_iters: usize = newt.diagnostics.iter().map(|d| d.iterations).sum();
    assert!(newt_iters <= pic_iters, "newton {newt_iters} vs picard {pic_iters}");
}

#[test]
fn backward_euler_energy_inequality_holds() {
    let ops = random_ops(5, 0.01, 2.0, false, 17);
    let a0 = [1.0, -0.5, 0.3, 0.8, -0.2];
    for &(dt, chi, delta) in &[(1e-3, 0.0, 0.0), (1e-2, 1.0, 0.2), (0.1, 10.0, 0.5), (1.0, 0.3, 1.0)] {
        let filter = build_filter(&ops, delta).unwrap();
        let p = TrRomParams { chi, delta, ..params(5, 0.01, dt, 40) };
        let traj = run_rom(&a0, &p, &ops, &filter).unwrap();
        let u0 = traj.diagnostics[0].energy.sqrt();
        let rep = stability_check(&traj, &p, u0, 0.0).unwrap();
        assert!(rep.all_ok(), "dt={dt} chi={chi}: min slack {:e}", rep.min_relative_slack());
    }
}

#[test]
fn stability_check_needs_backward_euler_and_skew() {
    let ops = random_ops(2, 0.1, 0.1, false, 1);
    let filter = build_filter(&ops, 0.0).unwrap();
    let p = TrRomParams { scheme: Scheme::SemiImplicit, ..params(2, 0.1, 0.1, 5) };
    let traj = run_rom(&[0.1, 0.1], &p, &ops, &filter).unwrap();
    assert!(matches!(stability_check(&traj, &p, 1.0, 0.0), Err(Error::Config(_))));
}

#[test]
fn blow_up_truncates_and_flags() {
    let mut ops = diagonal_ops(&[-10.0, -10.0], 1.0);
    ops.mass = DMatrix::identity(2, 2);
    let filter = build_filter(&ops, 0.0).unwrap();
    let p = params(2, 1.0, 0.01, 1000);
    let traj = run_rom(&[1.0, 1.0], &p, &ops, &filter).unwrap();
    assert!(traj.diverged);
    assert!(traj.len() < 1001);
    assert_eq!(traj.len(), traj.times.len());
    assert_eq!(traj.len(), traj.diagnostics.len());
}

#[test]
fn nonlinear_failure_reports_the_step() {
    let ops = random_ops(4, 1e-3, 50.0, true, 2);
    let filter = build_filter(&ops, 0.0).unwrap();
    let p = TrRomParams { max_iter: 1, tol: 1e-15, ..params(4, 1e-3, 0.5, 10) };
    match run_rom(&[1.0, 1.0, 1.0, 1.0], &p, &ops, &filter) {
        Err(Error::AtStep { step, source }) => {
            assert_eq!(step, 1);
            assert_eq!(source.kind(), "nonconvergence");
        }
        other => panic!("expected a step failure, got {other:?}"),
    }
}
