use proptest::prelude::*;
use trrom::io::codec::*;
use trrom::io::config::RunConfig;
use trrom::io::results::{parse_records, records_to_csv, HEADER};
use trrom::study::{RunStatus, StudyRecord};
use trrom::tr_rom::Scheme;
use trrom::{Boundary, Error, Grid, Lid, PodBasis, SnapshotSet, Trajectory, VectorField};

fn boundary(code: u8) -> Boundary {
    match code {
        0 => Boundary::Periodic,
        1 => Boundary::Cavity(Lid::Uniform),
        _ => Boundary::Cavity(Lid::Regularized),
    }
}

/// Arbitrary bit patterns are fine as long as they are finite.
fn field(grid: Grid, vals: &[f64], lid: f64) -> VectorField {
    let u = vals.iter().cycle().take(grid.u_len()).copied().collect();
    let v = vals.iter().rev().cycle().take(grid.v_len()).copied().collect();
    VectorField::from_parts(grid, u, v, lid).unwrap()
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (4usize..8, 4usize..8, 0.1f64..10.0, 0.1f64..10.0, 0u8..3)
        .prop_map(|(nx, ny, lx, ly, bc)| Grid::new(nx, ny, lx, ly, boundary(bc)).unwrap())
}

fn lift_value(grid: &Grid) -> f64 {
    if grid.is_periodic() { 0.0 } else { 1.0 }
}

proptest! {
    #[test]
    fn snapshots_round_trip(grid in grid_strategy(), vals in prop::collection::vec(-1e3f64..1e3, 1..50), count in 1usize..6, t0 in 0.0f64..10.0) {
        let lift = field(grid, &vals[..1], lift_value(&grid));
        let fields: Vec<VectorField> = (0..count).map(|k| field(grid, &vals[k % vals.len()..], 0.0)).collect();
        let times: Vec<f64> = (0..count).map(|k| t0 + 0.1 * k as f64).collect();
        let s = SnapshotSet::new(lift, fields, times).unwrap();
        let bytes = encode_snapshots(&s).unwrap();
        let back = decode_snapshots(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(encode_snapshots(&back).unwrap(), bytes);
    }

    #[test]
    fn basis_round_trips(grid in grid_strategy(), vals in prop::collection::vec(-1e3f64..1e3, 1..50), rank in 1usize..5, rest in 0.0f64..1.0) {
        let modes: Vec<VectorField> = (0..rank).map(|k| field(grid, &vals[k % vals.len()..], 0.0)).collect();
        let b = PodBasis {
            grid,
            lift: field(grid, &vals, lift_value(&grid)),
            modes,
            eigenvalues: (0..rank).map(|k| 1.0 / (k + 1) as f64).collect(),
            gradnorms: (0..rank).map(|k| (k * k) as f64 + 0.5).collect(),
            rest_l2: rest,
            rest_h10: rest * 3.0,
        };
        let bytes = encode_basis(&b).unwrap();
        let back = decode_basis(&bytes).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(encode_basis(&back).unwrap(), bytes);
    }

    #[test]
    fn trajectory_round_trips(r in 0usize..6, rows in 1usize..20, vals in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..40)) {
        let coeffs: Vec<Vec<f64>> = (0..rows).map(|n| (0..r).map(|j| vals[(n * r + j) % vals.len()]).collect()).collect();
        let t = Trajectory { r, times: (0..rows).map(|n| n as f64 * 0.25).collect(), coeffs, diagnostics: vec![], diverged: false };
        let bytes = encode_trajectory(&t).unwrap();
        let back = decode_trajectory(&bytes).unwrap();
        prop_assert_eq!(&back, &t);
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec((1usize..30, 0.0f64..2.0, 0.0f64..10.0, any::<f64>(), 0u8..3, any::<bool>()), 1..20)) {
        let recs: Vec<StudyRecord> = rows.iter().map(|&(r, delta, chi, e, status, semi)| StudyRecord {
            r,
            delta,
            chi,
            eps_l2: e,
            eps_h10: e.abs().sqrt(),
            eps_avg_h10: f64::MIN_POSITIVE,
            lambda_l2: 1.0 / r as f64,
            lambda_h10: f64::MAX,
            s_norm: 0.1,
            scheme: if semi { Scheme::SemiImplicit } else { Scheme::ImplicitBe },
            status: [RunStatus::Ok, RunStatus::Diverged, RunStatus::Failed][status as usize],
            wall_time: 0.0,
        }).collect();
        let text = records_to_csv(&recs).unwrap();
        let back = parse_records(&text).unwrap();
        prop_assert_eq!(back.len(), recs.len());
        let mut sorted = recs.clone();
        sorted.sort_by(trrom::study::record_order);
        for (a, b) in back.iter().zip(&sorted) {
            prop_assert_eq!(a.eps_l2.to_bits() == b.eps_l2.to_bits() || (a.eps_l2.is_nan() && b.eps_l2.is_nan()), true);
            prop_assert_eq!((a.r, a.delta, a.chi, a.status, a.scheme), (b.r, b.delta, b.chi, b.status, b.scheme));
            prop_assert_eq!((a.eps_h10.to_bits(), a.lambda_h10, a.eps_avg_h10), (b.eps_h10.to_bits(), b.lambda_h10, b.eps_avg_h10));
        }
        prop_assert_eq!(records_to_csv(&back).unwrap(), text);
    }
}

fn sample_trajectory() -> Trajectory {
    Trajectory { r: 2, times: vec![0.0, 0.5], coeffs: vec![vec![1.0, 2.0], vec![3.0, 4.0]], diagnostics: vec![], diverged: false }
}

#[test]
fn header_layout() {
    let bytes = encode_trajectory(&sample_trajectory()).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
    assert_eq!(bytes[8], 3);
}

#[test]
fn corrupt_input_is_a_codec_error() {
    let bytes = encode_trajectory(&sample_trajectory()).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    let mut trailing = bytes.clone();
    trailing.push(0);
    for buf in [&bad_magic[..], &bad_version[..], &bytes[..bytes.len() - 1], &trailing[..], &[][..]] {
        assert!(matches!(decode_trajectory(buf), Err(Error::Codec(_))));
    }
    assert!(matches!(decode_snapshots(&bytes), Err(Error::Codec(_))));
    assert!(matches!(decode_basis(&bytes), Err(Error::Codec(_))));
}

#[test]
fn lid_must_match_the_grid() {
    let grid = Grid::new(4, 4, 1.0, 1.0, Boundary::Cavity(Lid::Regularized)).unwrap();
    let vals = [0.5];
    let s = SnapshotSet::new(field(grid, &vals, 0.0), vec![field(grid, &vals, 0.0)], vec![0.0]).unwrap();
    assert!(matches!(encode_snapshots(&s), Err(Error::Codec(_))));
    let s = SnapshotSet::new(field(grid, &vals, 1.0), vec![field(grid, &vals, 1.0)], vec![0.0]).unwrap();
    assert!(matches!(encode_snapshots(&s), Err(Error::Codec(_))));
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trrm");
    write_bytes(&path, &encode_trajectory(&sample_trajectory()).unwrap()).unwrap();
    assert_eq!(read_trajectory(&path).unwrap(), sample_trajectory());
    assert!(matches!(read_trajectory(&dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn csv_header_is_fixed() {
    let text = records_to_csv(&[]).unwrap();
    assert_eq!(text.trim_end(), HEADER.join(","));
    assert!(parse_records(&text).unwrap().is_empty());
    assert!(parse_records("r,delta,chi\n").is_err());
}

#[test]
fn config_errors_are_config_kind() {
    for text in [
        "",
        "[fom]\ncase = \"cylinder\"\nnx = 8\nnu = 0.1\ndt = 0.01\nt_end = 1\ndt_sample = 0.1\n",
        "[fom]\ncase = \"lid_cavity\"\nnx = 8\nnu = -1\ndt = 0.01\nt_end = 1\ndt_sample = 0.1\n",
        "[fom]\ncase = \"lid_cavity\"\nnx = 8\nnu = 0.1\ndt = 0.5\nt_end = 1\ndt_sample = 0.5\n",
    ] {
        let err = RunConfig::from_toml(text).unwrap_err();
        assert!(err.is_config(), "{err}");
    }
}
