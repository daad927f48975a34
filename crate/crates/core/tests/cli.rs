use std::path::Path;
use std::process::{Command, Output};

use trrom::io::codec::{read_basis, read_snapshots, read_trajectory};
use trrom::io::results::{parse_records, records_to_csv};
use trrom::study::{RunStatus, StudyRecord};
use trrom::tr_rom::Scheme;

const CONFIG: &str = r#"
seed = 3

[fom]
case = "lid_cavity"
nx = 24
nu = 0.01
dt = 0.01
t_start = 1.0
t_end = 3.0
dt_sample = 0.05

[pod]
rank = 6

[rom]
r = 3
dt = 0.01
chi = 0.5
delta = 0.05

[sweep]
rs = [2, 4]
deltas = [0.0, 0.05]
chis = { lo = 0.01, hi = 1.0, n = 3 }

[study]
anchors = [0.05]
"#;

fn trrom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trrom")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = path(d, "run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();

    for tag in ["a", "b"] {
        ok(&trrom(&["fom", "--config", &cfg, "--out", &path(d, &format!("snap_{tag}.trrm"))]));
        let tails = ok(&trrom(&[
            "pod",
            "--snapshots",
            &path(d, &format!("snap_{tag}.trrm")),
            "--config",
            &cfg,
            "--out",
            &path(d, &format!("basis_{tag}.trrm")),
        ]));
        assert_eq!(tails.lines().count(), 1 + 7);
        ok(&trrom(&[
            "rom",
            "--config",
            &cfg,
            "--basis",
            &path(d, &format!("basis_{tag}.trrm")),
            "--snapshots",
            &path(d, &format!("snap_{tag}.trrm")),
            "--out",
            &path(d, &format!("traj_{tag}.trrm")),
        ]));
        ok(&trrom(&[
            "sweep",
            "--config",
            &cfg,
            "--snapshots",
            &path(d, &format!("snap_{tag}.trrm")),
            "--out",
            &path(d, &format!("sweep_{tag}.csv")),
        ]));
    }
    // the sweep without inputs reruns the pipeline and must agree
    ok(&trrom(&["sweep", "--config", &cfg, "--out", &path(d, "sweep_c.csv")]));

    let read = |n: &str| std::fs::read(d.join(n)).unwrap();
    for (a, b) in [
        ("snap_a.trrm", "snap_b.trrm"),
        ("basis_a.trrm", "basis_b.trrm"),
        ("traj_a.trrm", "traj_b.trrm"),
        ("sweep_a.csv", "sweep_b.csv"),
        ("sweep_a.csv", "sweep_c.csv"),
    ] {
        assert!(read(a) == read(b), "{a} and {b} differ");
    }

    let snaps = read_snapshots(&d.join("snap_a.trrm")).unwrap();
    assert_eq!(snaps.len(), 41);
    assert_eq!(read_basis(&d.join("basis_a.trrm")).unwrap().rank(), 6);
    let traj = read_trajectory(&d.join("traj_a.trrm")).unwrap();
    assert_eq!((traj.r, traj.len()), (3, 201));
    assert!((traj.times[200] - 3.0).abs() < 1e-12);

    let recs = parse_records(&String::from_utf8(read("sweep_a.csv")).unwrap()).unwrap();
    assert_eq!(recs.len(), 2 * 2 * 3);
    assert!(recs.iter().all(|x| x.status == RunStatus::Ok));

    let report = ok(&trrom(&["report", "--csv", &path(d, "sweep_a.csv"), "--config", &cfg]));
    for key in ["rate delta=", "chi_eff r=2 delta=0 ", "chi_eff r=4 delta=0.05 ", "extrapolate r=2 delta=0.05", "terms 2,"] {
        assert!(report.contains(key), "missing {key:?} in\n{report}");
    }
}

#[test]
fn report_prints_chi_effective() {
    let dir = tempfile::tempdir().unwrap();
    let rec = |chi: f64, m: f64| StudyRecord {
        r: 4,
        delta: 0.1,
        chi,
        eps_l2: m,
        eps_h10: m,
        eps_avg_h10: m,
        lambda_l2: 1e-3,
        lambda_h10: 1e-1,
        s_norm: 10.0,
        scheme: Scheme::ImplicitBe,
        status: RunStatus::Ok,
        wall_time: 0.0,
    };
    let recs = [rec(0.1, 1.0), rec(0.2, 0.95), rec(0.5, 0.97), rec(1.0, 1.5)];
    let csv = path(dir.path(), "r.csv");
    std::fs::write(&csv, records_to_csv(&recs).unwrap()).unwrap();
    let out = ok(&trrom(&["report", "--csv", &csv]));
    assert!(out.contains("chi_eff r=4 delta=0.1 chi_opt=0.2 "), "{out}");
    assert!(out.contains(" chi_eff=0.5 "), "{out}");
    let strict = ok(&trrom(&["report", "--csv", &csv, "--tolerance", "0.0"]));
    assert!(strict.contains(" chi_eff=0.2 "), "{strict}");
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let bad = path(d, "bad.toml");
    std::fs::write(&bad, CONFIG.replace("nu = 0.01", "nu = -0.01")).unwrap();
    let out = trrom(&["fom", "--config", &bad, "--out", &path(d, "x")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error stage=config kind=config message="), "{}", stderr(&out));

    let out = trrom(&["pod", "--snapshots", &path(d, "missing.trrm"), "--rank", "2", "--out", &path(d, "b")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("stage=io kind=io"));

    std::fs::write(d.join("junk.trrm"), b"not a file").unwrap();
    let out = trrom(&["pod", "--snapshots", &path(d, "junk.trrm"), "--rank", "2", "--out", &path(d, "b")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kind=codec"));

    let out = trrom(&["fom"]);
    assert_eq!(out.status.code(), Some(2));

    // a one-iteration nonlinear solve cannot meet an unreachable tolerance
    let cfg = path(d, "run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let strict = path(d, "strict.toml");
    std::fs::write(&strict, CONFIG.replace("chi = 0.5", "chi = 0.5\ntol = 1e-300\nmax_iter = 1")).unwrap();
    ok(&trrom(&["fom", "--config", &cfg, "--out", &path(d, "s.trrm")]));
    ok(&trrom(&["pod", "--snapshots", &path(d, "s.trrm"), "--rank", "6", "--out", &path(d, "b.trrm")]));
    let out = trrom(&[
        "rom",
        "--config",
        &strict,
        "--basis",
        &path(d, "b.trrm"),
        "--snapshots",
        &path(d, "s.trrm"),
        "--out",
        &path(d, "t.trrm"),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("stage=rom kind=nonconvergence"), "{}", stderr(&out));

    let out = trrom(&["rom", "--config", &cfg, "--basis", &path(d, "b.trrm"), "--out", &path(d, "t.trrm")]);
    assert_eq!(out.status.code(), Some(2), "projection without snapshots: {}", stderr(&out));

    let out = trrom(&["rom", "--config", &cfg, "--basis", &path(d, "b.trrm"), "--snapshots", &path(d, "s.trrm"), "--r", "9", "--out", &path(d, "t.trrm")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("kind=rank"));
}

#[test]
fn taylor_green_rom_reports_stability() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = path(d, "tg.toml");
    std::fs::write(
        &cfg,
        r#"
[fom]
case = "taylor_green"
nx = 24
nu = 0.01
dt = 0.01
t_end = 1.0
dt_sample = 0.05
perturbation = 0.2

[pod]
rank = 5

[rom]
r = 5
dt = 0.05
chi = 1.0
delta = 0.1
tol = 1e-13
"#,
    )
    .unwrap();
    ok(&trrom(&["fom", "--config", &cfg, "--out", &path(d, "s.trrm")]));
    ok(&trrom(&["pod", "--snapshots", &path(d, "s.trrm"), "--config", &cfg, "--out", &path(d, "b.trrm")]));
    let out = ok(&trrom(&[
        "rom",
        "--config",
        &cfg,
        "--basis",
        &path(d, "b.trrm"),
        "--snapshots",
        &path(d, "s.trrm"),
        "--out",
        &path(d, "t.trrm"),
    ]));
    assert!(out.contains("stability all_ok=true accumulated_ok=true"), "{out}");
}
