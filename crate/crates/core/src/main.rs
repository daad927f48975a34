use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trrom::io::codec::{
    encode_basis, encode_snapshots, encode_trajectory, read_basis, read_snapshots, write_bytes,
};
use trrom::io::config::{InitialKind, RunConfig};
use trrom::io::results::{parse_records, records_to_csv};
use trrom::study::{
    chi_effective_table, chi_theory_simplified, extrapolate_chi, fit_piecewise, fit_rate, fit_segments,
    term_magnitudes, Anchor, ChiInputs, Metric, ReferenceProjection, RunStatus, StudyRecord, SweepSetup,
    TermTable,
};
use trrom::tr_rom::{stability_check, Scheme};
use trrom::{assemble_operators, build_filter, compute_pod, run_fom, run_rom, ConvectionForm, Error, PodBasis, SnapshotSet};

#[derive(Parser)]
#[command(name = "trrom", version, about = "Time-relaxation reduced order model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order solver and write a snapshot file.
    Fom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a POD basis and print its tail sums.
    Pod {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of modes; defaults to `pod.rank` of the config.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Integrate one ROM and write its trajectory.
    Rom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Needed for a projected initial condition.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        chi: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run the configured (r, δ, χ) sweep and write the results CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse snapshots instead of running the full-order solver.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Reuse a basis instead of recomputing it.
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Summarize a results CSV: rates, χ_eff, regimes, extrapolation and term magnitudes.
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// l2, h10 or avg_h10; overrides the config.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Comma-separated anchor radii; overrides the config.
        #[arg(long, value_delimiter = ',')]
        anchors: Option<Vec<f64>>,
    },
}

/// An error tagged with the pipeline stage it came from.
struct StageError {
    stage: &'static str,
    err: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> Stage<T> for trrom::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|err| StageError { stage, err })
    }
}

type CliResult = Result<(), StageError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fom { config, out } => cmd_fom(&config, &out),
        Command::Pod { snapshots, out, rank, config } => cmd_pod(&snapshots, &out, rank, config.as_deref()),
        Command::Rom { config, basis, out, snapshots, r, chi, delta } => {
            cmd_rom(&config, &basis, &out, snapshots.as_deref(), r, chi, delta)
        }
        Command::Sweep { config, out, snapshots, basis } => {
            cmd_sweep(&config, &out, snapshots.as_deref(), basis.as_deref())
        }
        Command::Report { csv, config, metric, tolerance, anchors } => {
            cmd_report(&csv, config.as_deref(), metric.as_deref(), tolerance, anchors)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError { stage, err }) => {
            eprintln!("error stage={stage} kind={} message={:?}", err.kind(), err.to_string());
            let code = match err {
                ref e if e.is_config() => 2,
                Error::Io(_) | Error::Codec(_) => 1,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, StageError> {
    RunConfig::load(path).stage("config")
}

fn cmd_fom(config: &Path, out: &Path) -> CliResult {
    let cfg = load_config(config)?;
    let snaps = run_fom(&cfg.fom_config()).stage("fom")?;
    write_bytes(out, &encode_snapshots(&snaps).stage("io")?).stage("io")?;
    println!("snapshots={} grid={}x{} config_hash={}", snaps.len(), snaps.grid.nx, snaps.grid.ny, cfg.fom_config().hash());
    Ok(())
}

fn print_tails(basis: &PodBasis) -> CliResult {
    let t = basis.tails().stage("pod")?;
    println!("r,lambda_l2_tail,lambda_h10_tail,s_r_norm");
    for r in 0..=basis.rank() {
        println!("{r},{:.16e},{:.16e},{:.16e}", t.l2[r], t.h10[r], t.s_norm_at(r));
    }
    Ok(())
}

fn cmd_pod(snapshots: &Path, out: &Path, rank: Option<usize>, config: Option<&Path>) -> CliResult {
    let rank = match (rank, config) {
        (Some(r), _) => r,
        (None, Some(c)) => load_config(c)?.pod.rank,
        (None, None) => return Err(StageError { stage: "config", err: Error::Config("pass --rank or --config".into()) }),
    };
    let snaps = read_snapshots(snapshots).stage("io")?;
    let basis = compute_pod(&snaps, rank).stage("pod")?;
    write_bytes(out, &encode_basis(&basis).stage("io")?).stage("io")?;
    print_tails(&basis)
}

fn initial_coefficients(
    cfg: &RunConfig,
    basis: &PodBasis,
    snaps: Option<&SnapshotSet>,
    r: usize,
) -> Result<Vec<f64>, StageError> {
    match cfg.rom.initial {
        InitialKind::Zero => Ok(vec![0.0; r]),
        InitialKind::Projection => {
            let s = snaps.ok_or_else(|| StageError {
                stage: "config",
                err: Error::Config("a projected initial condition needs --snapshots".into()),
            })?;
            basis.project(&s.fields[0], r).stage("rom")
        }
    }
}

fn cmd_rom(
    config: &Path,
    basis: &Path,
    out: &Path,
    snapshots: Option<&Path>,
    r: Option<usize>,
    chi: Option<f64>,
    delta: Option<f64>,
) -> CliResult {
    let cfg = load_config(config)?;
    let basis = read_basis(basis).stage("io")?;
    let snaps = snapshots.map(read_snapshots).transpose().stage("io")?;
    let mut params = cfg.rom_params().stage("config")?;
    params.r = r.unwrap_or(params.r);
    params.chi = chi.unwrap_or(params.chi);
    params.delta = delta.unwrap_or(params.delta);
    let ops = assemble_operators(&basis, params.r, params.nu, params.form).stage("rom")?;
    let filter = build_filter(&ops, params.delta).stage("rom")?;
    let a0 = initial_coefficients(&cfg, &basis, snaps.as_ref(), params.r)?;
    let traj = run_rom(&a0, &params, &ops, &filter).stage("rom")?;
    write_bytes(out, &encode_trajectory(&traj).stage("io")?).stage("io")?;
    println!("rows={} r={} diverged={}", traj.len(), traj.r, traj.diverged);
    if params.scheme == Scheme::ImplicitBe && params.form == ConvectionForm::Skew && basis.lift.is_zero() {
        let u0 = traj.diagnostics[0].energy.sqrt();
        let rep = stability_check(&traj, &params, u0, 0.0).stage("rom")?;
        println!(
            "stability all_ok={} accumulated_ok={} bound={:.16e} min_relative_slack={:.3e}",
            rep.all_ok(),
            rep.accumulated_ok,
            rep.bound,
            rep.min_relative_slack()
        );
    } else {
        println!("stability skipped: the energy inequality needs implicit_be, skew convection and a zero lift");
    }
    Ok(())
}

fn cmd_sweep(config: &Path, out: &Path, snapshots: Option<&Path>, basis: Option<&Path>) -> CliResult {
    let cfg = load_config(config)?;
    let snaps = match snapshots {
        Some(p) => read_snapshots(p).stage("io")?,
        None => run_fom(&cfg.fom_config()).stage("fom")?,
    };
    let basis = match basis {
        Some(p) => read_basis(p).stage("io")?,
        None => compute_pod(&snaps, cfg.pod.rank).stage("pod")?,
    };
    let spec = cfg.sweep_spec().stage("config")?;
    let template = cfg.rom_params().stage("config")?;
    let tails = basis.tails().stage("pod")?;
    let rmax = spec.rs.iter().copied().max().unwrap_or(0);
    let ops = assemble_operators(&basis, rmax, template.nu, template.form).stage("sweep")?;
    let reference = ReferenceProjection::new(&snaps, &basis, cfg.r_ref()).stage("sweep")?;
    let initial = initial_coefficients(&cfg, &basis, Some(&snaps), rmax)?;
    let setup = SweepSetup {
        ops: &ops,
        reference: &reference,
        tails: &tails,
        template,
        initial,
        record_wall_time: cfg.sweep.timing,
    };
    let records = trrom::study::run_sweep(&spec, &setup).stage("sweep")?;
    let failed = records.iter().filter(|x| x.status != RunStatus::Ok).count();
    std::fs::write(out, records_to_csv(&records).stage("io")?).map_err(Error::from).stage("io")?;
    println!("records={} failed={failed}", records.len());
    Ok(())
}

fn parse_metric(s: &str) -> Result<Metric, StageError> {
    match s {
        "l2" => Ok(Metric::L2),
        "h10" => Ok(Metric::H10),
        "avg_h10" => Ok(Metric::AvgH10),
        _ => Err(StageError { stage: "config", err: Error::Config(format!("unknown metric {s:?}")) }),
    }
}

fn cmd_report(
    csv: &Path,
    config: Option<&Path>,
    metric: Option<&str>,
    tolerance: Option<f64>,
    anchors: Option<Vec<f64>>,
) -> CliResult {
    let cfg = config.map(load_config).transpose()?;
    let text = std::fs::read_to_string(csv).map_err(Error::from).stage("io")?;
    let records = parse_records(&text).stage("io")?;
    let metric = match (metric, &cfg) {
        (Some(m), _) => parse_metric(m)?,
        (None, Some(c)) => c.study.metric.into(),
        (None, None) => Metric::H10,
    };
    let tol = tolerance.or(cfg.as_ref().map(|c| c.study.tolerance)).unwrap_or(0.05);
    let anchors = anchors.or(cfg.as_ref().map(|c| c.study.anchors.clone())).unwrap_or_default();

    report_rates(&records);
    let table = report_chi_effective(&records, metric, tol);
    report_regimes(&table);
    report_extrapolation(&records, &table, &anchors);
    if let Some(c) = &cfg {
        report_terms(&records, c);
    }
    Ok(())
}

fn ok_records(records: &[StudyRecord]) -> impl Iterator<Item = &StudyRecord> {
    records.iter().filter(|x| x.status == RunStatus::Ok)
}

/// Key that orders f64 values for grouping.
fn key(x: f64) -> u64 {
    x.to_bits()
}

fn report_rates(records: &[StudyRecord]) {
    let mut groups: BTreeMap<(u64, u64), Vec<&StudyRecord>> = BTreeMap::new();
    for x in ok_records(records) {
        groups.entry((key(x.delta), key(x.chi))).or_default().push(x);
    }
    for recs in groups.values() {
        let (delta, chi) = (recs[0].delta, recs[0].chi);
        let cols = |f: fn(&StudyRecord) -> f64| recs.iter().map(|x| f(x)).collect::<Vec<_>>();
        let l2 = fit_rate(&cols(|x| x.lambda_l2), &cols(|x| x.eps_l2));
        let h10 = fit_rate(&cols(|x| x.lambda_h10), &cols(|x| x.eps_h10));
        if let (Ok(l2), Ok(h10)) = (l2, h10) {
            println!(
                "rate delta={delta} chi={chi} points={} l2_slope={:.4} l2_r2={:.4} h10_slope={:.4} h10_r2={:.4}",
                recs.len(),
                l2.slope,
                l2.r2,
                h10.slope,
                h10.r2
            );
        }
    }
}

fn report_chi_effective(records: &[StudyRecord], metric: Metric, tol: f64) -> Vec<trrom::study::ChiEffective> {
    let mut out = Vec::new();
    for e in chi_effective_table(records, metric, tol) {
        match e {
            Ok(e) => {
                println!(
                    "chi_eff r={} delta={} chi_opt={} metric_opt={:.6e} chi_eff={} excluded={}",
                    e.r, e.delta, e.chi_optimal, e.metric_optimal, e.chi_eff, e.excluded
                );
                out.push(e);
            }
            Err(err) => println!("chi_eff skipped: {err}"),
        }
    }
    out
}

fn report_regimes(table: &[trrom::study::ChiEffective]) {
    let mut by_r: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for e in table.iter().filter(|e| e.delta > 0.0) {
        let v = by_r.entry(e.r).or_default();
        v.0.push(e.delta);
        v.1.push(e.chi_eff);
    }
    for (r, (d, c)) in &by_r {
        if let Ok(p) = fit_piecewise(d, c) {
            println!(
                "regime r={r} segments=2 breakpoint={:.6e} left_slope={:.4} right_slope={:.4}",
                p.breakpoint, p.left.slope, p.right.slope
            );
        }
        if let Ok(s) = fit_segments(d, c, 3) {
            let slopes: Vec<String> = s.fits.iter().map(|f| format!("{:.4}", f.slope)).collect();
            let bps: Vec<String> = s.breakpoints.iter().map(|b| format!("{b:.6e}")).collect();
            println!("regime r={r} segments=3 breakpoints={} slopes={}", bps.join(";"), slopes.join(";"));
        }
    }
}

fn report_extrapolation(records: &[StudyRecord], table: &[trrom::study::ChiEffective], anchors: &[f64]) {
    if anchors.is_empty() {
        return;
    }
    let mut rs: Vec<usize> = table.iter().map(|e| e.r).collect();
    rs.dedup();
    for r in rs {
        let Some(rec) = ok_records(records).find(|x| x.r == r) else { continue };
        // C_{s,r} only rescales χ_theory uniformly in δ, so it cancels in the prediction.
        let theory = |delta: f64| chi_theory_simplified(&ChiInputs::tails_only(rec.lambda_l2, rec.lambda_h10, delta, 1.0));
        let rows: Vec<&trrom::study::ChiEffective> = table.iter().filter(|e| e.r == r).collect();
        let mut anchor_pts = Vec::new();
        for &a in anchors {
            match rows.iter().find(|e| (e.delta - a).abs() <= 1e-12 * a.max(1.0)) {
                Some(e) => match theory(e.delta) {
                    Ok(t) => anchor_pts.push(Anchor { at: e.delta, chi_eff: e.chi_eff, chi_theory: t }),
                    Err(err) => println!("extrapolate r={r} anchor {a} skipped: {err}"),
                },
                None => println!("extrapolate r={r} anchor {a} not in the sweep"),
            }
        }
        for e in &rows {
            let Ok(t) = theory(e.delta) else { continue };
            if let Ok(p) = extrapolate_chi(&anchor_pts, &[t]) {
                println!(
                    "extrapolate r={r} delta={} chi_theory={:.6e} chi_pred={:.6e} chi_eff={} factor={:.4}",
                    e.delta,
                    t,
                    p[0],
                    e.chi_eff,
                    (p[0] / e.chi_eff).max(e.chi_eff / p[0])
                );
            }
        }
    }
}

fn report_terms(records: &[StudyRecord], cfg: &RunConfig) {
    println!("terms r,{}", TermTable::HEADERS.join(","));
    let mut seen = Vec::new();
    for x in ok_records(records) {
        if seen.contains(&x.r) {
            continue;
        }
        seen.push(x.r);
        let inp = ChiInputs {
            nu: cfg.fom.nu,
            dt: cfg.rom_dt(),
            n: cfg.study.n,
            k: cfg.study.k,
            s: cfg.study.s,
            delta: cfg.rom.delta,
            lambda_l2: x.lambda_l2,
            lambda_h10: x.lambda_h10,
            s_norm: x.s_norm,
            c_sr: 1.0,
        };
        let vals: Vec<String> = term_magnitudes(&inp, cfg.study.chi).values().iter().map(|v| format!("{v:.2e}")).collect();
        println!("terms {},{}", x.r, vals.join(","));
    }
}
