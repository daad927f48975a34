//! Sweep results as CSV, one row per `(r, δ, χ)` point.

use crate::error::{Error, Result};
use crate::study::{record_order, RunStatus, StudyRecord};
use crate::tr_rom::Scheme;

pub const HEADER: [&str; 12] = [
    "r",
    "delta",
    "chi",
    "eps_l2",
    "eps_h10",
    "eps_avg_h10",
    "lambda_l2_tail",
    "lambda_h10_tail",
    "s_r_norm",
    "scheme",
    "status",
    "wall_time_s",
];

/// 17 significant digits, enough to round-trip any f64.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::ImplicitBe => "implicit_be",
        Scheme::SemiImplicit => "semi_implicit",
    }
}

pub fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "implicit_be" => Ok(Scheme::ImplicitBe),
        "semi_implicit" => Ok(Scheme::SemiImplicit),
        _ => Err(Error::Codec(format!("unknown scheme {s:?}"))),
    }
}

/// Renders records sorted by `(r, δ, χ)`.
pub fn records_to_csv(records: &[StudyRecord]) -> Result<String> {
    let mut sorted = records.to_vec();
    sorted.sort_by(record_order);
    let mut w = csv::Writer::from_writer(Vec::new());
    let codec = |e: csv::Error| Error::Codec(e.to_string());
    w.write_record(HEADER).map_err(codec)?;
    for x in &sorted {
        w.write_record([
            x.r.to_string(),
            fmt(x.delta),
            fmt(x.chi),
            fmt(x.eps_l2),
            fmt(x.eps_h10),
            fmt(x.eps_avg_h10),
            fmt(x.lambda_l2),
            fmt(x.lambda_h10),
            fmt(x.s_norm),
            scheme_name(x.scheme).to_string(),
            x.status.as_str().to_string(),
            fmt(x.wall_time),
        ])
        .map_err(codec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Codec(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Codec(e.to_string()))
}

pub fn parse_records(text: &str) -> Result<Vec<StudyRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let codec = |e: csv::Error| Error::Codec(e.to_string());
    let headers = rd.headers().map_err(codec)?.clone();
    if headers.iter().ne(HEADER) {
        return Err(Error::Codec(format!("unexpected CSV header: {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(codec)?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| Error::Codec(format!("row {}: bad number {:?} in {}", line + 1, &row[i], HEADER[i])))
        };
        out.push(StudyRecord {
            r: row[0].parse().map_err(|_| Error::Codec(format!("row {}: bad r {:?}", line + 1, &row[0])))?,
            delta: num(1)?,
            chi: num(2)?,
            eps_l2: num(3)?,
            eps_h10: num(4)?,
            eps_avg_h10: num(5)?,
            lambda_l2: num(6)?,
            lambda_h10: num(7)?,
            s_norm: num(8)?,
            scheme: parse_scheme(&row[9])?,
            status: RunStatus::parse(&row[10])?,
            wall_time: num(11)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(r: usize, delta: f64, chi: f64) -> StudyRecord {
        StudyRecord {
            r,
            delta,
            chi,
            eps_l2: 0.1 + chi,
            eps_h10: 1.0 / 3.0,
            eps_avg_h10: 2e-300,
            lambda_l2: 1e-5,
            lambda_h10: std::f64::consts::PI,
            s_norm: 12.5,
            scheme: Scheme::SemiImplicit,
            status: RunStatus::Ok,
            wall_time: 0.0,
        }
    }

    #[test]
    fn one_record_gives_two_lines() {
        let s = records_to_csv(&[rec(2, 0.1, 0.2)]).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert_eq!(s.lines().next().unwrap(), HEADER.join(","));
    }

    #[test]
    fn rows_are_sorted() {
        let rs = [rec(4, 0.1, 0.5), rec(2, 0.3, 0.1), rec(2, 0.1, 0.7), rec(2, 0.1, 0.2)];
        let back = parse_records(&records_to_csv(&rs).unwrap()).unwrap();
        let keys: Vec<(usize, f64, f64)> = back.iter().map(|x| (x.r, x.delta, x.chi)).collect();
        assert_eq!(keys, vec![(2, 0.1, 0.2), (2, 0.1, 0.7), (2, 0.3, 0.1), (4, 0.1, 0.5)]);
    }

    #[test]
    fn failed_rows_keep_nan() {
        let mut x = rec(3, 0.1, 0.1);
        x.status = RunStatus::Diverged;
        x.eps_l2 = f64::NAN;
        let back = parse_records(&records_to_csv(&[x]).unwrap()).unwrap();
        assert!(back[0].eps_l2.is_nan());
        assert_eq!(back[0].status, RunStatus::Diverged);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_records("r,delta\n1,2\n").is_err());
    }
}
