//! CSV output.
//!
//! Each trial produces two files:
//!
//! * `trial_NNNN.csv` with `t,x1_istar,alpha_ci_istar,x2_istar,v_applied,
//!   w_applied,B,margin`, values at 9 significant digits;
//! * `trial_NNNN_audit.csv` with the barrier terms needed to re-check the
//!   generator inequality, at full round-trip precision.
//!
//! A campaign also writes `summary.csv` with one line per trial.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::campaign::Campaign;
use super::trial::{Outcome, TrialRecord};

pub const RECORD_HEADER: &str = "t,x1_istar,alpha_ci_istar,x2_istar,v_applied,w_applied,B,margin";
pub const AUDIT_HEADER: &str = "t,v_applied,w_applied,lgb_v,lgb_w,ito,gamma_b";
pub const SUMMARY_HEADER: &str =
    "trial,seed,outcome,breach_t,min_margin,b_max,chatter,max_generator_excess,steps,clamped,error";

/// Absolute slack of the generator audit.
pub const GENERATOR_TOLERANCE: f64 = 1e-9;

/// Formats `x` with `digits` significant digits, like C's `%.{digits}g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sig9(x: f64) -> String {
    format_significant(x, 9)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    out.write_all(header.as_bytes()).map_err(io)?;
    out.write_all(b"\n").map_err(io)?;
    for line in lines {
        out.write_all(line.as_bytes()).map_err(io)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn export_csv(record: &TrialRecord, path: &Path) -> Result<()> {
    let lines = record.rows.iter().map(|r| {
        [
            r.t,
            r.x1_istar,
            r.alpha_ci_istar,
            r.x2_istar,
            r.v_applied,
            r.w_applied,
            r.b,
            r.margin,
        ]
        .map(sig9)
        .join(",")
    });
    write_lines(path, RECORD_HEADER, lines)
}

pub fn export_audit_csv(record: &TrialRecord, path: &Path) -> Result<()> {
    let lines = record.rows.iter().map(|r| {
        [
            r.t,
            r.v_applied,
            r.w_applied,
            r.lgb[0],
            r.lgb[1],
            r.ito,
            r.gamma_b,
        ]
        .map(|x| format!("{x:?}"))
        .join(",")
    });
    write_lines(path, AUDIT_HEADER, lines)
}

pub fn record_path(dir: &Path, trial: u64) -> PathBuf {
    dir.join(format!("trial_{trial:04}.csv"))
}

/// Sidecar audit file next to a record file.
pub fn audit_path(record: &Path) -> PathBuf {
    let stem = record
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    record.with_file_name(format!("{stem}_audit.csv"))
}

/// Writes every trial and the summary into `dir`, creating it if needed.
pub fn write_campaign(campaign: &Campaign, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for record in campaign.results.iter().flatten() {
        let path = record_path(dir, record.trial_index);
        export_csv(record, &path)?;
        export_audit_csv(record, &audit_path(&path))?;
    }
    let lines = campaign.results.iter().enumerate().map(|(i, result)| {
        let seed = campaign.summary.seeds.get(i).copied().unwrap_or_default();
        match result {
            Ok(r) => {
                let (outcome, breach_t) = match r.outcome {
                    Outcome::Safe => ("safe", String::new()),
                    Outcome::Breached { t } => ("breached", sig9(t)),
                };
                format!(
                    "{i},{seed},{outcome},{breach_t},{},{},{},{},{},{},",
                    sig9(r.min_margin()),
                    sig9(r.b_max()),
                    sig9(r.chatter),
                    sig9(r.max_generator_excess),
                    r.steps,
                    r.clamped
                )
            }
            Err(e) => format!(
                "{i},{seed},error,,,,,,,,\"{}\"",
                e.to_string().replace('"', "'")
            ),
        }
    });
    write_lines(&dir.join("summary.csv"), SUMMARY_HEADER, lines)
}

/// A parsed row of a record file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub x1_istar: f64,
    pub alpha_ci_istar: f64,
    pub x2_istar: f64,
    pub v_applied: f64,
    pub w_applied: f64,
    pub b: f64,
    pub margin: f64,
}

fn read_numeric(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let found = reader
        .headers()
        .map_err(|e| Error::format(path, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(Error::format(path, format!("unexpected header `{found}`")));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let values = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("row {}: {e}", line + 1)))?;
        rows.push(values);
    }
    Ok(rows)
}

pub fn read_record_csv(path: &Path) -> Result<Vec<RecordRow>> {
    Ok(read_numeric(path, RECORD_HEADER)?
        .into_iter()
        .map(|v| RecordRow {
            t: v[0],
            x1_istar: v[1],
            alpha_ci_istar: v[2],
            x2_istar: v[3],
            v_applied: v[4],
            w_applied: v[5],
            b: v[6],
            margin: v[7],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rows_checked: usize,
    /// Times at which `generator > gamma B + tolerance`.
    pub violations: Vec<f64>,
    pub max_excess: f64,
    /// Rows whose applied input disagrees with the record file.
    pub mismatched: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.mismatched == 0
    }
}

fn close_to_9_digits(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-8 * a.abs().max(b.abs()) || (a.is_nan() && b.is_nan())
}

/// Re-checks `L_g B (u_o + u) + L_sigma^I B <= gamma B` on every audited
/// row of an exported trial, recomputing the generator from its terms.
/// Breach rows carry no barrier terms and are skipped.
pub fn audit_record(record_csv: &Path) -> Result<AuditReport> {
    let record = read_record_csv(record_csv)?;
    let sidecar = audit_path(record_csv);
    let audit = read_numeric(&sidecar, AUDIT_HEADER)?;
    if audit.len() != record.len() {
        return Err(Error::format(
            &sidecar,
            format!(
                "{} audit rows for {} record rows",
                audit.len(),
                record.len()
            ),
        ));
    }
    let mut report = AuditReport {
        rows_checked: 0,
        violations: Vec::new(),
        max_excess: f64::NEG_INFINITY,
        mismatched: 0,
    };
    for (r, a) in record.iter().zip(&audit) {
        let (t, v, w, lgb_v, lgb_w, ito, gamma_b) = (a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
        if !(close_to_9_digits(r.t, t)
            && close_to_9_digits(r.v_applied, v)
            && close_to_9_digits(r.w_applied, w))
        {
            report.mismatched += 1;
        }
        if gamma_b.is_nan() {
            continue;
        }
        report.rows_checked += 1;
        let excess = lgb_v * v + lgb_w * w + ito - gamma_b;
        report.max_excess = report.max_excess.max(excess);
        if excess > GENERATOR_TOLERANCE {
            report.violations.push(t);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.0, 9), "0");
        assert_eq!(format_significant(0.4, 9), "0.4");
        assert_eq!(format_significant(30.0, 9), "30");
        assert_eq!(format_significant(0.1 + 0.2, 9), "0.3");
        assert_eq!(format_significant(std::f64::consts::PI, 9), "3.14159265");
        assert_eq!(
            format_significant(-0.000_123_456_789_123, 9),
            "-0.000123456789"
        );
        assert_eq!(format_significant(1.234_567_891_23e-7, 9), "1.23456789e-7");
        assert_eq!(format_significant(123_456_789_012.0, 9), "1.23456789e11");
        assert_eq!(format_significant(999_999_999.6, 9), "1e9");
        assert_eq!(format_significant(f64::NAN, 9), "NaN");
        assert_eq!(format_significant(f64::NEG_INFINITY, 9), "-inf");
    }

    #[test]
    fn audit_path_is_sibling() {
        assert_eq!(
            audit_path(Path::new("/tmp/out/trial_0003.csv")),
            PathBuf::from("/tmp/out/trial_0003_audit.csv")
        );
    }
}
