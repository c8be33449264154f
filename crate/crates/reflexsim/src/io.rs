//! CSV formats: trial records, angle-torque curves and protocol summaries.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use reflexsim_core::analysis::Profile;
use reflexsim_core::engine::TrialRecord;

use crate::error::{csv_err, io_err, AppError, Result};
use crate::protocol::SummaryRow;

const TRIAL_FIXED: [&str; 4] = ["t_s", "theta_rad", "theta_dot_rps", "torque_robot_Nm"];
const MUSCLE_COLUMNS: [&str; 5] = ["l_m", "v_mps", "f_N", "E", "a"];
pub const CURVE_HEADER: [&str; 2] = ["theta_deg", "torque_Nm"];
pub const SUMMARY_HEADER: [&str; 13] = [
    "model",
    "G_l",
    "G_v",
    "G_f",
    "lambda_l",
    "lambda_v",
    "lambda_f",
    "velocity_dps",
    "catch_angle_deg",
    "peak_torque_Nm",
    "reflex_stiffness",
    "saturated",
    "diverged",
];

fn open(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map_err(io_err(path))
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(open(path)?))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(io_err(path))
}

pub fn trial_header(rec: &TrialRecord) -> Vec<String> {
    let mut h: Vec<String> = TRIAL_FIXED.iter().map(|s| s.to_string()).collect();
    for m in &rec.muscles {
        for c in MUSCLE_COLUMNS {
            h.push(format!("{}_{c}", m.id.tag()));
        }
    }
    h
}

pub fn write_trial_to<W: Write>(rec: &TrialRecord, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trial_header(rec))?;
    let mut row: Vec<String> = Vec::with_capacity(4 + 5 * rec.muscles.len());
    for k in 0..rec.len() {
        row.clear();
        for v in [rec.t[k], rec.theta[k], rec.theta_dot[k], rec.torque_robot[k]] {
            row.push(v.to_string());
        }
        for m in &rec.muscles {
            for v in [m.l[k], m.v[k], m.f[k], m.e[k], m.a[k]] {
                row.push(v.to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trial(rec: &TrialRecord, path: &Path) -> Result<()> {
    write_trial_to(rec, std::io::BufWriter::new(open(path)?)).map_err(csv_err(path))
}

/// A numeric CSV table read back for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| AppError::Format {
                path: path.into(),
                msg: format!("row {}: {e}", i + 2),
            })?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Writes a `theta_deg,torque_Nm` curve.
pub fn write_profile(p: &Profile, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(CURVE_HEADER).map_err(csv_err(path))?;
    for (th, t) in p.theta.iter().zip(&p.torque) {
        w.write_record([th.to_degrees().to_string(), t.to_string()])
            .map_err(csv_err(path))?;
    }
    finish(w, path)
}

/// Reads a two-column reference curve (degrees, N m) with a one-line header.
pub fn read_profile(path: &Path) -> Result<Profile> {
    let t = read_table(path)?;
    if t.header.len() != 2 {
        return Err(AppError::Format {
            path: path.into(),
            msg: format!("expected 2 columns, found {}", t.header.len()),
        });
    }
    if t.rows.is_empty() {
        return Err(AppError::Format {
            path: path.into(),
            msg: "no data rows".into(),
        });
    }
    let theta = t.rows.iter().map(|r| r[0].to_radians()).collect();
    let torque = t.rows.iter().map(|r| r[1]).collect();
    Profile::new(theta, torque).map_err(|e| AppError::Format {
        path: path.into(),
        msg: e.to_string(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(path))?;
    for r in rows {
        let p = r.params.vector();
        let mut rec: Vec<String> = vec![r.model.clone()];
        rec.extend(p.iter().map(|x| x.to_string()));
        rec.push(r.velocity_dps.to_string());
        rec.push(opt(r.metrics.catch_angle));
        rec.push(r.metrics.peak_torque.to_string());
        rec.push(opt(r.metrics.reflex_stiffness));
        rec.push(r.metrics.saturated.to_string());
        rec.push(r.metrics.diverged.to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    finish(w, path)
}

/// One summary line as read back: the parameter columns plus the metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub model: String,
    pub params: [f64; 6],
    pub velocity_dps: f64,
    pub catch_angle_deg: Option<f64>,
    pub peak_torque: f64,
    pub reflex_stiffness: Option<f64>,
    pub saturated: bool,
    pub diverged: bool,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryLine>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    if header != SUMMARY_HEADER {
        return Err(AppError::Format {
            path: path.into(),
            msg: "not a summary file".into(),
        });
    }
    let bad = |line: usize, what: &str| AppError::Format {
        path: path.into(),
        msg: format!("row {line}: bad {what}"),
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = i + 2;
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(line, SUMMARY_HEADER[k]));
        let opt_num = |k: usize| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        let flag = |k: usize| rec[k].parse::<bool>().map_err(|_| bad(line, SUMMARY_HEADER[k]));
        out.push(SummaryLine {
            model: rec[0].to_string(),
            params: [num(1)?, num(2)?, num(3)?, num(4)?, num(5)?, num(6)?],
            velocity_dps: num(7)?,
            catch_angle_deg: opt_num(8)?,
            peak_torque: num(9)?,
            reflex_stiffness: opt_num(10)?,
            saturated: flag(11)?,
            diverged: flag(12)?,
        });
    }
    Ok(out)
}
