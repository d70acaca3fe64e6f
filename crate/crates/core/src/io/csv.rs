//! Time-series CSV files.
//!
//! Floats are written in Rust's shortest round-trip exponent form, so a
//! parsed file reproduces the written values bit for bit and the output
//! does not depend on the locale.

use std::io::{Read, Write};

use crate::diagnostics::StepReport;
use crate::error::{Error, Result};
use crate::point::PointRow;

/// Column order of the step time series.
pub const TIMESERIES_COLUMNS: [&str; 17] = [
    "t",
    "free_energy",
    "entropy",
    "internal_energy",
    "dissipation",
    "entropy_production",
    "energy_residual",
    "entropy_residual",
    "theta_min",
    "theta_max",
    "phi",
    "monitor",
    "picard_iters",
    "dt",
    "external_power",
    "momentum_residual",
    "flow_residual",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn float(x: f64) -> String {
    format!("{x:e}")
}

fn parse_float(s: &str, line: u64, column: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: column {column}: '{s}' is not a number")))
}

pub fn write_timeseries<W: Write>(reports: &[StepReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMESERIES_COLUMNS).map_err(csv_err)?;
    for r in reports {
        let values = [
            r.t,
            r.free_energy,
            r.entropy,
            r.internal_energy,
            r.dissipation,
            r.entropy_production,
            r.energy_residual,
            r.entropy_residual,
            r.theta_min,
            r.theta_max,
            r.phi,
            r.monitor,
        ];
        let mut row: Vec<String> = values.iter().map(|&x| float(x)).collect();
        row.push(r.picard_iters.to_string());
        row.extend([r.dt, r.external_power, r.momentum_residual, r.flow_residual].map(float));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_timeseries`]. The Picard traces are not
/// part of the file and come back empty.
pub fn read_timeseries<R: Read>(input: R) -> Result<Vec<StepReport>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TIMESERIES_COLUMNS.iter().copied()) {
        return Err(Error::Config("unexpected time-series header".into()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |k: usize| parse_float(&rec[k], line, TIMESERIES_COLUMNS[k]);
        let picard_iters = rec[12]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("line {line}: picard_iters '{}' is not an integer", &rec[12])))?;
        out.push(StepReport {
            t: f(0)?,
            free_energy: f(1)?,
            entropy: f(2)?,
            internal_energy: f(3)?,
            dissipation: f(4)?,
            entropy_production: f(5)?,
            energy_residual: f(6)?,
            entropy_residual: f(7)?,
            theta_min: f(8)?,
            theta_max: f(9)?,
            phi: f(10)?,
            monitor: f(11)?,
            picard_iters,
            dt: f(13)?,
            external_power: f(14)?,
            momentum_residual: f(15)?,
            flow_residual: f(16)?,
            picard_trace: Vec::new(),
        });
    }
    Ok(out)
}

/// Header of the point-driver file for `m` internal variables.
pub fn point_columns(m: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "strain", "stress", "theta"].map(String::from).to_vec();
    cols.extend((0..m).map(|k| format!("z{k}")));
    cols
}

pub fn write_point_rows<W: Write>(rows: &[PointRow], m: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(point_columns(m)).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![float(r.t), float(r.strain), float(r.stress), float(r.theta)];
        row.extend(r.z.iter().map(|&x| float(x)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_point_rows<R: Read>(input: R) -> Result<Vec<PointRow>> {
    let mut r = csv::Reader::from_reader(input);
    let m = r.headers().map_err(csv_err)?.len().saturating_sub(4);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let v = rec
            .iter()
            .map(|s| parse_float(s, line, "point row"))
            .collect::<Result<Vec<f64>>>()?;
        out.push(PointRow {
            t: v[0],
            strain: v[1],
            stress: v[2],
            theta: v[3],
            z: nalgebra::DVector::from_column_slice(&v[4..4 + m]),
        });
    }
    Ok(out)
}
