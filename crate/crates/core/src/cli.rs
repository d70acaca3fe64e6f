//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid scenario, 2 solver abort, 3 diagnostic
//! violation, 64 usage error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::coupling::{self, CouplingMode, Driver};
use crate::diagnostics::StepReport;
use crate::error::Error;
use crate::io::config::{load_scenario, FieldOutput, Scenario};
use crate::io::{csv, vtk};
use crate::point;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "thermogsm", version, about = "Thermomechanically coupled generalized standard materials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    StaggeredOnce,
    Picard,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// Step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario (preset name or TOML file).
    Run {
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        picard_tol: Option<f64>,
    },
    /// Validate a scenario without running it.
    Check { scenario: String },
    /// Run a material-point scenario and write its stress-strain trace.
    PointDriver {
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate the advisory global-existence condition on beta.
    Indicator {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        c_hat: f64,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        q: f64,
        /// Growth constant of dH2; enables the gradient-regularized branch.
        #[arg(long)]
        c_z: Option<f64>,
        /// Exponential-growth constant of that branch.
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn cli_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Check { scenario } => check(&scenario),
        Command::Run {
            scenario,
            overrides,
            mode,
            picard_tol,
        } => run(&scenario, &overrides, mode, picard_tol),
        Command::PointDriver { scenario, overrides } => point_driver(&scenario, &overrides),
        Command::Indicator {
            beta,
            c_hat,
            t_end,
            q,
            c_z,
            c0,
        } => indicator(beta, c_hat, t_end, q, c_z, c0),
    }
}

fn load(name: &str) -> Result<Scenario, i32> {
    load_scenario(name).map_err(|e| {
        eprintln!("{e}");
        EXIT_INVALID
    })
}

fn check(name: &str) -> i32 {
    match load(name) {
        Ok(s) => {
            println!(
                "{}: ok ({} nodes, {} material points)",
                s.config.name,
                s.problem.mesh.nodes.len(),
                s.problem.ops.n_points()
            );
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn apply(s: &mut Scenario, o: &Overrides) -> Result<(), i32> {
    if let Some(dt) = o.dt {
        s.coupling.dt = dt;
        s.coupling.dt_min = s.coupling.dt_min.min(dt);
    }
    if let Some(t) = o.t_end {
        s.coupling.t_end = t;
    }
    s.coupling.validate().map_err(|e| {
        eprintln!("{e}");
        EXIT_INVALID
    })
}

fn io_fail(e: impl std::fmt::Display) -> i32 {
    eprintln!("output error: {e}");
    EXIT_ABORT
}

fn create(dir: &Path, file: &str) -> Result<BufWriter<File>, i32> {
    fs::create_dir_all(dir).map_err(io_fail)?;
    File::create(dir.join(file)).map(BufWriter::new).map_err(io_fail)
}

fn summary(s: &Scenario, reports: &[StepReport], violations: &[String], status: &str, error: Option<&Error>) -> serde_json::Value {
    let max = |f: fn(&StepReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let last = reports.last();
    let indicator = s.config.diagnostics.indicator.as_ref().and_then(|ind| {
        coupling::global_existence_indicator(s.problem.material.tensors.beta, ind.c_hat, s.coupling.t_end, ind.q)
            .ok()
            .map(|r| json!({"threshold": r.threshold, "flag": r.flag, "note": r.describe()}))
    });
    json!({
        "scenario": s.config.name,
        "status": status,
        "error": error.map(|e| e.to_string()),
        "steps": reports.len(),
        "t_final": last.map_or(0.0, |r| r.t),
        "theta_min": reports.iter().map(|r| r.theta_min).fold(f64::INFINITY, f64::min),
        "theta_max": reports.iter().map(|r| r.theta_max).fold(f64::NEG_INFINITY, f64::max),
        "phi_final": last.map_or(1.0, |r| r.phi),
        "max_energy_residual": max(|r| r.energy_residual),
        "max_picard_iters": reports.iter().map(|r| r.picard_iters).max().unwrap_or(0),
        "total_dissipation": reports.iter().map(|r| r.dissipation).sum::<f64>(),
        "max_monitor": max(|r| r.monitor),
        "violations": violations,
        "indicator": indicator,
    })
}

fn run(name: &str, o: &Overrides, mode: Option<Mode>, picard_tol: Option<f64>) -> i32 {
    let mut s = match load(name) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(m) = mode {
        s.coupling.mode = match m {
            Mode::StaggeredOnce => CouplingMode::StaggeredOnce,
            Mode::Picard => CouplingMode::PicardToConvergence,
        };
    }
    if let Some(tol) = picard_tol {
        s.coupling.picard_tol = tol;
    }
    if let Err(code) = apply(&mut s, o) {
        return code;
    }
    let mut driver = match Driver::new(&s.problem, s.initial.clone(), s.coupling.clone()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    };
    let outcome = driver.run();
    let out = &o.out_dir;
    let result = (|| -> Result<(), i32> {
        if s.config.output.timeseries {
            let mut w = create(out, "timeseries.csv")?;
            csv::write_timeseries(&driver.reports, &mut w).map_err(io_fail)?;
            w.flush().map_err(io_fail)?;
        }
        match s.config.output.fields {
            FieldOutput::None => {}
            FieldOutput::Final => {
                let w = create(out, "fields_final.vtk")?;
                vtk::write_fields(&s.problem, driver.current(), w).map_err(io_fail)?;
            }
            FieldOutput::All => {
                for (k, st) in driver.states.iter().enumerate() {
                    let w = create(out, &format!("fields_{k:05}.vtk"))?;
                    vtk::write_fields(&s.problem, st, w).map_err(io_fail)?;
                }
            }
        }
        Ok(())
    })();
    let status = match (&outcome, driver.violations.is_empty()) {
        (Err(_), _) => "aborted",
        (Ok(()), true) => "completed",
        (Ok(()), false) => "violations",
    };
    if s.config.output.summary {
        let v = summary(&s, &driver.reports, &driver.violations, status, outcome.as_ref().err());
        let written = create(out, "summary.json").and_then(|mut w| {
            serde_json::to_writer_pretty(&mut w, &v).map_err(io_fail)?;
            writeln!(w).and_then(|_| w.flush()).map_err(io_fail)
        });
        if let Err(code) = written {
            return code;
        }
    }
    if let Err(code) = result {
        return code;
    }
    if let Err(e) = outcome {
        eprintln!("run aborted: {e}");
        if let Error::Step { trace, .. } = &e {
            eprintln!("trace: {trace:?}");
        }
        return EXIT_ABORT;
    }
    println!("{}: {} steps to t = {}", s.config.name, driver.reports.len(), driver.current().t);
    if !driver.violations.is_empty() {
        for v in &driver.violations {
            eprintln!("violation: {v}");
        }
        return EXIT_VIOLATION;
    }
    EXIT_OK
}

fn point_driver(name: &str, o: &Overrides) -> i32 {
    let mut s = match load(name) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if s.problem.drive.is_none() {
        eprintln!("scenario '{}' has no strain drive; point-driver needs the point mesh", s.config.name);
        return EXIT_INVALID;
    }
    if let Err(code) = apply(&mut s, o) {
        return code;
    }
    let (result, rows) = match point::run_point(&s.problem, s.initial.clone(), &s.coupling) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run aborted: {e}");
            return EXIT_ABORT;
        }
    };
    let written = create(&o.out_dir, "point.csv").and_then(|mut w| {
        csv::write_point_rows(&rows, s.problem.material.z_dim(), &mut w).map_err(io_fail)?;
        w.flush().map_err(io_fail)
    });
    if let Err(code) = written {
        return code;
    }
    println!("{}: {} rows written to {}", s.config.name, rows.len(), o.out_dir.join("point.csv").display());
    if !result.violations.is_empty() {
        for v in &result.violations {
            eprintln!("violation: {v}");
        }
        return EXIT_VIOLATION;
    }
    EXIT_OK
}

fn indicator(beta: f64, c_hat: f64, t_end: f64, q: f64, c_z: Option<f64>, c0: f64) -> i32 {
    let ind = match coupling::global_existence_indicator(beta, c_hat, t_end, q) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    };
    println!("threshold {}", ind.threshold);
    println!("flag {}", ind.flag);
    println!("{}", ind.describe());
    if let Some(cz) = c_z {
        match coupling::gradient_branch_scan(beta, cz, c_hat, c0, t_end) {
            Ok(scan) => match scan.radius {
                Some(r) => println!("gradient branch: admissible radius {r}"),
                None => println!("gradient branch: no admissible radius (min gap {})", scan.min_gap),
            },
            Err(e) => {
                eprintln!("{e}");
                return EXIT_INVALID;
            }
        }
    }
    EXIT_OK
}
