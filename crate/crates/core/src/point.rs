//! Material-point mode: a single homogeneous point under an imposed strain
//! history, run through the same coupled stepper as the FEM problems.

use nalgebra::DVector;

use crate::coupling::{run, CouplingConfig, RunResult};
use crate::error::{Error, Result};
use crate::state::{Problem, SimState};

/// One row of the point-driver output.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRow {
    pub t: f64,
    /// Strain amplitude along the drive direction.
    pub strain: f64,
    /// Stress projected on the drive direction, `sigma . d / (d . d)`.
    pub stress: f64,
    pub theta: f64,
    pub z: DVector<f64>,
}

/// Stress row for one state; `prev` supplies the strain rate.
pub fn point_row(problem: &Problem, state: &SimState, prev: Option<&SimState>) -> Result<PointRow> {
    let drive = problem
        .drive
        .as_ref()
        .ok_or_else(|| Error::Config("the point driver needs a strain drive".into()))?;
    let eps = &problem.strains(&state.u, state.t)[0];
    let rate = match prev {
        Some(p) if state.t > p.t => (eps - &problem.strains(&p.u, p.t)[0]) / (state.t - p.t),
        _ => DVector::zeros(eps.len()),
    };
    let theta = state.theta[0];
    let sigma = problem.material.uniform().stress(eps, &state.z[0], theta, &rate)?;
    let d = drive.direction();
    Ok(PointRow {
        t: state.t,
        strain: drive.scalar(state.t),
        stress: sigma.dot(d) / d.dot(d),
        theta,
        z: state.z[0].clone(),
    })
}

pub fn point_rows(problem: &Problem, result: &RunResult) -> Result<Vec<PointRow>> {
    let s = &result.states;
    (0..s.len())
        .map(|k| point_row(problem, &s[k], k.checked_sub(1).map(|j| &s[j])))
        .collect()
}

/// Runs the point problem from `initial` and returns the stress trace with the run.
pub fn run_point(problem: &Problem, initial: SimState, cfg: &CouplingConfig) -> Result<(RunResult, Vec<PointRow>)> {
    if problem.mesh.dim != 0 {
        return Err(Error::Config("the point driver needs the point mesh".into()));
    }
    let result = run(problem, initial, cfg)?;
    let rows = point_rows(problem, &result)?;
    Ok((result, rows))
}
