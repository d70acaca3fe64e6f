//! Discrete unknowns and the problem data they live on.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{AssembledOperators, Mesh};
use crate::io::expr::Expr;
use crate::material::MaterialModel;

/// Discrete fields at one time level, with the previous level kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// Nodal displacement, node-major.
    pub u: DVector<f64>,
    /// Internal variable, one vector per material point.
    pub z: Vec<DVector<f64>>,
    /// Nodal temperature.
    pub theta: DVector<f64>,
    pub u_prev: DVector<f64>,
    pub z_prev: Vec<DVector<f64>>,
    pub theta_prev: DVector<f64>,
    /// Step size that produced this state (0 for the initial state).
    pub dt_prev: f64,
}

impl SimState {
    pub fn new(u: DVector<f64>, z: Vec<DVector<f64>>, theta: DVector<f64>) -> Self {
        Self {
            t: 0.0,
            u_prev: u.clone(),
            z_prev: z.clone(),
            theta_prev: theta.clone(),
            u,
            z,
            theta,
            dt_prev: 0.0,
        }
    }

    /// The state after one step, with the current fields moved to `*_prev`.
    pub fn advance(&self, t: f64, u: DVector<f64>, z: Vec<DVector<f64>>, theta: DVector<f64>) -> Self {
        Self {
            dt_prev: t - self.t,
            t,
            u_prev: self.u.clone(),
            z_prev: self.z.clone(),
            theta_prev: self.theta.clone(),
            u,
            z,
            theta,
        }
    }

    /// Shape consistency with the discretization.
    pub fn check(&self, ops: &AssembledOperators, m: usize) -> Result<()> {
        let bad = self.u.len() != ops.n_dofs
            || self.theta.len() != ops.n_nodes
            || self.z.len() != ops.n_points()
            || self.z.iter().any(|v| v.len() != m);
        if bad {
            return Err(Error::Shape {
                what: "state fields",
                expected: ops.n_dofs + ops.n_nodes + ops.n_points() * m,
                got: self.u.len() + self.theta.len() + self.z.iter().map(|v| v.len()).sum::<usize>(),
            });
        }
        Ok(())
    }
}

/// Mechanical loading `f(x, t)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Load {
    #[default]
    None,
    /// Body-force density components as expressions in `(x, y, t)`.
    Body { components: Vec<Expr> },
    /// Full nodal load vectors at increasing times, linearly interpolated
    /// and held constant outside the covered interval.
    Series { times: Vec<f64>, values: Vec<DVector<f64>> },
}

impl Load {
    /// Nodal load vector at time `t`.
    pub fn vector(&self, mesh: &Mesh, ops: &AssembledOperators, t: f64) -> DVector<f64> {
        match self {
            Load::None => DVector::zeros(ops.n_dofs),
            Load::Body { components } => ops.body_force(&mesh.nodes, |x| {
                let mut v = [0.0, 0.0];
                for (c, e) in components.iter().enumerate().take(2) {
                    v[c] = e.eval(x[0], x[1], t);
                }
                v
            }),
            Load::Series { times, values } => {
                if times.is_empty() {
                    return DVector::zeros(ops.n_dofs);
                }
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    return values[0].clone();
                }
                if k == times.len() {
                    return values[k - 1].clone();
                }
                let s = (t - times[k - 1]) / (times[k] - times[k - 1]);
                &values[k - 1] * (1.0 - s) + &values[k] * s
            }
        }
    }
}

/// Homogeneous strain history imposed on the material-point mode.
#[derive(Debug, Clone, PartialEq)]
pub enum StrainDrive {
    /// `eps(t) = rate * t * direction`.
    Ramp { rate: f64, direction: DVector<f64> },
    /// Symmetric triangle wave starting at zero: up to `+amplitude` at a
    /// quarter period, down to `-amplitude` at three quarters, back to zero.
    Triangle {
        amplitude: f64,
        period: f64,
        direction: DVector<f64>,
    },
}

impl StrainDrive {
    pub fn direction(&self) -> &DVector<f64> {
        match self {
            StrainDrive::Ramp { direction, .. } | StrainDrive::Triangle { direction, .. } => direction,
        }
    }

    /// Scalar amplitude along the direction.
    pub fn scalar(&self, t: f64) -> f64 {
        match *self {
            StrainDrive::Ramp { rate, .. } => rate * t,
            StrainDrive::Triangle { amplitude, period, .. } => {
                let s = (t / period).rem_euclid(1.0);
                let v = if s < 0.25 {
                    4.0 * s
                } else if s < 0.75 {
                    2.0 - 4.0 * s
                } else {
                    4.0 * s - 4.0
                };
                amplitude * v
            }
        }
    }

    pub fn strain(&self, t: f64) -> DVector<f64> {
        self.direction() * self.scalar(t)
    }
}

/// Everything a time step needs besides the state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub material: MaterialModel,
    pub ops: AssembledOperators,
    pub load: Load,
    /// Imposed homogeneous strain (material-point mode only).
    pub drive: Option<StrainDrive>,
}

impl Problem {
    pub fn new(mesh: Mesh, material: MaterialModel, load: Load, drive: Option<StrainDrive>) -> Result<Self> {
        let ops = crate::fem::assemble(&mesh, &material)?;
        if drive.is_some() && mesh.dim != 0 {
            return Err(Error::Config("an imposed strain drive needs the point mesh".into()));
        }
        Ok(Self {
            mesh,
            material,
            ops,
            load,
            drive,
        })
    }

    pub fn imposed_strain(&self, t: f64) -> Option<DVector<f64>> {
        self.drive.as_ref().map(|d| d.strain(t))
    }

    pub fn strains(&self, u: &DVector<f64>, t: f64) -> Vec<DVector<f64>> {
        self.ops.element_strains(u, self.imposed_strain(t).as_ref())
    }

    /// A state with zero displacement, constant `z` and constant temperature.
    pub fn uniform_state(&self, z0: &DVector<f64>, theta0: f64) -> SimState {
        SimState::new(
            DVector::zeros(self.ops.n_dofs),
            vec![z0.clone(); self.ops.n_points()],
            DVector::from_element(self.ops.n_nodes, theta0),
        )
    }
}
