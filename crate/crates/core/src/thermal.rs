//! One implicit step of the heat equation
//! `c theta_t - div(kappa grad theta) = xi + theta (beta tr eps_t + dH2(z).z_t)`
//! with zero-flux boundary conditions.
//!
//! The source is integrated with the same vertex quadrature as the energies,
//! so every nodal source term pairs exactly with a term of the mechanical
//! step. With the lumped mass and the coupling term taken at the new
//! temperature, the system matrix is an M-matrix on the shipped meshes and
//! the scheme preserves positivity.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::solve::{add_diagonal, add_scaled, solve_spd, spmv};
use crate::material::MaterialModel;
use crate::state::Problem;
use crate::tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingTreatment {
    /// Coupling coefficient times the new temperature, in the system matrix.
    #[default]
    SemiImplicit,
    /// Coupling coefficient times a given temperature, in the right-hand side.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatStepConfig {
    pub dt: f64,
    pub coupling: CouplingTreatment,
    pub consistent_mass: bool,
}

impl HeatStepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            coupling: CouplingTreatment::SemiImplicit,
            consistent_mass: false,
        }
    }
}

/// Nodal heat source split into the dissipative part and the coefficient of
/// the temperature-linear coupling part: `load = dissipative + coupling * theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSource {
    pub dissipative: DVector<f64>,
    pub coupling: DVector<f64>,
}

impl HeatSource {
    pub fn zeros(n: usize) -> Self {
        Self {
            dissipative: DVector::zeros(n),
            coupling: DVector::zeros(n),
        }
    }

    /// Total nodal load at a given temperature.
    pub fn load(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.dissipative + self.coupling.component_mul(theta)
    }
}

/// Pointwise dissipation rate `A eps_t : eps_t + B z_t . z_t + Psi(z_t)`.
pub fn dissipation_density(material: &MaterialModel, eps_rate: &DVector<f64>, zdot: &DVector<f64>) -> f64 {
    let t = &material.tensors;
    eps_rate.dot(&(&t.viscosity_a * eps_rate))
        + zdot.dot(&(&t.viscosity_b * zdot))
        + material.dissipation.value(zdot)
}

/// Pointwise coupling coefficient `beta tr eps_t + dH2(z) . z_t`.
pub fn coupling_density(
    material: &MaterialModel,
    eps_rate: &DVector<f64>,
    z: &DVector<f64>,
    zdot: &DVector<f64>,
) -> Result<f64> {
    let mut c = material.tensors.beta * tensor::trace(eps_rate, material.dim);
    if material.has_h2() {
        c += material.hardening.grad_h2(z)?.dot(zdot);
    }
    Ok(c)
}

/// Element strain rates and point rates of a step.
pub struct Rates {
    pub eps_rate: Vec<DVector<f64>>,
    pub zdot: Vec<DVector<f64>>,
}

pub fn rates(
    problem: &Problem,
    u_new: &DVector<f64>,
    u_prev: &DVector<f64>,
    z_new: &[DVector<f64>],
    z_prev: &[DVector<f64>],
    t_new: f64,
    dt: f64,
) -> Rates {
    let e1 = problem.strains(u_new, t_new);
    let e0 = problem.strains(u_prev, t_new - dt);
    Rates {
        eps_rate: e1.iter().zip(&e0).map(|(a, b)| (a - b) / dt).collect(),
        zdot: z_new.iter().zip(z_prev).map(|(a, b)| (a - b) / dt).collect(),
    }
}

/// Nodal heat source of the step `(u_prev, z_prev) -> (u_new, z_new)`.
pub fn heat_rhs(
    problem: &Problem,
    u_new: &DVector<f64>,
    u_prev: &DVector<f64>,
    z_new: &[DVector<f64>],
    z_prev: &[DVector<f64>],
    t_new: f64,
    dt: f64,
) -> Result<HeatSource> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let ops = &problem.ops;
    let material = &problem.material;
    let r = rates(problem, u_new, u_prev, z_new, z_prev, t_new, dt);
    let mut out = HeatSource::zeros(ops.n_nodes);
    let a = &material.tensors.viscosity_a;
    let beta = material.tensors.beta;
    for (e, el) in ops.elements.iter().enumerate() {
        let rate = &r.eps_rate[e];
        let share = el.volume / el.nodes.len() as f64;
        let visc = rate.dot(&(a * rate));
        let expa = beta * tensor::trace(rate, material.dim);
        for &n in &el.nodes {
            out.dissipative[n] += share * visc;
            out.coupling[n] += share * expa;
        }
    }
    let b = &material.tensors.viscosity_b;
    for (p, pt) in ops.points.iter().enumerate() {
        let zd = &r.zdot[p];
        let d = zd.dot(&(b * zd)) + material.dissipation.value(zd);
        let c = if material.has_h2() {
            material.hardening.grad_h2(&z_new[p])?.dot(zd)
        } else {
            0.0
        };
        for &(n, w) in &pt.theta_nodes {
            out.dissipative[n] += pt.weight * w * d;
            out.coupling[n] += pt.weight * w * c;
        }
    }
    Ok(out)
}

/// Backward-Euler heat step. `theta_coupling` is used only by the explicit treatment.
pub fn heat_step(
    problem: &Problem,
    theta_prev: &DVector<f64>,
    source: &HeatSource,
    theta_coupling: &DVector<f64>,
    cfg: &HeatStepConfig,
) -> Result<DVector<f64>> {
    if !(cfg.dt > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {}", cfg.dt)));
    }
    let ops = &problem.ops;
    let dt = cfg.dt;
    let (mut matrix, mass_theta) = if cfg.consistent_mass {
        let m = &ops.mass_consistent;
        (add_scaled(&ops.k_kappa, 1.0 / dt, m), spmv(m, theta_prev) / dt)
    } else {
        let d = &ops.mass_lumped / dt;
        (add_diagonal(&ops.k_kappa, &d), d.component_mul(theta_prev))
    };
    let mut rhs = mass_theta + &source.dissipative;
    match cfg.coupling {
        CouplingTreatment::SemiImplicit => {
            if source.coupling.iter().any(|&g| g != 0.0) {
                matrix = add_diagonal(&matrix, &(-&source.coupling));
            }
        }
        CouplingTreatment::Explicit => rhs += source.coupling.component_mul(theta_coupling),
    }
    solve_spd(&matrix, &rhs).map_err(|e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("heat system: {msg} (coupling term too large for dt?)")),
        other => other,
    })
}

/// Discrete analogues of the a-priori temperature estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct APrioriReport {
    /// `max_t |theta(t)|_{L2}^2`
    pub sup_l2_sq: f64,
    /// `int |grad theta|^2 dt`
    pub grad_l2l2_sq: f64,
    /// `int |theta_t|^2 dt`
    pub rate_l2l2_sq: f64,
    /// `C_theta exp(T / c^c) (|theta0|_{W12} + |f|_{L2 L2})`
    pub bound: f64,
    /// `sqrt(sum of the three left sides) / bound`; monitor only.
    pub ratio: f64,
}

/// Evaluates the monitor on a trajectory of `(t, theta)` pairs and the
/// nodal source loads of each step (one fewer than the trajectory).
pub fn a_priori_monitor(
    problem: &Problem,
    theta_trajectory: &[(f64, DVector<f64>)],
    f_trajectory: &[DVector<f64>],
    c_theta: f64,
) -> APrioriReport {
    let ops = &problem.ops;
    let vol = &ops.node_volume;
    let l2_sq = |v: &DVector<f64>| v.component_mul(v).dot(vol);
    let grad_sq = |v: &DVector<f64>| v.dot(&spmv(&ops.k_lap, v));
    let mut sup = 0.0f64;
    let mut grad = 0.0;
    let mut rate = 0.0;
    let mut f_sq = 0.0;
    for (k, (t, th)) in theta_trajectory.iter().enumerate() {
        sup = sup.max(l2_sq(th));
        if k > 0 {
            let (t0, th0) = &theta_trajectory[k - 1];
            let dt = t - t0;
            grad += dt * grad_sq(th);
            rate += l2_sq(&((th - th0) / dt)) * dt;
            if let Some(f) = f_trajectory.get(k - 1) {
                let dens = f.component_div(vol);
                f_sq += dt * l2_sq(&dens);
            }
        }
    }
    let (t_end, th0) = match (theta_trajectory.last(), theta_trajectory.first()) {
        (Some(l), Some(f)) => (l.0 - f.0, &f.1),
        _ => return APrioriReport { sup_l2_sq: 0.0, grad_l2l2_sq: 0.0, rate_l2l2_sq: 0.0, bound: 0.0, ratio: 0.0 },
    };
    let w12 = (l2_sq(th0) + grad_sq(th0)).sqrt();
    let bound = c_theta * (t_end / problem.material.floors.c_c).exp() * (w12 + f_sq.sqrt());
    let lhs = (sup + grad + rate).sqrt();
    APrioriReport {
        sup_l2_sq: sup,
        grad_l2l2_sq: grad,
        rate_l2l2_sq: rate,
        bound,
        ratio: if bound > 0.0 { lhs / bound } else { f64::INFINITY },
    }
}
