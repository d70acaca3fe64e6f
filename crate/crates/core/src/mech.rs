//! One implicit step of the momentum balance and the flow rule at a frozen
//! temperature field.
//!
//! Backward Euler in time; the coupled `(u, z)` system is solved by block
//! alternation: a linear SPD solve for `u` with `z` frozen, then a
//! Gauss-Seidel sweep of pointwise flow-rule inclusions with `u` frozen.
//! Both blocks are exact minimizations of the same convex incremental
//! functional when the hardening is convex, so the alternation is a
//! block-coordinate descent.

use nalgebra::{DMatrix, DVector};

use crate::dissipation::{solve_inclusion, subgradient_residual, ProxProblem};
use crate::error::{Error, Result};
use crate::fem::solve::{add_scaled, spmv, SpdSolver};
use crate::state::{Problem, SimState};
use crate::tensor;

/// How the hardening enters the local metric of each flow-rule solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    /// Only the elastic and gradient parts; hardening is lagged.
    #[default]
    FrozenZ,
    /// Adds the positive part of the hardening Hessian at the current iterate.
    NewtonLocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechStepConfig {
    pub dt: f64,
    /// Relative tolerance on the change of `(u, z)` between sweeps.
    pub tol: f64,
    pub max_iter: usize,
    pub linearization: Linearization,
}

impl MechStepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            tol: 1e-9,
            max_iter: 200,
            linearization: Linearization::FrozenZ,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Domain(format!(
                "mechanical step needs dt > 0, tol > 0, max_iter >= 1 (got {}, {}, {})",
                self.dt, self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InnerReport {
    pub iterations: usize,
    /// Relative `(u, z)` change per sweep.
    pub trace: Vec<f64>,
    pub momentum_residual: f64,
    /// Largest normalized flow-rule inclusion residual over the points.
    pub flow_residual: f64,
}

#[derive(Debug, Clone)]
pub struct MechOutput {
    pub u: DVector<f64>,
    pub z: Vec<DVector<f64>>,
    pub report: InnerReport,
}

/// Factorized momentum operator for one step size.
#[derive(Debug, Clone)]
pub struct MechSolver {
    pub dt: f64,
    matrix: nalgebra_sparse::CsrMatrix<f64>,
    factor: SpdSolver,
    /// `Q_lin` as an `n_sym x m` matrix.
    qm: DMatrix<f64>,
    /// `Q_lin^T Ebar_p Q_lin` per point.
    qeq: Vec<DMatrix<f64>>,
}

impl MechSolver {
    pub fn new(problem: &Problem, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("step size must be positive, got {dt}")));
        }
        let ops = &problem.ops;
        let full = add_scaled(&ops.k_e, 1.0 / dt, &ops.k_a);
        let matrix = ops.reduce(&full);
        let factor = SpdSolver::new(&matrix)?;
        let t = &problem.material.tensors;
        let nsym = tensor::sym_len(problem.material.dim);
        let m = problem.material.z_dim();
        let qm = DMatrix::from_fn(nsym, m, |i, k| t.q_lin[k][i]);
        let qeq = ops
            .points
            .iter()
            .map(|p| qm.transpose() * &p.elasticity * &qm)
            .collect();
        Ok(Self {
            dt,
            matrix,
            factor,
            qm,
            qeq,
        })
    }

    /// Free-dof right-hand side of the momentum equation at frozen `z`, `theta`.
    fn momentum_rhs(
        &self,
        problem: &Problem,
        z: &[DVector<f64>],
        u_prev: &DVector<f64>,
        theta: &DVector<f64>,
        t: f64,
    ) -> DVector<f64> {
        let ops = &problem.ops;
        if ops.n_free() == 0 {
            return DVector::zeros(0);
        }
        let f = problem.load.vector(&problem.mesh, ops, t) + spmv(&ops.k_a, u_prev) / self.dt
            + ops.q_load(&problem.material, z)
            - ops.beta_load(theta);
        ops.reduce_vec(&f)
    }

    fn solve_u(
        &self,
        problem: &Problem,
        z: &[DVector<f64>],
        u_prev: &DVector<f64>,
        theta: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>> {
        let rhs = self.momentum_rhs(problem, z, u_prev, theta, t);
        Ok(problem.ops.expand(&self.factor.solve(&rhs)?))
    }

    /// Norm of the free-dof momentum residual.
    pub fn momentum_residual(
        &self,
        problem: &Problem,
        u: &DVector<f64>,
        z: &[DVector<f64>],
        u_prev: &DVector<f64>,
        theta: &DVector<f64>,
        t: f64,
    ) -> f64 {
        let ops = &problem.ops;
        let r = spmv(&self.matrix, &ops.reduce_vec(u)) - self.momentum_rhs(problem, z, u_prev, theta, t);
        r.norm()
    }

    /// Stress drive `s_p = sum share E_e (eps_e - Q_aff) / w_p`.
    fn stress_drive(&self, problem: &Problem, p: usize, eps: &[DVector<f64>]) -> DVector<f64> {
        let ops = &problem.ops;
        let pt = &ops.points[p];
        let q_aff = &problem.material.tensors.q_aff;
        let mut s = DVector::zeros(q_aff.len());
        for &(e, share) in &pt.parts {
            s += &ops.elements[e].elasticity * (&eps[e] - q_aff) * (share / pt.weight);
        }
        s
    }

    /// Gradient-term contribution `(K_alpha z)_p / w_p` and the diagonal `K_pp / w_p`.
    fn gradient_term(&self, problem: &Problem, p: usize, z: &[DVector<f64>]) -> (DVector<f64>, f64) {
        let ops = &problem.ops;
        let m = z[p].len();
        if ops.alpha == 0.0 {
            return (DVector::zeros(m), 0.0);
        }
        let w = ops.points[p].weight;
        let row = ops.k_alpha.row(p);
        let mut acc = DVector::zeros(m);
        let mut diag = 0.0;
        for (&q, &v) in row.col_indices().iter().zip(row.values()) {
            acc.axpy(v / w, &z[q], 1.0);
            if q == p {
                diag += v / w;
            }
        }
        (acc, diag)
    }

    /// Full flow-rule driving force at point `p`, including the gradient term.
    pub fn point_force(
        &self,
        problem: &Problem,
        p: usize,
        eps: &[DVector<f64>],
        z: &[DVector<f64>],
        theta: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let s = self.stress_drive(problem, p, eps);
        let theta_p = problem.ops.point_theta(p, theta);
        let (lap, _) = self.gradient_term(problem, p, z);
        local_force(problem, &self.qm, &self.qeq[p], &s, &z[p], theta_p).map(|g| g + lap)
    }

    /// One step from `state` at frozen temperature `theta`.
    pub fn step(
        &self,
        problem: &Problem,
        state: &SimState,
        theta: &DVector<f64>,
        cfg: &MechStepConfig,
    ) -> Result<MechOutput> {
        self.step_from(problem, state, theta, cfg, &state.z)
    }

    /// Like [`MechSolver::step`] but starting the alternation from `z_guess`.
    pub fn step_from(
        &self,
        problem: &Problem,
        state: &SimState,
        theta: &DVector<f64>,
        cfg: &MechStepConfig,
        z_guess: &[DVector<f64>],
    ) -> Result<MechOutput> {
        cfg.check()?;
        let material = &problem.material;
        state.check(&problem.ops, material.z_dim())?;
        if (cfg.dt - self.dt).abs() > 1e-15 * self.dt {
            return Err(Error::Domain("solver was factorized for a different step size".into()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("temperature field is not finite".into()));
        }
        let dt = cfg.dt;
        let t_new = state.t + dt;
        let ops = &problem.ops;
        let b = &material.tensors.viscosity_b;
        let mut z = z_guess.to_vec();
        let mut u = state.u.clone();
        let mut trace = Vec::new();
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            let u_new = self.solve_u(problem, &z, &state.u, theta, t_new)?;
            let eps = problem.strains(&u_new, t_new);
            let mut dz_max = 0.0f64;
            let mut z_max = 0.0f64;
            for p in 0..ops.n_points() {
                let s = self.stress_drive(problem, p, &eps);
                let theta_p = ops.point_theta(p, theta);
                let (lap, lap_diag) = self.gradient_term(problem, p, &z);
                let z_old = z[p].clone();
                let g_old = local_force(problem, &self.qm, &self.qeq[p], &s, &z_old, theta_p)? + lap;
                let m = z_old.len();
                let mut jac = &self.qeq[p] + DMatrix::identity(m, m) * lap_diag;
                if cfg.linearization == Linearization::NewtonLocal {
                    let (_, _, h1) = material.hardening.h1_all(&z_old)?;
                    let mut h = h1;
                    if material.has_h2() {
                        h += material.hardening.h2_all(&z_old)?.2 * theta_p;
                    }
                    jac += tensor::psd_part(&h);
                }
                let g = &g_old + &jac * (&state.z[p] - &z_old);
                let metric = b + &jac * dt;
                let prob = ProxProblem::new(metric, g, dt, material.dissipation.clone());
                let zdot = solve_inclusion(&prob)?;
                let z_new = &state.z[p] + zdot * dt;
                dz_max = dz_max.max((&z_new - &z_old).amax());
                z_max = z_max.max(z_new.amax());
                z[p] = z_new;
            }
            let du = (&u_new - &u).amax();
            let scale = 1.0 + u_new.amax().max(z_max);
            let change = du.max(dz_max) / scale;
            u = u_new;
            trace.push(change);
            if !change.is_finite() {
                break;
            }
            if change <= cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Step {
                t: t_new,
                reason: "mechanical alternation did not converge".into(),
                trace,
            });
        }
        let u = self.solve_u(problem, &z, &state.u, theta, t_new)?;
        let report = InnerReport {
            iterations: trace.len(),
            momentum_residual: self.momentum_residual(problem, &u, &z, &state.u, theta, t_new),
            flow_residual: self.flow_residual(problem, &u, &z, state, theta, dt)?,
            trace,
        };
        Ok(MechOutput { u, z, report })
    }

    /// Largest `residual / (1 + |g|)` of the inclusion
    /// `0 in dPsi(zdot) + B zdot + G(z)` over all points.
    pub fn flow_residual(
        &self,
        problem: &Problem,
        u: &DVector<f64>,
        z: &[DVector<f64>],
        prev: &SimState,
        theta: &DVector<f64>,
        dt: f64,
    ) -> Result<f64> {
        let eps = problem.strains(u, prev.t + dt);
        let b = &problem.material.tensors.viscosity_b;
        let mut worst = 0.0f64;
        for p in 0..problem.ops.n_points() {
            let g = self.point_force(problem, p, &eps, z, theta)?;
            let zdot = (&z[p] - &prev.z[p]) / dt;
            let gn = g.norm();
            let prob = ProxProblem::new(b.clone(), g, dt, problem.material.dissipation.clone());
            worst = worst.max(subgradient_residual(&zdot, &prob) / (1.0 + gn));
        }
        Ok(worst)
    }
}

/// `-Q^T (s - Ebar Q z) + dH1(z) + theta dH2(z)` at one point.
fn local_force(
    problem: &Problem,
    qm: &DMatrix<f64>,
    qeq: &DMatrix<f64>,
    s: &DVector<f64>,
    z: &DVector<f64>,
    theta: f64,
) -> Result<DVector<f64>> {
    let h = &problem.material.hardening;
    let mut g = -(qm.transpose() * s) + qeq * z + h.grad_h1(z)?;
    if problem.material.has_h2() {
        if !(theta > 0.0) {
            return Err(Error::Domain(format!("temperature must be positive, got {theta}")));
        }
        g += h.grad_h2(z)? * theta;
    }
    Ok(g)
}

/// Convenience wrapper that factorizes and steps once.
pub fn mech_step(
    problem: &Problem,
    state: &SimState,
    theta: &DVector<f64>,
    cfg: &MechStepConfig,
) -> Result<MechOutput> {
    MechSolver::new(problem, cfg.dt)?.step(problem, state, theta, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, MeshSpec};
    use crate::material::test_models::scalar_1d;
    use crate::state::{Load, StrainDrive};
    use crate::io::expr::Expr;

    #[test]
    fn equilibrium_is_stationary() {
        let mesh = build_mesh(&MeshSpec::Interval { length: 1.0, n: 8 }).unwrap();
        let problem = Problem::new(mesh, scalar_1d(2.0, 1.0, 0.0, 1.0), Load::None, None).unwrap();
        let state = problem.uniform_state(&DVector::zeros(1), 1.0);
        let out = mech_step(&problem, &state, &state.theta, &MechStepConfig::new(0.1)).unwrap();
        assert_eq!(out.u, state.u);
        assert_eq!(out.z, state.z);
        assert!(out.report.iterations <= 2);
    }

    /// Fine-step reference for the 0D elastic-plastic ramp.
    fn ramp_response(dt: f64, t_end: f64) -> Vec<(f64, f64)> {
        let mut mat = scalar_1d(200.0, 10.0, 0.0, 1.0);
        mat.bounds.c_zz_h1 = 10.0;
        let drive = StrainDrive::Ramp {
            rate: 0.01,
            direction: DVector::from_element(1, 1.0),
        };
        let problem = Problem::new(build_mesh(&MeshSpec::Point).unwrap(), mat, Load::None, Some(drive)).unwrap();
        let mut state = problem.uniform_state(&DVector::zeros(1), 1.0);
        let mut cfg = MechStepConfig::new(dt);
        cfg.linearization = Linearization::NewtonLocal;
        let solver = MechSolver::new(&problem, dt).unwrap();
        let mut out = vec![(0.0, 0.0)];
        let n = (t_end / dt).round() as usize;
        for _ in 0..n {
            let r = solver.step(&problem, &state, &state.theta, &cfg).unwrap();
            state = state.advance(state.t + dt, r.u, r.z, state.theta.clone());
            out.push((state.t, state.z[0][0]));
        }
        out
    }

    #[test]
    fn point_ramp_sticks_until_yield() {
        let traj = ramp_response(1e-3, 1.0);
        for &(t, z) in &traj {
            if t < 0.5 - 1e-9 {
                assert_eq!(z, 0.0, "flow before yield at t = {t}");
            }
        }
        assert!(traj.last().unwrap().1 > 0.0);
        // closed form with viscosity: B zdot = E(eps - z) - L z - 1 after yield
        let reference = ramp_response(1e-5, 1.0);
        let fine = reference.last().unwrap().1;
        assert!((traj.last().unwrap().1 - fine).abs() < 1e-3 * fine.max(1e-6) + 1e-6);
    }

    #[test]
    fn increment_error_is_first_order() {
        let reference = ramp_response(1e-5, 0.6);
        let err = |dt: f64| {
            let stride = (dt / 1e-5).round() as usize;
            ramp_response(dt, 0.6)
                .iter()
                .enumerate()
                .map(|(k, &(_, z))| (z - reference[k * stride].1).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!(ratio > 1.7 && ratio < 2.3, "ratio {ratio}");
    }

    fn loaded_bar() -> Problem {
        let mesh = build_mesh(&MeshSpec::Interval { length: 1.0, n: 10 }).unwrap();
        let mut mat = scalar_1d(2.0, 1.0, 0.5, 1.0);
        mat.dissipation = crate::dissipation::DissipationPotential::NormScaled { sigma_y: 0.05 };
        let load = Load::Body {
            components: vec![Expr::parse("3*sin(pi*x)").unwrap()],
        };
        Problem::new(mesh, mat, load, None).unwrap()
    }

    #[test]
    fn converged_step_satisfies_both_residuals() {
        let problem = loaded_bar();
        let state = problem.uniform_state(&DVector::zeros(1), 1.0);
        let theta = DVector::from_fn(problem.ops.n_nodes, |i, _| 1.0 + 0.1 * i as f64);
        let out = mech_step(&problem, &state, &theta, &MechStepConfig::new(0.05)).unwrap();
        let f = problem.load.vector(&problem.mesh, &problem.ops, 0.05).norm();
        assert!(out.report.momentum_residual <= 1e-8 * (1.0 + f));
        assert!(out.report.flow_residual <= 1e-8, "{}", out.report.flow_residual);
        assert!(out.z.iter().any(|z| z[0] != 0.0));
    }

    #[test]
    fn unique_from_different_guesses() {
        let problem = loaded_bar();
        let state = problem.uniform_state(&DVector::zeros(1), 1.0);
        let cfg = MechStepConfig::new(0.05);
        let solver = MechSolver::new(&problem, 0.05).unwrap();
        let a = solver.step(&problem, &state, &state.theta, &cfg).unwrap();
        let guess = vec![DVector::from_element(1, 0.3); problem.ops.n_points()];
        let b = solver.step_from(&problem, &state, &state.theta, &cfg, &guess).unwrap();
        let dz = a.z.iter().zip(&b.z).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
        assert!(dz <= 1e-7 && (&a.u - &b.u).amax() <= 1e-7);
    }

    #[test]
    fn residual_of_pure_load_and_linearity() {
        let mut problem = loaded_bar();
        problem.material.tensors.beta = 0.0;
        problem.ops.beta = 0.0;
        let solver = MechSolver::new(&problem, 0.1).unwrap();
        let zero_u = DVector::zeros(problem.ops.n_dofs);
        let z = vec![DVector::zeros(1); problem.ops.n_points()];
        let theta = DVector::from_element(problem.ops.n_nodes, 1.0);
        let r = solver.momentum_residual(&problem, &zero_u, &z, &zero_u, &theta, 0.1);
        let f = problem.ops.reduce_vec(&problem.load.vector(&problem.mesh, &problem.ops, 0.1));
        assert!((r - f.norm()).abs() < 1e-14);
        let state = problem.uniform_state(&DVector::zeros(1), 1.0);
        let out = solver.step(&problem, &state, &theta, &MechStepConfig::new(0.1)).unwrap();
        let dir = DVector::from_fn(problem.ops.n_dofs, |i, _| ((i * 7 % 5) as f64 - 2.0) * 0.3);
        let dir = problem.ops.expand(&problem.ops.reduce_vec(&dir));
        let res: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
            .iter()
            .map(|h| solver.momentum_residual(&problem, &(&out.u + &dir * *h), &out.z, &state.u, &theta, 0.1))
            .collect();
        assert!((res[0] / res[1] - 2.0).abs() < 1e-3 && (res[1] / res[2] - 2.0).abs() < 1e-3);
    }
}
