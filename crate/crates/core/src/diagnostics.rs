//! Runtime checks of the thermodynamic structure: energies, dissipation,
//! entropy production, the internal-energy balance, the temperature lower
//! bound `theta_bar * phi(t)` and the global-estimate monitor.
//!
//! All integrals use the vertex quadrature of the assembly module, so they
//! are the exact discrete counterparts of the quantities the solver pairs.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::solve::spmv;
use crate::fem::PointSite;
use crate::state::{Problem, SimState};
use crate::thermal::HeatSource;

/// Domain integrals of the energy-like quantities at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Totals {
    pub free_energy: f64,
    pub entropy: f64,
    pub internal_energy: f64,
    /// `int W_mech`, including the gradient term.
    pub mechanical_energy: f64,
}

/// Integrates `W`, `s` and `W + theta s` over the domain.
pub fn totals(problem: &Problem, state: &SimState) -> Result<Totals> {
    let ops = &problem.ops;
    let material = &problem.material;
    if let Some(bad) = state.theta.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Domain(format!("temperature must be positive, got {bad}")));
    }
    let eps = problem.strains(&state.u, state.t);
    let mut mech = 0.0;
    let mut coup = 0.0;
    let mut theta_coup = 0.0;
    for (p, pt) in ops.points.iter().enumerate() {
        let theta_p = ops.point_theta(p, &state.theta);
        for &(e, share) in &pt.parts {
            let pm = material.at(ops.elements[e].centroid);
            let wc = pm.w_coup(&eps[e], &state.z[p])?;
            mech += share * pm.w_mech_local(&eps[e], &state.z[p])?;
            coup += share * wc;
            theta_coup += share * theta_p * wc;
        }
    }
    if ops.alpha > 0.0 {
        for zk in component_fields(&state.z) {
            mech += 0.5 * zk.dot(&spmv(&ops.k_alpha, &zk));
        }
    }
    // thermal part, per node with the lumped heat capacity
    let mut w_theta = 0.0;
    let mut c_ln = 0.0;
    let mut c_theta_ln = 0.0;
    for (i, &th) in state.theta.iter().enumerate() {
        let d = ops.mass_lumped[i];
        w_theta += d * (th * th.ln() - th);
        c_ln += d * th.ln();
        c_theta_ln += d * th * th.ln();
    }
    let free_energy = mech - w_theta + theta_coup;
    let entropy = c_ln - coup;
    let theta_s = c_theta_ln - theta_coup;
    Ok(Totals {
        free_energy,
        entropy,
        internal_energy: free_energy + theta_s,
        mechanical_energy: mech,
    })
}

fn component_fields(z: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let m = z.first().map_or(0, |v| v.len());
    (0..m)
        .map(|k| DVector::from_iterator(z.len(), z.iter().map(|v| v[k])))
        .collect()
}

/// `int xi dx` from the nodal heat source of a step.
pub fn dissipation_rate(source: &HeatSource) -> f64 {
    source.dissipative.sum()
}

/// `int kappa grad theta . grad theta / theta^2 + int xi / theta`.
pub fn entropy_production(problem: &Problem, theta: &DVector<f64>, source: &HeatSource) -> Result<f64> {
    let ops = &problem.ops;
    if let Some(bad) = theta.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Domain(format!(
            "entropy production needs a positive temperature, got {bad}"
        )));
    }
    let mut total = 0.0;
    for el in &ops.elements {
        if el.grads.is_empty() {
            continue;
        }
        let mut g = DVector::zeros(el.grads[0].len());
        for (a, &n) in el.nodes.iter().enumerate() {
            g.axpy(theta[n], &el.grads[a], 1.0);
        }
        let inv_sq = el.nodes.iter().map(|&n| theta[n].powi(-2)).sum::<f64>() / el.nodes.len() as f64;
        total += el.volume * g.dot(&(&el.conductivity * &g)) * inv_sq;
    }
    for (i, &xi) in source.dissipative.iter().enumerate() {
        total += xi / theta[i];
    }
    Ok(total)
}

/// `|d int W_in - dt int f.u_t| / (1 + |d int W_in|)`; zero-flux boundaries
/// contribute no heat.
pub fn energy_balance_residual(delta_internal: f64, work: f64) -> f64 {
    (delta_internal - work).abs() / (1.0 + delta_internal.abs())
}

/// `|d int s - dt * production| / (1 + |d int s|)`.
pub fn entropy_balance_residual(delta_entropy: f64, dt: f64, production: f64) -> f64 {
    (delta_entropy - dt * production).abs() / (1.0 + delta_entropy.abs())
}

/// `|u|^2_{W12} + |z|^2_{L2} + alpha |grad z|^2_{L2} + |theta|_{L1}`.
pub fn global_estimate_monitor(problem: &Problem, state: &SimState) -> f64 {
    let ops = &problem.ops;
    let d = ops.mesh_dim;
    let mut total = 0.0;
    for c in 0..d {
        let uc = DVector::from_iterator(ops.n_nodes, (0..ops.n_nodes).map(|n| state.u[n * d + c]));
        total += uc.component_mul(&uc).dot(&ops.node_volume) + uc.dot(&spmv(&ops.k_lap, &uc));
    }
    for (p, pt) in ops.points.iter().enumerate() {
        total += pt.weight * state.z[p].norm_squared();
    }
    if ops.alpha > 0.0 && matches!(ops.points.first().map(|p| p.site), Some(PointSite::Node(_))) {
        for zk in component_fields(&state.z) {
            total += zk.dot(&spmv(&ops.k_alpha, &zk));
        }
    }
    total + state.theta.abs().dot(&ops.node_volume)
}

/// Trapezoidal accumulation of the exponent of `phi(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityTracker {
    /// Coefficient of `|theta|_inf` without the `z` term.
    pub base: f64,
    /// Coefficient of `(1 + |z|_inf^2) |theta|_inf`; zero when `alpha = 0`.
    pub z_coef: f64,
    pub heat_capacity_floor: f64,
    pub theta_bar: f64,
    integral: f64,
    last: Option<(f64, f64)>,
}

impl PositivityTracker {
    pub fn new(problem: &Problem) -> Self {
        let m = &problem.material;
        let beta = m.tensors.beta;
        let z_coef = if m.tensors.alpha > 0.0 {
            m.bounds.c_z_h2.powi(2) / m.floors.c_b
        } else {
            0.0
        };
        Self {
            base: 9.0 * beta * beta / (2.0 * m.floors.c_a),
            z_coef,
            heat_capacity_floor: m.floors.c_c,
            theta_bar: m.thermal.theta_bar,
            integral: 0.0,
            last: None,
        }
    }

    fn integrand(&self, theta_inf: f64, z_inf: f64) -> f64 {
        (self.base + self.z_coef * (1.0 + z_inf * z_inf)) * theta_inf
    }

    /// Records the state at time `t` and returns `phi(t)`.
    pub fn record(&mut self, t: f64, theta_inf: f64, z_inf: f64) -> f64 {
        let f = self.integrand(theta_inf, z_inf);
        if let Some((t0, f0)) = self.last {
            self.integral += 0.5 * (t - t0) * (f0 + f);
        }
        self.last = Some((t, f));
        self.phi()
    }

    pub fn phi(&self) -> f64 {
        (-self.integral / self.heat_capacity_floor).exp()
    }

    /// `theta_min - theta_bar phi`.
    pub fn margin(&self, theta_min: f64) -> f64 {
        theta_min - self.theta_bar * self.phi()
    }

    pub fn tolerance(&self) -> f64 {
        1e-8 * self.theta_bar
    }
}

/// Largest Euclidean norm over the material points.
pub fn z_inf(z: &[DVector<f64>]) -> f64 {
    z.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Positivity margins `theta_min(t_k) - theta_bar phi(t_k)` along a trajectory.
/// Fails with the index of the first step whose margin is below `-1e-8 theta_bar`.
pub fn positivity_check(problem: &Problem, trajectory: &[SimState]) -> Result<Vec<f64>> {
    let mut tracker = PositivityTracker::new(problem);
    let mut margins = Vec::with_capacity(trajectory.len());
    for (k, s) in trajectory.iter().enumerate() {
        tracker.record(s.t, s.theta.amax(), z_inf(&s.z));
        let margin = tracker.margin(s.theta.min());
        if margin < -tracker.tolerance() {
            return Err(Error::Step {
                t: s.t,
                reason: format!(
                    "temperature lower bound violated at step {k}: theta_min {} < theta_bar phi {}",
                    s.theta.min(),
                    tracker.theta_bar * tracker.phi()
                ),
                trace: margins,
            });
        }
        margins.push(margin);
    }
    Ok(margins)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    pub free_energy: f64,
    pub entropy: f64,
    pub internal_energy: f64,
    /// `dt * int xi` over the step.
    pub dissipation: f64,
    pub entropy_production: f64,
    pub energy_residual: f64,
    pub entropy_residual: f64,
    /// `int f . u_t`.
    pub external_power: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi: f64,
    pub monitor: f64,
    pub picard_iters: usize,
    pub picard_trace: Vec<f64>,
    pub momentum_residual: f64,
    pub flow_residual: f64,
}

/// Thresholds for the per-step assertions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticLimits {
    /// Bound for the global-estimate monitor.
    pub c0: f64,
    /// Monitor-only constant of the a-priori temperature estimate.
    pub c_theta: f64,
}

impl Default for DiagnosticLimits {
    fn default() -> Self {
        Self {
            c0: f64::INFINITY,
            c_theta: 1.0,
        }
    }
}

/// Every violated assertion of a report, as messages.
pub fn check_report(report: &StepReport, theta_bar: f64, limits: &DiagnosticLimits) -> Vec<String> {
    let mut out = Vec::new();
    let scale = 1.0 + report.monitor;
    let values = [
        report.free_energy,
        report.entropy,
        report.internal_energy,
        report.dissipation,
        report.entropy_production,
        report.monitor,
        report.phi,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        out.push(format!("t = {}: non-finite diagnostic value", report.t));
    }
    if report.dissipation < -1e-12 * scale * report.dt.max(f64::MIN_POSITIVE) {
        out.push(format!("t = {}: negative dissipation {}", report.t, report.dissipation));
    }
    if report.entropy_production < -1e-10 * scale {
        out.push(format!("t = {}: negative entropy production {}", report.t, report.entropy_production));
    }
    let bound = theta_bar * report.phi;
    if report.theta_min < bound - 1e-8 * theta_bar {
        out.push(format!(
            "t = {}: theta_min {} below theta_bar phi(t) = {}",
            report.t, report.theta_min, bound
        ));
    }
    if !(report.monitor < limits.c0) {
        out.push(format!("t = {}: global monitor {} exceeds C0 = {}", report.t, report.monitor, limits.c0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, MeshSpec};
    use crate::material::test_models::scalar_1d;
    use crate::state::Load;

    fn bar(beta: f64) -> Problem {
        let mesh = build_mesh(&MeshSpec::Interval { length: 1.0, n: 4 }).unwrap();
        Problem::new(mesh, scalar_1d(2.0, 2.0, beta, 1.0), Load::None, None).unwrap()
    }

    #[test]
    fn totals_of_zero_mechanics() {
        let p = bar(0.3);
        let s = p.uniform_state(&DVector::zeros(1), 1.0);
        let t = totals(&p, &s).unwrap();
        assert!((t.free_energy - 1.0).abs() < 1e-14);
        assert!(t.entropy.abs() < 1e-14);
        assert!((t.internal_energy - 1.0).abs() < 1e-14);
    }

    #[test]
    fn production_examples() {
        let p = bar(0.0);
        let th = DVector::from_element(5, 2.0);
        let src = HeatSource {
            dissipative: p.ops.node_volume.clone() * 2.0,
            coupling: DVector::zeros(5),
        };
        assert!((entropy_production(&p, &th, &src).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(entropy_production(&p, &th, &HeatSource::zeros(5)).unwrap(), 0.0);
        assert!((dissipation_rate(&src) - 2.0).abs() < 1e-14);
        let mut bad = th.clone();
        bad[2] = 0.0;
        assert!(matches!(entropy_production(&p, &bad, &src), Err(Error::Domain(_))));
    }

    #[test]
    fn monitor_examples() {
        let p = bar(0.0);
        let mut s = p.uniform_state(&DVector::zeros(1), 2.0);
        assert!((global_estimate_monitor(&p, &s) - 2.0).abs() < 1e-14);
        s.theta.fill(0.0);
        assert_eq!(global_estimate_monitor(&p, &s), 0.0);
        s.u = DVector::from_vec(vec![0.0, 0.1, -0.2, 0.05, 0.0]);
        let a = global_estimate_monitor(&p, &s);
        s.u *= 2.0;
        assert!((global_estimate_monitor(&p, &s) - 4.0 * a).abs() < 1e-14);
    }

    #[test]
    fn phi_closed_form_for_constant_temperature() {
        let p = bar(0.5);
        let mut tr = PositivityTracker::new(&p);
        let theta_bar = p.material.thermal.theta_bar;
        for k in 0..=10 {
            tr.record(0.1 * k as f64, theta_bar, 0.0);
        }
        let f = &p.material.floors;
        let exact = (-(9.0 * 0.25 * theta_bar / (2.0 * f.c_a * f.c_c)) * 1.0).exp();
        assert!((tr.phi() - exact).abs() < 1e-12);
        assert!((tr.margin(theta_bar) - theta_bar * (1.0 - exact)).abs() < 1e-12);
        let decoupled = PositivityTracker::new(&bar(0.0));
        assert_eq!(decoupled.phi(), 1.0);
    }

    #[test]
    fn injected_zero_temperature_fails() {
        let p = bar(0.1);
        let s0 = p.uniform_state(&DVector::zeros(1), 1.0);
        let mut s1 = s0.advance(0.1, s0.u.clone(), s0.z.clone(), s0.theta.clone());
        assert!(positivity_check(&p, &[s0.clone(), s1.clone()]).is_ok());
        s1.theta[2] = 0.0;
        assert!(matches!(positivity_check(&p, &[s0, s1]), Err(Error::Step { .. })));
    }
}
