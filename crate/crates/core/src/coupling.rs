//! Staggered thermomechanical time stepping.
//!
//! Each step freezes a temperature guess, solves the mechanical step at that
//! temperature, feeds the resulting rates into the heat equation and repeats
//! with the new temperature until the guess stops moving (or once, in the
//! staggered mode). Failed steps are retried with half the step size.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::diagnostics::{self, DiagnosticLimits, PositivityTracker, StepReport};
use crate::error::{Error, Result};
use crate::mech::{Linearization, MechSolver, MechStepConfig};
use crate::state::{Problem, SimState};
use crate::thermal::{heat_rhs, heat_step, CouplingTreatment, HeatStepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingMode {
    /// One mechanical solve and one heat solve per step.
    StaggeredOnce,
    /// Fixed-point iteration on the temperature until `picard_tol`.
    #[default]
    PicardToConvergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub t_end: f64,
    /// Initial and largest step size.
    pub dt: f64,
    /// Smallest step size tried before giving up.
    pub dt_min: f64,
    /// Halve on failure, grow back after clean steps.
    pub adaptive: bool,
    /// Relative tolerance on the L4 norm of the temperature update.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub mode: CouplingMode,
    /// Relaxation `omega` in `theta_guess <- (1 - omega) theta_guess + omega theta`.
    pub relaxation: f64,
    pub mech_tol: f64,
    pub mech_max_iter: usize,
    pub linearization: Linearization,
    pub heat_coupling: CouplingTreatment,
    pub consistent_mass: bool,
    pub limits: DiagnosticLimits,
}

/// Clean steps after which the step size is doubled again.
pub const GROWTH_AFTER: usize = 5;

impl CouplingConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            dt_min: dt / 64.0,
            adaptive: true,
            picard_tol: 1e-10,
            picard_max: 50,
            mode: CouplingMode::PicardToConvergence,
            relaxation: 1.0,
            mech_tol: 1e-9,
            mech_max_iter: 200,
            linearization: Linearization::FrozenZ,
            heat_coupling: CouplingTreatment::SemiImplicit,
            consistent_mass: false,
            limits: DiagnosticLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_end", self.t_end),
            ("dt", self.dt),
            ("dt_min", self.dt_min),
            ("picard_tol", self.picard_tol),
            ("mech_tol", self.mech_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.dt_min > self.dt {
            return Err(Error::Config(format!("dt_min {} exceeds dt {}", self.dt_min, self.dt)));
        }
        if self.picard_max == 0 || self.mech_max_iter == 0 {
            return Err(Error::Config("iteration limits must be at least 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Config(format!("relaxation must lie in (0, 1], got {}", self.relaxation)));
        }
        Ok(())
    }

    fn mech(&self, dt: f64) -> MechStepConfig {
        MechStepConfig {
            dt,
            tol: self.mech_tol,
            max_iter: self.mech_max_iter,
            linearization: self.linearization,
        }
    }

    fn heat(&self, dt: f64) -> HeatStepConfig {
        HeatStepConfig {
            dt,
            coupling: self.heat_coupling,
            consistent_mass: self.consistent_mass,
        }
    }
}

/// `(sum_i vol_i v_i^4)^(1/4)` with the lumped nodal volumes.
pub fn l4_norm(node_volume: &DVector<f64>, v: &DVector<f64>) -> f64 {
    v.iter()
        .zip(node_volume.iter())
        .map(|(x, w)| w * x.powi(4))
        .sum::<f64>()
        .powf(0.25)
}

/// Whether a residual sequence ever increases.
pub fn is_monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0])
}

/// One coupled step of size `dt` from `state`, using a solver factorized for `dt`.
/// The report's `phi` is taken from `tracker` after recording the new state;
/// the tracker itself is left untouched.
pub fn picard_step(
    problem: &Problem,
    state: &SimState,
    solver: &MechSolver,
    cfg: &CouplingConfig,
    tracker: &PositivityTracker,
) -> Result<(SimState, StepReport)> {
    let dt = solver.dt;
    let t_new = state.t + dt;
    let mcfg = cfg.mech(dt);
    let hcfg = cfg.heat(dt);
    let vol = &problem.ops.node_volume;
    let mut guess = state.theta.clone();
    let mut trace = Vec::new();
    let mut last = None;
    for k in 0..cfg.picard_max {
        let mech = solver.step(problem, state, &guess, &mcfg)?;
        let source = heat_rhs(problem, &mech.u, &state.u, &mech.z, &state.z, t_new, dt)?;
        let theta = heat_step(problem, &state.theta, &source, &guess, &hcfg)?;
        let residual = l4_norm(vol, &(&theta - &guess)) / l4_norm(vol, &theta).max(1.0);
        trace.push(residual);
        if !residual.is_finite() {
            break;
        }
        let done = residual <= cfg.picard_tol || cfg.mode == CouplingMode::StaggeredOnce;
        if done {
            last = Some((mech, source, theta));
            break;
        }
        if k + 1 == cfg.picard_max {
            break;
        }
        guess = if cfg.relaxation == 1.0 {
            theta
        } else {
            guess * (1.0 - cfg.relaxation) + theta * cfg.relaxation
        };
    }
    let Some((mech, source, theta)) = last else {
        return Err(Error::Step {
            t: t_new,
            reason: "Picard iteration did not converge".into(),
            trace,
        });
    };
    if !is_monotone(&trace) {
        log::warn!("non-monotone Picard residuals at t = {t_new}: {trace:?}");
    }
    if let Some(bad) = theta.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Step {
            t: t_new,
            reason: format!("temperature lost positivity ({bad})"),
            trace,
        });
    }
    let new = state.advance(t_new, mech.u, mech.z, theta);
    let before = diagnostics::totals(problem, state)?;
    let after = diagnostics::totals(problem, &new)?;
    let force = problem.load.vector(&problem.mesh, &problem.ops, t_new);
    let work = force.dot(&(&new.u - &state.u));
    let production = diagnostics::entropy_production(problem, &new.theta, &source)?;
    let delta_internal = after.internal_energy - before.internal_energy;
    let mut tr = tracker.clone();
    let phi = tr.record(t_new, new.theta.amax(), diagnostics::z_inf(&new.z));
    let report = StepReport {
        t: t_new,
        dt,
        free_energy: after.free_energy,
        entropy: after.entropy,
        internal_energy: after.internal_energy,
        dissipation: dt * diagnostics::dissipation_rate(&source),
        entropy_production: production,
        energy_residual: diagnostics::energy_balance_residual(delta_internal, work),
        entropy_residual: diagnostics::entropy_balance_residual(after.entropy - before.entropy, dt, production),
        external_power: work / dt,
        theta_min: new.theta.min(),
        theta_max: new.theta.max(),
        phi,
        monitor: diagnostics::global_estimate_monitor(problem, &new),
        picard_iters: trace.len(),
        picard_trace: trace,
        momentum_residual: mech.report.momentum_residual,
        flow_residual: mech.report.flow_residual,
    };
    Ok((new, report))
}

/// Trajectory, per-step reports and the diagnostic violations of a run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub states: Vec<SimState>,
    pub reports: Vec<StepReport>,
    pub violations: Vec<String>,
}

/// Outer time loop with step-size control. Keeps everything produced so
/// far, so a failed run can still be written out.
pub struct Driver<'a> {
    problem: &'a Problem,
    cfg: CouplingConfig,
    solvers: HashMap<u64, MechSolver>,
    tracker: PositivityTracker,
    dt: f64,
    clean: usize,
    pub states: Vec<SimState>,
    pub reports: Vec<StepReport>,
    pub violations: Vec<String>,
}

impl<'a> Driver<'a> {
    pub fn new(problem: &'a Problem, initial: SimState, cfg: CouplingConfig) -> Result<Self> {
        cfg.validate()?;
        initial.check(&problem.ops, problem.material.z_dim())?;
        let mut tracker = PositivityTracker::new(problem);
        tracker.record(initial.t, initial.theta.amax(), diagnostics::z_inf(&initial.z));
        let mut violations = Vec::new();
        let bar = problem.material.thermal.theta_bar;
        if initial.theta.min() < bar - tracker.tolerance() {
            violations.push(format!(
                "initial temperature minimum {} is below theta_bar = {bar}",
                initial.theta.min()
            ));
        }
        Ok(Self {
            problem,
            dt: cfg.dt,
            cfg,
            solvers: HashMap::new(),
            tracker,
            clean: 0,
            states: vec![initial],
            reports: Vec::new(),
            violations,
        })
    }

    pub fn current(&self) -> &SimState {
        self.states.last().expect("driver always holds the initial state")
    }

    pub fn is_done(&self) -> bool {
        self.current().t >= self.cfg.t_end * (1.0 - 1e-12)
    }

    fn ensure_solver(&mut self, dt: f64) -> Result<()> {
        if let std::collections::hash_map::Entry::Vacant(slot) = self.solvers.entry(dt.to_bits()) {
            slot.insert(MechSolver::new(self.problem, dt)?);
        }
        Ok(())
    }

    /// Advances by one accepted step.
    pub fn step(&mut self) -> Result<&StepReport> {
        let t = self.current().t;
        let remaining = self.cfg.t_end - t;
        let mut dt = self.dt.min(remaining);
        if remaining - dt < 1e-9 * dt {
            dt = remaining;
        }
        let mut failures = Vec::new();
        loop {
            let attempt = self.ensure_solver(dt).and_then(|_| {
                let solver = &self.solvers[&dt.to_bits()];
                picard_step(self.problem, self.current(), solver, &self.cfg, &self.tracker)
            });
            match attempt {
                Ok((state, report)) => {
                    self.tracker
                        .record(state.t, state.theta.amax(), diagnostics::z_inf(&state.z));
                    let bar = self.problem.material.thermal.theta_bar;
                    self.violations
                        .extend(diagnostics::check_report(&report, bar, &self.cfg.limits));
                    self.states.push(state);
                    self.reports.push(report);
                    self.clean += 1;
                    if self.cfg.adaptive && self.clean >= GROWTH_AFTER && self.dt < self.cfg.dt {
                        self.dt = (2.0 * self.dt).min(self.cfg.dt);
                        self.clean = 0;
                    }
                    return Ok(self.reports.last().expect("just pushed"));
                }
                Err(e @ (Error::Shape { .. } | Error::Config(_))) => return Err(e),
                Err(e) => {
                    log::info!("step at t = {t} with dt = {dt} failed: {e}");
                    match &e {
                        Error::Step { trace, .. } => failures.extend_from_slice(trace),
                        Error::Convergence { residual, .. } => failures.push(*residual),
                        _ => {}
                    }
                    let half = 0.5 * dt;
                    if !self.cfg.adaptive || half < self.cfg.dt_min * (1.0 - 1e-12) {
                        return Err(Error::Step {
                            t: t + dt,
                            reason: format!("step failed at the smallest step size {dt}: {e}"),
                            trace: failures,
                        });
                    }
                    dt = half;
                    self.dt = half;
                    self.clean = 0;
                }
            }
        }
    }

    /// Steps until `t_end`.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_result(self) -> RunResult {
        RunResult {
            states: self.states,
            reports: self.reports,
            violations: self.violations,
        }
    }
}

/// Runs from `initial` to `cfg.t_end`. Step failures below the step-size
/// floor abort the run with the failing step's trace.
pub fn run(problem: &Problem, initial: SimState, cfg: &CouplingConfig) -> Result<RunResult> {
    let mut driver = Driver::new(problem, initial, cfg.clone())?;
    driver.run()?;
    Ok(driver.into_result())
}

/// Outcome of the smallness test on the thermal-expansion coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicator {
    pub threshold: f64,
    /// `0 < beta < threshold`.
    pub flag: bool,
    /// `beta = 0`: no coupling, global existence needs no smallness.
    pub decoupled: bool,
}

impl Indicator {
    pub fn describe(&self) -> String {
        if self.decoupled {
            "decoupled/global by construction".to_string()
        } else if self.flag {
            format!("beta below the advisory threshold {}", self.threshold)
        } else {
            format!("beta not below the advisory threshold {}", self.threshold)
        }
    }
}

fn check_indicator_inputs(beta: f64, c_hat: f64, t_end: f64, q: f64) -> Result<()> {
    if !(c_hat > 0.0) {
        return Err(Error::Domain(format!("C_hat must be positive, got {c_hat}")));
    }
    if !(t_end > 0.0) {
        return Err(Error::Domain(format!("T must be positive, got {t_end}")));
    }
    if !(q > 8.0) {
        return Err(Error::Domain(format!("q must exceed 8, got {q}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("beta must be nonnegative, got {beta}")));
    }
    Ok(())
}

/// Advisory global-existence test `0 < beta < 1 / (2 C_hat T^(1/q))` for
/// `alpha = 0`. `C_hat` is an abstract constant supplied by the user.
pub fn global_existence_indicator(beta: f64, c_hat: f64, t_end: f64, q: f64) -> Result<Indicator> {
    check_indicator_inputs(beta, c_hat, t_end, q)?;
    let threshold = 1.0 / (2.0 * c_hat * t_end.powf(1.0 / q));
    Ok(Indicator {
        threshold,
        flag: 0.0 < beta && beta < threshold,
        decoupled: beta == 0.0,
    })
}

/// `C_hat (1 + beta^2 T^(2/q) R^2) - R`; negative somewhere exactly when the
/// indicator flag holds.
pub fn gamma_q(r: f64, beta: f64, c_hat: f64, t_end: f64, q: f64) -> f64 {
    c_hat * (1.0 + beta * beta * t_end.powf(2.0 / q) * r * r) - r
}

/// Result of the radius scan for `alpha > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusScan {
    /// Smallest scanned radius with `g(X(R)) <= R`.
    pub radius: Option<f64>,
    /// Minimum of `g(X(R)) - R` over the scan.
    pub min_gap: f64,
}

/// Scans `R` for `g((beta^2 + C_z^2) R^2) <= R` with
/// `g(X) = C_hat (X + 1)^4 exp(4 c0 (X + 1) T)`.
pub fn gradient_branch_scan(beta: f64, c_z: f64, c_hat: f64, c0: f64, t_end: f64) -> Result<RadiusScan> {
    check_indicator_inputs(beta, c_hat, t_end, 9.0)?;
    if !(c0 >= 0.0) || !(c_z >= 0.0) {
        return Err(Error::Domain("c0 and C_z must be nonnegative".into()));
    }
    let k = beta * beta + c_z * c_z;
    let g = |x: f64| c_hat * (x + 1.0).powi(4) * (4.0 * c0 * (x + 1.0) * t_end).exp();
    // any admissible radius exceeds g(0)
    let r0 = g(0.0);
    let n = 4000;
    let decades = 12.0;
    let mut out = RadiusScan {
        radius: None,
        min_gap: f64::INFINITY,
    };
    for i in 0..=n {
        let r = r0 * 10f64.powf(decades * i as f64 / n as f64);
        let gap = g(k * r * r) - r;
        if gap < out.min_gap {
            out.min_gap = gap;
        }
        if gap <= 0.0 && out.radius.is_none() {
            out.radius = Some(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_mesh, MeshSpec};
    use crate::io::expr::Expr;
    use crate::material::test_models::scalar_1d;
    use crate::state::Load;

    fn bar(beta: f64, load: &str) -> Problem {
        let mesh = build_mesh(&MeshSpec::Interval { length: 1.0, n: 8 }).unwrap();
        let load = Load::Body {
            components: vec![Expr::parse(load).unwrap()],
        };
        Problem::new(mesh, scalar_1d(2.0, 1.0, beta, 1.0), load, None).unwrap()
    }

    #[test]
    fn indicator_examples() {
        let ind = global_existence_indicator(0.4, 1.0, 1.0, 16.0).unwrap();
        assert_eq!(ind.threshold, 0.5);
        assert!(ind.flag);
        assert!(!global_existence_indicator(0.5, 1.0, 1.0, 16.0).unwrap().flag);
        let zero = global_existence_indicator(0.0, 1.0, 1.0, 16.0).unwrap();
        assert!(zero.decoupled && !zero.flag);
        assert!(zero.describe().contains("global by construction"));
        assert!(global_existence_indicator(0.1, 0.0, 1.0, 16.0).is_err());
        assert!(global_existence_indicator(0.1, 1.0, 1.0, 8.0).is_err());
    }

    #[test]
    fn indicator_matches_gamma_minimum() {
        // closed form of the minimum of gamma_q, independent of the threshold formula
        for &(beta, c, t, q) in &[(0.3, 1.0, 2.0, 12.0), (0.49, 1.0, 1.0, 16.0), (0.2, 3.0, 0.5, 10.0)] {
            let r_min = 1.0 / (2.0 * c * beta * beta * f64::powf(t, 2.0 / q));
            let negative = gamma_q(r_min, beta, c, t, q) < 0.0;
            assert_eq!(negative, global_existence_indicator(beta, c, t, q).unwrap().flag);
            assert!(gamma_q(r_min * 1.01, beta, c, t, q) >= gamma_q(r_min, beta, c, t, q));
        }
    }

    #[test]
    fn radius_scan_needs_small_coupling() {
        let small = gradient_branch_scan(1e-3, 1e-3, 1.0, 0.1, 1.0).unwrap();
        let r = small.radius.unwrap();
        let x = 2e-6 * r * r;
        assert!((x + 1.0).powi(4) * (0.4 * (x + 1.0)).exp() <= r);
        let large = gradient_branch_scan(1.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        assert!(large.radius.is_none() && large.min_gap > 0.0);
    }

    #[test]
    fn decoupled_converges_in_two_and_modes_agree() {
        let p = bar(0.0, "sin(3.14159 * x) * t");
        let s0 = p.uniform_state(&DVector::zeros(1), 1.0);
        let mut cfg = CouplingConfig::new(0.5, 0.05);
        let a = run(&p, s0.clone(), &cfg).unwrap();
        assert_eq!(a.states.len(), 11);
        assert!(a.reports.iter().all(|r| r.picard_iters <= 2));
        cfg.mode = CouplingMode::StaggeredOnce;
        let b = run(&p, s0, &cfg).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((&x.u - &y.u).amax() <= 1e-12);
            assert!((&x.theta - &y.theta).amax() <= 1e-12);
        }
        assert!(a.violations.is_empty(), "{:?}", a.violations);
    }

    #[test]
    fn equilibrium_takes_one_iteration() {
        let p = bar(0.3, "0");
        let s0 = p.uniform_state(&DVector::zeros(1), 1.0);
        let out = run(&p, s0.clone(), &CouplingConfig::new(0.3, 0.1)).unwrap();
        for (r, s) in out.reports.iter().zip(&out.states[1..]) {
            assert_eq!(r.picard_iters, 1);
            assert!((&s.theta - &s0.theta).amax() < 1e-13);
            assert!(r.energy_residual < 1e-12);
        }
    }

    #[test]
    fn restart_matches_single_run() {
        let p = bar(0.2, "2 * t");
        let s0 = p.uniform_state(&DVector::zeros(1), 1.0);
        let full = run(&p, s0.clone(), &CouplingConfig::new(1.0, 0.1)).unwrap();
        let half = run(&p, s0, &CouplingConfig::new(0.5, 0.1)).unwrap();
        let rest = run(&p, half.states.last().unwrap().clone(), &CouplingConfig::new(1.0, 0.1)).unwrap();
        let (a, b) = (full.states.last().unwrap(), rest.states.last().unwrap());
        assert!((&a.u - &b.u).amax() <= 1e-14);
        assert!((&a.theta - &b.theta).amax() <= 1e-14);
    }

    #[test]
    fn contraction_grows_with_beta() {
        let mut factors = Vec::new();
        for beta in [0.01, 0.1, 0.5] {
            let p = bar(beta, "5 * t");
            let s0 = p.uniform_state(&DVector::zeros(1), 1.0);
            let mut d = Driver::new(&p, s0, CouplingConfig::new(0.4, 0.2)).unwrap();
            d.step().unwrap();
            let tr = &d.step().unwrap().picard_trace;
            assert!(tr.len() >= 3, "{tr:?}");
            let f = (tr[tr.len() - 2] / tr[0]).powf(1.0 / (tr.len() - 2) as f64);
            assert!(f < 1.0);
            factors.push(f);
        }
        assert!(factors[0] < factors[1] && factors[1] < factors[2], "{factors:?}");
    }

    #[test]
    fn failing_step_is_reported() {
        let p = bar(0.2, "t");
        let s0 = p.uniform_state(&DVector::zeros(1), 1.0);
        let mut cfg = CouplingConfig::new(0.2, 0.1);
        cfg.picard_max = 1;
        cfg.picard_tol = 1e-30;
        match run(&p, s0, &cfg) {
            Err(Error::Step { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected a step failure, got {other:?}"),
        }
    }
}
