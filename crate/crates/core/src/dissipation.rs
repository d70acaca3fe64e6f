//! Positively 1-homogeneous dissipation potentials and the pointwise implicit
//! flow-rule solver.
//!
//! A backward-Euler step of the flow rule at one material point reduces to
//! the inclusion `0 in dPsi(v) + M v + g`, i.e. the minimization of the
//! strongly convex objective `Psi(v) + 1/2 M v.v + g.v`. Since `dPsi` is
//! 0-homogeneous the rate and increment forms of the inclusion coincide.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DissipationPotential {
    /// `Psi(v) = sigma_y |v|` (Euclidean norm of the stored coordinates).
    NormScaled { sigma_y: f64 },
    /// `Psi(v) = sum_i w_i |v_i|`.
    WeightedL1 { weights: DVector<f64> },
    /// `Psi = 0`: purely viscous evolution.
    Zero,
}

impl DissipationPotential {
    pub fn value(&self, v: &DVector<f64>) -> f64 {
        match self {
            DissipationPotential::NormScaled { sigma_y } => sigma_y * v.norm(),
            DissipationPotential::WeightedL1 { weights } => {
                weights.iter().zip(v.iter()).map(|(w, x)| w * x.abs()).sum()
            }
            DissipationPotential::Zero => 0.0,
        }
    }

    /// Smallest `C` with `Psi(v) <= C |v|`.
    pub fn bound_constant(&self) -> f64 {
        match self {
            DissipationPotential::NormScaled { sigma_y } => *sigma_y,
            DissipationPotential::WeightedL1 { weights } => weights.norm(),
            DissipationPotential::Zero => 0.0,
        }
    }

    /// Parameter sanity: nonnegative yield data.
    pub fn validate(&self, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            DissipationPotential::NormScaled { sigma_y } => {
                if !(*sigma_y >= 0.0) || !sigma_y.is_finite() {
                    out.push(format!("yield value sigma_y = {sigma_y} must be finite and >= 0"));
                }
            }
            DissipationPotential::WeightedL1 { weights } => {
                if weights.len() != m {
                    out.push(format!(
                        "weighted_l1 needs {m} weights, got {}",
                        weights.len()
                    ));
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    out.push("weighted_l1 weights must be finite and >= 0".into());
                }
            }
            DissipationPotential::Zero => {}
        }
        out
    }

    /// `prox_{Psi / lambda}(x) = argmin_v Psi(v) + lambda/2 |v - x|^2`.
    pub fn prox(&self, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
        match self {
            DissipationPotential::NormScaled { sigma_y } => {
                let n = x.norm();
                let t = sigma_y / lambda;
                if n <= t {
                    DVector::zeros(x.len())
                } else {
                    x * ((n - t) / n)
                }
            }
            DissipationPotential::WeightedL1 { weights } => DVector::from_fn(x.len(), |i, _| {
                soft_threshold(x[i], weights[i] / lambda)
            }),
            DissipationPotential::Zero => x.clone(),
        }
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// One pointwise implicit flow-rule inclusion `0 in dPsi(v) + M v + g`.
#[derive(Debug, Clone)]
pub struct ProxProblem {
    pub metric: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub dt: f64,
    pub potential: DissipationPotential,
}

pub const PROX_TOL: f64 = 1e-12;
pub const PROX_MAX_ITER: usize = 10_000;

impl ProxProblem {
    pub fn new(
        metric: DMatrix<f64>,
        rhs: DVector<f64>,
        dt: f64,
        potential: DissipationPotential,
    ) -> Self {
        Self {
            metric,
            rhs,
            dt,
            potential,
        }
    }

    fn check(&self) -> Result<()> {
        let m = self.rhs.len();
        if self.metric.nrows() != m || self.metric.ncols() != m {
            return Err(Error::Shape {
                what: "prox metric",
                expected: m,
                got: self.metric.nrows(),
            });
        }
        if !(self.dt > 0.0) {
            return Err(Error::Domain(format!("step size must be positive, got {}", self.dt)));
        }
        if crate::tensor::asymmetry(&self.metric) > 1e-12 {
            return Err(Error::Numeric("prox metric is not symmetric".into()));
        }
        Ok(())
    }

    /// Objective `Psi(v) + 1/2 M v.v + g.v`.
    pub fn objective(&self, v: &DVector<f64>) -> f64 {
        self.potential.value(v) + 0.5 * v.dot(&(&self.metric * v)) + self.rhs.dot(v)
    }
}

/// Solves the inclusion and returns the rate `v`.
pub fn solve_inclusion(p: &ProxProblem) -> Result<DVector<f64>> {
    p.check()?;
    let m = p.rhs.len();
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    if p.rhs.iter().all(|&g| g == 0.0) {
        return Ok(DVector::zeros(m));
    }
    let (lo, hi) = crate::tensor::eig_range(&p.metric);
    if !(lo > 0.0) {
        return Err(Error::Numeric(format!(
            "prox metric is not positive definite (smallest eigenvalue {lo:e})"
        )));
    }

    // closed forms: scalar-multiple-of-identity metrics
    let diag = DVector::from_fn(m, |i, _| p.metric[(i, i)]);
    let off = (&p.metric - DMatrix::from_diagonal(&diag)).amax();
    let is_diag = off <= 1e-14 * hi;
    let is_scalar = is_diag && (hi - lo) <= 1e-14 * hi;
    match &p.potential {
        DissipationPotential::Zero => {
            let chol = p.metric.clone().cholesky().ok_or_else(|| {
                Error::Numeric("prox metric Cholesky factorization failed".into())
            })?;
            return Ok(-chol.solve(&p.rhs));
        }
        DissipationPotential::NormScaled { sigma_y } if is_scalar || m == 1 => {
            let mu = diag[0];
            let n = p.rhs.norm();
            let k = (n - sigma_y).max(0.0);
            return Ok(&p.rhs * (-k / (n * mu)));
        }
        DissipationPotential::WeightedL1 { weights } if is_diag => {
            return Ok(DVector::from_fn(m, |i, _| {
                -soft_threshold(p.rhs[i], weights[i]) / diag[i]
            }));
        }
        _ => {}
    }

    // proximal-gradient iteration with step 1/lambda_max
    let lambda = hi;
    let mut v = DVector::zeros(m);
    let mut last = f64::INFINITY;
    for _ in 0..PROX_MAX_ITER {
        let grad = &p.metric * &v + &p.rhs;
        let next = p.potential.prox(&(&v - grad / lambda), lambda);
        let change = (&next - &v).norm();
        v = next;
        last = change;
        if change <= PROX_TOL * (1.0 + v.norm()) {
            return Ok(v);
        }
    }
    Err(Error::Convergence {
        what: "proximal inclusion solver",
        iterations: PROX_MAX_ITER,
        residual: last,
    })
}

/// Number of random probe directions in the residual oracle.
pub const RESIDUAL_RANDOM_PROBES: usize = 32;
const RESIDUAL_SEED: u64 = 0x5eed_0f_9a5;

/// Largest violation of the variational inequality
/// `Psi(v) - Psi(zdot) + (M zdot + g).(v - zdot) >= 0` over a fixed probe set:
/// the `2m` signed axis directions, random unit vectors from a fixed seed, the
/// normalized candidate direction, `0` and `2 zdot`.
pub fn subgradient_residual(zdot: &DVector<f64>, p: &ProxProblem) -> f64 {
    let m = zdot.len();
    let psi0 = p.potential.value(zdot);
    let slope = &p.metric * zdot + &p.rhs;
    let vi = |v: &DVector<f64>| -> f64 {
        let gap = p.potential.value(v) - psi0 + slope.dot(&(v - zdot));
        (-gap).max(0.0)
    };
    let mut worst = 0.0f64;
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(m);
            e[i] = s;
            worst = worst.max(vi(&e));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(RESIDUAL_SEED);
    for _ in 0..RESIDUAL_RANDOM_PROBES {
        worst = worst.max(vi(&random_unit_vector(&mut rng, m)));
    }
    let n = zdot.norm();
    if n > 0.0 {
        worst = worst.max(vi(&(zdot / n)));
    }
    worst = worst.max(vi(&DVector::zeros(m)));
    worst = worst.max(vi(&(zdot * 2.0)));
    worst
}

/// Uniform direction on the unit sphere from normalized Gaussian samples.
pub fn random_unit_vector<R: rand::Rng>(rng: &mut R, m: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}
