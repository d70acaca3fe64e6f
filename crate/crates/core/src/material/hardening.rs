//! Hardening functionals `H(z, theta) = H1(z) + theta H2(z)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_len, Result};

/// Default regularization parameter for the smoothed indicator constraints.
pub const DEFAULT_DELTA: f64 = 1e-3;

/// Which hardening law is in use, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum HardeningModel {
    /// Linear kinematic hardening `H1 = 1/2 L z.z`, `H2 = 0`.
    MelanPrager { l: DMatrix<f64> },
    /// No hardening at all.
    PrandtlReuss { dim: usize },
    /// Regularized Souza-Auricchio hardening
    /// `c1 sqrt(delta^2 + |z|^2) + c2 |z|^2 + ((|z| - c3)_+)^4 / (delta (1 + |z|^2))`
    /// with `c1`, `c2` affine in temperature through the slopes.
    SouzaAuricchio(SouzaAuricchio),
    /// Regularized phase-fraction mixture with a quadratic smooth part.
    Mixture(Mixture),
    /// General quadratic `H_i = 1/2 z.L_i z + b_i.z`.
    Quadratic(Quadratic),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SouzaAuricchio {
    pub dim: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub delta: f64,
    /// Temperature slopes of `c1` and `c2`; these form `H2`.
    pub c1_slope: f64,
    pub c2_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    /// Transformation strains of the `N` phases (Mandel coordinates).
    pub phase_strains: Vec<DVector<f64>>,
    /// Smooth part `w(z) = 1/2 z.W z + b.z` entering `H1`.
    pub w: Quadratic1,
    /// Temperature-linear part entering `H2`.
    pub w_slope: Quadratic1,
    pub delta: f64,
}

/// One quadratic form `1/2 z.L z + b.z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic1 {
    pub l: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub h1: Quadratic1,
    pub h2: Quadratic1,
}

impl Quadratic1 {
    pub fn zero(m: usize) -> Self {
        Self {
            l: DMatrix::zeros(m, m),
            b: DVector::zeros(m),
        }
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.l * z)) + self.b.dot(z)
    }

    fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        0.5 * (&self.l + self.l.transpose()) * z + &self.b
    }

    fn hess(&self) -> DMatrix<f64> {
        0.5 * (&self.l + self.l.transpose())
    }

    fn is_zero(&self) -> bool {
        self.l.iter().all(|&x| x == 0.0) && self.b.iter().all(|&x| x == 0.0)
    }
}

/// Constants of the growth and curvature bounds the hardening must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct HardeningBounds {
    /// Coercivity `H1(z) >= c_h1 |z|^2 - c_h1_tilde`.
    pub c_h1: f64,
    pub c_h1_tilde: f64,
    /// Curvature bounds `|d2 H1| <= c_zz_h1`, `|d2 H2| <= c_zz_h2`.
    pub c_zz_h1: f64,
    pub c_zz_h2: f64,
    /// Gradient growth `|d H2(z)| <= c_z_h2 (1 + |z|)`.
    pub c_z_h2: f64,
}

impl Default for HardeningBounds {
    fn default() -> Self {
        Self {
            c_h1: 0.0,
            c_h1_tilde: 0.0,
            c_zz_h1: f64::INFINITY,
            c_zz_h2: f64::INFINITY,
            c_z_h2: 0.0,
        }
    }
}

/// Value and first two derivatives of a radial function `phi(|z|)` lifted to `z`.
fn radial(
    z: &DVector<f64>,
    phi: impl Fn(f64) -> (f64, f64, f64),
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let m = z.len();
    let r = z.norm();
    let (f, d1, d2) = phi(r);
    if r == 0.0 {
        // phi is even and smooth at the origin in every use below
        return (f, DVector::zeros(m), DMatrix::identity(m, m) * d2);
    }
    let n = z / r;
    let g = &n * d1;
    let nn = &n * n.transpose();
    let h = &nn * d2 + (DMatrix::identity(m, m) - &nn) * (d1 / r);
    (f, g, h)
}

/// `((x)_+)^4 / (delta (1 + r^2))` pieces: returns value, d/dr, d2/dr2 of
/// `p(r)^4 g(r)` given `p`, `p'`, `p''` and `r`.
fn quartic_penalty(p: f64, dp: f64, r: f64, delta: f64) -> (f64, f64, f64) {
    if p <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 + r * r;
    let g = 1.0 / (delta * q);
    let dg = -2.0 * r / (delta * q * q);
    let ddg = (6.0 * r * r - 2.0) / (delta * q * q * q);
    let p2 = p * p;
    let p3 = p2 * p;
    let p4 = p3 * p;
    // p is piecewise linear in r so p'' = 0
    let f = p4 * g;
    let d1 = 4.0 * p3 * dp * g + p4 * dg;
    let d2 = 12.0 * p2 * dp * dp * g + 8.0 * p3 * dp * dg + p4 * ddg;
    (f, d1, d2)
}

impl SouzaAuricchio {
    fn h1(&self) -> impl Fn(f64) -> (f64, f64, f64) + '_ {
        move |r| {
            let s = (self.delta * self.delta + r * r).sqrt();
            let a = (self.c1 * s, self.c1 * r / s, self.c1 * self.delta * self.delta / (s * s * s));
            let b = (self.c2 * r * r, 2.0 * self.c2 * r, 2.0 * self.c2);
            let c = quartic_penalty(r - self.c3, 1.0, r, self.delta);
            (a.0 + b.0 + c.0, a.1 + b.1 + c.1, a.2 + b.2 + c.2)
        }
    }

    fn h2(&self) -> impl Fn(f64) -> (f64, f64, f64) + '_ {
        move |r| {
            let s = (self.delta * self.delta + r * r).sqrt();
            let k = self.c1_slope;
            (
                k * s + self.c2_slope * r * r,
                k * r / s + 2.0 * self.c2_slope * r,
                k * self.delta * self.delta / (s * s * s) + 2.0 * self.c2_slope,
            )
        }
    }
}

impl Mixture {
    /// Number of independent phase fractions `N - 1`.
    pub fn dim(&self) -> usize {
        self.phase_strains.len().saturating_sub(1)
    }

    fn penalty(&self, z: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = z.len();
        let mut f = 0.0;
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        for k in 0..m {
            let x = z[k];
            // below zero: p = -x, p' = -1; above one: p = x - 1, p' = 1
            let (a0, a1, a2) = quartic_penalty(-x, -1.0, x, self.delta);
            let (b0, b1, b2) = quartic_penalty(x - 1.0, 1.0, x, self.delta);
            f += a0 + b0;
            g[k] = a1 + b1;
            h[(k, k)] = a2 + b2;
        }
        (f, g, h)
    }
}

impl HardeningModel {
    /// Dimension `m` of the internal-variable space.
    pub fn dim(&self) -> usize {
        match self {
            HardeningModel::MelanPrager { l } => l.nrows(),
            HardeningModel::PrandtlReuss { dim } => *dim,
            HardeningModel::SouzaAuricchio(sa) => sa.dim,
            HardeningModel::Mixture(mx) => mx.dim(),
            HardeningModel::Quadratic(q) => q.h1.b.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HardeningModel::MelanPrager { .. } => "melan_prager",
            HardeningModel::PrandtlReuss { .. } => "prandtl_reuss",
            HardeningModel::SouzaAuricchio(_) => "souza_auricchio",
            HardeningModel::Mixture(_) => "mixture",
            HardeningModel::Quadratic(_) => "quadratic",
        }
    }

    /// True when `H2` vanishes identically.
    pub fn h2_is_zero(&self) -> bool {
        match self {
            HardeningModel::MelanPrager { .. } | HardeningModel::PrandtlReuss { .. } => true,
            HardeningModel::SouzaAuricchio(sa) => sa.c1_slope == 0.0 && sa.c2_slope == 0.0,
            HardeningModel::Mixture(mx) => mx.w_slope.is_zero(),
            HardeningModel::Quadratic(q) => q.h2.is_zero(),
        }
    }

    /// `(H1, dH1, d2H1)` at `z`.
    pub fn h1_all(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        check_len("internal variable", self.dim(), z.len())?;
        let m = z.len();
        Ok(match self {
            HardeningModel::MelanPrager { l } => {
                let lz = l * z;
                (0.5 * z.dot(&lz), lz, l.clone())
            }
            HardeningModel::PrandtlReuss { .. } => {
                (0.0, DVector::zeros(m), DMatrix::zeros(m, m))
            }
            HardeningModel::SouzaAuricchio(sa) => radial(z, sa.h1()),
            HardeningModel::Mixture(mx) => {
                let (f, g, h) = mx.penalty(z);
                (f + mx.w.value(z), g + mx.w.grad(z), h + mx.w.hess())
            }
            HardeningModel::Quadratic(q) => (q.h1.value(z), q.h1.grad(z), q.h1.hess()),
        })
    }

    /// `(H2, dH2, d2H2)` at `z`.
    pub fn h2_all(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        check_len("internal variable", self.dim(), z.len())?;
        let m = z.len();
        Ok(match self {
            HardeningModel::MelanPrager { .. } | HardeningModel::PrandtlReuss { .. } => {
                (0.0, DVector::zeros(m), DMatrix::zeros(m, m))
            }
            HardeningModel::SouzaAuricchio(sa) => radial(z, sa.h2()),
            HardeningModel::Mixture(mx) => {
                (mx.w_slope.value(z), mx.w_slope.grad(z), mx.w_slope.hess())
            }
            HardeningModel::Quadratic(q) => (q.h2.value(z), q.h2.grad(z), q.h2.hess()),
        })
    }

    pub fn h1(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.h1_all(z)?.0)
    }

    pub fn grad_h1(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.h1_all(z)?.1)
    }

    pub fn h2(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.h2_all(z)?.0)
    }

    pub fn grad_h2(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.h2_all(z)?.1)
    }

    /// Typical magnitude of `z` used to size random spot checks.
    pub fn sample_radius(&self) -> f64 {
        match self {
            HardeningModel::SouzaAuricchio(sa) => 10.0 * sa.c3.max(sa.delta),
            HardeningModel::Mixture(_) => 2.0,
            _ => 1.0,
        }
    }

    /// Spot-checks the growth and curvature bounds on `samples` random points.
    /// Returns human-readable descriptions of every violation found.
    pub fn spot_check<R: Rng>(
        &self,
        bounds: &HardeningBounds,
        samples: usize,
        rng: &mut R,
    ) -> Vec<String> {
        let m = self.dim();
        let radius = self.sample_radius();
        let mut out = Vec::new();
        let mut worst = [0.0f64; 4];
        for _ in 0..samples {
            let z = DVector::from_fn(m, |_, _| rng.gen_range(-radius..radius));
            let (Ok((h1, _, hh1)), Ok((_, g2, hh2))) = (self.h1_all(&z), self.h2_all(&z)) else {
                continue;
            };
            let n2 = z.norm_squared();
            let coerc = bounds.c_h1 * n2 - bounds.c_h1_tilde - h1;
            worst[0] = worst[0].max(coerc);
            let s1 = hh1.norm();
            let s2 = hh2.norm();
            worst[1] = worst[1].max(s1 - bounds.c_zz_h1);
            worst[2] = worst[2].max(s2 - bounds.c_zz_h2);
            worst[3] = worst[3].max(g2.norm() - bounds.c_z_h2 * (1.0 + n2.sqrt()));
        }
        let tol = 1e-9;
        if worst[0] > tol {
            out.push(format!(
                "H1 violates the coercivity bound H1(z) >= c_h1 |z|^2 - c_h1_tilde by {:.3e}",
                worst[0]
            ));
        }
        if worst[1] > tol {
            out.push(format!("|d2 H1| exceeds c_zz_h1 by {:.3e}", worst[1]));
        }
        if worst[2] > tol {
            out.push(format!("|d2 H2| exceeds c_zz_h2 by {:.3e}", worst[2]));
        }
        if worst[3] > tol {
            out.push(format!("|d H2| exceeds c_z_h2 (1 + |z|) by {:.3e}", worst[3]));
        }
        out
    }
}
