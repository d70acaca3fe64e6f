//! Constitutive data and the energy/entropy quantities derived from it.
//!
//! The Helmholtz free energy splits as
//! `W(eps, z, theta) = W_mech(eps, z) - W_theta(theta) + theta W_coup(eps, z)` with
//!
//! - `W_mech = 1/2 E (eps - Q z) : (eps - Q z) + alpha/2 |grad z|^2 + H1(z)`,
//! - `W_theta = c (theta ln theta - theta)`,
//! - `W_coup = beta tr(eps) + H2(z)`.
//!
//! All strains and stresses are Mandel vectors (see [`crate::tensor`]).

pub mod hardening;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dissipation::DissipationPotential;
use crate::error::{check_len, Error, Result};
use crate::io::expr::Expr;
use crate::tensor;

pub use hardening::{HardeningBounds, HardeningModel};

/// A scalar field over the domain: a constant or a closed-form expression in `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Constant(f64),
    Expr(Expr),
}

impl Field {
    pub fn at(&self, x: [f64; 2]) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Expr(e) => e.eval(x[0], x[1], 0.0),
        }
    }
}

impl Default for Field {
    fn default() -> Self {
        Field::Constant(1.0)
    }
}

/// Mechanical tensors and scalar coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorParams {
    /// Elasticity `E` on Mandel strains.
    pub elasticity: DMatrix<f64>,
    /// Element-wise multiplier of `E`.
    pub elasticity_field: Field,
    /// Strain-rate viscosity `A`.
    pub viscosity_a: DMatrix<f64>,
    /// Internal-variable viscosity `B` on `Z`.
    pub viscosity_b: DMatrix<f64>,
    /// Linear part of the inelastic strain: `m` Mandel tensors, `Q_lin z = sum_k z_k q_lin[k]`.
    pub q_lin: Vec<DVector<f64>>,
    /// Affine offset of the inelastic strain.
    pub q_aff: DVector<f64>,
    /// Gradient-regularization coefficient.
    pub alpha: f64,
    /// Isotropic thermal-expansion coefficient.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalParams {
    pub heat_capacity: Field,
    /// Conductivity `kappa(x) = field(x) * kappa0` with a constant SPD `kappa0`.
    pub conductivity: DMatrix<f64>,
    pub conductivity_field: Field,
    /// Lower bound on the initial temperature.
    pub theta_bar: f64,
}

/// Configured coercivity floors and upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Floors {
    pub c_e: f64,
    pub c_a: f64,
    pub c_b: f64,
    /// `c^c <= c(x) <= C^c`
    pub c_c: f64,
    pub cap_c: f64,
    /// eigenvalues of `kappa(x)` in `[c^kappa, C^kappa]`
    pub c_kappa: f64,
    pub cap_kappa: f64,
}

/// The full constitutive description of one material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialModel {
    /// Spatial dimension `d` of the strain tensors.
    pub dim: usize,
    pub tensors: TensorParams,
    pub hardening: HardeningModel,
    pub bounds: HardeningBounds,
    pub thermal: ThermalParams,
    pub dissipation: DissipationPotential,
    pub floors: Floors,
}

/// A violated modelling assumption, tagged with the assumption it breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub tag: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.tag, self.message)
    }
}

fn violation(tag: &'static str, message: impl Into<String>) -> Violation {
    Violation {
        tag,
        message: message.into(),
    }
}

/// Spot-check count used by [`MaterialModel::validate`].
pub const SPOT_CHECK_SAMPLES: usize = 200;

impl MaterialModel {
    /// Dimension `m` of the internal-variable space.
    pub fn z_dim(&self) -> usize {
        self.hardening.dim()
    }

    pub fn sym_len(&self) -> usize {
        tensor::sym_len(self.dim)
    }

    /// Pointwise view with spatially varying coefficients resolved at `x`.
    pub fn at(&self, x: [f64; 2]) -> PointMaterial<'_> {
        PointMaterial {
            model: self,
            heat_capacity: self.thermal.heat_capacity.at(x),
            elasticity_scale: self.tensors.elasticity_field.at(x),
        }
    }

    /// Pointwise view at the origin; exact for spatially uniform materials.
    pub fn uniform(&self) -> PointMaterial<'_> {
        self.at([0.0, 0.0])
    }

    /// Whether `H2` can be nonzero.
    pub fn has_h2(&self) -> bool {
        !self.hardening.h2_is_zero()
    }

    /// Checks every pointwise assumption that does not need the mesh.
    /// Returns all violations, not just the first.
    pub fn validate<R: Rng>(&self, rng: &mut R) -> Vec<Violation> {
        let mut out = Vec::new();
        let t = &self.tensors;
        let n = self.sym_len();
        let m = self.z_dim();

        for (name, mat, size) in [
            ("E", &t.elasticity, n),
            ("A", &t.viscosity_a, n),
            ("B", &t.viscosity_b, m),
        ] {
            if mat.nrows() != size || mat.ncols() != size {
                out.push(violation(
                    tag_of(name),
                    format!("{name} must be {size}x{size}, got {}x{}", mat.nrows(), mat.ncols()),
                ));
            }
        }
        if !out.is_empty() {
            return out;
        }

        let checks = [
            ("E", &t.elasticity, self.floors.c_e, "(A-3)"),
            ("A", &t.viscosity_a, self.floors.c_a, "(A-4)"),
            ("B", &t.viscosity_b, self.floors.c_b, "(A-4)"),
        ];
        for (name, mat, floor, tag) in checks {
            if let Some(asym) = random_asymmetry(mat, rng) {
                out.push(violation(tag, format!("{name} is not symmetric (defect {asym:.3e})")));
            }
            if !(floor > 0.0) {
                out.push(violation(tag, format!("coercivity floor for {name} must be > 0, got {floor}")));
                continue;
            }
            let (lo, _) = tensor::eig_range(mat);
            if lo < floor {
                out.push(violation(
                    tag,
                    format!("{name} smallest eigenvalue {lo:.6e} is below its floor {floor:.6e}"),
                ));
            }
        }

        if t.q_lin.len() != m {
            out.push(violation(
                "(A-5)",
                format!("Q_lin must hold {m} tensors, got {}", t.q_lin.len()),
            ));
        }
        if t.q_lin.iter().any(|q| q.len() != n) || t.q_aff.len() != n {
            out.push(violation("(A-5)", "inelastic-strain tensors have the wrong size"));
        }
        if !(t.alpha >= 0.0) {
            out.push(violation("(A-2)", format!("alpha must be >= 0, got {}", t.alpha)));
        }
        if !(t.beta >= 0.0) {
            out.push(violation(
                "(A-7)",
                format!("thermal expansion beta must be >= 0 (W_coup sign convention), got {}", t.beta),
            ));
        }
        if t.alpha == 0.0 && self.has_h2() {
            out.push(violation(
                "(A-2)",
                "alpha = 0 requires d_z H2 == 0: either alpha > 0 and c^{H1} > 0 or alpha = 0 and d_z H2 == 0",
            ));
        }
        if t.alpha > 0.0 && !(self.bounds.c_h1 > 0.0) {
            out.push(violation(
                "(A-2)",
                "alpha > 0 requires c^{H1} > 0: either alpha > 0 and c^{H1} > 0 or alpha = 0 and d_z H2 == 0",
            ));
        }

        for msg in self.hardening.spot_check(&self.bounds, SPOT_CHECK_SAMPLES, rng) {
            out.push(violation("(A-2)", msg));
        }
        for msg in self.dissipation.validate(m) {
            out.push(violation("(A-1)", msg));
        }

        let th = &self.thermal;
        if !(th.theta_bar > 0.0) {
            out.push(violation("(A-8)", format!("theta_bar must be > 0, got {}", th.theta_bar)));
        }
        if th.conductivity.nrows() != self.dim.max(1) || th.conductivity.ncols() != self.dim.max(1) {
            out.push(violation("(A-7)", "conductivity must be a d x d matrix"));
        }
        let f = &self.floors;
        if !(f.c_c > 0.0 && f.cap_c >= f.c_c) {
            out.push(violation("(A-7)", "heat-capacity bounds need 0 < c^c <= C^c"));
        }
        if !(f.c_kappa > 0.0 && f.cap_kappa >= f.c_kappa) {
            out.push(violation("(A-7)", "conductivity bounds need 0 < c^kappa <= C^kappa"));
        }
        out
    }

    /// Checks the spatial-field bounds at the given sample points.
    pub fn validate_fields(&self, points: &[[f64; 2]]) -> Vec<Violation> {
        let mut out = Vec::new();
        let f = &self.floors;
        let (klo, khi) = tensor::eig_range(&self.thermal.conductivity);
        for &x in points {
            let c = self.thermal.heat_capacity.at(x);
            if !(c >= f.c_c) {
                out.push(violation("(A-7)", format!("c(x) = {c} below c^c floor {} at {x:?}", f.c_c)));
            } else if c > f.cap_c {
                out.push(violation("(A-7)", format!("c(x) = {c} above C^c bound {} at {x:?}", f.cap_c)));
            }
            let s = self.thermal.conductivity_field.at(x);
            if !(s * klo >= f.c_kappa) || s * khi > f.cap_kappa {
                out.push(violation(
                    "(A-7)",
                    format!(
                        "kappa(x) eigenvalues [{}, {}] outside [{}, {}] at {x:?}",
                        s * klo,
                        s * khi,
                        f.c_kappa,
                        f.cap_kappa
                    ),
                ));
            }
            let e = self.tensors.elasticity_field.at(x);
            let (elo, _) = tensor::eig_range(&self.tensors.elasticity);
            if !(e * elo >= f.c_e) {
                out.push(violation(
                    "(A-3)",
                    format!("E(x) smallest eigenvalue {} below c^E at {x:?}", e * elo),
                ));
            }
            if out.len() > 20 {
                break;
            }
        }
        out
    }
}

fn tag_of(name: &str) -> &'static str {
    match name {
        "E" => "(A-3)",
        _ => "(A-4)",
    }
}

/// Largest `|(Mx).y - (My).x|` over random pairs, relative; `None` when symmetric.
fn random_asymmetry<R: Rng>(mat: &DMatrix<f64>, rng: &mut R) -> Option<f64> {
    let n = mat.nrows();
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let d = ((mat * &x).dot(&y) - (mat * &y).dot(&x)).abs() / scale;
        worst = worst.max(d);
    }
    (worst > 1e-12).then_some(worst)
}

/// Constitutive evaluations at one material point.
#[derive(Debug, Clone, Copy)]
pub struct PointMaterial<'a> {
    pub model: &'a MaterialModel,
    pub heat_capacity: f64,
    pub elasticity_scale: f64,
}

fn positive_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {theta}")));
    }
    Ok(())
}

impl<'a> PointMaterial<'a> {
    pub fn elasticity(&self) -> DMatrix<f64> {
        &self.model.tensors.elasticity * self.elasticity_scale
    }

    fn check_shapes(&self, eps: &DVector<f64>, z: &DVector<f64>) -> Result<()> {
        check_len("strain", self.model.sym_len(), eps.len())?;
        check_len("internal variable", self.model.z_dim(), z.len())
    }

    /// `Q z = Q_lin z + Q_aff`.
    pub fn inelastic_strain(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let t = &self.model.tensors;
        check_len("internal variable", t.q_lin.len(), z.len())?;
        let mut out = t.q_aff.clone();
        for (q, &zk) in t.q_lin.iter().zip(z.iter()) {
            out.axpy(zk, q, 1.0);
        }
        Ok(out)
    }

    /// `Q_lin^T s` for a Mandel tensor `s`.
    pub fn q_lin_transpose(&self, s: &DVector<f64>) -> DVector<f64> {
        let q = &self.model.tensors.q_lin;
        DVector::from_fn(q.len(), |k, _| q[k].dot(s))
    }

    /// `W_mech` without the gradient term.
    pub fn w_mech_local(&self, eps: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        self.check_shapes(eps, z)?;
        let el = eps - self.inelastic_strain(z)?;
        Ok(0.5 * el.dot(&(self.elasticity() * &el)) + self.model.hardening.h1(z)?)
    }

    pub fn w_theta(&self, theta: f64) -> Result<f64> {
        positive_theta(theta)?;
        Ok(self.heat_capacity * (theta * theta.ln() - theta))
    }

    pub fn w_coup(&self, eps: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        self.check_shapes(eps, z)?;
        let tr = tensor::trace(eps, self.model.dim);
        Ok(self.model.tensors.beta * tr + self.model.hardening.h2(z)?)
    }

    /// Free-energy density `W_mech - W_theta + theta W_coup`. `grad_z` is the
    /// `m x d` gradient of the internal variable (may have zero columns).
    pub fn free_energy(
        &self,
        eps: &DVector<f64>,
        z: &DVector<f64>,
        grad_z: &DMatrix<f64>,
        theta: f64,
    ) -> Result<f64> {
        positive_theta(theta)?;
        let grad = 0.5 * self.model.tensors.alpha * grad_z.norm_squared();
        Ok(self.w_mech_local(eps, z)? + grad - self.w_theta(theta)? + theta * self.w_coup(eps, z)?)
    }

    /// Entropy density `s = c ln theta - beta tr(eps) - H2(z)`.
    pub fn entropy(&self, eps: &DVector<f64>, z: &DVector<f64>, theta: f64) -> Result<f64> {
        positive_theta(theta)?;
        Ok(self.heat_capacity * theta.ln() - self.w_coup(eps, z)?)
    }

    /// Internal energy `W + theta s`, composed from the two operations above.
    pub fn internal_energy(
        &self,
        eps: &DVector<f64>,
        z: &DVector<f64>,
        grad_z: &DMatrix<f64>,
        theta: f64,
    ) -> Result<f64> {
        Ok(self.free_energy(eps, z, grad_z, theta)? + theta * self.entropy(eps, z, theta)?)
    }

    /// Local part of the flow-rule driving force
    /// `-Q_lin^T E (eps - Q z) + dH1(z) + theta dH2(z)`.
    pub fn driving_force(&self, eps: &DVector<f64>, z: &DVector<f64>, theta: f64) -> Result<DVector<f64>> {
        self.check_shapes(eps, z)?;
        let el = eps - self.inelastic_strain(z)?;
        let sig = self.elasticity() * el;
        let mut g = -self.q_lin_transpose(&sig) + self.model.hardening.grad_h1(z)?;
        if self.model.has_h2() {
            positive_theta(theta)?;
            g += self.model.hardening.grad_h2(z)? * theta;
        }
        Ok(g)
    }

    /// Stress `E (eps - Q z) + beta theta I + A eps_rate`.
    pub fn stress(
        &self,
        eps: &DVector<f64>,
        z: &DVector<f64>,
        theta: f64,
        eps_rate: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_shapes(eps, z)?;
        let el = eps - self.inelastic_strain(z)?;
        let dim = self.model.dim;
        Ok(self.elasticity() * el
            + tensor::identity(dim) * (self.model.tensors.beta * theta)
            + &self.model.tensors.viscosity_a * eps_rate)
    }
}

#[cfg(test)]
pub(crate) mod test_models {
    use super::*;

    /// 1D scalar material: `E = e`, `Q_lin = 1`, Melan-Prager `L = l`,
    /// `A = B = 1`, `sigma_y = 1`, heat capacity `c`.
    pub fn scalar_1d(e: f64, l: f64, beta: f64, c: f64) -> MaterialModel {
        MaterialModel {
            dim: 1,
            tensors: TensorParams {
                elasticity: DMatrix::from_element(1, 1, e),
                elasticity_field: Field::Constant(1.0),
                viscosity_a: DMatrix::from_element(1, 1, 1.0),
                viscosity_b: DMatrix::from_element(1, 1, 1.0),
                q_lin: vec![DVector::from_element(1, 1.0)],
                q_aff: DVector::zeros(1),
                alpha: 0.0,
                beta,
            },
            hardening: HardeningModel::MelanPrager {
                l: DMatrix::from_element(1, 1, l),
            },
            bounds: HardeningBounds {
                c_h1: l / 2.0,
                c_zz_h1: l,
                c_zz_h2: 0.0,
                ..Default::default()
            },
            thermal: ThermalParams {
                heat_capacity: Field::Constant(c),
                conductivity: DMatrix::identity(1, 1),
                conductivity_field: Field::Constant(1.0),
                theta_bar: 0.5,
            },
            dissipation: DissipationPotential::NormScaled { sigma_y: 1.0 },
            floors: Floors {
                c_e: e.min(1.0),
                c_a: 1.0,
                c_b: 1.0,
                c_c: c,
                cap_c: c,
                c_kappa: 1.0,
                cap_kappa: 1.0,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_models::scalar_1d;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn free_energy_examples() {
        // H1 = z^2 means L = 2
        let m = scalar_1d(2.0, 2.0, 0.0, 1.0);
        let p = m.uniform();
        let w = p.free_energy(&v(&[0.5]), &v(&[0.3]), &DMatrix::zeros(1, 0), 1.0).unwrap();
        assert!((w - 1.13).abs() < 1e-14, "{w}");

        let w0 = p.free_energy(&v(&[0.0]), &v(&[0.0]), &DMatrix::zeros(1, 0), 1.0).unwrap();
        assert_eq!(w0, 1.0);

        let m2 = scalar_1d(2.0, 2.0, 0.7, 2.0);
        let e = std::f64::consts::E;
        let w = m2.uniform().free_energy(&v(&[0.0]), &v(&[0.0]), &DMatrix::zeros(1, 0), e).unwrap();
        assert!(w.abs() < 1e-14);
    }

    #[test]
    fn entropy_and_internal_energy_examples() {
        let mut m = scalar_1d(2.0, 2.0, 0.1, 2.0);
        m.dim = 3;
        m.tensors.elasticity = DMatrix::identity(6, 6);
        m.tensors.viscosity_a = DMatrix::identity(6, 6);
        m.tensors.q_lin = vec![DVector::zeros(6)];
        m.tensors.q_aff = DVector::zeros(6);
        let eps = tensor::identity(3) * 0.2;
        let e = std::f64::consts::E;
        let s = m.uniform().entropy(&eps, &v(&[0.0]), e).unwrap();
        assert!((s - 1.94).abs() < 1e-14);

        let m1 = scalar_1d(2.0, 2.0, 0.0, 1.0);
        assert_eq!(m1.uniform().entropy(&v(&[0.0]), &v(&[0.0]), 1.0).unwrap(), 0.0);
        let win = m1.uniform().internal_energy(&v(&[0.0]), &v(&[0.0]), &DMatrix::zeros(1, 0), 1.0).unwrap();
        assert_eq!(win, 1.0);
        let m2 = scalar_1d(2.0, 2.0, 0.0, 2.0);
        let win = m2.uniform().internal_energy(&v(&[0.0]), &v(&[0.0]), &DMatrix::zeros(1, 0), e).unwrap();
        assert!((win - 2.0 * e).abs() < 1e-14);
    }

    #[test]
    fn inelastic_strain_and_driving_force_examples() {
        let m = scalar_1d(2.0, 2.0, 0.0, 1.0);
        let p = m.uniform();
        let g = p.driving_force(&v(&[0.5]), &v(&[0.3]), 1.0).unwrap();
        assert!((g[0] - 0.2).abs() < 1e-14);
        let g0 = p.driving_force(&v(&[0.3]), &v(&[0.0]), 1.0).unwrap();
        assert!((g0[0] + 0.6).abs() < 1e-14);
        // stress-free, stationary hardening
        let mut pr = scalar_1d(2.0, 2.0, 0.0, 1.0);
        pr.hardening = HardeningModel::PrandtlReuss { dim: 1 };
        let g = pr.uniform().driving_force(&v(&[0.3]), &v(&[0.3]), 1.0).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn domain_and_shape_errors() {
        let m = scalar_1d(2.0, 2.0, 0.0, 1.0);
        let p = m.uniform();
        assert!(matches!(
            p.free_energy(&v(&[0.0]), &v(&[0.0]), &DMatrix::zeros(1, 0), 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(p.entropy(&v(&[0.0]), &v(&[0.0, 1.0]), 1.0), Err(Error::Shape { .. })));
    }

    #[test]
    fn validation_reports_every_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let good = scalar_1d(2.0, 2.0, 0.0, 1.0);
        assert!(good.validate(&mut rng).is_empty(), "{:?}", good.validate(&mut rng));
        let mut bad = good.clone();
        bad.tensors.beta = -1.0;
        bad.thermal.theta_bar = 0.0;
        bad.floors.c_e = 5.0;
        let v = bad.validate(&mut rng);
        let tags: Vec<_> = v.iter().map(|v| v.tag).collect();
        assert!(tags.contains(&"(A-7)") && tags.contains(&"(A-8)") && tags.contains(&"(A-3)"), "{v:?}");
    }
}
