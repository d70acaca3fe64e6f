//! Scenario files.
//!
//! A scenario is a TOML document with the sections `mesh`, `material`
//! (with `hardening`, `dissipation`, `thermal`, `bounds`, `floors`),
//! `initial`, `load`, `drive`, `time`, `diagnostics` and `output`. The
//! shipped presets live in `scenarios/` and are compiled into the binary.
//! Loading never stops at the first problem: [`ScenarioConfig::validate`]
//! collects every violated assumption, tagged `(A-1)` to `(A-8)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::coupling::{CouplingConfig, CouplingMode};
use crate::diagnostics::DiagnosticLimits;
use crate::dissipation::DissipationPotential;
use crate::error::{Error, Result};
use crate::fem::{build_mesh, MeshSpec};
use crate::io::expr::Expr;
use crate::material::hardening::{Mixture, Quadratic, Quadratic1, SouzaAuricchio, DEFAULT_DELTA};
use crate::material::{Field, Floors, HardeningBounds, HardeningModel, MaterialModel, TensorParams, ThermalParams};
use crate::mech::Linearization;
use crate::state::{Load, Problem, SimState, StrainDrive};
use crate::tensor;
use crate::thermal::CouplingTreatment;

/// Shipped presets as `(name, source)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("melan_prager_bar_1d", include_str!("../../scenarios/melan_prager_bar_1d.toml")),
    ("smooth_loaded_bar_1d", include_str!("../../scenarios/smooth_loaded_bar_1d.toml")),
    ("melan_prager_point_cyclic", include_str!("../../scenarios/melan_prager_point_cyclic.toml")),
    ("decoupled_bar_1d", include_str!("../../scenarios/decoupled_bar_1d.toml")),
    ("prandtl_reuss_plate_2d", include_str!("../../scenarios/prandtl_reuss_plate_2d.toml")),
    ("souza_auricchio_point", include_str!("../../scenarios/souza_auricchio_point.toml")),
    ("mixture_gradient_bar_1d", include_str!("../../scenarios/mixture_gradient_bar_1d.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// A matrix given in full, as a multiple of the identity, or through the
/// Lamé constants.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
    Isotropic { lambda: f64, mu: f64 },
}

impl MatrixSpec {
    fn build(&self, n: usize, dim: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(s) => Ok(DMatrix::identity(n, n) * *s),
            MatrixSpec::Isotropic { lambda, mu } => {
                if tensor::sym_len(dim) != n {
                    return Err(Error::Config(format!("{what}: Lamé form only applies to strain tensors")));
                }
                Ok(tensor::isotropic(dim, *lambda, *mu))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("{what} must be a {n}x{n} matrix")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

/// A scalar field: a number or an expression in `x`, `y`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Expr(String),
}

impl FieldSpec {
    fn build(&self, what: &str) -> Result<Field> {
        match self {
            FieldSpec::Number(v) => Ok(Field::Constant(*v)),
            FieldSpec::Expr(s) => Ok(Field::Expr(parse_expr(s, what)?)),
        }
    }
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Number(1.0)
    }
}

fn parse_expr(s: &str, what: &str) -> Result<Expr> {
    Expr::parse(s).map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Initial values of one scalar component: a number, an expression in
/// `x`, `y`, or one value per node (per material point for `z`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Number(f64),
    Expr(String),
    Values(Vec<f64>),
}

impl InitialSpec {
    fn values(&self, sites: &[[f64; 2]], what: &str) -> Result<Vec<f64>> {
        match self {
            InitialSpec::Number(v) => Ok(vec![*v; sites.len()]),
            InitialSpec::Expr(s) => {
                let e = parse_expr(s, what)?;
                Ok(sites.iter().map(|x| e.eval(x[0], x[1], 0.0)).collect())
            }
            InitialSpec::Values(v) => {
                if v.len() != sites.len() {
                    return Err(Error::Config(format!(
                        "{what}: {} values given for {} sites",
                        v.len(),
                        sites.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshConfig {
    Point,
    Interval { length: f64, n: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
}

impl MeshConfig {
    pub fn spec(&self) -> MeshSpec {
        match *self {
            MeshConfig::Point => MeshSpec::Point,
            MeshConfig::Interval { length, n } => MeshSpec::Interval { length, n },
            MeshConfig::Rectangle { lx, ly, nx, ny } => MeshSpec::Rectangle { lx, ly, nx, ny },
        }
    }
}

/// `Q_lin` as explicit Mandel tensors or a named family.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum QSpec {
    /// `"deviatoric"`, `"identity"`, or `"mixture"` (derived from the phase strains).
    Named(String),
    Tensors(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub l: MatrixSpec,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
}

impl QuadraticSpec {
    fn build(&self, m: usize, what: &str) -> Result<Quadratic1> {
        let b = match &self.b {
            Some(b) if b.len() != m => return Err(Error::Config(format!("{what}.b must have {m} entries"))),
            Some(b) => DVector::from_column_slice(b),
            None => DVector::zeros(m),
        };
        Ok(Quadratic1 {
            l: self.l.build(m, 0, what)?,
            b,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HardeningConfig {
    MelanPrager {
        l: MatrixSpec,
    },
    PrandtlReuss,
    Quadratic {
        h1: QuadraticSpec,
        #[serde(default)]
        h2: Option<QuadraticSpec>,
    },
    SouzaAuricchio {
        c1: f64,
        c2: f64,
        c3: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        c1_slope: f64,
        #[serde(default)]
        c2_slope: f64,
    },
    Mixture {
        phase_strains: Vec<Vec<f64>>,
        w: QuadraticSpec,
        #[serde(default)]
        w_slope: Option<QuadraticSpec>,
        #[serde(default = "default_delta")]
        delta: f64,
    },
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DissipationConfig {
    Norm { sigma_y: f64 },
    WeightedL1 { weights: Vec<f64> },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub c_h1: f64,
    #[serde(default)]
    pub c_h1_tilde: f64,
    #[serde(default)]
    pub c_zz_h1: Option<f64>,
    #[serde(default)]
    pub c_zz_h2: Option<f64>,
    #[serde(default)]
    pub c_z_h2: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    #[serde(default)]
    pub heat_capacity: FieldSpec,
    pub conductivity: MatrixSpec,
    #[serde(default)]
    pub conductivity_field: FieldSpec,
    pub theta_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorsConfig {
    pub c_e: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub cap_c: f64,
    pub c_kappa: f64,
    pub cap_kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    /// Dimension of the strain tensors; defaults to the mesh dimension.
    #[serde(default)]
    pub dim: Option<usize>,
    pub elasticity: MatrixSpec,
    #[serde(default)]
    pub elasticity_field: FieldSpec,
    pub viscosity_a: MatrixSpec,
    pub viscosity_b: MatrixSpec,
    pub q_lin: QSpec,
    #[serde(default)]
    pub q_aff: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub hardening: HardeningConfig,
    pub dissipation: DissipationConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    pub thermal: ThermalConfig,
    pub floors: FloorsConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// One entry per displacement component.
    #[serde(default)]
    pub u: Vec<InitialSpec>,
    /// One entry per internal-variable component.
    #[serde(default)]
    pub z: Vec<InitialSpec>,
    #[serde(default)]
    pub theta: Option<InitialSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadConfig {
    #[default]
    None,
    /// Body-force density components as expressions in `x`, `y`, `t`.
    Body { components: Vec<String> },
    /// Full nodal load vectors at the given times.
    Series { times: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveConfig {
    Ramp { rate: f64, direction: Vec<f64> },
    Triangle { amplitude: f64, period: f64, direction: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    StaggeredOnce,
    #[default]
    PicardToConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearizationConfig {
    #[default]
    FrozenZ,
    NewtonLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeatCouplingConfig {
    #[default]
    SemiImplicit,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub dt_min: Option<f64>,
    #[serde(default = "yes")]
    pub adaptive: bool,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default = "one")]
    pub relaxation: f64,
    #[serde(default = "default_mech_tol")]
    pub mech_tol: f64,
    #[serde(default = "default_mech_max")]
    pub mech_max_iter: usize,
    #[serde(default)]
    pub linearization: LinearizationConfig,
    #[serde(default)]
    pub heat_coupling: HeatCouplingConfig,
    #[serde(default)]
    pub consistent_mass: bool,
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_picard_max() -> usize {
    50
}
fn default_mech_tol() -> f64 {
    1e-9
}
fn default_mech_max() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorConfig {
    pub c_hat: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Bound for the global-estimate monitor; unbounded when absent.
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub c_theta: Option<f64>,
    #[serde(default)]
    pub indicator: Option<IndicatorConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldOutput {
    None,
    #[default]
    Final,
    All,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub timeseries: bool,
    #[serde(default)]
    pub fields: FieldOutput,
    #[serde(default = "yes")]
    pub summary: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            timeseries: true,
            fields: FieldOutput::Final,
            summary: true,
        }
    }
}

fn default_seed() -> u64 {
    0
}

/// The parsed, not yet validated scenario file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Seed of the random spot checks in validation.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub load: LoadConfig,
    #[serde(default)]
    pub drive: Option<DriveConfig>,
    pub time: TimeConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub problem: Problem,
    pub initial: SimState,
    pub coupling: CouplingConfig,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    Error::Config(format!("parse error at line {line}, column {col}: {msg}"))
                }
                None => Error::Config(format!("parse error: {msg}")),
            }
        })
    }

    fn material_dim(&self) -> usize {
        self.material.dim.unwrap_or(match self.mesh {
            MeshConfig::Point => 1,
            MeshConfig::Interval { .. } => 1,
            MeshConfig::Rectangle { .. } => 2,
        })
    }

    /// The material model; shape errors are configuration errors.
    pub fn material_model(&self) -> Result<MaterialModel> {
        let c = &self.material;
        let dim = self.material_dim();
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("material dimension must be 1, 2 or 3, got {dim}")));
        }
        let n = tensor::sym_len(dim);
        let (q_lin, q_aff_default) = match (&c.q_lin, &c.hardening) {
            (QSpec::Named(s), HardeningConfig::Mixture { phase_strains, .. }) if s == "mixture" => {
                mixture_q(phase_strains, n)?
            }
            (QSpec::Named(s), _) if s == "deviatoric" => (tensor::deviatoric_basis(dim), DVector::zeros(n)),
            (QSpec::Named(s), _) if s == "identity" => (
                (0..n).map(|k| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })).collect(),
                DVector::zeros(n),
            ),
            (QSpec::Named(s), _) => {
                return Err(Error::Config(format!(
                    "unknown q_lin family '{s}' (expected deviatoric, identity or mixture)"
                )))
            }
            (QSpec::Tensors(rows), _) => {
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("every q_lin tensor needs {n} Mandel coordinates")));
                }
                (rows.iter().map(|r| DVector::from_column_slice(r)).collect(), DVector::zeros(n))
            }
        };
        let m = q_lin.len();
        let q_aff = match &c.q_aff {
            Some(v) if v.len() != n => return Err(Error::Config(format!("q_aff needs {n} Mandel coordinates"))),
            Some(v) => DVector::from_column_slice(v),
            None => q_aff_default,
        };
        let hardening = match &c.hardening {
            HardeningConfig::MelanPrager { l } => HardeningModel::MelanPrager {
                l: l.build(m, 0, "hardening.l")?,
            },
            HardeningConfig::PrandtlReuss => HardeningModel::PrandtlReuss { dim: m },
            HardeningConfig::Quadratic { h1, h2 } => HardeningModel::Quadratic(Quadratic {
                h1: h1.build(m, "hardening.h1")?,
                h2: match h2 {
                    Some(h) => h.build(m, "hardening.h2")?,
                    None => Quadratic1::zero(m),
                },
            }),
            &HardeningConfig::SouzaAuricchio {
                c1,
                c2,
                c3,
                delta,
                c1_slope,
                c2_slope,
            } => HardeningModel::SouzaAuricchio(SouzaAuricchio {
                dim: m,
                c1,
                c2,
                c3,
                delta,
                c1_slope,
                c2_slope,
            }),
            HardeningConfig::Mixture {
                phase_strains,
                w,
                w_slope,
                delta,
            } => {
                let k = phase_strains.len().saturating_sub(1);
                if k != m {
                    return Err(Error::Config(format!(
                        "mixture with {} phases needs {k} internal variables, q_lin gives {m}",
                        phase_strains.len()
                    )));
                }
                HardeningModel::Mixture(Mixture {
                    phase_strains: phase_strains.iter().map(|p| DVector::from_column_slice(p)).collect(),
                    w: w.build(m, "hardening.w")?,
                    w_slope: match w_slope {
                        Some(h) => h.build(m, "hardening.w_slope")?,
                        None => Quadratic1::zero(m),
                    },
                    delta: *delta,
                })
            }
        };
        let dissipation = match &c.dissipation {
            DissipationConfig::Norm { sigma_y } => DissipationPotential::NormScaled { sigma_y: *sigma_y },
            DissipationConfig::WeightedL1 { weights } => DissipationPotential::WeightedL1 {
                weights: DVector::from_column_slice(weights),
            },
            DissipationConfig::Zero => DissipationPotential::Zero,
        };
        let b = &c.bounds;
        let f = &c.floors;
        Ok(MaterialModel {
            dim,
            tensors: TensorParams {
                elasticity: c.elasticity.build(n, dim, "elasticity")?,
                elasticity_field: c.elasticity_field.build("elasticity_field")?,
                viscosity_a: c.viscosity_a.build(n, dim, "viscosity_a")?,
                viscosity_b: c.viscosity_b.build(m, 0, "viscosity_b")?,
                q_lin,
                q_aff,
                alpha: c.alpha,
                beta: c.beta,
            },
            hardening,
            bounds: HardeningBounds {
                c_h1: b.c_h1,
                c_h1_tilde: b.c_h1_tilde,
                c_zz_h1: b.c_zz_h1.unwrap_or(f64::INFINITY),
                c_zz_h2: b.c_zz_h2.unwrap_or(f64::INFINITY),
                c_z_h2: b.c_z_h2,
            },
            thermal: ThermalParams {
                heat_capacity: c.thermal.heat_capacity.build("heat_capacity")?,
                conductivity: c.thermal.conductivity.build(dim, 0, "conductivity")?,
                conductivity_field: c.thermal.conductivity_field.build("conductivity_field")?,
                theta_bar: c.thermal.theta_bar,
            },
            dissipation,
            floors: Floors {
                c_e: f.c_e,
                c_a: f.c_a,
                c_b: f.c_b,
                c_c: f.c_c,
                cap_c: f.cap_c,
                c_kappa: f.c_kappa,
                cap_kappa: f.cap_kappa,
            },
        })
    }

    pub fn coupling_config(&self) -> CouplingConfig {
        let t = &self.time;
        let d = &self.diagnostics;
        CouplingConfig {
            t_end: t.t_end,
            dt: t.dt,
            dt_min: t.dt_min.unwrap_or(t.dt / 64.0),
            adaptive: t.adaptive,
            picard_tol: t.picard_tol,
            picard_max: t.picard_max,
            mode: match t.mode {
                ModeConfig::StaggeredOnce => CouplingMode::StaggeredOnce,
                ModeConfig::PicardToConvergence => CouplingMode::PicardToConvergence,
            },
            relaxation: t.relaxation,
            mech_tol: t.mech_tol,
            mech_max_iter: t.mech_max_iter,
            linearization: match t.linearization {
                LinearizationConfig::FrozenZ => Linearization::FrozenZ,
                LinearizationConfig::NewtonLocal => Linearization::NewtonLocal,
            },
            heat_coupling: match t.heat_coupling {
                HeatCouplingConfig::SemiImplicit => CouplingTreatment::SemiImplicit,
                HeatCouplingConfig::Explicit => CouplingTreatment::Explicit,
            },
            consistent_mass: t.consistent_mass,
            limits: DiagnosticLimits {
                c0: d.c0.unwrap_or(f64::INFINITY),
                c_theta: d.c_theta.unwrap_or(1.0),
            },
        }
    }

    fn load(&self, n_dofs: usize) -> Result<Load> {
        match &self.load {
            LoadConfig::None => Ok(Load::None),
            LoadConfig::Body { components } => Ok(Load::Body {
                components: components
                    .iter()
                    .map(|s| parse_expr(s, "load"))
                    .collect::<Result<_>>()?,
            }),
            LoadConfig::Series { times, values } => {
                if times.len() != values.len() || values.iter().any(|v| v.len() != n_dofs) {
                    return Err(Error::Config(format!(
                        "load series needs one vector of {n_dofs} entries per time"
                    )));
                }
                Ok(Load::Series {
                    times: times.clone(),
                    values: values.iter().map(|v| DVector::from_column_slice(v)).collect(),
                })
            }
        }
    }

    fn drive(&self) -> Option<StrainDrive> {
        self.drive.as_ref().map(|d| match d {
            DriveConfig::Ramp { rate, direction } => StrainDrive::Ramp {
                rate: *rate,
                direction: DVector::from_column_slice(direction),
            },
            DriveConfig::Triangle {
                amplitude,
                period,
                direction,
            } => StrainDrive::Triangle {
                amplitude: *amplitude,
                period: *period,
                direction: DVector::from_column_slice(direction),
            },
        })
    }

    /// Every violated assumption, each message starting with its tag.
    /// Structural errors (bad shapes, unparsable expressions) are reported
    /// as configuration errors instead.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let material = self.material_model()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        out.extend(material.validate(&mut rng).iter().map(|v| v.to_string()));
        let mesh = build_mesh(&self.mesh.spec())?;
        let mut samples = mesh.nodes.clone();
        for el in &mesh.elements {
            let k = el.len() as f64;
            let mut c = [0.0, 0.0];
            for &n in el {
                c[0] += mesh.nodes[n][0] / k;
                c[1] += mesh.nodes[n][1] / k;
            }
            samples.push(c);
        }
        out.extend(material.validate_fields(&samples).iter().map(|v| v.to_string()));
        if let Err(e) = self.coupling_config().validate() {
            out.push(format!("time: {e}"));
        }
        if mesh.dim > 0 && material.dim != mesh.dim {
            out.push(format!(
                "(A-3): material dimension {} differs from the mesh dimension {}",
                material.dim, mesh.dim
            ));
        }
        match (&self.drive, mesh.dim) {
            (Some(_), d) if d > 0 => out.push("drive: a strain drive needs the point mesh".into()),
            (Some(d), _) => {
                let dir = match d {
                    DriveConfig::Ramp { direction, .. } | DriveConfig::Triangle { direction, .. } => direction,
                };
                if dir.len() != material.sym_len() || dir.iter().all(|&x| x == 0.0) {
                    out.push(format!(
                        "drive: direction must be a nonzero tensor with {} Mandel coordinates",
                        material.sym_len()
                    ));
                }
                if let DriveConfig::Triangle { period, .. } = d {
                    if !(*period > 0.0) {
                        out.push(format!("drive: period must be positive, got {period}"));
                    }
                }
            }
            _ => {}
        }
        match &self.load {
            LoadConfig::Series { times, values } => {
                let finite = times.iter().chain(values.iter().flatten()).all(|v| v.is_finite());
                if !finite {
                    out.push("(A-6): load series contains non-finite values".into());
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push("(A-6): load series times must increase strictly".into());
                }
            }
            LoadConfig::Body { components } => {
                if components.len() != mesh.dim {
                    out.push(format!(
                        "(A-6): body force needs {} components, got {}",
                        mesh.dim,
                        components.len()
                    ));
                }
                let steps = (self.time.t_end / self.time.dt).ceil().clamp(1.0, 1e4) as usize;
                for s in components {
                    let e = parse_expr(s, "load")?;
                    let bad = (0..=steps).any(|k| {
                        let t = self.time.t_end * k as f64 / steps as f64;
                        mesh.nodes.iter().any(|x| !e.eval(x[0], x[1], t).is_finite())
                    });
                    if bad {
                        out.push(format!("(A-6): load component '{s}' is not finite on the mesh"));
                    }
                }
            }
            LoadConfig::None => {}
        }
        let m = material.z_dim();
        if !self.initial.z.is_empty() && self.initial.z.len() != m {
            out.push(format!("initial: z needs {m} components, got {}", self.initial.z.len()));
        }
        if !self.initial.u.is_empty() && self.initial.u.len() != mesh.dim {
            out.push(format!(
                "initial: u needs {} components, got {}",
                mesh.dim,
                self.initial.u.len()
            ));
        }
        if let Some(spec) = &self.initial.theta {
            match spec.values(&mesh.nodes, "initial.theta") {
                Ok(theta) => {
                    let bar = material.thermal.theta_bar;
                    if let Some(t) = theta.iter().copied().find(|&t| !(t >= bar)) {
                        out.push(format!("(A-8): initial temperature {t} is below theta_bar = {bar}"));
                    }
                }
                Err(e) => out.push(e.to_string()),
            }
        }
        if let Some(ind) = &self.diagnostics.indicator {
            if !(ind.c_hat > 0.0) || !(ind.q > 8.0) {
                out.push("diagnostics: indicator needs c_hat > 0 and q > 8".into());
            }
        }
        Ok(out)
    }

    /// Validates and assembles the scenario.
    pub fn build(&self) -> Result<Scenario> {
        let violations = self.validate()?;
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        let material = self.material_model()?;
        let mesh = build_mesh(&self.mesh.spec())?;
        let n_dofs = mesh.dim * mesh.nodes.len();
        let load = self.load(n_dofs)?;
        let problem = Problem::new(mesh, material, load, self.drive())?;
        let initial = self.initial_state(&problem)?;
        Ok(Scenario {
            config: self.clone(),
            problem,
            initial,
            coupling: self.coupling_config(),
        })
    }

    fn initial_state(&self, problem: &Problem) -> Result<SimState> {
        let ops = &problem.ops;
        let nodes = &problem.mesh.nodes;
        let d = ops.mesh_dim;
        let mut u = DVector::zeros(ops.n_dofs);
        for (c, spec) in self.initial.u.iter().enumerate() {
            for (n, v) in spec.values(nodes, "initial.u")?.into_iter().enumerate() {
                if !problem.mesh.dirichlet_u[n] {
                    u[n * d + c] = v;
                }
            }
        }
        let m = problem.material.z_dim();
        let sites: Vec<[f64; 2]> = ops.points.iter().map(|p| p.x).collect();
        let mut z = vec![DVector::zeros(m); sites.len()];
        for (k, spec) in self.initial.z.iter().enumerate() {
            for (p, v) in spec.values(&sites, "initial.z")?.into_iter().enumerate() {
                z[p][k] = v;
            }
        }
        let bar = problem.material.thermal.theta_bar;
        let theta = match &self.initial.theta {
            Some(spec) => DVector::from_vec(spec.values(nodes, "initial.theta")?),
            None => DVector::from_element(nodes.len(), bar),
        };
        Ok(SimState::new(u, z, theta))
    }
}

fn mixture_q(phase_strains: &[Vec<f64>], n: usize) -> Result<(Vec<DVector<f64>>, DVector<f64>)> {
    if phase_strains.len() < 2 || phase_strains.iter().any(|p| p.len() != n) {
        return Err(Error::Config(format!(
            "mixture needs at least two phase strains with {n} Mandel coordinates each"
        )));
    }
    let last = DVector::from_column_slice(phase_strains.last().expect("checked above"));
    let q = phase_strains[..phase_strains.len() - 1]
        .iter()
        .map(|p| DVector::from_column_slice(p) - &last)
        .collect();
    Ok((q, last))
}

/// Reads a scenario from a preset name or a file path and validates it.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    read_config(name_or_path)?.build()
}

/// Parses a scenario from a preset name or a file path without validating it.
pub fn read_config(name_or_path: &str) -> Result<ScenarioConfig> {
    let text = match preset(name_or_path) {
        Some(s) if !Path::new(name_or_path).exists() => s.to_string(),
        _ => std::fs::read_to_string(name_or_path)
            .map_err(|e| Error::Config(format!("cannot read scenario '{name_or_path}': {e}")))?,
    };
    ScenarioConfig::parse(&text)
}
