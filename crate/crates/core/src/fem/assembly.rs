//! P1 assembly of every operator in the coupled system.
//!
//! Coefficients (`E`, `c`, `kappa`) are element-wise constant, evaluated at
//! element centroids. The internal variable lives on *material points*:
//! mesh nodes when `alpha > 0` (so that `grad z` exists), element centroids
//! when `alpha = 0`. Energies that pair strains with `z` use vertex
//! quadrature, which makes the elastic energy separable in the point values:
//!
//! `E_h(u, z) = sum_e sum_{i in e} |e|/(d+1) * 1/2 E_e (eps_e - Q z_i) : (eps_e - Q z_i)`
//!
//! Its `u`-gradient only sees the element mean of `z` and its `z`-Hessian is
//! block diagonal, which keeps the pointwise flow-rule solves local.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use super::mesh::Mesh;
use super::quadrature::QuadratureRule;
use super::solve::{csr_from_triplets, restrict, spmv, to_dense};
use crate::error::{Error, Result};
use crate::material::MaterialModel;
use crate::tensor;

#[derive(Debug, Clone)]
pub struct ElementData {
    pub nodes: Vec<usize>,
    pub volume: f64,
    pub grads: Vec<DVector<f64>>,
    /// Strain-displacement matrix on the element dofs.
    pub b: DMatrix<f64>,
    pub dofs: Vec<usize>,
    pub centroid: [f64; 2],
    pub elasticity: DMatrix<f64>,
    pub heat_capacity: f64,
    pub conductivity: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSite {
    Node(usize),
    Element(usize),
}

/// Where one value of the internal variable lives.
#[derive(Debug, Clone)]
pub struct MaterialPoint {
    pub site: PointSite,
    /// Quadrature weight (lumped nodal volume or element volume).
    pub weight: f64,
    pub x: [f64; 2],
    /// `(element, share)` pairs; the shares sum to `weight`.
    pub parts: Vec<(usize, f64)>,
    /// Share-weighted mean elasticity over `parts`.
    pub elasticity: DMatrix<f64>,
    /// Nodal weights that interpolate the temperature at this point.
    pub theta_nodes: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct AssembledOperators {
    /// Dimension of the mesh (0 for the material-point mode).
    pub mesh_dim: usize,
    /// Dimension of the strain tensors.
    pub tensor_dim: usize,
    pub n_nodes: usize,
    /// Displacement dofs, node-major.
    pub n_dofs: usize,
    pub free_dofs: Vec<usize>,
    pub dof_map: Vec<Option<usize>>,
    pub elements: Vec<ElementData>,
    pub points: Vec<MaterialPoint>,
    /// `(point, share)` pairs per element, the transpose of `MaterialPoint::parts`.
    pub element_points: Vec<Vec<(usize, f64)>>,
    pub k_e: CsrMatrix<f64>,
    pub k_a: CsrMatrix<f64>,
    /// Lumped `c`-weighted mass.
    pub mass_lumped: DVector<f64>,
    /// Consistent `c`-weighted mass (degree-2 Gauss rule).
    pub mass_consistent: CsrMatrix<f64>,
    /// Lumped nodal volumes `sum_e |e|/(d+1)`.
    pub node_volume: DVector<f64>,
    pub k_kappa: CsrMatrix<f64>,
    /// Unweighted scalar P1 Laplacian.
    pub k_lap: CsrMatrix<f64>,
    /// `alpha * k_lap`, applied to every component of `z`.
    pub k_alpha: CsrMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Assembles every operator for `mesh` and `material`.
pub fn assemble(mesh: &Mesh, material: &MaterialModel) -> Result<AssembledOperators> {
    mesh.check()?;
    let dim = mesh.dim;
    let tdim = material.dim;
    if dim > 0 && tdim != dim {
        return Err(Error::Mesh(format!(
            "material dimension {tdim} does not match mesh dimension {dim}"
        )));
    }
    let n_nodes = mesh.n_nodes();
    let n_dofs = n_nodes * dim;
    let nsym = tensor::sym_len(tdim);
    let t = &material.tensors;

    let mut elements = Vec::new();
    if dim == 0 {
        let x = mesh.nodes[0];
        let at = material.at(x);
        elements.push(ElementData {
            nodes: vec![0],
            volume: 1.0,
            grads: Vec::new(),
            b: DMatrix::zeros(nsym, 0),
            dofs: Vec::new(),
            centroid: x,
            elasticity: at.elasticity(),
            heat_capacity: at.heat_capacity,
            conductivity: DMatrix::zeros(0, 0),
        });
    } else {
        for e in 0..mesh.n_elements() {
            let (volume, grads) = mesh.element_geometry(e)?;
            let nodes = mesh.elements[e].clone();
            let dofs = nodes.iter().flat_map(|&n| (0..dim).map(move |c| n * dim + c)).collect();
            let centroid = mesh.centroid(e);
            let at = material.at(centroid);
            let cond = &material.thermal.conductivity * material.thermal.conductivity_field.at(centroid);
            elements.push(ElementData {
                b: tensor::strain_displacement(&grads, dim),
                nodes,
                volume,
                grads,
                dofs,
                centroid,
                elasticity: at.elasticity(),
                heat_capacity: at.heat_capacity,
                conductivity: cond,
            });
        }
    }

    let mut ke = Vec::new();
    let mut ka = Vec::new();
    let mut kk = Vec::new();
    let mut kl = Vec::new();
    let mut mc = Vec::new();
    let mut mass_lumped = DVector::zeros(n_nodes);
    let mut node_volume = DVector::zeros(n_nodes);
    let rule = QuadratureRule::gauss(dim, 2);
    for el in &elements {
        let nv = el.nodes.len() as f64;
        for &n in &el.nodes {
            node_volume[n] += el.volume / nv;
            mass_lumped[n] += el.volume * el.heat_capacity / nv;
        }
        if dim == 0 {
            mc.push((0, 0, el.heat_capacity));
            continue;
        }
        let kel = el.b.transpose() * &el.elasticity * &el.b * el.volume;
        let kav = el.b.transpose() * &t.viscosity_a * &el.b * el.volume;
        for (a, &da) in el.dofs.iter().enumerate() {
            for (b, &db) in el.dofs.iter().enumerate() {
                ke.push((da, db, kel[(a, b)]));
                ka.push((da, db, kav[(a, b)]));
            }
        }
        for (a, &na) in el.nodes.iter().enumerate() {
            for (b, &nb) in el.nodes.iter().enumerate() {
                let gk = (&el.conductivity * &el.grads[b]).dot(&el.grads[a]);
                kk.push((na, nb, el.volume * gk));
                kl.push((na, nb, el.volume * el.grads[a].dot(&el.grads[b])));
                let m: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(lam, w)| w * lam[a] * lam[b])
                    .sum();
                mc.push((na, nb, el.volume * el.heat_capacity * m));
            }
        }
    }
    let k_lap = csr_from_triplets(n_nodes, n_nodes, &kl);
    let k_alpha = csr_from_triplets(
        n_nodes,
        n_nodes,
        &kl.iter().map(|&(i, j, v)| (i, j, t.alpha * v)).collect::<Vec<_>>(),
    );

    let mut dof_map = vec![None; n_dofs];
    let mut free_dofs = Vec::new();
    for n in 0..n_nodes {
        if mesh.dirichlet_u[n] {
            continue;
        }
        for c in 0..dim {
            dof_map[n * dim + c] = Some(free_dofs.len());
            free_dofs.push(n * dim + c);
        }
    }

    let points = build_points(mesh, &elements, t.alpha > 0.0);
    let mut element_points = vec![Vec::new(); elements.len()];
    for (p, pt) in points.iter().enumerate() {
        for &(e, share) in &pt.parts {
            element_points[e].push((p, share));
        }
    }

    Ok(AssembledOperators {
        mesh_dim: dim,
        tensor_dim: tdim,
        n_nodes,
        n_dofs,
        free_dofs,
        dof_map,
        elements,
        points,
        element_points,
        k_e: csr_from_triplets(n_dofs, n_dofs, &ke),
        k_a: csr_from_triplets(n_dofs, n_dofs, &ka),
        mass_lumped,
        mass_consistent: csr_from_triplets(n_nodes, n_nodes, &mc),
        node_volume,
        k_kappa: csr_from_triplets(n_nodes, n_nodes, &kk),
        k_lap,
        k_alpha,
        alpha: t.alpha,
        beta: t.beta,
    })
}

fn build_points(mesh: &Mesh, elements: &[ElementData], nodal: bool) -> Vec<MaterialPoint> {
    let mean_e = |parts: &[(usize, f64)], w: f64| {
        let mut acc = DMatrix::zeros(elements[0].elasticity.nrows(), elements[0].elasticity.ncols());
        for &(e, s) in parts {
            acc += &elements[e].elasticity * (s / w);
        }
        acc
    };
    if nodal {
        let mut parts = vec![Vec::new(); mesh.n_nodes()];
        for (e, el) in elements.iter().enumerate() {
            let share = el.volume / el.nodes.len() as f64;
            for &n in &el.nodes {
                parts[n].push((e, share));
            }
        }
        parts
            .into_iter()
            .enumerate()
            .map(|(n, parts)| {
                let weight: f64 = parts.iter().map(|p| p.1).sum();
                MaterialPoint {
                    site: PointSite::Node(n),
                    weight,
                    x: mesh.nodes[n],
                    elasticity: mean_e(&parts, weight),
                    parts,
                    theta_nodes: vec![(n, 1.0)],
                }
            })
            .collect()
    } else {
        elements
            .iter()
            .enumerate()
            .map(|(e, el)| {
                let nv = el.nodes.len() as f64;
                MaterialPoint {
                    site: PointSite::Element(e),
                    weight: el.volume,
                    x: el.centroid,
                    parts: vec![(e, el.volume)],
                    elasticity: el.elasticity.clone(),
                    theta_nodes: el.nodes.iter().map(|&n| (n, 1.0 / nv)).collect(),
                }
            })
            .collect()
    }
}

impl AssembledOperators {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    /// Element strains `B_e u_e`, plus an imposed homogeneous strain if given.
    pub fn element_strains(&self, u: &DVector<f64>, imposed: Option<&DVector<f64>>) -> Vec<DVector<f64>> {
        self.elements
            .iter()
            .map(|el| {
                let ue = DVector::from_iterator(el.dofs.len(), el.dofs.iter().map(|&d| u[d]));
                let mut eps = &el.b * ue;
                if let Some(imp) = imposed {
                    eps += imp;
                }
                eps
            })
            .collect()
    }

    /// Share-weighted mean of the point values of `z` on element `e`.
    pub fn element_z(&self, e: usize, z: &[DVector<f64>]) -> DVector<f64> {
        let vol = self.elements[e].volume;
        let mut acc = DVector::zeros(z[0].len());
        for &(p, s) in &self.element_points[e] {
            acc.axpy(s / vol, &z[p], 1.0);
        }
        acc
    }

    /// Mean of the nodal temperatures on element `e`.
    pub fn element_theta(&self, e: usize, theta: &DVector<f64>) -> f64 {
        let n = &self.elements[e].nodes;
        n.iter().map(|&i| theta[i]).sum::<f64>() / n.len() as f64
    }

    pub fn point_theta(&self, p: usize, theta: &DVector<f64>) -> f64 {
        self.points[p].theta_nodes.iter().map(|&(n, w)| w * theta[n]).sum()
    }

    /// Inelastic-strain load `sum_e |e| B_e^T E_e (Q_lin zbar_e + Q_aff)`.
    pub fn q_load(&self, material: &MaterialModel, z: &[DVector<f64>]) -> DVector<f64> {
        let mut f = DVector::zeros(self.n_dofs);
        if self.n_dofs == 0 {
            return f;
        }
        let pm = material.uniform();
        for (e, el) in self.elements.iter().enumerate() {
            let q = pm.inelastic_strain(&self.element_z(e, z)).expect("z sized by construction");
            let fe = el.b.transpose() * (&el.elasticity * q) * el.volume;
            for (a, &d) in el.dofs.iter().enumerate() {
                f[d] += fe[a];
            }
        }
        f
    }

    /// Thermal-expansion load `sum_e |e| beta thetabar_e B_e^T I`.
    pub fn beta_load(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(self.n_dofs);
        if self.beta == 0.0 || self.n_dofs == 0 {
            return f;
        }
        let id = tensor::identity(self.tensor_dim);
        for (e, el) in self.elements.iter().enumerate() {
            let s = self.beta * self.element_theta(e, theta) * el.volume;
            let fe = el.b.transpose() * &id * s;
            for (a, &d) in el.dofs.iter().enumerate() {
                f[d] += fe[a];
            }
        }
        f
    }

    /// Lumped nodal load of a body-force density.
    pub fn body_force(&self, nodes: &[[f64; 2]], f: impl Fn([f64; 2]) -> [f64; 2]) -> DVector<f64> {
        let d = self.mesh_dim;
        let mut out = DVector::zeros(self.n_dofs);
        for (n, x) in nodes.iter().enumerate() {
            let v = f(*x);
            for c in 0..d {
                out[n * d + c] = self.node_volume[n] * v[c];
            }
        }
        out
    }

    /// Restriction of a full-dof operator to the free dofs.
    pub fn reduce(&self, a: &CsrMatrix<f64>) -> CsrMatrix<f64> {
        restrict(a, &self.free_dofs, &self.dof_map)
    }

    pub fn reduce_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_free(), self.free_dofs.iter().map(|&d| v[d]))
    }

    pub fn expand(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dofs);
        for (k, &d) in self.free_dofs.iter().enumerate() {
            out[d] = v[k];
        }
        out
    }

    /// `(K_alpha z)` for one component-stacked point field, returned per point.
    /// Only meaningful for nodal points.
    pub fn alpha_action(&self, z: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let m = z.first().map_or(0, |v| v.len());
        let mut out = vec![DVector::zeros(m); z.len()];
        if self.alpha == 0.0 {
            return out;
        }
        for k in 0..m {
            let comp = DVector::from_iterator(z.len(), z.iter().map(|v| v[k]));
            let y = spmv(&self.k_alpha, &comp);
            for (p, o) in out.iter_mut().enumerate() {
                o[k] = y[p];
            }
        }
        out
    }

    /// Smallest eigenvalue of the constrained elastic stiffness, the discrete
    /// Korn-type coercivity constant. `None` for large systems.
    pub fn korn_estimate(&self) -> Option<f64> {
        let n = self.n_free();
        if n == 0 || n > 2000 {
            return None;
        }
        let k = to_dense(&self.reduce(&self.k_e));
        Some(tensor::eig_range(&k).0)
    }
}
