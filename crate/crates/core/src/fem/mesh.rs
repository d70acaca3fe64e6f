//! Structured simplex meshes on intervals and rectangles, plus the
//! degenerate single-point mesh used by the material-point driver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Geometry descriptor accepted by [`build_mesh`].
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    /// One material point, no elements.
    Point,
    /// `[0, length]` split into `n` equal elements.
    Interval { length: f64, n: usize },
    /// `[0, lx] x [0, ly]` with `nx x ny` quads, each split into two triangles.
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    /// 0, 1 or 2.
    pub dim: usize,
    /// Coordinates, padded with zeros to two components.
    pub nodes: Vec<[f64; 2]>,
    /// Simplex connectivity (`dim + 1` nodes each).
    pub elements: Vec<Vec<usize>>,
    /// Nodes where the displacement is held at zero.
    pub dirichlet_u: Vec<bool>,
    /// Nodes on the boundary, where `z` and `theta` satisfy zero-flux conditions.
    pub neumann_all: Vec<bool>,
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh> {
    match *spec {
        MeshSpec::Point => Ok(Mesh {
            dim: 0,
            nodes: vec![[0.0, 0.0]],
            elements: Vec::new(),
            dirichlet_u: vec![false],
            neumann_all: vec![false],
        }),
        MeshSpec::Interval { length, n } => {
            if n == 0 || !(length > 0.0) {
                return Err(Error::Mesh(format!(
                    "interval needs a positive length and element count, got length {length}, n {n}"
                )));
            }
            let h = length / n as f64;
            let nodes = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
            let elements = (0..n).map(|i| vec![i, i + 1]).collect();
            let mut boundary = vec![false; n + 1];
            boundary[0] = true;
            boundary[n] = true;
            Ok(Mesh {
                dim: 1,
                nodes,
                elements,
                dirichlet_u: boundary.clone(),
                neumann_all: boundary,
            })
        }
        MeshSpec::Rectangle { lx, ly, nx, ny } => {
            if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) {
                return Err(Error::Mesh(format!(
                    "rectangle needs positive extents and counts, got {lx} x {ly}, {nx} x {ny}"
                )));
            }
            let id = |i: usize, j: usize| j * (nx + 1) + i;
            let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
            let mut boundary = Vec::with_capacity(nodes.capacity());
            for j in 0..=ny {
                for i in 0..=nx {
                    nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
                    boundary.push(i == 0 || j == 0 || i == nx || j == ny);
                }
            }
            let mut elements = Vec::with_capacity(2 * nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    // both triangles are right-angled, which keeps the P1
                    // Laplacian off-diagonals nonpositive
                    elements.push(vec![a, b, c]);
                    elements.push(vec![a, c, d]);
                }
            }
            Ok(Mesh {
                dim: 2,
                nodes,
                elements,
                dirichlet_u: boundary.clone(),
                neumann_all: boundary,
            })
        }
    }
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Volume (length or area) and shape-function gradients of element `e`.
    pub fn element_geometry(&self, e: usize) -> Result<(f64, Vec<DVector<f64>>)> {
        let el = &self.elements[e];
        match self.dim {
            1 => {
                let (x0, x1) = (self.nodes[el[0]][0], self.nodes[el[1]][0]);
                let h = x1 - x0;
                if !(h.abs() > 0.0) {
                    return Err(Error::Mesh(format!("element {e} has zero length")));
                }
                let g = 1.0 / h;
                Ok((h.abs(), vec![DVector::from_element(1, -g), DVector::from_element(1, g)]))
            }
            2 => {
                let p: Vec<_> = el.iter().map(|&n| self.nodes[n]).collect();
                let jac = DMatrix::from_row_slice(
                    2,
                    2,
                    &[p[1][0] - p[0][0], p[2][0] - p[0][0], p[1][1] - p[0][1], p[2][1] - p[0][1]],
                );
                let det = jac.determinant();
                if !(det.abs() > 1e-300) {
                    return Err(Error::Mesh(format!("element {e} is degenerate")));
                }
                let inv_t = jac
                    .try_inverse()
                    .ok_or_else(|| Error::Mesh(format!("element {e} is degenerate")))?
                    .transpose();
                let refs = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
                let grads = refs
                    .iter()
                    .map(|r| &inv_t * DVector::from_column_slice(r))
                    .collect();
                Ok((0.5 * det.abs(), grads))
            }
            _ => Err(Error::Mesh(format!("no elements in dimension {}", self.dim))),
        }
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let el = &self.elements[e];
        let k = el.len() as f64;
        let mut c = [0.0, 0.0];
        for &n in el {
            c[0] += self.nodes[n][0] / k;
            c[1] += self.nodes[n][1] / k;
        }
        c
    }

    /// Structural checks: connectivity in range, element sizes, positive volumes.
    pub fn check(&self) -> Result<()> {
        if self.dirichlet_u.len() != self.n_nodes() || self.neumann_all.len() != self.n_nodes() {
            return Err(Error::Mesh("boundary tags do not match the node count".into()));
        }
        for (e, el) in self.elements.iter().enumerate() {
            if el.len() != self.dim + 1 || el.iter().any(|&n| n >= self.n_nodes()) {
                return Err(Error::Mesh(format!("element {e} has invalid connectivity")));
            }
            self.element_geometry(e)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_counts_and_tags() {
        let m = build_mesh(&MeshSpec::Interval { length: 1.0, n: 4 }).unwrap();
        assert_eq!(m.n_nodes(), 5);
        assert_eq!(m.n_elements(), 4);
        let tagged: Vec<_> = (0..5).filter(|&i| m.dirichlet_u[i]).collect();
        assert_eq!(tagged, vec![0, 4]);
        assert_eq!(m.dirichlet_u, m.neumann_all);
        m.check().unwrap();
    }

    #[test]
    fn square_split() {
        let m = build_mesh(&MeshSpec::Rectangle { lx: 1.0, ly: 1.0, nx: 2, ny: 2 }).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.dirichlet_u.iter().filter(|&&b| b).count(), 8);
        let area: f64 = (0..8).map(|e| m.element_geometry(e).unwrap().0).sum();
        assert!((area - 1.0).abs() < 1e-14);
        m.check().unwrap();
    }

    #[test]
    fn point_mode() {
        let m = build_mesh(&MeshSpec::Point).unwrap();
        assert_eq!((m.n_nodes(), m.n_elements()), (1, 0));
        assert!(!m.dirichlet_u[0] && !m.neumann_all[0]);
    }

    #[test]
    fn rejects_empty_counts() {
        assert!(matches!(
            build_mesh(&MeshSpec::Interval { length: 1.0, n: 0 }),
            Err(Error::Mesh(_))
        ));
        assert!(build_mesh(&MeshSpec::Rectangle { lx: -1.0, ly: 1.0, nx: 1, ny: 1 }).is_err());
    }

    #[test]
    fn gradients_sum_to_zero() {
        let m = build_mesh(&MeshSpec::Rectangle { lx: 2.0, ly: 1.0, nx: 3, ny: 2 }).unwrap();
        for e in 0..m.n_elements() {
            let (_, g) = m.element_geometry(e).unwrap();
            let s = &g[0] + &g[1] + &g[2];
            assert!(s.amax() < 1e-12);
        }
    }
}
