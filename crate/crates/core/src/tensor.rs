//! Symmetric tensors in Mandel notation.
//!
//! A symmetric `d x d` tensor is stored as a vector of `d(d+1)/2` coordinates
//! in an orthonormal basis of the symmetric matrices: diagonal entries first,
//! then off-diagonal entries scaled by `sqrt(2)`. With this convention the
//! double contraction `a : b` is the Euclidean dot product of the coordinate
//! vectors, and fourth-order maps such as the elasticity tensor become
//! ordinary symmetric matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Number of Mandel coordinates of a symmetric `dim x dim` tensor.
pub fn sym_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Off-diagonal index pairs in Mandel order, after the `dim` diagonal entries.
fn off_diagonal(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        0 | 1 => &[],
        2 => &[(0, 1)],
        _ => &[(1, 2), (0, 2), (0, 1)],
    }
}

/// Mandel coordinates of a symmetric matrix. The matrix is symmetrized first.
pub fn from_matrix(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let dim = m.nrows();
    if m.ncols() != dim || dim > 3 {
        return Err(Error::Shape {
            what: "symmetric tensor",
            expected: dim,
            got: m.ncols(),
        });
    }
    let mut v = DVector::zeros(sym_len(dim));
    for i in 0..dim {
        v[i] = m[(i, i)];
    }
    for (k, &(i, j)) in off_diagonal(dim).iter().enumerate() {
        v[dim + k] = std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]);
    }
    Ok(v)
}

/// Symmetric matrix from Mandel coordinates.
pub fn to_matrix(v: &DVector<f64>, dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = v[i];
    }
    for (k, &(i, j)) in off_diagonal(dim).iter().enumerate() {
        let x = v[dim + k] / std::f64::consts::SQRT_2;
        m[(i, j)] = x;
        m[(j, i)] = x;
    }
    m
}

/// Mandel coordinates of the identity tensor.
pub fn identity(dim: usize) -> DVector<f64> {
    let mut v = DVector::zeros(sym_len(dim));
    for i in 0..dim {
        v[i] = 1.0;
    }
    v
}

pub fn trace(v: &DVector<f64>, dim: usize) -> f64 {
    (0..dim).map(|i| v[i]).sum()
}

/// Orthonormal basis of the trace-free symmetric tensors.
pub fn deviatoric_basis(dim: usize) -> Vec<DVector<f64>> {
    let n = sym_len(dim);
    let unit = |k: usize| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
    let mut out = Vec::new();
    if dim >= 2 {
        let mut a = DVector::zeros(n);
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
        a[1] = -std::f64::consts::FRAC_1_SQRT_2;
        out.push(a);
    }
    if dim == 3 {
        let s = 1.0 / 6f64.sqrt();
        let mut b = DVector::zeros(n);
        b[0] = s;
        b[1] = s;
        b[2] = -2.0 * s;
        out.push(b);
    }
    out.extend((dim..n).map(unit));
    out
}

/// Isotropic elasticity `2 mu Id + lambda I (x) I` in Mandel form.
pub fn isotropic(dim: usize, lambda: f64, mu: f64) -> DMatrix<f64> {
    let n = sym_len(dim);
    let id = identity(dim);
    DMatrix::identity(n, n) * (2.0 * mu) + &id * id.transpose() * lambda
}

/// Symmetric part of a gradient matrix `grad[(i, j)] = d u_i / d x_j`, in
/// Mandel coordinates.
pub fn sym_grad(grad: &DMatrix<f64>) -> DVector<f64> {
    let dim = grad.nrows();
    let mut v = DVector::zeros(sym_len(dim));
    for i in 0..dim {
        v[i] = grad[(i, i)];
    }
    for (k, &(i, j)) in off_diagonal(dim).iter().enumerate() {
        v[dim + k] = std::f64::consts::SQRT_2 * 0.5 * (grad[(i, j)] + grad[(j, i)]);
    }
    v
}

/// Strain-displacement matrix of a simplex element: maps the element
/// displacement vector (node-major, `dim` components per node) to the
/// Mandel strain. `grads[a]` is the gradient of the shape function of node `a`.
pub fn strain_displacement(grads: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let n = sym_len(dim);
    let mut b = DMatrix::zeros(n, grads.len() * dim);
    for (a, g) in grads.iter().enumerate() {
        for c in 0..dim {
            let col = a * dim + c;
            // diagonal: eps_cc = du_c/dx_c
            b[(c, col)] += g[c];
            for (k, &(i, j)) in off_diagonal(dim).iter().enumerate() {
                let s = std::f64::consts::SQRT_2 * 0.5;
                if c == i {
                    b[(dim + k, col)] += s * g[j];
                }
                if c == j {
                    b[(dim + k, col)] += s * g[i];
                }
            }
        }
    }
    b
}

/// Largest and smallest eigenvalues of a symmetric matrix.
pub fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Projection of a symmetric matrix onto the positive semidefinite cone.
pub fn psd_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut vals = eig.eigenvalues.clone();
    vals.iter_mut().for_each(|x| *x = x.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Relative asymmetry `max |M - M^T| / max(1, max |M|)`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}
