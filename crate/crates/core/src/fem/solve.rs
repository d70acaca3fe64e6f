//! Sparse helpers and the symmetric positive-definite solver.
//!
//! Systems below [`DENSE_LIMIT`] unknowns are factorized densely (Cholesky);
//! larger ones use conjugate gradients with a Jacobi preconditioner.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

pub const DENSE_LIMIT: usize = 2000;
pub const SOLVE_TOL: f64 = 1e-10;
pub const PCG_MAX_ITER: usize = 20_000;

/// CSR matrix from (row, col, value) triplets; duplicates are summed.
pub fn csr_from_triplets(n: usize, m: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, m);
    for &(i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn spmv(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        let mut s = 0.0;
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            s += v * x[j];
        }
        y[i] = s;
    }
    y
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

pub fn diagonal(a: &CsrMatrix<f64>) -> DVector<f64> {
    let mut d = DVector::zeros(a.nrows());
    for (i, j, v) in a.triplet_iter() {
        if i == j {
            d[i] += *v;
        }
    }
    d
}

/// `a + s * b` for matrices of equal shape.
pub fn add_scaled(a: &CsrMatrix<f64>, s: f64, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut t: Vec<_> = a.triplet_iter().map(|(i, j, v)| (i, j, *v)).collect();
    t.extend(b.triplet_iter().map(|(i, j, v)| (i, j, s * v)));
    csr_from_triplets(a.nrows(), a.ncols(), &t)
}

/// `a + diag(d)`.
pub fn add_diagonal(a: &CsrMatrix<f64>, d: &DVector<f64>) -> CsrMatrix<f64> {
    let mut t: Vec<_> = a.triplet_iter().map(|(i, j, v)| (i, j, *v)).collect();
    t.extend(d.iter().enumerate().map(|(i, v)| (i, i, *v)));
    csr_from_triplets(a.nrows(), a.ncols(), &t)
}

/// Restriction to the rows and columns listed in `keep`; `map[i]` is the new
/// index of old index `i`.
pub fn restrict(a: &CsrMatrix<f64>, keep: &[usize], map: &[Option<usize>]) -> CsrMatrix<f64> {
    let t: Vec<_> = a
        .triplet_iter()
        .filter_map(|(i, j, v)| Some((map[i]?, map[j]?, *v)))
        .collect();
    csr_from_triplets(keep.len(), keep.len(), &t)
}

/// Relative asymmetry of a sparse matrix.
pub fn asymmetry(a: &CsrMatrix<f64>) -> f64 {
    crate::tensor::asymmetry(&to_dense(a))
}

/// A reusable factorization or preconditioner for one SPD matrix.
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Empty,
    Dense(Cholesky<f64, Dyn>),
    Iterative {
        matrix: CsrMatrix<f64>,
        inv_diag: DVector<f64>,
    },
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Ok(SpdSolver::Empty);
        }
        if n < DENSE_LIMIT {
            let dense = to_dense(a);
            return Cholesky::new(dense)
                .map(SpdSolver::Dense)
                .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()));
        }
        let d = diagonal(a);
        if d.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Numeric("matrix has a nonpositive diagonal entry".into()));
        }
        Ok(SpdSolver::Iterative {
            matrix: a.clone(),
            inv_diag: d.map(|x| 1.0 / x),
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            SpdSolver::Empty => Ok(DVector::zeros(0)),
            SpdSolver::Dense(ch) => Ok(ch.solve(b)),
            SpdSolver::Iterative { matrix, inv_diag } => pcg(matrix, inv_diag, b),
        }
    }
}

/// Solves `a x = b` for SPD `a`.
pub fn solve_spd(a: &CsrMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::Shape {
            what: "right-hand side",
            expected: a.nrows(),
            got: b.len(),
        });
    }
    SpdSolver::new(a)?.solve(b)
}

/// Jacobi-preconditioned conjugate gradients to `|r| <= SOLVE_TOL |b|`.
pub fn pcg(a: &CsrMatrix<f64>, inv_diag: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let bnorm = b.norm();
    let mut x = DVector::zeros(b.len());
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut zv = r.component_mul(inv_diag);
    let mut p = zv.clone();
    let mut rz = r.dot(&zv);
    for _ in 0..PCG_MAX_ITER {
        let ap = spmv(a, &p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::Numeric("matrix is not positive definite".into()));
        }
        let step = rz / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        if r.norm() <= SOLVE_TOL * bnorm {
            return Ok(x);
        }
        zv = r.component_mul(inv_diag);
        let rz_new = r.dot(&zv);
        p = &zv + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::Convergence {
        what: "conjugate gradients",
        iterations: PCG_MAX_ITER,
        residual: r.norm() / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_diagonal() {
        let id = csr_from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(solve_spd(&id, &b).unwrap(), b);
        let d = csr_from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]);
        let x = solve_spd(&d, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-15);
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, CsrMatrix<f64>) {
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &g * g.transpose() + DMatrix::identity(n, n) * n as f64 * 0.1;
        let t: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, a[(i, j)])).collect();
        (a, csr_from_triplets(n, n, &t))
    }

    #[test]
    fn random_spd_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, csr) = random_spd(50, &mut rng);
        let b = DVector::from_fn(50, |_, _| rng.gen_range(-1.0..1.0));
        let oracle = a.clone().lu().solve(&b).unwrap();
        let x = solve_spd(&csr, &b).unwrap();
        assert!((&x - &oracle).amax() < 1e-9);
        let y = pcg(&csr, &diagonal(&csr).map(|d| 1.0 / d), &b).unwrap();
        assert!((&y - &oracle).amax() < 1e-9);
        assert!((&a * &y - &b).norm() <= 1e-10 * b.norm() * 1.0001);
    }

    #[test]
    fn rejects_indefinite() {
        let a = csr_from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(matches!(solve_spd(&a, &DVector::from_vec(vec![1.0, 1.0])), Err(Error::Numeric(_))));
    }

    #[test]
    fn restriction_drops_constrained() {
        let a = csr_from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0), (0, 2, 5.0)]);
        let map = [Some(0), None, Some(1)];
        let r = to_dense(&restrict(&a, &[0, 2], &map));
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 0.0, 3.0]));
    }
}
