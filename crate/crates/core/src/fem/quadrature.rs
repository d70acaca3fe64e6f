//! Quadrature rules on simplices, in barycentric coordinates.

/// Points (barycentric) and weights summing to one; multiply by the element
/// volume to integrate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Gauss rule exact at least to `degree` (1, 2 or 3) on a `dim`-simplex.
    pub fn gauss(dim: usize, degree: usize) -> Self {
        match (dim, degree) {
            (0, _) => Self {
                points: vec![vec![1.0]],
                weights: vec![1.0],
                degree: usize::MAX,
            },
            (1, 0..=1) => Self {
                points: vec![vec![0.5, 0.5]],
                weights: vec![1.0],
                degree: 1,
            },
            (1, _) => {
                let a = 0.5 - 0.5 / 3f64.sqrt();
                Self {
                    points: vec![vec![1.0 - a, a], vec![a, 1.0 - a]],
                    weights: vec![0.5, 0.5],
                    degree: 3,
                }
            }
            (_, 0..=1) => Self {
                points: vec![vec![1.0 / 3.0; 3]],
                weights: vec![1.0],
                degree: 1,
            },
            (_, 2) => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                Self {
                    points: vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]],
                    weights: vec![1.0 / 3.0; 3],
                    degree: 2,
                }
            }
            _ => {
                // Strang-Fix 6-point rule
                let (a1, b1, w1) = (0.816847572980459, 0.091576213509771, 0.109951743655322);
                let (a2, b2, w2) = (0.108103018168070, 0.445948490915965, 0.223381589678011);
                Self {
                    points: vec![
                        vec![a1, b1, b1],
                        vec![b1, a1, b1],
                        vec![b1, b1, a1],
                        vec![a2, b2, b2],
                        vec![b2, a2, b2],
                        vec![b2, b2, a2],
                    ],
                    weights: vec![w1, w1, w1, w2, w2, w2],
                    degree: 3,
                }
            }
        }
    }

    /// Vertex rule: exact for linear functions, diagonal mass matrix.
    pub fn vertex(dim: usize) -> Self {
        let n = dim + 1;
        Self {
            points: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            weights: vec![1.0 / n as f64; n],
            degree: 1,
        }
    }

    /// Physical coordinates of every point on an element with the given vertices.
    pub fn map(&self, vertices: &[[f64; 2]]) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .map(|lam| {
                let mut x = [0.0, 0.0];
                for (l, v) in lam.iter().zip(vertices) {
                    x[0] += l * v[0];
                    x[1] += l * v[1];
                }
                x
            })
            .collect()
    }
}
