//! State-space metrics.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

/// The vector norm `|v| = max_i |(S v)_i|` for an invertible complex `S`.
///
/// Restricted to real vectors this is a norm on `R^d`; its induced operator
/// norm of `A` is the max-row-sum of `S A S^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMaxNorm {
    pub transform: DMatrix<Complex64>,
    pub inverse: DMatrix<Complex64>,
}

impl TransformedMaxNorm {
    pub fn dim(&self) -> usize {
        self.transform.ncols()
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        let s = &self.transform;
        (0..s.nrows())
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, vj) in v.iter().enumerate() {
                    acc += s[(i, j)] * *vj;
                }
                acc.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Operator norm of a real matrix in this vector norm.
    pub fn operator_norm(&self, a: &DMatrix<f64>) -> f64 {
        let ac = a.map(|x| Complex64::new(x, 0.0));
        max_row_sum(&(&self.transform * ac * &self.inverse))
    }

    /// Smallest `c` with `|w| <= c |w|_2` for real `w`.
    fn euclid_to_norm(&self) -> f64 {
        let s = &self.transform;
        (0..s.nrows())
            .map(|i| {
                // sup over real unit w of |(a + i b) . w| is the spectral norm of [a; b]
                let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
                for j in 0..s.ncols() {
                    let z = s[(i, j)];
                    aa += z.re * z.re;
                    bb += z.im * z.im;
                    ab += z.re * z.im;
                }
                let tr = aa + bb;
                let det = aa * bb - ab * ab;
                (0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt())).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// A `c` with `|w|_2 <= c |w|` for real `w` (column-norm bound on `S^{-1}`).
    fn norm_to_euclid(&self) -> f64 {
        let inv = &self.inverse;
        (0..inv.ncols()).map(|j| (0..inv.nrows()).map(|i| inv[(i, j)].norm_sqr()).sum::<f64>().sqrt()).sum()
    }
}

pub(crate) fn max_row_sum(m: &DMatrix<Complex64>) -> f64 {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Metric `d` on the state space `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Euclidean,
    Transformed(Arc<TransformedMaxNorm>),
}

impl Metric {
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Metric::Transformed(t) => t.norm(v),
        }
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => {
                if a.len() == 1 {
                    (a[0] - b[0]).abs()
                } else {
                    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
                }
            }
            Metric::Transformed(t) => {
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                t.norm(&diff)
            }
        }
    }

    /// Constant `c` with `d(u, v) <= c |u - v|_2`.
    pub fn from_euclidean_bound(&self) -> f64 {
        match self {
            Metric::Euclidean => 1.0,
            Metric::Transformed(t) => t.euclid_to_norm(),
        }
    }

    /// Constant `c` with `|u - v|_2 <= c d(u, v)`.
    pub fn to_euclidean_bound(&self) -> f64 {
        match self {
            Metric::Euclidean => 1.0,
            Metric::Transformed(t) => t.norm_to_euclid(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    fn sample_transform() -> TransformedMaxNorm {
        let s = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2), Complex64::new(0.0, 0.0), Complex64::new(2.0, -1.0)],
        );
        let inverse = s.clone().try_inverse().unwrap();
        TransformedMaxNorm { transform: s, inverse }
    }

    #[test]
    fn equivalence_constants_hold_on_samples() {
        let m = Metric::Transformed(Arc::new(sample_transform()));
        let up = m.from_euclidean_bound();
        let down = m.to_euclidean_bound();
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..10_000 {
            let v: [f64; 2] = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let e = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let n = m.norm(&v);
            assert!(n <= up * e * (1.0 + 1e-12));
            assert!(e <= down * n * (1.0 + 1e-12));
        }
    }

    #[test]
    fn euclidean_is_plain_distance() {
        let m = Metric::Euclidean;
        assert_eq!(m.dist(&[1.0], &[-2.0]), 3.0);
        assert_eq!(m.dist(&[0.0, 3.0], &[4.0, 0.0]), 5.0);
    }
}
