//! Multivariate AR `Y' = A Y + r(Y) + sigma e + ell(X)` with `rho(A) < 1`
//! and a bounded perturbation `r`, contracting in a constructed norm.

use std::sync::Arc;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::chain::{ChainSpec, ContractionParams};
use crate::error::{invalid, Error, Result};
use crate::metric::{max_row_sum, Metric, TransformedMaxNorm};
use crate::models::additive::{make_additive, AdditiveModel, MinorizationSpec, NoiseScale};
use crate::noise::NoiseLaw;

/// A vector norm in which `A` is a strict contraction.
#[derive(Debug, Clone)]
pub struct SubordinateNorm {
    pub norm: Arc<TransformedMaxNorm>,
    /// Spectral radius of `A`.
    pub spectral_radius: f64,
    /// Target `(1 + rho(A))/2`.
    pub theta: f64,
    /// Diagonal scaling ratio used for the super-diagonal entries.
    pub delta: f64,
    /// Induced operator norm of `A` (max-row-sum of `S A S^{-1}`), `<= theta`.
    pub value: f64,
}

impl SubordinateNorm {
    pub fn metric(&self) -> Metric {
        Metric::Transformed(self.norm.clone())
    }
}

const SPECTRAL_MARGIN: f64 = 1e-8;

/// Spectral radius of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Builds `S = D^{-1} Q^H` from the complex Schur form `A = Q T Q^H` and
/// `D = diag(1, delta, delta^2, ...)`, so that `S A S^{-1} = D^{-1} T D` has
/// its super-diagonal shrunk by powers of `delta`. `delta` is the largest
/// power of two giving max-row-sum `<= (1 + rho(A))/2`.
pub fn subordinate_norm(a: &DMatrix<f64>) -> Result<SubordinateNorm> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(invalid("A", "must be a nonempty square matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid("A", "entries must be finite"));
    }
    let spec_err = |reason: String| Error::Spec { model: "multivar-ar".into(), reason };
    let rho = spectral_radius(a);
    if rho >= 1.0 - SPECTRAL_MARGIN {
        return Err(spec_err(format!("spectral radius {rho} is not below 1")));
    }
    let theta = 0.5 * (1.0 + rho);
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let schur =
        Schur::try_new(ac.clone(), 1e-14, 10_000).ok_or_else(|| spec_err("Schur decomposition did not converge".into()))?;
    let (q, _t) = schur.unpack();
    let qh = q.adjoint();
    for k in 0..=64 {
        let delta = 0.5f64.powi(k);
        let d = DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { Complex64::new(delta.powi(i as i32), 0.0) } else { Complex64::new(0.0, 0.0) },
        );
        let d_inv =
            DMatrix::from_fn(
                n,
                n,
                |i, j| if i == j { Complex64::new(delta.powi(-(i as i32)), 0.0) } else { Complex64::new(0.0, 0.0) },
            );
        let s = &d_inv * &qh;
        let s_inv = &q * &d;
        let value = max_row_sum(&(&s * &ac * &s_inv));
        if value <= theta {
            return Ok(SubordinateNorm {
                norm: Arc::new(TransformedMaxNorm { transform: s, inverse: s_inv }),
                spectral_radius: rho,
                theta,
                delta,
                value,
            });
        }
    }
    Err(spec_err(format!("no diagonal scaling reaches norm {theta}")))
}

/// The assembled model: `A`, its norm and the perturbation bound.
#[derive(Debug, Clone)]
pub struct MultivarArModel {
    pub a: DMatrix<f64>,
    pub norm: SubordinateNorm,
    /// `sup |r(y)|` in the constructed norm.
    pub r_sup: f64,
}

impl MultivarArModel {
    /// `(||A||, 2 sup |r|)`.
    pub fn contraction(&self) -> Result<ContractionParams> {
        ContractionParams::new(self.norm.value, 2.0 * self.r_sup)
    }
}

/// Builds `mu(y) = A y + r(y)` where `r` takes values in the box
/// `prod [-w_i, w_i]`; the sup of the constructed norm over the box is
/// attained at a vertex.
pub fn make_multivar<P>(
    a: DMatrix<f64>,
    perturbation: P,
    half_widths: Vec<f64>,
    noise: NoiseLaw,
    nu_radius: f64,
) -> Result<(MultivarArModel, ChainSpec, MinorizationSpec)>
where
    P: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
{
    let dim = a.nrows();
    if half_widths.len() != dim || half_widths.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(invalid("half_widths", "need one finite nonnegative half-width per coordinate"));
    }
    if dim > 16 {
        return Err(invalid("A", "dimension above 16 is not supported"));
    }
    let norm = subordinate_norm(&a)?;
    let r_sup = (0..1usize << dim)
        .map(|mask| {
            let v: Vec<f64> = (0..dim).map(|i| if mask >> i & 1 == 1 { half_widths[i] } else { -half_widths[i] }).collect();
            norm.norm.norm(&v)
        })
        .fold(0.0, f64::max);
    let model = MultivarArModel { a: a.clone(), norm, r_sup };
    let contraction = model.contraction()?;
    let amat = a;
    let dynamics = AdditiveModel::new(
        "multivar-ar",
        dim,
        noise,
        move |y, _x, out| {
            perturbation(y, out);
            for (i, o) in out.iter_mut().enumerate() {
                *o += (0..y.len()).map(|j| amat[(i, j)] * y[j]).sum::<f64>();
            }
        },
        NoiseScale::Constant(1.0),
    )?;
    let metric = model.norm.metric();
    let (chain, minor) = make_additive(dynamics, metric, contraction, nu_radius)?;
    Ok((model, chain, minor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    #[test]
    fn jordan_block_example() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
        let s = subordinate_norm(&a).unwrap();
        assert!((s.spectral_radius - 0.9).abs() < 1e-12);
        assert!((s.theta - 0.95).abs() < 1e-12);
        assert_eq!(s.delta, 1.0 / 32.0);
        // D^{-1} A D with D = diag(1, 1/32): rows (0.9, 1/32), (0, 0.9)
        assert!((s.value - (0.9 + 1.0 / 32.0)).abs() < 1e-12, "{}", s.value);
        assert!(s.value <= 0.95);
    }

    #[test]
    fn diagonal_needs_no_scaling() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.7]);
        let s = subordinate_norm(&a).unwrap();
        assert_eq!(s.delta, 1.0);
        assert!((s.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_unit_spectral_radius() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        assert!(matches!(subordinate_norm(&a), Err(Error::Spec { .. })));
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0 - 1e-9, 0.0]);
        assert!(subordinate_norm(&a).is_err());
    }

    #[test]
    fn random_five_by_five_contracts_on_samples() {
        let mut rng = RngStream::new(11, 0).rng();
        let mut b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let r = spectral_radius(&b);
        b *= 0.8 / r;
        let s = subordinate_norm(&b).unwrap();
        assert!(s.value < 1.0 && s.value <= s.theta);
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
            let av: Vec<f64> = (0..5).map(|i| (0..5).map(|j| b[(i, j)] * v[j]).sum()).collect();
            assert!(s.norm.norm(&av) <= s.theta * s.norm.norm(&v) * (1.0 + 1e-10));
        }
    }

    #[test]
    fn complex_spectrum_model() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.6]);
        let (m, chain, minor) = make_multivar(
            a,
            |y, out| {
                out[0] = 0.1 * y[0].sin();
                out[1] = 0.1 * y[1].cos();
            },
            vec![0.1, 0.1],
            NoiseLaw::gaussian(2),
            1.0,
        )
        .unwrap();
        assert!(m.norm.value < 1.0);
        assert_eq!(chain.contraction.r, 2.0 * m.r_sup);
        assert!(minor.eta(&[0.0]) > 0.0);
    }
}
