//! Spherical noise laws for the i.i.d. innovations.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ChiSquared as ChiSq, ContinuousCDF, FisherSnedecor, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Law of the innovation `e` on `R^dim`.
///
/// Both proper laws are spherically symmetric with a radial profile that is
/// strictly decreasing in `|e|`, which is what the minorization constants
/// rely on.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseLaw {
    /// Standard Gaussian with identity covariance.
    Gaussian { dim: usize },
    /// Multivariate Student-t with `dof` degrees of freedom and identity scale.
    StudentT { dim: usize, dof: f64 },
    /// Point mass at the origin. Only for diagnostics: it has no density and
    /// is rejected wherever a minorization is built.
    Degenerate { dim: usize },
}

impl NoiseLaw {
    pub fn gaussian(dim: usize) -> Self {
        NoiseLaw::Gaussian { dim }
    }

    pub fn student_t(dim: usize, dof: f64) -> Result<Self> {
        if !(dof > 0.0 && dof.is_finite()) {
            return Err(invalid("dof", format!("must be positive, got {dof}")));
        }
        Ok(NoiseLaw::StudentT { dim, dof })
    }

    pub fn dim(&self) -> usize {
        match *self {
            NoiseLaw::Gaussian { dim } | NoiseLaw::StudentT { dim, .. } | NoiseLaw::Degenerate { dim } => dim,
        }
    }

    /// Whether the density is strictly positive on every bounded set.
    pub fn has_positive_density(&self) -> bool {
        !matches!(self, NoiseLaw::Degenerate { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            NoiseLaw::Gaussian { .. } => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            NoiseLaw::StudentT { dof, .. } => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let w: f64 = ChiSquared::new(dof).expect("dof validated").sample(rng);
                let scale = (dof / w).sqrt();
                for v in out.iter_mut() {
                    *v *= scale;
                }
            }
            NoiseLaw::Degenerate { .. } => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// Log-density as a function of the squared radius `|e|^2`.
    pub fn ln_radial_density(&self, r2: f64) -> f64 {
        match *self {
            NoiseLaw::Gaussian { dim } => -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * r2,
            NoiseLaw::StudentT { dim, dof } => {
                let d = dim as f64;
                ln_gamma(0.5 * (dof + d))
                    - ln_gamma(0.5 * dof)
                    - 0.5 * d * (dof * std::f64::consts::PI).ln()
                    - 0.5 * (dof + d) * (r2 / dof).ln_1p()
            }
            NoiseLaw::Degenerate { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn density(&self, e: &[f64]) -> f64 {
        let r2: f64 = e.iter().map(|v| v * v).sum();
        self.ln_radial_density(r2).exp()
    }

    /// `P(|e| > t)` for the Euclidean norm, in closed form.
    pub fn tail_prob(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if matches!(self, NoiseLaw::Degenerate { .. }) { 0.0 } else { 1.0 };
        }
        match *self {
            NoiseLaw::Gaussian { dim } => {
                let chi = ChiSq::new(dim as f64).expect("positive dimension");
                chi.sf(t * t)
            }
            NoiseLaw::StudentT { dim: 1, dof } => {
                let st = StudentsT::new(0.0, 1.0, dof).expect("dof validated");
                2.0 * st.sf(t)
            }
            NoiseLaw::StudentT { dim, dof } => {
                let d = dim as f64;
                let f = FisherSnedecor::new(d, dof).expect("dof validated");
                f.sf(t * t / d)
            }
            NoiseLaw::Degenerate { .. } => 0.0,
        }
    }

    /// Mean Euclidean norm `E|e|`.
    pub fn mean_norm(&self) -> f64 {
        match *self {
            NoiseLaw::Gaussian { dim } => {
                let d = dim as f64;
                std::f64::consts::SQRT_2 * (ln_gamma(0.5 * (d + 1.0)) - ln_gamma(0.5 * d)).exp()
            }
            NoiseLaw::StudentT { dim, dof } => {
                if dof <= 1.0 {
                    return f64::INFINITY;
                }
                let d = dim as f64;
                // |e| = |z| sqrt(dof / w), with z and w independent
                let ez = std::f64::consts::SQRT_2 * (ln_gamma(0.5 * (d + 1.0)) - ln_gamma(0.5 * d)).exp();
                let e_inv_sqrt_w = (ln_gamma(0.5 * (dof - 1.0)) - ln_gamma(0.5 * dof)).exp() / std::f64::consts::SQRT_2;
                ez * dof.sqrt() * e_inv_sqrt_w
            }
            NoiseLaw::Degenerate { .. } => 0.0,
        }
    }
}

/// Volume of the Euclidean unit ball in `R^dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    let d = dim as f64;
    (0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0)).exp()
}
