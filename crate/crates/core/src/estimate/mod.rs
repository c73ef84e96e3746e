//! Empirical estimators: total variation, alpha-mixing, moments and rate fits.

pub mod fit;
pub mod mixing;
pub mod moment;
pub mod tv;

pub use fit::{compare_templates, rate_fit, RateTemplate, TemplateFit};
pub use mixing::{alpha_mixing_estimate, mixing_curve, EventClass, MixingEstimate};
pub use moment::{plateau_bound, theta_moment};
pub use tv::{tv_decay_curve, tv_estimate, TvEstimate};

use crate::error::{Error, Result};

/// One point `(n, estimate, std_error)` of a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub index: usize,
    pub estimate: f64,
    pub std_error: f64,
}

/// An estimated curve with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecayCurve {
    points: Vec<CurvePoint>,
}

impl DecayCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        if points.windows(2).any(|w| w[0].index >= w[1].index) {
            return Err(Error::Input("curve indices must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Builds a noise-free curve from a function of the index.
    pub fn from_fn(indices: impl IntoIterator<Item = usize>, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new(indices.into_iter().map(|n| CurvePoint { index: n, estimate: f(n), std_error: 0.0 }).collect())
    }
}
