//! Multiple-threshold AR(1) with exogenous covariates:
//! `mu(y) = a_i y + b_i` on the regime `(r_{i-1}, r_i]`.

use std::sync::Arc;

use crate::chain::{ChainSpec, ContractionParams};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::models::additive::{make_additive, AdditiveModel, MinorizationSpec, NoiseScale};
use crate::noise::NoiseLaw;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdArModel {
    /// Strictly increasing thresholds `r_1 < ... < r_{m-1}`.
    pub thresholds: Vec<f64>,
    /// Regime slopes `a_1..a_m`.
    pub slopes: Vec<f64>,
    /// Regime intercepts `b_1..b_m`.
    pub intercepts: Vec<f64>,
}

impl ThresholdArModel {
    /// Regime of `y`: the first `i` with `y <= r_i`, else the last.
    pub fn regime(&self, y: f64) -> usize {
        self.thresholds.partition_point(|&r| r < y)
    }

    pub fn mu(&self, y: f64) -> f64 {
        let i = self.regime(y);
        self.slopes[i] * y + self.intercepts[i]
    }

    /// `max(|a_1|, |a_m|)`.
    pub fn rho(&self) -> f64 {
        self.slopes[0].abs().max(self.slopes[self.slopes.len() - 1].abs())
    }

    /// `2 a r + 2 b` with `a, b, r` the largest absolute slope, intercept and threshold.
    pub fn r(&self) -> f64 {
        let amax = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        2.0 * amax(&self.slopes) * amax(&self.thresholds) + 2.0 * amax(&self.intercepts)
    }

    pub fn contraction(&self) -> Result<ContractionParams> {
        ContractionParams::new(self.rho(), self.r())
    }
}

pub fn make_threshold(thresholds: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>) -> Result<ThresholdArModel> {
    let spec_err = |reason: String| Error::Spec { model: "threshold-ar".into(), reason };
    if slopes.len() != thresholds.len() + 1 || intercepts.len() != slopes.len() {
        return Err(spec_err(format!(
            "{} thresholds need {} slopes and intercepts, got {} and {}",
            thresholds.len(),
            thresholds.len() + 1,
            slopes.len(),
            intercepts.len()
        )));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(spec_err("thresholds must be strictly increasing".into()));
    }
    if slopes.iter().chain(&intercepts).chain(&thresholds).any(|v| !v.is_finite()) {
        return Err(spec_err("parameters must be finite".into()));
    }
    for (i, a) in [(1, slopes[0]), (slopes.len(), slopes[slopes.len() - 1])] {
        if !(a.abs() < 1.0) {
            return Err(spec_err(format!("outer slope a_{i} = {a} must satisfy |a_{i}| < 1")));
        }
    }
    if slopes[0] == 0.0 && slopes[slopes.len() - 1] == 0.0 {
        return Err(spec_err("outer slopes cannot both vanish".into()));
    }
    Ok(ThresholdArModel { thresholds, slopes, intercepts })
}

impl ThresholdArModel {
    /// Additive chain `mu(Y) + sigma e + ell(X)` with the declared contraction.
    pub fn build<L>(
        &self,
        sigma: NoiseScale,
        ell: Option<L>,
        noise: NoiseLaw,
        nu_radius: f64,
    ) -> Result<(ChainSpec, MinorizationSpec)>
    where
        L: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let this = Arc::new(self.clone());
        let mut model = AdditiveModel::new("threshold-ar", 1, noise, move |y, _x, out| out[0] = this.mu(y[0]), sigma)?;
        if let Some(ell) = ell {
            model = model.with_shift(ell);
        }
        make_additive(model, Metric::Euclidean, self.contraction()?, nu_radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ThresholdArModel {
        make_threshold(vec![0.0], vec![0.5, -0.5], vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn declared_constants() {
        let m = example();
        assert_eq!(m.rho(), 0.5);
        assert_eq!(m.r(), 2.0);
        let single = make_threshold(vec![], vec![0.7], vec![-0.3]).unwrap();
        assert_eq!(single.r(), 0.6);
        assert_eq!(single.rho(), 0.7);
    }

    #[test]
    fn regimes_are_left_closed_at_threshold() {
        let m = example();
        assert_eq!(m.regime(0.0), 0);
        assert_eq!(m.regime(1e-12), 1);
        assert_eq!(m.mu(0.0), 1.0);
        assert_eq!(m.mu(2.0), -2.0);
    }

    #[test]
    fn grid_oracle_for_r() {
        // exhaustive grid over [-100, 100] at step 0.01
        let m = example();
        let ys: Vec<f64> = (-10_000..=10_000).map(|i| i as f64 * 0.01).collect();
        let mus: Vec<f64> = ys.iter().map(|&y| m.mu(y)).collect();
        let mut worst = f64::NEG_INFINITY;
        for (i, &y) in ys.iter().enumerate() {
            for (j, &yp) in ys.iter().enumerate() {
                worst = worst.max((mus[i] - mus[j]).abs() - 0.5 * (y - yp).abs());
            }
        }
        assert!(worst <= 2.0 + 1e-9, "{worst}");
        assert!(worst > 1.9);
    }

    #[test]
    fn rejects_explosive_outer_regime() {
        let err = make_threshold(vec![0.0], vec![0.5, 1.2], vec![0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("a_2 = 1.2"), "{err}");
        assert!(make_threshold(vec![1.0, 0.0], vec![0.5, 0.1, 0.5], vec![0.0; 3]).is_err());
    }
}
