//! Log-price with stochastic, possibly long-memory, volatility.
//!
//! The environment is `X_n = (zeta_{n+1}, Z_n)` with `Z` a linear process in
//! the volatility innovations `zeta`; the recursion is
//! `Y' = mu(Y) + sqrt(1 - corr^2) e^{Z} e + corr e^{Z} zeta`.

use crate::chain::{ChainSpec, ContractionParams};
use crate::env::{EnvironmentSpec, MixingProfile};
use crate::error::{invalid, Result};
use crate::metric::Metric;
use crate::models::additive::{make_additive, AdditiveModel, MinorizationSpec, NoiseScale};
use crate::noise::NoiseLaw;

#[derive(Debug, Clone, PartialEq)]
pub struct StochVolModel {
    pub b_coeffs: Vec<f64>,
    /// Correlation of price and volatility shocks.
    pub corr: f64,
    pub env: EnvironmentSpec,
}

/// Assembles `ell(x) = corr e^{x_2} x_1`, `sigma(x) = sqrt(1-corr^2) e^{x_2}`
/// around the drift `mu`, whose contraction `(rho, R)` the caller declares.
pub fn make_stochvol<M>(
    b_coeffs: Vec<f64>,
    corr: f64,
    mixing: MixingProfile,
    drift_mu: M,
    contraction: ContractionParams,
    noise: NoiseLaw,
    nu_radius: f64,
) -> Result<(StochVolModel, ChainSpec, MinorizationSpec)>
where
    M: Fn(f64) -> f64 + Send + Sync + 'static,
{
    if !(corr.abs() < 1.0) {
        return Err(invalid("corr", format!("must lie in (-1,1), got {corr}")));
    }
    let env = EnvironmentSpec::linear_process(b_coeffs.clone(), 1.0, mixing)?;
    let scale = (1.0 - corr * corr).sqrt();
    let mut model = AdditiveModel::new(
        "stochvol",
        1,
        noise,
        move |y, _x, out| out[0] = drift_mu(y[0]),
        NoiseScale::Scalar(std::sync::Arc::new(move |x: &[f64]| scale * x[1].exp())),
    )?;
    if corr != 0.0 {
        model = model.with_shift(move |x, out| out[0] = corr * x[1].exp() * x[0]);
    }
    let (chain, minor) = make_additive(model, Metric::Euclidean, contraction, nu_radius)?;
    Ok((StochVolModel { b_coeffs, corr, env }, chain, minor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::step;
    use crate::rng::RngStream;

    fn build(b: Vec<f64>, corr: f64) -> (StochVolModel, ChainSpec, MinorizationSpec) {
        make_stochvol(
            b,
            corr,
            MixingProfile::Independent,
            |y| 0.5 * y,
            ContractionParams::new(0.5, 0.25).unwrap(),
            NoiseLaw::gaussian(1),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_corr_has_no_shift() {
        let (_, chain, minor) = build(vec![1.0], 0.0);
        let mut c = [0.0];
        minor.model().drift_image(&[2.0], &[5.0, 0.3], &mut c);
        assert_eq!(c[0], 1.0);
        let mut rng = RngStream::new(1, 0).rng();
        assert!(step(&chain, &[2.0], &[5.0, 0.3], &mut rng).unwrap()[0].is_finite());
    }

    #[test]
    fn shift_and_scale() {
        let (_, _, minor) = build(vec![1.0], -0.6);
        let mut c = [0.0];
        minor.model().drift_image(&[2.0], &[1.5, 0.2], &mut c);
        assert!((c[0] - (1.0 - 0.6 * 0.2f64.exp() * 1.5)).abs() < 1e-14);
        match minor.model().scale_at(&[1.5, 0.2]).unwrap() {
            crate::models::additive::ScaleAt::Scalar(s) => assert!((s - 0.8 * 0.2f64.exp()).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lognormal_volatility_moment() {
        // Z_n = zeta_n, so E e^{2 Z} = e^2
        let (m, _, _) = build(vec![1.0, 0.0, 0.0], 0.3);
        let mut rng = RngStream::new(5, 0).rng();
        let w = m.env.generate(0, 400_000, &mut rng);
        let z = w.component(1);
        let vals: Vec<f64> = z.iter().map(|v| (2.0 * v).exp()).collect();
        let (mean, se) = crate::stats::mean_se(&vals);
        let target = 1f64.exp().powi(2);
        assert!((mean - target).abs() < 5.0 * se, "{mean} vs {target} (se {se})");
    }

    #[test]
    fn corr_out_of_range() {
        let r = make_stochvol(
            vec![1.0],
            1.0,
            MixingProfile::Independent,
            |y| 0.5 * y,
            ContractionParams::new(0.5, 0.25).unwrap(),
            NoiseLaw::gaussian(1),
            1.0,
        );
        assert!(r.is_err());
    }
}
