//! Running `theta`-moments of a chain around a reference point.

use crate::chain::{ChainSpec, Trajectory};
use crate::env::EnvironmentSpec;
use crate::error::{invalid, Error, Result};
use crate::metric::Metric;
use crate::rng::RngStream;
use crate::stats::mean_se;

use super::CurvePoint;

/// `E d^theta(y_ref, Y_n)` across the ensemble, for every time `n`, with
/// standard errors.
pub fn theta_moment(ensemble: &[Trajectory], y_ref: &[f64], theta: f64, metric: &Metric) -> Result<Vec<CurvePoint>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid("theta", format!("must lie in (0,1], got {theta}")));
    }
    let Some(first) = ensemble.first() else {
        return Err(Error::Input("empty ensemble".into()));
    };
    if y_ref.len() != first.dim() {
        return Err(invalid("y_ref", "dimension mismatch"));
    }
    let len = ensemble.iter().map(Trajectory::len).min().unwrap_or(0);
    Ok((0..len)
        .map(|n| {
            let v: Vec<f64> = ensemble.iter().map(|t| metric.dist(y_ref, t.state(n)).powf(theta)).collect();
            let (estimate, std_error) = mean_se(&v);
            CurvePoint { index: n, estimate, std_error }
        })
        .collect())
}

/// Monte Carlo value of `s / (1 - rho^theta)` with
/// `s = R^theta + E d^theta(y_ref, f(y_ref, X_0, e))`, the bound on the
/// stationary `theta`-moment around the reference point. Returns the bound
/// and its standard error.
pub fn plateau_bound(spec: &ChainSpec, env: &EnvironmentSpec, samples: usize, stream: RngStream) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(invalid("samples", "need at least 2"));
    }
    let theta = spec.theta;
    let y = &spec.reference;
    let mut rng = stream.rng();
    let xs = env.generate(0, samples, &mut rng);
    let mut e = vec![0.0; spec.noise().dim()];
    let mut out = vec![0.0; spec.dim()];
    let mut jumps = Vec::with_capacity(samples);
    for t in 0..samples {
        spec.noise().sample(&mut rng, &mut e);
        spec.apply(y, xs.get(t as i64)?, &e, &mut out)?;
        jumps.push(spec.metric.dist(y, &out).powf(theta));
    }
    let (m, se) = mean_se(&jumps);
    let scale = 1.0 / (1.0 - spec.contraction.rho.powf(theta));
    Ok(((spec.contraction.r.powf(theta) + m) * scale, se * scale))
}
