//! Stochastic gradient Langevin dynamics for the regularized
//! Rockafellar-Uryasev objective `U(y) = a y^2 + b(y)`.
//!
//! The update is `y - 2ahy - h H(y, x) + sqrt(2h) e` with the unbiased
//! gradient estimate `H(y, x) = 1 - 1{x >= y}/(1 - alpha)`, bounded by
//! `J = max(alpha/(1-alpha), 1)`.

use std::f64::consts::PI;

use crate::chain::{simulate_forward, ChainSpec, ContractionParams};
use crate::env::EnvironmentSpec;
use crate::error::{invalid, Result};
use crate::metric::Metric;
use crate::models::additive::{make_additive, AdditiveModel, MinorizationSpec, NoiseScale};
use crate::models::risk::{extract_on_range, EmpiricalObjective, RiskEstimate};
use crate::noise::{unit_ball_volume, NoiseLaw};
use crate::rng::RngStream;

/// Parameters of the SGLD risk-measure chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgldVarModel {
    /// Weight of the quadratic regularizer.
    pub a: f64,
    /// Step size, `0 < h < 1/(2a)`.
    pub h: f64,
    /// Confidence level of the risk measures.
    pub alpha_level: f64,
}

impl SgldVarModel {
    pub fn new(a: f64, h: f64, alpha_level: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("must be positive, got {a}")));
        }
        if !(h > 0.0 && h < 0.5 / a) {
            return Err(invalid("h", format!("step size must lie in (0, 1/(2a)) = (0, {}), got {h}", 0.5 / a)));
        }
        if !(alpha_level > 0.0 && alpha_level < 1.0) {
            return Err(invalid("alpha_level", format!("must lie in (0,1), got {alpha_level}")));
        }
        Ok(Self { a, h, alpha_level })
    }

    /// Uniform bound on the stochastic gradient.
    pub fn j(&self) -> f64 {
        (self.alpha_level / (1.0 - self.alpha_level)).max(1.0)
    }

    pub fn rho(&self) -> f64 {
        1.0 - 2.0 * self.a * self.h
    }

    pub fn r(&self) -> f64 {
        2.0 * self.h * self.j()
    }

    pub fn contraction(&self) -> ContractionParams {
        ContractionParams { rho: self.rho(), r: self.r() }
    }

    /// `H(y, x)`.
    pub fn gradient(&self, y: f64, x: f64) -> f64 {
        if x >= y {
            1.0 - 1.0 / (1.0 - self.alpha_level)
        } else {
            1.0
        }
    }

    /// Support radius `J/a + sqrt(2h)`.
    pub fn k(&self) -> f64 {
        self.j() / self.a + (2.0 * self.h).sqrt()
    }

    /// The environment-free minorization constant
    /// `Vol(B_1) (2 pi)^{-1/2} exp(-(1 + J/(sqrt(2h) a))^2 / 2)`.
    pub fn eta(&self) -> f64 {
        let t = 1.0 + self.j() / ((2.0 * self.h).sqrt() * self.a);
        unit_ball_volume(1) * (2.0 * PI).powf(-0.5) * (-0.5 * t * t).exp()
    }
}

/// Builds the SGLD chain with `nu` uniform on the radius-`sqrt(2h)` ball at
/// the drift midpoint, constant `eta` and `K = J/a + sqrt(2h)`.
pub fn make_sgld(model: SgldVarModel) -> Result<(ChainSpec, MinorizationSpec)> {
    let SgldVarModel { a, h, .. } = model;
    let m = model;
    let dynamics = AdditiveModel::new(
        format!("sgld(a={a},h={h},alpha={})", m.alpha_level),
        1,
        NoiseLaw::gaussian(1),
        move |y, x, out| out[0] = y[0] - 2.0 * a * h * y[0] - h * m.gradient(y[0], x[0]),
        NoiseScale::Constant((2.0 * h).sqrt()),
    )?;
    let (chain, minor) = make_additive(dynamics, Metric::Euclidean, model.contraction(), (2.0 * h).sqrt())?;
    let eta = model.eta();
    let minor = minor.with_eta(move |_x| eta).with_k(model.k())?;
    Ok((chain, minor))
}

/// Risk estimates after the first `step` iterations of an SGLD run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskCheckpoint {
    pub step: usize,
    pub estimate: RiskEstimate,
}

/// Runs the SGLD chain from `y0` for `steps` iterations on losses drawn from
/// `env` and reports VaR and CVaR at each checkpoint.
///
/// At step `n` the objective is built from the `n` losses consumed so far and
/// minimized over the range of states the chain has visited.
pub fn run_sgld_risk(
    model: SgldVarModel,
    env: &EnvironmentSpec,
    y0: f64,
    steps: usize,
    checkpoints: &[usize],
    stream: RngStream,
) -> Result<Vec<RiskCheckpoint>> {
    if env.dim() != 1 {
        return Err(invalid("environment", "SGLD losses must be scalar"));
    }
    if checkpoints.iter().any(|&c| c == 0 || c > steps) || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("checkpoints", format!("must be increasing and within 1..={steps}")));
    }
    let (chain, _) = make_sgld(model)?;
    let traj = simulate_forward(&chain, env, &[y0], steps, stream)?;
    let losses = traj.env.component(0);
    let states = traj.component(0);
    let mut out = Vec::with_capacity(checkpoints.len());
    let (mut lo, mut hi, mut seen) = (y0, y0, 0);
    for &c in checkpoints {
        for &y in &states[seen..=c] {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        seen = c;
        let obj = EmpiricalObjective::new(&losses[..c], model.alpha_level)?;
        out.push(RiskCheckpoint { step: c, estimate: extract_on_range(&obj, model.a, lo, hi)? });
    }
    Ok(out)
}
