//! Concrete chains with declared contraction constants and analytic
//! minorizations.

pub mod additive;
pub mod multivar;
pub mod risk;
pub mod sgld;
pub mod stochvol;
pub mod threshold;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chain::{ChainSpec, ContractionParams};
use crate::env::{EnvironmentSpec, MixingProfile, DEFAULT_TRUNCATION_LAG};
use crate::error::{invalid, Result};
use crate::metric::Metric;
use crate::noise::NoiseLaw;

pub use additive::{make_additive, AdditiveModel, MinorizationSpec, NoiseScale, SupportAnchor};
pub use multivar::{make_multivar, subordinate_norm, MultivarArModel, SubordinateNorm};
pub use risk::{extract_var_cvar, read_losses, RiskEstimate};
pub use sgld::{make_sgld, run_sgld_risk, RiskCheckpoint, SgldVarModel};
pub use stochvol::{make_stochvol, StochVolModel};
pub use threshold::{make_threshold, ThresholdArModel};

/// A ready-to-run model: chain, minorization and default environment.
#[derive(Debug, Clone)]
pub struct ZooModel {
    pub chain: ChainSpec,
    pub minor: MinorizationSpec,
    pub env: EnvironmentSpec,
}

pub const ZOO_NAMES: [&str; 5] = ["additive-gaussian", "sgld-var", "stochvol", "threshold-ar", "multivar-ar"];

/// `Y' = 0.5 Y + e` with standard Gaussian `e`, declared `(rho, R) = (0.5, 0.25)`.
pub fn additive_gaussian() -> Result<ZooModel> {
    let model = AdditiveModel::new(
        "additive-gaussian",
        1,
        NoiseLaw::gaussian(1),
        |y, _x, out| out[0] = 0.5 * y[0],
        NoiseScale::Constant(1.0),
    )?;
    let (chain, minor) = make_additive(model, Metric::Euclidean, ContractionParams::new(0.5, 0.25)?, 1.0)?;
    Ok(ZooModel { chain, minor, env: EnvironmentSpec::iid_gaussian(1, 0.0, 1.0)? })
}

/// SGLD at `a = 1`, `h = 0.1`, `alpha = 0.5` driven by i.i.d. standard normal losses.
pub fn sgld_var() -> Result<ZooModel> {
    let (chain, minor) = make_sgld(SgldVarModel::new(1.0, 0.1, 0.5)?)?;
    Ok(ZooModel { chain, minor, env: EnvironmentSpec::iid_gaussian(1, 0.0, 1.0)? })
}

/// Stochastic volatility with `b_k = 0.3 * 0.5^k`, `corr = -0.3` and drift `0.5 y`.
pub fn stochvol() -> Result<ZooModel> {
    let coeffs: Vec<f64> = (0..DEFAULT_TRUNCATION_LAG).map(|k| 0.3 * 0.5f64.powi(k as i32)).collect();
    let (model, chain, minor) = make_stochvol(
        coeffs,
        -0.3,
        MixingProfile::Geometric { rate: 0.5 },
        |y| 0.5 * y,
        ContractionParams::new(0.5, 0.25)?,
        NoiseLaw::gaussian(1),
        1.0,
    )?;
    Ok(ZooModel { chain, minor, env: model.env })
}

/// Two-regime threshold AR split at 0 with slopes `(0.5, -0.5)`, intercepts
/// `(1, -1)`, unit noise and covariate shift `ell(x) = x` from a Gaussian AR(1).
pub fn threshold_ar() -> Result<ZooModel> {
    let tar = make_threshold(vec![0.0], vec![0.5, -0.5], vec![1.0, -1.0])?;
    let (chain, minor) =
        tar.build(NoiseScale::Constant(1.0), Some(|x: &[f64], out: &mut [f64]| out[0] = x[0]), NoiseLaw::gaussian(1), 1.0)?;
    Ok(ZooModel { chain, minor, env: EnvironmentSpec::gaussian_ar1(0.5, 1.0)? })
}

/// Bivariate AR with `A = [[0.5, 0.3], [-0.2, 0.6]]` (complex spectrum) and
/// perturbation `0.1 (sin y_1, cos y_2)`.
pub fn multivar_ar() -> Result<ZooModel> {
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.6]);
    let (_, chain, minor) = make_multivar(
        a,
        |y, out| {
            out[0] = 0.1 * y[0].sin();
            out[1] = 0.1 * y[1].cos();
        },
        vec![0.1, 0.1],
        NoiseLaw::gaussian(2),
        1.0,
    )?;
    Ok(ZooModel { chain, minor, env: EnvironmentSpec::iid_gaussian(1, 0.0, 1.0)? })
}

pub fn zoo_model(name: &str) -> Result<ZooModel> {
    match name {
        "additive-gaussian" => additive_gaussian(),
        "sgld-var" => sgld_var(),
        "stochvol" => stochvol(),
        "threshold-ar" => threshold_ar(),
        "multivar-ar" => multivar_ar(),
        other => Err(invalid("model", format!("unknown zoo model `{other}`"))),
    }
}

pub fn zoo() -> Result<Vec<ZooModel>> {
    ZOO_NAMES.iter().map(|n| zoo_model(n)).collect()
}

/// `Y' = 1.1 Y + e` falsely declared as contracting with `(rho, R) = (0.9, 1)`.
pub fn adversarial() -> Result<ChainSpec> {
    let model =
        AdditiveModel::new("adversarial", 1, NoiseLaw::gaussian(1), |y, _x, out| out[0] = 1.1 * y[0], NoiseScale::Constant(1.0))?;
    Ok(ChainSpec::new("adversarial", Arc::new(model), Metric::Euclidean, ContractionParams::new(0.9, 1.0)?))
}
