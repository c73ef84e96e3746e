//! Experiment configuration: TOML schema and model construction.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer};

use crate::chain::ContractionParams;
use crate::coupling::Direction;
use crate::env::{EnvironmentSpec, MixingProfile, DEFAULT_TRUNCATION_LAG};
use crate::error::{Error, Result};
use crate::estimate::{EventClass, RateTemplate};
use crate::metric::Metric;
use crate::models::{
    make_additive, make_multivar, make_sgld, make_stochvol, make_threshold, read_losses, AdditiveModel, NoiseScale, SgldVarModel,
    ZooModel,
};
use crate::noise::NoiseLaw;

/// A configuration error carrying the path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl ConfigError {
    pub fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

/// Top-level experiment description.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: Option<ModelConfig>,
    pub environment: Option<EnvConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    pub var: Option<VarConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Accepts integers and integral floats such as `1e4`.
fn count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<usize, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        Int(i64),
        Float(f64),
    }
    let bad = |v: String| serde::de::Error::custom(format!("expected a nonnegative integer, got {v}"));
    match Num::deserialize(d)? {
        Num::Int(i) if i >= 0 => Ok(i as usize),
        Num::Int(i) => Err(bad(i.to_string())),
        Num::Float(f) if f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(53) => Ok(f as usize),
        Num::Float(f) => Err(bad(f.to_string())),
    }
}

fn counts<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "count")] usize);
    Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
}

fn opt_counts<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<usize>>, D::Error> {
    counts(d).map(Some)
}

macro_rules! default_fn {
    ($name:ident, $ty:ty, $v:expr) => {
        fn $name() -> $ty {
            $v
        }
    };
}

default_fn!(half, f64, 0.5);
default_fn!(one, f64, 1.0);
default_fn!(quarter, f64, 0.25);
default_fn!(sv_scale, f64, 0.3);
default_fn!(sv_corr, f64, -0.3);
default_fn!(sgld_h, f64, 0.1);
default_fn!(tar_thresholds, Vec<f64>, vec![0.0]);
default_fn!(tar_slopes, Vec<f64>, vec![0.5, -0.5]);
default_fn!(tar_intercepts, Vec<f64>, vec![1.0, -1.0]);
default_fn!(mv_matrix, Vec<Vec<f64>>, vec![vec![0.5, 0.3], vec![-0.2, 0.6]]);
default_fn!(mv_perturbation, f64, 0.1);
default_fn!(truncation, usize, DEFAULT_TRUNCATION_LAG);
default_fn!(yes, bool, true);

/// Model family and its parameters; defaults reproduce the built-in examples.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `Y' = slope Y + sigma e`.
    AdditiveGaussian {
        #[serde(default = "half")]
        slope: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "quarter")]
        r: f64,
    },
    SgldVar {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "sgld_h")]
        h: f64,
        #[serde(default = "half")]
        alpha: f64,
    },
    Stochvol {
        #[serde(default = "sv_scale")]
        scale: f64,
        #[serde(default = "half")]
        decay: f64,
        #[serde(default = "sv_corr")]
        corr: f64,
        #[serde(default = "half")]
        slope: f64,
        #[serde(default = "quarter")]
        r: f64,
        #[serde(default = "truncation")]
        lag: usize,
    },
    ThresholdAr {
        #[serde(default = "tar_thresholds")]
        thresholds: Vec<f64>,
        #[serde(default = "tar_slopes")]
        slopes: Vec<f64>,
        #[serde(default = "tar_intercepts")]
        intercepts: Vec<f64>,
        #[serde(default = "one")]
        sigma: f64,
        /// Shift the state by the covariate, `ell(x) = x`.
        #[serde(default = "yes")]
        covariate_shift: bool,
    },
    MultivarAr {
        #[serde(default = "mv_matrix")]
        matrix: Vec<Vec<f64>>,
        #[serde(default = "mv_perturbation")]
        perturbation: f64,
    },
}

/// Environment override.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    IidGaussian {
        #[serde(default = "one_usize")]
        dim: usize,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    GaussianAr1 {
        phi: f64,
        #[serde(default = "one")]
        innovation_sd: f64,
    },
    /// Scalar losses read from a CSV with the single header `loss`.
    Replay {
        path: PathBuf,
        #[serde(default = "yes")]
        iid_resample: bool,
    },
}

default_fn!(one_usize, usize, 1);

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "million", deserialize_with = "count")]
    pub trials: usize,
    #[serde(default = "hundred_k", deserialize_with = "count")]
    pub samples: usize,
}

default_fn!(million, usize, 1_000_000);
default_fn!(hundred_k, usize, 100_000);

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { trials: million(), samples: hundred_k() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionConfig {
    Forward,
    Backward,
}

impl From<DirectionConfig> for Direction {
    fn from(d: DirectionConfig) -> Self {
        match d {
            DirectionConfig::Forward => Direction::Forward,
            DirectionConfig::Backward => Direction::Backward,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(default = "default_horizons", deserialize_with = "counts")]
    pub horizons: Vec<usize>,
    #[serde(default = "ten_k", deserialize_with = "count")]
    pub replications: usize,
    /// The two initial states; defaults to `-5` and `+5` in every coordinate.
    pub starts: Option<[Vec<f64>; 2]>,
    #[serde(default = "forward")]
    pub direction: DirectionConfig,
}

default_fn!(default_horizons, Vec<usize>, vec![50, 100, 200, 400]);
default_fn!(ten_k, usize, 10_000);
default_fn!(forward, DirectionConfig, DirectionConfig::Forward);

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { horizons: default_horizons(), replications: ten_k(), starts: None, direction: forward() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default)]
    pub tv: TvConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvConfig {
    /// Horizons of the curve; defaults to the coupling horizons.
    #[serde(default, deserialize_with = "opt_counts")]
    pub horizons: Option<Vec<usize>>,
    /// Replications per horizon; defaults to the coupling replications.
    #[serde(default, deserialize_with = "opt_count")]
    pub replications: Option<usize>,
    #[serde(default = "default_bins", deserialize_with = "count")]
    pub bins: usize,
    /// State coordinates the samples are projected on (at most two).
    pub coords: Option<Vec<usize>>,
}

fn opt_count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<usize>, D::Error> {
    count(d).map(Some)
}

default_fn!(default_bins, usize, crate::estimate::tv::DEFAULT_BINS);

impl Default for TvConfig {
    fn default() -> Self {
        Self { horizons: None, replications: None, bins: default_bins(), coords: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesSource {
    /// Coordinate `coord` of the chain.
    Chain,
    /// Coordinate `coord` of the environment.
    Environment,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    #[serde(default = "default_lags", deserialize_with = "counts")]
    pub lags: Vec<usize>,
    #[serde(default = "chain_source")]
    pub series: SeriesSource,
    #[serde(default)]
    pub coord: usize,
    #[serde(default = "hundred", deserialize_with = "count")]
    pub ensemble: usize,
    #[serde(default = "two_thousand", deserialize_with = "count")]
    pub length: usize,
    #[serde(default = "two_hundred", deserialize_with = "count")]
    pub burn_in: usize,
    /// Quantile levels of the half-line events; defaults to the deciles.
    pub levels: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub coords: usize,
}

default_fn!(default_lags, Vec<usize>, (1..=20).collect());
default_fn!(chain_source, SeriesSource, SeriesSource::Chain);
default_fn!(hundred, usize, 100);
default_fn!(two_thousand, usize, 2000);
default_fn!(two_hundred, usize, 200);
default_fn!(two, usize, 2);

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            lags: default_lags(),
            series: chain_source(),
            coord: 0,
            ensemble: hundred(),
            length: two_thousand(),
            burn_in: two_hundred(),
            levels: None,
            coords: two(),
        }
    }
}

impl MixConfig {
    pub fn event_class(&self) -> Result<EventClass> {
        match &self.levels {
            Some(l) => EventClass::new(l.clone(), self.coords),
            None => EventClass::new(EventClass::deciles(self.coords).levels, self.coords),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Curve CSV (`index,estimate,std_error`) to fit.
    pub input: Option<PathBuf>,
    /// Templates to fit; defaults to all four.
    pub templates: Option<Vec<String>>,
}

impl FitConfig {
    pub fn templates(&self) -> Result<Vec<RateTemplate>> {
        match &self.templates {
            None => Ok(RateTemplate::ALL.to_vec()),
            Some(names) => names.iter().map(|n| n.parse()).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarConfig {
    /// Loss CSV with the single header `loss`; resampled i.i.d.
    pub losses: PathBuf,
    #[serde(deserialize_with = "count")]
    pub steps: usize,
    /// Number of evenly spaced checkpoints.
    #[serde(default = "ten", deserialize_with = "count")]
    pub checkpoints: usize,
    #[serde(default)]
    pub y0: f64,
}

default_fn!(ten, usize, 10);

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
}

default_fn!(out_dir, PathBuf, PathBuf::from("out"));

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: out_dir() }
    }
}

/// Parses a TOML document, reporting schema violations with the field path.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::at("", e.to_string().trim().to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.into_inner().message().trim().to_string();
        ConfigError::at(path, msg)
    })
}

pub fn load_config(path: &Path) -> std::result::Result<(ExperimentConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
    Ok((parse_config(&text)?, text))
}

fn at(path: &'static str) -> impl Fn(Error) -> ConfigError {
    move |e| ConfigError::at(path, e.to_string())
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::AdditiveGaussian { .. } => "additive-gaussian",
            ModelConfig::SgldVar { .. } => "sgld-var",
            ModelConfig::Stochvol { .. } => "stochvol",
            ModelConfig::ThresholdAr { .. } => "threshold-ar",
            ModelConfig::MultivarAr { .. } => "multivar-ar",
        }
    }

    /// Builds the chain, its minorization and the default environment.
    pub fn build(&self) -> std::result::Result<ZooModel, ConfigError> {
        let m = at("model");
        match self {
            &ModelConfig::AdditiveGaussian { slope, sigma, r } => {
                let model = AdditiveModel::new(
                    "additive-gaussian",
                    1,
                    NoiseLaw::gaussian(1),
                    move |y, _x, out| out[0] = slope * y[0],
                    NoiseScale::Constant(sigma),
                )
                .map_err(&m)?;
                let (chain, minor) =
                    make_additive(model, Metric::Euclidean, ContractionParams::new(slope.abs(), r).map_err(&m)?, sigma)
                        .map_err(&m)?;
                Ok(ZooModel { chain, minor, env: EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).map_err(&m)? })
            }
            &ModelConfig::SgldVar { a, h, alpha } => {
                let (chain, minor) = make_sgld(SgldVarModel::new(a, h, alpha).map_err(&m)?).map_err(&m)?;
                Ok(ZooModel { chain, minor, env: EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).map_err(&m)? })
            }
            &ModelConfig::Stochvol { scale, decay, corr, slope, r, lag } => {
                if !(decay.abs() < 1.0) {
                    return Err(ConfigError::at("model.decay", "must satisfy |decay| < 1"));
                }
                let coeffs: Vec<f64> = (0..lag.max(1)).map(|k| scale * decay.powi(k as i32)).collect();
                let (model, chain, minor) = make_stochvol(
                    coeffs,
                    corr,
                    MixingProfile::Geometric { rate: decay.abs() },
                    move |y| slope * y,
                    ContractionParams::new(slope.abs(), r).map_err(&m)?,
                    NoiseLaw::gaussian(1),
                    1.0,
                )
                .map_err(&m)?;
                Ok(ZooModel { chain, minor, env: model.env })
            }
            ModelConfig::ThresholdAr { thresholds, slopes, intercepts, sigma, covariate_shift } => {
                let tar = make_threshold(thresholds.clone(), slopes.clone(), intercepts.clone()).map_err(&m)?;
                let shift = |x: &[f64], out: &mut [f64]| out[0] = x[0];
                let (chain, minor) = tar
                    .build(NoiseScale::Constant(*sigma), covariate_shift.then_some(shift), NoiseLaw::gaussian(1), 1.0)
                    .map_err(&m)?;
                Ok(ZooModel { chain, minor, env: EnvironmentSpec::gaussian_ar1(0.5, 1.0).map_err(&m)? })
            }
            ModelConfig::MultivarAr { matrix, perturbation } => {
                let d = matrix.len();
                if d == 0 || matrix.iter().any(|row| row.len() != d) {
                    return Err(ConfigError::at("model.matrix", "must be a nonempty square matrix"));
                }
                let a = DMatrix::from_row_iterator(d, d, matrix.iter().flatten().copied());
                let p = *perturbation;
                let (_, chain, minor) = make_multivar(
                    a,
                    move |y, out| {
                        for (i, o) in out.iter_mut().enumerate() {
                            *o = p * if i % 2 == 0 { y[i].sin() } else { y[i].cos() };
                        }
                    },
                    vec![p.abs(); d],
                    NoiseLaw::gaussian(d),
                    1.0,
                )
                .map_err(&m)?;
                Ok(ZooModel { chain, minor, env: EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).map_err(&m)? })
            }
        }
    }
}

impl EnvConfig {
    pub fn build(&self, base: &Path) -> std::result::Result<EnvironmentSpec, ConfigError> {
        let e = at("environment");
        match self {
            &EnvConfig::IidGaussian { dim, mean, sd } => EnvironmentSpec::iid_gaussian(dim, mean, sd).map_err(e),
            &EnvConfig::GaussianAr1 { phi, innovation_sd } => EnvironmentSpec::gaussian_ar1(phi, innovation_sd).map_err(e),
            EnvConfig::Replay { path, iid_resample } => {
                let values =
                    read_loss_file(&base.join(path)).map_err(|err| ConfigError::at("environment.path", err.to_string()))?;
                EnvironmentSpec::replay(values, *iid_resample).map_err(e)
            }
        }
    }
}

pub fn read_loss_file(path: &Path) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_losses(f).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    /// The configured model with the environment override applied.
    pub fn zoo_model(&self, base: &Path) -> std::result::Result<ZooModel, ConfigError> {
        let model = self.model.as_ref().ok_or_else(|| ConfigError::at("model", "missing section"))?;
        let mut zoo = model.build()?;
        if let Some(env) = &self.environment {
            if matches!(model, ModelConfig::Stochvol { .. }) {
                return Err(ConfigError::at("environment", "the stochvol model defines its own linear-process environment"));
            }
            let env = env.build(base)?;
            if env.dim() < zoo.env.dim() {
                return Err(ConfigError::at(
                    "environment",
                    format!("model `{}` reads {} environment coordinate(s), got {}", model.kind(), zoo.env.dim(), env.dim()),
                ));
            }
            zoo.env = env;
        }
        Ok(zoo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = parse_config("seed = 7\n[model]\nkind = \"sgld-var\"\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.coupling.horizons, vec![50, 100, 200, 400]);
        let z = c.zoo_model(Path::new(".")).unwrap();
        assert_eq!(z.chain.dim(), 1);
    }

    #[test]
    fn missing_kind_names_field() {
        let e = parse_config("[model]\na = 1.0\n").unwrap_err();
        assert_eq!(e.path, "model");
        assert!(e.message.contains("kind"), "{e}");
    }

    #[test]
    fn scientific_counts() {
        let c = parse_config("[model]\nkind = \"additive-gaussian\"\n[coupling]\nreplications = 1e4\nhorizons = [5e1, 100]\n")
            .unwrap();
        assert_eq!(c.coupling.replications, 10_000);
        assert_eq!(c.coupling.horizons, vec![50, 100]);
        let e = parse_config("[coupling]\nreplications = 1.5\n").unwrap_err();
        assert_eq!(e.path, "coupling.replications");
    }

    #[test]
    fn unknown_field_rejected() {
        let e = parse_config("[model]\nkind = \"sgld-var\"\nstep = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("step"), "{e}");
    }

    #[test]
    fn invalid_parameter_is_located() {
        let c = parse_config("[model]\nkind = \"sgld-var\"\nh = 0.9\n").unwrap();
        let e = c.zoo_model(Path::new(".")).unwrap_err();
        assert_eq!(e.path, "model");
        assert!(e.message.contains('h'));
    }
}
