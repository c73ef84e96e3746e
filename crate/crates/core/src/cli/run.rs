//! Subcommand execution and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::chain::{derive_constants, simulate_ensemble};
use crate::coupling::coupling_campaign;
use crate::env::EnvironmentSpec;
use crate::error::Error;
use crate::estimate::{compare_templates, mixing_curve, rate_fit, tv_decay_curve, CurvePoint, DecayCurve, TemplateFit};
use crate::models::{run_sgld_risk, SgldVarModel, SupportAnchor};
use crate::rng::RngStream;
use crate::verify::{check_contractivity, check_minorization, check_support, CheckReport, InputSampler};

use super::config::{read_loss_file, ConfigError, ExperimentConfig, ModelConfig, SeriesSource};

/// Header of coupling campaign CSVs.
pub const COUPLING_HEADER: [&str; 6] = ["n", "replications", "failures", "failure_rate", "mean_bound", "bound_se"];
/// Header of TV and mixing curve CSVs.
pub const CURVE_HEADER: [&str; 3] = ["index", "estimate", "std_error"];
/// Header of assumption report CSVs.
pub const VERIFY_HEADER: [&str; 4] = ["assumption", "trials", "violations", "worst_margin"];
/// Header of risk-measure CSVs.
pub const VAR_HEADER: [&str; 3] = ["step", "var_estimate", "cvar_estimate"];
/// Header of rate-fit CSVs.
pub const FIT_HEADER: [&str; 7] = ["template", "log_scale", "rate", "exponent", "wssr", "score", "rank"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Verify,
    Couple,
    Tv,
    Mix,
    Var,
    Fit,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Verify => "verify",
            Subcommand::Couple => "couple",
            Subcommand::Tv => "tv",
            Subcommand::Mix => "mix",
            Subcommand::Var => "var",
            Subcommand::Fit => "fit",
        }
    }
}

/// Failure of a run, mapped to the process exit status.
#[derive(Debug)]
pub enum RunError {
    /// Schema or input violation (exit 2).
    Config(ConfigError),
    /// Numeric failure during a campaign (exit 3).
    Numeric(String),
    /// Output could not be written (exit 1).
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numeric(e) => write!(f, "numeric error: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

fn numeric(context: &str) -> impl Fn(Error) -> RunError + '_ {
    move |e| match e {
        Error::Input(_) | Error::InvalidParameter { .. } => RunError::Config(ConfigError::at(context, e.to_string())),
        other => RunError::Numeric(format!("{context}: {other}")),
    }
}

/// Everything a run needs besides the subcommand.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    /// Raw config text, hashed into the manifest.
    pub config_text: String,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    seed: u64,
    config_sha256: String,
    version: &'a str,
    outputs: Vec<OutputHash>,
}

#[derive(Serialize)]
struct OutputHash {
    file: String,
    sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn curve_rows(curve: &DecayCurve) -> Vec<Vec<String>> {
    curve.points().iter().map(|p| vec![p.index.to_string(), fmt_f64(p.estimate), fmt_f64(p.std_error)]).collect()
}

/// Runs one subcommand, writing its CSV and manifest into `ctx.out_dir`.
/// Returns the written file paths.
pub fn run(sub: Subcommand, ctx: &RunContext) -> Result<Vec<PathBuf>, RunError> {
    let root = RngStream::new(ctx.seed, 0);
    let outputs: Vec<(&str, Vec<u8>)> = match sub {
        Subcommand::Verify => vec![("verify.csv", run_verify(ctx, root)?)],
        Subcommand::Couple => vec![("coupling.csv", run_couple(ctx, root)?)],
        Subcommand::Tv => vec![("tv.csv", run_tv(ctx, root)?)],
        Subcommand::Mix => vec![("mix.csv", run_mix(ctx, root)?)],
        Subcommand::Var => vec![("var.csv", run_var(ctx, root)?)],
        Subcommand::Fit => vec![("fit.csv", run_fit(ctx)?)],
    };
    fs::create_dir_all(&ctx.out_dir).map_err(|e| RunError::Io(format!("{}: {e}", ctx.out_dir.display())))?;
    let mut written = Vec::new();
    let mut hashes = Vec::new();
    for (name, bytes) in &outputs {
        let path = ctx.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        hashes.push(OutputHash { file: name.to_string(), sha256: sha256_hex(bytes) });
        written.push(path);
    }
    let manifest = Manifest {
        subcommand: sub.name(),
        seed: ctx.seed,
        config_sha256: sha256_hex(ctx.config_text.as_bytes()),
        version: env!("CARGO_PKG_VERSION"),
        outputs: hashes,
    };
    let path = ctx.out_dir.join(format!("{}.manifest.json", sub.name()));
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(written)
}

fn run_verify(ctx: &RunContext, root: RngStream) -> Result<Vec<u8>, RunError> {
    let zoo = ctx.config.zoo_model(&ctx.base_dir)?;
    let v = &ctx.config.verify;
    let mut reports: Vec<(String, CheckReport)> = Vec::new();
    info!("contractivity: {} trials", v.trials);
    let c = check_contractivity(&zoo.chain, &zoo.env, &InputSampler::default(), v.trials, root.child(1))
        .map_err(numeric("verify"))?;
    reports.push(("contractivity".into(), c));

    // pairs at a quarter, half and all of the pair radius, under stationary environment draws
    let mut rng = root.child(2).rng();
    let xs = zoo.env.generate(0, 3, &mut rng);
    let y1 = zoo.chain.reference.clone();
    let mut e1 = vec![0.0; y1.len()];
    e1[0] = 1.0;
    let unit = zoo.chain.metric.norm(&e1);
    for (i, frac) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        let x = xs.get(i as i64).expect("window holds three states").to_vec();
        let mut y2 = y1.clone();
        y2[0] += frac * zoo.minor.pair_radius / unit;
        info!("minorization/support at x = {x:?}, y2 = {y2:?}");
        let m = check_minorization(&zoo.chain, &zoo.minor, &x, &y1, &y2, v.samples, root.child(10 + i as u64))
            .map_err(numeric("verify"))?;
        reports.push((format!("minorization-{}", i + 1), m));
        let s = check_support(&zoo.minor, &x, &y1, &y2, v.samples, SupportAnchor::DriftImage, root.child(20 + i as u64))
            .map_err(numeric("verify"))?;
        reports.push((format!("support-{}", i + 1), s));
    }
    for (name, r) in &reports {
        if r.passed() {
            println!("{name}: ok ({} trials)", r.trials);
        } else {
            warn!(
                "{name}: {} violations; witness {}",
                r.violations,
                r.witness.as_ref().map(|w| w.to_string()).unwrap_or_default()
            );
            println!("{name}: {} violations in {} trials", r.violations, r.trials);
        }
    }
    Ok(csv_bytes(
        &VERIFY_HEADER,
        reports
            .iter()
            .map(|(name, r)| vec![name.clone(), r.trials.to_string(), r.violations.to_string(), fmt_f64(r.worst_margin)]),
    ))
}

fn starts(ctx: &RunContext, dim: usize) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    match &ctx.config.coupling.starts {
        Some([a, b]) => {
            if a.len() != dim || b.len() != dim {
                return Err(ConfigError::at("coupling.starts", format!("both starts need dimension {dim}")).into());
            }
            Ok((a.clone(), b.clone()))
        }
        None => Ok((vec![-5.0; dim], vec![5.0; dim])),
    }
}

fn run_couple(ctx: &RunContext, root: RngStream) -> Result<Vec<u8>, RunError> {
    let zoo = ctx.config.zoo_model(&ctx.base_dir)?;
    let cc = &ctx.config.coupling;
    let (a, b) = starts(ctx, zoo.chain.dim())?;
    let constants = derive_constants(zoo.chain.contraction, zoo.minor.k).map_err(numeric("model"))?;
    info!("coupling constants {constants:?}");
    let rows = coupling_campaign(
        &zoo.chain,
        &zoo.minor,
        &zoo.env,
        (&a, &b),
        &cc.horizons,
        cc.replications,
        cc.direction.into(),
        root.child(3),
    )
    .map_err(numeric("coupling"))?;
    for r in &rows {
        println!("n = {}: failure rate {} vs mean bound {}", r.n, r.failure_rate, r.mean_bound);
    }
    Ok(csv_bytes(
        &COUPLING_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.replications.to_string(),
                r.failures.to_string(),
                fmt_f64(r.failure_rate),
                fmt_f64(r.mean_bound),
                fmt_f64(r.bound_se),
            ]
        }),
    ))
}

fn run_tv(ctx: &RunContext, root: RngStream) -> Result<Vec<u8>, RunError> {
    let zoo = ctx.config.zoo_model(&ctx.base_dir)?;
    let tv = &ctx.config.estimation.tv;
    let (a, b) = starts(ctx, zoo.chain.dim())?;
    let horizons = tv.horizons.clone().unwrap_or_else(|| ctx.config.coupling.horizons.clone());
    let reps = tv.replications.unwrap_or(ctx.config.coupling.replications);
    let coords = tv.coords.clone().unwrap_or_else(|| (0..zoo.chain.dim().min(2)).collect());
    let curve = tv_decay_curve(&zoo.chain, &zoo.minor, &zoo.env, (&a, &b), &horizons, reps, &coords, tv.bins, root.child(3))
        .map_err(numeric("estimation.tv"))?;
    Ok(csv_bytes(&CURVE_HEADER, curve_rows(&curve)))
}

fn series_ensemble(ctx: &RunContext, root: RngStream) -> Result<Vec<Vec<f64>>, RunError> {
    let zoo = ctx.config.zoo_model(&ctx.base_dir)?;
    let mc = &ctx.config.estimation.mix;
    let stream = root.child(4);
    match mc.series {
        SeriesSource::Chain => {
            if mc.coord >= zoo.chain.dim() {
                return Err(ConfigError::at("estimation.mix.coord", "exceeds the state dimension").into());
            }
            let ens = simulate_ensemble(&zoo.chain, &zoo.env, &zoo.chain.reference, mc.burn_in + mc.length, mc.ensemble, stream)
                .map_err(numeric("estimation.mix"))?;
            Ok(ens.iter().map(|t| t.component(mc.coord)[mc.burn_in + 1..].to_vec()).collect())
        }
        SeriesSource::Environment => {
            if mc.coord >= zoo.env.dim() {
                return Err(ConfigError::at("estimation.mix.coord", "exceeds the environment dimension").into());
            }
            Ok((0..mc.ensemble as u64)
                .map(|i| zoo.env.generate(0, mc.length, &mut stream.child(i).rng()).component(mc.coord))
                .collect())
        }
    }
}

fn run_mix(ctx: &RunContext, root: RngStream) -> Result<Vec<u8>, RunError> {
    let mc = &ctx.config.estimation.mix;
    let class = mc.event_class().map_err(numeric("estimation.mix"))?;
    let ens = series_ensemble(ctx, root)?;
    let (curve, est) = mixing_curve(&ens, &mc.lags, &class, root.child(5)).map_err(numeric("estimation.mix"))?;
    for m in &est {
        info!("lag {}: alpha_hat {} (null {} +- {})", m.lag, m.alpha_hat, m.null_mean, m.std_error);
    }
    Ok(csv_bytes(&CURVE_HEADER, curve_rows(&curve)))
}

fn run_var(ctx: &RunContext, root: RngStream) -> Result<Vec<u8>, RunError> {
    let model = match &ctx.config.model {
        Some(ModelConfig::SgldVar { a, h, alpha }) => {
            SgldVarModel::new(*a, *h, *alpha).map_err(|e| ConfigError::at("model", e.to_string()))?
        }
        Some(other) => {
            return Err(ConfigError::at("model.kind", format!("`var` needs kind = \"sgld-var\", got `{}`", other.kind())).into())
        }
        None => return Err(ConfigError::at("model", "missing section").into()),
    };
    let vc = ctx.config.var.as_ref().ok_or_else(|| ConfigError::at("var", "missing section"))?;
    if vc.steps == 0 || vc.checkpoints == 0 || vc.checkpoints > vc.steps {
        return Err(ConfigError::at("var", "need steps >= checkpoints >= 1").into());
    }
    let losses = read_loss_file(&ctx.base_dir.join(&vc.losses)).map_err(|e| ConfigError::at("var.losses", e.to_string()))?;
    let env = EnvironmentSpec::replay(losses, true).map_err(numeric("var.losses"))?;
    let marks: Vec<usize> = (1..=vc.checkpoints).map(|i| i * vc.steps / vc.checkpoints).collect();
    let rows = run_sgld_risk(model, &env, vc.y0, vc.steps, &marks, root.child(6)).map_err(numeric("var"))?;
    if let Some(last) = rows.last() {
        println!(
            "VaR {} CVaR {} (regularization shift {})",
            last.estimate.var, last.estimate.cvar, last.estimate.regularization_shift
        );
    }
    Ok(csv_bytes(&VAR_HEADER, rows.iter().map(|r| vec![r.step.to_string(), fmt_f64(r.estimate.var), fmt_f64(r.estimate.cvar)])))
}

/// Reads an `index,estimate,std_error` curve.
pub fn read_curve(path: &Path) -> Result<DecayCurve, ConfigError> {
    let fail = |msg: String| ConfigError::at("estimation.fit.input", format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let header = rdr.headers().map_err(|e| fail(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(fail(format!("line 1: expected header `{}`", CURVE_HEADER.join(","))));
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| fail(format!("line {line}: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
        let index = field(0).parse().map_err(|_| fail(format!("line {line}: bad index `{}`", field(0))))?;
        let estimate: f64 = field(1).parse().map_err(|_| fail(format!("line {line}: bad estimate `{}`", field(1))))?;
        let std_error: f64 = field(2).parse().map_err(|_| fail(format!("line {line}: bad std_error `{}`", field(2))))?;
        points.push(CurvePoint { index, estimate, std_error });
    }
    DecayCurve::new(points).map_err(|e| fail(e.to_string()))
}

fn run_fit(ctx: &RunContext) -> Result<Vec<u8>, RunError> {
    let fc = &ctx.config.estimation.fit;
    let input = fc.input.as_ref().ok_or_else(|| ConfigError::at("estimation.fit.input", "missing curve path"))?;
    let templates = fc.templates().map_err(|e| ConfigError::at("estimation.fit.templates", e.to_string()))?;
    let curve = read_curve(&ctx.base_dir.join(input))?;
    let mut fits: Vec<TemplateFit> = if templates.len() == 4 {
        compare_templates(&curve).map_err(numeric("estimation.fit"))?
    } else {
        templates.iter().map(|&t| rate_fit(&curve, t)).collect::<Result<_, _>>().map_err(numeric("estimation.fit"))?
    };
    fits.sort_by(|a, b| a.score.total_cmp(&b.score));
    if let Some(best) = fits.first() {
        println!("best template: {} (rate {})", best.template, best.rate);
    }
    Ok(csv_bytes(
        &FIT_HEADER,
        fits.iter().enumerate().map(|(i, f)| {
            vec![
                f.template.name().to_string(),
                fmt_f64(f.log_scale),
                fmt_f64(f.rate),
                f.exponent.map(fmt_f64).unwrap_or_default(),
                fmt_f64(f.wssr),
                fmt_f64(f.score),
                (i + 1).to_string(),
            ]
        }),
    ))
}
