//! Additive-noise autoregressions `Y' = mu(Y, X) + sigma(X) e + ell(X)` and
//! their explicit minorization.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::chain::{ChainSpec, ContractionParams, Dynamics};
use crate::error::{invalid, Error, Result};
use crate::metric::Metric;
use crate::noise::{unit_ball_volume, NoiseLaw};

pub type DriftFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
pub type ShiftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
pub type EtaFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// The noise multiplier `sigma(x)`.
#[derive(Clone)]
pub enum NoiseScale {
    Constant(f64),
    Scalar(ScalarFn),
    Matrix(MatrixFn),
}

impl fmt::Debug for NoiseScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseScale::Constant(s) => write!(f, "Constant({s})"),
            NoiseScale::Scalar(_) => f.write_str("Scalar(..)"),
            NoiseScale::Matrix(_) => f.write_str("Matrix(..)"),
        }
    }
}

/// Summary of `sigma(x)` needed for densities: `|det sigma|` and the
/// spectral norm of `sigma^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleAt {
    Scalar(f64),
    Matrix { sigma: DMatrix<f64>, inverse: DMatrix<f64>, abs_det: f64, inv_norm: f64 },
}

impl ScaleAt {
    pub fn apply(&self, e: &[f64], out: &mut [f64]) {
        match self {
            ScaleAt::Scalar(s) => out.iter_mut().zip(e).for_each(|(o, v)| *o = s * v),
            ScaleAt::Matrix { sigma, .. } => mat_vec(sigma, e, out),
        }
    }

    pub fn unapply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            ScaleAt::Scalar(s) => out.iter_mut().zip(u).for_each(|(o, v)| *o = v / s),
            ScaleAt::Matrix { inverse, .. } => mat_vec(inverse, u, out),
        }
    }

    pub fn ln_abs_det(&self, dim: usize) -> f64 {
        match self {
            ScaleAt::Scalar(s) => dim as f64 * s.abs().ln(),
            ScaleAt::Matrix { abs_det, .. } => abs_det.ln(),
        }
    }

    pub fn inverse_norm(&self) -> f64 {
        match self {
            ScaleAt::Scalar(s) => 1.0 / s.abs(),
            ScaleAt::Matrix { inv_norm, .. } => *inv_norm,
        }
    }
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum();
    }
}

/// Additive autoregression on `R^dim`.
#[derive(Clone)]
pub struct AdditiveModel {
    pub name: String,
    dim: usize,
    noise: NoiseLaw,
    mu: Arc<DriftFn>,
    sigma: NoiseScale,
    ell: Option<Arc<ShiftFn>>,
}

impl fmt::Debug for AdditiveModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise", &self.noise)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl AdditiveModel {
    pub fn new<M>(name: impl Into<String>, dim: usize, noise: NoiseLaw, mu: M, sigma: NoiseScale) -> Result<Self>
    where
        M: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(invalid("dim", "state dimension must be positive"));
        }
        if noise.dim() != dim {
            return Err(invalid("noise", format!("noise dimension {} differs from state dimension {dim}", noise.dim())));
        }
        if let NoiseScale::Constant(s) = sigma {
            if !(s.is_finite() && s != 0.0) {
                return Err(invalid("sigma", format!("must be finite and nonzero, got {s}")));
            }
        }
        Ok(Self { name: name.into(), dim, noise, mu: Arc::new(mu), sigma, ell: None })
    }

    pub fn with_shift<L>(mut self, ell: L) -> Self
    where
        L: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.ell = Some(Arc::new(ell));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates `sigma(x)`, rejecting singular or non-finite values.
    pub fn scale_at(&self, x: &[f64]) -> Result<ScaleAt> {
        let spec_err = |reason: String| Error::Spec { model: self.name.clone(), reason };
        match &self.sigma {
            NoiseScale::Constant(s) => Ok(ScaleAt::Scalar(*s)),
            NoiseScale::Scalar(f) => {
                let s = f(x);
                if s.is_finite() && s != 0.0 {
                    Ok(ScaleAt::Scalar(s))
                } else {
                    Err(spec_err(format!("sigma({x:?}) = {s} is not invertible")))
                }
            }
            NoiseScale::Matrix(f) => {
                let sigma = f(x);
                if sigma.nrows() != self.dim || sigma.ncols() != self.dim {
                    return Err(spec_err(format!("sigma({x:?}) has shape {}x{}", sigma.nrows(), sigma.ncols())));
                }
                let svd = sigma.clone().svd(false, false);
                let smin = svd.singular_values.min();
                let smax = svd.singular_values.max();
                if !(smin > 1e-12 * smax.max(1e-300)) || !smax.is_finite() {
                    return Err(spec_err(format!("sigma({x:?}) is singular")));
                }
                let abs_det = svd.singular_values.iter().product();
                let inverse = sigma.clone().try_inverse().ok_or_else(|| spec_err(format!("sigma({x:?}) is singular")))?;
                Ok(ScaleAt::Matrix { sigma, inverse, abs_det, inv_norm: 1.0 / smin })
            }
        }
    }

    /// The drift image `mu(y, x) + ell(x)`, i.e. the update at `e = 0`.
    pub fn drift_image(&self, y: &[f64], x: &[f64], out: &mut [f64]) {
        (self.mu)(y, x, out);
        if let Some(ell) = &self.ell {
            let mut shift = vec![0.0; self.dim];
            ell(x, &mut shift);
            out.iter_mut().zip(&shift).for_each(|(o, s)| *o += s);
        }
    }

    /// Density at `z` of `center + sigma(x) e`.
    pub fn kernel_density(&self, scale: &ScaleAt, center: &[f64], z: &[f64]) -> f64 {
        let u: Vec<f64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
        let mut e = vec![0.0; self.dim];
        scale.unapply(&u, &mut e);
        let r2: f64 = e.iter().map(|v| v * v).sum();
        (self.noise.ln_radial_density(r2) - scale.ln_abs_det(self.dim)).exp()
    }
}

impl Dynamics for AdditiveModel {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn noise(&self) -> &NoiseLaw {
        &self.noise
    }

    fn update(&self, y: &[f64], x: &[f64], e: &[f64], out: &mut [f64]) {
        self.drift_image(y, x, out);
        match &self.sigma {
            NoiseScale::Constant(s) => out.iter_mut().zip(e).for_each(|(o, v)| *o += s * v),
            NoiseScale::Scalar(f) => {
                let s = f(x);
                out.iter_mut().zip(e).for_each(|(o, v)| *o += s * v);
            }
            NoiseScale::Matrix(f) => {
                let m = f(x);
                for (i, o) in out.iter_mut().enumerate() {
                    *o += (0..self.dim).map(|j| m[(i, j)] * e[j]).sum::<f64>();
                }
            }
        }
    }
}

/// Where the radius-`K` support balls of the minorizing measure are centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportAnchor {
    /// Around the drift images `mu(y_i, x) + ell(x)`.
    DriftImage,
    /// Around the starting points `y_i` themselves.
    StartPoint,
}

/// Local minorization `P_x(y_i, .) >= eta(x) nu(x, y1, y2, .)` for pairs with
/// `0 < d(y1, y2) <= pair_radius`.
///
/// `nu` is uniform on the Euclidean ball of radius `nu_radius` centred at the
/// midpoint of the two drift images. Every point of that ball lies within `K`
/// of both drift images.
#[derive(Clone)]
pub struct MinorizationSpec {
    model: Arc<AdditiveModel>,
    metric: Metric,
    eta: Arc<EtaFn>,
    /// Support radius `K`.
    pub k: f64,
    /// `2R / (1 - rho)`: the pair distances the minorization covers.
    pub pair_radius: f64,
    /// `(1 + rho) R / (1 - rho)`: bound on the distance between drift images.
    pub r_tilde: f64,
    pub nu_radius: f64,
    pub(crate) far_cache: Arc<Mutex<HashMap<Vec<i64>, f64>>>,
}

impl fmt::Debug for MinorizationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MinorizationSpec")
            .field("model", &self.model.name)
            .field("k", &self.k)
            .field("pair_radius", &self.pair_radius)
            .field("r_tilde", &self.r_tilde)
            .field("nu_radius", &self.nu_radius)
            .finish()
    }
}

impl MinorizationSpec {
    pub fn model(&self) -> &AdditiveModel {
        &self.model
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        (self.eta)(x)
    }

    /// Replaces `eta`; used to probe how the checks react to a wrong bound.
    pub fn with_eta<F>(mut self, eta: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.eta = Arc::new(eta);
        self.far_cache = Arc::default();
        self
    }

    /// Multiplies `eta` by `factor`.
    pub fn scaled_eta(self, factor: f64) -> Self {
        let base = self.eta.clone();
        self.with_eta(move |x| factor * base(x))
    }

    /// Replaces the support radius `K`.
    pub fn with_k(mut self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid("K", format!("must be positive, got {k}")));
        }
        self.k = k;
        self.far_cache = Arc::default();
        Ok(self)
    }

    /// Centre of the `nu` ball: the midpoint of the drift images.
    pub fn nu_center(&self, x: &[f64], y1: &[f64], y2: &[f64]) -> Vec<f64> {
        let d = self.model.dim;
        let mut c1 = vec![0.0; d];
        let mut c2 = vec![0.0; d];
        self.model.drift_image(y1, x, &mut c1);
        self.model.drift_image(y2, x, &mut c2);
        c1.iter().zip(&c2).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// One draw from `nu(x, y1, y2, .)` around a precomputed centre.
    pub fn nu_sample_at<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R, out: &mut [f64]) {
        let d = center.len();
        loop {
            let mut norm2 = 0.0;
            for o in out.iter_mut() {
                *o = rng.sample(StandardNormal);
                norm2 += *o * *o;
            }
            if norm2 > 0.0 {
                let radius = self.nu_radius * rng.random::<f64>().powf(1.0 / d as f64) / norm2.sqrt();
                out.iter_mut().zip(center).for_each(|(o, c)| *o = c + radius * *o);
                return;
            }
        }
    }

    pub fn nu_sample<R: Rng + ?Sized>(&self, x: &[f64], y1: &[f64], y2: &[f64], rng: &mut R) -> Vec<f64> {
        let center = self.nu_center(x, y1, y2);
        let mut out = vec![0.0; center.len()];
        self.nu_sample_at(&center, rng, &mut out);
        out
    }

    /// Density of `nu` at `z` given its centre.
    pub fn nu_density_at(&self, center: &[f64], z: &[f64]) -> f64 {
        let r2: f64 = z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        if r2 <= self.nu_radius * self.nu_radius {
            1.0 / (unit_ball_volume(center.len()) * self.nu_radius.powi(center.len() as i32))
        } else {
            0.0
        }
    }

    pub fn nu_density(&self, x: &[f64], y1: &[f64], y2: &[f64], z: &[f64]) -> f64 {
        self.nu_density_at(&self.nu_center(x, y1, y2), z)
    }

    /// Centre of the support ball of chain `q` under `anchor`.
    pub fn anchor_point(&self, anchor: SupportAnchor, x: &[f64], q: &[f64]) -> Vec<f64> {
        match anchor {
            SupportAnchor::StartPoint => q.to_vec(),
            SupportAnchor::DriftImage => {
                let mut c = vec![0.0; self.model.dim];
                self.model.drift_image(q, x, &mut c);
                c
            }
        }
    }
}

/// Builds the chain and its minorization for an additive model with
/// declared contraction `(rho, R)` in `metric`.
///
/// With `R~ = (1+rho)R/(1-rho)` and `nu` uniform on the Euclidean ball of
/// radius `r` around the drift midpoint:
///
/// * `K = R~/2 + c r`, `c` bounding the metric by the Euclidean norm;
/// * `eta(x) = Vol(B_r) inf { g_x(u) : |u| <= r + c' R~/2 }`, `g_x` the
///   density of `sigma(x) e` and `c'` bounding the Euclidean norm by the metric.
pub fn make_additive(
    model: AdditiveModel,
    metric: Metric,
    contraction: ContractionParams,
    nu_radius: f64,
) -> Result<(ChainSpec, MinorizationSpec)> {
    if !model.noise.has_positive_density() {
        return Err(Error::Spec { model: model.name.clone(), reason: "noise law has no positive density".into() });
    }
    if !(nu_radius > 0.0 && nu_radius.is_finite()) {
        return Err(invalid("nu_radius", format!("must be positive, got {nu_radius}")));
    }
    let ContractionParams { rho, r } = contraction;
    let r_tilde = (1.0 + rho) * r / (1.0 - rho);
    let k = 0.5 * r_tilde + metric.from_euclidean_bound() * nu_radius;
    let reach = nu_radius + metric.to_euclidean_bound() * 0.5 * r_tilde;
    let model = Arc::new(model);
    let dim = model.dim;
    let ln_vol = unit_ball_volume(dim).ln() + dim as f64 * nu_radius.ln();
    let eta_model = model.clone();
    let eta = move |x: &[f64]| -> f64 {
        match eta_model.scale_at(x) {
            Ok(scale) => {
                let rmax = reach * scale.inverse_norm();
                (ln_vol + eta_model.noise.ln_radial_density(rmax * rmax) - scale.ln_abs_det(dim)).exp().min(1.0)
            }
            Err(_) => 0.0,
        }
    };
    let chain = ChainSpec::new(model.name.clone(), model.clone(), metric.clone(), contraction);
    let minor = MinorizationSpec {
        model,
        metric,
        eta: Arc::new(eta),
        k,
        pair_radius: 2.0 * r / (1.0 - rho),
        r_tilde,
        nu_radius,
        far_cache: Arc::default(),
    };
    Ok((chain, minor))
}
