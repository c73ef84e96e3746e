//! Stationary environment generators.
//!
//! An environment realization is a finite window `X_lo, ..., X_{hi-1}` drawn
//! in one pass from the stationary law. Windows may start at negative
//! indices, which is how backward (quenched) iteration is realized. Reading
//! outside the window is an error rather than an implicit extension.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

pub const DEFAULT_TRUNCATION_LAG: usize = 256;

/// Declared decay family of the environment's alpha-mixing coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingProfile {
    /// Independent values: `alpha_X(n) = 0` for `n >= 1`.
    Independent,
    /// `alpha_X(n) = O(rate^n)`.
    Geometric { rate: f64 },
    /// `alpha_X(n) = O(exp(-c n^gamma))`.
    Stretched { c: f64, gamma: f64 },
    /// `alpha_X(n) = O(n^-gamma)`.
    Polynomial { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    /// i.i.d. Gaussian vectors with independent components.
    Iid { dim: usize, mean: f64, sd: f64 },
    /// Scalar Gaussian AR(1): `X_{t+1} = mean + phi (X_t - mean) + innovation_sd * xi`.
    GaussianAr1 { phi: f64, innovation_sd: f64, mean: f64 },
    /// Causal linear process `Z_t = sum_{k<L} b_k zeta_{t-k}` with Gaussian
    /// innovations; emits the pair `(zeta_{t+1}, Z_t)`.
    LinearProcess { coeffs: Vec<f64>, innovation_sd: f64 },
    /// A recorded scalar series used as the environment, either replayed
    /// cyclically from a uniformly drawn offset or resampled i.i.d.
    Replay { values: Arc<[f64]>, iid_resample: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    pub mixing: MixingProfile,
}

impl EnvironmentSpec {
    pub fn iid_gaussian(dim: usize, mean: f64, sd: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !(sd > 0.0) {
            return Err(invalid("sd", format!("must be positive, got {sd}")));
        }
        Ok(Self { kind: EnvKind::Iid { dim, mean, sd }, mixing: MixingProfile::Independent })
    }

    pub fn gaussian_ar1(phi: f64, innovation_sd: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(invalid("phi", format!("|phi| must be < 1, got {phi}")));
        }
        if !(innovation_sd > 0.0) {
            return Err(invalid("innovation_sd", "must be positive"));
        }
        Ok(Self {
            kind: EnvKind::GaussianAr1 { phi, innovation_sd, mean: 0.0 },
            mixing: MixingProfile::Geometric { rate: phi.abs() },
        })
    }

    /// Linear process with explicit (already truncated) coefficients.
    pub fn linear_process(coeffs: Vec<f64>, innovation_sd: f64, mixing: MixingProfile) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("coeffs", "at least one coefficient required"));
        }
        if coeffs.iter().any(|b| !b.is_finite()) {
            return Err(invalid("coeffs", "coefficients must be finite"));
        }
        if !(innovation_sd > 0.0) {
            return Err(invalid("innovation_sd", "must be positive"));
        }
        Ok(Self { kind: EnvKind::LinearProcess { coeffs, innovation_sd }, mixing })
    }

    /// `b_k = scale * decay^k`, truncated at `lag` terms.
    pub fn linear_process_geometric(scale: f64, decay: f64, lag: usize, innovation_sd: f64) -> Result<Self> {
        if !(decay.abs() < 1.0) {
            return Err(invalid("decay", "must satisfy |decay| < 1"));
        }
        let coeffs = (0..lag.max(1)).map(|k| scale * decay.powi(k as i32)).collect();
        Self::linear_process(coeffs, innovation_sd, MixingProfile::Geometric { rate: decay.abs() })
    }

    /// `b_k = scale * (k+1)^-exponent`, truncated at `lag` terms.
    pub fn linear_process_power(scale: f64, exponent: f64, lag: usize, innovation_sd: f64) -> Result<Self> {
        if !(exponent > 0.5) {
            return Err(invalid("exponent", "must exceed 1/2 for square summability"));
        }
        let coeffs = (0..lag.max(1)).map(|k| scale * ((k + 1) as f64).powf(-exponent)).collect();
        Self::linear_process(coeffs, innovation_sd, MixingProfile::Polynomial { gamma: exponent - 0.5 })
    }

    pub fn replay(values: Vec<f64>, iid_resample: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("values", "empty series"));
        }
        Ok(Self { kind: EnvKind::Replay { values: values.into(), iid_resample }, mixing: MixingProfile::Independent })
    }

    pub fn with_mixing(mut self, mixing: MixingProfile) -> Self {
        self.mixing = mixing;
        self
    }

    /// Dimension of one environment state `X_t`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            EnvKind::Iid { dim, .. } => *dim,
            EnvKind::GaussianAr1 { .. } | EnvKind::Replay { .. } => 1,
            EnvKind::LinearProcess { .. } => 2,
        }
    }

    /// Draws the stationary window `X_lo, ..., X_{lo+len-1}`.
    pub fn generate<R: Rng + ?Sized>(&self, lo: i64, len: usize, rng: &mut R) -> EnvWindow {
        let dim = self.dim();
        let mut data = Vec::with_capacity(len * dim);
        match &self.kind {
            EnvKind::Iid { mean, sd, .. } => {
                for _ in 0..len * dim {
                    let z: f64 = rng.sample(StandardNormal);
                    data.push(mean + sd * z);
                }
            }
            EnvKind::GaussianAr1 { phi, innovation_sd, mean } => {
                let stationary_sd = innovation_sd / (1.0 - phi * phi).sqrt();
                let mut x = stationary_sd * rng.sample::<f64, _>(StandardNormal);
                for t in 0..len {
                    if t > 0 {
                        x = phi * x + innovation_sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    data.push(mean + x);
                }
            }
            EnvKind::LinearProcess { coeffs, innovation_sd } => {
                let lag = coeffs.len();
                // zeta_{lo-lag+1} ..= zeta_{lo+len}
                let zeta: Vec<f64> = (0..len + lag).map(|_| innovation_sd * rng.sample::<f64, _>(StandardNormal)).collect();
                for t in 0..len {
                    let now = t + lag - 1; // position of zeta_{lo+t}
                    let z: f64 = coeffs.iter().enumerate().map(|(k, b)| b * zeta[now - k]).sum();
                    data.push(zeta[now + 1]);
                    data.push(z);
                }
            }
            EnvKind::Replay { values, iid_resample } => {
                let m = values.len();
                if *iid_resample {
                    for _ in 0..len {
                        data.push(values[rng.random_range(0..m)]);
                    }
                } else {
                    let offset = rng.random_range(0..m);
                    for t in 0..len {
                        data.push(values[(offset + t) % m]);
                    }
                }
            }
        }
        EnvWindow { lo, dim, data }
    }

    /// Stationary mean and variance of component `c` of `X_t`.
    pub fn stationary_moments(&self, c: usize) -> (f64, f64) {
        match &self.kind {
            EnvKind::Iid { mean, sd, .. } => (*mean, sd * sd),
            EnvKind::GaussianAr1 { phi, innovation_sd, mean } => (*mean, innovation_sd * innovation_sd / (1.0 - phi * phi)),
            EnvKind::LinearProcess { coeffs, innovation_sd } => {
                let s2 = innovation_sd * innovation_sd;
                if c == 0 {
                    (0.0, s2)
                } else {
                    (0.0, s2 * coeffs.iter().map(|b| b * b).sum::<f64>())
                }
            }
            EnvKind::Replay { values, .. } => {
                let n = values.len() as f64;
                let m = values.iter().sum::<f64>() / n;
                (m, values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
            }
        }
    }
}

/// A generated environment window covering indices `[lo, lo + len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvWindow {
    lo: i64,
    dim: usize,
    data: Vec<f64>,
}

impl EnvWindow {
    pub fn from_values(lo: i64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Input(format!("window data of length {} is not a multiple of dim {dim}", data.len())));
        }
        Ok(Self { lo, dim, data })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.len() as i64
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, t: i64) -> Result<&[f64]> {
        if t < self.lo || t >= self.hi() {
            return Err(Error::WindowOutOfRange { index: t, lo: self.lo, hi: self.hi() });
        }
        let i = (t - self.lo) as usize * self.dim;
        Ok(&self.data[i..i + self.dim])
    }

    /// Sub-window `[lo, lo + len)`.
    pub fn slice(&self, lo: i64, len: usize) -> Result<EnvWindow> {
        if len == 0 {
            return Ok(EnvWindow { lo, dim: self.dim, data: Vec::new() });
        }
        self.get(lo)?;
        self.get(lo + len as i64 - 1)?;
        let i = (lo - self.lo) as usize * self.dim;
        Ok(EnvWindow { lo, dim: self.dim, data: self.data[i..i + len * self.dim].to_vec() })
    }

    /// Component `c` of every state, in time order.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.dim).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn window_bounds_are_enforced() {
        let env = EnvironmentSpec::gaussian_ar1(0.5, 1.0).unwrap();
        let w = env.generate(-10, 10, &mut RngStream::new(1, 0).rng());
        assert!(w.get(-10).is_ok());
        assert!(w.get(-1).is_ok());
        assert!(matches!(w.get(0), Err(Error::WindowOutOfRange { index: 0, lo: -10, hi: 0 })));
        assert!(w.get(-11).is_err());
        assert_eq!(w.slice(-5, 5).unwrap().get(-5).unwrap(), w.get(-5).unwrap());
    }

    #[test]
    fn rejects_nonstationary_ar1() {
        assert!(EnvironmentSpec::gaussian_ar1(1.0, 1.0).is_err());
        assert!(EnvironmentSpec::gaussian_ar1(-1.2, 1.0).is_err());
    }

    #[test]
    fn linear_process_emits_next_innovation() {
        let env = EnvironmentSpec::linear_process(vec![1.0], 1.0, MixingProfile::Independent).unwrap();
        let w = env.generate(0, 50, &mut RngStream::new(2, 0).rng());
        // with b = (1), Z_t = zeta_t, so Z_{t+1} equals the first component at t
        for t in 0..49 {
            assert_eq!(w.get(t).unwrap()[0], w.get(t + 1).unwrap()[1]);
        }
    }

    #[test]
    fn replay_is_cyclic() {
        let env = EnvironmentSpec::replay(vec![1.0, 2.0, 3.0], false).unwrap();
        let w = env.generate(0, 7, &mut RngStream::new(5, 0).rng());
        let c = w.component(0);
        for t in 0..4 {
            assert_eq!(c[t], c[t + 3]);
        }
    }
}
