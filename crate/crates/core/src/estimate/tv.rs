//! Histogram estimate of the total-variation distance between two samples.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::chain::ChainSpec;
use crate::coupling::coupled_marginals;
use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::models::MinorizationSpec;
use crate::rng::RngStream;

use super::{CurvePoint, DecayCurve};

/// Default number of bins per dimension.
pub const DEFAULT_BINS: usize = 64;
/// Bootstrap resamples behind the standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Half-L1 distance between the histograms of `a` and `b` (flattened points of
/// dimension `dim <= 2`) on a common grid of `bins` cells per axis spanning
/// the pooled range. The standard error comes from multinomial resampling of
/// the two count vectors.
///
/// For a fixed grid this is consistent for the TV distance of the binned laws,
/// which never exceeds the TV distance of the laws themselves.
pub fn tv_estimate(a: &[f64], b: &[f64], dim: usize, bins: usize, stream: RngStream) -> Result<TvEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("TV estimate needs two nonempty samples".into()));
    }
    if !(dim == 1 || dim == 2) {
        return Err(Error::Input(format!("TV estimate supports dimension 1 or 2, got {dim}; project first")));
    }
    if !a.len().is_multiple_of(dim) || !b.len().is_multiple_of(dim) {
        return Err(Error::Input("sample length is not a multiple of the dimension".into()));
    }
    if bins == 0 {
        return Err(Error::Input("need at least one bin".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Input("samples contain non-finite values".into()));
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in a.chunks(dim).chain(b.chunks(dim)) {
        for i in 0..dim {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let cell = |p: &[f64]| -> usize {
        let mut idx = 0;
        for i in 0..dim {
            let w = hi[i] - lo[i];
            let c = if w > 0.0 { (((p[i] - lo[i]) / w) * bins as f64).floor() as usize } else { 0 };
            idx = idx * bins + c.min(bins - 1);
        }
        idx
    };
    let ncell = bins.pow(dim as u32);
    let count = |s: &[f64]| {
        let mut c = vec![0u64; ncell];
        for p in s.chunks(dim) {
            c[cell(p)] += 1;
        }
        c
    };
    let (ca, cb) = (count(a), count(b));
    let (na, nb) = ((a.len() / dim) as u64, (b.len() / dim) as u64);
    let estimate = half_l1(&ca, na, &cb, nb);
    let mut rng = stream.rng();
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let ra = multinomial(&ca, na, &mut rng);
            let rb = multinomial(&cb, nb, &mut rng);
            half_l1(&ra, na, &rb, nb)
        })
        .collect();
    let m = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (boots.len() - 1) as f64;
    Ok(TvEstimate { estimate, std_error: var.sqrt() })
}

/// TV between the laws of `Y_n` started from the two points, for each
/// horizon, estimated from the final states of coupled runs projected on
/// `coords`. The coupling preserves both marginals, and pairing the samples
/// removes most of the histogram noise: the estimate never exceeds the
/// fraction of runs that have not met.
pub fn tv_decay_curve(
    chain: &ChainSpec,
    minor: &MinorizationSpec,
    env: &EnvironmentSpec,
    starts: (&[f64], &[f64]),
    horizons: &[usize],
    replications: usize,
    coords: &[usize],
    bins: usize,
    stream: RngStream,
) -> Result<DecayCurve> {
    let dim = chain.dim();
    if coords.is_empty() || coords.len() > 2 || coords.iter().any(|&c| c >= dim) {
        return Err(Error::Input(format!("TV projection needs 1 or 2 coordinates below {dim}, got {coords:?}")));
    }
    if replications == 0 {
        return Err(Error::Input("replications must be positive".into()));
    }
    let project = |flat: &[f64]| -> Vec<f64> { flat.chunks(dim).flat_map(|p| coords.iter().map(|&c| p[c])).collect() };
    let points = horizons
        .iter()
        .map(|&n| {
            let (a, b, _) = coupled_marginals(chain, minor, env, starts, n, replications, stream)?;
            let t = tv_estimate(&project(&a), &project(&b), coords.len(), bins, stream.child(u64::MAX - n as u64))?;
            Ok(CurvePoint { index: n, estimate: t.estimate, std_error: t.std_error })
        })
        .collect::<Result<Vec<_>>>()?;
    DecayCurve::new(points)
}

fn half_l1(ca: &[u64], na: u64, cb: &[u64], nb: u64) -> f64 {
    let (fa, fb) = (na as f64, nb as f64);
    (0.5 * ca.iter().zip(cb).map(|(&x, &y)| (x as f64 / fa - y as f64 / fb).abs()).sum::<f64>()).min(1.0)
}

/// Multinomial draw of `n` items with cell probabilities `counts / n`, by
/// sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(counts: &[u64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; counts.len()];
    let mut left = n;
    let mut mass_left = n;
    for (o, &c) in out.iter_mut().zip(counts) {
        if left == 0 || mass_left == 0 {
            break;
        }
        if c == 0 {
            continue;
        }
        let p = (c as f64 / mass_left as f64).min(1.0);
        let draw = if p >= 1.0 { left } else { Binomial::new(left, p).expect("valid binomial").sample(rng) };
        *o = draw;
        left -= draw;
        mass_left -= c;
    }
    out
}
