//! Alpha-mixing estimation over a finite class of half-line events.

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngStream;

use super::{CurvePoint, DecayCurve};

/// Number of random re-pairings behind the independence null.
pub const NULL_PERMUTATIONS: usize = 20;

/// Events `{Z_i <= q_p}` and `{Z_i > q_p}` at the empirical quantiles `q_p`
/// for `p` in `levels`, intersected over up to `coords` consecutive
/// coordinates on each side of the gap (the whole space is always included).
#[derive(Debug, Clone, PartialEq)]
pub struct EventClass {
    pub levels: Vec<f64>,
    pub coords: usize,
}

impl Default for EventClass {
    fn default() -> Self {
        Self::deciles(2)
    }
}

impl EventClass {
    pub fn deciles(coords: usize) -> Self {
        Self { levels: (1..10).map(|i| i as f64 / 10.0).collect(), coords }
    }

    pub fn new(levels: Vec<f64>, coords: usize) -> Result<Self> {
        let c = Self { levels, coords };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.coords) {
            return Err(Error::Input(format!("event class uses 1 or 2 coordinates per side, got {}", self.coords)));
        }
        if self.levels.is_empty() || self.levels.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Input("event levels must be probabilities in (0, 1)".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("event levels must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Whether every event of `self` is also an event of `other`.
    pub fn is_subclass_of(&self, other: &EventClass) -> bool {
        self.coords <= other.coords && self.levels.iter().all(|p| other.levels.contains(p))
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lv: Vec<String> = self.levels.iter().map(|p| format!("{p}")).collect();
        write!(f, "half-lines at quantiles [{}] on {} coordinate(s) per side", lv.join(", "), self.coords)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingEstimate {
    pub lag: usize,
    /// Largest `|P(A and B) - P(A) P(B)|` over the event class; in `[0, 1/4]`.
    pub alpha_hat: f64,
    /// Mean of the same statistic with past and future blocks re-paired at random.
    pub null_mean: f64,
    /// Standard deviation of the re-paired statistic.
    pub std_error: f64,
    pub event_class: EventClass,
    pub observations: usize,
}

impl MixingEstimate {
    /// `alpha_hat` minus the level it reaches under independence at this sample size.
    pub fn excess(&self) -> f64 {
        self.alpha_hat - self.null_mean
    }
}

/// Estimates the alpha-mixing coefficient at `lag` of the stationary scalar
/// series in `ensemble`.
///
/// Past blocks `(Z_j, Z_{j-1})` are paired with future blocks
/// `(Z_{j+lag}, Z_{j+lag+1})`, of which the class uses the first `coords`
/// entries, pooled over `j` and over series. Since
/// only finitely many events are searched, `alpha_hat` is a lower bound for
/// the supremum over the full sigma-fields, up to sampling noise. Sampling
/// noise biases the raw maximum upward; the re-paired null measures that bias.
pub fn alpha_mixing_estimate(ensemble: &[Vec<f64>], lag: usize, class: &EventClass, stream: RngStream) -> Result<MixingEstimate> {
    class.validate()?;
    if lag == 0 {
        return Err(Error::Input("lag must be at least 1".into()));
    }
    let c = class.coords;
    // the same observation set for every class, so nested classes compare exactly
    let span = lag + 3;
    if ensemble.is_empty() || ensemble.iter().all(|s| s.len() < span) {
        return Err(Error::Input(format!("lag {lag} exceeds the trajectory length (need at least {span} points per series)")));
    }
    if ensemble.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("series contain non-finite values".into()));
    }

    let mut pooled: Vec<f64> = ensemble.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let cuts: Vec<f64> =
        class.levels.iter().map(|p| pooled[((p * pooled.len() as f64).ceil() as usize).clamp(1, pooled.len()) - 1]).collect();
    let code = |v: f64| cuts.partition_point(|q| *q < v) as u8;

    let mut past = Vec::new();
    let mut future = Vec::new();
    for s in ensemble.iter().filter(|s| s.len() >= span) {
        let codes: Vec<u8> = s.iter().map(|v| code(*v)).collect();
        for j in 1..(s.len() - lag - 1) {
            if c == 2 {
                past.push([codes[j], codes[j - 1]]);
                future.push([codes[j + lag], codes[j + lag + 1]]);
            } else {
                past.push([codes[j], 0]);
                future.push([codes[j + lag], 0]);
            }
        }
    }
    let observations = past.len();
    let table = Table::new(class.levels.len() + 1, c);
    let alpha_hat = table.max_deviation(&past, &future);

    let mut rng = stream.rng();
    let mut shuffled = future.clone();
    let nulls: Vec<f64> = (0..NULL_PERMUTATIONS)
        .map(|_| {
            shuffled.shuffle(&mut rng);
            table.max_deviation(&past, &shuffled)
        })
        .collect();
    let null_mean = nulls.iter().sum::<f64>() / nulls.len() as f64;
    let var = nulls.iter().map(|v| (v - null_mean).powi(2)).sum::<f64>() / (nulls.len() - 1) as f64;
    Ok(MixingEstimate { lag, alpha_hat, null_mean, std_error: var.sqrt(), event_class: class.clone(), observations })
}

/// Mixing estimates at every lag, and the curve of their excess over the
/// independence null (floored at zero) with the null spread as standard
/// error. Lag `k` uses `stream.child(k)`.
pub fn mixing_curve(
    ensemble: &[Vec<f64>],
    lags: &[usize],
    class: &EventClass,
    stream: RngStream,
) -> Result<(DecayCurve, Vec<MixingEstimate>)> {
    let estimates = lags
        .par_iter()
        .map(|&k| alpha_mixing_estimate(ensemble, k, class, stream.child(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let curve = DecayCurve::new(
        estimates
            .iter()
            .map(|m| CurvePoint { index: m.lag, estimate: m.excess().clamp(0.0, 0.25), std_error: m.std_error })
            .collect(),
    )?;
    Ok((curve, estimates))
}

/// Count table over (past codes, future codes) with 4-way prefix sums.
struct Table {
    codes: usize,
    coords: usize,
    /// Half-open code intervals per used coordinate: everything, `<= i`, `> i`.
    intervals: Vec<(usize, usize)>,
}

impl Table {
    fn new(codes: usize, coords: usize) -> Self {
        let mut intervals = vec![(0, codes)];
        for i in 1..codes {
            intervals.push((0, i));
            intervals.push((i, codes));
        }
        Self { codes, coords, intervals }
    }

    fn max_deviation(&self, past: &[[u8; 2]], future: &[[u8; 2]]) -> f64 {
        let m = self.codes;
        let second = self.coords == 2;
        let side = m + 1;
        let minor = if second { side } else { 2 };
        let dims = [side, minor, side, minor];
        let stride = [dims[1] * dims[2] * dims[3], dims[2] * dims[3], dims[3], 1];
        let mut s = vec![0u32; dims.iter().product()];
        for (p, f) in past.iter().zip(future) {
            let idx = [p[0] as usize + 1, p[1] as usize + 1, f[0] as usize + 1, f[1] as usize + 1];
            s[idx.iter().zip(&stride).map(|(i, st)| i * st).sum::<usize>()] += 1;
        }
        // prefix sums along each axis; s[a,b,c,d] then counts codes < (a,b,c,d)
        for axis in 0..4 {
            for flat in 0..s.len() {
                if !(flat / stride[axis]).is_multiple_of(dims[axis]) {
                    s[flat] += s[flat - stride[axis]];
                }
            }
        }
        let count = |bx: [(usize, usize); 4]| -> f64 {
            let mut acc = 0i64;
            for corner in 0..16u32 {
                let mut flat = 0;
                let mut sign = 1i64;
                for (k, &(lo, hi)) in bx.iter().enumerate() {
                    if corner >> k & 1 == 0 {
                        flat += stride[k] * hi;
                    } else {
                        flat += stride[k] * lo;
                        sign = -sign;
                    }
                }
                acc += sign * s[flat] as i64;
            }
            acc as f64
        };
        let unused = [(0usize, 1usize)];
        let second_iv: &[(usize, usize)] = if second { &self.intervals } else { &unused };
        let mut blocks = Vec::new();
        for &x in &self.intervals {
            for &y in second_iv {
                blocks.push((x, y));
            }
        }
        let full = ((0, m), if second { (0, m) } else { (0, 1) });
        let n = past.len() as f64;
        let future_mass: Vec<f64> = blocks.iter().map(|fb| count([full.0, full.1, fb.0, fb.1]) / n).collect();
        let mut best = 0.0f64;
        for pb in &blocks {
            let pa = count([pb.0, pb.1, full.0, full.1]) / n;
            if pa == 0.0 || pa == 1.0 {
                continue;
            }
            for (fb, pf) in blocks.iter().zip(&future_mass) {
                let joint = count([pb.0, pb.1, fb.0, fb.1]) / n;
                best = best.max((joint - pa * pf).abs());
            }
        }
        best.min(0.25)
    }
}
