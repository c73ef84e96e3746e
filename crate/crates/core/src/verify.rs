//! Sampled checks of the contractivity and minorization assumptions.
//!
//! Violations are data, not errors. Checks are sharded over independent
//! child streams and merged in shard order, so a report depends only on the
//! stream and never on thread scheduling.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::chain::ChainSpec;
use crate::env::EnvironmentSpec;
use crate::error::{invalid, Error, Result};
use crate::models::additive::{MinorizationSpec, SupportAnchor};
use crate::rng::{RngStream, StreamRng};

/// Trials handled by one shard.
const SHARD: usize = 50_000;

/// Relative slack absorbing floating-point roundoff in inequality checks.
const ROUNDOFF: f64 = 1e-9;

/// Labelled input tuple of a violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness(pub Vec<(String, Vec<f64>)>);

impl Witness {
    fn new(items: &[(&str, &[f64])]) -> Self {
        Witness(items.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_slice())
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v:?}")?;
        }
        Ok(())
    }
}

/// Outcome of a sampled check. `worst_margin` is the largest observed
/// `lhs - rhs`; a witness is kept exactly when `violations > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub assumption: String,
    pub trials: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    worst_violation: f64,
}

impl CheckReport {
    fn empty(assumption: &str) -> Self {
        Self {
            assumption: assumption.into(),
            trials: 0,
            violations: 0,
            worst_margin: f64::NEG_INFINITY,
            witness: None,
            worst_violation: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, margin: f64, violated: bool, witness: impl FnOnce() -> Witness) {
        self.trials += 1;
        self.worst_margin = self.worst_margin.max(margin);
        if violated {
            self.violations += 1;
            if margin > self.worst_violation {
                self.worst_violation = margin;
                self.witness = Some(witness());
            }
        }
    }

    /// Combines two shard reports; ties keep the earlier shard's witness.
    pub fn merge(mut self, other: CheckReport) -> CheckReport {
        self.trials += other.trials;
        self.violations += other.violations;
        self.worst_margin = self.worst_margin.max(other.worst_margin);
        if other.worst_violation > self.worst_violation {
            self.worst_violation = other.worst_violation;
            self.witness = other.witness;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Distribution of test points: uniform on a box with probability
/// `1 - shell_fraction`, else uniform on the sphere of radius `shell_radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSampler {
    pub box_half_width: f64,
    pub shell_radius: f64,
    pub shell_fraction: f64,
}

impl Default for InputSampler {
    fn default() -> Self {
        Self { box_half_width: 50.0, shell_radius: 1e3, shell_fraction: 0.1 }
    }
}

impl InputSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        if rng.random::<f64>() < self.shell_fraction {
            let mut n2 = 0.0;
            while n2 == 0.0 {
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
                n2 = out.iter().map(|v| v * v).sum::<f64>();
            }
            let s = self.shell_radius / n2.sqrt();
            out.iter_mut().for_each(|o| *o *= s);
        } else {
            let w = self.box_half_width;
            out.iter_mut().for_each(|o| *o = rng.random_range(-w..=w));
        }
    }
}

fn shards(total: usize) -> Vec<(u64, usize)> {
    (0..total.div_ceil(SHARD)).map(|s| (s as u64, SHARD.min(total - s * SHARD))).collect()
}

fn sharded<F>(assumption: &str, total: usize, stream: RngStream, work: F) -> CheckReport
where
    F: Fn(&mut StreamRng, usize, &mut CheckReport) + Sync,
{
    shards(total)
        .into_par_iter()
        .map(|(s, len)| {
            let mut rng = stream.child(s).rng();
            let mut rep = CheckReport::empty(assumption);
            work(&mut rng, len, &mut rep);
            rep
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(CheckReport::empty(assumption), CheckReport::merge)
}

/// Samples `(y1, y2, x, e)` and tests
/// `d(f(y1,x,e), f(y2,x,e)) <= rho d(y1,y2) + R` with shared `x` and `e`.
pub fn check_contractivity(
    spec: &ChainSpec,
    env: &EnvironmentSpec,
    sampler: &InputSampler,
    trials: usize,
    stream: RngStream,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let dim = spec.dim();
    let rho = spec.contraction.rho;
    let r = spec.contraction.r;
    let report = sharded("contractivity", trials, stream, |rng, len, rep| {
        let window = env.generate(0, len, rng);
        let (mut y1, mut y2) = (vec![0.0; dim], vec![0.0; dim]);
        let mut e = vec![0.0; spec.noise().dim()];
        let (mut f1, mut f2) = (vec![0.0; dim], vec![0.0; dim]);
        for t in 0..len {
            sampler.sample(rng, &mut y1);
            sampler.sample(rng, &mut y2);
            spec.noise().sample(rng, &mut e);
            let x = window.get(t as i64).expect("inside window");
            spec.dynamics.update(&y1, x, &e, &mut f1);
            spec.dynamics.update(&y2, x, &e, &mut f2);
            let lhs = spec.metric.dist(&f1, &f2);
            let rhs = rho * spec.metric.dist(&y1, &y2) + r;
            let margin = lhs - rhs;
            let violated = !(margin <= ROUNDOFF * (1.0 + rhs));
            rep.record(margin, violated, || Witness::new(&[("y1", &y1), ("y2", &y2), ("x", x), ("e", &e)]));
        }
    });
    Ok(report)
}

/// Tests `d(g(y1)+h(y1), g(y2)+h(y2)) <= rho d(y1,y2) + 2J` on sampled pairs
/// (Euclidean metric).
pub fn check_bounded_perturbation<G, H>(
    dim: usize,
    g: G,
    h: H,
    rho: f64,
    j: f64,
    sampler: &InputSampler,
    trials: usize,
    stream: RngStream,
) -> Result<CheckReport>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
    H: Fn(&[f64], &mut [f64]) + Sync,
{
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid("rho", format!("must lie in [0,1), got {rho}")));
    }
    if !(j >= 0.0) {
        return Err(invalid("J", format!("must be nonnegative, got {j}")));
    }
    if trials == 0 || dim == 0 {
        return Err(invalid("trials", "trials and dimension must be positive"));
    }
    let euclid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let report = sharded("bounded-perturbation", trials, stream, |rng, len, rep| {
        let (mut y1, mut y2) = (vec![0.0; dim], vec![0.0; dim]);
        let (mut f1, mut f2, mut tmp) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        for _ in 0..len {
            sampler.sample(rng, &mut y1);
            sampler.sample(rng, &mut y2);
            for (y, f) in [(&y1, &mut f1), (&y2, &mut f2)] {
                g(y, f);
                h(y, &mut tmp);
                f.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
            }
            let rhs = rho * euclid(&y1, &y2) + 2.0 * j;
            let margin = euclid(&f1, &f2) - rhs;
            let violated = !(margin <= ROUNDOFF * (1.0 + rhs));
            rep.record(margin, violated, || Witness::new(&[("y1", &y1), ("y2", &y2)]));
        }
    });
    Ok(report)
}

fn check_pair(minor: &MinorizationSpec, y1: &[f64], y2: &[f64]) -> Result<f64> {
    if y1.len() != minor.dim() || y2.len() != minor.dim() {
        return Err(Error::InvalidPair("dimension mismatch".into()));
    }
    let d = minor.metric().dist(y1, y2);
    if !(d > 0.0) {
        return Err(Error::InvalidPair("the minorization needs d(y1, y2) > 0".into()));
    }
    if d > minor.pair_radius {
        return Err(Error::InvalidPair(format!("d(y1, y2) = {d} exceeds the pair radius {}", minor.pair_radius)));
    }
    Ok(d)
}

/// Draws from `nu(x, y1, y2, .)` and counts draws outside
/// `B_K(a_1) cap B_K(a_2)`, with `a_i` chosen by `anchor`.
pub fn check_support(
    minor: &MinorizationSpec,
    x: &[f64],
    y1: &[f64],
    y2: &[f64],
    samples: usize,
    anchor: SupportAnchor,
    stream: RngStream,
) -> Result<CheckReport> {
    check_pair(minor, y1, y2)?;
    if samples == 0 {
        return Err(invalid("samples", "must be at least 1"));
    }
    let center = minor.nu_center(x, y1, y2);
    let a1 = minor.anchor_point(anchor, x, y1);
    let a2 = minor.anchor_point(anchor, x, y2);
    let k = minor.k;
    Ok(sharded("support", samples, stream, |rng, len, rep| {
        let mut z = vec![0.0; center.len()];
        for _ in 0..len {
            minor.nu_sample_at(&center, rng, &mut z);
            let far = minor.metric().dist(&z, &a1).max(minor.metric().dist(&z, &a2));
            let margin = far - k;
            rep.record(margin, margin > ROUNDOFF * (1.0 + k), || Witness::new(&[("z", &z), ("anchor1", &a1), ("anchor2", &a2)]));
        }
    }))
}

/// Test cells for the dominance check.
#[derive(Debug, Clone)]
enum Cells {
    /// `cells^dim` regular grid over a box.
    Grid { lo: Vec<f64>, width: Vec<f64>, per_axis: usize },
    /// Half-spaces `{z : n . z >= s}`.
    HalfSpaces(Vec<(Vec<f64>, f64)>),
}

impl Cells {
    fn count(&self) -> usize {
        match self {
            Cells::Grid { per_axis, lo, .. } => per_axis.pow(lo.len() as u32),
            Cells::HalfSpaces(h) => h.len(),
        }
    }

    fn tally(&self, z: &[f64], counts: &mut [u64]) {
        match self {
            Cells::Grid { lo, width, per_axis } => {
                let mut idx = 0usize;
                for (i, &v) in z.iter().enumerate() {
                    let c = ((v - lo[i]) / width[i]).floor();
                    if !(c >= 0.0 && c < *per_axis as f64) {
                        return;
                    }
                    idx = idx * per_axis + c as usize;
                }
                counts[idx] += 1;
            }
            Cells::HalfSpaces(hs) => {
                for (c, (n, s)) in counts.iter_mut().zip(hs) {
                    if n.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() >= *s {
                        *c += 1;
                    }
                }
            }
        }
    }
}

/// Length of `[a, b] cap [c - h, c + h]`.
fn overlap(a: f64, b: f64, c: f64, h: f64) -> f64 {
    (b.min(c + h) - a.max(c - h)).max(0.0)
}

/// Area of the disc of radius `r` at `c` inside the rectangle `[x0,x1] x [y0,y1]`.
fn disc_rect_area(c: &[f64], r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (a, b) = ((x0 - c[0]).max(-r), (x1 - c[0]).min(r));
    if a >= b {
        return 0.0;
    }
    // substitute t = r sin(th) so the integrand is smooth across the rim
    let (ta, tb) = ((a / r).clamp(-1.0, 1.0).asin(), (b / r).clamp(-1.0, 1.0).asin());
    let m = 512;
    let step = (tb - ta) / m as f64;
    let f = |th: f64| {
        let half = r * th.cos();
        overlap(y0, y1, c[1], half) * r * th.cos()
    };
    let mut s = f(ta) + f(tb);
    for i in 1..m {
        s += f(ta + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * step / 3.0
}

/// `P(n . U >= s)` for `U` uniform on the unit ball of `R^d`, `|n| = 1`.
fn ball_cap_fraction(d: usize, s: f64) -> f64 {
    if s <= -1.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    // one coordinate of U has density proportional to (1 - t^2)^{(d-1)/2}
    let tail = 0.5 * beta_reg(0.5 * (d as f64 + 1.0), 0.5, 1.0 - s * s);
    if s >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Cells per axis of the dominance grid.
pub const GRID_CELLS: usize = 32;
/// Binomial tolerance of the dominance check, in standard deviations.
pub const DOMINANCE_SIGMAS: f64 = 5.0;

/// Compares, on a finite family of cells `A`, the empirical frequencies of
/// `f(y_i, x, e) in A` with the lower bound `eta(x) nu(x, y1, y2, A)`, and
/// reports cells where a chain falls short by more than the one-sided
/// binomial tolerance.
pub fn check_minorization(
    spec: &ChainSpec,
    minor: &MinorizationSpec,
    x: &[f64],
    y1: &[f64],
    y2: &[f64],
    samples: usize,
    stream: RngStream,
) -> Result<CheckReport> {
    check_pair(minor, y1, y2)?;
    if samples == 0 {
        return Err(invalid("samples", "must be at least 1"));
    }
    let dim = minor.dim();
    let eta = minor.eta(x);
    let center = minor.nu_center(x, y1, y2);
    let r = minor.nu_radius;
    let (cells, nu_mass): (Cells, Vec<f64>) = if dim <= 2 {
        // grid over the union of the radius-K balls around the drift images
        let reach = minor.metric().to_euclidean_bound() * minor.k;
        let c1 = minor.anchor_point(SupportAnchor::DriftImage, x, y1);
        let c2 = minor.anchor_point(SupportAnchor::DriftImage, x, y2);
        let lo: Vec<f64> = (0..dim).map(|i| c1[i].min(c2[i]) - reach).collect();
        let hi: Vec<f64> = (0..dim).map(|i| c1[i].max(c2[i]) + reach).collect();
        let width: Vec<f64> = (0..dim).map(|i| (hi[i] - lo[i]) / GRID_CELLS as f64).collect();
        let cells = Cells::Grid { lo: lo.clone(), width: width.clone(), per_axis: GRID_CELLS };
        let n = cells.count();
        let mass = (0..n)
            .map(|idx| {
                if dim == 1 {
                    let a = lo[0] + idx as f64 * width[0];
                    overlap(a, a + width[0], center[0], r) / (2.0 * r)
                } else {
                    let (i, j) = (idx / GRID_CELLS, idx % GRID_CELLS);
                    let x0 = lo[0] + i as f64 * width[0];
                    let y0 = lo[1] + j as f64 * width[1];
                    disc_rect_area(&center, r, x0, x0 + width[0], y0, y0 + width[1]) / (std::f64::consts::PI * r * r)
                }
            })
            .collect();
        (cells, mass)
    } else {
        let mut rng = stream.child(u64::MAX).rng();
        let mut hs = Vec::new();
        let mut mass = Vec::new();
        for _ in 0..256 {
            let mut n: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            n.iter_mut().for_each(|v| *v /= norm);
            let off: f64 = rng.random_range(-1.0..1.0);
            let s = n.iter().zip(&center).map(|(a, b)| a * b).sum::<f64>() + off * r;
            mass.push(ball_cap_fraction(dim, off));
            hs.push((n, s));
        }
        (Cells::HalfSpaces(hs), mass)
    };
    let ncell = cells.count();
    let counts: Vec<[Vec<u64>; 2]> = shards(samples)
        .into_par_iter()
        .map(|(s, len)| {
            let mut rng = stream.child(s).rng();
            let mut e = vec![0.0; spec.noise().dim()];
            let mut z = vec![0.0; dim];
            let mut out = [vec![0u64; ncell], vec![0u64; ncell]];
            for (i, y) in [y1, y2].iter().enumerate() {
                for _ in 0..len {
                    spec.noise().sample(&mut rng, &mut e);
                    spec.dynamics.update(y, x, &e, &mut z);
                    cells.tally(&z, &mut out[i]);
                }
            }
            out
        })
        .collect();
    let mut totals = [vec![0u64; ncell], vec![0u64; ncell]];
    for c in &counts {
        for i in 0..2 {
            totals[i].iter_mut().zip(&c[i]).for_each(|(t, v)| *t += v);
        }
    }
    let n = samples as f64;
    let mut rep = CheckReport::empty("minorization");
    for (i, tot) in totals.iter().enumerate() {
        for (cell, (&count, &mass)) in tot.iter().zip(&nu_mass).enumerate() {
            let p = (eta * mass).min(1.0);
            let freq = count as f64 / n;
            let tol = DOMINANCE_SIGMAS * (p * (1.0 - p) / n).sqrt();
            let margin = p - freq;
            rep.record(margin, margin > tol, || {
                Witness::new(&[("chain", &[i as f64 + 1.0]), ("cell", &[cell as f64]), ("bound", &[p]), ("frequency", &[freq])])
            });
        }
    }
    rep.trials = 2 * samples;
    Ok(rep)
}
