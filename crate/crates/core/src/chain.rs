//! The chain recursion `Y_{n+1} = f(Y_n, X_n, e_{n+1})`, its contraction
//! parameters and the constants that drive the coupling schedule.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::env::{EnvWindow, EnvironmentSpec};
use crate::error::{invalid, Error, Result};
use crate::metric::Metric;
use crate::noise::NoiseLaw;
use crate::rng::RngStream;

/// The update map `f(y, x, e)` together with the law of `e`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise(&self) -> &NoiseLaw;

    /// Writes `f(y, x, e)` into `out`. Must be deterministic.
    fn update(&self, y: &[f64], x: &[f64], e: &[f64], out: &mut [f64]);
}

type UpdateFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// [`Dynamics`] backed by a closure, for ad-hoc maps.
#[derive(Clone)]
pub struct FnDynamics {
    dim: usize,
    noise: NoiseLaw,
    f: Arc<UpdateFn>,
}

impl FnDynamics {
    pub fn new<F>(dim: usize, noise: NoiseLaw, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { dim, noise, f: Arc::new(f) }
    }
}

impl Dynamics for FnDynamics {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn noise(&self) -> &NoiseLaw {
        &self.noise
    }

    fn update(&self, y: &[f64], x: &[f64], e: &[f64], out: &mut [f64]) {
        (self.f)(y, x, e, out)
    }
}

/// `(rho, R)` of `d(f(y1,x,e), f(y2,x,e)) <= rho d(y1,y2) + R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionParams {
    pub rho: f64,
    pub r: f64,
}

impl ContractionParams {
    pub fn new(rho: f64, r: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid("rho", format!("must lie in (0,1), got {rho}")));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(invalid("R", format!("must be finite and nonnegative, got {r}")));
        }
        Ok(Self { rho, r })
    }
}

/// Equivalent ways of stating contractivity up to a bounded perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssumptionForm {
    /// `d(f(y1), f(y2)) <= rho d(y1, y2) + R`.
    Drift { rho: f64, r: f64 },
    /// `d(f(y1), f(y2)) <= rho max(R, d(y1, y2))`.
    UniLip { rho: f64, r: f64 },
    /// Contraction by `rho` beyond distance `R`, plus a global Lipschitz bound `L >= 1`.
    ConLip { rho: f64, r: f64, lipschitz: f64 },
}

fn check_form(rho: f64, r: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid("rho", format!("must lie in (0,1), got {rho}")));
    }
    if !(r >= 0.0) {
        return Err(invalid("R", format!("must be nonnegative, got {r}")));
    }
    Ok(())
}

/// Converts any [`AssumptionForm`] into the drift form `(rho, R)`.
pub fn normalize_assumption(form: AssumptionForm) -> Result<ContractionParams> {
    match form {
        AssumptionForm::Drift { rho, r } => ContractionParams::new(rho, r),
        // rho max(R, d) <= rho d + rho R <= rho d + R
        AssumptionForm::UniLip { rho, r } => ContractionParams::new(rho, r),
        AssumptionForm::ConLip { .. } => {
            let uni = unilip_form(form)?;
            ContractionParams::new(uni.rho, uni.r)
        }
    }
}

/// Converts any [`AssumptionForm`] into the uniform-Lipschitz form
/// `d(f(y1), f(y2)) <= rho' max(R', d(y1, y2))`, returned as `(rho', R')`.
///
/// From the drift form the new rate is `(1 + rho)/2` and `R' = R/(rho' - rho)`;
/// from contraction-at-infinity plus Lipschitz it is `(rho, R L / rho)`.
pub fn unilip_form(form: AssumptionForm) -> Result<ContractionParams> {
    match form {
        AssumptionForm::Drift { rho, r } => {
            check_form(rho, r)?;
            let rho_prime = 0.5 * (1.0 + rho);
            ContractionParams::new(rho_prime, r / (rho_prime - rho))
        }
        AssumptionForm::UniLip { rho, r } => ContractionParams::new(rho, r),
        AssumptionForm::ConLip { rho, r, lipschitz } => {
            check_form(rho, r)?;
            if !(lipschitz >= 1.0) {
                return Err(invalid("L", format!("Lipschitz constant must be >= 1, got {lipschitz}")));
            }
            ContractionParams::new(rho, r * lipschitz / rho)
        }
    }
}

/// Derived constants of the two-phase coupling schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConstants {
    /// `(1 + rho) / 2`.
    pub rho_prime: f64,
    /// `2 R / (1 - rho)`.
    pub r_prime: f64,
    /// Support radius of the minorizing measure.
    pub k: f64,
    /// Spacing between coupling attempts.
    pub block: usize,
}

impl CouplingConstants {
    /// Number of coupling attempts in an `n`-step run: `floor(ceil(n/2) / N)`.
    pub fn k_star(&self, n: usize) -> usize {
        n.div_ceil(2) / self.block
    }

    /// Time indices `floor(n/2) + k N`, `k = 1..=k_star(n)`, of the coupling attempts.
    pub fn attempt_times(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let half = n / 2;
        (1..=self.k_star(n)).map(move |k| half + k * self.block)
    }

    /// `R'/(4R' + 4K)`, the level `rho'^(N-1)` must reach.
    pub fn block_target(&self) -> f64 {
        self.r_prime / (4.0 * self.r_prime + 4.0 * self.k)
    }
}

/// Computes `rho'`, `R'` and the smallest `N >= 1` with
/// `rho'^(N-1) <= R'/(4R' + 4K)`.
pub fn derive_constants(contraction: ContractionParams, k: f64) -> Result<CouplingConstants> {
    let ContractionParams { rho, r } = contraction;
    check_form(rho, r)?;
    if !(r > 0.0) {
        return Err(invalid("R", "the coupling schedule needs R > 0"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid("K", format!("must be positive, got {k}")));
    }
    let rho_prime = 0.5 * (1.0 + rho);
    let r_prime = 2.0 * r / (1.0 - rho);
    let target = r_prime / (4.0 * r_prime + 4.0 * k);
    let mut block = 1 + (target.ln() / rho_prime.ln()).ceil().max(0.0) as usize;
    // settle floating-point edge cases against the defining inequality
    while block > 1 && rho_prime.powi(block as i32 - 2) <= target {
        block -= 1;
    }
    while rho_prime.powi(block as i32 - 1) > target {
        block += 1;
    }
    Ok(CouplingConstants { rho_prime, r_prime, k, block })
}

/// A concrete chain: update map, metric and declared contraction.
#[derive(Clone)]
pub struct ChainSpec {
    pub name: String,
    pub dynamics: Arc<dyn Dynamics>,
    pub metric: Metric,
    pub contraction: ContractionParams,
    /// Exponent `theta` in `(0, 1]` of the moment `E d^theta(y_ref, Y)`.
    pub theta: f64,
    /// Reference point `y_ref`.
    pub reference: Vec<f64>,
}

impl fmt::Debug for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("metric", &self.metric)
            .field("contraction", &self.contraction)
            .field("theta", &self.theta)
            .finish()
    }
}

impl ChainSpec {
    pub fn new(name: impl Into<String>, dynamics: Arc<dyn Dynamics>, metric: Metric, contraction: ContractionParams) -> Self {
        let dim = dynamics.state_dim();
        Self { name: name.into(), dynamics, metric, contraction, theta: 1.0, reference: vec![0.0; dim] }
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(invalid("theta", format!("must lie in (0,1], got {theta}")));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn with_reference(mut self, reference: Vec<f64>) -> Result<Self> {
        if reference.len() != self.dim() {
            return Err(invalid("reference", "dimension mismatch"));
        }
        self.reference = reference;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn noise(&self) -> &NoiseLaw {
        self.dynamics.noise()
    }

    /// `f(y, x, e)` with a finiteness check.
    pub fn apply(&self, y: &[f64], x: &[f64], e: &[f64], out: &mut [f64]) -> Result<()> {
        self.dynamics.update(y, x, e, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericOverflow { model: self.name.clone(), state: y.to_vec(), env: x.to_vec() })
        }
    }
}

/// One transition: `f(y, x, e)` with `e` drawn from the noise law.
pub fn step<R: Rng + ?Sized>(spec: &ChainSpec, y: &[f64], x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut e = vec![0.0; spec.noise().dim()];
    spec.noise().sample(rng, &mut e);
    let mut out = vec![0.0; spec.dim()];
    spec.apply(y, x, &e, &mut out)?;
    Ok(out)
}

/// Simulated states aligned with the environment window that drove them:
/// `states[i]` is the state at time `env.lo() + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    states: Vec<f64>,
    pub env: EnvWindow,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored states (steps + 1).
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Component `c` of every state, in time order.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.states.iter().skip(c).step_by(self.dim).copied().collect()
    }
}

/// Iterates the chain from `y0` along every state of `window`.
pub fn simulate_on_window<R: Rng + ?Sized>(spec: &ChainSpec, window: EnvWindow, y0: &[f64], rng: &mut R) -> Result<Trajectory> {
    let dim = spec.dim();
    if y0.len() != dim {
        return Err(invalid("y0", format!("expected dimension {dim}, got {}", y0.len())));
    }
    let n = window.len();
    let mut states = Vec::with_capacity((n + 1) * dim);
    states.extend_from_slice(y0);
    let mut e = vec![0.0; spec.noise().dim()];
    let mut next = vec![0.0; dim];
    for t in 0..n {
        let x = window.get(window.lo() + t as i64)?;
        spec.noise().sample(rng, &mut e);
        let y = &states[t * dim..(t + 1) * dim];
        spec.apply(y, x, &e, &mut next)?;
        states.extend_from_slice(&next);
    }
    Ok(Trajectory { dim, states, env: window })
}

/// `n` forward steps from `y0` over a fresh stationary window `X_0..X_{n-1}`.
pub fn simulate_forward(spec: &ChainSpec, env: &EnvironmentSpec, y0: &[f64], n: usize, stream: RngStream) -> Result<Trajectory> {
    let mut rng = stream.rng();
    let window = env.generate(0, n, &mut rng);
    simulate_on_window(spec, window, y0, &mut rng)
}

/// Iterates from `y0` along a fresh window `X_{-n}..X_{-1}`, realizing
/// `delta_y P_{X_{-n}} ... P_{X_{-1}}`; the last state is at time 0.
pub fn simulate_backward(spec: &ChainSpec, env: &EnvironmentSpec, y0: &[f64], n: usize, stream: RngStream) -> Result<Trajectory> {
    if n == 0 {
        return Err(invalid("n", "backward iteration needs n >= 1"));
    }
    let mut rng = stream.rng();
    let window = env.generate(-(n as i64), n, &mut rng);
    simulate_on_window(spec, window, y0, &mut rng)
}

/// `reps` independent forward runs of `n` steps from `y0`; run `r` uses
/// `stream.child(r)`, so the result does not depend on the thread count.
pub fn simulate_ensemble(
    spec: &ChainSpec,
    env: &EnvironmentSpec,
    y0: &[f64],
    n: usize,
    reps: usize,
    stream: RngStream,
) -> Result<Vec<Trajectory>> {
    (0..reps).into_par_iter().map(|r| simulate_forward(spec, env, y0, n, stream.child(r as u64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear(slope: f64, noise: NoiseLaw) -> ChainSpec {
        let dynamics = FnDynamics::new(1, noise, move |y, _x, e, out| out[0] = slope * y[0] + e[0]);
        ChainSpec::new("linear", Arc::new(dynamics), Metric::Euclidean, ContractionParams::new(slope.abs(), 0.0).unwrap())
    }

    #[test]
    fn constants_worked_example() {
        let c = derive_constants(ContractionParams::new(0.5, 1.0).unwrap(), 2.5).unwrap();
        assert_eq!(c.rho_prime, 0.75);
        assert_eq!(c.r_prime, 4.0);
        assert_eq!(c.block, 8);
        assert_eq!(c.k_star(100), 6);
    }

    #[test]
    fn constants_reject_bad_inputs() {
        assert!(derive_constants(ContractionParams { rho: 0.5, r: 0.0 }, 1.0).is_err());
        assert!(derive_constants(ContractionParams { rho: 1.0, r: 1.0 }, 1.0).is_err());
        assert!(derive_constants(ContractionParams { rho: 0.5, r: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn attempt_schedule() {
        let c = derive_constants(ContractionParams::new(0.5, 1.0).unwrap(), 2.5).unwrap();
        let t: Vec<usize> = c.attempt_times(100).collect();
        assert_eq!(t, vec![58, 66, 74, 82, 90, 98]);
        assert!(t.iter().all(|&l| l <= 100));
        // n = 2N gives exactly one attempt
        assert_eq!(c.k_star(16), 1);
        assert_eq!(c.k_star(15), 1);
        assert_eq!(c.k_star(14), 0);
    }

    #[test]
    fn assumption_conversions() {
        let u = unilip_form(AssumptionForm::Drift { rho: 0.5, r: 1.0 }).unwrap();
        assert_eq!((u.rho, u.r), (0.75, 4.0));
        let u = unilip_form(AssumptionForm::ConLip { rho: 0.5, r: 1.0, lipschitz: 2.0 }).unwrap();
        assert_eq!((u.rho, u.r), (0.5, 4.0));
        let d = normalize_assumption(AssumptionForm::UniLip { rho: 0.3, r: 2.0 }).unwrap();
        assert_eq!((d.rho, d.r), (0.3, 2.0));
        let d = normalize_assumption(AssumptionForm::ConLip { rho: 0.5, r: 1.0, lipschitz: 2.0 }).unwrap();
        assert_eq!((d.rho, d.r), (0.5, 4.0));
        assert!(normalize_assumption(AssumptionForm::Drift { rho: 1.0, r: 1.0 }).is_err());
        assert!(unilip_form(AssumptionForm::ConLip { rho: 0.5, r: 1.0, lipschitz: 0.5 }).is_err());
    }

    #[test]
    fn zero_steps_returns_start() {
        let spec = linear(0.5, NoiseLaw::gaussian(1));
        let env = EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).unwrap();
        let tr = simulate_forward(&spec, &env, &[3.0], 0, RngStream::new(1, 0)).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.state(0), &[3.0]);
        assert_eq!(tr.env.len(), 0);
    }

    #[test]
    fn pinned_noise_contracts_geometrically() {
        let spec = linear(0.5, NoiseLaw::Degenerate { dim: 1 });
        let env = EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).unwrap();
        let tr = simulate_forward(&spec, &env, &[8.0], 10, RngStream::new(1, 0)).unwrap();
        assert_eq!(tr.len(), 11);
        assert_eq!(tr.env.len() + 1, tr.len());
        for i in 0..=10 {
            assert_relative_eq!(tr.state(i)[0], 8.0 * 0.5f64.powi(i as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_window_is_negative() {
        let spec = linear(0.5, NoiseLaw::gaussian(1));
        let env = EnvironmentSpec::gaussian_ar1(0.3, 1.0).unwrap();
        let tr = simulate_backward(&spec, &env, &[0.0], 1, RngStream::new(2, 0)).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!((tr.env.lo(), tr.env.hi()), (-1, 0));
        assert!(simulate_backward(&spec, &env, &[0.0], 0, RngStream::new(2, 0)).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let dynamics = FnDynamics::new(1, NoiseLaw::gaussian(1), |y, _x, _e, out| out[0] = y[0] * 1e308 * 10.0);
        let spec = ChainSpec::new("blowup", Arc::new(dynamics), Metric::Euclidean, ContractionParams::new(0.5, 1.0).unwrap());
        let err = step(&spec, &[1.0], &[0.0], &mut RngStream::new(0, 0).rng()).unwrap_err();
        match err {
            Error::NumericOverflow { model, state, .. } => {
                assert_eq!(model, "blowup");
                assert_eq!(state, vec![1.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_streams_identical_trajectories() {
        let spec = linear(0.7, NoiseLaw::gaussian(1));
        let env = EnvironmentSpec::gaussian_ar1(0.5, 1.0).unwrap();
        let a = simulate_forward(&spec, &env, &[1.0], 200, RngStream::new(9, 4)).unwrap();
        let b = simulate_forward(&spec, &env, &[1.0], 200, RngStream::new(9, 4)).unwrap();
        assert_eq!(a, b);
        let c = simulate_forward(&spec, &env, &[1.0], 200, RngStream::new(9, 5)).unwrap();
        assert_ne!(a, c);
    }
}
