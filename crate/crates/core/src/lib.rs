//! Markov chains driven by a stationary random environment,
//! `Y_{n+1} = f(Y_n, X_n, e_{n+1})`.
//!
//! The crate builds the coupling that proves convergence of such chains under
//! a conditional contraction plus a minorization whose strength `eta(x)` may
//! depend on the environment, and measures how fast the coupling closes.
//!
//! * [`chain`]: chain specifications, derived coupling constants, simulation.
//! * [`env`]: stationary environments (i.i.d., AR(1), linear processes, replay).
//! * [`verify`]: Monte Carlo checks of the contraction and minorization.
//! * [`coupling`]: the one-step coupling and campaigns of coupled runs with
//!   their analytic failure bounds.
//! * [`estimate`]: total variation, alpha-mixing and moment curves, and
//!   least-squares fits against geometric, Bernstein-type, stretched and
//!   polynomial decay templates.
//! * [`models`]: the model zoo, SGLD for value-at-risk, and norm construction
//!   for stable matrices.
//! * [`cli`]: the config-driven `mcre` runner.
//!
//! ```
//! use mcre::chain::derive_constants;
//! use mcre::coupling::{coupling_campaign, Direction};
//! use mcre::models;
//! use mcre::rng::RngStream;
//!
//! let m = models::additive_gaussian().unwrap();
//! let c = derive_constants(m.chain.contraction, m.minor.k).unwrap();
//! let rows = coupling_campaign(&m.chain, &m.minor, &m.env, (&[-5.0], &[5.0]), &[100], 500, Direction::Forward, RngStream::new(0, 0)).unwrap();
//! assert!(rows[0].failure_rate <= 1.0);
//! assert_eq!(c.k_star(100), 50 / c.block);
//! ```

// NaN must fail parameter validation, so `!(x > 0.0)` is intended throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod chain;
pub mod cli;
pub mod coupling;
pub mod env;
pub mod error;
pub mod estimate;
pub mod metric;
pub mod models;
pub mod noise;
pub mod rng;
pub mod stats;
pub mod verify;
