//! Coupling failure probability of the SGLD chain against the analytic bound
//! `(1 - eta)^{k*(n)}` plus the initial-distance term.
//!
//! `cargo run --release --example coupling_bound`

use mcre::chain::derive_constants;
use mcre::coupling::{coupling_campaign, Direction};
use mcre::models;
use mcre::rng::RngStream;

fn main() -> mcre::error::Result<()> {
    let m = models::sgld_var()?;
    let c = derive_constants(m.chain.contraction, m.minor.k)?;
    println!("rho' = {:.4}, R' = {:.4}, N = {}", c.rho_prime, c.r_prime, c.block);
    let horizons = [100, 200, 400, 800, 1600];
    let rows = coupling_campaign(
        &m.chain,
        &m.minor,
        &m.env,
        (&[-1.0], &[1.0]),
        &horizons,
        5000,
        Direction::Forward,
        RngStream::new(3, 0),
    )?;
    println!("{:>6} {:>5} {:>10} {:>10}", "n", "k*", "failure", "bound");
    for r in rows {
        println!("{:>6} {:>5} {:>10.4} {:>10.4}", r.n, c.k_star(r.n), r.failure_rate, r.mean_bound);
    }
    Ok(())
}
