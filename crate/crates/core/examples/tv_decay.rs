//! Histogram total-variation distance between the laws of the additive
//! Gaussian chain started at -20 and +20.
//!
//! `cargo run --release --example tv_decay`

use mcre::estimate::tv::DEFAULT_BINS;
use mcre::estimate::tv_decay_curve;
use mcre::models;
use mcre::rng::RngStream;

fn main() -> mcre::error::Result<()> {
    let m = models::additive_gaussian()?;
    let horizons = [2, 4, 6, 8, 10, 12, 16];
    let curve = tv_decay_curve(
        &m.chain,
        &m.minor,
        &m.env,
        (&[-20.0], &[20.0]),
        &horizons,
        20_000,
        &[0],
        DEFAULT_BINS,
        RngStream::new(4, 0),
    )?;
    for p in curve.points() {
        println!("n = {:>4}  tv = {:.4} +- {:.4}", p.index, p.estimate, p.std_error);
    }
    Ok(())
}
