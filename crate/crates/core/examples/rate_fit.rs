//! Ranking of the four rate templates on a synthetic stretched-exponential
//! curve.
//!
//! `cargo run --release --example rate_fit`

use mcre::estimate::{compare_templates, DecayCurve};

fn main() -> mcre::error::Result<()> {
    let grid: Vec<usize> = (3..=12).flat_map(|k| [1usize << k, 3 << (k - 1)]).collect();
    let curve = DecayCurve::from_fn(grid, |n| 0.8 * (-0.5 * (n as f64).powf(0.4)).exp())?;
    for f in compare_templates(&curve)? {
        println!(
            "{:<11} score {:>9.2}  rate {:.4}  exponent {}",
            f.template,
            f.score,
            f.rate,
            f.exponent.map_or("-".into(), |g| format!("{g:.4}"))
        );
    }
    Ok(())
}
