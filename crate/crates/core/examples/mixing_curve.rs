//! Alpha-mixing estimates of a Gaussian AR(1) environment and a geometric
//! fit of their decay.
//!
//! `cargo run --release --example mixing_curve`

use mcre::env::EnvironmentSpec;
use mcre::estimate::{mixing_curve, rate_fit, EventClass, RateTemplate};
use mcre::rng::RngStream;

fn main() -> mcre::error::Result<()> {
    let phi = 0.8;
    let env = EnvironmentSpec::gaussian_ar1(phi, (1.0f64 - phi * phi).sqrt())?;
    let ensemble: Vec<Vec<f64>> = (0..60).map(|i| env.generate(0, 3000, &mut RngStream::new(5, i).rng()).component(0)).collect();
    let lags: Vec<usize> = (1..=30).collect();
    let (curve, raw) = mixing_curve(&ensemble, &lags, &EventClass::default(), RngStream::new(6, 0))?;
    for m in raw.iter().step_by(3) {
        println!(
            "lag {:>3}  alpha_hat {:.4}  null {:.4}  excess {:.4} (se {:.4})",
            m.lag,
            m.alpha_hat,
            m.null_mean,
            m.excess(),
            m.std_error
        );
    }
    let fit = rate_fit(&curve, RateTemplate::Geometric)?;
    println!("geometric fit: lambda = {:.4} (phi = {phi})", fit.rate);
    Ok(())
}
