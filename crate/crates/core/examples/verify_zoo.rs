//! Monte Carlo certification of the contraction and minorization assumptions
//! for every zoo model, plus the rejection of a non-contractive model.
//!
//! `cargo run --release --example verify_zoo`

use mcre::env::EnvironmentSpec;
use mcre::models::{self, adversarial, SupportAnchor};
use mcre::rng::RngStream;
use mcre::verify::{check_contractivity, check_minorization, check_support, InputSampler};

fn main() -> mcre::error::Result<()> {
    let trials = 100_000;
    for (i, zoo) in models::zoo()?.into_iter().enumerate() {
        let root = RngStream::new(1, i as u64);
        let c = check_contractivity(&zoo.chain, &zoo.env, &InputSampler::default(), trials, root.child(0))?;
        let xs = zoo.env.generate(0, 1, &mut root.child(1).rng());
        let x = xs.get(0).unwrap();
        let y1 = zoo.chain.reference.clone();
        let mut y2 = y1.clone();
        let mut e1 = vec![0.0; y1.len()];
        e1[0] = 1.0;
        y2[0] += 0.9 * zoo.minor.pair_radius / zoo.chain.metric.norm(&e1);
        let m = check_minorization(&zoo.chain, &zoo.minor, x, &y1, &y2, trials, root.child(2))?;
        let s = check_support(&zoo.minor, x, &y1, &y2, trials, SupportAnchor::DriftImage, root.child(3))?;
        println!(
            "{:<28} contractivity {}/{trials}  minorization {}  support {}  eta(x) = {:.4}",
            zoo.chain.name,
            c.violations,
            m.violations,
            s.violations,
            zoo.minor.eta(x)
        );
    }
    let adv = adversarial()?;
    let env = EnvironmentSpec::iid_gaussian(1, 0.0, 1.0)?;
    let r = check_contractivity(&adv, &env, &InputSampler::default(), trials, RngStream::new(2, 0))?;
    println!("{:<28} contractivity {}/{trials}  witness {:?}", adv.name, r.violations, r.witness.map(|w| w.to_string()));
    Ok(())
}
