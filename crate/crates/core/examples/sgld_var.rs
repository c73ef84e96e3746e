//! SGLD estimate of value-at-risk and conditional value-at-risk on standard
//! normal losses, compared with the closed forms.
//!
//! `cargo run --release --example sgld_var`

use mcre::env::EnvironmentSpec;
use mcre::models::{run_sgld_risk, SgldVarModel};
use mcre::rng::RngStream;

fn main() -> mcre::error::Result<()> {
    let model = SgldVarModel::new(1e-3, 1e-2, 0.95)?;
    let env = EnvironmentSpec::iid_gaussian(1, 0.0, 1.0)?;
    let checkpoints = [10_000, 50_000, 200_000];
    let rows = run_sgld_risk(model, &env, 0.0, 200_000, &checkpoints, RngStream::new(7, 0))?;
    for r in rows {
        println!("step {:>7}  VaR {:.4}  CVaR {:.4}", r.step, r.estimate.var, r.estimate.cvar);
    }
    println!("exact      VaR 1.6449  CVaR 2.0627");
    Ok(())
}
