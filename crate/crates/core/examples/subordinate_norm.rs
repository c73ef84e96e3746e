//! Construction of a norm in which a matrix with spectral radius below one is
//! a strict contraction.
//!
//! `cargo run --release --example subordinate_norm`

use mcre::models::multivar::spectral_radius;
use mcre::models::subordinate_norm;
use nalgebra::DMatrix;

fn main() -> mcre::error::Result<()> {
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
    let euclid = a.clone().singular_values().max();
    let n = subordinate_norm(&a)?;
    println!("spectral radius {:.4}", spectral_radius(&a));
    println!("euclidean operator norm {:.4}", euclid);
    println!("constructed norm {:.4}", n.value);
    println!("check via operator norm {:.4}", n.norm.operator_norm(&a));
    Ok(())
}
