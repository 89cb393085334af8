//! Extreme Hessian eigenvalues of a network output, matrix-free, compared
//! with the spectrum of the explicitly assembled Hessian.
//!
//! cargo run --release --example spectral

use ccs::nn::{hvp, Activation, HessianOperator, Network};
use ccs::spectral::{extreme_eigenvalues, DenseOperator, EigenOptions};
use ccs::transform::c_from_extremes;

fn main() {
    let net = Network::mlp(64, &[100], 10, Activation::Sigmoid, 7).unwrap();
    let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 / 64.0).collect();
    let opts = EigenOptions::default();

    let v: Vec<f64> = (0..64).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let col = hvp(&net, &x, 0, &v).unwrap();
    let head: Vec<String> = col[..4].iter().map(|v| format!("{v:.3e}")).collect();
    println!("first Hessian column of output 0 (4 of 64 entries): {}", head.join(" "));

    println!("{:>6} {:>12} {:>12} {:>6} {:>12} {:>12} {:>10}", "output", "min", "max", "steps", "dense min", "dense max", "c");
    for k in 0..net.output_dim() {
        let op = HessianOperator::new(&net, &x, k).unwrap();
        let sp = extreme_eigenvalues(&op, &opts).unwrap();
        let dense = op.to_dense();
        let full = extreme_eigenvalues(&DenseOperator(&dense), &opts).unwrap();
        println!(
            "{k:>6} {:>12.5e} {:>12.5e} {:>6} {:>12.5e} {:>12.5e} {:>10.4e}",
            sp.min,
            sp.max,
            sp.iterations,
            full.min,
            full.max,
            c_from_extremes(sp.min, sp.max)
        );
    }
}
