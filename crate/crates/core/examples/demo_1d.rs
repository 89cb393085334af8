//! One-dimensional convex-concave splines: a Gaussian bump, a sigmoid and a
//! random 400-component Gaussian mixture, each with uniformly placed planes.
//!
//! cargo run --release --example demo_1d

use ccs::nn::sigmoid;
use ccs::transform::{build_ccs_1d, gaussian_mixture_1d, max_grid_error, Curvature1D};

fn report(name: &str, f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, d2f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) {
    for planes in [10, 30, 100, 300, 600] {
        let ccs = build_ccs_1d(f, Some(df), Curvature1D::SecondDerivative(d2f), lo, hi, planes).unwrap();
        let err = max_grid_error(&ccs, f, 10_000);
        println!("{name:>8} {planes:>4} planes  c = {:<10.4e} max |error| = {:.3e} at x = {:.4}", ccs.c, err.max_abs, err.at);
    }
}

fn main() {
    let gauss = |x: f64| (-0.5 * x * x).exp();
    report("gaussian", &gauss, &|x| -x * gauss(x), &|x| (x * x - 1.0) * gauss(x), -3.0, 3.0);

    let ds = |x: f64| sigmoid(x) * (1.0 - sigmoid(x));
    let d2s = |x: f64| ds(x) * (1.0 - 2.0 * sigmoid(x));
    report("sigmoid", &sigmoid, &ds, &d2s, -6.0, 6.0);

    let mix = gaussian_mixture_1d(400, 0).unwrap();
    report("mixture", &|x| mix.value(x), &|x| mix.derivative(x), &|x| mix.second_derivative(x), -3.0, 3.0);

    // a coarse spline tabulated at the integers
    let ccs = build_ccs_1d(&sigmoid, Some(&ds), Curvature1D::SecondDerivative(&d2s), -6.0, 6.0, 5).unwrap();
    println!("\nsigmoid with 5 planes:");
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "x", "f", "convex", "concave", "ccs");
    for i in 0..=12 {
        let x = -6.0 + i as f64;
        println!("{x:>6.1} {:>9.5} {:>9.5} {:>9.5} {:>9.5}", sigmoid(x), ccs.convex(x), ccs.concave(x), ccs.eval(x));
    }
}
