//! Turns a trained network into a CCS model: estimates c at the anchors,
//! samples one plane per anchor and output, and compares the two models.
//!
//! cargo run --release --example train_mnist
//! cargo run --release --example transform -- [run dir]

use std::path::PathBuf;

use ccs::data::load_dataset;
use ccs::nn::{accuracy, load_network};
use ccs::spectral::EigenOptions;
use ccs::transform::{agreement, ccs_accuracy, estimate_c_all, sample_planes, save_ccs};

fn main() -> ccs::Result<()> {
    let run = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/example".into()));
    let net = load_network(run.join("model.nnc"))?;
    let anchors = load_dataset(run.join("train.dsb"))?;
    let test = load_dataset(run.join("test.dsb"))?;

    let t = std::time::Instant::now();
    let ext = estimate_c_all(&net, anchors.inputs(), &EigenOptions::default())?;
    let c = ext.c();
    println!("Hessian extremes over {} anchors ({:.1} s)", ext.anchors, t.elapsed().as_secs_f64());
    for k in 0..c.len() {
        println!("  output {k}: min {:>10.4e}  max {:>10.4e}  c {:.4e}", ext.min[k], ext.max[k], c[k]);
    }

    let model = sample_planes(&net, anchors.inputs(), &c)?;
    save_ccs(&model, run.join("model.ccs"))?;
    println!("planes per output: {}", anchors.len());
    println!("anchor agreement   {:.2}%", 100.0 * agreement(&model, &net, anchors.inputs())?);
    println!("test accuracy      network {:.2}%  ccs {:.2}%", 100.0 * accuracy(&net, &test)?, 100.0 * ccs_accuracy(&model, &test)?);

    let x = anchors.input(0).to_vec();
    let detail = model.eval_detailed(&x)?;
    let f = net.forward(&x)?;
    println!("first anchor, output 0: network {:.6}  ccs {:.6}  convex plane {}  concave plane {}",
        f[0], detail[0].value, detail[0].convex_plane, detail[0].concave_plane);
    Ok(())
}
