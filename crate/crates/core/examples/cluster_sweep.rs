//! Compresses the planes of a CCS model with k-means and reports test
//! accuracy against the number of clusters per output.
//!
//! cargo run --release --example transform
//! cargo run --release --example cluster_sweep -- [run dir] [K list]

use std::path::PathBuf;

use ccs::cluster::{sweep_k, write_sweep_summary, ClusterConfig};
use ccs::data::load_dataset;
use ccs::transform::{ccs_accuracy, load_ccs};

fn main() -> ccs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let run = PathBuf::from(args.first().map_or("runs/example", String::as_str));
    let ks: Vec<usize> = args
        .get(1)
        .map_or("1,10,100", String::as_str)
        .split(',')
        .map(|k| k.parse().expect("cluster count"))
        .collect();
    let model = load_ccs(run.join("model.ccs"))?;
    let test = load_dataset(run.join("test.dsb"))?;
    println!("unreduced: {:?} planes, test accuracy {:.2}%", model.support_counts()[0], 100.0 * ccs_accuracy(&model, &test)?);

    let cfg = ClusterConfig { restarts: 5, ..ClusterConfig::default() };
    let sweep = sweep_k(&model, &test, &ks, &cfg)?;
    for r in &sweep.runs {
        println!("K {:>5} restart {} accuracy {:.2}% inertia {:.4e}", r.k, r.restart, 100.0 * r.accuracy, r.inertia);
    }
    write_sweep_summary(&sweep.summary, std::io::stdout())?;
    for red in &sweep.best {
        let sizes = &red.outputs[0].sizes;
        println!("best reduction to {} planes: output 0 cluster sizes {:?}", sizes.len(), &sizes[..sizes.len().min(10)]);
    }
    Ok(())
}
