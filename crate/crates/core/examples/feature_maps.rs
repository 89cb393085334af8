//! Clusters the planes of one output and writes the gradient of every
//! cluster centre as a PGM image (mid-grey is zero, light positive).
//!
//! cargo run --release --example transform
//! cargo run --release --example feature_maps -- [run dir] [class] [K]

use std::path::PathBuf;

use ccs::cluster::{reduce_output, ClusterConfig};
use ccs::features::{export_pgm_scaled, global_scale, square_raster, support_features, Selection};
use ccs::transform::load_ccs;

fn main() -> ccs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let run = PathBuf::from(args.first().map_or("runs/example", String::as_str));
    let class: usize = args.get(1).map_or(Ok(0), |s| s.parse()).expect("class index");
    let k: usize = args.get(2).map_or(Ok(10), |s| s.parse()).expect("cluster count");

    let model = load_ccs(run.join("model.ccs"))?;
    let (set, clusters) = reduce_output(&model, class, &ClusterConfig::with_k(k))?;
    let maps = support_features(&set, class, square_raster(model.input_dim())?, Selection::All)?;

    let out = run.join(format!("features_class{class}"));
    std::fs::create_dir_all(&out)?;
    let shared = global_scale(&maps);
    for (m, size) in maps.iter().zip(&clusters.sizes) {
        export_pgm_scaled(m, None, out.join(m.file_name()))?;
        export_pgm_scaled(m, Some(shared), out.join(format!("shared_{}", m.file_name())))?;
        println!("{}  {size:>5} planes  max |g| {:.4}", m.file_name(), m.max_abs());
    }
    println!("wrote {} maps to {}", maps.len(), out.display());
    Ok(())
}
