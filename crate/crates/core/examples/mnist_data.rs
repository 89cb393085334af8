//! Loads the MNIST IDX files, draws a class-stratified subset and round-trips
//! it through the binary dataset cache.
//!
//! scripts/fetch_mnist.sh
//! cargo run --release --example mnist_data -- [mnist dir] [subset]

use std::path::PathBuf;

use ccs::data::{load_mnist, read_dataset, subset, write_dataset};

fn main() -> ccs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map_or("data/mnist", String::as_str));
    let n: usize = args.get(1).map_or(Ok(1000), |s| s.parse()).expect("subset size");

    let train = load_mnist(&dir, true)?;
    let test = load_mnist(&dir, false)?;
    println!("train {} x {}, test {} x {}, {} classes", train.len(), train.input_dim(), test.len(), test.input_dim(), train.n_classes());
    println!("train class counts {:?}", train.class_counts());

    let sub = subset(&train, n, 0)?;
    println!("subset of {n}: class counts {:?}", sub.class_counts());

    let mut buf = Vec::new();
    write_dataset(&sub, &mut buf)?;
    let back = read_dataset(buf.as_slice())?;
    println!("cache size {} bytes, round trip identical: {}", buf.len(), back.inputs() == sub.inputs() && back.labels() == sub.labels());

    let img = sub.input(0);
    println!("first image, label {}:", sub.labels()[0]);
    for row in 0..28 {
        let line: String = (0..28).map(|c| if img[row * 28 + c] > 0.2 { '#' } else if img[row * 28 + c] > -0.3 { '+' } else { ' ' }).collect();
        println!("  {line}");
    }
    Ok(())
}
