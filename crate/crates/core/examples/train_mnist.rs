//! Trains a 784-200-10 sigmoid network on a stratified MNIST subset and saves
//! it together with the datasets it was trained and tested on.
//!
//! scripts/fetch_mnist.sh
//! cargo run --release --example train_mnist -- [mnist dir] [subset] [epochs] [out dir]

use std::path::PathBuf;

use ccs::data::{load_mnist, save_dataset, subset};
use ccs::nn::{accuracy, save_network, train_with, Activation, Network, TrainConfig};

fn main() -> ccs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map_or("data/mnist", String::as_str));
    let n: usize = args.get(1).map_or(Ok(5000), |s| s.parse()).expect("subset size");
    let epochs: usize = args.get(2).map_or(Ok(10), |s| s.parse()).expect("epoch count");
    let out = PathBuf::from(args.get(3).map_or("runs/example", String::as_str));

    let train_set = subset(&load_mnist(&dir, true)?, n, 0)?;
    let test_set = subset(&load_mnist(&dir, false)?, 2000, 1)?;
    println!("train {} images, class counts {:?}", train_set.len(), train_set.class_counts());

    let init = Network::mlp(784, &[200], 10, Activation::Sigmoid, 0)?;
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let net = train_with(&init, &train_set, &cfg, |stats, net| {
        let acc = accuracy(net, &test_set).expect("matching dimensions");
        println!("epoch {:>3}  loss {:.4}  test acc {:.2}%", stats.epoch, stats.train_loss, 100.0 * acc);
    })?;

    std::fs::create_dir_all(&out)?;
    save_network(&net, out.join("model.nnc"))?;
    save_dataset(&train_set, out.join("train.dsb"))?;
    save_dataset(&test_set, out.join("test.dsb"))?;
    println!("{} ({} parameters) written to {}", net.describe(), net.parameter_count(), out.display());
    Ok(())
}
