mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccs::data::{save_dataset, Dataset};
use ccs::nn::{load_network, Activation, Network};
use common::*;
use ndarray::Array2;
use rand::Rng;

fn ccs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccs")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ccs(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Three classes of 4x4 images: a bright row, column or diagonal plus noise.
fn toy(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut xs = Array2::zeros((n, 16));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        for p in 0..16 {
            let (y, x) = (p / 4, p % 4);
            let on = match c {
                0 => y == 1,
                1 => x == 2,
                _ => x == y,
            };
            xs[[i, p]] = if on { 0.8 } else { 0.1 } + r.random_range(0.0..0.2);
        }
        labels.push(c);
    }
    Dataset::new(xs, labels, 3).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&toy(90, 1), dir.path().join("train.dsb")).unwrap();
        save_dataset(&toy(30, 2), dir.path().join("test.dsb")).unwrap();
        Fixture { dir }
    }

    fn p(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }
}

fn pipeline(fx: &Fixture, run: &str) -> PathBuf {
    let out = fx.dir.path().join(run);
    let o = |name: &str| out.join(name).to_string_lossy().into_owned();
    let (train, test) = (fx.p("train.dsb"), fx.p("test.dsb"));
    ok(&["train", "--arch", "8x1", "--data", &train, "--test-data", &test, "--epochs", "5", "--seed", "3", "--out", &o("net")]);
    let model = o("net/model.nnc");
    ok(&["transform", "--model", &model, "--anchors", &train, "--seed", "3", "--out", &o("model.ccs")]);
    ok(&["eval", "--model", &model, "--ccs", &o("model.ccs"), "--anchors", &train, "--test", &test, "--out", &o("eval.csv")]);
    ok(&["cluster", "--ccs", &o("model.ccs"), "--data", &test, "--ks", "2,5", "--restarts", "3", "--seed", "4", "--out", &o("sweep")]);
    ok(&["features", "--ccs", &o("model.ccs"), "--class", "1", "--k", "4", "--csv", "--seed", "5", "--out", &o("maps")]);
    ok(&["demo1d", "mixture", "--components", "20", "--planes", "50", "--grid", "200", "--seed", "6", "--out", &o("demo.csv")]);
    out
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut all = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                all.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    all.sort();
    all
}

#[test]
fn reruns_with_the_same_seeds_are_byte_identical() {
    let fx = Fixture::new();
    let a = pipeline(&fx, "a");
    let b = pipeline(&fx, "b");
    let names = files(&a);
    assert_eq!(names, files(&b));
    for want in ["net/model.nnc", "net/metrics.csv", "model.ccs", "model.ccs.txt", "eval.csv", "sweep/sweep_runs.csv",
        "sweep/sweep_summary.csv", "sweep/reduced_k2.ccs", "sweep/reduced_k5.ccs", "maps/feat_out1_cluster0.pgm",
        "maps/features.csv", "demo.csv"]
    {
        assert!(names.contains(&PathBuf::from(want)), "missing {want}");
    }
    for n in &names {
        let (x, y) = (std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap());
        // paths differ between the two runs and appear only in provenance lines and the card
        let strip = |bytes: &[u8]| String::from_utf8_lossy(bytes).replace("/a/", "/").replace("/b/", "/");
        if n.extension().is_some_and(|e| e == "csv" || e == "txt") {
            assert_eq!(strip(&x), strip(&y), "{}", n.display());
        } else {
            assert!(x == y, "{} differs", n.display());
        }
    }
}

#[test]
fn csv_outputs_open_with_provenance() {
    let fx = Fixture::new();
    let out = pipeline(&fx, "run");
    for (name, header) in [
        ("net/metrics.csv", "epoch,train_loss,test_acc"),
        ("eval.csv", "split,net_acc,ccs_acc,delta"),
        ("sweep/sweep_runs.csv", "k,restart,accuracy,inertia"),
        ("sweep/sweep_summary.csv", "k,mean_acc,std_acc"),
        ("maps/features.csv", "output,cluster,pixel,value"),
        ("demo.csv", "x,f,convex,concave,ccs,error"),
    ] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# ccs "), "{name}");
        assert!(text.contains("seed="), "{name}");
        assert_eq!(lines.next().unwrap(), header, "{name}");
    }
    let runs = std::fs::read_to_string(out.join("sweep/sweep_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2 + 2 * 3);
    let maps = files(&out.join("maps")).into_iter().filter(|p| p.extension().is_some_and(|e| e == "pgm")).count();
    assert_eq!(maps, 4);
}

#[test]
fn zero_epochs_writes_the_initial_network() {
    let fx = Fixture::new();
    let out = fx.p("init");
    ok(&["train", "--arch", "8x1", "--data", &fx.p("train.dsb"), "--epochs", "0", "--seed", "9", "--out", &out]);
    let saved = load_network(Path::new(&out).join("model.nnc")).unwrap();
    assert_eq!(saved, Network::mlp(16, &[8], 3, Activation::Sigmoid, 9).unwrap());
}

#[test]
fn linear_network_with_zero_curvature_is_exact() {
    let fx = Fixture::new();
    let net = fx.p("lin");
    let train = fx.p("train.dsb");
    let test = fx.p("test.dsb");
    ok(&["train", "--arch", "linear", "--data", &train, "--epochs", "3", "--out", &net]);
    let model = format!("{net}/model.nnc");
    let ccs_path = fx.p("lin.ccs");
    ok(&["transform", "--model", &model, "--anchors", &train, "--c", "0", "--out", &ccs_path]);
    let out = ok(&["eval", "--model", &model, "--ccs", &ccs_path, "--anchors", &train, "--test", &test]);
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], cols[2], "{line}");
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    assert_eq!(ccs(&["--help"]).status.code(), Some(0));
    assert_eq!(ccs(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(ccs(&["demo1d", "gaussian", "--grid", "1"]).status.code(), Some(1));
    assert_eq!(ccs(&["train", "--arch", "3y3", "--data", &fx.p("train.dsb"), "--out", &fx.p("x")]).status.code(), Some(1));
    let missing = ccs(&["eval", "--model", &fx.p("none.nnc"), "--ccs", &fx.p("none.ccs"), "--anchors", &fx.p("train.dsb")]);
    assert_eq!(missing.status.code(), Some(2));
    std::fs::write(fx.p("junk.nnc"), b"not a network").unwrap();
    let junk = ccs(&["transform", "--model", &fx.p("junk.nnc"), "--anchors", &fx.p("train.dsb"), "--out", &fx.p("j.ccs")]);
    assert_eq!(junk.status.code(), Some(2));
}

#[test]
fn relu_transform_requires_an_explicit_c() {
    let fx = Fixture::new();
    let net = fx.p("relu");
    let train = fx.p("train.dsb");
    ok(&["train", "--arch", "8x1", "--activation", "relu", "--data", &train, "--epochs", "2", "--out", &net]);
    let model = format!("{net}/model.nnc");
    let out = ccs(&["transform", "--model", &model, "--anchors", &train, "--out", &fx.p("r.ccs")]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("--c") && msg.contains("--borrow-c"), "{msg}");
    ok(&["transform", "--model", &model, "--anchors", &train, "--c", "5", "--out", &fx.p("r.ccs")]);
    let card = std::fs::read_to_string(fx.p("r.ccs.txt")).unwrap();
    assert!(card.contains("unverified"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let fx = Fixture::new();
    let cfg = fx.p("run.cfg");
    std::fs::write(&cfg, "# toy run\narch = 4x1\nepochs = 2\nbatch_size = 16\n").unwrap();
    let train = fx.p("train.dsb");
    ok(&["--config", &cfg, "train", "--data", &train, "--epochs", "1", "--out", &fx.p("c")]);
    let metrics = std::fs::read_to_string(fx.p("c/metrics.csv")).unwrap();
    let head = metrics.lines().next().unwrap();
    assert!(head.contains("arch=4x1") && head.contains("epochs=1") && head.contains("batch_size=16"), "{head}");
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn gaussian_demo_meets_its_error_bound() {
    let out = ok(&["demo1d", "gaussian"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let head = csv.lines().next().unwrap();
    let err: f64 = head.split(' ').find_map(|kv| kv.strip_prefix("max_abs_error=")).unwrap().parse().unwrap();
    assert!(err <= 1e-3, "{err}");
    assert_eq!(csv.lines().count(), 2 + 10_000);
}
