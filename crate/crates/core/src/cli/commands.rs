use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{Arch, ClusterArgs, Demo, Demo1dArgs, EvalArgs, FeaturesArgs, TrainArgs, TransformArgs};
use crate::cluster::{self, ClusterConfig};
use crate::data::{self, Dataset};
use crate::error::{check_len, Error, Result};
use crate::features::{self, Selection};
use crate::nn::{self, sigmoid, Network, TrainConfig};
use crate::rng::derive_seed;
use crate::spectral::EigenOptions;
use crate::transform::{self, Curvature1D, CCS_MAGIC};

fn provenance(cmd: &str, pairs: &[(&str, String)]) -> String {
    let mut line = format!("# ccs {cmd}");
    for (k, v) in pairs {
        let _ = write!(line, " {k}={v}");
    }
    line
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

fn maybe_subset(data: Dataset, n: Option<usize>, seed: u64) -> Result<Dataset> {
    match n {
        Some(n) => data::subset(&data, n, seed),
        None => Ok(data),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let arch: Arch = a.arch.parse()?;
    let train_set = maybe_subset(data::load_any(&a.data, true)?, a.subset, a.seed)?;
    let test_path = a.test_data.clone().or_else(|| a.data.is_dir().then(|| a.data.clone()));
    let test_set = match &test_path {
        Some(p) => Some(maybe_subset(data::load_any(p, false)?, a.test_subset, derive_seed(a.seed, 1))?),
        None => None,
    };
    let dim = train_set.input_dim();
    if let Some(t) = &test_set {
        check_len(dim, t.input_dim())?;
    }
    let outputs = train_set.n_classes().max(test_set.as_ref().map_or(0, |t| t.n_classes()));
    let net = match &arch {
        Arch::Mlp(hidden) => Network::mlp(dim, hidden, outputs, a.activation, a.seed)?,
        Arch::Cnn { hidden } => {
            let (w, h) = features::square_raster(dim)?;
            Network::cnn(h, w, *hidden, outputs, a.activation, a.seed)?
        }
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        dropout: a.dropout,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: derive_seed(a.seed, 2),
    };
    let mut metrics = provenance(
        "train",
        &[
            ("arch", a.arch.clone()),
            ("activation", a.activation.name().to_string()),
            ("train_samples", train_set.len().to_string()),
            ("test_samples", test_set.as_ref().map_or(0, |t| t.len()).to_string()),
            ("epochs", a.epochs.to_string()),
            ("lr", a.lr.to_string()),
            ("momentum", a.momentum.to_string()),
            ("dropout", a.dropout.to_string()),
            ("batch_size", a.batch_size.to_string()),
            ("seed", a.seed.to_string()),
        ],
    );
    metrics.push_str("\nepoch,train_loss,test_acc\n");
    let trained = nn::train_with(&net, &train_set, &cfg, |stats, net| {
        let acc = match &test_set {
            Some(t) => nn::accuracy(net, t).expect("dimensions checked").to_string(),
            None => String::new(),
        };
        let _ = writeln!(metrics, "{},{},{acc}", stats.epoch, stats.train_loss);
        eprintln!("epoch {:>4}  loss {:.6}  test_acc {acc}", stats.epoch, stats.train_loss);
    })?;
    fs::create_dir_all(&a.out)?;
    nn::save_network(&trained, a.out.join("model.nnc"))?;
    fs::write(a.out.join("metrics.csv"), metrics)?;
    data::save_dataset(&train_set, a.out.join("train.dsb"))?;
    if let Some(t) = &test_set {
        data::save_dataset(t, a.out.join("test.dsb"))?;
    }
    println!("network     {}", trained.describe());
    println!("parameters  {}", trained.parameter_count());
    println!("train_acc   {}", nn::accuracy(&trained, &train_set)?);
    if let Some(t) = &test_set {
        println!("test_acc    {}", nn::accuracy(&trained, t)?);
    }
    println!("wrote       {}", path(&a.out));
    Ok(())
}

fn file_magic(p: &Path) -> Result<[u8; 4]> {
    let mut magic = [0u8; 4];
    fs::File::open(p)?.read_exact(&mut magic)?;
    Ok(magic)
}

pub fn transform(a: &TransformArgs) -> Result<()> {
    let net = nn::load_network(&a.model)?;
    let anchors = maybe_subset(data::load_any(&a.anchors, true)?, a.subset, a.seed)?;
    check_len(net.input_dim(), anchors.input_dim())?;
    let opts = EigenOptions { tolerance: a.eigen_tol, ..EigenOptions::default() };
    let sample = |n: Option<usize>, stream: u64| maybe_subset(anchors.clone(), n, derive_seed(a.seed, stream));

    let mut extremes = None;
    let (c, source) = if let Some(c) = a.c {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Usage(format!("--c {c} must be a finite value >= 0")));
        }
        (vec![c; net.output_dim()], format!("uniform --c {c}"))
    } else if let Some(p) = &a.borrow_c {
        if &file_magic(p)? == CCS_MAGIC {
            let donor = transform::load_ccs(p)?;
            check_len(net.output_dim(), donor.output_dim())?;
            (donor.c().to_vec(), format!("borrowed from CCS model {}", path(p)))
        } else {
            let donor = nn::load_network(p)?;
            check_len(net.input_dim(), donor.input_dim())?;
            check_len(net.output_dim(), donor.output_dim())?;
            if donor.is_piecewise_linear() {
                return Err(Error::arg(format!("--borrow-c network {} is piecewise linear", path(p))));
            }
            let rows = sample(a.c_sample, 1)?;
            let ext = transform::estimate_c_all(&donor, rows.inputs(), &opts)?;
            (ext.c(), format!("estimated on network {} over {} anchors", path(p), rows.len()))
        }
    } else if net.is_piecewise_linear() {
        return Err(Error::arg(
            "a piecewise-linear network has no curvature to estimate c from; \
             supply a uniform value with --c (e.g. --c 5) or copy c with --borrow-c \
             from a smooth-activation network or CCS model trained on the same task",
        ));
    } else {
        let rows = sample(a.c_sample, 1)?;
        let ext = transform::estimate_c_all(&net, rows.inputs(), &opts)?;
        let c = ext.c();
        let source = format!("estimated over {} anchors", rows.len());
        extremes = Some((ext, a.c_sample.is_none()));
        (c, source)
    };

    let audit = if net.is_piecewise_linear() {
        None
    } else {
        Some(match (&extremes, a.audit_sample) {
            (Some((ext, true)), None) => transform::audit_extremes(ext, &c)?,
            _ => {
                let rows = sample(a.audit_sample, 2)?;
                transform::audit_c(&net, rows.inputs(), &c, &opts)?
            }
        })
    };

    let model = transform::sample_planes(&net, anchors.inputs(), &c)?;
    transform::save_ccs(&model, &a.out)?;

    let mut card = String::new();
    let _ = writeln!(card, "ccs model card");
    let _ = writeln!(card, "network     {}", net.describe());
    let _ = writeln!(card, "input_dim   {}", model.input_dim());
    let _ = writeln!(card, "output_dim  {}", model.output_dim());
    let _ = writeln!(card, "planes      {} per output", anchors.len());
    let _ = writeln!(card, "c_source    {source}");
    let _ = writeln!(card, "seed        {}", a.seed);
    let _ = writeln!(card, "output c min_eigenvalue max_eigenvalue");
    for (k, ck) in c.iter().enumerate() {
        let (lo, hi) = match &extremes {
            Some((e, _)) => (e.min[k].to_string(), e.max[k].to_string()),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(card, "{k} {ck} {lo} {hi}");
    }
    match &audit {
        None => {
            let _ = writeln!(card, "audit       unverified (piecewise-linear activations)");
        }
        Some(au) => {
            let _ = writeln!(card, "audit       {} on {} anchors", au.label(), au.anchors_checked);
            if let transform::AuditStatus::Violated(ks) = &au.status {
                let _ = writeln!(card, "violations  outputs {ks:?}");
            }
        }
    }
    let report = a.report.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".txt");
        PathBuf::from(p)
    });
    fs::write(&report, &card)?;
    print!("{card}");
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let net = nn::load_network(&a.model)?;
    let model = transform::load_ccs(&a.ccs)?;
    check_len(net.input_dim(), model.input_dim())?;
    check_len(net.output_dim(), model.output_dim())?;
    let mut splits = vec![("train", data::load_any(&a.anchors, true)?)];
    if let Some(t) = &a.test {
        splits.push(("test", maybe_subset(data::load_any(t, false)?, a.test_subset, a.seed)?));
    }
    let mut csv = provenance(
        "eval",
        &[
            ("model", path(&a.model)),
            ("ccs", path(&a.ccs)),
            ("test_subset", opt(&a.test_subset)),
            ("seed", a.seed.to_string()),
        ],
    );
    csv.push_str("\nsplit,net_acc,ccs_acc,delta\n");
    for (name, set) in &splits {
        check_len(net.input_dim(), set.input_dim())?;
        let net_acc = nn::accuracy(&net, set)?;
        let ccs_acc = transform::ccs_accuracy(&model, set)?;
        let _ = writeln!(csv, "{name},{net_acc},{ccs_acc},{}", ccs_acc - net_acc);
    }
    write_out(a.out.as_deref(), &csv)
}

pub fn cluster(a: &ClusterArgs) -> Result<()> {
    let model = transform::load_ccs(&a.ccs)?;
    let data = maybe_subset(data::load_any(&a.data, false)?, a.subset, a.seed)?;
    check_len(model.input_dim(), data.input_dim())?;
    let cfg = ClusterConfig {
        k: 1,
        restarts: a.restarts,
        max_iters: a.max_iters,
        seed: a.seed,
        tolerance: a.tolerance,
        normalize: a.normalize,
    };
    let sweep = cluster::sweep_k(&model, &data, &a.ks, &cfg)?;
    let ks: Vec<String> = a.ks.iter().map(|k| k.to_string()).collect();
    let head = provenance(
        "cluster",
        &[
            ("ccs", path(&a.ccs)),
            ("ks", ks.join(",")),
            ("restarts", a.restarts.to_string()),
            ("max_iters", a.max_iters.to_string()),
            ("tolerance", a.tolerance.to_string()),
            ("normalize", a.normalize.to_string()),
            ("eval_samples", data.len().to_string()),
            ("seed", a.seed.to_string()),
        ],
    );
    fs::create_dir_all(&a.out)?;
    let mut runs = format!("{head}\n").into_bytes();
    cluster::write_sweep_runs(&sweep.runs, &mut runs)?;
    fs::write(a.out.join("sweep_runs.csv"), runs)?;
    let mut summary = format!("{head}\n").into_bytes();
    cluster::write_sweep_summary(&sweep.summary, &mut summary)?;
    fs::write(a.out.join("sweep_summary.csv"), summary)?;
    for (k, red) in a.ks.iter().zip(&sweep.best) {
        transform::save_ccs(&red.model, a.out.join(format!("reduced_k{k}.ccs")))?;
    }
    println!("k mean_acc std_acc");
    for s in &sweep.summary {
        println!("{} {:.4} {:.4}", s.k, s.mean_acc, s.std_acc);
    }
    println!("wrote {}", path(&a.out));
    Ok(())
}

pub fn features(a: &FeaturesArgs) -> Result<()> {
    let model = transform::load_ccs(&a.ccs)?;
    let raster = match (a.width, a.height) {
        (Some(w), Some(h)) => (w, h),
        (None, None) => features::square_raster(model.input_dim())?,
        _ => return Err(Error::Usage("--width and --height must be given together".into())),
    };
    let set = match a.k {
        Some(k) => {
            let cfg = ClusterConfig { k, restarts: a.restarts, seed: a.seed, ..ClusterConfig::default() };
            cluster::reduce_output(&model, a.class, &cfg)?.0
        }
        None => model
            .outputs()
            .get(a.class)
            .ok_or(Error::Index { index: a.class, len: model.output_dim() })?
            .clone(),
    };
    let selection = match a.select.as_str() {
        "all" => Selection::All,
        n => Selection::Random {
            count: n.parse().map_err(|_| Error::Usage(format!("--select expects 'all' or a count, got '{n}'")))?,
            seed: derive_seed(a.seed, 1),
        },
    };
    let maps = features::support_features(&set, a.class, raster, selection)?;
    let scale = a.global_norm.then(|| features::global_scale(&maps));
    fs::create_dir_all(&a.out)?;
    for m in &maps {
        features::export_pgm_scaled(m, scale, a.out.join(m.file_name()))?;
    }
    if a.csv {
        let mut buf = provenance(
            "features",
            &[
                ("ccs", path(&a.ccs)),
                ("class", a.class.to_string()),
                ("k", opt(&a.k)),
                ("restarts", a.restarts.to_string()),
                ("select", a.select.clone()),
                ("seed", a.seed.to_string()),
            ],
        )
        .into_bytes();
        buf.push(b'\n');
        features::write_features_csv(&maps, &mut buf)?;
        fs::write(a.out.join("features.csv"), buf)?;
    }
    println!("wrote {} maps ({}x{}) to {}", maps.len(), raster.0, raster.1, path(&a.out));
    Ok(())
}

pub fn demo1d(a: &Demo1dArgs) -> Result<()> {
    let mixture = match a.kind {
        Demo::Mixture => Some(transform::gaussian_mixture_1d(a.components, a.seed)?),
        _ => None,
    };
    type F<'a> = Box<dyn Fn(f64) -> f64 + 'a>;
    let (f, df, d2f, (lo, hi), source_params): (F, F, F, _, usize) = match (&a.kind, &mixture) {
        (Demo::Gaussian, _) => (
            Box::new(|x: f64| (-0.5 * x * x).exp()),
            Box::new(|x: f64| -x * (-0.5 * x * x).exp()),
            Box::new(|x: f64| (x * x - 1.0) * (-0.5 * x * x).exp()),
            (-3.0, 3.0),
            0,
        ),
        (Demo::Sigmoid, _) => (
            Box::new(sigmoid),
            Box::new(|x: f64| sigmoid(x) * (1.0 - sigmoid(x))),
            Box::new(|x: f64| {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }),
            (-6.0, 6.0),
            0,
        ),
        (Demo::Mixture, Some(m)) => (
            Box::new(|x| m.value(x)),
            Box::new(|x| m.derivative(x)),
            Box::new(|x| m.second_derivative(x)),
            (-3.0, 3.0),
            m.parameter_count(),
        ),
        (Demo::Mixture, None) => unreachable!(),
    };
    let lo = a.lo.unwrap_or(lo);
    let hi = a.hi.unwrap_or(hi);
    if a.grid < 2 {
        return Err(Error::Usage("--grid must be at least 2".into()));
    }
    let ccs = transform::build_ccs_1d(&*f, Some(&*df), Curvature1D::SecondDerivative(&*d2f), lo, hi, a.planes)?;
    let err = transform::max_grid_error(&ccs, &*f, a.grid);
    let kind = format!("{:?}", a.kind).to_lowercase();
    let mut csv = provenance(
        "demo1d",
        &[
            ("kind", kind.clone()),
            ("planes", a.planes.to_string()),
            ("components", if mixture.is_some() { a.components.to_string() } else { "none".into() }),
            ("grid", a.grid.to_string()),
            ("lo", lo.to_string()),
            ("hi", hi.to_string()),
            ("seed", a.seed.to_string()),
            ("c", ccs.c.to_string()),
            ("max_abs_error", err.max_abs.to_string()),
            ("at", err.at.to_string()),
        ],
    );
    csv.push_str("\nx,f,convex,concave,ccs,error\n");
    for x in transform::uniform_grid(lo, hi, a.grid) {
        let fx = f(x);
        let v = ccs.eval(x);
        let _ = writeln!(csv, "{x},{fx},{},{},{v},{}", ccs.convex(x), ccs.concave(x), (v - fx).abs());
    }
    write_out(a.out.as_deref(), &csv)?;
    let mut summary = format!(
        "{kind}: {} planes on [{lo}, {hi}], c = {}, max |error| = {:e} at x = {}\n",
        a.planes, ccs.c, err.max_abs, err.at
    );
    if source_params > 0 {
        let _ = writeln!(summary, "parameters: source {source_params}, spline {}", ccs.parameter_count());
    }
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}
