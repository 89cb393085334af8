use std::io::Write;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis};

use super::kmeans::{kmeans, kmeans_runs, ClusterConfig, KMeansRun};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::transform::{ccs_accuracy, CcsModel, SupportSet};

/// Rows `[gradient ; offset ; anchor]`, one per plane of output `k`.
pub fn plane_descriptors(model: &CcsModel, k: usize) -> Result<Array2<f64>> {
    let set = model.outputs().get(k).ok_or(Error::Index { index: k, len: model.output_dim() })?;
    let d = model.input_dim();
    let mut desc = Array2::zeros((set.len(), 2 * d + 1));
    desc.slice_mut(s![.., ..d]).assign(set.gradients());
    desc.column_mut(d).assign(set.offsets());
    desc.slice_mut(s![.., d + 1..]).assign(&**set.anchors());
    Ok(desc)
}

fn column_scales(desc: &Array2<f64>) -> Array1<f64> {
    desc.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 })
}

/// Splits centroid rows back into a support set.
fn centroids_to_supports(centroids: &Array2<f64>, d: usize) -> Result<SupportSet> {
    let gradients = centroids.slice(s![.., ..d]).to_owned();
    let offsets = centroids.column(d).to_owned();
    let anchors = centroids.slice(s![.., d + 1..]).to_owned();
    let values = &offsets + &(&gradients * &anchors).sum_axis(Axis(1));
    SupportSet::with_offsets(Arc::new(anchors), values, gradients, offsets)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputClusters {
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    pub inertia: f64,
    pub best_restart: usize,
    pub restart_inertias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ClusterReduction {
    pub model: CcsModel,
    pub outputs: Vec<OutputClusters>,
}

impl ClusterReduction {
    /// Sum of the per-output inertias.
    pub fn inertia(&self) -> f64 {
        self.outputs.iter().map(|o| o.inertia).sum()
    }
}

/// Descriptors as clustered: standardised when `normalize` is set, with the
/// column scales needed to map centroids back.
fn clustering_space(desc: &Array2<f64>, normalize: bool) -> (Option<Array2<f64>>, Option<Array1<f64>>) {
    if normalize {
        let scale = column_scales(desc);
        (Some(desc / &scale), Some(scale))
    } else {
        (None, None)
    }
}

fn summarize(run: &KMeansRun, scale: Option<&Array1<f64>>, d: usize, k: usize) -> Result<(SupportSet, Vec<usize>)> {
    let centroids = match scale {
        Some(s) => &run.centroids * s,
        None => run.centroids.clone(),
    };
    let mut sizes = vec![0; k];
    for &a in &run.assignments {
        sizes[a] += 1;
    }
    Ok((centroids_to_supports(&centroids, d)?, sizes))
}

fn cluster_output(desc: &Array2<f64>, d: usize, cfg: &ClusterConfig) -> Result<(SupportSet, OutputClusters)> {
    let (scaled, scale) = clustering_space(desc, cfg.normalize);
    let result = kmeans(scaled.as_ref().unwrap_or(desc).view(), cfg)?;
    let (set, sizes) = summarize(&result.best, scale.as_ref(), d, cfg.k)?;
    let info = OutputClusters {
        assignments: result.best.assignments,
        sizes,
        inertia: result.best.inertia,
        best_restart: result.best_restart,
        restart_inertias: result.restart_inertias,
    };
    Ok((set, info))
}

fn output_config(cfg: &ClusterConfig, k: usize) -> ClusterConfig {
    ClusterConfig { seed: rng::derive_seed(cfg.seed, k as u64), ..cfg.clone() }
}

/// Clusters the planes of output `k` alone, exactly as [`reduce_ccs`] does.
pub fn reduce_output(model: &CcsModel, k: usize, cfg: &ClusterConfig) -> Result<(SupportSet, OutputClusters)> {
    let desc = plane_descriptors(model, k)?;
    cluster_output(&desc, model.input_dim(), &output_config(cfg, k))
}

/// Replaces each output's planes by `cfg.k` cluster centroids, keeping `c`.
/// Output `k` is clustered with seed `derive_seed(cfg.seed, k)`.
pub fn reduce_ccs(model: &CcsModel, cfg: &ClusterConfig) -> Result<ClusterReduction> {
    let mut sets = Vec::with_capacity(model.output_dim());
    let mut outputs = Vec::with_capacity(model.output_dim());
    for k in 0..model.output_dim() {
        let (set, info) = reduce_output(model, k, cfg)?;
        sets.push(set);
        outputs.push(info);
    }
    Ok(ClusterReduction { model: CcsModel::new(model.c().to_vec(), sets)?, outputs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub k: usize,
    pub restart: usize,
    pub accuracy: f64,
    pub inertia: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub k: usize,
    pub mean_acc: f64,
    /// Population standard deviation over restarts.
    pub std_acc: f64,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SweepSummary>,
    /// Per `k`, the restart with the lowest total inertia (lowest restart on ties).
    pub best: Vec<ClusterReduction>,
}

/// For each `k`, `cfg.restarts` independent single-seeding reductions scored
/// on `data`. Restart `r` of cluster count `k` is restart `r` of
/// `reduce_ccs` run with seed `derive_seed(cfg.seed, k)`.
pub fn sweep_k(model: &CcsModel, data: &Dataset, ks: &[usize], cfg: &ClusterConfig) -> Result<Sweep> {
    if ks.is_empty() {
        return Err(Error::arg("no cluster counts to sweep"));
    }
    let d = model.input_dim();
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    let mut best = Vec::new();
    for &k in ks {
        let k_cfg = ClusterConfig { k, seed: rng::derive_seed(cfg.seed, k as u64), ..cfg.clone() };
        // per restart: one support set and cluster record per output
        let mut sets: Vec<Vec<SupportSet>> = vec![Vec::new(); cfg.restarts];
        let mut infos: Vec<Vec<OutputClusters>> = vec![Vec::new(); cfg.restarts];
        for out in 0..model.output_dim() {
            let desc = plane_descriptors(model, out)?;
            let (scaled, scale) = clustering_space(&desc, cfg.normalize);
            let out_cfg = output_config(&k_cfg, out);
            let out_runs = kmeans_runs(scaled.as_ref().unwrap_or(&desc).view(), &out_cfg)?;
            let inertias: Vec<f64> = out_runs.iter().map(|r| r.inertia).collect();
            for (r, run) in out_runs.into_iter().enumerate() {
                let (set, sizes) = summarize(&run, scale.as_ref(), d, k)?;
                sets[r].push(set);
                infos[r].push(OutputClusters {
                    assignments: run.assignments,
                    sizes,
                    inertia: run.inertia,
                    best_restart: r,
                    restart_inertias: inertias.clone(),
                });
            }
        }
        let mut reductions = Vec::with_capacity(cfg.restarts);
        for (r, (s, o)) in sets.into_iter().zip(infos).enumerate() {
            let red = ClusterReduction { model: CcsModel::new(model.c().to_vec(), s)?, outputs: o };
            runs.push(SweepRun { k, restart: r, accuracy: ccs_accuracy(&red.model, data)?, inertia: red.inertia() });
            reductions.push(red);
        }
        let batch = &runs[runs.len() - reductions.len()..];
        let n = batch.len() as f64;
        let mean = batch.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let var = batch.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / n;
        summary.push(SweepSummary { k, mean_acc: mean, std_acc: var.sqrt() });
        let mut top = 0;
        for (i, r) in batch.iter().enumerate() {
            if r.inertia < batch[top].inertia {
                top = i;
            }
        }
        best.push(reductions.swap_remove(top));
    }
    Ok(Sweep { runs, summary, best })
}

pub fn write_sweep_runs(runs: &[SweepRun], mut w: impl Write) -> Result<()> {
    writeln!(w, "k,restart,accuracy,inertia")?;
    for r in runs {
        writeln!(w, "{},{},{},{}", r.k, r.restart, r.accuracy, r.inertia)?;
    }
    Ok(())
}

pub fn write_sweep_summary(summary: &[SweepSummary], mut w: impl Write) -> Result<()> {
    writeln!(w, "k,mean_acc,std_acc")?;
    for r in summary {
        writeln!(w, "{},{},{}", r.k, r.mean_acc, r.std_acc)?;
    }
    Ok(())
}
