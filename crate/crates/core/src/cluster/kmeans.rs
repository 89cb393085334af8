use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterConfig {
    pub k: usize,
    /// Independent seedings; the lowest-inertia run is kept.
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop once the relative inertia decrease falls below this.
    pub tolerance: f64,
    /// Standardise descriptor columns before clustering (plane reduction only).
    pub normalize: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { k: 10, restarts: 10, max_iters: 300, seed: 0, tolerance: 1e-6, normalize: false }
    }
}

impl ClusterConfig {
    pub fn with_k(k: usize) -> Self {
        ClusterConfig { k, ..Default::default() }
    }

    fn validate(&self, n_points: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::arg("restarts must be at least 1"));
        }
        if self.k > n_points {
            return Err(Error::arg(format!("k = {} exceeds the {n_points} points", self.k)));
        }
        Ok(())
    }
}

/// One Lloyd run.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansRun {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub best: KMeansRun,
    pub best_restart: usize,
    pub restart_inertias: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding, best of `cfg.restarts` runs.
pub fn kmeans(points: ArrayView2<f64>, cfg: &ClusterConfig) -> Result<KMeansResult> {
    let runs = kmeans_runs(points, cfg)?;
    let restart_inertias: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let mut best_restart = 0;
    for (i, &v) in restart_inertias.iter().enumerate() {
        if v < restart_inertias[best_restart] {
            best_restart = i;
        }
    }
    let best = runs.into_iter().nth(best_restart).expect("at least one restart");
    Ok(KMeansResult { best, best_restart, restart_inertias })
}

/// Every restart's run; restart `r` is seeded from `derive_seed(cfg.seed, r)`.
pub fn kmeans_runs(points: ArrayView2<f64>, cfg: &ClusterConfig) -> Result<Vec<KMeansRun>> {
    cfg.validate(points.nrows())?;
    let mut rngs: Vec<rng::Rng> =
        (0..cfg.restarts).map(|r| rng::seeded(rng::derive_seed(cfg.seed, r as u64))).collect();
    let seeds = kmeans_plus_plus(points, cfg.k, &mut rngs);
    Ok(seeds.into_par_iter().map(|s| lloyd(points, cfg, &s)).collect())
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => sq_dist_slice(a, b),
        _ => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

/// Eight independent lanes so the loop vectorises; lanes are summed in a
/// fixed order.
fn sq_dist_slice(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// D^2-weighted seeding, one centre set per generator. The generators advance
/// in lockstep so that each pass over the points serves all of them. Falls
/// back to the lowest unused index once every remaining point coincides with
/// a chosen centre.
pub(crate) fn kmeans_plus_plus(points: ArrayView2<f64>, k: usize, rngs: &mut [rng::Rng]) -> Vec<Vec<usize>> {
    let n = points.nrows();
    let runs = rngs.len();
    let mut chosen = vec![Vec::with_capacity(k); runs];
    let mut used = vec![vec![false; n]; runs];
    let point_sq: Vec<f64> = points.axis_iter(Axis(0)).map(|p| p.dot(&p)).collect();
    // d2[i * runs + j]: squared distance of point i to the nearest centre of run j
    let mut d2 = vec![f64::INFINITY; n * runs];
    for step in 0..k {
        let mut fresh = Vec::with_capacity(runs);
        for (j, rng) in rngs.iter_mut().enumerate() {
            let next = if step == 0 { rng.random_range(0..n) } else { sample_d2(d2.iter().skip(j).step_by(runs), &used[j], rng) };
            chosen[j].push(next);
            used[j][next] = true;
            fresh.push(next);
        }
        if step + 1 == k {
            break;
        }
        let centres = points.select(Axis(0), &fresh);
        let cross = points.dot(&centres.t());
        d2.par_chunks_mut(runs).enumerate().for_each(|(i, row)| {
            for (j, &c) in fresh.iter().enumerate() {
                let nd = if i == c { 0.0 } else { (point_sq[i] - 2.0 * cross[[i, j]] + point_sq[c]).max(0.0) };
                if nd < row[j] {
                    row[j] = nd;
                }
            }
        });
    }
    chosen
}

fn sample_d2<'a>(d2: impl Iterator<Item = &'a f64> + Clone, used: &[bool], rng: &mut rng::Rng) -> usize {
    let total: f64 = d2.clone().sum();
    if total > 0.0 {
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.enumerate() {
            if d <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < d {
                break;
            }
            target -= d;
        }
        pick.expect("positive total has a positive entry")
    } else {
        used.iter().position(|&u| !u).expect("k <= n")
    }
}

/// Nearest centroid per point (lowest index on ties) using
/// `|p|^2 - 2 p·c + |c|^2`.
pub(crate) fn assign(points: ArrayView2<f64>, centroids: ArrayView2<f64>, point_sq: &Array1<f64>) -> Vec<usize> {
    let c_sq: Array1<f64> = centroids.axis_iter(Axis(0)).map(|c| c.dot(&c)).collect();
    const CHUNK: usize = 1024;
    let n = points.nrows();
    let parts: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .step_by(CHUNK)
        .map(|start| {
            let end = (start + CHUNK).min(n);
            let cross = points.slice(s![start..end, ..]).dot(&centroids.t());
            cross
                .axis_iter(Axis(0))
                .enumerate()
                .map(|(r, row)| {
                    let psq = point_sq[start + r];
                    let mut best = (f64::INFINITY, 0usize);
                    for (j, &x) in row.iter().enumerate() {
                        let d = psq - 2.0 * x + c_sq[j];
                        if d < best.0 {
                            best = (d, j);
                        }
                    }
                    best.1
                })
                .collect()
        })
        .collect();
    parts.concat()
}

fn inertia_of(points: ArrayView2<f64>, centroids: ArrayView2<f64>, assignments: &[usize]) -> f64 {
    assignments.iter().enumerate().map(|(i, &a)| sq_dist(points.row(i), centroids.row(a))).sum()
}

fn lloyd(points: ArrayView2<f64>, cfg: &ClusterConfig, seeds: &[usize]) -> KMeansRun {
    let mut centroids = points.select(Axis(0), seeds);
    let point_sq: Array1<f64> = points.axis_iter(Axis(0)).map(|p| p.dot(&p)).collect();
    let mut history = Vec::new();
    let mut assignments: Vec<usize> = Vec::new();
    let mut iter = 0;
    loop {
        let next = assign(points, centroids.view(), &point_sq);
        let inertia = inertia_of(points, centroids.view(), &next);
        let unchanged = next == assignments;
        assignments = next;
        let converged = match history.last() {
            _ if inertia == 0.0 || unchanged => true,
            Some(&prev) => (prev - inertia) <= cfg.tolerance * prev,
            None => false,
        };
        history.push(inertia);
        iter += 1;
        if converged || iter >= cfg.max_iters.max(1) {
            break;
        }
        update_centroids(points, &assignments, &mut centroids);
    }
    let inertia = *history.last().expect("one iteration");
    KMeansRun { centroids, assignments, inertia, history }
}

/// Means of the assigned points; an empty cluster takes the point farthest
/// from its current centroid.
fn update_centroids(points: ArrayView2<f64>, assignments: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        let mut row = sums.row_mut(a);
        row += &points.row(i);
        counts[a] += 1;
    }
    let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    let old = if empty.is_empty() { None } else { Some(centroids.clone()) };
    for j in 0..k {
        if counts[j] > 0 {
            let n = counts[j] as f64;
            centroids.row_mut(j).assign(&sums.row(j).mapv(|v| v / n));
        }
    }
    if let Some(old) = old {
        let mut far: Vec<(f64, usize)> = assignments
            .iter()
            .enumerate()
            .map(|(i, &a)| (sq_dist(points.row(i), old.row(a)), i))
            .collect();
        // farthest first, lower index on ties
        far.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for (j, &(_, i)) in empty.iter().zip(&far) {
            centroids.row_mut(*j).assign(&points.row(i));
        }
    }
}
