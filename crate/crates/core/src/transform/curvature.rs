//! Curvature constants `c` that make `f + c|x|^2` convex and `f - c|x|^2`
//! concave. For networks the extreme Hessian eigenvalues are collected at
//! every anchor; in one dimension `f''` is scanned on a grid. Either way
//! `c = (1 + SAFETY_MARGIN) * max(|min|, |max|)`.

use ndarray::{s, ArrayView2};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::nn::{HessianBatch, Network};
use crate::spectral::{extreme_eigenvalues_batch, EigenOptions, Spectrum};

/// Relative head-room on `c`, since anchors only sample the Hessian.
pub const SAFETY_MARGIN: f64 = 1e-3;

/// Anchors whose Hessians share each batched product.
const ANCHOR_BLOCK: usize = 32;

pub fn c_from_extremes(min: f64, max: f64) -> f64 {
    (1.0 + SAFETY_MARGIN) * min.abs().max(max.abs())
}

/// Extreme Hessian eigenvalues over a set of anchors, per output.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianExtremes {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub anchors: usize,
}

impl HessianExtremes {
    pub fn c(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(&lo, &hi)| c_from_extremes(lo, hi)).collect()
    }
}

/// Smallest and largest eigenvalue of `∇²f_k` over all anchor rows, for each
/// output in `outputs`.
pub fn hessian_extremes(
    net: &Network,
    anchors: ArrayView2<f64>,
    outputs: &[usize],
    opts: &EigenOptions,
) -> Result<HessianExtremes> {
    check_len(net.input_dim(), anchors.ncols())?;
    if anchors.nrows() == 0 {
        return Err(Error::arg("curvature estimation needs at least one anchor"));
    }
    if let Some(&k) = outputs.iter().find(|&&k| k >= net.output_dim()) {
        return Err(Error::Index { index: k, len: net.output_dim() });
    }
    let n = anchors.nrows();
    let blocks: Vec<Vec<Spectrum>> = (0..n)
        .into_par_iter()
        .step_by(ANCHOR_BLOCK)
        .map(|start| {
            let block = anchors.slice(s![start..(start + ANCHOR_BLOCK).min(n), ..]);
            let op = HessianBatch::new(net, block, outputs)?;
            extreme_eigenvalues_batch(&op, opts)
        })
        .collect::<Result<_>>()?;
    let mut min = vec![f64::INFINITY; outputs.len()];
    let mut max = vec![f64::NEG_INFINITY; outputs.len()];
    // pairs are point-major within each block
    for spectra in &blocks {
        for (p, sp) in spectra.iter().enumerate() {
            let j = p % outputs.len().max(1);
            min[j] = min[j].min(sp.min);
            max[j] = max[j].max(sp.max);
        }
    }
    Ok(HessianExtremes { min, max, anchors: anchors.nrows() })
}

/// `c` for output `k` from the Hessian spectra at `anchors`.
pub fn estimate_c(net: &Network, anchors: ArrayView2<f64>, k: usize) -> Result<f64> {
    if k >= net.output_dim() {
        return Err(Error::Index { index: k, len: net.output_dim() });
    }
    let ext = hessian_extremes(net, anchors, &[k], &EigenOptions::default())?;
    Ok(c_from_extremes(ext.min[0], ext.max[0]))
}

/// `c` for every output, with the extremes it was derived from.
pub fn estimate_c_all(net: &Network, anchors: ArrayView2<f64>, opts: &EigenOptions) -> Result<HessianExtremes> {
    let outputs: Vec<usize> = (0..net.output_dim()).collect();
    hessian_extremes(net, anchors, &outputs, opts)
}

#[derive(Clone, Debug, PartialEq)]
pub enum AuditStatus {
    /// `min eigenvalue >= -c[k]` at every checked anchor, for every output.
    Verified,
    /// Outputs whose most negative eigenvalue falls below `-c[k]`.
    Violated(Vec<usize>),
    /// Piecewise-linear networks have no usable Hessian; nothing was checked.
    Unverified,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureAudit {
    pub status: AuditStatus,
    pub anchors_checked: usize,
    /// Most negative eigenvalue seen per output (empty when unverified).
    pub min_eigenvalue: Vec<f64>,
}

impl CurvatureAudit {
    pub fn label(&self) -> &'static str {
        match self.status {
            AuditStatus::Verified => "verified",
            AuditStatus::Violated(_) => "violated",
            AuditStatus::Unverified => "unverified",
        }
    }
}

/// Checks `λ_min(∇²f_k(x)) >= -c[k]` over `anchors`.
pub fn audit_c(net: &Network, anchors: ArrayView2<f64>, c: &[f64], opts: &EigenOptions) -> Result<CurvatureAudit> {
    check_len(net.output_dim(), c.len())?;
    if net.is_piecewise_linear() {
        return Ok(CurvatureAudit { status: AuditStatus::Unverified, anchors_checked: 0, min_eigenvalue: vec![] });
    }
    let ext = estimate_c_all(net, anchors, opts)?;
    audit_extremes(&ext, c)
}

/// The audit of [`audit_c`] from extremes that were already computed.
pub fn audit_extremes(ext: &HessianExtremes, c: &[f64]) -> Result<CurvatureAudit> {
    check_len(ext.min.len(), c.len())?;
    let violated: Vec<usize> = (0..c.len()).filter(|&k| ext.min[k] < -c[k]).collect();
    let status = if violated.is_empty() { AuditStatus::Verified } else { AuditStatus::Violated(violated) };
    Ok(CurvatureAudit { status, anchors_checked: ext.anchors, min_eigenvalue: ext.min.clone() })
}

/// `c` for a scalar function from its second derivative on a uniform grid of
/// `grid_points` over `[lo, hi]`.
pub fn c_from_second_derivative_1d(
    f_second: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    grid_points: usize,
) -> Result<f64> {
    if grid_points < 2 {
        return Err(Error::arg("need at least two grid points"));
    }
    if !(lo < hi) {
        return Err(Error::arg(format!("empty domain [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut peak: f64 = 0.0;
    for i in 0..grid_points {
        let x = if i + 1 == grid_points { hi } else { lo + step * i as f64 };
        let v = f_second(x);
        if !v.is_finite() {
            return Err(Error::numeric(format!("f''({x}) is not finite")));
        }
        peak = peak.max(v.abs());
    }
    Ok((1.0 + SAFETY_MARGIN) * peak)
}
