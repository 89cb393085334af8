use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::nn::{argmax, Network};

/// One tangent sample of a network output: anchor `x0`, `f_k(x0)` and
/// `∇f_k(x0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSupport {
    pub anchor: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// The supports of one output, stored column-compatible for batched
/// evaluation. Anchors are shared between outputs when they coincide.
#[derive(Clone, Debug)]
pub struct SupportSet {
    anchors: Arc<Array2<f64>>,
    anchor_sq: Arc<Array1<f64>>,
    values: Array1<f64>,
    gradients: Array2<f64>,
    /// `value - gradient · anchor`, the f-part intercept.
    offsets: Array1<f64>,
}

impl SupportSet {
    /// Builds a set from value/gradient samples; intercepts are derived.
    pub fn new(anchors: Arc<Array2<f64>>, values: Array1<f64>, gradients: Array2<f64>) -> Result<Self> {
        let offsets = Array1::from_iter(
            anchors.axis_iter(Axis(0)).zip(gradients.axis_iter(Axis(0))).zip(&values).map(|((a, g), v)| v - dot(g, a)),
        );
        Self::with_offsets(anchors, values, gradients, offsets)
    }

    /// Builds a set whose intercepts are given explicitly.
    pub fn with_offsets(
        anchors: Arc<Array2<f64>>,
        values: Array1<f64>,
        gradients: Array2<f64>,
        offsets: Array1<f64>,
    ) -> Result<Self> {
        if anchors.nrows() == 0 {
            return Err(Error::arg("support set must be non-empty"));
        }
        check_len(anchors.nrows(), values.len())?;
        check_len(anchors.nrows(), offsets.len())?;
        check_len(anchors.nrows(), gradients.nrows())?;
        check_len(anchors.ncols(), gradients.ncols())?;
        let anchor_sq = Arc::new(anchors.axis_iter(Axis(0)).map(|a| dot(a, a)).collect());
        Ok(SupportSet { anchors, anchor_sq, values, gradients, offsets })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn anchors(&self) -> &Arc<Array2<f64>> {
        &self.anchors
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn gradients(&self) -> &Array2<f64> {
        &self.gradients
    }

    pub fn offsets(&self) -> &Array1<f64> {
        &self.offsets
    }

    pub fn support(&self, i: usize) -> SampledSupport {
        SampledSupport {
            anchor: self.anchors.row(i).to_vec(),
            value: self.values[i],
            gradient: self.gradients.row(i).to_vec(),
        }
    }

    fn share_anchors_with(&mut self, other: &SupportSet) {
        if !Arc::ptr_eq(&self.anchors, &other.anchors) && *self.anchors == *other.anchors {
            self.anchors = Arc::clone(&other.anchors);
            self.anchor_sq = Arc::clone(&other.anchor_sq);
        }
    }
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Per-output plane sets with curvature constants `c[k]`.
///
/// Plane `i` of output `k` evaluates, on the convex side, as
/// `offset_i + g_i·x + c_k (2 x0_i·x - |x0_i|^2)` and on the concave side
/// with `-c_k`. The model output is `0.5 (max convex + min concave)`.
#[derive(Clone, Debug)]
pub struct CcsModel {
    input_dim: usize,
    c: Vec<f64>,
    outputs: Vec<SupportSet>,
}

/// Evaluation of one output with the planes that attain the extremes (lowest
/// index on ties).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputEval {
    pub value: f64,
    pub convex: f64,
    pub concave: f64,
    pub convex_plane: usize,
    pub concave_plane: usize,
}

const QUERY_CHUNK: usize = 256;

impl CcsModel {
    pub fn new(c: Vec<f64>, mut outputs: Vec<SupportSet>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::arg("model needs at least one output"));
        }
        check_len(outputs.len(), c.len())?;
        if let Some(bad) = c.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::arg(format!("curvature constant {bad} must be finite and >= 0")));
        }
        let input_dim = outputs[0].anchors.ncols();
        for o in &outputs {
            check_len(input_dim, o.anchors.ncols())?;
        }
        for k in 1..outputs.len() {
            let (head, tail) = outputs.split_at_mut(k);
            tail[0].share_anchors_with(&head[k - 1]);
        }
        Ok(CcsModel { input_dim, c, outputs })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn outputs(&self) -> &[SupportSet] {
        &self.outputs
    }

    pub fn support_counts(&self) -> Vec<usize> {
        self.outputs.iter().map(SupportSet::len).collect()
    }

    /// Same planes, different curvature constants.
    pub fn with_c(&self, c: Vec<f64>) -> Result<Self> {
        CcsModel::new(c, self.outputs.clone())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim, x.len())?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.eval_batch(xs)?.row(0).to_vec())
    }

    /// Outputs for every row of `xs`.
    pub fn eval_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len(self.input_dim, xs.ncols())?;
        let n = xs.nrows();
        let chunks: Vec<Array2<f64>> = (0..n)
            .into_par_iter()
            .step_by(QUERY_CHUNK)
            .map(|start| {
                let end = (start + QUERY_CHUNK).min(n);
                self.eval_chunk(xs.slice(s![start..end, ..]), |e| e.value)
            })
            .collect();
        let mut out = Array2::zeros((n, self.output_dim()));
        for (i, chunk) in chunks.into_iter().enumerate() {
            let start = i * QUERY_CHUNK;
            out.slice_mut(s![start..start + chunk.nrows(), ..]).assign(&chunk);
        }
        Ok(out)
    }

    /// Per-output value, envelope values and attaining planes.
    pub fn eval_detailed(&self, x: &[f64]) -> Result<Vec<OutputEval>> {
        check_len(self.input_dim, x.len())?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let mut out = Vec::with_capacity(self.output_dim());
        self.for_each_eval(xs, |_, _, e| out.push(e));
        Ok(out)
    }

    fn eval_chunk(&self, xs: ArrayView2<f64>, pick: impl Fn(&OutputEval) -> f64) -> Array2<f64> {
        let mut out = Array2::zeros((xs.nrows(), self.output_dim()));
        self.for_each_eval(xs, |q, k, e| out[[q, k]] = pick(&e));
        out
    }

    fn for_each_eval(&self, xs: ArrayView2<f64>, mut sink: impl FnMut(usize, usize, OutputEval)) {
        let mut quad: Option<(&Arc<Array2<f64>>, Array2<f64>)> = None;
        for (k, set) in self.outputs.iter().enumerate() {
            // f-part: offset + g · x
            let mut fpart = xs.dot(&set.gradients.t());
            fpart += &set.offsets;
            // quadratic part: 2 x0 · x - |x0|^2, shared by outputs with the same anchors
            let reuse = matches!(&quad, Some((a, _)) if Arc::ptr_eq(a, &set.anchors));
            if !reuse {
                let mut p = xs.dot(&set.anchors.t());
                for mut row in p.axis_iter_mut(Axis(0)) {
                    row.zip_mut_with(&*set.anchor_sq, |v, &sq| *v = 2.0 * *v - sq);
                }
                quad = Some((&set.anchors, p));
            }
            let p = &quad.as_ref().unwrap().1;
            let c = self.c[k];
            for (q, (f_row, p_row)) in fpart.axis_iter(Axis(0)).zip(p.axis_iter(Axis(0))).enumerate() {
                let mut best = (f64::NEG_INFINITY, 0usize);
                let mut worst = (f64::INFINITY, 0usize);
                for (i, (&f, &pq)) in f_row.iter().zip(p_row.iter()).enumerate() {
                    let convex = f + c * pq;
                    let concave = f - c * pq;
                    if convex > best.0 {
                        best = (convex, i);
                    }
                    if concave < worst.0 {
                        worst = (concave, i);
                    }
                }
                sink(
                    q,
                    k,
                    OutputEval {
                        value: 0.5 * (best.0 + worst.0),
                        convex: best.0,
                        concave: worst.0,
                        convex_plane: best.1,
                        concave_plane: worst.1,
                    },
                );
            }
        }
    }

    /// Argmax class per row (lowest index on ties).
    pub fn predict_batch(&self, xs: ArrayView2<f64>) -> Result<Vec<usize>> {
        let out = self.eval_batch(xs)?;
        Ok(out.axis_iter(Axis(0)).map(|r| argmax(r.as_slice().unwrap())).collect())
    }
}

/// Samples one support per anchor row and output: `(x0, f_k(x0), ∇f_k(x0))`.
/// Every output shares the same anchor matrix.
pub fn sample_planes(net: &Network, anchors: ArrayView2<f64>, c: &[f64]) -> Result<CcsModel> {
    check_len(net.input_dim(), anchors.ncols())?;
    check_len(net.output_dim(), c.len())?;
    if anchors.nrows() == 0 {
        return Err(Error::arg("no anchors to sample"));
    }
    let n = anchors.nrows();
    let outs = net.output_dim();
    let mut values = Array2::zeros((n, outs));
    let mut grads: Vec<Array2<f64>> = (0..outs).map(|_| Array2::zeros((n, net.input_dim()))).collect();
    const CHUNK: usize = 512;
    let parts: Vec<(Array2<f64>, Vec<Array2<f64>>)> = (0..n)
        .into_par_iter()
        .step_by(CHUNK)
        .map(|start| {
            let end = (start + CHUNK).min(n);
            crate::nn::jacobian_rows(net, anchors.slice(s![start..end, ..]))
        })
        .collect::<Result<_>>()?;
    for (i, (logits, g)) in parts.into_iter().enumerate() {
        let start = i * CHUNK;
        let end = start + logits.nrows();
        values.slice_mut(s![start..end, ..]).assign(&logits);
        for (dst, src) in grads.iter_mut().zip(g) {
            dst.slice_mut(s![start..end, ..]).assign(&src);
        }
    }
    let shared = Arc::new(anchors.to_owned());
    let sets = grads
        .into_iter()
        .enumerate()
        .map(|(k, g)| SupportSet::new(Arc::clone(&shared), values.column(k).to_owned(), g))
        .collect::<Result<Vec<_>>>()?;
    CcsModel::new(c.to_vec(), sets)
}

pub fn eval_ccs(model: &CcsModel, x: &[f64]) -> Result<Vec<f64>> {
    model.eval(x)
}

/// Fraction of rows whose CCS argmax equals the label.
pub fn ccs_accuracy(model: &CcsModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let preds = model.predict_batch(data.inputs())?;
    Ok(preds.iter().zip(data.labels()).filter(|(p, l)| p == l).count() as f64 / data.len() as f64)
}

/// Fraction of rows on which the CCS and the network predict the same class.
pub fn agreement(model: &CcsModel, net: &Network, xs: ArrayView2<f64>) -> Result<f64> {
    if xs.nrows() == 0 {
        return Ok(1.0);
    }
    let a = model.predict_batch(xs)?;
    let b = net.predict_batch(xs)?;
    Ok(a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / xs.nrows() as f64)
}
