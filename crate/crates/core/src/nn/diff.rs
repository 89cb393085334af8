//! Input gradients and exact Hessian-vector products.
//!
//! Gradients are plain reverse mode. Hessian-vector products are the
//! directional derivative of that reverse sweep (forward-over-reverse): a
//! tangent is pushed forward through the layers, then the adjoint recursion
//! is differentiated along it. The primal pass, adjoints and activation
//! derivatives at the expansion points are cached in [`HessianBatch`], so
//! each product costs one tangent-forward and one tangent-backward sweep, and
//! many points share each matrix product.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::layer::Routing;
use super::{Activation, Network};
use crate::error::{check_len, Error, Result};
use crate::spectral::{BatchOperator, LinearOperator};

/// Primal pass over a batch of rows, keeping what reverse sweeps need.
pub struct ForwardTrace<'a> {
    net: &'a Network,
    pre: Vec<Array2<f64>>,
    routing: Vec<Option<Routing>>,
    logits: Array2<f64>,
}

impl<'a> ForwardTrace<'a> {
    pub fn new(net: &'a Network, xs: ArrayView2<f64>) -> Result<Self> {
        check_len(net.input_dim(), xs.ncols())?;
        let mut pre = Vec::with_capacity(net.layers().len());
        let mut routing = Vec::with_capacity(net.layers().len());
        let mut a = xs.to_owned();
        for layer in net.layers() {
            let (z, r) = layer.affine(a.view());
            let act = layer.activation;
            a = if act == Activation::Identity { z.clone() } else { z.mapv(|v| act.apply(v)) };
            pre.push(z);
            routing.push(r);
        }
        Ok(ForwardTrace { net, pre, routing, logits: a })
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    /// Gradient of logit `k` with respect to the input, one row per sample.
    pub fn gradient(&self, k: usize) -> Result<Array2<f64>> {
        let out = self.net.output_dim();
        if k >= out {
            return Err(Error::Index { index: k, len: out });
        }
        let mut adj = Array2::zeros(self.logits.raw_dim());
        adj.column_mut(k).fill(1.0);
        for (l, layer) in self.net.layers().iter().enumerate().rev() {
            let act = layer.activation;
            if act != Activation::Identity {
                Zip::from(&mut adj).and(&self.pre[l]).for_each(|g, &z| *g *= act.derivative(z));
            }
            adj = layer.transpose(adj.view(), self.routing[l].as_ref());
        }
        Ok(adj)
    }
}

/// `∇f_k(x)` by reverse mode.
pub fn input_gradient(net: &Network, x: &[f64], k: usize) -> Result<Vec<f64>> {
    check_len(net.input_dim(), x.len())?;
    let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let g = ForwardTrace::new(net, xs)?.gradient(k)?;
    Ok(g.into_raw_vec_and_offset().0)
}

/// `∇²f_k(x) · v`.
pub fn hvp(net: &Network, x: &[f64], k: usize, v: &[f64]) -> Result<Vec<f64>> {
    let op = HessianOperator::new(net, x, k)?;
    check_len(op.dim(), v.len())?;
    let mut out = vec![0.0; v.len()];
    op.apply(v, &mut out);
    Ok(out)
}

/// Hessians of several `(point, logit)` pairs, one pair per row. Row `r` of
/// a direction matrix is multiplied by the Hessian of pair `r`; a batch of a
/// single pair applies its Hessian to every row.
pub struct HessianBatch<'a> {
    net: &'a Network,
    /// `φ'(z_l)` per layer.
    slope: Vec<Array2<f64>>,
    /// `φ''(z_l) ⊙ adjoint_l` per layer; absent for piecewise-linear layers.
    curvature: Vec<Option<Array2<f64>>>,
    routing: Vec<Option<Routing>>,
    values: Vec<f64>,
    gradients: Array2<f64>,
}

impl<'a> HessianBatch<'a> {
    /// Every row of `xs` paired with every output in `outputs`, point-major:
    /// pair `i * outputs.len() + j` is `(xs[i], outputs[j])`.
    pub fn new(net: &'a Network, xs: ArrayView2<f64>, outputs: &[usize]) -> Result<Self> {
        check_len(net.input_dim(), xs.ncols())?;
        let out = net.output_dim();
        if let Some(&k) = outputs.iter().find(|&&k| k >= out) {
            return Err(Error::Index { index: k, len: out });
        }
        let rows: Vec<usize> = (0..xs.nrows()).flat_map(|i| std::iter::repeat_n(i, outputs.len())).collect();
        let ks: Vec<usize> = (0..xs.nrows()).flat_map(|_| outputs.iter().copied()).collect();
        let expanded = xs.select(Axis(0), &rows);
        let trace = ForwardTrace::new(net, expanded.view())?;
        Ok(Self::from_trace(trace, &ks))
    }

    fn from_trace(trace: ForwardTrace<'a>, ks: &[usize]) -> Self {
        let net = trace.net;
        let layers = net.layers();
        let mut slope = Vec::with_capacity(layers.len());
        let mut curvature = vec![None; layers.len()];
        let mut adj: Array2<f64> = Array2::zeros((ks.len(), net.output_dim()));
        for (r, &k) in ks.iter().enumerate() {
            adj[[r, k]] = 1.0;
        }
        for (l, layer) in layers.iter().enumerate().rev() {
            let act = layer.activation;
            let z = &trace.pre[l];
            if act == Activation::Sigmoid {
                curvature[l] = Some(Zip::from(z).and(&adj).map_collect(|&z, &g| act.second_derivative(z) * g));
            }
            let s = z.mapv(|v| act.derivative(v));
            adj *= &s;
            slope.push(s);
            adj = layer.transpose(adj.view(), trace.routing[l].as_ref());
        }
        slope.reverse();
        let values = ks.iter().enumerate().map(|(r, &k)| trace.logits[[r, k]]).collect();
        HessianBatch { net, slope, curvature, routing: trace.routing, values, gradients: adj }
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `f_k` at each pair's point.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `∇f_k` at each pair's point, one row per pair.
    pub fn gradients(&self) -> &Array2<f64> {
        &self.gradients
    }

    /// The pairs listed in `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> HessianBatch<'a> {
        let layers = self.net.layers();
        HessianBatch {
            net: self.net,
            slope: self.slope.iter().map(|s| s.select(Axis(0), rows)).collect(),
            curvature: self.curvature.iter().map(|c| c.as_ref().map(|c| c.select(Axis(0), rows))).collect(),
            routing: self
                .routing
                .iter()
                .zip(layers)
                .map(|(r, layer)| r.as_ref().map(|r| r.select(rows, layer.output_dim())))
                .collect(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            gradients: self.gradients.select(Axis(0), rows),
        }
    }

    /// Applies each pair's Hessian to the matching row of `vs`.
    pub fn apply_rows(&self, vs: ArrayView2<f64>) -> Array2<f64> {
        let layers = self.net.layers();
        // tangent forward: dz_l
        let mut dz = Vec::with_capacity(layers.len());
        let mut da = vs.to_owned();
        for (l, layer) in layers.iter().enumerate() {
            let z = layer.linear(da.view(), self.routing[l].as_ref());
            da = &z * &self.slope[l];
            dz.push(z);
        }
        // differentiated adjoint sweep; the output adjoint is constant
        let mut dadj: Option<Array2<f64>> = None;
        for (l, layer) in layers.iter().enumerate().rev() {
            let mut dzbar = match dadj.take() {
                Some(d) => &d * &self.slope[l],
                None => Array2::zeros(dz[l].raw_dim()),
            };
            if let Some(curv) = &self.curvature[l] {
                Zip::from(&mut dzbar)
                    .and(&dz[l])
                    .and_broadcast(curv)
                    .for_each(|acc, &t, &c| *acc += c * t);
            }
            dadj = Some(layer.transpose(dzbar.view(), self.routing[l].as_ref()));
        }
        dadj.expect("non-empty network")
    }
}

impl BatchOperator for HessianBatch<'_> {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn batch(&self) -> usize {
        self.len()
    }

    fn apply_subset(&self, rows: &[usize], vs: ArrayView2<f64>) -> Array2<f64> {
        if rows.len() == self.len() && rows.iter().enumerate().all(|(i, &r)| i == r) {
            self.apply_rows(vs)
        } else {
            self.select(rows).apply_rows(vs)
        }
    }
}

/// The Hessian of one logit at a fixed point, as a symmetric linear operator.
pub struct HessianOperator<'a>(HessianBatch<'a>);

impl<'a> HessianOperator<'a> {
    pub fn new(net: &'a Network, x: &[f64], k: usize) -> Result<Self> {
        check_len(net.input_dim(), x.len())?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(HessianOperator(HessianBatch::new(net, xs, &[k])?))
    }

    /// `f_k` at the expansion point.
    pub fn value(&self) -> f64 {
        self.0.values[0]
    }

    /// `∇f_k` at the expansion point.
    pub fn gradient(&self) -> &[f64] {
        self.0.gradients.as_slice().expect("contiguous")
    }

    /// Applies the Hessian to each row of `vs`.
    pub fn apply_rows(&self, vs: ArrayView2<f64>) -> Array2<f64> {
        self.0.apply_rows(vs)
    }

    /// Dense Hessian, column by column. Only sensible for small inputs.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let h = self.apply_rows(Array2::eye(n).view());
        // rows are H e_i = column i; H is symmetric up to rounding
        h.reversed_axes().as_standard_layout().to_owned()
    }
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.0.net.input_dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let vs = ArrayView2::from_shape((1, v.len()), v).expect("row view");
        let r = self.apply_rows(vs);
        out.copy_from_slice(r.row(0).as_slice().expect("contiguous"));
    }
}

/// Per-row gradients of every logit: returns `output_dim` matrices of shape
/// `rows x input_dim`, plus the logits.
pub(crate) fn jacobian_rows(net: &Network, xs: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    let trace = ForwardTrace::new(net, xs)?;
    let grads = (0..net.output_dim()).map(|k| trace.gradient(k)).collect::<Result<Vec<_>>>()?;
    Ok((trace.logits.clone(), grads))
}
