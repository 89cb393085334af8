use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut1, Axis};

use super::{Layer, LayerKind};

pub const CONV_KERNEL: usize = 5;
pub const CONV_PADDING: usize = 2;
pub const POOL_SIZE: usize = 2;

/// Per-row argmax input index for every pooled output, recorded on the primal
/// pass and reused by tangent and adjoint passes.
#[derive(Clone, Debug)]
pub(crate) struct Routing(Vec<u32>);

impl Routing {
    /// The routing rows listed in `rows`; `width` is the pooled output size.
    pub(crate) fn select(&self, rows: &[usize], width: usize) -> Routing {
        if self.0.len() == width {
            return self.clone();
        }
        Routing(rows.iter().flat_map(|&r| self.0[r * width..(r + 1) * width].iter().copied()).collect())
    }
}

impl Layer {
    /// Pre-activation `z = W a + b` (or the pooled maximum) for each row.
    pub(crate) fn affine(&self, input: ArrayView2<f64>) -> (Array2<f64>, Option<Routing>) {
        match &self.kind {
            LayerKind::Dense { weights, bias } => {
                let mut z = input.dot(&weights.t());
                z += bias;
                (z, None)
            }
            LayerKind::Conv2d { .. } => (self.conv(input, true), None),
            LayerKind::MaxPool2d { channels, height, width } => {
                let (z, routing) = max_pool(input, *channels, *height, *width);
                (z, Some(routing))
            }
        }
    }

    /// The linear part alone (no bias), i.e. the layer's Jacobian applied to
    /// tangent rows.
    pub(crate) fn linear(&self, input: ArrayView2<f64>, routing: Option<&Routing>) -> Array2<f64> {
        match &self.kind {
            LayerKind::Dense { weights, .. } => input.dot(&weights.t()),
            LayerKind::Conv2d { .. } => self.conv(input, false),
            LayerKind::MaxPool2d { .. } => {
                let routing = routing.expect("pool routing from primal pass");
                let out = self.output_dim();
                let mut z = Array2::zeros((input.nrows(), out));
                let rows = routing.0.len() / out;
                for (r, mut zr) in z.axis_iter_mut(Axis(0)).enumerate() {
                    // a single primal row may serve a batch of tangents
                    let rr = if rows == 1 { 0 } else { r };
                    let idx = &routing.0[rr * out..(rr + 1) * out];
                    let ir = input.row(r);
                    for (o, &i) in idx.iter().enumerate() {
                        zr[o] = ir[i as usize];
                    }
                }
                z
            }
        }
    }

    /// Adjoint of [`Layer::linear`].
    pub(crate) fn transpose(&self, grad: ArrayView2<f64>, routing: Option<&Routing>) -> Array2<f64> {
        match &self.kind {
            LayerKind::Dense { weights, .. } => grad.dot(weights),
            LayerKind::Conv2d { in_channels, out_channels, height, width, weights, .. } => {
                let hw = height * width;
                let mut out = Array2::zeros((grad.nrows(), in_channels * hw));
                for (g, o) in grad.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
                    let g = g.to_shape((*out_channels, hw)).expect("conv grad layout");
                    let dcols = g.t().dot(weights);
                    col2im(dcols.view(), o, *in_channels, *height, *width);
                }
                out
            }
            LayerKind::MaxPool2d { .. } => {
                let routing = routing.expect("pool routing from primal pass");
                let out_dim = self.output_dim();
                let rows = routing.0.len() / out_dim;
                let mut out = Array2::zeros((grad.nrows(), self.input_dim()));
                for (r, mut orow) in out.axis_iter_mut(Axis(0)).enumerate() {
                    let rr = if rows == 1 { 0 } else { r };
                    let idx = &routing.0[rr * out_dim..(rr + 1) * out_dim];
                    let g = grad.row(r);
                    for (o, &i) in idx.iter().enumerate() {
                        orow[i as usize] += g[o];
                    }
                }
                out
            }
        }
    }

    /// Gradients of `sum_rows <grad_r, z_r>` with respect to weights and bias.
    pub(crate) fn param_grads(
        &self,
        input: ArrayView2<f64>,
        grad: ArrayView2<f64>,
    ) -> Option<(Array2<f64>, Array1<f64>)> {
        match &self.kind {
            LayerKind::Dense { .. } => Some((grad.t().dot(&input), grad.sum_axis(Axis(0)))),
            LayerKind::Conv2d { in_channels, out_channels, height, width, weights, .. } => {
                let hw = height * width;
                let mut dw = Array2::zeros(weights.raw_dim());
                let mut db = Array1::zeros(*out_channels);
                for (a, g) in input.axis_iter(Axis(0)).zip(grad.axis_iter(Axis(0))) {
                    let cols = im2col(a.as_slice().expect("contiguous row"), *in_channels, *height, *width);
                    let g = g.to_shape((*out_channels, hw)).expect("conv grad layout");
                    dw += &g.dot(&cols);
                    db += &g.sum_axis(Axis(1));
                }
                Some((dw, db))
            }
            LayerKind::MaxPool2d { .. } => None,
        }
    }

    fn conv(&self, input: ArrayView2<f64>, with_bias: bool) -> Array2<f64> {
        let LayerKind::Conv2d { in_channels, out_channels, height, width, weights, bias } = &self.kind
        else {
            unreachable!()
        };
        let hw = height * width;
        let mut out = Array2::zeros((input.nrows(), out_channels * hw));
        for (a, mut o) in input.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            let a = a.to_owned();
            let cols = im2col(a.as_slice().unwrap(), *in_channels, *height, *width);
            // (out_channels x taps) . (taps x hw)
            let z = weights.dot(&cols.t());
            for c in 0..*out_channels {
                let b = if with_bias { bias[c] } else { 0.0 };
                let mut dst = o.slice_mut(s![c * hw..(c + 1) * hw]);
                dst.assign(&z.row(c));
                if b != 0.0 {
                    dst += b;
                }
            }
        }
        out
    }
}

/// `(h*w) x (channels*25)` patch matrix with zero padding.
fn im2col(input: &[f64], channels: usize, height: usize, width: usize) -> Array2<f64> {
    let taps = CONV_KERNEL * CONV_KERNEL;
    let mut cols = Array2::zeros((height * width, channels * taps));
    for y in 0..height {
        for x in 0..width {
            let mut row = cols.row_mut(y * width + x);
            for c in 0..channels {
                let plane = &input[c * height * width..(c + 1) * height * width];
                for ky in 0..CONV_KERNEL {
                    let sy = y + ky;
                    if sy < CONV_PADDING || sy - CONV_PADDING >= height {
                        continue;
                    }
                    let sy = sy - CONV_PADDING;
                    for kx in 0..CONV_KERNEL {
                        let sx = x + kx;
                        if sx < CONV_PADDING || sx - CONV_PADDING >= width {
                            continue;
                        }
                        row[c * taps + ky * CONV_KERNEL + kx] = plane[sy * width + sx - CONV_PADDING];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    dcols: ArrayView2<f64>,
    mut out: ArrayViewMut1<f64>,
    channels: usize,
    height: usize,
    width: usize,
) {
    let taps = CONV_KERNEL * CONV_KERNEL;
    for y in 0..height {
        for x in 0..width {
            let row = dcols.row(y * width + x);
            for c in 0..channels {
                for ky in 0..CONV_KERNEL {
                    let sy = y + ky;
                    if sy < CONV_PADDING || sy - CONV_PADDING >= height {
                        continue;
                    }
                    let sy = sy - CONV_PADDING;
                    for kx in 0..CONV_KERNEL {
                        let sx = x + kx;
                        if sx < CONV_PADDING || sx - CONV_PADDING >= width {
                            continue;
                        }
                        out[c * height * width + sy * width + sx - CONV_PADDING] +=
                            row[c * taps + ky * CONV_KERNEL + kx];
                    }
                }
            }
        }
    }
}

/// 2x2/stride-2 max pooling; ties go to the first maximal element in
/// row-major window order.
fn max_pool(
    input: ArrayView2<f64>,
    channels: usize,
    height: usize,
    width: usize,
) -> (Array2<f64>, Routing) {
    let (oh, ow) = (height / POOL_SIZE, width / POOL_SIZE);
    let out_dim = channels * oh * ow;
    let mut out = Array2::zeros((input.nrows(), out_dim));
    let mut routing = Vec::with_capacity(input.nrows() * out_dim);
    for (a, mut o) in input.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        for c in 0..channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_val = f64::NEG_INFINITY;
                    for dy in 0..POOL_SIZE {
                        for dx in 0..POOL_SIZE {
                            let i = c * height * width + (oy * POOL_SIZE + dy) * width + ox * POOL_SIZE + dx;
                            if best == usize::MAX || a[i] > best_val {
                                best = i;
                                best_val = a[i];
                            }
                        }
                    }
                    o[c * oh * ow + oy * ow + ox] = best_val;
                    routing.push(best as u32);
                }
            }
        }
    }
    (out, Routing(routing))
}
