use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{Activation, LayerKind, Network};
use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::rng;

/// SGD with momentum, inverted dropout on hidden dense layers, softmax
/// cross-entropy on the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Drop probability on hidden dense activations, `0 <= p < 1`.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.05, momentum: 0.9, dropout: 0.5, epochs: 300, batch_size: 64, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::arg(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
}

pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<Network> {
    train_with(net, data, cfg, |_, _| {})
}

/// Trains a copy of `net`; `on_epoch` sees the model after every epoch.
pub fn train_with(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Network),
) -> Result<Network> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    check_len(net.input_dim(), data.input_dim())?;
    if let Some(&bad) = data.labels().iter().find(|&&l| l >= net.output_dim()) {
        return Err(Error::arg(format!("label {bad} outside network outputs 0..{}", net.output_dim())));
    }

    let mut net = net.clone();
    let mut velocity: Vec<Option<(Array2<f64>, Array1<f64>)>> = net
        .layers()
        .iter()
        .map(|l| match &l.kind {
            LayerKind::Dense { weights, bias } | LayerKind::Conv2d { weights, bias, .. } => {
                Some((Array2::zeros(weights.raw_dim()), Array1::zeros(bias.len())))
            }
            LayerKind::MaxPool2d { .. } => None,
        })
        .collect();
    let n_layers = net.layers().len();
    let dropout_at: Vec<bool> = net
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| cfg.dropout > 0.0 && l + 1 < n_layers && matches!(layer.kind, LayerKind::Dense { .. }))
        .collect();

    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs = data.inputs().select(Axis(0), batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
            let (loss, grads) = batch_gradients(&net, xs.view(), &labels, &dropout_at, cfg.dropout, &mut rng);
            loss_sum += loss * batch.len() as f64;
            for ((layer, vel), grad) in net.layers_mut().iter_mut().zip(&mut velocity).zip(grads) {
                let (Some((vw, vb)), Some((gw, gb))) = (vel.as_mut(), grad) else { continue };
                let (LayerKind::Dense { weights, bias } | LayerKind::Conv2d { weights, bias, .. }) =
                    &mut layer.kind
                else {
                    continue;
                };
                sgd_step(weights, vw, &gw, cfg);
                sgd_step(bias, vb, &gb, cfg);
            }
        }
        let stats = EpochStats { epoch: epoch + 1, train_loss: loss_sum / data.len() as f64 };
        on_epoch(&stats, &net);
    }
    Ok(net)
}

fn sgd_step<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    vel: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    cfg: &TrainConfig,
) {
    let (mu, lr) = (cfg.momentum, cfg.learning_rate);
    Zip::from(param).and(vel).and(grad).for_each(|p, v, &g| {
        *v = mu * *v + g;
        *p -= lr * *v;
    });
}

type LayerGrads = Vec<Option<(Array2<f64>, Array1<f64>)>>;

/// Mean cross-entropy over the batch and its parameter gradients.
fn batch_gradients(
    net: &Network,
    xs: ArrayView2<f64>,
    labels: &[usize],
    dropout_at: &[bool],
    dropout: f64,
    rng: &mut rng::Rng,
) -> (f64, LayerGrads) {
    let layers = net.layers();
    let keep = 1.0 - dropout;
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut routing = Vec::with_capacity(layers.len());
    let mut masks: Vec<Option<Array2<f64>>> = Vec::with_capacity(layers.len());
    let mut a = xs.to_owned();
    for (l, layer) in layers.iter().enumerate() {
        let (z, r) = layer.affine(a.view());
        let act = layer.activation;
        let mut next = if act == Activation::Identity { z.clone() } else { z.mapv(|v| act.apply(v)) };
        let mask = dropout_at[l].then(|| {
            Array2::from_shape_simple_fn(next.raw_dim(), || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        });
        if let Some(m) = &mask {
            next *= m;
        }
        inputs.push(a);
        pre.push(z);
        routing.push(r);
        masks.push(mask);
        a = next;
    }

    let batch = labels.len() as f64;
    let mut loss = 0.0;
    let mut adj = a;
    for (mut row, &y) in adj.axis_iter_mut(Axis(0)).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        loss += max + sum.ln() - row[y];
        row.mapv_inplace(|v| (v - max).exp() / sum / batch);
        row[y] -= 1.0 / batch;
    }

    let mut grads: LayerGrads = vec![None; layers.len()];
    for (l, layer) in layers.iter().enumerate().rev() {
        if let Some(m) = &masks[l] {
            adj *= m;
        }
        let act = layer.activation;
        if act != Activation::Identity {
            Zip::from(&mut adj).and(&pre[l]).for_each(|g, &z| *g *= act.derivative(z));
        }
        grads[l] = layer.param_grads(inputs[l].view(), adj.view());
        if l > 0 {
            adj = layer.transpose(adj.view(), routing[l].as_ref());
        }
    }
    (loss / batch, grads)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax logit equals the label (0 for an empty set).
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let chunk = 1024;
    for start in (0..data.len()).step_by(chunk) {
        let end = (start + chunk).min(data.len());
        let preds = net.predict_batch(data.inputs().slice(ndarray::s![start..end, ..]))?;
        correct += preds.iter().zip(&data.labels()[start..end]).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / data.len() as f64)
}
