//! Feed-forward stack: greedy RBM pretraining, forward pass, backpropagation
//! fine-tuning and classification.

use alloc::format;
use alloc::vec::Vec;

use crate::activation::{activate, activation_derivative, ActivationKind};
use crate::data::{BatchedDataset, ClassificationReport};
use crate::error::{Error, Result};
use crate::history::EpochRecord;
use crate::loss::{loss, loss_gradient, LossKind};
use crate::matrix::Matrix;
use crate::optim::{anneal, apply_update, momentum_coeff, Velocity, WeightDecay};
use crate::rbm::{train_binary, train_classifier_head, RbmLayer, TrainConfig};
use crate::rng::Rng;

/// Default number of backpropagation epochs.
pub const DEFAULT_FINE_TUNE_EPOCHS: usize = 12;

const INIT_STREAM: u64 = 0x1a17_0000;
const FINE_TUNE_STREAM: u64 = 0xf17e_0000;

/// Layer `i` maps `n_{i−1}` to `n_i` with weight `w` and bias `b_h`; `b_v` is
/// kept from pretraining (the autoencoder mirrors it).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<RbmLayer>,
}

impl LayerStack {
    pub fn new(layers: Vec<RbmLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("a stack needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].n_hidden() != pair[1].n_visible() {
                return Err(Error::ShapeMismatch {
                    op: "LayerStack::new",
                    expected: (pair[0].n_hidden(), pair[1].n_hidden()),
                    found: pair[1].w.shape(),
                });
            }
        }
        Ok(LayerStack { layers })
    }

    /// `n_0, n_1, …, n_N`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.layers.len() + 1);
        s.push(self.layers[0].n_visible());
        s.extend(self.layers.iter().map(RbmLayer::n_hidden));
        s
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output(&self) -> &RbmLayer {
        &self.layers[self.layers.len() - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(RbmLayer::is_finite)
    }
}

/// Pre-activations `z[l]` for layers `1..=N` and activations `a[0..=N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub z: Vec<Matrix>,
    pub a: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.a[self.a.len() - 1]
    }
}

pub(crate) fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::config(
            "layer sizes need at least an input and one output",
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::config(format!(
            "layer sizes must be positive: {sizes:?}"
        )));
    }
    Ok(())
}

/// Seeded `N(0, 0.01²)` layer for position `index` (1-based).
pub fn init_layer(n_v: usize, n_h: usize, index: usize, seed: u64) -> RbmLayer {
    RbmLayer::random(
        n_v,
        n_h,
        index,
        &mut Rng::stream(seed, INIT_STREAM + index as u64),
    )
}

/// Greedy layer-wise pretraining shared by every stacked model: layer `i`
/// (1-based) is trained as a binary RBM on the hidden probabilities of layer
/// `i − 1`. Returns the trained layers and the features leaving the last one.
pub fn pretrain_layers(
    sizes: &[usize],
    data: &[Matrix],
    cfg: &TrainConfig,
    pretrain: bool,
    history: &mut Vec<EpochRecord>,
) -> Result<(Vec<RbmLayer>, Vec<Matrix>)> {
    if data.is_empty() {
        return Err(Error::EmptyBatch("pretrain"));
    }
    for batch in data {
        batch.ensure_cols("pretrain", sizes[0])?;
    }
    cfg.validate()?;
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    let mut input: Vec<Matrix> = data.to_vec();
    for (i, pair) in sizes.windows(2).enumerate() {
        let mut layer = init_layer(pair[0], pair[1], i + 1, cfg.seed);
        if pretrain {
            history.extend(train_binary(&mut layer, &input, cfg)?);
        }
        input = input
            .iter()
            .map(|b| layer.hidden_given_visible(b))
            .collect::<Result<_>>()?;
        layers.push(layer);
    }
    Ok((layers, input))
}

/// Builds a classifier stack `n_0 - … - n_N`. Hidden layers come from
/// [`pretrain_layers`]; the softmax output layer is fitted on the top features.
/// With `pretrain == false` every layer keeps its seeded random init.
pub fn pretrain_stack(
    sizes: &[usize],
    set: &BatchedDataset,
    cfg: &TrainConfig,
    pretrain: bool,
) -> Result<(LayerStack, Vec<EpochRecord>)> {
    check_sizes(sizes)?;
    let n = sizes.len() - 1;
    let mut history = Vec::new();
    let (mut layers, features) =
        pretrain_layers(&sizes[..n], set.data(), cfg, pretrain, &mut history)?;
    for l in &mut layers {
        l.activation = ActivationKind::Sigmoid;
    }
    let mut head =
        init_layer(sizes[n - 1], sizes[n], n, cfg.seed).with_activation(ActivationKind::Softmax);
    for t in set.labels() {
        t.ensure_cols("pretrain_stack", sizes[n])?;
    }
    if pretrain {
        let feats = set.with_data(features)?;
        history.extend(train_classifier_head(&mut head, &feats, cfg)?);
    }
    layers.push(head);
    Ok((LayerStack::new(layers)?, history))
}

pub fn forward(stack: &LayerStack, batch: &Matrix) -> Result<ForwardTrace> {
    batch.ensure_cols("forward", stack.layers[0].n_visible())?;
    let mut z = Vec::with_capacity(stack.depth());
    let mut a = Vec::with_capacity(stack.depth() + 1);
    a.push(batch.clone());
    for layer in &stack.layers {
        let zl = a[a.len() - 1].affine(&layer.w, &layer.b_h)?;
        a.push(activate(&zl, layer.activation));
        z.push(zl);
    }
    Ok(ForwardTrace { z, a })
}

/// Gradients `(∂L/∂W_l, ∂L/∂b_l)` per layer of the row-averaged loss, and the loss.
pub fn gradients(
    stack: &LayerStack,
    input: &Matrix,
    target: &Matrix,
    kind: LossKind,
) -> Result<(Vec<(Matrix, Matrix)>, f64)> {
    let trace = forward(stack, input)?;
    let out = trace.output();
    let value = loss(out, target, kind)?;
    let top = stack.output().activation;
    let mut delta = if top == ActivationKind::Softmax {
        if kind != LossKind::CrossEntropy {
            return Err(Error::config(format!(
                "a softmax output layer needs cross-entropy loss, not {kind}"
            )));
        }
        target.ensure_shape("gradients", out.shape())?;
        let inv = 1.0 / out.rows().max(1) as f64;
        out.zip_map(target, |c, t| (c - t) * inv)?
    } else {
        loss_gradient(out, target, kind)?.hadamard(&activation_derivative(out, top)?)?
    };
    let mut grads = Vec::with_capacity(stack.depth());
    for l in (0..stack.depth()).rev() {
        let prev = &trace.a[l];
        let dw = prev.t_matmul(&delta)?;
        let db = delta.column_means().scale(delta.rows() as f64);
        if l > 0 {
            let below = stack.layers[l - 1].activation;
            delta = delta
                .matmul_t(&stack.layers[l].w)?
                .hadamard(&activation_derivative(prev, below)?)?;
        }
        grads.push((dw, db));
    }
    grads.reverse();
    Ok((grads, value))
}

/// Row-averaged loss of the whole stack on one batch.
pub fn stack_loss(
    stack: &LayerStack,
    input: &Matrix,
    target: &Matrix,
    kind: LossKind,
) -> Result<f64> {
    loss(forward(stack, input)?.output(), target, kind)
}

/// Backpropagation over the batch partition of `set` for `epochs` epochs.
pub fn backprop_fine_tune(
    stack: &mut LayerStack,
    set: &BatchedDataset,
    epochs: usize,
    kind: LossKind,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    fine_tune_with(
        stack,
        set.data(),
        set.labels(),
        epochs,
        kind,
        cfg,
        "backprop",
        |x, _| Ok(x.clone()),
    )
}

/// Backpropagation where each batch input is produced by `input` (e.g. a fresh
/// corruption) while the target stays fixed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fine_tune_with(
    stack: &mut LayerStack,
    data: &[Matrix],
    targets: &[Matrix],
    epochs: usize,
    kind: LossKind,
    cfg: &TrainConfig,
    phase: &'static str,
    mut input: impl FnMut(&Matrix, &mut Rng) -> Result<Matrix>,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if data.len() != targets.len() {
        return Err(Error::config("data and target batch counts differ"));
    }
    let classify = stack.output().activation == ActivationKind::Softmax;
    let mut rng = Rng::stream(cfg.seed, FINE_TUNE_STREAM);
    let mut vel = Velocity::zeros_like(stack.layers.iter().flat_map(|l| [&l.w, &l.b_h]));
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = anneal(cfg.lr, epoch, cfg.anneal);
        let rho = momentum_coeff(epoch, cfg.momentum);
        let (mut total, mut wrong, mut seen) = (0.0, 0usize, 0usize);
        for (x, t) in data.iter().zip(targets) {
            let x_in = input(x, &mut rng)?;
            let (grads, value) = gradients(stack, &x_in, t, kind)?;
            total += value * x.rows() as f64;
            seen += x.rows();
            for (l, (dw, db)) in grads.iter().enumerate() {
                let layer = &mut stack.layers[l];
                apply_update(&mut layer.w, dw, vel.slot_mut(2 * l), lr, rho, cfg.decay)?;
                apply_update(
                    &mut layer.b_h,
                    db,
                    vel.slot_mut(2 * l + 1),
                    lr,
                    rho,
                    WeightDecay::None,
                )?;
            }
            if classify {
                let out = forward(stack, &x_in)?;
                wrong += out
                    .output()
                    .argmax_rows()
                    .iter()
                    .zip(t.argmax_rows())
                    .filter(|(p, a)| **p != *a)
                    .count();
            }
        }
        if !stack.is_finite() || !total.is_finite() {
            return Err(Error::NonFinite("backpropagation"));
        }
        let seen = seen.max(1) as f64;
        let mut rec = EpochRecord::new(phase, epoch, lr, rho, total / seen);
        if classify {
            rec = rec.with_error(wrong as f64 / seen);
        }
        history.push(rec);
    }
    Ok(history)
}

pub fn classify_dnn(
    stack: &LayerStack,
    data: &Matrix,
    labels: &Matrix,
) -> Result<ClassificationReport> {
    let trace = forward(stack, data)?;
    ClassificationReport::from_scores(trace.output(), labels)
}
