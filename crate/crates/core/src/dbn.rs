//! Deep belief network: a directed sigmoid belief stack under an undirected
//! top RBM whose visible layer is joined with the labels.

use alloc::format;
use alloc::vec::Vec;

use crate::activation::sigmoid;
use crate::data::{validate_one_of_k, BatchedDataset, ClassificationReport};
use crate::dnn::{check_sizes, init_layer, pretrain_layers};
use crate::error::{Error, Result};
use crate::history::EpochRecord;
use crate::loss::{loss, LossKind};
use crate::matrix::Matrix;
use crate::optim::{anneal, apply_update, momentum_coeff, Velocity, WeightDecay};
use crate::rbm::{cd_step_coupled, train_binary, Coupling, RbmLayer, TrainConfig};
use crate::rng::{sample_bernoulli, Rng};

const UP_DOWN_STREAM: u64 = 0xd0b0_0000;

/// Default number of top-level alternations when classifying.
pub const DEFAULT_CLASSIFY_ITERATIONS: usize = 1;

/// One directed layer with untied recognition (upward) and generative (downward) weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmoidBeliefLayer {
    /// `n_below × n_above`
    pub recognition: Matrix,
    /// `1 × n_above`
    pub recognition_bias: Matrix,
    /// `n_above × n_below`
    pub generative: Matrix,
    /// `1 × n_below`
    pub generative_bias: Matrix,
}

impl SigmoidBeliefLayer {
    /// Both directions start from the same trained RBM.
    pub fn from_rbm(rbm: &RbmLayer) -> Self {
        SigmoidBeliefLayer {
            recognition: rbm.w.clone(),
            recognition_bias: rbm.b_h.clone(),
            generative: rbm.w.transpose(),
            generative_bias: rbm.b_v.clone(),
        }
    }

    pub fn n_below(&self) -> usize {
        self.recognition.rows()
    }

    pub fn n_above(&self) -> usize {
        self.recognition.cols()
    }

    /// `Q(above = 1 | below)`
    pub fn up(&self, below: &Matrix) -> Result<Matrix> {
        Ok(below
            .affine(&self.recognition, &self.recognition_bias)?
            .map(sigmoid))
    }

    /// `P(below = 1 | above)`
    pub fn down(&self, above: &Matrix) -> Result<Matrix> {
        Ok(above
            .affine(&self.generative, &self.generative_bias)?
            .map(sigmoid))
    }

    fn is_finite(&self) -> bool {
        self.recognition.is_finite()
            && self.recognition_bias.is_finite()
            && self.generative.is_finite()
            && self.generative_bias.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DbnModel {
    pub lower: Vec<SigmoidBeliefLayer>,
    /// Visible units are `[h_{N−1} ‖ labels]`.
    pub top: RbmLayer,
    pub label_dim: usize,
}

impl DbnModel {
    pub fn new(lower: Vec<SigmoidBeliefLayer>, top: RbmLayer, label_dim: usize) -> Result<Self> {
        for pair in lower.windows(2) {
            if pair[0].n_above() != pair[1].n_below() {
                return Err(Error::config("belief layer dimensions do not chain"));
            }
        }
        for l in &lower {
            l.generative
                .ensure_shape("DbnModel::new", (l.n_above(), l.n_below()))?;
        }
        if top.n_visible() <= label_dim {
            return Err(Error::config(format!(
                "top RBM has {} visible units, not enough for {label_dim} labels",
                top.n_visible()
            )));
        }
        let feat = top.n_visible() - label_dim;
        if let Some(l) = lower.last() {
            if l.n_above() != feat {
                return Err(Error::config(
                    "top RBM does not match the last belief layer",
                ));
            }
        }
        Ok(DbnModel {
            lower,
            top,
            label_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.lower.first().map_or(
            self.top.n_visible() - self.label_dim,
            SigmoidBeliefLayer::n_below,
        )
    }

    /// Width of the layer feeding the top RBM.
    pub fn feature_dim(&self) -> usize {
        self.top.n_visible() - self.label_dim
    }

    /// `n_0, …, n_N` without the label units.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.lower.iter().map(SigmoidBeliefLayer::n_below).collect();
        s.push(self.feature_dim());
        s.push(self.top.n_hidden());
        s
    }

    fn is_finite(&self) -> bool {
        self.top.is_finite() && self.lower.iter().all(SigmoidBeliefLayer::is_finite)
    }

    /// Deterministic recognition pass up to the layer under the top RBM.
    pub fn recognize(&self, data: &Matrix) -> Result<Matrix> {
        data.ensure_cols("dbn recognition", self.input_dim())?;
        let mut a = data.clone();
        for l in &self.lower {
            a = l.up(&a)?;
        }
        Ok(a)
    }
}

/// Greedy pretraining: the lower layers exactly as in the classifier stack,
/// then the top RBM on `[features ‖ labels]`. `sizes` excludes the label units.
pub fn pretrain_dbn(
    sizes: &[usize],
    set: &BatchedDataset,
    cfg: &TrainConfig,
) -> Result<(DbnModel, Vec<EpochRecord>)> {
    check_sizes(sizes)?;
    let n = sizes.len() - 1;
    let label_dim = set
        .labels()
        .first()
        .map(Matrix::cols)
        .ok_or(Error::EmptyBatch("pretrain_dbn"))?;
    for t in set.labels() {
        validate_one_of_k(t)?;
    }
    let mut history = Vec::new();
    let (lower, features) = pretrain_layers(&sizes[..n], set.data(), cfg, true, &mut history)?;
    let joined = features
        .iter()
        .zip(set.labels())
        .map(|(f, t)| f.hstack(t))
        .collect::<Result<Vec<_>>>()?;
    let mut top = init_layer(sizes[n - 1] + label_dim, sizes[n], n, cfg.seed);
    history.extend(train_binary(&mut top, &joined, cfg)?);
    let lower = lower.iter().map(SigmoidBeliefLayer::from_rbm).collect();
    Ok((DbnModel::new(lower, top, label_dim)?, history))
}

/// Up-down fine-tuning. Per batch: a sampled recognition pass (wake), CD-k on
/// the top RBM with labels clamped in the positive phase, a sampled generative
/// pass from the top chain's visible state (sleep). Generative weights learn to
/// predict wake states from the layer above, recognition weights learn to
/// predict sleep states from the layer below.
pub fn up_down_fine_tune(
    model: &mut DbnModel,
    set: &BatchedDataset,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    for (x, t) in set.iter() {
        x.ensure_cols("up_down_fine_tune", model.input_dim())?;
        t.ensure_cols("up_down_fine_tune", model.label_dim)?;
    }
    let mut rng = Rng::stream(cfg.seed, UP_DOWN_STREAM);
    let mut vel = Velocity::zeros_like(
        model
            .lower
            .iter()
            .flat_map(|l| {
                [
                    &l.recognition,
                    &l.recognition_bias,
                    &l.generative,
                    &l.generative_bias,
                ]
            })
            .chain([&model.top.w, &model.top.b_v, &model.top.b_h]),
    );
    let top_slot = 4 * model.lower.len();
    let feat = model.feature_dim();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = anneal(cfg.lr, epoch, cfg.anneal);
        let rho = momentum_coeff(epoch, cfg.momentum);
        let mut total = 0.0;
        for (x, t) in set.iter() {
            let m = x.rows() as f64;
            // Wake: sampled recognition states.
            let mut wake = Vec::with_capacity(model.lower.len() + 1);
            wake.push(x.clone());
            for l in &model.lower {
                let p = l.up(&wake[wake.len() - 1])?;
                wake.push(sample_bernoulli(&p, &mut rng)?);
            }
            // Top: CD-k with labels clamped in the data phase.
            let joined = wake[wake.len() - 1].hstack(t)?;
            let (g, recon) = cd_step_coupled(
                &model.top,
                &joined,
                cfg.gibbs_steps,
                cfg.dropout_rate,
                Coupling::TIED,
                &mut rng,
            )?;
            total += recon * m;
            // Sleep: start from a sample of the top chain's visible features.
            let ph = model.top.hidden_given_visible(&joined)?;
            let mut h = sample_bernoulli(&ph, &mut rng)?;
            for _ in 0..cfg.gibbs_steps {
                let pv = model.top.visible_given_hidden(&h)?;
                let v = sample_bernoulli(&pv, &mut rng)?;
                h = sample_bernoulli(&model.top.hidden_given_visible(&v)?, &mut rng)?;
            }
            let pv = model.top.visible_given_hidden(&h)?;
            let mut sleep = alloc::vec![Matrix::zeros(0, 0); model.lower.len() + 1];
            sleep[model.lower.len()] = sample_bernoulli(&pv.col_range(0..feat)?, &mut rng)?;
            for i in (0..model.lower.len()).rev() {
                let p = model.lower[i].down(&sleep[i + 1])?;
                sleep[i] = sample_bernoulli(&p, &mut rng)?;
            }

            for (i, l) in model.lower.iter_mut().enumerate() {
                // Generative: predict wake state below from wake state above.
                let pred = l.down(&wake[i + 1])?;
                let resid = wake[i].sub(&pred)?;
                let dg = wake[i + 1].t_matmul(&resid)?.scale(-1.0 / m);
                let dgb = resid.column_means().scale(-1.0);
                apply_update(
                    &mut l.generative,
                    &dg,
                    vel.slot_mut(4 * i + 2),
                    lr,
                    rho,
                    cfg.decay,
                )?;
                apply_update(
                    &mut l.generative_bias,
                    &dgb,
                    vel.slot_mut(4 * i + 3),
                    lr,
                    rho,
                    WeightDecay::None,
                )?;
                // Recognition: predict sleep state above from sleep state below.
                let pred = l.up(&sleep[i])?;
                let resid = sleep[i + 1].sub(&pred)?;
                let dr = sleep[i].t_matmul(&resid)?.scale(-1.0 / m);
                let drb = resid.column_means().scale(-1.0);
                apply_update(
                    &mut l.recognition,
                    &dr,
                    vel.slot_mut(4 * i),
                    lr,
                    rho,
                    cfg.decay,
                )?;
                apply_update(
                    &mut l.recognition_bias,
                    &drb,
                    vel.slot_mut(4 * i + 1),
                    lr,
                    rho,
                    WeightDecay::None,
                )?;
            }
            let top = &mut model.top;
            apply_update(
                &mut top.w,
                &g.dw,
                vel.slot_mut(top_slot),
                lr,
                rho,
                cfg.decay,
            )?;
            apply_update(
                &mut top.b_v,
                &g.db_v,
                vel.slot_mut(top_slot + 1),
                lr,
                rho,
                WeightDecay::None,
            )?;
            apply_update(
                &mut top.b_h,
                &g.db_h,
                vel.slot_mut(top_slot + 2),
                lr,
                rho,
                WeightDecay::None,
            )?;
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("up-down fine-tuning"));
        }
        history.push(EpochRecord::new(
            "up-down",
            epoch,
            lr,
            rho,
            total / set.samples().max(1) as f64,
        ));
    }
    Ok(history)
}

/// Normalized label-slot probabilities per row.
///
/// The recognition pass is deterministic; label slots start at zero, and each
/// iteration computes the top hidden probabilities and one downward step,
/// feeding the label reconstruction back in for the next iteration.
pub fn label_distribution(model: &DbnModel, data: &Matrix, iterations: usize) -> Result<Matrix> {
    if iterations == 0 {
        return Err(Error::config(
            "classification needs at least one top-level iteration",
        ));
    }
    let features = model.recognize(data)?;
    let feat = model.feature_dim();
    let mut labels = Matrix::zeros(data.rows(), model.label_dim);
    for _ in 0..iterations {
        let ph = model.top.hidden_given_visible(&features.hstack(&labels)?)?;
        let pv = model.top.visible_given_hidden(&ph)?;
        labels = pv.col_range(feat..feat + model.label_dim)?;
    }
    for r in 0..labels.rows() {
        let row = labels.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    Ok(labels)
}

pub fn classify_dbn(
    model: &DbnModel,
    data: &Matrix,
    labels: &Matrix,
    iterations: usize,
) -> Result<ClassificationReport> {
    let dist = label_distribution(model, data, iterations)?;
    ClassificationReport::from_scores(&dist, labels)
}

/// Mean reconstruction error of the visible data through recognition, top, generative passes.
pub fn reconstruction_error(model: &DbnModel, data: &Matrix, labels: &Matrix) -> Result<f64> {
    let features = model.recognize(data)?;
    let ph = model.top.hidden_given_visible(&features.hstack(labels)?)?;
    let mut a = model
        .top
        .visible_given_hidden(&ph)?
        .col_range(0..model.feature_dim())?;
    for l in model.lower.iter().rev() {
        a = l.down(&a)?;
    }
    loss(&a, data, LossKind::Mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_batches, one_of_k};
    use crate::dnn::pretrain_stack;
    use alloc::vec;

    fn toy_set(rows: usize, seed: u64) -> BatchedDataset {
        let x = Rng::new(seed)
            .uniform_matrix(rows, 6)
            .map(|p| if p > 0.5 { 1.0 } else { 0.0 });
        let y = one_of_k(&Matrix::from_fn(rows, 1, |r, _| (r % 3) as f64), 3).unwrap();
        make_batches(&x, &y, 4).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn top_dimension_includes_labels() {
        let set = toy_set(40, 1);
        let (dbn, _) = pretrain_dbn(&[6, 5, 4], &set, &cfg()).unwrap();
        assert_eq!(dbn.top.n_visible(), 5 + 3);
        assert_eq!(dbn.sizes(), vec![6, 5, 4]);
        let l = &dbn.lower[0];
        assert_eq!(l.generative, l.recognition.transpose());
    }

    #[test]
    fn no_lower_layers_is_a_single_joint_rbm() {
        let set = toy_set(40, 2);
        let (dbn, _) = pretrain_dbn(&[6, 4], &set, &cfg()).unwrap();
        assert!(dbn.lower.is_empty());
        assert_eq!(dbn.top.n_visible(), 9);
        assert_eq!(dbn.input_dim(), 6);
    }

    #[test]
    fn lower_layers_match_stack_pretraining() {
        let set = toy_set(40, 3);
        let (dbn, _) = pretrain_dbn(&[6, 5, 4], &set, &cfg()).unwrap();
        let (stack, _) = pretrain_stack(&[6, 5, 3], &set, &cfg(), true).unwrap();
        assert_eq!(dbn.lower[0].recognition, stack.layers[0].w);
        assert_eq!(dbn.lower[0].recognition_bias, stack.layers[0].b_h);
    }

    #[test]
    fn label_bias_forces_the_prediction() {
        let mut top = RbmLayer::zeros(4 + 3, 2);
        top.b_v = Matrix::row_vector(&[0.0, 0.0, 0.0, 0.0, -5.0, 6.0, -5.0]);
        let dbn = DbnModel::new(vec![], top, 3).unwrap();
        let x = Rng::new(1).uniform_matrix(5, 4);
        let dist = label_distribution(&dbn, &x, 1).unwrap();
        assert!(dist.argmax_rows().iter().all(|&c| c == 1));
        for row in dist.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_epochs_is_identity_and_one_step_unties() {
        let set = toy_set(40, 4);
        let (dbn, _) = pretrain_dbn(&[6, 5, 4], &set, &cfg()).unwrap();
        let mut same = dbn.clone();
        up_down_fine_tune(&mut same, &set, 0, &cfg()).unwrap();
        assert_eq!(same, dbn);
        let mut tuned = dbn.clone();
        up_down_fine_tune(&mut tuned, &set, 1, &cfg()).unwrap();
        let (r0, g0) = (&dbn.lower[0].recognition, &dbn.lower[0].generative);
        let (r1, g1) = (&tuned.lower[0].recognition, &tuned.lower[0].generative);
        assert_ne!(r1, r0);
        assert_ne!(g1, g0);
        assert_ne!(g1, &r1.transpose());
    }

    #[test]
    fn classification_ignores_true_labels() {
        let set = toy_set(40, 6);
        let (dbn, _) = pretrain_dbn(&[6, 5, 4], &set, &cfg()).unwrap();
        let (x, y) = set.batch(0);
        let a = classify_dbn(&dbn, x, y, 1).unwrap();
        let flipped = y.map(|v| 1.0 - v);
        let b = label_distribution(&dbn, x, 1).unwrap();
        assert_eq!(a, ClassificationReport::from_scores(&b, y).unwrap());
        assert_eq!(
            ClassificationReport::from_predictions(&b.argmax_rows(), &b.argmax_rows(), 3)
                .unwrap()
                .error_rate,
            0.0
        );
        assert!(classify_dbn(&dbn, x, &flipped, 1).is_ok());
    }
}
