//! Symmetric autoencoders built by stacking RBMs and mirroring them, with
//! optional input corruption (denoising).

use alloc::format;
use alloc::vec::Vec;

use crate::activation::ActivationKind;
use crate::dnn::{check_sizes, fine_tune_with, forward, pretrain_layers, LayerStack};
use crate::error::{Error, Result};
use crate::history::EpochRecord;
use crate::loss::{loss, LossKind};
use crate::matrix::Matrix;
use crate::optim::check_rate;
use crate::rbm::{RbmLayer, TrainConfig};
use crate::rng::Rng;

/// Multiply a `[0, 1]`-scale squared error by this to report it on the 0–255 pixel scale.
pub const PIXEL_SCALE_SQ: f64 = 255.0 * 255.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AeModel {
    pub stack: LayerStack,
    /// Fraction of inputs zeroed during fine-tuning; 0 is a plain autoencoder.
    pub denoise_rate: f64,
}

impl AeModel {
    /// Checks the palindrome `n_i = n_{N−i}` with even `N`.
    pub fn new(stack: LayerStack, denoise_rate: f64) -> Result<Self> {
        check_rate("AeModel::new", denoise_rate)?;
        let sizes = stack.sizes();
        let n = sizes.len() - 1;
        if n % 2 != 0 {
            return Err(Error::config(format!(
                "autoencoder depth must be even, got {n}"
            )));
        }
        if (0..=n).any(|i| sizes[i] != sizes[n - i]) {
            return Err(Error::config(format!(
                "layer sizes {sizes:?} are not symmetric"
            )));
        }
        Ok(AeModel {
            stack,
            denoise_rate,
        })
    }

    pub fn with_denoise_rate(mut self, rate: f64) -> Result<Self> {
        check_rate("AeModel::with_denoise_rate", rate)?;
        self.denoise_rate = rate;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.stack.layers[0].n_visible()
    }
}

/// Mirrors trained encoder layers into a decoder: decoder layer `k` from the
/// top reuses encoder layer `k` transposed, taking its visible bias as output bias.
pub fn mirror(encoder: Vec<RbmLayer>) -> Result<LayerStack> {
    let half = encoder.len();
    let mut layers = encoder;
    for k in (0..half).rev() {
        let src = &layers[k];
        let mut dec = RbmLayer::new(
            src.w.transpose(),
            src.b_h.clone(),
            src.b_v.clone(),
            ActivationKind::Sigmoid,
            2 * half - k,
        )?;
        dec.activation = ActivationKind::Sigmoid;
        layers.push(dec);
    }
    LayerStack::new(layers)
}

/// Pretrains the encoder `n_0 - … - n_{N/2}` on `data` exactly as the
/// classifier stack does, then mirrors it. The returned model has denoise rate 0.
pub fn build_symmetric(
    half_sizes: &[usize],
    data: &[Matrix],
    cfg: &TrainConfig,
) -> Result<(AeModel, Vec<EpochRecord>)> {
    check_sizes(half_sizes)?;
    let mut history = Vec::new();
    let (encoder, _) = pretrain_layers(half_sizes, data, cfg, true, &mut history)?;
    Ok((AeModel::new(mirror(encoder)?, 0.0)?, history))
}

/// Zeroes each entry independently with probability `rate` (keeps where `u > rate`).
pub fn corrupt(batch: &Matrix, rate: f64, rng: &mut Rng) -> Result<Matrix> {
    check_rate("corrupt", rate)?;
    if rate == 0.0 {
        return Ok(batch.clone());
    }
    Ok(batch.map(|x| if rng.uniform() > rate { x } else { 0.0 }))
}

/// Backpropagation on the ½-MSE reconstruction loss. Inputs are re-corrupted
/// for every batch of every epoch when the model denoises; targets are always `clean`.
pub fn fine_tune_mse(
    model: &mut AeModel,
    clean: &[Matrix],
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    let rate = model.denoise_rate;
    let phase = if rate > 0.0 { "dae" } else { "ae" };
    fine_tune_with(
        &mut model.stack,
        clean,
        clean,
        epochs,
        LossKind::Mse,
        cfg,
        phase,
        |x, rng| corrupt(x, rate, rng),
    )
}

pub fn reconstruct(model: &AeModel, data: &Matrix) -> Result<Matrix> {
    Ok(forward(&model.stack, data)?
        .a
        .pop()
        .expect("stack is never empty"))
}

/// Mean over samples of `½ Σ_i (recon_i − x_i)²`.
pub fn reconstruction_error(model: &AeModel, data: &Matrix) -> Result<f64> {
    reconstruction_error_from(model, data, data)
}

/// As [`reconstruction_error`] but reconstructing from `input` and scoring against `target`.
pub fn reconstruction_error_from(model: &AeModel, input: &Matrix, target: &Matrix) -> Result<f64> {
    loss(&reconstruct(model, input)?, target, LossKind::Mse)
}
