//! Bimodal autoencoder: a denoising autoencoder over two concatenated
//! modalities, used to predict one modality from the other.

use alloc::format;
use alloc::vec::Vec;

use crate::autoencoder::{build_symmetric, corrupt, reconstruct, AeModel};
use crate::data::split_batches;
use crate::dnn::fine_tune_with;
use crate::error::{Error, Result};
use crate::history::EpochRecord;
use crate::loss::LossKind;
use crate::matrix::Matrix;
use crate::rbm::TrainConfig;
use crate::rng::Rng;

/// How training inputs are corrupted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ModalCorruption {
    /// Each entry is zeroed independently with the denoise rate.
    #[default]
    Uniform,
    /// Each row, with probability equal to the denoise rate, has one whole
    /// modality (either, with equal odds) zeroed.
    WholeModal,
}

/// Affine map of one modality onto `[0, 1]` from its training minimum and maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalScale {
    pub min: f64,
    pub max: f64,
}

impl ModalScale {
    pub fn fit(x: &Matrix) -> Self {
        let (min, max) = x.min_max().unwrap_or((0.0, 1.0));
        ModalScale { min, max }
    }

    fn span(&self) -> f64 {
        if self.max > self.min {
            self.max - self.min
        } else {
            1.0
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let (lo, s) = (self.min, self.span());
        x.map(|v| (v - lo) / s)
    }

    pub fn invert(&self, x: &Matrix) -> Matrix {
        let (lo, s) = (self.min, self.span());
        x.map(|v| v * s + lo)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BimodalAe {
    pub ae: AeModel,
    pub dim_a: usize,
    pub dim_b: usize,
    pub scale_a: ModalScale,
    pub scale_b: ModalScale,
}

/// Training knobs beyond the RBM pretraining configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BimodalConfig {
    pub denoise_rate: f64,
    pub corruption: ModalCorruption,
    pub fine_tune_epochs: usize,
}

/// Scales each modality, concatenates row by row, pretrains a symmetric
/// autoencoder on `cfg.num_batches` batches and fine-tunes it as a denoising
/// autoencoder. `half_sizes[0]` must be `dim_a + dim_b`.
pub fn train_bimodal(
    a: &Matrix,
    b: &Matrix,
    half_sizes: &[usize],
    cfg: &TrainConfig,
    bimodal: &BimodalConfig,
) -> Result<(BimodalAe, Vec<EpochRecord>)> {
    if a.rows() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "train_bimodal",
            expected: (a.rows(), b.cols()),
            found: b.shape(),
        });
    }
    if bimodal.denoise_rate == 0.0 {
        return Err(Error::config(
            "bimodal training needs a denoise rate above 0; without corruption the model never learns to fill a missing modality",
        ));
    }
    let (dim_a, dim_b) = (a.cols(), b.cols());
    if half_sizes.first() != Some(&(dim_a + dim_b)) {
        return Err(Error::config(format!(
            "first layer size must be {} (= {dim_a} + {dim_b})",
            dim_a + dim_b
        )));
    }
    let scale_a = ModalScale::fit(a);
    let scale_b = ModalScale::fit(b);
    let joined = scale_a.apply(a).hstack(&scale_b.apply(b))?;
    let batches = split_batches(&joined, cfg.num_batches)?;
    let (ae, mut history) = build_symmetric(half_sizes, &batches, cfg)?;
    let mut ae = ae.with_denoise_rate(bimodal.denoise_rate)?;
    let rate = bimodal.denoise_rate;
    let mode = bimodal.corruption;
    history.extend(fine_tune_with(
        &mut ae.stack,
        &batches,
        &batches,
        bimodal.fine_tune_epochs,
        LossKind::Mse,
        cfg,
        "bimodal",
        |x, rng| match mode {
            ModalCorruption::Uniform => corrupt(x, rate, rng),
            ModalCorruption::WholeModal => Ok(drop_modal(x, dim_a, rate, rng)),
        },
    )?);
    Ok((
        BimodalAe {
            ae,
            dim_a,
            dim_b,
            scale_a,
            scale_b,
        },
        history,
    ))
}

fn drop_modal(x: &Matrix, dim_a: usize, rate: f64, rng: &mut Rng) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        if rng.uniform() < rate {
            let row = out.row_mut(r);
            let span = if rng.uniform() < 0.5 {
                0..dim_a
            } else {
                dim_a..row.len()
            };
            row[span].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

/// Predicts modality `b` from modality `a`, feeding zeros in place of `b`.
pub fn predict_modal(model: &BimodalAe, given_a: &Matrix) -> Result<Matrix> {
    given_a.ensure_cols("predict_modal", model.dim_a)?;
    let input = model
        .scale_a
        .apply(given_a)
        .hstack(&Matrix::zeros(given_a.rows(), model.dim_b))?;
    let out = reconstruct(&model.ae, &input)?;
    let b = out.col_range(model.dim_a..model.dim_a + model.dim_b)?;
    Ok(model.scale_b.invert(&b))
}

/// Mean over rows of `‖pred − truth‖ / ‖truth‖` as a percentage, and the number
/// of rows skipped because the true row is all zero.
pub fn modal_error_rate(pred: &Matrix, truth: &Matrix) -> Result<(f64, usize)> {
    truth.ensure_shape("modal_error_rate", pred.shape())?;
    let (mut total, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for (p, t) in pred.iter_rows().zip(truth.iter_rows()) {
        let norm = libm::sqrt(t.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 {
            skipped += 1;
            continue;
        }
        let diff = libm::sqrt(p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        total += diff / norm;
        used += 1;
    }
    if used == 0 {
        return Err(Error::domain(
            "modal_error_rate",
            "every true row has zero norm",
        ));
    }
    Ok((100.0 * total / used as f64, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::sigmoid;

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            num_batches: 2,
            seed: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn error_rate_examples() {
        let t = Matrix::from_rows(&[[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(modal_error_rate(&t, &t).unwrap(), (0.0, 1));
        assert_eq!(
            modal_error_rate(&Matrix::zeros(3, 2), &t).unwrap(),
            (100.0, 1)
        );
        assert!(modal_error_rate(&Matrix::zeros(3, 2), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn zero_denoise_rate_and_misaligned_rows_are_rejected() {
        let a = Matrix::filled(6, 2, 1.0);
        let b = Matrix::filled(6, 3, 1.0);
        let bc = BimodalConfig {
            denoise_rate: 0.0,
            corruption: ModalCorruption::Uniform,
            fine_tune_epochs: 1,
        };
        assert!(matches!(
            train_bimodal(&a, &b, &[5, 3], &cfg(), &bc),
            Err(Error::Config(_))
        ));
        let bc = BimodalConfig {
            denoise_rate: 0.3,
            ..bc
        };
        assert!(train_bimodal(&a, &Matrix::filled(5, 3, 1.0), &[5, 3], &cfg(), &bc).is_err());
        assert!(train_bimodal(&a, &b, &[4, 3], &cfg(), &bc).is_err());
    }

    #[test]
    fn prediction_shape_and_b_slice_never_leaks() {
        let mut rng = Rng::new(3);
        let a = rng.uniform_matrix(12, 3);
        let b = rng.uniform_matrix(12, 4);
        let bc = BimodalConfig {
            denoise_rate: 0.3,
            corruption: ModalCorruption::Uniform,
            fine_tune_epochs: 1,
        };
        let (m, _) = train_bimodal(&a, &b, &[7, 5], &cfg(), &bc).unwrap();
        let p = predict_modal(&m, &a).unwrap();
        assert_eq!(p.shape(), (12, 4));
        assert_eq!(predict_modal(&m, &a).unwrap(), p);
        assert!(predict_modal(&m, &b).is_err());
    }

    #[test]
    fn untrained_output_is_bias_pattern() {
        use crate::autoencoder::mirror;
        use crate::rbm::RbmLayer;
        let mut enc = RbmLayer::zeros(5, 2);
        enc.b_v = Matrix::row_vector(&[0.0, 0.0, 1.0, -1.0, 2.0]);
        let ae = AeModel::new(mirror(alloc::vec![enc]).unwrap(), 0.2).unwrap();
        let unit = ModalScale { min: 0.0, max: 1.0 };
        let m = BimodalAe {
            ae,
            dim_a: 2,
            dim_b: 3,
            scale_a: unit,
            scale_b: unit,
        };
        let p = predict_modal(&m, &Rng::new(1).uniform_matrix(4, 2)).unwrap();
        for row in p.iter_rows() {
            assert_eq!(row, [sigmoid(1.0), sigmoid(-1.0), sigmoid(2.0)]);
        }
    }

    #[test]
    fn whole_modal_corruption_zeroes_complete_slices() {
        let x = Matrix::filled(200, 5, 1.0);
        let out = drop_modal(&x, 2, 0.5, &mut Rng::new(4));
        let mut hit = 0;
        for row in out.iter_rows() {
            let a = &row[..2];
            let b = &row[2..];
            assert!(a.iter().all(|&v| v == a[0]) && b.iter().all(|&v| v == b[0]));
            if a[0] == 0.0 || b[0] == 0.0 {
                hit += 1;
            }
        }
        assert!((60..140).contains(&hit));
    }

    #[test]
    fn scaling_round_trips() {
        let x = Matrix::from_rows(&[[-3.0, 7.0], [1.0, 2.0]]).unwrap();
        let s = ModalScale::fit(&x);
        let y = s.apply(&x);
        assert_eq!(y.min_max(), Some((0.0, 1.0)));
        let back = s.invert(&y);
        for (p, q) in back.as_slice().iter().zip(x.as_slice()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
