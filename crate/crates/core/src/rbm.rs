//! Restricted Boltzmann Machine with tied weights, CD-k training and a softmax
//! classifier head.
//!
//! Shapes follow the row-sample convention: `w` is `n_v × n_h`, so the upward
//! pass is `v·w + b_h` and the downward pass is `h·wᵀ + b_v`.

use alloc::format;
use alloc::vec::Vec;

use crate::activation::{activate, sigmoid, softplus, ActivationKind};
use crate::data::{validate_one_of_k, BatchedDataset, ClassificationReport};
use crate::error::{Error, Result};
use crate::history::EpochRecord;
use crate::loss::{loss, LossKind};
use crate::matrix::Matrix;
use crate::optim::{
    anneal, apply_update, check_rate, dropout_mask, momentum_coeff, AnnealSchedule,
    MomentumSchedule, Velocity, WeightDecay,
};
use crate::rng::{sample_bernoulli, sample_gaussian, Rng};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.01;

/// Training stops once every gradient entry of a whole epoch stays below this.
pub const EARLY_STOP_GRADIENT: f64 = 1e-8;

const CD_STREAM: u64 = 0x0c0d_0000;

#[derive(Clone, Debug, PartialEq)]
pub struct RbmLayer {
    pub w: Matrix,
    pub b_v: Matrix,
    pub b_h: Matrix,
    /// Hidden-side activation: sigmoid for binary units, identity for linear
    /// units, softmax for a classifier head.
    pub activation: ActivationKind,
    pub index: usize,
}

impl RbmLayer {
    pub fn new(
        w: Matrix,
        b_v: Matrix,
        b_h: Matrix,
        activation: ActivationKind,
        index: usize,
    ) -> Result<Self> {
        b_v.ensure_shape("RbmLayer::new", (1, w.rows()))?;
        b_h.ensure_shape("RbmLayer::new", (1, w.cols()))?;
        Ok(RbmLayer {
            w,
            b_v,
            b_h,
            activation,
            index,
        })
    }

    pub fn zeros(n_v: usize, n_h: usize) -> Self {
        RbmLayer {
            w: Matrix::zeros(n_v, n_h),
            b_v: Matrix::zeros(1, n_v),
            b_h: Matrix::zeros(1, n_h),
            activation: ActivationKind::Sigmoid,
            index: 0,
        }
    }

    /// Weights i.i.d. `N(0, 0.01²)`, biases zero.
    pub fn random(n_v: usize, n_h: usize, index: usize, rng: &mut Rng) -> Self {
        RbmLayer {
            w: rng.normal_matrix(n_v, n_h, INIT_STD),
            index,
            ..RbmLayer::zeros(n_v, n_h)
        }
    }

    pub fn with_activation(mut self, activation: ActivationKind) -> Self {
        self.activation = activation;
        self
    }

    pub fn n_visible(&self) -> usize {
        self.w.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w.cols()
    }

    /// Pre-activation `v·w + b_h`.
    pub fn hidden_input(&self, v: &Matrix) -> Result<Matrix> {
        v.ensure_cols("hidden_given_visible", self.n_visible())?;
        v.affine(&self.w, &self.b_h)
    }

    /// `P(h = 1 | v)` per row (or the hidden mean for non-binary units).
    pub fn hidden_given_visible(&self, v: &Matrix) -> Result<Matrix> {
        Ok(activate(&self.hidden_input(v)?, self.activation))
    }

    /// `P(v = 1 | h) = σ(h·wᵀ + b_v)` per row.
    pub fn visible_given_hidden(&self, h: &Matrix) -> Result<Matrix> {
        h.ensure_cols("visible_given_hidden", self.n_hidden())?;
        let mut z = h.matmul_t(&self.w)?;
        z.add_row_inplace(&self.b_v)?;
        Ok(activate(&z, ActivationKind::Sigmoid))
    }

    /// `E(v, h) = −b_v·v − b_h·h − v·w·h` for binary states.
    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        check_len("energy", v.len(), self.n_visible())?;
        check_len("energy", h.len(), self.n_hidden())?;
        check_binary("energy", v)?;
        check_binary("energy", h)?;
        Ok(self.energy_unchecked(v, h))
    }

    pub(crate) fn energy_unchecked(&self, v: &[f64], h: &[f64]) -> f64 {
        let mut e = -dot(self.b_v.as_slice(), v) - dot(self.b_h.as_slice(), h);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                e -= vi * dot(self.w.row(i), h);
            }
        }
        e
    }

    /// `F(x) = −b_v·x − Σ_j ln(1 + exp(b_h_j + x·w_j))`.
    pub fn free_energy(&self, x: &[f64]) -> Result<f64> {
        check_len("free_energy", x.len(), self.n_visible())?;
        let z = Matrix::row_vector(x).affine(&self.w, &self.b_h)?;
        Ok(-dot(self.b_v.as_slice(), x) - z.as_slice().iter().map(|&t| softplus(t)).sum::<f64>())
    }

    pub fn mean_free_energy(&self, data: &Matrix) -> Result<f64> {
        data.ensure_cols("free_energy", self.n_visible())?;
        let z = data.affine(&self.w, &self.b_h)?;
        let mut total = 0.0;
        for (x, zr) in data.iter_rows().zip(z.iter_rows()) {
            total += -dot(self.b_v.as_slice(), x) - zr.iter().map(|&t| softplus(t)).sum::<f64>();
        }
        Ok(total / data.rows().max(1) as f64)
    }

    /// The same machine with the roles of visible and hidden swapped.
    pub fn transposed(&self) -> RbmLayer {
        RbmLayer {
            w: self.w.transpose(),
            b_v: self.b_h.clone(),
            b_h: self.b_v.clone(),
            activation: ActivationKind::Sigmoid,
            index: self.index,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.b_v.is_finite() && self.b_h.is_finite()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(op: &'static str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::ShapeMismatch {
            op,
            expected: (1, expected),
            found: (1, found),
        });
    }
    Ok(())
}

fn check_binary(op: &'static str, x: &[f64]) -> Result<()> {
    if let Some(bad) = x.iter().find(|&&s| s != 0.0 && s != 1.0) {
        return Err(Error::domain(op, format!("state {bad} is not binary")));
    }
    Ok(())
}

/// CD gradient estimate, `⟨·⟩_recon − ⟨·⟩_data`; descent subtracts it.
#[derive(Clone, Debug, PartialEq)]
pub struct CdGradients {
    pub dw: Matrix,
    pub db_v: Matrix,
    pub db_h: Matrix,
}

impl CdGradients {
    pub fn max_abs(&self) -> f64 {
        self.dw
            .max_abs()
            .max(self.db_v.max_abs())
            .max(self.db_h.max_abs())
    }
}

/// Multipliers on the weight in each direction. Plain RBMs use `(1, 1)`; the
/// deep Boltzmann machine pretrains its end layers with one side doubled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling {
    pub up: f64,
    pub down: f64,
}

impl Coupling {
    pub const TIED: Coupling = Coupling { up: 1.0, down: 1.0 };
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling::TIED
    }
}

fn hidden_pre(rbm: &RbmLayer, v: &Matrix, coupling: Coupling) -> Result<Matrix> {
    v.ensure_cols("cd_step", rbm.n_visible())?;
    let mut z = v.matmul(&rbm.w)?;
    if coupling.up != 1.0 {
        z.map_inplace(|x| x * coupling.up);
    }
    z.add_row_inplace(&rbm.b_h)?;
    Ok(z)
}

fn visible_probs(rbm: &RbmLayer, h: &Matrix, coupling: Coupling) -> Result<Matrix> {
    let mut z = h.matmul_t(&rbm.w)?;
    if coupling.down != 1.0 {
        z.map_inplace(|x| x * coupling.down);
    }
    z.add_row_inplace(&rbm.b_v)?;
    z.map_inplace(sigmoid);
    Ok(z)
}

fn hidden_mean(rbm: &RbmLayer, v: &Matrix, coupling: Coupling) -> Result<Matrix> {
    let z = hidden_pre(rbm, v, coupling)?;
    match rbm.activation {
        ActivationKind::Sigmoid | ActivationKind::Identity => Ok(activate(&z, rbm.activation)),
        other => Err(Error::config(format!(
            "contrastive divergence needs sigmoid or identity hidden units, not {other}"
        ))),
    }
}

fn sample_hidden(rbm: &RbmLayer, mean: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    match rbm.activation {
        ActivationKind::Identity => Ok(sample_gaussian(mean, rng)),
        _ => sample_bernoulli(mean, rng),
    }
}

/// One CD-k gradient estimate on `batch`.
///
/// The chain starts from hidden states sampled at the data; every downward pass
/// sees the hidden emission masked by one dropout mask drawn for this batch.
/// Statistics use hidden probabilities at the data and visible/hidden
/// probabilities at the reconstruction.
pub fn cd_step(
    rbm: &RbmLayer,
    batch: &Matrix,
    k: usize,
    dropout_rate: f64,
    rng: &mut Rng,
) -> Result<CdGradients> {
    cd_step_coupled(rbm, batch, k, dropout_rate, Coupling::TIED, rng).map(|(g, _)| g)
}

/// [`cd_step`] with direction multipliers; also returns the mean
/// reconstruction error `½Σ(v − v_recon)²` per row.
pub fn cd_step_coupled(
    rbm: &RbmLayer,
    batch: &Matrix,
    k: usize,
    dropout_rate: f64,
    coupling: Coupling,
    rng: &mut Rng,
) -> Result<(CdGradients, f64)> {
    if batch.rows() == 0 {
        return Err(Error::EmptyBatch("cd_step"));
    }
    if k == 0 {
        return Err(Error::config("Gibbs steps must be at least 1"));
    }
    check_rate("cd_step", dropout_rate)?;
    let m = batch.rows() as f64;

    let ph_data = hidden_mean(rbm, batch, coupling)?;
    let mask = if dropout_rate > 0.0 {
        Some(dropout_mask(rbm.n_hidden(), dropout_rate, rng)?)
    } else {
        None
    };
    let mut h = sample_hidden(rbm, &ph_data, rng)?;
    let mut v_recon = Matrix::zeros(0, 0);
    let mut ph_recon = Matrix::zeros(0, 0);
    for step in 0..k {
        if let Some(mask) = &mask {
            h = h.mul_row(mask)?;
        }
        let pv = visible_probs(rbm, &h, coupling)?;
        let last = step + 1 == k;
        let v_next = if last {
            pv
        } else {
            sample_bernoulli(&pv, rng)?
        };
        let ph = hidden_mean(rbm, &v_next, coupling)?;
        if last {
            v_recon = v_next;
            ph_recon = ph;
        } else {
            h = sample_hidden(rbm, &ph, rng)?;
        }
    }

    let mut dw = v_recon.t_matmul(&ph_recon)?;
    dw.axpy_inplace(-1.0, &batch.t_matmul(&ph_data)?)?;
    dw.map_inplace(|x| x / m);
    let db_v = v_recon.column_means().sub(&batch.column_means())?;
    let db_h = ph_recon.column_means().sub(&ph_data.column_means())?;
    let recon = loss(&v_recon, batch, LossKind::Mse)?;
    Ok((CdGradients { dw, db_v, db_h }, recon))
}

/// One full Gibbs sweep `v → h → v'` with sampled states, returning `(h, v')`.
pub fn gibbs_sweep(rbm: &RbmLayer, v: &Matrix, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    let h = sample_hidden(rbm, &hidden_mean(rbm, v, Coupling::TIED)?, rng)?;
    let v_next = sample_bernoulli(&visible_probs(rbm, &h, Coupling::TIED)?, rng)?;
    Ok((h, v_next))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Batch count used when splitting raw data; training consumes pre-split batches.
    pub num_batches: usize,
    pub lr: f64,
    pub anneal: AnnealSchedule,
    pub momentum: MomentumSchedule,
    pub decay: WeightDecay,
    pub dropout_rate: f64,
    pub gibbs_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            num_batches: 200,
            lr: 0.1,
            anneal: AnnealSchedule::NONE,
            momentum: MomentumSchedule::default(),
            decay: WeightDecay::None,
            dropout_rate: 0.0,
            gibbs_steps: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gibbs_steps == 0 {
            return Err(Error::config("Gibbs steps must be at least 1"));
        }
        if self.num_batches == 0 {
            return Err(Error::config("number of batches must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout rate must lie in [0, 1], got {}",
                self.dropout_rate
            )));
        }
        AnnealSchedule::new(self.anneal.kind, self.anneal.k)?;
        self.momentum.validate()?;
        self.decay.validate()
    }
}

/// CD-k training of binary (sigmoid) hidden units. Returns one record per epoch.
pub fn train_binary(
    rbm: &mut RbmLayer,
    data: &[Matrix],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    rbm.activation = ActivationKind::Sigmoid;
    train_coupled(rbm, data, cfg, Coupling::TIED, "rbm")
}

/// CD-k training with linear-Gaussian hidden units: the hidden mean is the
/// pre-activation itself and samples add unit-variance noise.
pub fn train_linear(
    rbm: &mut RbmLayer,
    data: &[Matrix],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    rbm.activation = ActivationKind::Identity;
    train_coupled(rbm, data, cfg, Coupling::TIED, "rbm-linear")
}

/// Shared CD training loop; `coupling` scales the weight per direction.
pub fn train_coupled(
    rbm: &mut RbmLayer,
    data: &[Matrix],
    cfg: &TrainConfig,
    coupling: Coupling,
    phase: &'static str,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut rng = Rng::stream(cfg.seed, CD_STREAM + rbm.index as u64);
    let mut vel = Velocity::zeros_like([&rbm.w, &rbm.b_v, &rbm.b_h]);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = anneal(cfg.lr, epoch, cfg.anneal);
        let rho = momentum_coeff(epoch, cfg.momentum);
        let mut largest = 0.0f64;
        let mut recon = 0.0;
        for batch in data {
            let (g, err) = cd_step_coupled(
                rbm,
                batch,
                cfg.gibbs_steps,
                cfg.dropout_rate,
                coupling,
                &mut rng,
            )?;
            largest = largest.max(g.max_abs());
            recon += err;
            apply_update(&mut rbm.w, &g.dw, vel.slot_mut(0), lr, rho, cfg.decay)?;
            apply_update(
                &mut rbm.b_v,
                &g.db_v,
                vel.slot_mut(1),
                lr,
                rho,
                WeightDecay::None,
            )?;
            apply_update(
                &mut rbm.b_h,
                &g.db_h,
                vel.slot_mut(2),
                lr,
                rho,
                WeightDecay::None,
            )?;
        }
        if !rbm.is_finite() {
            return Err(Error::NonFinite("rbm training"));
        }
        history.push(EpochRecord::new(
            phase,
            epoch,
            lr,
            rho,
            recon / data.len().max(1) as f64,
        ));
        if largest < EARLY_STOP_GRADIENT {
            break;
        }
    }
    Ok(history)
}

/// Softmax head: class probabilities `softmax(x·w + b_h)`.
pub fn head_probabilities(head: &RbmLayer, features: &Matrix) -> Result<Matrix> {
    Ok(activate(
        &head.hidden_input(features)?,
        ActivationKind::Softmax,
    ))
}

/// Cross-entropy gradient of a softmax head: `xᵀ(c − t)/m` and `mean(c − t)`.
pub fn head_gradients(
    head: &RbmLayer,
    features: &Matrix,
    labels: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let c = head_probabilities(head, features)?;
    labels.ensure_shape("head_gradients", c.shape())?;
    let delta = c.sub(labels)?;
    let m = features.rows().max(1) as f64;
    let dw = features.t_matmul(&delta)?.scale(1.0 / m);
    Ok((dw, delta.column_means()))
}

/// Batch gradient descent of a softmax head on fixed features.
///
/// `set.data()` holds feature batches, `set.labels()` one-of-K targets.
pub fn train_classifier_head(
    head: &mut RbmLayer,
    set: &BatchedDataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    head.activation = ActivationKind::Softmax;
    for (x, t) in set.iter() {
        x.ensure_cols("train_classifier_head", head.n_visible())?;
        t.ensure_cols("train_classifier_head", head.n_hidden())?;
        validate_one_of_k(t)?;
    }
    let mut vel = Velocity::zeros_like([&head.w, &head.b_h]);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = anneal(cfg.lr, epoch, cfg.anneal);
        let rho = momentum_coeff(epoch, cfg.momentum);
        let (mut total, mut wrong, mut seen) = (0.0, 0usize, 0usize);
        for (x, t) in set.iter() {
            let c = head_probabilities(head, x)?;
            total += loss(&c, t, LossKind::CrossEntropy)? * x.rows() as f64;
            wrong += c
                .argmax_rows()
                .iter()
                .zip(t.argmax_rows())
                .filter(|(p, a)| **p != *a)
                .count();
            seen += x.rows();
            let (dw, db) = head_gradients(head, x, t)?;
            apply_update(&mut head.w, &dw, vel.slot_mut(0), lr, rho, cfg.decay)?;
            apply_update(
                &mut head.b_h,
                &db,
                vel.slot_mut(1),
                lr,
                rho,
                WeightDecay::None,
            )?;
        }
        if !head.is_finite() {
            return Err(Error::NonFinite("classifier head training"));
        }
        let seen = seen.max(1) as f64;
        history.push(
            EpochRecord::new("head", epoch, lr, rho, total / seen).with_error(wrong as f64 / seen),
        );
    }
    Ok(history)
}

/// Classifies `data` through the RBM features and the softmax head.
pub fn classify_rbm(
    rbm: &RbmLayer,
    head: &RbmLayer,
    data: &Matrix,
    labels: &Matrix,
) -> Result<ClassificationReport> {
    let features = rbm.hidden_given_visible(data)?;
    let scores = head_probabilities(head, &features)?;
    ClassificationReport::from_scores(&scores, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny(seed: u64) -> RbmLayer {
        let mut rng = Rng::new(seed);
        RbmLayer {
            w: rng.normal_matrix(3, 2, 1.0),
            b_v: rng.normal_matrix(1, 3, 0.5),
            b_h: rng.normal_matrix(1, 2, 0.5),
            activation: ActivationKind::Sigmoid,
            index: 0,
        }
    }

    #[test]
    fn zero_machine_conditionals_are_half() {
        let rbm = RbmLayer::zeros(4, 3);
        let v = Matrix::from_rows(&[[1.0, 0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(
            rbm.hidden_given_visible(&v).unwrap(),
            Matrix::filled(1, 3, 0.5)
        );
        assert_eq!(
            rbm.visible_given_hidden(&Matrix::zeros(2, 3)).unwrap(),
            Matrix::filled(2, 4, 0.5)
        );
    }

    #[test]
    fn single_weight_conditional() {
        let mut rbm = RbmLayer::zeros(1, 1);
        rbm.w.set(0, 0, libm::log(3.0));
        let p = rbm
            .hidden_given_visible(&Matrix::row_vector(&[1.0]))
            .unwrap();
        assert!((p.get(0, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn transposed_machine_swaps_directions() {
        let rbm = tiny(3);
        let h = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(
            rbm.transposed().hidden_given_visible(&h).unwrap(),
            rbm.visible_given_hidden(&h).unwrap()
        );
        let v = Matrix::from_rows(&[[1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(
            rbm.transposed().visible_given_hidden(&v).unwrap(),
            rbm.hidden_given_visible(&v).unwrap()
        );
    }

    #[test]
    fn energy_examples() {
        let rbm = RbmLayer::zeros(2, 2);
        assert_eq!(rbm.energy(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        let mut c = RbmLayer::zeros(2, 2);
        c.w = Matrix::filled(2, 2, 0.3);
        assert!((c.energy(&[1.0, 1.0], &[1.0, 1.0]).unwrap() + 1.2).abs() < 1e-15);
        assert!(matches!(
            rbm.energy(&[0.5, 0.0], &[0.0, 0.0]),
            Err(Error::Domain { .. })
        ));
        assert!(rbm.energy(&[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn free_energy_examples() {
        let rbm = RbmLayer::zeros(3, 4);
        let f = rbm.free_energy(&[1.0, 0.0, 1.0]).unwrap();
        assert!((f + 4.0 * core::f64::consts::LN_2).abs() < 1e-15);
        let mut one = RbmLayer::zeros(1, 1);
        one.b_v = Matrix::row_vector(&[1.0]);
        let f = one.free_energy(&[1.0]).unwrap();
        assert!((f + 1.0 + core::f64::consts::LN_2).abs() < 1e-15);
        assert!(rbm.free_energy(&[1.0]).is_err());
    }

    #[test]
    fn full_dropout_reconstructs_from_visible_bias() {
        let mut rbm = tiny(8);
        rbm.b_v = Matrix::row_vector(&[-1.0, 0.0, 2.0]);
        let batch = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
        let g = cd_step(&rbm, &batch, 1, 1.0, &mut Rng::new(0)).unwrap();
        let recon_mean = g.db_v.add(&batch.column_means()).unwrap();
        for (i, &b) in [-1.0, 0.0, 2.0].iter().enumerate() {
            assert!((recon_mean.get(0, i) - sigmoid(b)).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_sample_matches_single_sample_when_sampling_is_certain() {
        // Saturated conditionals make every Bernoulli draw deterministic.
        let mut rbm = RbmLayer::zeros(3, 2);
        rbm.w = Matrix::from_rows(&[[60.0, -60.0], [-60.0, 60.0], [60.0, 60.0]]).unwrap();
        rbm.b_h = Matrix::row_vector(&[-30.0, -30.0]);
        rbm.b_v = Matrix::row_vector(&[-30.0, -30.0, -90.0]);
        let x = Matrix::row_vector(&[1.0, 0.0, 0.0]);
        let rep = Matrix::vstack(&[x.clone(), x.clone(), x.clone(), x.clone()]).unwrap();
        let one = cd_step(&rbm, &x, 2, 0.0, &mut Rng::new(1)).unwrap();
        let many = cd_step(&rbm, &rep, 2, 0.0, &mut Rng::new(2)).unwrap();
        for (a, b) in [
            (&one.dw, &many.dw),
            (&one.db_v, &many.db_v),
            (&one.db_h, &many.db_h),
        ] {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cd_errors() {
        let rbm = tiny(1);
        let mut rng = Rng::new(0);
        assert!(matches!(
            cd_step(&rbm, &Matrix::zeros(0, 3), 1, 0.0, &mut rng),
            Err(Error::EmptyBatch(_))
        ));
        assert!(cd_step(&rbm, &Matrix::zeros(1, 3), 0, 0.0, &mut rng).is_err());
        assert!(cd_step(&rbm, &Matrix::zeros(1, 2), 1, 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_epochs_leave_parameters_alone() {
        let mut rbm = tiny(2);
        let before = rbm.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let data = vec![Matrix::filled(4, 3, 1.0)];
        assert!(train_binary(&mut rbm, &data, &cfg).unwrap().is_empty());
        assert_eq!(rbm, before);
        let mut lin = tiny(2);
        train_linear(&mut lin, &data, &cfg).unwrap();
        assert_eq!(lin.w, before.w);
    }

    #[test]
    fn update_count_is_batches_times_epochs() {
        let mut rbm = RbmLayer::random(6, 3, 0, &mut Rng::new(0));
        let data: Vec<Matrix> = (0..200).map(|_| Matrix::filled(50, 6, 1.0)).collect();
        let cfg = TrainConfig {
            epochs: 10,
            lr: 0.01,
            ..TrainConfig::default()
        };
        let hist = train_binary(&mut rbm, &data, &cfg).unwrap();
        assert_eq!(hist.len() * data.len(), 2000);
    }

    #[test]
    fn linear_hidden_mean_is_bias_for_zero_weights() {
        let mut rbm = RbmLayer::zeros(3, 2).with_activation(ActivationKind::Identity);
        rbm.b_h = Matrix::row_vector(&[0.7, -1.3]);
        let h = rbm
            .hidden_given_visible(&Matrix::filled(5, 3, 1.0))
            .unwrap();
        assert!(h.iter_rows().all(|r| r == [0.7, -1.3]));
    }

    #[test]
    fn linear_samples_have_unit_variance() {
        let mean = Matrix::filled(1, 100_000, 2.0);
        let s = sample_gaussian(&mean, &mut Rng::new(17));
        let mu = s.sum() / 1e5;
        let var = s
            .as_slice()
            .iter()
            .map(|x| (x - mu) * (x - mu))
            .sum::<f64>()
            / (1e5 - 1.0);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn head_gradient_vanishes_on_perfect_fit() {
        let mut head = RbmLayer::zeros(2, 2);
        head.w = Matrix::from_rows(&[[80.0, -80.0], [-80.0, 80.0]]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (dw, db) = head_gradients(&head, &x, &x).unwrap();
        assert!(dw.max_abs() < 1e-60 && db.max_abs() < 1e-60);
    }

    #[test]
    fn head_rejects_non_one_hot_labels() {
        let mut head = RbmLayer::zeros(2, 2);
        let set = BatchedDataset::new(
            vec![Matrix::zeros(1, 2)],
            vec![Matrix::row_vector(&[0.5, 0.5])],
        )
        .unwrap();
        assert!(train_classifier_head(&mut head, &set, &TrainConfig::default()).is_err());
    }

    #[test]
    fn classify_perfect_and_shift_invariant() {
        let mut head = RbmLayer::zeros(3, 3).with_activation(ActivationKind::Softmax);
        head.w = Matrix::from_fn(3, 3, |i, j| if i == j { 50.0 } else { 0.0 });
        let mut rbm = RbmLayer::zeros(3, 3);
        rbm.w = Matrix::from_fn(3, 3, |i, j| if i == j { 40.0 } else { 0.0 });
        rbm.b_h = Matrix::filled(1, 3, -20.0);
        let x = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let r = classify_rbm(&rbm, &head, &x, &x).unwrap();
        assert_eq!(r.error_rate, 0.0);
        let mut shifted = head.clone();
        shifted.b_h = Matrix::filled(1, 3, 123.0);
        assert_eq!(classify_rbm(&rbm, &shifted, &x, &x).unwrap(), r);
    }
}
