//! Learning-rate annealing, momentum, weight decay, dropout masks and the shared
//! momentum gradient step.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AnnealKind {
    #[default]
    None,
    /// `lr · e^(−k t)`
    Exponential,
    /// `lr / (1 + k t)`
    Divide,
    /// `lr · 0.5^⌊t/5⌋`; ignores `k`.
    Step,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AnnealSchedule {
    pub kind: AnnealKind,
    pub k: f64,
}

impl AnnealSchedule {
    pub const NONE: AnnealSchedule = AnnealSchedule {
        kind: AnnealKind::None,
        k: 0.0,
    };

    pub fn new(kind: AnnealKind, k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::config(alloc::format!(
                "anneal coefficient must be >= 0, got {k}"
            )));
        }
        Ok(AnnealSchedule { kind, k })
    }

    pub fn step() -> Self {
        AnnealSchedule {
            kind: AnnealKind::Step,
            k: 0.0,
        }
    }
}

/// Annealed learning rate at (0-based) `epoch`.
pub fn anneal(base_lr: f64, epoch: usize, sched: AnnealSchedule) -> f64 {
    let t = epoch as f64;
    match sched.kind {
        AnnealKind::None => base_lr,
        AnnealKind::Exponential => base_lr * libm::exp(-sched.k * t),
        AnnealKind::Divide => base_lr / (1.0 + sched.k * t),
        AnnealKind::Step => base_lr * libm::pow(0.5, (epoch / 5) as f64),
    }
}

/// Two-level momentum: `early` before `threshold`, `late` from it on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumSchedule {
    pub early: f64,
    pub late: f64,
    pub threshold: usize,
}

impl Default for MomentumSchedule {
    fn default() -> Self {
        MomentumSchedule {
            early: 0.5,
            late: 0.9,
            threshold: 5,
        }
    }
}

impl MomentumSchedule {
    pub fn constant(rho: f64) -> Self {
        MomentumSchedule {
            early: rho,
            late: rho,
            threshold: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for rho in [self.early, self.late] {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::config(alloc::format!(
                    "momentum must lie in [0, 1), got {rho}"
                )));
            }
        }
        Ok(())
    }
}

pub fn momentum_coeff(epoch: usize, sched: MomentumSchedule) -> f64 {
    if epoch < sched.threshold {
        sched.early
    } else {
        sched.late
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum WeightDecay {
    #[default]
    None,
    /// Penalty `k Σ|w|`.
    L1(f64),
    /// Penalty `k Σw²`.
    L2(f64),
}

impl WeightDecay {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightDecay::L1(k) | WeightDecay::L2(k) if !(k >= 0.0 && k.is_finite()) => {
                Err(Error::config(alloc::format!(
                    "weight decay coefficient must be >= 0, got {k}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Gradient of the weight-decay penalty.
pub fn decay_penalty_gradient(w: &Matrix, spec: WeightDecay) -> Matrix {
    match spec {
        WeightDecay::None => Matrix::zeros(w.rows(), w.cols()),
        WeightDecay::L1(k) => w.map(|x| {
            if x > 0.0 {
                k
            } else if x < 0.0 {
                -k
            } else {
                0.0
            }
        }),
        WeightDecay::L2(k) => w.map(|x| 2.0 * k * x),
    }
}

/// Previous update for each parameter tensor; starts at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    slots: Vec<Matrix>,
}

impl Velocity {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        Velocity {
            slots: params
                .into_iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn slot(&self, i: usize) -> &Matrix {
        &self.slots[i]
    }

    pub fn slot_mut(&mut self, i: usize) -> &mut Matrix {
        &mut self.slots[i]
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Momentum step: `vel ← ρ·vel − lr·(grad + penalty(param))`, then `param ← param + vel`.
pub fn apply_update(
    param: &mut Matrix,
    grad: &Matrix,
    vel: &mut Matrix,
    lr: f64,
    rho: f64,
    decay: WeightDecay,
) -> Result<()> {
    grad.ensure_shape("apply_update", param.shape())?;
    vel.ensure_shape("apply_update", param.shape())?;
    let penalty = match decay {
        WeightDecay::None => None,
        spec => Some(decay_penalty_gradient(param, spec)),
    };
    let p = param.as_mut_slice();
    let v = vel.as_mut_slice();
    let g = grad.as_slice();
    match penalty {
        None => {
            for i in 0..p.len() {
                v[i] = rho * v[i] - lr * g[i];
                p[i] += v[i];
            }
        }
        Some(pen) => {
            let pen = pen.as_slice();
            for i in 0..p.len() {
                v[i] = rho * v[i] - lr * (g[i] + pen[i]);
                p[i] += v[i];
            }
        }
    }
    Ok(())
}

/// `1 × n` keep-mask: 1 where a fresh uniform draw exceeds `rate`.
pub fn dropout_mask(n: usize, rate: f64, rng: &mut Rng) -> Result<Matrix> {
    check_rate("dropout_mask", rate)?;
    Ok(Matrix::from_fn(1, n, |_, _| {
        if rng.uniform() > rate {
            1.0
        } else {
            0.0
        }
    }))
}

pub(crate) fn check_rate(op: &'static str, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::domain(
            op,
            alloc::format!("rate {rate} outside [0, 1]"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn anneal_examples() {
        assert!((anneal(0.1, 7, AnnealSchedule::step()) - 0.05).abs() < 1e-15);
        let div = AnnealSchedule::new(AnnealKind::Divide, 1.0).unwrap();
        assert!((anneal(0.1, 4, div) - 0.02).abs() < 1e-15);
        for kind in [
            AnnealKind::None,
            AnnealKind::Exponential,
            AnnealKind::Divide,
            AnnealKind::Step,
        ] {
            assert_eq!(anneal(0.3, 0, AnnealSchedule { kind, k: 0.7 }), 0.3);
        }
        assert!(AnnealSchedule::new(AnnealKind::Divide, -1.0).is_err());
    }

    #[test]
    fn momentum_examples() {
        let s = MomentumSchedule::default();
        assert_eq!(momentum_coeff(3, s), 0.5);
        assert_eq!(momentum_coeff(5, s), 0.9);
        let zero = MomentumSchedule::constant(0.0);
        assert!((0..20).all(|t| momentum_coeff(t, zero) == 0.0));
        assert!(MomentumSchedule::constant(1.0).validate().is_err());
    }

    #[test]
    fn decay_examples() {
        let w = Matrix::row_vector(&[2.0]);
        assert_eq!(
            decay_penalty_gradient(&w, WeightDecay::L2(0.5)).as_slice(),
            &[2.0]
        );
        let w = Matrix::row_vector(&[-3.0]);
        assert_eq!(
            decay_penalty_gradient(&w, WeightDecay::L1(0.5)).as_slice(),
            &[-0.5]
        );
        assert_eq!(
            decay_penalty_gradient(&w, WeightDecay::None),
            Matrix::zeros(1, 1)
        );
    }

    #[test]
    fn momentum_recurrence_unrolls_by_hand() {
        // vel₁ = −g, vel₂ = 0.9·(−g) − g = −1.9g
        let g = Matrix::row_vector(&[1.0, -2.0]);
        let mut p = Matrix::zeros(1, 2);
        let mut v = Matrix::zeros(1, 2);
        apply_update(&mut p, &g, &mut v, 1.0, 0.9, WeightDecay::None).unwrap();
        apply_update(&mut p, &g, &mut v, 1.0, 0.9, WeightDecay::None).unwrap();
        assert!((v.get(0, 0) + 1.9).abs() < 1e-15);
        assert!((v.get(0, 1) - 3.8).abs() < 1e-15);
        assert!((p.get(0, 0) + 2.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_coasts_on_velocity() {
        let mut p = Matrix::row_vector(&[1.0]);
        let mut v = Matrix::row_vector(&[0.5]);
        apply_update(
            &mut p,
            &Matrix::zeros(1, 1),
            &mut v,
            0.1,
            0.8,
            WeightDecay::None,
        )
        .unwrap();
        assert_eq!(p.as_slice(), &[1.0 + 0.8 * 0.5]);
    }

    #[test]
    fn penalty_scales_with_learning_rate() {
        let w = Matrix::row_vector(&[1.5, -0.5]);
        let g = Matrix::zeros(1, 2);
        let run = |lr: f64| {
            let mut p = w.clone();
            let mut v = Matrix::zeros(1, 2);
            apply_update(&mut p, &g, &mut v, lr, 0.0, WeightDecay::L2(0.5)).unwrap();
            v
        };
        assert_eq!(run(0.2), run(0.1).scale(2.0));
    }

    #[test]
    fn dropout_extremes_and_rate() {
        let mut rng = Rng::new(5);
        assert_eq!(
            dropout_mask(100, 0.0, &mut rng).unwrap(),
            Matrix::filled(1, 100, 1.0)
        );
        assert_eq!(
            dropout_mask(100, 1.0, &mut rng).unwrap(),
            Matrix::zeros(1, 100)
        );
        let kept = dropout_mask(100_000, 0.2, &mut Rng::new(42)).unwrap().sum() / 1e5;
        assert!((kept - 0.8).abs() < 0.01, "kept {kept}");
        assert!(dropout_mask(3, 1.2, &mut rng).is_err());
    }

    #[test]
    fn masked_emission_zeros_exactly_where_mask_is_zero() {
        let mut rng = Rng::new(11);
        let h = Matrix::filled(3, 50, 0.7);
        let m = dropout_mask(50, 0.5, &mut rng).unwrap();
        let masked = h.mul_row(&m).unwrap();
        for r in 0..3 {
            for c in 0..50 {
                assert_eq!(masked.get(r, c) == 0.0, m.get(0, c) == 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn anneal_is_non_increasing(lr in 1e-4f64..1.0, k in 0.0f64..2.0, t in 0usize..100) {
            for kind in [AnnealKind::None, AnnealKind::Exponential, AnnealKind::Divide, AnnealKind::Step] {
                let s = AnnealSchedule { kind, k };
                prop_assert!(anneal(lr, t + 1, s) <= anneal(lr, t, s));
            }
        }

        #[test]
        fn plain_step_is_bit_exact_gradient_descent(
            p in proptest::collection::vec(-5.0f64..5.0, 4),
            g in proptest::collection::vec(-5.0f64..5.0, 4),
            lr in 1e-3f64..1.0,
        ) {
            let mut param = Matrix::row_vector(&p);
            let grad = Matrix::row_vector(&g);
            let mut vel = Matrix::zeros(1, 4);
            apply_update(&mut param, &grad, &mut vel, lr, 0.0, WeightDecay::None).unwrap();
            for i in 0..4 {
                prop_assert_eq!(param.as_slice()[i].to_bits(), (p[i] - lr * g[i]).to_bits());
            }
        }
    }
}
