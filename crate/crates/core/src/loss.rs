//! Losses averaged over rows, with matching derivatives w.r.t. the prediction.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor applied inside `log` for cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `½ Σ (pred − target)²` per row.
    Mse,
    /// `−Σ t log c` per row.
    CrossEntropy,
    /// `Σ |pred − target|` per row.
    Absolute,
    /// Row-wise argmax mismatch indicator; reporting only.
    Binary,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Absolute => "absolute",
            LossKind::Binary => "binary",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            LossKind::Mse,
            LossKind::CrossEntropy,
            LossKind::Absolute,
            LossKind::Binary,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::config(alloc::format!("unknown loss '{s}'")))
    }
}

pub fn loss(pred: &Matrix, target: &Matrix, kind: LossKind) -> Result<f64> {
    target.ensure_shape("loss", pred.shape())?;
    let rows = pred.rows().max(1) as f64;
    let p = pred.as_slice();
    let t = target.as_slice();
    let total = match kind {
        LossKind::Mse => 0.5 * p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        LossKind::CrossEntropy => -p
            .iter()
            .zip(t)
            .map(|(c, t)| t * libm::log(c.max(LOG_FLOOR)))
            .sum::<f64>(),
        LossKind::Absolute => p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>(),
        LossKind::Binary => {
            let predicted = pred.argmax_rows();
            let actual = target.argmax_rows();
            predicted
                .iter()
                .zip(&actual)
                .filter(|(a, b)| a != b)
                .count() as f64
        }
    };
    Ok(total / rows)
}

/// `∂ loss / ∂ pred` for the same row-averaged loss.
pub fn loss_gradient(pred: &Matrix, target: &Matrix, kind: LossKind) -> Result<Matrix> {
    target.ensure_shape("loss_gradient", pred.shape())?;
    let inv = 1.0 / pred.rows().max(1) as f64;
    match kind {
        LossKind::Mse => pred.zip_map(target, |a, b| (a - b) * inv),
        LossKind::CrossEntropy => {
            pred.zip_map(
                target,
                |c, t| {
                    if c > LOG_FLOOR {
                        -t / c * inv
                    } else {
                        0.0
                    }
                },
            )
        }
        LossKind::Absolute => pred.zip_map(target, |a, b| {
            let d = a - b;
            if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            }
        }),
        LossKind::Binary => Err(Error::config("binary loss is not differentiable")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        let a = Matrix::row_vector(&[0.3, 0.7]);
        assert_eq!(loss(&a, &a, LossKind::Mse).unwrap(), 0.0);
        let ce = loss(
            &Matrix::row_vector(&[0.25; 4]),
            &Matrix::row_vector(&[0.0, 1.0, 0.0, 0.0]),
            LossKind::CrossEntropy,
        )
        .unwrap();
        assert!((ce - libm::log(4.0)).abs() < 1e-15);
        let mse = loss(
            &Matrix::row_vector(&[1.0, 0.0]),
            &Matrix::row_vector(&[0.0, 0.0]),
            LossKind::Mse,
        )
        .unwrap();
        assert_eq!(mse, 0.5);
    }

    #[test]
    fn cross_entropy_of_zero_probability_is_finite() {
        let l = loss(
            &Matrix::row_vector(&[0.0, 1.0]),
            &Matrix::row_vector(&[1.0, 0.0]),
            LossKind::CrossEntropy,
        )
        .unwrap();
        assert!((l - 12.0 * libm::log(10.0)).abs() < 1e-9);
    }

    #[test]
    fn binary_loss_counts_row_mismatches() {
        let pred = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap();
        let target = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(loss(&pred, &target, LossKind::Binary).unwrap(), 0.5);
        assert!(loss_gradient(&pred, &target, LossKind::Binary).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(loss(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1), LossKind::Mse).is_err());
    }

    proptest! {
        #[test]
        fn gradients_match_finite_differences(
            pred in proptest::collection::vec(0.05f64..0.95, 6),
            target in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let p = Matrix::from_vec(2, 3, pred).unwrap();
            let t = Matrix::from_vec(2, 3, target).unwrap();
            let h = 1e-6;
            for kind in [LossKind::Mse, LossKind::CrossEntropy, LossKind::Absolute] {
                let g = loss_gradient(&p, &t, kind).unwrap();
                for i in 0..p.len() {
                    if kind == LossKind::Absolute
                        && (p.as_slice()[i] - t.as_slice()[i]).abs() < 2.0 * h
                    {
                        continue;
                    }
                    let mut up = p.clone();
                    up.as_mut_slice()[i] += h;
                    let mut dn = p.clone();
                    dn.as_mut_slice()[i] -= h;
                    let fd = (loss(&up, &t, kind).unwrap() - loss(&dn, &t, kind).unwrap()) / (2.0 * h);
                    let an = g.as_slice()[i];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                    prop_assert!(rel < 1e-6, "{kind} coord {i}: fd {fd} analytic {an}");
                }
            }
        }
    }
}
