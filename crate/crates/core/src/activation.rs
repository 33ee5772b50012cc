//! Element-wise activations and their derivatives expressed through the activation output.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

// Keeps sigmoid outputs strictly inside (0, 1) where f64 rounding would hit the ends.
const SIGMOID_LO: f64 = f64::MIN_POSITIVE;
const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu,
    Softmax,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Softmax,
        ActivationKind::Identity,
    ];

    /// Stable byte tag used by the model container.
    pub fn tag(self) -> u8 {
        match self {
            ActivationKind::Sigmoid => 0,
            ActivationKind::Tanh => 1,
            ActivationKind::Relu => 2,
            ActivationKind::LeakyRelu => 3,
            ActivationKind::Softmax => 4,
            ActivationKind::Identity => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::config(alloc::format!("unknown activation tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Softmax => "softmax",
            ActivationKind::Identity => "identity",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(alloc::format!("unknown activation '{s}'")))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_LO, SIGMOID_HI)
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Applies `kind` element-wise; softmax is applied per row.
pub fn activate(z: &Matrix, kind: ActivationKind) -> Matrix {
    match kind {
        ActivationKind::Sigmoid => z.map(sigmoid),
        ActivationKind::Tanh => z.map(libm::tanh),
        ActivationKind::Relu => z.map(|x| x.max(0.0)),
        ActivationKind::LeakyRelu => z.map(|x| if x > 0.0 { x } else { LEAKY_SLOPE * x }),
        ActivationKind::Identity => z.clone(),
        ActivationKind::Softmax => {
            let mut out = z.clone();
            for r in 0..out.rows() {
                softmax_inplace(out.row_mut(r));
            }
            out
        }
    }
}

pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - max);
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// Derivative `g'(z)` written in terms of the output `a = g(z)`.
///
/// Softmax is rejected: its Jacobian is only used fused with cross-entropy,
/// where the output delta collapses to `c − t`.
pub fn activation_derivative(a: &Matrix, kind: ActivationKind) -> Result<Matrix> {
    Ok(match kind {
        ActivationKind::Sigmoid => a.map(|x| x * (1.0 - x)),
        ActivationKind::Tanh => a.map(|x| 1.0 - x * x),
        ActivationKind::Relu => a.map(|x| if x > 0.0 { 1.0 } else { 0.0 }),
        ActivationKind::LeakyRelu => a.map(|x| if x > 0.0 { 1.0 } else { LEAKY_SLOPE }),
        ActivationKind::Identity => a.map(|_| 1.0),
        ActivationKind::Softmax => {
            return Err(Error::config(
                "softmax derivative is only defined jointly with cross-entropy",
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        let s = activate(
            &Matrix::row_vector(&[0.0, libm::log(3.0)]),
            ActivationKind::Sigmoid,
        );
        assert_eq!(s.get(0, 0), 0.5);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);
        let sm = activate(&Matrix::row_vector(&[1.0; 4]), ActivationKind::Softmax);
        assert_eq!(sm.as_slice(), &[0.25; 4]);
        let d = activation_derivative(
            &Matrix::row_vector(&[0.5, 0.0, 0.75]),
            ActivationKind::Sigmoid,
        )
        .unwrap();
        assert_eq!(d.as_slice(), &[0.25, 0.0, 0.1875]);
    }

    #[test]
    fn softmax_derivative_is_rejected() {
        assert!(activation_derivative(&Matrix::zeros(1, 2), ActivationKind::Softmax).is_err());
    }

    #[test]
    fn parse_and_tags_round_trip() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
            assert_eq!(ActivationKind::from_tag(k.tag()).unwrap(), k);
        }
        assert!(matches!(
            "swish".parse::<ActivationKind>(),
            Err(Error::Config(_))
        ));
        assert!(ActivationKind::from_tag(99).is_err());
    }

    #[test]
    fn softmax_handles_large_inputs() {
        let sm = activate(
            &Matrix::row_vector(&[1000.0, 1000.0]),
            ActivationKind::Softmax,
        );
        assert_eq!(sm.as_slice(), &[0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn sigmoid_stays_in_open_unit_interval(x in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let s = sigmoid(x);
            prop_assert!(s > 0.0 && s < 1.0);
        }

        #[test]
        fn softmax_rows_sum_to_one(row in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let sm = activate(&Matrix::row_vector(&row), ActivationKind::Softmax);
            prop_assert!((sm.sum() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn derivative_matches_central_difference(z in -10.0f64..10.0) {
            let h = 1e-5;
            for kind in [ActivationKind::Sigmoid, ActivationKind::Tanh] {
                let f = |x: f64| activate(&Matrix::row_vector(&[x]), kind).get(0, 0);
                let fd = (f(z + h) - f(z - h)) / (2.0 * h);
                let a = Matrix::row_vector(&[f(z)]);
                let d = activation_derivative(&a, kind).unwrap().get(0, 0);
                prop_assert!((fd - d).abs() < 1e-6, "{kind}: fd {fd} vs {d}");
            }
        }
    }
}
