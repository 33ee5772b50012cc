//! Energy-based deep learning on dense `f64` matrices: restricted and deep
//! Boltzmann machines, deep belief networks, feed-forward and autoencoder
//! stacks, plus exact enumeration references for tiny models.
//!
//! Builds without `std` (with `alloc`) when the default `std` feature is off.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod activation;
pub mod autoencoder;
pub mod data;
pub mod dbm;
pub mod dbn;
pub mod dnn;
pub mod error;
pub mod history;
pub mod loss;
pub mod matrix;
pub mod multimodal;
pub mod optim;
pub mod oracle;
pub mod rbm;
pub mod rng;

pub use activation::ActivationKind;
pub use error::{Error, Result};
pub use history::EpochRecord;
pub use loss::LossKind;
pub use matrix::Matrix;
pub use rng::Rng;
