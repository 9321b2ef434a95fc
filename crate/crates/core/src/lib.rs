//! Deep pyramidal networks with a Gaussian-smoothed leaky-ReLU activation,
//! full-batch gradient descent, and global-convergence certificates.
//!
//! The crate is organized bottom-up:
//!
//! - [`activation`]: closed-form smoothed leaky-ReLU and its derivatives.
//! - [`network`]: shapes, datasets, parameters, forward pass and square loss.
//! - [`gradients`]: backprop gradients, Jacobian blocks, PL lower bound, GD trainer.
//! - [`certificates`]: initialization spectra, rate constants, initial-condition
//!   checks and trajectory invariant monitoring.
//! - [`initializers`]: width-N initialization class, LeCun initialization and
//!   its width/step-size formulas, synthetic sphere data.
//! - [`lambda_star`]: expected first-layer Gram matrix (Monte Carlo and Hermite
//!   series), Khatri-Rao powers and Hermite coefficients.
//!
//! All arithmetic is `f64`. Matrices are `nalgebra::DMatrix<f64>`, which is
//! column-major, so `vec(M)` is a plain copy of the storage.

pub mod activation;
pub mod certificates;
pub mod error;
pub mod gradients;
pub mod initializers;
pub mod io;
pub mod lambda_star;
pub mod linalg;
pub mod network;
pub mod rng;

pub use activation::ActivationParams;
pub use certificates::{certify, Certificate};
pub use error::{Error, Result};
pub use gradients::{grad, train, GradientBundle, TrainConfig, TrainLog};
pub use network::{forward, loss, Dataset, ForwardTrace, Params, Shape};
