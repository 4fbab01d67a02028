//! Relative density ratio estimation for comparing a real sample with a
//! generated one.
//!
//! The relative density ratio `r(x) = p(x) / ((p(x) + q(x)) / 2)` lives in
//! `[0, 2]`; it is fitted by a small ReLU network that minimizes the balancing
//! loss, the variational form of the squared Hellinger distance. The fitted
//! ratio yields a global score `Ĥ² = 1 - loss` (at most `1 - 1/√2`), per-sample
//! scores, and downstream attribution reports.
//!
//! Modules:
//! - [`numerics`]: matrices, seeded randomness, stable scalar kernels
//! - [`divergence`]: variational objectives and the balancing loss
//! - [`network`]: feedforward network, backpropagation, Adam, model documents
//! - [`estimator`]: training and evaluation of ratio models
//! - [`synthetic`]: closed-form 1D benchmark scenarios and quadrature oracles
//! - [`analytics`]: histograms, summaries, logistic attribution, Spearman/CLR scans

pub mod analytics;
pub mod divergence;
pub mod error;
pub mod estimator;
pub mod network;
pub mod numerics;
pub mod synthetic;

pub use error::{Error, Result};
