//! Full-rank parameter-efficient weight updates built from learned diagonal
//! scalings of fixed random low-rank bases, with the low-rank baselines they
//! are compared against, spectral analysis tools, and a small training
//! harness.
//!
//! The crate is organized as:
//! - [`randbasis`]: deterministic random bases, layer slicing, sparse-basis analytics.
//! - [`adapters`]: RandLoRA, LoRA, VeRA-like, NoLA-like and the rank ablations.
//! - [`spectral`]: SVD, block decompositions, Eckart–Young bounds, adapter fitting.
//! - [`trainkit`]: optimizers, teacher–student tasks, CKA, loss landscapes.
//! - [`io`]: the matrix/tensor container and CSV matrices.

pub mod adapters;
pub mod error;
pub mod io;
pub mod presets;
pub mod randbasis;
pub mod rng;
pub mod spectral;
pub mod trainkit;

/// Dense row/column matrix used throughout (`f64`).
pub type Matrix = nalgebra::DMatrix<f64>;

pub use adapters::{AdapterKind, AdapterModel, AdapterSpec, RandLoraAdapter, Scaling};
pub use error::{Error, Result};
pub use randbasis::{BasisConfig, BasisSet, Distribution, LayerSlice};
pub use spectral::{FitReport, SvdResult};
pub use trainkit::{OptimizerConfig, OptimizerKind};
