//! Non-intrusive reduced-order models built on proper orthogonal
//! decomposition, with quadratic correction operators.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`linalg`]: dense matrices, one-sided Jacobi SVD, least squares.
//! - [`pod`]: snapshot sets, POD bases, projection and RBF coefficient maps.
//! - [`quadls`]: the least-squares quadratic closure operator.
//! - [`neural`]: a small MLP engine with Adam and the QuadNet / QuadNet-μ
//!   operator networks.
//! - [`sampler`]: Boltzmann-like collocation point selection.
//! - [`synthetic`]: parametric field generators with known correction structure.
//! - [`metrics`]: relative errors and summary statistics.
//!
//! File IO, dataset manifests and the command line live in the `quadrom` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
mod math;

pub mod interp;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod pod;
pub mod quadls;
pub mod sampler;
pub mod synthetic;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use pod::{KernelKind, PodBasis, RbfInterpolant, SnapshotSet};
pub use quadls::{QuadCoeffVector, QuadOperatorLs};
