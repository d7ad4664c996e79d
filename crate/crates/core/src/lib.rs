//! Numerical toolkit for generalized spin-boson Hamiltonians with polynomial
//! field couplings: truncated Fock spaces, the spin-parity fiber
//! decomposition, ground-state spectral checks and pull-through identities.

pub mod eigen;
pub mod error;
pub mod fock;
pub mod harness;
pub mod model;
pub mod onebody;
pub mod pullthrough;
pub mod sparse;
pub mod spectra;
pub mod vector;

pub use error::{Error, Result};
pub use fock::{FockBasis, FockVector};
pub use onebody::{CouplingFamily, Mode, ModeSet, ModeTag, ModelParams};
pub use sparse::SparseOp;
