//! Random-matrix ensembles, hafnians, submatrix densities, divergence
//! estimators, Weingarten moments and Gaussian boson sampling probabilities.

pub mod densities;
pub mod divergence;
pub mod ensembles;
pub mod error;
pub mod gbs;
pub mod hafnian;
pub mod harness;
pub mod matrix;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod weingarten;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, C64};
pub use rng::RngStream;
pub use stats::MCEstimate;
