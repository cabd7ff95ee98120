//! Exact computations for Levi-nondegenerate hypersurface germs and their
//! embeddings into hyperquadrics.
//!
//! All arithmetic is over the Gaussian rationals. Series are truncated at a
//! weighted degree cap (`z` weight 1, `w` weight 2), and every identity the
//! crate checks is checked exactly up to that cap.

pub mod campaign;
pub mod chern_moser;
pub mod embedding;
pub mod error;
pub mod gaussian;
pub mod hermitian;
pub mod json;
pub mod linalg;
pub mod quadric;
pub mod random;
pub mod series;

pub use error::{Error, Result};
pub use gaussian::{GaussianRational, Rational};

/// Library version recorded in report provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
