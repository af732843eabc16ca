//! Gaussian mixture modeling on the hypersphere and on SPD matrices.
//!
//! Three estimators share one initialization and one log-likelihood
//! interface: a Euclidean mixture in the embedding space, a Euclidean mixture
//! fitted in a single tangent space, and a Riemannian mixture whose
//! components each live in their own tangent space. The `bench` module runs
//! the density-estimation comparison between them.

pub mod bench;
pub mod distributions;
pub mod error;
pub mod frechet;
pub mod gmm;
pub mod io;
pub mod linalg;
pub mod manifold;

pub use error::{Error, Result};
pub use manifold::{ManifoldId, ManifoldKind, Point, Tangent, TangentBasis};
