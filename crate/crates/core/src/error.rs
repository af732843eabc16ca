use thiserror::Error;

use crate::manifold::{ManifoldId, Point};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("invalid point on {manifold}: {reason}")]
    InvalidPoint { manifold: ManifoldId, reason: String },

    #[error("invalid tangent vector: {0}")]
    InvalidTangent(String),

    #[error("tangent vectors are attached to different basepoints")]
    BasepointMismatch,

    #[error("points live on different manifolds ({0} vs {1})")]
    ManifoldMismatch(ManifoldId, ManifoldId),

    /// The logarithmic map is undefined at (or numerically too close to) the
    /// cut locus: the exponential map is only a local diffeomorphism.
    #[error(
        "point at geodesic distance {distance:.12} from the basepoint is on the cut locus \
         (injectivity radius {radius:.12}); the exponential map is only a local diffeomorphism"
    )]
    CutLocus { distance: f64, radius: f64 },

    #[error(
        "datum {index} is on the cut locus of the tangent-space basepoint (distance {distance:.12}); \
         a single tangent space cannot represent it because the exponential map is only a local diffeomorphism"
    )]
    TangentCutLocus { index: usize, distance: f64 },

    #[error("Fréchet mean did not converge after {iters} iterations (last update norm {last_step:e})")]
    NotConverged {
        iters: usize,
        last_step: f64,
        last: Box<Point>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler acceptance rate {rate:e} fell below 1e-4; covariance is pathological")]
    PathologicalCovariance { rate: f64 },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("{failed} of {total} targets failed, above the 20% budget")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
