//! JSON model documents. Floats are written with shortest round-trip
//! formatting and parsed exactly, so a reloaded mixture is bit-identical.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Component, ComponentMean, Mixture, Variant};
use crate::error::{Error, Result};
use crate::manifold::{ManifoldId, ManifoldKind, Point};

pub const MODEL_FORMAT: &str = "manifoldmix-model/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentDocument {
    pub prior: f64,
    /// Embedding coordinates, tangent coordinates, or the mean point's
    /// embedding coordinates (row-major matrix for SPD), depending on the variant.
    pub mean: Vec<f64>,
    pub cov_dim: usize,
    /// Row-major covariance.
    pub cov: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDocument {
    pub format: String,
    pub variant: String,
    pub manifold: ManifoldId,
    /// Tangent-space basepoint (embedding coordinates), tangent variant only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent_base: Option<Vec<f64>>,
    /// How mean and covariance coordinates are to be read.
    pub basis: String,
    pub components: Vec<ComponentDocument>,
    pub train_log: Vec<f64>,
    pub reseeds: usize,
}

fn basis_description(variant: &Variant, m: ManifoldId) -> String {
    let tangent = match m.kind() {
        ManifoldKind::Sphere => "householder frame mapping e1 to the basepoint",
        ManifoldKind::Spd => "orthonormal symmetric basis pushed forward by P^1/2 V P^1/2",
    };
    match (variant, m.kind()) {
        (Variant::Euclidean, ManifoldKind::Sphere) => "embedding coordinates in R^(d+1)".into(),
        (Variant::Euclidean, ManifoldKind::Spd) => {
            "orthonormal symmetric vectorization (upper triangle row-major, off-diagonals scaled by sqrt 2)".into()
        }
        (Variant::Tangent { .. }, _) => format!("tangent coordinates at tangent_base: {tangent}"),
        (Variant::Riemannian, _) => format!("means are points; covariances in each mean's {tangent}"),
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl MixtureDocument {
    pub fn from_mixture(m: &Mixture) -> Self {
        let components = m
            .components
            .iter()
            .map(|c| ComponentDocument {
                prior: c.prior,
                mean: match &c.mean {
                    ComponentMean::Vector(v) => v.as_slice().to_vec(),
                    ComponentMean::Point(p) => p.coords().as_slice().to_vec(),
                },
                cov_dim: c.cov.nrows(),
                cov: row_major(&c.cov),
            })
            .collect();
        Self {
            format: MODEL_FORMAT.into(),
            variant: m.variant.name().into(),
            manifold: m.manifold,
            tangent_base: match &m.variant {
                Variant::Tangent { base } => Some(base.coords().as_slice().to_vec()),
                _ => None,
            },
            basis: basis_description(&m.variant, m.manifold),
            components,
            train_log: m.train_log.clone(),
            reseeds: m.reseeds,
        }
    }

    pub fn to_mixture(&self) -> Result<Mixture> {
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown model format {:?}", self.format)));
        }
        let variant = match (self.variant.as_str(), &self.tangent_base) {
            ("euclidean", None) => Variant::Euclidean,
            ("riemannian", None) => Variant::Riemannian,
            ("tangent", Some(b)) => Variant::Tangent {
                base: Point::new(self.manifold, b.clone())?,
            },
            ("tangent", None) => return Err(Error::InvalidArgument("tangent model without tangent_base".into())),
            (v, _) => return Err(Error::InvalidArgument(format!("unexpected variant {v:?}"))),
        };
        let components = self
            .components
            .iter()
            .map(|c| {
                if c.cov.len() != c.cov_dim * c.cov_dim {
                    return Err(Error::InvalidArgument("covariance length does not match cov_dim".into()));
                }
                let mean = match variant {
                    Variant::Riemannian => ComponentMean::Point(Point::new(self.manifold, c.mean.clone())?),
                    _ => ComponentMean::Vector(DVector::from_vec(c.mean.clone())),
                };
                Ok(Component {
                    prior: c.prior,
                    mean,
                    cov: DMatrix::from_row_slice(c.cov_dim, c.cov_dim, &c.cov),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mixture = Mixture {
            variant,
            manifold: self.manifold,
            components,
            train_log: self.train_log.clone(),
            reseeds: self.reseeds,
        };
        mixture.validate()?;
        Ok(mixture)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Mixture {
    pub fn to_json(&self) -> Result<String> {
        MixtureDocument::from_mixture(self).to_json()
    }

    pub fn from_json(s: &str) -> Result<Mixture> {
        MixtureDocument::from_json(s)?.to_mixture()
    }
}
