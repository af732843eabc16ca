//! The three competing mixture estimators and their shared log-likelihood.
//!
//! * [`Variant::Euclidean`]: an ordinary Gaussian mixture on the embedding
//!   coordinates (sphere: `R^{d+1}`; SPD: orthonormal symmetric vectorization).
//!   Means are not constrained to the manifold.
//! * [`Variant::Tangent`]: every datum is pushed to a single tangent space with
//!   the logarithmic map and an ordinary mixture is fitted there. The density
//!   on the manifold is the tangent density read back through `log`, with no
//!   volume correction.
//! * [`Variant::Riemannian`]: a mixture of Riemannian Gaussians, each with its
//!   own mean on the manifold and covariance in that mean's tangent space.

mod em;
mod init;
mod serial;

use nalgebra::{DMatrix, DVector};

use crate::distributions::{RgdDensity, RgdParams};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, GaussianLogDensity};
use crate::manifold::{self, tangent_basis, ManifoldId, Point, TangentBasis};

pub use em::{fit_euclidean, fit_riemannian, fit_tangent};
pub use init::{init_shared, MAX_KMEANS_ITERS};
pub use serial::{MixtureDocument, MODEL_FORMAT};

/// Log-density charged to a test point the tangent model cannot represent.
pub const CUT_LOCUS_FLOOR: f64 = -745.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    Euclidean,
    Tangent { base: Point },
    Riemannian,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Euclidean => "euclidean",
            Variant::Tangent { .. } => "tangent",
            Variant::Riemannian => "riemannian",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ComponentMean {
    /// Embedding coordinates (Euclidean) or tangent coordinates (Tangent).
    Vector(DVector<f64>),
    Point(Point),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub prior: f64,
    pub mean: ComponentMean,
    pub cov: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub variant: Variant,
    pub manifold: ManifoldId,
    pub components: Vec<Component>,
    /// Training log-likelihood before the first M-step and after every M-step.
    pub train_log: Vec<f64>,
    /// Number of starving components that were re-seeded during EM.
    pub reseeds: usize,
}

impl Mixture {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn em_iters(&self) -> usize {
        self.train_log.len().saturating_sub(1)
    }

    pub fn final_train_ll(&self) -> f64 {
        self.train_log.last().copied().unwrap_or(f64::NAN)
    }

    /// Means mapped onto the manifold: Euclidean means are projected (they
    /// generally sit inside the sphere), tangent means are pushed through `exp`.
    pub fn means_on_manifold(&self) -> Result<Vec<Point>> {
        let tangent_basis = match &self.variant {
            Variant::Tangent { base } => Some(tangent_basis(base)),
            _ => None,
        };
        self.components
            .iter()
            .map(|c| match (&c.mean, &tangent_basis) {
                (ComponentMean::Point(p), _) => Ok(p.clone()),
                (ComponentMean::Vector(v), Some(b)) => b.exp_coords(v),
                (ComponentMean::Vector(v), None) => manifold::unembed(self.manifold, v),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidArgument("a mixture needs at least one component".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-9 || self.components.iter().any(|c| !(0.0..=1.0).contains(&c.prior)) {
            return Err(Error::InvalidArgument(format!("priors sum to {total}")));
        }
        let dim = match self.variant {
            Variant::Euclidean => self.manifold.embedding_dim(),
            _ => self.manifold.intrinsic_dim(),
        };
        for c in &self.components {
            if c.cov.nrows() != dim || c.cov.ncols() != dim {
                return Err(Error::InvalidArgument(format!("covariance must be {dim}x{dim}")));
            }
            match (&self.variant, &c.mean) {
                (Variant::Riemannian, ComponentMean::Point(p)) if p.manifold() == self.manifold => {}
                (Variant::Euclidean | Variant::Tangent { .. }, ComponentMean::Vector(v)) if v.len() == dim => {}
                _ => return Err(Error::InvalidArgument("component mean does not match the variant".into())),
            }
        }
        if let Variant::Tangent { base } = &self.variant {
            if base.manifold() != self.manifold {
                return Err(Error::ManifoldMismatch(self.manifold, base.manifold()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the absolute change of the training log-likelihood drops below this.
    pub ll_tol: f64,
    /// Added to every covariance diagonal.
    pub cov_reg: f64,
    /// A component whose responsibility mass falls below `reseed_fraction * N` is re-seeded.
    pub reseed_fraction: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            ll_tol: 1e-6,
            cov_reg: 1e-8,
            reseed_fraction: 1e-3,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.ll_tol > 0.0) || !(self.cov_reg > 0.0) || !(self.reseed_fraction > 0.0) {
            return Err(Error::InvalidArgument("EM settings must all be positive".into()));
        }
        Ok(())
    }
}

enum ComponentEval {
    Flat(DVector<f64>, GaussianLogDensity),
    Curved(RgdDensity),
}

/// A mixture prepared for repeated density evaluation.
pub struct MixtureDensity<'a> {
    mixture: &'a Mixture,
    tangent: Option<TangentBasis>,
    comps: Vec<(f64, ComponentEval)>,
}

/// Per-point log-density plus whether the point hit the cut-locus floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLogDensity {
    pub value: f64,
    pub incident: bool,
}

impl<'a> MixtureDensity<'a> {
    pub fn new(mixture: &'a Mixture) -> Result<Self> {
        mixture.validate()?;
        let tangent = match &mixture.variant {
            Variant::Tangent { base } => Some(tangent_basis(base)),
            _ => None,
        };
        let comps = mixture
            .components
            .iter()
            .map(|c| {
                let eval = match &c.mean {
                    ComponentMean::Vector(v) => ComponentEval::Flat(v.clone(), GaussianLogDensity::new(&c.cov)?),
                    ComponentMean::Point(p) => ComponentEval::Curved(RgdDensity::new(&RgdParams {
                        mean: p.clone(),
                        cov: c.cov.clone(),
                    })?),
                };
                Ok((c.prior.ln(), eval))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            mixture,
            tangent,
            comps,
        })
    }

    /// `ln pi_k + ln N_k(x)` for every component; `-inf` where undefined.
    pub(crate) fn component_terms(&self, x: &Point) -> Result<Option<Vec<f64>>> {
        if x.manifold() != self.mixture.manifold {
            return Err(Error::ManifoldMismatch(self.mixture.manifold, x.manifold()));
        }
        let flat = match (&self.mixture.variant, &self.tangent) {
            (Variant::Euclidean, _) => Some(manifold::embed(x)),
            (Variant::Tangent { .. }, Some(b)) => match b.log_coords(x) {
                Ok(c) => Some(c),
                Err(Error::CutLocus { .. }) => return Ok(None),
                Err(e) => return Err(e),
            },
            _ => None,
        };
        let mut terms = Vec::with_capacity(self.comps.len());
        for (log_prior, eval) in &self.comps {
            let t = match eval {
                ComponentEval::Flat(mean, g) => {
                    let v = flat.as_ref().expect("flat variants have flat coordinates");
                    g.log_density(&(v - mean))
                }
                ComponentEval::Curved(rgd) => match rgd.log_pdf(x) {
                    Ok(l) => l,
                    Err(Error::CutLocus { .. }) => f64::NEG_INFINITY,
                    Err(e) => return Err(e),
                },
            };
            terms.push(log_prior + t);
        }
        Ok(Some(terms))
    }

    pub fn log_density(&self, x: &Point) -> Result<PointLogDensity> {
        match self.component_terms(x)? {
            None => Ok(PointLogDensity {
                value: CUT_LOCUS_FLOOR,
                incident: true,
            }),
            Some(terms) => {
                let v = log_sum_exp(&terms);
                if v == f64::NEG_INFINITY {
                    Ok(PointLogDensity {
                        value: CUT_LOCUS_FLOOR,
                        incident: true,
                    })
                } else {
                    Ok(PointLogDensity {
                        value: v,
                        incident: false,
                    })
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoglikReport {
    pub total: f64,
    pub per_point: Vec<f64>,
    /// Points charged [`CUT_LOCUS_FLOOR`] because the model cannot represent them.
    pub incidents: usize,
}

pub fn loglik_report(m: &Mixture, data: &[Point]) -> Result<LoglikReport> {
    let dens = MixtureDensity::new(m)?;
    let mut per_point = Vec::with_capacity(data.len());
    let mut incidents = 0;
    for x in data {
        let l = dens.log_density(x)?;
        if l.incident {
            incidents += 1;
        }
        per_point.push(l.value);
    }
    if incidents > 0 {
        log::warn!(
            "{incidents} test points lie on the cut locus of the {} model's tangent space; \
             each was charged a log-density of {CUT_LOCUS_FLOOR}",
            m.variant.name()
        );
    }
    Ok(LoglikReport {
        total: per_point.iter().sum(),
        per_point,
        incidents,
    })
}

/// Summed log-likelihood of `data` under the mixture.
pub fn loglik(m: &Mixture, data: &[Point]) -> Result<f64> {
    Ok(loglik_report(m, data)?.total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    /// Cell-center latitude and longitude in degrees.
    pub lat: f64,
    pub lon: f64,
    pub point: Point,
    pub density: f64,
    /// Solid angle of the cell in steradians.
    pub solid_angle: f64,
}

/// Mixture density on a latitude-longitude grid over `S^2` (cells of
/// `resolution_deg` degrees). Points are `(cos lat cos lon, cos lat sin lon, sin lat)`.
pub fn density_grid(m: &Mixture, resolution_deg: f64) -> Result<Vec<GridCell>> {
    if m.manifold != ManifoldId::sphere(2)? {
        return Err(Error::Unsupported(format!("density grids are only available on sphere:2, not {}", m.manifold)));
    }
    if !(resolution_deg > 0.0 && resolution_deg <= 90.0) {
        return Err(Error::InvalidArgument("grid resolution must lie in (0, 90] degrees".into()));
    }
    let n_lat = (180.0 / resolution_deg).round() as usize;
    let n_lon = (360.0 / resolution_deg).round() as usize;
    let dlat = std::f64::consts::PI / n_lat as f64;
    let dlon = 2.0 * std::f64::consts::PI / n_lon as f64;
    let dens = MixtureDensity::new(m)?;
    let mut out = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        let lo = -std::f64::consts::FRAC_PI_2 + i as f64 * dlat;
        let hi = lo + dlat;
        let lat = lo + 0.5 * dlat;
        let solid_angle = dlon * (hi.sin() - lo.sin());
        for j in 0..n_lon {
            let lon = -std::f64::consts::PI + (j as f64 + 0.5) * dlon;
            let point = manifold::project_to_manifold(
                m.manifold,
                &[lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()],
            )?;
            let l = dens.log_density(&point)?;
            let density = if l.incident { 0.0 } else { l.value.exp() };
            out.push(GridCell {
                lat: lat.to_degrees(),
                lon: lon.to_degrees(),
                point,
                density,
                solid_angle,
            });
        }
    }
    Ok(out)
}
