//! Weighted Fréchet (Karcher) means and tangent-space covariances.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{self, tangent_basis, ManifoldKind, Point};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanConfig {
    pub max_iters: usize,
    /// Stop once the metric norm of the mean tangent update is below this.
    pub tol: f64,
    pub step: f64,
}

impl Default for MeanConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-9,
            step: 1.0,
        }
    }
}

impl MeanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidArgument("step must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Result of a Karcher flow run, with the objective at every visited iterate.
#[derive(Clone, Debug)]
pub struct MeanTrace {
    pub mean: Point,
    pub iters: usize,
    /// `sum_n w_n d(mu_t, x_n)^2` for `t = 0..=iters`.
    pub objective: Vec<f64>,
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn check_weights(points: &[Point], weights: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("Fréchet mean of an empty set".into()));
    }
    if weights.len() != points.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} points",
            weights.len(),
            points.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("weights have zero total mass".into()));
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
    }
    let m = points[0].manifold();
    if let Some(p) = points.iter().find(|p| p.manifold() != m) {
        return Err(Error::ManifoldMismatch(m, p.manifold()));
    }
    Ok(())
}

/// Projection of the weighted embedding average; falls back to the heaviest
/// point when the average vanishes (perfectly balanced antipodal data).
fn initial_guess(points: &[Point], weights: &[f64]) -> Result<Point> {
    let m = points[0].manifold();
    let mut avg = DVector::zeros(m.ambient_dim());
    for (p, &w) in points.iter().zip(weights) {
        avg += p.coords() * w;
    }
    if m.kind() == ManifoldKind::Sphere && avg.norm() < 1e-12 {
        let heaviest = weights
            .iter()
            .enumerate()
            .fold(0, |best, (i, &w)| if w > weights[best] { i } else { best });
        return Ok(points[heaviest].clone());
    }
    manifold::project_to_manifold(m, avg.as_slice())
}

/// `sum_n w_n d(mu, x_n)^2`.
pub fn karcher_objective(points: &[Point], weights: &[f64], mu: &Point) -> Result<f64> {
    let mut total = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            total += w * manifold::distance(mu, p)?.powi(2);
        }
    }
    Ok(total)
}

/// Fixed-point Karcher flow `mu <- exp(mu, step * sum_n w_n log(mu, x_n))`
/// from an explicit starting point. Weights are assumed valid.
pub(crate) fn karcher_flow(
    points: &[Point],
    weights: &[f64],
    init: Point,
    cfg: &MeanConfig,
    trace: bool,
) -> Result<MeanTrace> {
    let mut mu = init;
    let mut objective = Vec::new();
    if trace {
        objective.push(karcher_objective(points, weights, &mu)?);
    }
    let mut last_step = f64::INFINITY;
    for iter in 0..cfg.max_iters {
        let basis = tangent_basis(&mu);
        let mut grad = DVector::zeros(basis.dim());
        for (p, &w) in points.iter().zip(weights) {
            if w > 0.0 {
                grad += basis.log_coords(p)? * w;
            }
        }
        last_step = grad.norm();
        if last_step <= cfg.tol {
            return Ok(MeanTrace {
                mean: mu,
                iters: iter,
                objective,
            });
        }
        mu = basis.exp_coords(&(grad * cfg.step))?;
        if trace {
            objective.push(karcher_objective(points, weights, &mu)?);
        }
    }
    Err(Error::NotConverged {
        iters: cfg.max_iters,
        last_step,
        last: Box::new(mu),
    })
}

/// Weighted Fréchet mean, initialized at the projected weighted embedding average.
pub fn frechet_mean(points: &[Point], weights: &[f64], cfg: &MeanConfig) -> Result<Point> {
    Ok(frechet_mean_traced(points, weights, cfg)?.mean)
}

pub fn frechet_mean_traced(points: &[Point], weights: &[f64], cfg: &MeanConfig) -> Result<MeanTrace> {
    cfg.validate()?;
    check_weights(points, weights)?;
    let init = initial_guess(points, weights)?;
    if init.manifold().is_sphere() {
        // Uniqueness needs the data inside an open hemisphere.
        let mut outside = 0;
        for (p, &w) in points.iter().zip(weights) {
            if w > 0.0 && manifold::distance(&init, p)? >= std::f64::consts::FRAC_PI_2 {
                outside += 1;
            }
        }
        if outside > 0 {
            log::warn!(
                "{outside} weighted points lie outside the hemisphere around the chordal mean; \
                 the Fréchet mean may not be unique"
            );
        }
    }
    karcher_flow(points, weights, init, cfg, true)
}

/// Covariance of `log(mean, x_n)` in the deterministic basis at `mean`.
///
/// Unweighted: divides by `N - 1` when `unbiased`, by `N` otherwise.
/// Weighted: `sum w c c^T / sum w`, whatever `unbiased` says. Points with zero
/// weight are skipped entirely.
pub fn tangent_covariance(
    points: &[Point],
    mean: &Point,
    weights: Option<&[f64]>,
    unbiased: bool,
) -> Result<DMatrix<f64>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("covariance of an empty set".into()));
    }
    let basis = tangent_basis(mean);
    let dim = basis.dim();
    let mut scatter = DMatrix::zeros(dim, dim);
    let norm = match weights {
        None => {
            if unbiased && n < 2 {
                return Err(Error::InvalidArgument("unbiased covariance needs at least 2 points".into()));
            }
            for p in points {
                let c = basis.log_coords(p)?;
                scatter.ger(1.0, &c, &c, 1.0);
            }
            if unbiased {
                (n - 1) as f64
            } else {
                n as f64
            }
        }
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidArgument(format!("{} weights for {n} points", w.len())));
            }
            let mut total = 0.0;
            for (p, &wi) in points.iter().zip(w) {
                if wi < 0.0 || !wi.is_finite() {
                    return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
                }
                if wi > 0.0 {
                    let c = basis.log_coords(p)?;
                    scatter.ger(wi, &c, &c, 1.0);
                    total += wi;
                }
            }
            if total == 0.0 {
                return Err(Error::InvalidArgument("weights have zero total mass".into()));
            }
            total
        }
    };
    scatter /= norm;
    Ok(crate::linalg::symmetrize(&scatter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldId, Tangent};

    fn sp(v: &[f64]) -> Point {
        Point::new(ManifoldId::sphere(v.len() - 1).unwrap(), v.to_vec()).unwrap()
    }

    #[test]
    fn single_point_mean_is_the_point() {
        let x = sp(&[0.0, 0.6, 0.8]);
        let m = frechet_mean(std::slice::from_ref(&x), &[1.0], &MeanConfig::default()).unwrap();
        assert!((m.coords() - x.coords()).amax() < 1e-15);
    }

    #[test]
    fn midpoint_of_two_basis_vectors() {
        let pts = [sp(&[1.0, 0.0, 0.0]), sp(&[0.0, 1.0, 0.0])];
        let m = frechet_mean(&pts, &[0.5, 0.5], &MeanConfig::default()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.coords() - DVector::from_vec(vec![h, h, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_weights() {
        let pts = [sp(&[1.0, 0.0, 0.0]), sp(&[0.0, 1.0, 0.0])];
        let cfg = MeanConfig::default();
        assert!(frechet_mean(&pts, &[0.0, 0.0], &cfg).is_err());
        assert!(frechet_mean(&pts, &[0.7, 0.7], &cfg).is_err());
        assert!(frechet_mean(&pts, &[1.0], &cfg).is_err());
        assert!(frechet_mean(&[], &[], &cfg).is_err());
        let bad = MeanConfig { tol: 0.0, ..cfg };
        assert!(frechet_mean(&pts, &[0.5, 0.5], &bad).is_err());
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let pts = [sp(&[1.0, 0.0, 0.0]), sp(&[0.0, 1.0, 0.0]), sp(&[0.0, 0.0, 1.0])];
        let cfg = MeanConfig {
            max_iters: 1,
            tol: 1e-300,
            step: 0.1,
        };
        match frechet_mean(&pts, &uniform_weights(3), &cfg) {
            Err(Error::NotConverged { last, iters, .. }) => {
                assert_eq!(iters, 1);
                assert!(last.manifold().is_sphere());
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn covariance_of_symmetric_pair() {
        let mu = sp(&[1.0, 0.0, 0.0]);
        let u = Tangent::new(&mu, vec![0.0, 0.3, 0.0]).unwrap();
        let pts = [
            manifold::exp(&mu, &u).unwrap(),
            manifold::exp(&mu, &u.scale(-1.0)).unwrap(),
        ];
        let cov = tangent_covariance(&pts, &mu, None, true).unwrap();
        assert!((cov[(0, 0)] - 0.18).abs() < 1e-14);
        assert!(cov[(0, 1)].abs() < 1e-15 && cov[(1, 0)].abs() < 1e-15 && cov[(1, 1)].abs() < 1e-15);

        let biased = tangent_covariance(&pts, &mu, None, false).unwrap();
        assert!((biased[(0, 0)] - 0.09).abs() < 1e-14);
        let weighted = tangent_covariance(&pts, &mu, Some(&[2.0, 2.0]), true).unwrap();
        assert!((weighted[(0, 0)] - 0.09).abs() < 1e-14);
    }

    #[test]
    fn covariance_at_data_is_zero() {
        let mu = sp(&[0.0, 0.0, 1.0]);
        let cov = tangent_covariance(&[mu.clone(), mu.clone(), mu.clone()], &mu, None, true).unwrap();
        assert_eq!(cov.amax(), 0.0);
        assert!(tangent_covariance(std::slice::from_ref(&mu), &mu, None, true).is_err());
    }

    #[test]
    fn covariance_reports_cut_locus() {
        let mu = sp(&[1.0, 0.0, 0.0]);
        let err = tangent_covariance(&[sp(&[-1.0, 0.0, 0.0]), mu.clone()], &mu, None, true).unwrap_err();
        assert!(matches!(err, Error::CutLocus { .. }));
    }
}
