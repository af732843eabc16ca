use nalgebra::{DMatrix, DVector};

use super::{Component, ComponentMean, EmConfig, Mixture, MixtureDensity, Variant, CUT_LOCUS_FLOOR};
use crate::distributions::{RgdDensity, RgdParams};
use crate::error::{Error, Result};
use crate::frechet::{self, karcher_flow, tangent_covariance, MeanConfig};
use crate::linalg::{self, GaussianLogDensity};
use crate::manifold::{self, tangent_basis, ManifoldId, Point};

fn check_inputs(data: &[Point], assignments: &[usize], cfg: &EmConfig) -> Result<(ManifoldId, usize)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a mixture to no data".into()));
    }
    if assignments.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} assignments for {} points",
            assignments.len(),
            data.len()
        )));
    }
    let m = data[0].manifold();
    if let Some(p) = data.iter().find(|p| p.manifold() != m) {
        return Err(Error::ManifoldMismatch(m, p.manifold()));
    }
    let k = assignments.iter().max().copied().unwrap_or(0) + 1;
    Ok((m, k))
}

/// Posterior responsibilities from per-component log terms. Returns the
/// summed log-likelihood, the responsibilities and the per-point log-density.
/// A point every component rejects gets zero responsibility and the floor value.
fn responsibilities(terms: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let mut total = 0.0;
    let mut resp = Vec::with_capacity(terms.len());
    let mut per_point = Vec::with_capacity(terms.len());
    for row in terms {
        let lse = linalg::log_sum_exp(row);
        if lse == f64::NEG_INFINITY {
            resp.push(vec![0.0; row.len()]);
            per_point.push(CUT_LOCUS_FLOOR);
            total += CUT_LOCUS_FLOOR;
            continue;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut r: Vec<f64> = row.iter().map(|t| (t - max).exp()).collect();
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= s);
        resp.push(r);
        per_point.push(lse);
        total += lse;
    }
    (total, resp, per_point)
}

/// Indices of the lowest-density points, one per starving component.
fn reseed_sites(per_point: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..per_point.len()).collect();
    idx.sort_by(|&a, &b| per_point[a].total_cmp(&per_point[b]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

fn normalize_priors(priors: &mut [f64]) {
    let s: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= s);
}

fn regularize(cov: DMatrix<f64>, reg: f64) -> DMatrix<f64> {
    let n = cov.nrows();
    linalg::symmetrize(&cov) + DMatrix::identity(n, n) * reg
}

struct FlatParams {
    priors: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

fn weighted_stats(x: &[DVector<f64>], w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = x[0].len();
    let total: f64 = w.iter().sum();
    let mut mean = DVector::zeros(dim);
    for (xi, wi) in x.iter().zip(w) {
        mean += xi * *wi;
    }
    mean /= total;
    let mut cov = DMatrix::zeros(dim, dim);
    for (xi, wi) in x.iter().zip(w) {
        if *wi > 0.0 {
            let c = xi - &mean;
            cov.ger(*wi, &c, &c, 1.0);
        }
    }
    cov /= total;
    (mean, cov)
}

fn flat_log_terms(x: &[DVector<f64>], p: &FlatParams) -> Result<Vec<Vec<f64>>> {
    let gs = p.covs.iter().map(GaussianLogDensity::new).collect::<Result<Vec<_>>>()?;
    Ok(x.iter()
        .map(|xi| {
            p.priors
                .iter()
                .zip(&p.means)
                .zip(&gs)
                .map(|((pr, mu), g)| pr.ln() + g.log_density(&(xi - mu)))
                .collect()
        })
        .collect())
}

/// Plain EM on vectors, started from the hard clusters in `labels`.
fn flat_em(x: &[DVector<f64>], labels: &[usize], k: usize, cfg: &EmConfig) -> Result<(FlatParams, Vec<f64>, usize)> {
    let n = x.len();
    let threshold = cfg.reseed_fraction * n as f64;
    let all = vec![1.0; n];
    let (_, global_cov) = weighted_stats(x, &all);
    let global_cov = regularize(global_cov, cfg.cov_reg);

    let mut params = FlatParams {
        priors: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        covs: Vec::with_capacity(k),
    };
    for c in 0..k {
        let w: Vec<f64> = labels.iter().map(|l| if *l == c { 1.0 } else { 0.0 }).collect();
        let count: f64 = w.iter().sum();
        if count == 0.0 {
            params.priors.push(0.0);
            params.means.push(x[0].clone());
            params.covs.push(global_cov.clone());
        } else {
            let (mean, cov) = weighted_stats(x, &w);
            params.priors.push(count / n as f64);
            params.means.push(mean);
            params.covs.push(regularize(cov, cfg.cov_reg));
        }
    }

    let (mut ll, mut resp, mut per_point) = responsibilities(&flat_log_terms(x, &params)?);
    let mut log = vec![ll];
    let mut reseeds = 0;
    for _ in 0..cfg.max_iters {
        let mass: Vec<f64> = (0..k).map(|c| resp.iter().map(|r| r[c]).sum()).collect();
        let starving: Vec<usize> = (0..k).filter(|&c| mass[c] < threshold).collect();
        let sites = reseed_sites(&per_point, starving.len());
        let mut next = FlatParams {
            priors: vec![0.0; k],
            means: Vec::with_capacity(k),
            covs: Vec::with_capacity(k),
        };
        for c in 0..k {
            if let Some(pos) = starving.iter().position(|s| *s == c) {
                next.priors[c] = 1.0 / n as f64;
                next.means.push(x[sites[pos]].clone());
                next.covs.push(global_cov.clone());
                reseeds += 1;
                continue;
            }
            let w: Vec<f64> = resp.iter().map(|r| r[c]).collect();
            let (mean, cov) = weighted_stats(x, &w);
            next.priors[c] = mass[c] / n as f64;
            next.means.push(mean);
            next.covs.push(regularize(cov, cfg.cov_reg));
        }
        normalize_priors(&mut next.priors);
        params = next;
        let prev = ll;
        (ll, resp, per_point) = responsibilities(&flat_log_terms(x, &params)?);
        log.push(ll);
        if (ll - prev).abs() < cfg.ll_tol {
            break;
        }
    }
    Ok((params, log, reseeds))
}

fn flat_mixture(variant: Variant, m: ManifoldId, params: FlatParams, log: Vec<f64>, reseeds: usize) -> Mixture {
    let components = params
        .priors
        .into_iter()
        .zip(params.means)
        .zip(params.covs)
        .map(|((prior, mean), cov)| Component {
            prior,
            mean: ComponentMean::Vector(mean),
            cov,
        })
        .collect();
    Mixture {
        variant,
        manifold: m,
        components,
        train_log: log,
        reseeds,
    }
}

/// EM in the embedding space. Means are unconstrained, so on the sphere they
/// typically end up inside the ball.
pub fn fit_euclidean(data: &[Point], assignments: &[usize], cfg: &EmConfig) -> Result<Mixture> {
    let (m, k) = check_inputs(data, assignments, cfg)?;
    let x: Vec<DVector<f64>> = data.iter().map(manifold::embed).collect();
    let (params, log, reseeds) = flat_em(&x, assignments, k, cfg)?;
    Ok(flat_mixture(Variant::Euclidean, m, params, log, reseeds))
}

/// EM on the coordinates of `log(base, x_n)`: the single-tangent-space model.
pub fn fit_tangent(data: &[Point], base: &Point, assignments: &[usize], cfg: &EmConfig) -> Result<Mixture> {
    let (m, k) = check_inputs(data, assignments, cfg)?;
    if base.manifold() != m {
        return Err(Error::ManifoldMismatch(m, base.manifold()));
    }
    let basis = tangent_basis(base);
    let x = data
        .iter()
        .enumerate()
        .map(|(index, p)| {
            basis.log_coords(p).map_err(|e| match e {
                Error::CutLocus { distance, .. } => Error::TangentCutLocus { index, distance },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (params, log, reseeds) = flat_em(&x, assignments, k, cfg)?;
    Ok(flat_mixture(Variant::Tangent { base: base.clone() }, m, params, log, reseeds))
}

fn mean_or_last(r: Result<frechet::MeanTrace>) -> Result<Point> {
    match r {
        Ok(t) => Ok(t.mean),
        Err(Error::NotConverged { last, .. }) => Ok(*last),
        Err(e) => Err(e),
    }
}

/// `sum_n r_n ln N_M(x_n | mean, cov)`; `-inf` if a weighted point is unreachable.
fn weighted_rgd_ll(data: &[Point], w: &[f64], mean: &Point, cov: &DMatrix<f64>) -> Result<f64> {
    let dens = RgdDensity::new(&RgdParams {
        mean: mean.clone(),
        cov: cov.clone(),
    })?;
    let mut total = 0.0;
    for (x, wi) in data.iter().zip(w) {
        if *wi > 0.0 {
            match dens.log_pdf(x) {
                Ok(l) => total += wi * l,
                Err(Error::CutLocus { .. }) => return Ok(f64::NEG_INFINITY),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(total)
}

fn riemannian_terms(data: &[Point], mixture: &Mixture) -> Result<Vec<Vec<f64>>> {
    let dens = MixtureDensity::new(mixture)?;
    data.iter()
        .map(|x| Ok(dens.component_terms(x)?.expect("riemannian terms are always defined")))
        .collect()
}

/// Riemannian EM: responsibilities from Riemannian Gaussian densities, means
/// from weighted Fréchet means, covariances in each mean's tangent space.
///
/// The mean update is guarded: if the weighted Fréchet mean would lower the
/// component's expected complete-data log-likelihood, the previous mean is
/// kept and only the covariance is refreshed, so the training log-likelihood
/// never decreases.
pub fn fit_riemannian(data: &[Point], assignments: &[usize], cfg: &EmConfig) -> Result<Mixture> {
    let (m, k) = check_inputs(data, assignments, cfg)?;
    let n = data.len();
    let threshold = cfg.reseed_fraction * n as f64;
    let dim = m.intrinsic_dim();
    let mean_cfg = MeanConfig::default();

    let mut components = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<Point> = data
            .iter()
            .zip(assignments)
            .filter(|(_, l)| **l == c)
            .map(|(p, _)| p.clone())
            .collect();
        if members.is_empty() {
            components.push(Component {
                prior: 0.0,
                mean: ComponentMean::Point(data[0].clone()),
                cov: DMatrix::identity(dim, dim),
            });
            continue;
        }
        let w = frechet::uniform_weights(members.len());
        let mu = mean_or_last(frechet::frechet_mean_traced(&members, &w, &mean_cfg))?;
        let cov = tangent_covariance(&members, &mu, None, false)?;
        components.push(Component {
            prior: members.len() as f64 / n as f64,
            mean: ComponentMean::Point(mu),
            cov: regularize(cov, cfg.cov_reg),
        });
    }
    let mut mixture = Mixture {
        variant: Variant::Riemannian,
        manifold: m,
        components,
        train_log: Vec::new(),
        reseeds: 0,
    };

    let (mut ll, mut resp, mut per_point) = responsibilities(&riemannian_terms(data, &mixture)?);
    mixture.train_log.push(ll);
    for _ in 0..cfg.max_iters {
        let mass: Vec<f64> = (0..k).map(|c| resp.iter().map(|r| r[c]).sum()).collect();
        let starving: Vec<usize> = (0..k).filter(|&c| mass[c] < threshold).collect();
        let sites = reseed_sites(&per_point, starving.len());
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            let old_mean = match &mixture.components[c].mean {
                ComponentMean::Point(p) => p.clone(),
                ComponentMean::Vector(_) => unreachable!("riemannian components hold points"),
            };
            if let Some(pos) = starving.iter().position(|s| *s == c) {
                let others: Vec<f64> = (0..k)
                    .filter(|j| !starving.contains(j))
                    .map(|j| mixture.components[j].cov.trace() / dim as f64)
                    .collect();
                let scale = if others.is_empty() {
                    1.0
                } else {
                    others.iter().sum::<f64>() / others.len() as f64
                };
                next.push(Component {
                    prior: 1.0 / n as f64,
                    mean: ComponentMean::Point(data[sites[pos]].clone()),
                    cov: DMatrix::identity(dim, dim) * scale,
                });
                mixture.reseeds += 1;
                continue;
            }
            let r: Vec<f64> = resp.iter().map(|row| row[c]).collect();
            let w: Vec<f64> = r.iter().map(|v| v / mass[c]).collect();
            let candidate = mean_or_last(karcher_flow(data, &w, old_mean.clone(), &mean_cfg, false))?;
            let cand_cov = regularize(tangent_covariance(data, &candidate, Some(&w), false)?, cfg.cov_reg);
            let keep_cov = regularize(tangent_covariance(data, &old_mean, Some(&w), false)?, cfg.cov_reg);
            let q_cand = weighted_rgd_ll(data, &r, &candidate, &cand_cov)?;
            let q_keep = weighted_rgd_ll(data, &r, &old_mean, &keep_cov)?;
            let (mean, cov) = if q_cand >= q_keep {
                (candidate, cand_cov)
            } else {
                (old_mean, keep_cov)
            };
            next.push(Component {
                prior: mass[c] / n as f64,
                mean: ComponentMean::Point(mean),
                cov,
            });
        }
        let mut priors: Vec<f64> = next.iter().map(|c| c.prior).collect();
        normalize_priors(&mut priors);
        for (c, p) in next.iter_mut().zip(priors) {
            c.prior = p;
        }
        mixture.components = next;
        let prev = ll;
        (ll, resp, per_point) = responsibilities(&riemannian_terms(data, &mixture)?);
        mixture.train_log.push(ll);
        if (ll - prev).abs() < cfg.ll_tol {
            break;
        }
    }
    Ok(mixture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::loglik;

    fn sp(v: &[f64]) -> Point {
        Point::new(ManifoldId::sphere(v.len() - 1).unwrap(), v.to_vec()).unwrap()
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let terms = vec![vec![-1.0, -2.0, -30.0], vec![f64::NEG_INFINITY, 0.0, -1.0]];
        let (ll, resp, _) = responsibilities(&terms);
        for r in &resp {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(ll.is_finite());
        let (ll, resp, per_point) = responsibilities(&[vec![f64::NEG_INFINITY; 2]]);
        assert_eq!(ll, CUT_LOCUS_FLOOR);
        assert_eq!(per_point, vec![CUT_LOCUS_FLOOR]);
        assert_eq!(resp, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn point_mass_clusters_are_a_fixed_point() {
        let a = sp(&[1.0, 0.0, 0.0]);
        let b = sp(&[0.0, 0.0, 1.0]);
        let data = vec![a.clone(), a.clone(), a.clone(), b.clone()];
        let cfg = EmConfig::default();
        let mix = fit_euclidean(&data, &[0, 0, 0, 1], &cfg).unwrap();
        let means: Vec<_> = mix
            .components
            .iter()
            .map(|c| match &c.mean {
                ComponentMean::Vector(v) => v.clone(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(means[0], a.coords().clone());
        assert_eq!(means[1], b.coords().clone());
        assert!((mix.components[0].prior - 0.75).abs() < 1e-15);
        assert!((mix.components[1].cov.clone() - DMatrix::identity(3, 3) * cfg.cov_reg).amax() < 1e-20);
    }

    #[test]
    fn train_log_matches_loglik() {
        let data: Vec<Point> = (0..12)
            .map(|i| {
                let t = i as f64 * 0.15;
                sp(&[t.cos() * 0.9, t.sin() * 0.9, (1.0f64 - 0.81).sqrt()])
            })
            .collect();
        let labels: Vec<usize> = (0..12).map(|i| i / 6).collect();
        let cfg = EmConfig::default();
        let base = sp(&[0.0, 0.0, 1.0]);
        for mix in [
            fit_euclidean(&data, &labels, &cfg).unwrap(),
            fit_tangent(&data, &base, &labels, &cfg).unwrap(),
            fit_riemannian(&data, &labels, &cfg).unwrap(),
        ] {
            let ll = loglik(&mix, &data).unwrap();
            assert!((ll - mix.final_train_ll()).abs() < 1e-9, "{}: {ll} vs {}", mix.variant.name(), mix.final_train_ll());
        }
    }

    #[test]
    fn tangent_fit_rejects_cut_locus_datum() {
        let base = sp(&[1.0, 0.0, 0.0]);
        let data = vec![sp(&[0.0, 1.0, 0.0]), sp(&[-1.0, 0.0, 0.0])];
        let err = fit_tangent(&data, &base, &[0, 0], &EmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TangentCutLocus { index: 1, .. }));
        assert!(err.to_string().contains("local diffeomorphism"));
    }

    #[test]
    fn input_validation() {
        let data = vec![sp(&[1.0, 0.0, 0.0])];
        assert!(fit_euclidean(&data, &[0, 0], &EmConfig::default()).is_err());
        assert!(fit_euclidean(&[], &[], &EmConfig::default()).is_err());
        let bad = EmConfig {
            ll_tol: 0.0,
            ..EmConfig::default()
        };
        assert!(fit_riemannian(&data, &[0], &bad).is_err());
    }
}
