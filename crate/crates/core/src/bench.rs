//! The density-estimation benchmark: random target mixtures, train/test
//! draws, the three estimators from one shared initialization, and
//! mean ± std aggregation of the summed test log-likelihood. Also home to the
//! pairwise distance-distortion diagnostic and the C-shape dataset.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{
    random_spd, sample_target, ComponentParams, Family, InverseWishartParams, RgdParams, TargetSpec, VmfParams,
};
use crate::error::{Error, Result};
use crate::frechet::{self, MeanConfig};
use crate::gmm::{self, EmConfig, Mixture};
use crate::manifold::{self, tangent_basis, ManifoldId, ManifoldKind, Point};

/// Eigenvalue range of sphere RGD/WGD target covariances.
pub const SPHERE_COV_EIGS: (f64, f64) = (0.01, 0.25);
pub const VMF_CONCENTRATION: (f64, f64) = (20.0, 70.0);
pub const SPD_MEAN_EIGS: (f64, f64) = (0.1, 2.0);
pub const SPD_COV_EIGS: (f64, f64) = (0.1, 0.5);
pub const SPHERE_TARGET_K: usize = 3;
pub const SPD_TARGET_K: usize = 5;
/// A run with more failed targets than this fraction is an error.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;
pub const MAX_DISTORTION_POINTS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euclidean,
    Tangent,
    Riemannian,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Euclidean, Method::Tangent, Method::Riemannian];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Euclidean => "euclidean",
            Method::Tangent => "tangent",
            Method::Riemannian => "riemannian",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub manifold: ManifoldId,
    pub family: Family,
    pub n_targets: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Components of each target mixture: 3 on spheres, 5 on SPD.
    pub k_target: usize,
    pub k_model: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(manifold: ManifoldId, family: Family, seed: u64) -> Self {
        let k = match manifold.kind() {
            ManifoldKind::Sphere => SPHERE_TARGET_K,
            ManifoldKind::Spd => SPD_TARGET_K,
        };
        Self {
            manifold,
            family,
            n_targets: 100,
            n_train: 100,
            n_test: 100,
            k_target: k,
            k_model: k,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_targets == 0 || self.n_train == 0 || self.n_test == 0 || self.k_model == 0 {
            return Err(Error::InvalidArgument("experiment counts must be positive".into()));
        }
        let (k, families): (usize, &[Family]) = match self.manifold.kind() {
            ManifoldKind::Sphere => {
                if self.manifold.size() < 2 {
                    return Err(Error::InvalidArgument("sphere targets need d >= 2".into()));
                }
                (SPHERE_TARGET_K, &[Family::RgdMix, Family::WgdMix, Family::VmfMix])
            }
            ManifoldKind::Spd => {
                if !(2..=3).contains(&self.manifold.size()) {
                    return Err(Error::InvalidArgument("SPD targets are defined for d in {2, 3}".into()));
                }
                (SPD_TARGET_K, &[Family::RgdMix, Family::IwdMix])
            }
        };
        if !families.contains(&self.family) {
            return Err(Error::InvalidArgument(format!(
                "family {} is not available on {}",
                self.family, self.manifold
            )));
        }
        if self.k_target != k {
            return Err(Error::InvalidArgument(format!(
                "targets on {} have {k} components, not {}",
                self.manifold, self.k_target
            )));
        }
        if self.k_model > self.n_train {
            return Err(Error::InvalidArgument("more model components than training points".into()));
        }
        Ok(())
    }
}

/// Per-target seed: a splitmix64 finalizer applied to `seed + (index + 1) * golden`.
pub fn target_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The three sphere target means `(1,..,1)`, `(1,-1,..,-1)` and `(-1,1,..,1)`,
/// normalized onto `S^d`.
pub fn sphere_target_means(d: usize) -> Result<Vec<Point>> {
    let m = ManifoldId::sphere(d)?;
    let n = d + 1;
    let scale = 1.0 / n as f64;
    let raw = [
        vec![scale; n],
        (0..n).map(|i| if i == 0 { scale } else { -scale }).collect(),
        (0..n).map(|i| if i == 0 { -scale } else { scale }).collect::<Vec<_>>(),
    ];
    raw.iter().map(|v| manifold::project_to_manifold(m, v)).collect()
}

fn uniform_mixture_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

pub fn make_sphere_targets<R: Rng + ?Sized>(d: usize, family: Family, rng: &mut R) -> Result<TargetSpec> {
    if d < 2 {
        return Err(Error::InvalidArgument("sphere targets need d >= 2".into()));
    }
    let m = ManifoldId::sphere(d)?;
    let components = sphere_target_means(d)?
        .into_iter()
        .map(|mean| {
            Ok(match family {
                Family::RgdMix | Family::WgdMix => {
                    let cov = random_spd(d, SPHERE_COV_EIGS.0, SPHERE_COV_EIGS.1, rng)?;
                    let p = RgdParams::new(mean, cov)?;
                    if family == Family::RgdMix {
                        ComponentParams::Rgd(p)
                    } else {
                        ComponentParams::Wgd(p)
                    }
                }
                Family::VmfMix => {
                    let kappa = rng.random_range(VMF_CONCENTRATION.0..=VMF_CONCENTRATION.1);
                    ComponentParams::Vmf(VmfParams::new(mean, kappa)?)
                }
                Family::IwdMix => {
                    return Err(Error::Unsupported("inverse-Wishart targets live on SPD manifolds".into()))
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TargetSpec::new(m, family, uniform_mixture_weights(SPHERE_TARGET_K), components)
}

pub fn make_spd_targets<R: Rng + ?Sized>(d: usize, family: Family, rng: &mut R) -> Result<TargetSpec> {
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidArgument("SPD targets are defined for d in {2, 3}".into()));
    }
    if !matches!(family, Family::RgdMix | Family::IwdMix) {
        return Err(Error::Unsupported(format!("{family} targets are not defined on SPD manifolds")));
    }
    let m = ManifoldId::spd(d)?;
    let dim = m.intrinsic_dim();
    let mut components = Vec::with_capacity(SPD_TARGET_K);
    for _ in 0..SPD_TARGET_K {
        let mean = Point::from_matrix(m, &random_spd(d, SPD_MEAN_EIGS.0, SPD_MEAN_EIGS.1, rng)?)?;
        components.push(match family {
            Family::RgdMix => {
                let cov = random_spd(dim, SPD_COV_EIGS.0, SPD_COV_EIGS.1, rng)?;
                ComponentParams::Rgd(RgdParams::new(mean, cov)?)
            }
            _ => {
                let dof = rng.random_range(d as f64 + 1.0..=d as f64 + 3.0);
                ComponentParams::Iwd(InverseWishartParams::new(mean, dof)?)
            }
        });
    }
    TargetSpec::new(m, family, uniform_mixture_weights(SPD_TARGET_K), components)
}

pub fn make_targets<R: Rng + ?Sized>(m: ManifoldId, family: Family, rng: &mut R) -> Result<TargetSpec> {
    match m.kind() {
        ManifoldKind::Sphere => make_sphere_targets(m.size(), family, rng),
        ManifoldKind::Spd => make_spd_targets(m.size(), family, rng),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub train_ll: f64,
    pub test_ll: f64,
    pub em_iters: usize,
    /// Test points charged the cut-locus floor.
    pub incidents: usize,
}

/// The three fitted models of one comparison.
#[derive(Clone, Debug)]
pub struct FittedTrio {
    pub euclidean: Mixture,
    pub tangent: Mixture,
    pub riemannian: Mixture,
}

/// Fréchet mean of the data, falling back to the last Karcher iterate.
pub fn frechet_basepoint(data: &[Point]) -> Result<Point> {
    match frechet::frechet_mean(data, &frechet::uniform_weights(data.len()), &MeanConfig::default()) {
        Ok(p) => Ok(p),
        Err(Error::NotConverged { last, iters, .. }) => {
            log::warn!("Fréchet mean of the training data did not converge in {iters} steps; using the last iterate");
            Ok(*last)
        }
        Err(e) => Err(e),
    }
}

/// Fits all three estimators from the same assignments. The tangent model
/// sits at the Fréchet mean of `train`.
pub fn fit_all(train: &[Point], assignments: &[usize], cfg: &EmConfig) -> Result<FittedTrio> {
    let base = frechet_basepoint(train)?;
    Ok(FittedTrio {
        euclidean: gmm::fit_euclidean(train, assignments, cfg)?,
        tangent: gmm::fit_tangent(train, &base, assignments, cfg)?,
        riemannian: gmm::fit_riemannian(train, assignments, cfg)?,
    })
}

fn outcome(method: Method, model: &Mixture, test: &[Point]) -> Result<MethodOutcome> {
    let report = gmm::loglik_report(model, test)?;
    Ok(MethodOutcome {
        method,
        train_ll: model.final_train_ll(),
        test_ll: report.total,
        em_iters: model.em_iters(),
        incidents: report.incidents,
    })
}

/// Shared initialization on `train`, the three fits, and their test scores.
pub fn compare_methods<R: Rng + ?Sized>(
    train: &[Point],
    test: &[Point],
    k: usize,
    rng: &mut R,
) -> std::result::Result<[MethodOutcome; 3], (Vec<Method>, Error)> {
    let all = || Method::ALL.to_vec();
    let labels = gmm::init_shared(train, k, rng).map_err(|e| (all(), e))?;
    let cfg = EmConfig::default();
    let fit = |m: Method| -> Result<MethodOutcome> {
        let model = match m {
            Method::Euclidean => gmm::fit_euclidean(train, &labels, &cfg)?,
            Method::Tangent => gmm::fit_tangent(train, &frechet_basepoint(train)?, &labels, &cfg)?,
            Method::Riemannian => gmm::fit_riemannian(train, &labels, &cfg)?,
        };
        outcome(m, &model, test)
    };
    let results: Vec<(Method, Result<MethodOutcome>)> = Method::ALL.iter().map(|m| (*m, fit(*m))).collect();
    let failed: Vec<Method> = results.iter().filter(|(_, r)| r.is_err()).map(|(m, _)| *m).collect();
    let mut outcomes = Vec::with_capacity(3);
    let mut first_err = None;
    for (_, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err((failed, e)),
        None => Ok([outcomes[0], outcomes[1], outcomes[2]]),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetRecord {
    pub target_index: usize,
    /// `None` when any method failed; the target is then left out of the aggregate.
    pub outcomes: Option<[MethodOutcome; 3]>,
    pub failed_methods: Vec<Method>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_ll: f64,
    /// Sample standard deviation across completed targets (0 for one target).
    pub std_ll: f64,
    pub failures: usize,
    pub incidents: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub methods: [MethodSummary; 3],
    pub completed: usize,
    pub targets: Vec<TargetRecord>,
    pub wall_seconds: f64,
}

impl ExperimentResult {
    pub fn summary(&self, m: Method) -> &MethodSummary {
        &self.methods[Method::ALL.iter().position(|x| *x == m).expect("known method")]
    }
}

fn run_target(spec: &ExperimentSpec, index: usize) -> TargetRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(target_seed(spec.seed, index));
    let record_err = |failed: Vec<Method>, e: Error| {
        log::warn!("target {index}: {e}");
        TargetRecord {
            target_index: index,
            outcomes: None,
            failed_methods: failed,
            error: Some(e.to_string()),
        }
    };
    let data = match make_targets(spec.manifold, spec.family, &mut rng)
        .and_then(|t| sample_target(&t, spec.n_train + spec.n_test, &mut rng))
    {
        Ok(d) => d,
        Err(e) => return record_err(Method::ALL.to_vec(), e),
    };
    let (train, test) = data.split_at(spec.n_train);
    match compare_methods(train, test, spec.k_model, &mut rng) {
        Ok(o) => TargetRecord {
            target_index: index,
            outcomes: Some(o),
            failed_methods: Vec::new(),
            error: None,
        },
        Err((failed, e)) => record_err(failed, e),
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every target (in parallel on the current rayon pool) and aggregates
/// the completed ones in index order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    let targets: Vec<TargetRecord> = (0..spec.n_targets).into_par_iter().map(|i| run_target(spec, i)).collect();
    let failed = targets.iter().filter(|t| t.outcomes.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * spec.n_targets as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: spec.n_targets,
        });
    }
    let methods = [0, 1, 2].map(|i| {
        let method = Method::ALL[i];
        let values: Vec<f64> = targets.iter().filter_map(|t| t.outcomes.map(|o| o[i].test_ll)).collect();
        let (mean_ll, std_ll) = mean_std(&values);
        MethodSummary {
            method,
            mean_ll,
            std_ll,
            failures: targets.iter().filter(|t| t.failed_methods.contains(&method)).count(),
            incidents: targets.iter().filter_map(|t| t.outcomes.map(|o| o[i].incidents)).sum(),
        }
    });
    Ok(ExperimentResult {
        spec: spec.clone(),
        methods,
        completed: spec.n_targets - failed,
        targets,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-target CSV: one row per completed target and method.
pub fn write_targets_csv<W: Write>(mut w: W, result: &ExperimentResult) -> Result<()> {
    writeln!(w, "target_index,method,train_ll,test_ll,em_iters,incidents")?;
    for t in &result.targets {
        if let Some(outcomes) = &t.outcomes {
            for o in outcomes {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    t.target_index,
                    o.method.name(),
                    o.train_ll,
                    o.test_ll,
                    o.em_iters,
                    o.incidents
                )?;
            }
        }
    }
    Ok(())
}

fn manifold_kind_name(m: ManifoldId) -> &'static str {
    match m.kind() {
        ManifoldKind::Sphere => "sphere",
        ManifoldKind::Spd => "spd",
    }
}

pub fn write_summary_csv<W: Write>(mut w: W, result: &ExperimentResult) -> Result<()> {
    writeln!(w, "manifold,dim,family,method,mean_ll,std_ll,failures")?;
    let m = result.spec.manifold;
    for s in &result.methods {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            manifold_kind_name(m),
            m.size(),
            result.spec.family,
            s.method.name(),
            s.mean_ll,
            s.std_ll,
            s.failures
        )?;
    }
    Ok(())
}

/// Pairwise comparison of geodesic distances with distances between
/// log-map images at a single basepoint. `signed` values are
/// `d_M(y1, y2) - |log_b y2 - log_b y1|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionReport {
    pub n_points: usize,
    pub n_pairs: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub median_abs: f64,
    pub q90_abs: f64,
    pub q99_abs: f64,
    pub signed_mean: f64,
    /// Largest `|d_M(b, y) - |log_b y||` over the data.
    pub max_basepoint_error: f64,
    /// Sphere only: fraction of points farther than `pi/2` from the basepoint.
    pub beyond_half_pi_fraction: Option<f64>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn distortion_report(data: &[Point], base: &Point) -> Result<DistortionReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("distortion report needs at least one point".into()));
    }
    if data.len() > MAX_DISTORTION_POINTS {
        return Err(Error::InvalidArgument(format!(
            "exact pairwise distortion is limited to {MAX_DISTORTION_POINTS} points, got {}",
            data.len()
        )));
    }
    let basis = tangent_basis(base);
    let coords = data
        .iter()
        .enumerate()
        .map(|(index, p)| {
            basis.log_coords(p).map_err(|e| match e {
                Error::CutLocus { distance, .. } => Error::TangentCutLocus { index, distance },
                other => other,
            })
        })
        .collect::<Result<Vec<DVector<f64>>>>()?;
    let mut max_basepoint_error: f64 = 0.0;
    let mut far = 0;
    for (p, c) in data.iter().zip(&coords) {
        let d = manifold::distance(base, p)?;
        max_basepoint_error = max_basepoint_error.max((d - c.norm()).abs());
        if d > std::f64::consts::FRAC_PI_2 {
            far += 1;
        }
    }
    let mut abs = Vec::with_capacity(data.len() * (data.len() - 1) / 2);
    let mut signed_sum = 0.0;
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            let s = manifold::distance(&data[i], &data[j])? - (&coords[j] - &coords[i]).norm();
            signed_sum += s;
            abs.push(s.abs());
        }
    }
    let n_pairs = abs.len();
    let mean_abs = if n_pairs == 0 { 0.0 } else { abs.iter().sum::<f64>() / n_pairs as f64 };
    let signed_mean = if n_pairs == 0 { 0.0 } else { signed_sum / n_pairs as f64 };
    abs.sort_by(f64::total_cmp);
    Ok(DistortionReport {
        n_points: data.len(),
        n_pairs,
        mean_abs,
        max_abs: abs.last().copied().unwrap_or(0.0),
        median_abs: quantile(&abs, 0.5),
        q90_abs: quantile(&abs, 0.9),
        q99_abs: quantile(&abs, 0.99),
        signed_mean,
        max_basepoint_error,
        beyond_half_pi_fraction: base.manifold().is_sphere().then(|| far as f64 / data.len() as f64),
    })
}

pub const C_SHAPE_RADIUS: f64 = 0.6;
pub const C_SHAPE_ARC_DEG: f64 = 270.0;
pub const C_SHAPE_DEFAULT_NOISE: f64 = 0.05;

/// Center of the C-shape arc: the north pole `e3`.
pub fn c_shape_center() -> Point {
    Point::new(ManifoldId::sphere(2).expect("valid"), vec![0.0, 0.0, 1.0]).expect("unit vector")
}

/// `n` points spaced evenly along a 270° arc of geodesic radius 0.6 around
/// the north pole, opening toward `+e1`, each perturbed by isotropic tangent
/// noise of scale `noise_sigma` pushed through `exp` at its arc point.
pub fn make_c_shape<R: Rng + ?Sized>(n: usize, noise_sigma: f64, rng: &mut R) -> Result<Vec<Point>> {
    if n < 10 {
        return Err(Error::InvalidArgument("a C-shape needs at least 10 points".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidArgument("noise scale must be nonnegative".into()));
    }
    let m = ManifoldId::sphere(2)?;
    let gap = (360.0 - C_SHAPE_ARC_DEG).to_radians();
    let arc = C_SHAPE_ARC_DEG.to_radians();
    (0..n)
        .map(|i| {
            let phi = gap / 2.0 + arc * i as f64 / (n - 1) as f64;
            let (s, c) = C_SHAPE_RADIUS.sin_cos();
            let on_arc = manifold::project_to_manifold(m, &[s * phi.cos(), s * phi.sin(), c])?;
            if noise_sigma == 0.0 {
                return Ok(on_arc);
            }
            let z = DVector::from_iterator(2, (0..2).map(|_| noise_sigma * Distribution::<f64>::sample(&StandardNormal, rng)));
            tangent_basis(&on_arc).exp_coords(&z)
        })
        .collect()
}

/// The "origin" used for tangent models at a canonical basepoint: `e1` on
/// spheres, the identity on SPD.
pub fn origin(m: ManifoldId) -> Point {
    match m.kind() {
        ManifoldKind::Sphere => {
            let mut v = vec![0.0; m.ambient_dim()];
            v[0] = 1.0;
            Point::new(m, v).expect("unit vector")
        }
        ManifoldKind::Spd => Point::from_matrix(m, &DMatrix::identity(m.size(), m.size())).expect("identity is SPD"),
    }
}
