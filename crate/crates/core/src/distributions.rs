//! Target densities and samplers: Riemannian and wrapped Gaussians,
//! von Mises-Fisher, inverse-Wishart, and random SPD matrices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, GaussianLogDensity};
use crate::manifold::{tangent_basis, ManifoldId, ManifoldKind, Point, TangentBasis};

/// Tangent Gaussian draws on the sphere are truncated to this norm.
pub const SPHERE_TRUNCATION: f64 = PI - 1e-6;
/// Rejection samplers give up below this acceptance rate.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-4;
const MIN_ATTEMPTS_BEFORE_GIVING_UP: u64 = 100_000;
pub const SPD_MCMC_BURN_IN: usize = 200;
pub const SPD_MCMC_THIN: usize = 5;
const IWD_MAX_CONDITION: f64 = 1e12;
const IWD_MAX_REDRAWS: usize = 100;

/// Riemannian Gaussian parameters; `cov` is expressed in the deterministic
/// tangent basis at `mean`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgdParams {
    pub mean: Point,
    pub cov: DMatrix<f64>,
}

impl RgdParams {
    pub fn new(mean: Point, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.manifold().intrinsic_dim();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::InvalidArgument(format!(
                "covariance must be {dim}x{dim} for {}",
                mean.manifold()
            )));
        }
        if linalg::asymmetry(&cov) > 1e-12 {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        if linalg::min_eigenvalue(&cov) <= 0.0 {
            return Err(Error::InvalidArgument("covariance is not positive definite".into()));
        }
        Ok(Self { mean, cov })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmfParams {
    pub mean_direction: Point,
    pub concentration: f64,
}

impl VmfParams {
    pub fn new(mean_direction: Point, concentration: f64) -> Result<Self> {
        if !mean_direction.manifold().is_sphere() {
            return Err(Error::Unsupported("von Mises-Fisher is only defined on spheres".into()));
        }
        if !(concentration > 0.0) || !concentration.is_finite() {
            return Err(Error::InvalidArgument("concentration must be positive".into()));
        }
        Ok(Self {
            mean_direction,
            concentration,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseWishartParams {
    /// SPD scale matrix `Psi`.
    pub scale: Point,
    pub dof: f64,
}

impl InverseWishartParams {
    pub fn new(scale: Point, dof: f64) -> Result<Self> {
        let m = scale.manifold();
        if m.kind() != ManifoldKind::Spd {
            return Err(Error::Unsupported("inverse-Wishart lives on SPD manifolds".into()));
        }
        if !(dof > m.size() as f64 - 1.0) || !dof.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "degrees of freedom {dof} must exceed d - 1 = {}",
                m.size() - 1
            )));
        }
        Ok(Self { scale, dof })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    RgdMix,
    WgdMix,
    VmfMix,
    IwdMix,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::RgdMix => "rgd",
            Family::WgdMix => "wgd",
            Family::VmfMix => "vmf",
            Family::IwdMix => "iwd",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgd" => Ok(Family::RgdMix),
            "wgd" => Ok(Family::WgdMix),
            "vmf" => Ok(Family::VmfMix),
            "iwd" | "iw" => Ok(Family::IwdMix),
            other => Err(Error::InvalidArgument(format!("unknown target family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ComponentParams {
    Rgd(RgdParams),
    Wgd(RgdParams),
    Vmf(VmfParams),
    Iwd(InverseWishartParams),
}

impl ComponentParams {
    fn family(&self) -> Family {
        match self {
            ComponentParams::Rgd(_) => Family::RgdMix,
            ComponentParams::Wgd(_) => Family::WgdMix,
            ComponentParams::Vmf(_) => Family::VmfMix,
            ComponentParams::Iwd(_) => Family::IwdMix,
        }
    }

    fn manifold(&self) -> ManifoldId {
        match self {
            ComponentParams::Rgd(p) | ComponentParams::Wgd(p) => p.mean.manifold(),
            ComponentParams::Vmf(p) => p.mean_direction.manifold(),
            ComponentParams::Iwd(p) => p.scale.manifold(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Point>> {
        match self {
            ComponentParams::Rgd(p) => sample_rgd(p, n, rng),
            ComponentParams::Wgd(p) => sample_wgd(p, n, rng),
            ComponentParams::Vmf(p) => sample_vmf(p, n, rng),
            ComponentParams::Iwd(p) => sample_inverse_wishart(p, n, rng),
        }
    }
}

/// A ground-truth mixture used to generate train/test data.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub manifold: ManifoldId,
    pub family: Family,
    pub weights: Vec<f64>,
    pub components: Vec<ComponentParams>,
}

impl TargetSpec {
    pub fn new(
        manifold: ManifoldId,
        family: Family,
        weights: Vec<f64>,
        components: Vec<ComponentParams>,
    ) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("mixture weights must form a simplex".into()));
        }
        for c in &components {
            if c.family() != family {
                return Err(Error::InvalidArgument(format!(
                    "component of family {} in a {family} mixture",
                    c.family()
                )));
            }
            if c.manifold() != manifold {
                return Err(Error::ManifoldMismatch(manifold, c.manifold()));
            }
        }
        Ok(Self {
            manifold,
            family,
            weights,
            components,
        })
    }
}

/// Riemannian Gaussian with a cached basis and Cholesky factor.
#[derive(Clone, Debug)]
pub struct RgdDensity {
    basis: TangentBasis,
    gauss: GaussianLogDensity,
}

impl RgdDensity {
    pub fn new(params: &RgdParams) -> Result<Self> {
        Ok(Self {
            basis: tangent_basis(&params.mean),
            gauss: GaussianLogDensity::new(&params.cov)?,
        })
    }

    /// Fails with [`Error::CutLocus`] for points antipodal to the mean.
    pub fn log_pdf(&self, x: &Point) -> Result<f64> {
        let c = self.basis.log_coords(x)?;
        Ok(self.gauss.log_density(&c))
    }

    pub fn basis(&self) -> &TangentBasis {
        &self.basis
    }
}

/// `-(1/2)(D ln 2pi + ln det Sigma + c^T Sigma^{-1} c)` with `c` the
/// coordinates of `log(mean, x)`. The normalizer is the low-variance
/// approximation: it ignores the volume change of the exponential map.
pub fn rgd_logpdf(params: &RgdParams, x: &Point) -> Result<f64> {
    RgdDensity::new(params)?.log_pdf(x)
}

fn standard_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn cov_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(linalg::symmetrize(cov))
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))
}

/// `ln(sinh(x) / x)` without overflow or cancellation.
fn ln_sinhc(x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-2 {
        let x2 = x * x;
        x2 / 6.0 - x2 * x2 / 180.0 + x2 * x2 * x2 / 2835.0
    } else if x < 20.0 {
        (x.sinh() / x).ln()
    } else {
        x - std::f64::consts::LN_2 - x.ln() + (-(-2.0 * x).exp()).ln_1p()
    }
}

/// Log volume factor of the SPD exponential map at tangent coordinates `c`
/// (orthonormal basis at the mean): `sum_{i<j} ln(sinh(g_ij/2) / (g_ij/2))`
/// over eigenvalue gaps `g_ij` of the whitened tangent matrix.
pub fn spd_exp_log_jacobian(c: &DVector<f64>, side: usize) -> f64 {
    let eig = linalg::sym_eigenvalues(&linalg::orthonormal_vec_to_sym(c, side));
    let mut total = 0.0;
    for i in 0..side {
        for j in (i + 1)..side {
            total += ln_sinhc(0.5 * (eig[i] - eig[j]));
        }
    }
    total
}

/// Log volume factor of the sphere exponential map: `(d-1) ln(sin r / r)`.
pub fn sphere_exp_log_jacobian(r: f64, d: usize) -> f64 {
    if d <= 1 || r == 0.0 {
        return 0.0;
    }
    (d as f64 - 1.0) * (r.sin() / r).ln()
}

/// Exact draws from a Riemannian Gaussian.
///
/// Sphere: tangent Gaussian proposals truncated to the injectivity ball,
/// accepted with probability `(sin r / r)^{d-1}`. SPD: independence
/// Metropolis with the wrapped Gaussian as proposal, 200 burn-in steps and
/// thinning 5.
pub fn sample_rgd<R: Rng + ?Sized>(params: &RgdParams, n: usize, rng: &mut R) -> Result<Vec<Point>> {
    let m = params.mean.manifold();
    let basis = tangent_basis(&params.mean);
    let l = cov_factor(&params.cov)?;
    let dim = m.intrinsic_dim();
    let mut out = Vec::with_capacity(n);
    match m.kind() {
        ManifoldKind::Sphere => {
            let mut attempts: u64 = 0;
            while out.len() < n {
                attempts += 1;
                let c = &l * standard_normal_vec(dim, rng);
                let r = c.norm();
                let u: f64 = rng.random();
                if r < SPHERE_TRUNCATION && u.ln() < sphere_exp_log_jacobian(r, m.size()) {
                    out.push(basis.exp_coords(&c)?);
                }
                if attempts >= MIN_ATTEMPTS_BEFORE_GIVING_UP {
                    let rate = out.len() as f64 / attempts as f64;
                    if rate < MIN_ACCEPTANCE_RATE {
                        return Err(Error::PathologicalCovariance { rate });
                    }
                }
            }
        }
        ManifoldKind::Spd => {
            if n == 0 {
                return Ok(out);
            }
            let side = m.size();
            let mut state = DVector::zeros(dim);
            let mut state_lj = 0.0;
            let step = |state: &mut DVector<f64>, state_lj: &mut f64, rng: &mut R| {
                let prop = &l * standard_normal_vec(dim, rng);
                let prop_lj = spd_exp_log_jacobian(&prop, side);
                let u: f64 = rng.random();
                if u.ln() < prop_lj - *state_lj {
                    *state = prop;
                    *state_lj = prop_lj;
                }
            };
            for _ in 0..SPD_MCMC_BURN_IN {
                step(&mut state, &mut state_lj, rng);
            }
            while out.len() < n {
                for _ in 0..SPD_MCMC_THIN {
                    step(&mut state, &mut state_lj, rng);
                }
                out.push(basis.exp_coords(&state)?);
            }
        }
    }
    Ok(out)
}

/// Wrapped Gaussian: the exponential-map push-forward of a tangent Gaussian.
pub fn sample_wgd<R: Rng + ?Sized>(params: &RgdParams, n: usize, rng: &mut R) -> Result<Vec<Point>> {
    let m = params.mean.manifold();
    let basis = tangent_basis(&params.mean);
    let l = cov_factor(&params.cov)?;
    let dim = m.intrinsic_dim();
    let mut out = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    while out.len() < n {
        attempts += 1;
        let c = &l * standard_normal_vec(dim, rng);
        if m.is_sphere() && c.norm() >= SPHERE_TRUNCATION {
            if attempts >= MIN_ATTEMPTS_BEFORE_GIVING_UP && (out.len() as f64) < MIN_ACCEPTANCE_RATE * attempts as f64 {
                return Err(Error::PathologicalCovariance {
                    rate: out.len() as f64 / attempts as f64,
                });
            }
            continue;
        }
        out.push(basis.exp_coords(&c)?);
    }
    Ok(out)
}

/// Von Mises-Fisher draws via envelope rejection for the cosine to the mean
/// direction, plus a uniform direction in the tangent space.
pub fn sample_vmf<R: Rng + ?Sized>(params: &VmfParams, n: usize, rng: &mut R) -> Result<Vec<Point>> {
    let mu = &params.mean_direction;
    let m = mu.manifold();
    if !m.is_sphere() {
        return Err(Error::Unsupported("von Mises-Fisher is only defined on spheres".into()));
    }
    let kappa = params.concentration;
    let d = m.size();
    let pm1 = d as f64; // ambient dimension minus one
    let b = pm1 / (2.0 * kappa + (4.0 * kappa * kappa + pm1 * pm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + pm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(pm1 / 2.0, pm1 / 2.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let basis = tangent_basis(mu);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = loop {
            let z: f64 = beta.sample(rng);
            let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            let u: f64 = rng.random();
            if kappa * w + pm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
                break w;
            }
        };
        let dir = loop {
            let v = standard_normal_vec(d, rng);
            let nv = v.norm();
            if nv > 0.0 {
                break v / nv;
            }
        };
        let t = crate::manifold::from_coords(&basis, &dir)?;
        let y = mu.coords() * w + t.coords() * (1.0 - w * w).max(0.0).sqrt();
        out.push(Point::unchecked(m, y.normalize()));
    }
    Ok(out)
}

/// Inverse-Wishart draws: Bartlett-decomposition Wishart on `scale^{-1}`,
/// then inverted.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    params: &InverseWishartParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let m = params.scale.manifold();
    if m.kind() != ManifoldKind::Spd {
        return Err(Error::Unsupported("inverse-Wishart lives on SPD manifolds".into()));
    }
    let d = m.size();
    let scale_inv = params
        .scale
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("scale matrix is singular".into()))?;
    let l = cov_factor(&scale_inv)?;
    let chis = (0..d)
        .map(|i| ChiSquared::new(params.dof - i as f64).map_err(|e| Error::Numerical(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut drawn = None;
        for _ in 0..IWD_MAX_REDRAWS {
            let mut a = DMatrix::zeros(d, d);
            for i in 0..d {
                a[(i, i)] = chis[i].sample(rng).sqrt();
                for j in 0..i {
                    a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            let la = &l * a;
            let w = linalg::symmetrize(&(&la * la.transpose()));
            let eig = linalg::sym_eigenvalues(&w);
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 0.0) || hi / lo > IWD_MAX_CONDITION {
                continue;
            }
            if let Some(inv) = w.try_inverse() {
                drawn = Some(Point::spd_unchecked(m, &linalg::symmetrize(&inv)));
                break;
            }
        }
        out.push(drawn.ok_or_else(|| {
            Error::Numerical(format!("{IWD_MAX_REDRAWS} consecutive inverse-Wishart draws were singular"))
        })?);
    }
    Ok(out)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            g[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(lambda) Q^T` with Haar `Q` and eigenvalues uniform in `[eig_low, eig_high]`.
pub fn random_spd<R: Rng + ?Sized>(dim: usize, eig_low: f64, eig_high: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(eig_low > 0.0 && eig_low <= eig_high && eig_high.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue range [{eig_low}, {eig_high}] must satisfy 0 < low <= high"
        )));
    }
    let q = random_orthogonal(dim, rng);
    let lambda = DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(eig_low..=eig_high)));
    Ok(linalg::congruence_t(&q, &DMatrix::from_diagonal(&lambda)))
}

fn draw_labels<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return i;
                }
            }
            // u fell in the rounding gap below 1.
            weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
        })
        .collect()
}

/// Draws `n` points from a mixture. Component labels are drawn first (only
/// when there is more than one component), then each component's draws are
/// generated in component order and scattered back to their draw positions.
pub fn sample_target<R: Rng + ?Sized>(spec: &TargetSpec, n: usize, rng: &mut R) -> Result<Vec<Point>> {
    let k = spec.components.len();
    let labels = if k == 1 { vec![0; n] } else { draw_labels(&spec.weights, n, rng) };
    let mut out: Vec<Option<Point>> = vec![None; n];
    for (comp_idx, comp) in spec.components.iter().enumerate() {
        let slots: Vec<usize> = (0..n).filter(|&i| labels[i] == comp_idx).collect();
        if slots.is_empty() {
            continue;
        }
        let draws = comp.sample(slots.len(), rng)?;
        for (slot, p) in slots.into_iter().zip(draws) {
            out[slot] = Some(p);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every slot is filled")).collect())
}
