//! Closed-form geometry of the unit hypersphere `S^d` and of the SPD manifold
//! with the affine-invariant metric.
//!
//! Sphere points are unit vectors in `R^{d+1}`. SPD points are full symmetric
//! matrices stored row-major. Tangent vectors are kept in the same embedding
//! coordinates and always carry their basepoint, so mixing vectors from
//! different tangent spaces is a runtime error rather than a silent bug.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Sphere points must have unit norm to this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Symmetry tolerance for SPD points and tangents (relative to the largest entry).
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Orthogonality tolerance for sphere tangents.
pub const TANGENCY_TOL: f64 = 1e-10;
/// `log` on the sphere refuses targets farther than `pi - CUT_LOCUS_MARGIN`.
pub const CUT_LOCUS_MARGIN: f64 = 1e-9;
/// Eigenvalue floor used by [`project_to_manifold`] for SPD input.
pub const SPD_PROJECTION_FLOOR: f64 = 1e-8;
/// Two basepoints are considered equal when their coordinates agree to this.
const BASE_MATCH_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Sphere,
    Spd,
}

/// Selects a geometry: `S^d` embedded in `R^{d+1}`, or `d x d` SPD matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ManifoldId {
    kind: ManifoldKind,
    size: usize,
}

impl ManifoldId {
    pub fn new(kind: ManifoldKind, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidManifold("size must be at least 1".into()));
        }
        Ok(Self { kind, size })
    }

    pub fn sphere(d: usize) -> Result<Self> {
        Self::new(ManifoldKind::Sphere, d)
    }

    pub fn spd(d: usize) -> Result<Self> {
        Self::new(ManifoldKind::Spd, d)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_sphere(&self) -> bool {
        self.kind == ManifoldKind::Sphere
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.size,
            ManifoldKind::Spd => linalg::sym_vec_len(self.size),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.size + 1,
            ManifoldKind::Spd => self.size * self.size,
        }
    }

    /// Number of columns of one point-file row.
    pub fn row_len(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.size + 1,
            ManifoldKind::Spd => linalg::sym_vec_len(self.size),
        }
    }

    /// Dimension of the flat embedding used by the Euclidean mixture.
    pub fn embedding_dim(&self) -> usize {
        self.row_len()
    }
}

impl fmt::Display for ManifoldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ManifoldKind::Sphere => write!(f, "sphere:{}", self.size),
            ManifoldKind::Spd => write!(f, "spd:{}", self.size),
        }
    }
}

impl FromStr for ManifoldId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, size) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::InvalidManifold(format!("expected `sphere:d` or `spd:d`, got `{s}`")))?;
        let size: usize = size
            .parse()
            .map_err(|_| Error::InvalidManifold(format!("bad size in `{s}`")))?;
        match kind {
            "sphere" => Self::sphere(size),
            "spd" => Self::spd(size),
            other => Err(Error::InvalidManifold(format!("unknown manifold kind `{other}`"))),
        }
    }
}

impl TryFrom<String> for ManifoldId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ManifoldId> for String {
    fn from(m: ManifoldId) -> String {
        m.to_string()
    }
}

/// A point on a manifold, in embedding coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    manifold: ManifoldId,
    coords: DVector<f64>,
}

impl Point {
    /// Validates and wraps embedding coordinates (row-major matrix for SPD).
    pub fn new(manifold: ManifoldId, coords: Vec<f64>) -> Result<Self> {
        let p = Self {
            manifold,
            coords: DVector::from_vec(coords),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_matrix(manifold: ManifoldId, m: &DMatrix<f64>) -> Result<Self> {
        if manifold.kind != ManifoldKind::Spd || m.nrows() != manifold.size || m.ncols() != manifold.size {
            return Err(Error::InvalidPoint {
                manifold,
                reason: format!("expected a {0}x{0} matrix", manifold.size),
            });
        }
        Self::new(manifold, row_major(m))
    }

    pub(crate) fn unchecked(manifold: ManifoldId, coords: DVector<f64>) -> Self {
        debug_assert_eq!(coords.len(), manifold.ambient_dim());
        Self { manifold, coords }
    }

    pub(crate) fn spd_unchecked(manifold: ManifoldId, m: &DMatrix<f64>) -> Self {
        Self::unchecked(manifold, DVector::from_vec(row_major(m)))
    }

    fn validate(&self) -> Result<()> {
        let m = self.manifold;
        let bad = |reason: String| Error::InvalidPoint { manifold: m, reason };
        if self.coords.len() != m.ambient_dim() {
            return Err(bad(format!(
                "expected {} coordinates, got {}",
                m.ambient_dim(),
                self.coords.len()
            )));
        }
        if self.coords.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite coordinate".into()));
        }
        match m.kind {
            ManifoldKind::Sphere => {
                let n = self.coords.norm();
                if (n - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(bad(format!("norm {n} is not 1")));
                }
            }
            ManifoldKind::Spd => {
                let mat = self.matrix();
                if linalg::asymmetry(&mat) > SYMMETRY_TOL {
                    return Err(bad("matrix is not symmetric".into()));
                }
                let min = linalg::min_eigenvalue(&mat);
                if min <= 0.0 {
                    return Err(bad(format!("smallest eigenvalue {min} is not positive")));
                }
            }
        }
        Ok(())
    }

    pub fn manifold(&self) -> ManifoldId {
        self.manifold
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// The SPD matrix (or, for spheres, the coordinates as a column).
    pub fn matrix(&self) -> DMatrix<f64> {
        match self.manifold.kind {
            ManifoldKind::Spd => {
                let d = self.manifold.size;
                DMatrix::from_row_slice(d, d, self.coords.as_slice())
            }
            ManifoldKind::Sphere => DMatrix::from_column_slice(self.coords.len(), 1, self.coords.as_slice()),
        }
    }

    /// One point-file row: sphere coordinates, or the SPD upper triangle.
    pub fn to_row(&self) -> Vec<f64> {
        match self.manifold.kind {
            ManifoldKind::Sphere => self.coords.as_slice().to_vec(),
            ManifoldKind::Spd => linalg::sym_to_upper(&self.matrix()),
        }
    }

    pub fn from_row(manifold: ManifoldId, row: &[f64]) -> Result<Self> {
        if row.len() != manifold.row_len() {
            return Err(Error::InvalidPoint {
                manifold,
                reason: format!("expected {} values, got {}", manifold.row_len(), row.len()),
            });
        }
        match manifold.kind {
            ManifoldKind::Sphere => Self::new(manifold, row.to_vec()),
            ManifoldKind::Spd => {
                let m = linalg::upper_to_sym(row, manifold.size);
                Self::new(manifold, row_major(&m))
            }
        }
    }

    fn approx_eq(&self, other: &Point) -> bool {
        self.manifold == other.manifold && (&self.coords - &other.coords).amax() <= BASE_MATCH_TOL
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// A tangent vector attached to its basepoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    base: Point,
    coords: DVector<f64>,
}

impl Tangent {
    pub fn new(base: &Point, coords: Vec<f64>) -> Result<Self> {
        let t = Self {
            base: base.clone(),
            coords: DVector::from_vec(coords),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn zero(base: &Point) -> Self {
        Self {
            base: base.clone(),
            coords: DVector::zeros(base.manifold.ambient_dim()),
        }
    }

    pub(crate) fn unchecked(base: &Point, coords: DVector<f64>) -> Self {
        Self {
            base: base.clone(),
            coords,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.base.manifold;
        if self.coords.len() != m.ambient_dim() {
            return Err(Error::InvalidTangent(format!(
                "expected {} coordinates, got {}",
                m.ambient_dim(),
                self.coords.len()
            )));
        }
        if self.coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTangent("non-finite coordinate".into()));
        }
        match m.kind {
            ManifoldKind::Sphere => {
                let dot = self.base.coords.dot(&self.coords);
                if dot.abs() > TANGENCY_TOL * self.coords.norm().max(1.0) {
                    return Err(Error::InvalidTangent(format!(
                        "not orthogonal to the basepoint (inner product {dot:e})"
                    )));
                }
            }
            ManifoldKind::Spd => {
                if linalg::asymmetry(&self.matrix()) > SYMMETRY_TOL {
                    return Err(Error::InvalidTangent("matrix is not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.base.manifold.size;
        match self.base.manifold.kind {
            ManifoldKind::Spd => DMatrix::from_row_slice(d, d, self.coords.as_slice()),
            ManifoldKind::Sphere => DMatrix::from_column_slice(self.coords.len(), 1, self.coords.as_slice()),
        }
    }

    pub fn scale(&self, s: f64) -> Tangent {
        Tangent::unchecked(&self.base, &self.coords * s)
    }

    pub fn add(&self, other: &Tangent) -> Result<Tangent> {
        check_base(&self.base, other)?;
        Ok(Tangent::unchecked(&self.base, &self.coords + &other.coords))
    }

    pub fn sub(&self, other: &Tangent) -> Result<Tangent> {
        check_base(&self.base, other)?;
        Ok(Tangent::unchecked(&self.base, &self.coords - &other.coords))
    }
}

fn check_same_manifold(a: &Point, b: &Point) -> Result<()> {
    if a.manifold != b.manifold {
        return Err(Error::ManifoldMismatch(a.manifold, b.manifold));
    }
    Ok(())
}

fn check_base(base: &Point, u: &Tangent) -> Result<()> {
    check_same_manifold(base, &u.base)?;
    if !base.approx_eq(&u.base) {
        return Err(Error::BasepointMismatch);
    }
    Ok(())
}

fn spd_from_matrix(m: ManifoldId, mat: &DMatrix<f64>) -> Point {
    Point::spd_unchecked(m, &linalg::symmetrize(mat))
}

fn sphere_angle(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    // 2 atan2(|x - y|, |x + y|) is accurate at both ends, unlike acos.
    2.0 * (x - y).norm().atan2((x + y).norm())
}

/// Exponential map: follows the geodesic from `base` with initial velocity `u`.
pub fn exp(base: &Point, u: &Tangent) -> Result<Point> {
    check_base(base, u)?;
    let m = base.manifold;
    Ok(match m.kind {
        ManifoldKind::Sphere => {
            let theta = u.coords.norm();
            if theta == 0.0 {
                return Ok(base.clone());
            }
            let y = &base.coords * theta.cos() + &u.coords * (theta.sin() / theta);
            let n = y.norm();
            Point::unchecked(m, y / n)
        }
        ManifoldKind::Spd => {
            let (s, is) = linalg::sym_sqrt_pair(&base.matrix());
            let inner = linalg::congruence(&is, &u.matrix());
            spd_from_matrix(m, &linalg::congruence(&s, &linalg::sym_exp(&inner)))
        }
    })
}

/// Logarithmic map: the initial velocity of the minimizing geodesic from
/// `base` to `y`. Fails on the sphere's cut locus.
pub fn log(base: &Point, y: &Point) -> Result<Tangent> {
    check_same_manifold(base, y)?;
    let m = base.manifold;
    match m.kind {
        ManifoldKind::Sphere => {
            let theta = sphere_angle(&base.coords, &y.coords);
            if theta > PI - CUT_LOCUS_MARGIN {
                return Err(Error::CutLocus {
                    distance: theta,
                    radius: PI,
                });
            }
            let x = &base.coords;
            let mut v = &y.coords - x * x.dot(&y.coords);
            let vn = v.norm();
            if theta == 0.0 || vn == 0.0 {
                return Ok(Tangent::zero(base));
            }
            v *= theta / vn;
            let drift = x.dot(&v);
            v -= x * drift;
            Ok(Tangent::unchecked(base, v))
        }
        ManifoldKind::Spd => {
            let (s, is) = linalg::sym_sqrt_pair(&base.matrix());
            let inner = linalg::sym_log(&linalg::congruence(&is, &y.matrix()));
            let u = linalg::congruence(&s, &inner);
            Ok(Tangent::unchecked(base, DVector::from_vec(row_major(&u))))
        }
    }
}

/// Geodesic distance.
pub fn distance(x: &Point, y: &Point) -> Result<f64> {
    check_same_manifold(x, y)?;
    Ok(match x.manifold.kind {
        ManifoldKind::Sphere => sphere_angle(&x.coords, &y.coords),
        ManifoldKind::Spd => {
            let is = linalg::sym_inv_sqrt(&x.matrix());
            let eig = linalg::sym_eigenvalues(&linalg::congruence(&is, &y.matrix()));
            eig.iter()
                .map(|l| l.max(linalg::EIG_CLAMP).ln().powi(2))
                .sum::<f64>()
                .sqrt()
        }
    })
}

/// Riemannian inner product at `base`.
pub fn inner(base: &Point, u: &Tangent, v: &Tangent) -> Result<f64> {
    check_base(base, u)?;
    check_base(base, v)?;
    Ok(match base.manifold.kind {
        ManifoldKind::Sphere => u.coords.dot(&v.coords),
        ManifoldKind::Spd => {
            let is = linalg::sym_inv_sqrt(&base.matrix());
            let a = linalg::congruence(&is, &u.matrix());
            let b = linalg::congruence(&is, &v.matrix());
            a.dot(&b)
        }
    })
}

/// Metric norm of a tangent vector at its own basepoint.
pub fn norm(u: &Tangent) -> f64 {
    inner(&u.base, u, u).expect("tangent is based at its own base").max(0.0).sqrt()
}

/// Parallel transport of `v` along the minimizing geodesic from `from` to `to`.
pub fn parallel_transport(from: &Point, to: &Point, v: &Tangent) -> Result<Tangent> {
    check_base(from, v)?;
    check_same_manifold(from, to)?;
    let m = from.manifold;
    match m.kind {
        ManifoldKind::Sphere => {
            let u = log(from, to)?;
            let theta = u.coords.norm();
            if theta == 0.0 {
                return Ok(Tangent::unchecked(to, v.coords.clone()));
            }
            // Rotation in span{from, e}; identity on the orthogonal complement.
            let e = &u.coords / theta;
            let along = e.dot(&v.coords);
            let mut w = &v.coords + (&e * (theta.cos() - 1.0) - &from.coords * theta.sin()) * along;
            let drift = to.coords.dot(&w);
            w -= &to.coords * drift;
            Ok(Tangent::unchecked(to, w))
        }
        ManifoldKind::Spd => {
            let (s, is) = linalg::sym_sqrt_pair(&from.matrix());
            let half = linalg::sym_exp(&(linalg::sym_log(&linalg::congruence(&is, &to.matrix())) * 0.5));
            let e = &s * half * &is;
            let w = linalg::congruence_t(&e, &v.matrix());
            Ok(Tangent::unchecked(to, DVector::from_vec(row_major(&w))))
        }
    }
}

/// `pi` on every sphere, unbounded on SPD.
pub fn injectivity_radius(m: ManifoldId) -> f64 {
    match m.kind {
        ManifoldKind::Sphere => PI,
        ManifoldKind::Spd => f64::INFINITY,
    }
}

#[derive(Clone, Debug)]
enum Frame {
    /// Columns are the basis vectors in `R^{d+1}`.
    Sphere(DMatrix<f64>),
    /// `P^{1/2}` and `P^{-1/2}`.
    Spd(DMatrix<f64>, DMatrix<f64>),
}

/// A deterministic metric-orthonormal basis of the tangent space at `base`.
///
/// Sphere: the Householder reflection taking `e1` to `base`, applied to
/// `e2..e_{d+1}`. SPD at `P`: the standard orthonormal symmetric basis
/// (diagonal units, off-diagonal pairs scaled by `1/sqrt 2`, upper triangle
/// row-major) pushed forward by `V -> P^{1/2} V P^{1/2}`.
#[derive(Clone, Debug)]
pub struct TangentBasis {
    base: Point,
    frame: Frame,
}

impl TangentBasis {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.manifold.intrinsic_dim()
    }

    /// The basis vectors as tangents at `base`.
    pub fn vectors(&self) -> Vec<Tangent> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut c = DVector::zeros(n);
                c[i] = 1.0;
                self.coords_to_tangent(&c)
            })
            .collect()
    }

    fn coords_to_tangent(&self, c: &DVector<f64>) -> Tangent {
        match &self.frame {
            Frame::Sphere(b) => Tangent::unchecked(&self.base, b * c),
            Frame::Spd(s, _) => {
                let d = self.base.manifold.size;
                let v = linalg::congruence(s, &linalg::orthonormal_vec_to_sym(c, d));
                Tangent::unchecked(&self.base, DVector::from_vec(row_major(&v)))
            }
        }
    }

    /// Coordinates of `log(base, y)` in this basis.
    pub fn log_coords(&self, y: &Point) -> Result<DVector<f64>> {
        check_same_manifold(&self.base, y)?;
        match &self.frame {
            Frame::Sphere(b) => Ok(b.tr_mul(log(&self.base, y)?.coords())),
            Frame::Spd(_, is) => {
                let inner = linalg::sym_log(&linalg::congruence(is, &y.matrix()));
                Ok(linalg::sym_to_orthonormal_vec(&inner))
            }
        }
    }

    /// `exp(base, from_coords(c))`.
    pub fn exp_coords(&self, c: &DVector<f64>) -> Result<Point> {
        if c.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} tangent coordinates, got {}",
                self.dim(),
                c.len()
            )));
        }
        match &self.frame {
            Frame::Sphere(_) => exp(&self.base, &self.coords_to_tangent(c)),
            Frame::Spd(s, _) => {
                let d = self.base.manifold.size;
                let inner = linalg::sym_exp(&linalg::orthonormal_vec_to_sym(c, d));
                Ok(spd_from_matrix(self.base.manifold, &linalg::congruence(s, &inner)))
            }
        }
    }
}

pub fn tangent_basis(base: &Point) -> TangentBasis {
    let m = base.manifold;
    let frame = match m.kind {
        ManifoldKind::Sphere => {
            let n = m.ambient_dim();
            let x = &base.coords;
            let mut v = -x.clone();
            v[0] += 1.0;
            let vv = v.norm_squared();
            let mut b = DMatrix::zeros(n, n - 1);
            for j in 1..n {
                let mut col = DVector::zeros(n);
                col[j] = 1.0;
                if vv > 0.0 {
                    col -= &v * (2.0 * v[j] / vv);
                }
                // Remove rounding leakage along the basepoint.
                let drift = x.dot(&col);
                col -= x * drift;
                b.set_column(j - 1, &col);
            }
            Frame::Sphere(b)
        }
        ManifoldKind::Spd => {
            let (s, is) = linalg::sym_sqrt_pair(&base.matrix());
            Frame::Spd(s, is)
        }
    };
    TangentBasis {
        base: base.clone(),
        frame,
    }
}

/// Coordinates of `u` in `basis` (length `intrinsic_dim`).
pub fn to_coords(basis: &TangentBasis, u: &Tangent) -> Result<DVector<f64>> {
    check_base(&basis.base, u)?;
    Ok(match &basis.frame {
        Frame::Sphere(b) => b.tr_mul(&u.coords),
        Frame::Spd(_, is) => linalg::sym_to_orthonormal_vec(&linalg::congruence(is, &u.matrix())),
    })
}

pub fn from_coords(basis: &TangentBasis, c: &DVector<f64>) -> Result<Tangent> {
    if c.len() != basis.dim() {
        return Err(Error::InvalidArgument(format!(
            "expected {} tangent coordinates, got {}",
            basis.dim(),
            c.len()
        )));
    }
    Ok(basis.coords_to_tangent(c))
}

/// Maps raw embedding coordinates onto the manifold: normalization on the
/// sphere, symmetrization plus eigenvalue flooring at `1e-8` for SPD.
pub fn project_to_manifold(m: ManifoldId, raw: &[f64]) -> Result<Point> {
    if raw.len() != m.ambient_dim() {
        return Err(Error::InvalidArgument(format!(
            "expected {} raw coordinates, got {}",
            m.ambient_dim(),
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite raw coordinate".into()));
    }
    match m.kind {
        ManifoldKind::Sphere => {
            let v = DVector::from_column_slice(raw);
            let n = v.norm();
            if n == 0.0 {
                return Err(Error::InvalidArgument("cannot project the zero vector onto a sphere".into()));
            }
            Ok(Point::unchecked(m, v / n))
        }
        ManifoldKind::Spd => {
            let d = m.size;
            let sym = linalg::symmetrize(&DMatrix::from_row_slice(d, d, raw));
            if linalg::min_eigenvalue(&sym) >= SPD_PROJECTION_FLOOR {
                return Ok(Point::spd_unchecked(m, &sym));
            }
            let clamped = linalg::sym_apply(&sym, |v| v.max(SPD_PROJECTION_FLOOR));
            Ok(Point::spd_unchecked(m, &clamped))
        }
    }
}

/// Flat coordinates used by the Euclidean mixture: raw sphere coordinates, or
/// the orthonormal symmetric vectorization of an SPD matrix (so Euclidean
/// distance equals Frobenius distance).
pub fn embed(p: &Point) -> DVector<f64> {
    match p.manifold.kind {
        ManifoldKind::Sphere => p.coords.clone(),
        ManifoldKind::Spd => linalg::sym_to_orthonormal_vec(&p.matrix()),
    }
}

/// Inverse of [`embed`] followed by [`project_to_manifold`].
pub fn unembed(m: ManifoldId, v: &DVector<f64>) -> Result<Point> {
    match m.kind {
        ManifoldKind::Sphere => project_to_manifold(m, v.as_slice()),
        ManifoldKind::Spd => {
            let mat = linalg::orthonormal_vec_to_sym(v, m.size);
            project_to_manifold(m, &row_major(&mat))
        }
    }
}
