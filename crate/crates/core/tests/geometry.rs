use manifoldmix::linalg;
use manifoldmix::manifold::{self, tangent_basis};
use manifoldmix::{Error, ManifoldId, Point, Tangent};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn sphere_point(raw: &[f64]) -> Option<Point> {
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-3 {
        return None;
    }
    let m = ManifoldId::sphere(raw.len() - 1).unwrap();
    Some(manifold::project_to_manifold(m, raw).unwrap())
}

fn sphere_tangent(x: &Point, raw: &[f64], radius: f64) -> Option<Tangent> {
    let xs = x.coords();
    let v = DVector::from_column_slice(raw);
    let v = &v - xs * xs.dot(&v);
    let n = v.norm();
    if n < 1e-3 {
        return None;
    }
    Some(Tangent::new(x, (v * (radius / n)).as_slice().to_vec()).unwrap())
}

/// `A A^T + 0.1 I` from a raw square matrix.
fn spd_point(d: usize, raw: &[f64]) -> Point {
    let a = DMatrix::from_row_slice(d, d, raw);
    let p = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
    Point::from_matrix(ManifoldId::spd(d).unwrap(), &linalg::symmetrize(&p)).unwrap()
}

fn spd_tangent(p: &Point, raw: &[f64]) -> Tangent {
    manifold::from_coords(&tangent_basis(p), &DVector::from_column_slice(raw)).unwrap()
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol
}

/// Schild's ladder along the geodesic from `x` to `y` in `steps` rungs.
fn schild_ladder(x: &Point, y: &Point, v: &Tangent, steps: usize) -> Tangent {
    let full = manifold::log(x, y).unwrap();
    let scale = 1e-3;
    let mut cur = x.clone();
    let mut tip = manifold::exp(x, &v.scale(scale)).unwrap();
    for k in 1..=steps {
        let next = manifold::exp(x, &full.scale(k as f64 / steps as f64)).unwrap();
        let mid_dir = manifold::log(&tip, &next).unwrap();
        let mid = manifold::exp(&tip, &mid_dir.scale(0.5)).unwrap();
        let back = manifold::log(&cur, &mid).unwrap();
        tip = manifold::exp(&cur, &back.scale(2.0)).unwrap();
        cur = next;
    }
    manifold::log(&cur, &tip).unwrap().scale(1.0 / scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sphere_exp_log_inverse(raw in prop::collection::vec(-1.0f64..1.0, 3..8),
                              dir in prop::collection::vec(-1.0f64..1.0, 8),
                              r in 0.0f64..3.1) {
        let Some(x) = sphere_point(&raw) else { return Ok(()) };
        let Some(u) = sphere_tangent(&x, &dir[..raw.len()], r) else { return Ok(()) };
        let y = manifold::exp(&x, &u).unwrap();
        prop_assert!((y.coords().norm() - 1.0).abs() < 1e-12);
        let back = manifold::log(&x, &y).unwrap();
        prop_assert!(close(back.coords(), u.coords(), 1e-9));
        prop_assert!((manifold::distance(&x, &y).unwrap() - r).abs() < 1e-9);
    }

    #[test]
    fn sphere_distance_matches_arccos(a in prop::collection::vec(-1.0f64..1.0, 4),
                                      b in prop::collection::vec(-1.0f64..1.0, 4)) {
        let (Some(x), Some(y)) = (sphere_point(&a), sphere_point(&b)) else { return Ok(()) };
        let cos = x.coords().dot(y.coords()).clamp(-1.0, 1.0);
        let d = manifold::distance(&x, &y).unwrap();
        prop_assert!((d - cos.acos()).abs() < 1e-7);
        prop_assert_eq!(d, manifold::distance(&y, &x).unwrap());
    }

    #[test]
    fn sphere_triangle_inequality(a in prop::collection::vec(-1.0f64..1.0, 3),
                                  b in prop::collection::vec(-1.0f64..1.0, 3),
                                  c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (Some(x), Some(y), Some(z)) = (sphere_point(&a), sphere_point(&b), sphere_point(&c)) else { return Ok(()) };
        let d = |p: &Point, q: &Point| manifold::distance(p, q).unwrap();
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
    }

    #[test]
    fn spd_exp_log_inverse(raw in prop::collection::vec(-1.5f64..1.5, 9),
                           c in prop::collection::vec(-1.5f64..1.5, 6)) {
        let p = spd_point(3, &raw);
        let u = spd_tangent(&p, &c);
        let q = manifold::exp(&p, &u).unwrap();
        let back = manifold::log(&p, &q).unwrap();
        let scale = u.coords().amax().max(1.0);
        prop_assert!(close(back.coords(), u.coords(), 1e-7 * scale));
        let norm = DVector::from_column_slice(&c).norm();
        prop_assert!((manifold::distance(&p, &q).unwrap() - norm).abs() < 1e-7 * norm.max(1.0));
    }

    #[test]
    fn spd_distance_is_affine_invariant(a in prop::collection::vec(-1.5f64..1.5, 4),
                                        b in prop::collection::vec(-1.5f64..1.5, 4),
                                        g in prop::collection::vec(-2.0f64..2.0, 4)) {
        let (p, q) = (spd_point(2, &a), spd_point(2, &b));
        let gm = DMatrix::from_row_slice(2, 2, &g);
        prop_assume!(gm.determinant().abs() > 0.1);
        let m = p.manifold();
        let act = |x: &Point| Point::from_matrix(m, &linalg::symmetrize(&(&gm * x.matrix() * gm.transpose()))).unwrap();
        let d0 = manifold::distance(&p, &q).unwrap();
        let d1 = manifold::distance(&act(&p), &act(&q)).unwrap();
        prop_assert!((d0 - d1).abs() < 1e-8 * d0.max(1.0));
    }

    #[test]
    fn transport_is_an_isometry(raw in prop::collection::vec(-1.0f64..1.0, 4),
                                d1 in prop::collection::vec(-1.0f64..1.0, 4),
                                d2 in prop::collection::vec(-1.0f64..1.0, 4),
                                d3 in prop::collection::vec(-1.0f64..1.0, 4),
                                r in 0.0f64..3.0) {
        let Some(x) = sphere_point(&raw) else { return Ok(()) };
        let (Some(dir), Some(u), Some(v)) = (sphere_tangent(&x, &d1, r), sphere_tangent(&x, &d2, 1.0), sphere_tangent(&x, &d3, 0.7)) else { return Ok(()) };
        let y = manifold::exp(&x, &dir).unwrap();
        let tu = manifold::parallel_transport(&x, &y, &u).unwrap();
        let tv = manifold::parallel_transport(&x, &y, &v).unwrap();
        prop_assert!(tu.coords().dot(y.coords()).abs() < 1e-12);
        let before = manifold::inner(&x, &u, &v).unwrap();
        let after = manifold::inner(&y, &tu, &tv).unwrap();
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn spd_transport_is_an_isometry(a in prop::collection::vec(-1.5f64..1.5, 9),
                                    b in prop::collection::vec(-1.5f64..1.5, 9),
                                    c1 in prop::collection::vec(-1.0f64..1.0, 6),
                                    c2 in prop::collection::vec(-1.0f64..1.0, 6)) {
        let (p, q) = (spd_point(3, &a), spd_point(3, &b));
        let (u, v) = (spd_tangent(&p, &c1), spd_tangent(&p, &c2));
        let tu = manifold::parallel_transport(&p, &q, &u).unwrap();
        let tv = manifold::parallel_transport(&p, &q, &v).unwrap();
        let before = manifold::inner(&p, &u, &v).unwrap();
        let after = manifold::inner(&q, &tu, &tv).unwrap();
        prop_assert!((before - after).abs() < 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn basis_coordinates_are_isometric(raw in prop::collection::vec(-1.5f64..1.5, 4),
                                       c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let p = spd_point(2, &raw);
        let basis = tangent_basis(&p);
        let cv = DVector::from_column_slice(&c);
        let u = manifold::from_coords(&basis, &cv).unwrap();
        prop_assert!((manifold::norm(&u) - cv.norm()).abs() < 1e-10);
        let back = manifold::to_coords(&basis, &u).unwrap();
        prop_assert!(close(&back, &cv, 1e-10));
    }

    #[test]
    fn tangent_plane_never_shortens_distances_in_a_convex_ball(
        d in 2usize..6,
        raw in prop::collection::vec(-1.0f64..1.0, 3 * 7),
        radii in prop::collection::vec(0.0f64..1.0, 2),
    ) {
        let m = ManifoldId::sphere(d).unwrap();
        let Some(base) = sphere_point(&raw[..=d]) else { return Ok(()) };
        let max_r = std::f64::consts::FRAC_PI_2 - 0.01;
        let (Some(u1), Some(u2)) = (
            sphere_tangent(&base, &raw[7..8 + d], radii[0] * max_r),
            sphere_tangent(&base, &raw[14..15 + d], radii[1] * max_r),
        ) else { return Ok(()) };
        let (y1, y2) = (manifold::exp(&base, &u1).unwrap(), manifold::exp(&base, &u2).unwrap());
        prop_assert_eq!(y1.manifold(), m);
        let basis = tangent_basis(&base);
        let chord = (basis.log_coords(&y2).unwrap() - basis.log_coords(&y1).unwrap()).norm();
        prop_assert!(manifold::distance(&y1, &y2).unwrap() <= chord + 1e-9);
    }
}

#[test]
fn tangent_bases_are_orthonormal() {
    let bases = [
        Point::new(ManifoldId::sphere(4).unwrap(), vec![0.1, -0.5, 0.3, 0.7, (1.0f64 - 0.84).sqrt()]).unwrap(),
        Point::new(ManifoldId::sphere(2).unwrap(), vec![-1.0, 0.0, 0.0]).unwrap(),
        spd_point(3, &[1.0, 0.2, -0.4, 0.3, 0.9, 0.1, -0.2, 0.5, 1.2]),
    ];
    for base in &bases {
        let vs = tangent_basis(base).vectors();
        assert_eq!(vs.len(), base.manifold().intrinsic_dim());
        for (i, a) in vs.iter().enumerate() {
            for (j, b) in vs.iter().enumerate() {
                let g = manifold::inner(base, a, b).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10, "{} <{i},{j}> = {g}", base.manifold());
            }
        }
    }
}

#[test]
fn spd_distance_for_commuting_matrices() {
    let m = ManifoldId::spd(3).unwrap();
    let p = Point::from_matrix(m, &DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 3.0]))).unwrap();
    let q = Point::from_matrix(m, &DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 3.0]))).unwrap();
    let want = ((4.0f64 / 0.5).ln().powi(2) + 0.5f64.ln().powi(2)).sqrt();
    assert!((manifold::distance(&p, &q).unwrap() - want).abs() < 1e-12);
}

#[test]
fn transport_agrees_with_schild_ladder() {
    let s = ManifoldId::sphere(2).unwrap();
    let x = Point::new(s, vec![0.0, 0.0, 1.0]).unwrap();
    let y = Point::new(s, vec![0.6, 0.0, 0.8]).unwrap();
    let v = Tangent::new(&x, vec![0.3, 0.4, 0.0]).unwrap();
    let closed = manifold::parallel_transport(&x, &y, &v).unwrap();
    let ladder = schild_ladder(&x, &y, &v, 200);
    assert!(close(closed.coords(), ladder.coords(), 1e-3), "{} vs {}", closed.coords(), ladder.coords());

    let p = spd_point(2, &[1.0, 0.3, -0.2, 0.8]);
    let q = spd_point(2, &[0.4, -0.9, 0.7, 1.1]);
    let v = spd_tangent(&p, &[0.5, -0.2, 0.3]);
    let closed = manifold::parallel_transport(&p, &q, &v).unwrap();
    let ladder = schild_ladder(&p, &q, &v, 200);
    let scale = closed.coords().amax();
    assert!(close(closed.coords(), ladder.coords(), 1e-3 * scale), "{} vs {}", closed.coords(), ladder.coords());
}

#[test]
fn transport_carries_the_geodesic_velocity() {
    let p = spd_point(2, &[1.0, 0.3, -0.2, 0.8]);
    let q = spd_point(2, &[0.4, -0.9, 0.7, 1.1]);
    let v = manifold::log(&p, &q).unwrap();
    let moved = manifold::parallel_transport(&p, &q, &v).unwrap();
    let want = manifold::log(&q, &p).unwrap().scale(-1.0);
    assert!(close(moved.coords(), want.coords(), 1e-9));
}

#[test]
fn log_refuses_the_antipode() {
    let s = ManifoldId::sphere(3).unwrap();
    let x = Point::new(s, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    let y = Point::new(s, vec![0.0, -1.0, 0.0, 0.0]).unwrap();
    let err = manifold::log(&x, &y).unwrap_err();
    assert!(matches!(err, Error::CutLocus { .. }));
    assert!(err.to_string().contains("local diffeomorphism"));
    assert_eq!(manifold::injectivity_radius(s), std::f64::consts::PI);
    assert!(manifold::injectivity_radius(ManifoldId::spd(2).unwrap()).is_infinite());
}

#[test]
fn embedding_round_trip() {
    let p = spd_point(3, &[1.0, 0.2, -0.4, 0.3, 0.9, 0.1, -0.2, 0.5, 1.2]);
    let v = manifold::embed(&p);
    assert_eq!(v.len(), 6);
    // Orthonormal vectorization preserves the Frobenius norm.
    assert!((v.norm() - p.matrix().norm()).abs() < 1e-12);
    let back = manifold::unembed(p.manifold(), &v).unwrap();
    assert!(close(back.coords(), p.coords(), 1e-12));
}
