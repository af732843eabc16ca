//! Geodesic k-means++ seeding followed by Fréchet-mean k-means. The
//! resulting hard assignment is the shared starting point of all three
//! mixture estimators.

use rand::Rng;

use crate::error::{Error, Result};
use crate::frechet::{self, MeanConfig};
use crate::manifold::{distance, Point};

pub const MAX_KMEANS_ITERS: usize = 50;

fn nearest(x: &Point, centers: &[Point]) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = distance(x, c)?;
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best)
}

fn count_distinct(data: &[Point], k: usize) -> usize {
    let mut distinct: Vec<&Point> = Vec::new();
    for p in data {
        if !distinct.iter().any(|q| q.coords() == p.coords()) {
            distinct.push(p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    distinct.len()
}

/// Hard cluster labels in `0..k`, deterministic given the rng state.
pub fn init_shared<R: Rng + ?Sized>(data: &[Point], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = data.len();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} points cannot seed {k} clusters")));
    }
    if let Some(p) = data.iter().find(|p| p.manifold() != data[0].manifold()) {
        return Err(Error::ManifoldMismatch(data[0].manifold(), p.manifold()));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    if count_distinct(data, k) < k {
        return Err(Error::InvalidArgument(format!("fewer than {k} distinct points")));
    }

    // k-means++ seeding with squared geodesic distances.
    let mut centers = vec![data[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = data
        .iter()
        .map(|x| distance(x, &centers[0]).map(|d| d * d))
        .collect::<Result<_>>()?;
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, w) in d2.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            acc += w;
            if acc > target {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave `target` just above the running sum.
        let pick = pick.or_else(|| d2.iter().rposition(|w| *w > 0.0)).expect("k distinct points exist");
        centers.push(data[pick].clone());
        for (i, x) in data.iter().enumerate() {
            let d = distance(x, &centers[centers.len() - 1])?;
            d2[i] = d2[i].min(d * d);
        }
    }

    let cfg = MeanConfig::default();
    let mut labels: Vec<usize> = data.iter().map(|x| nearest(x, &centers).map(|b| b.0)).collect::<Result<_>>()?;
    for _ in 0..MAX_KMEANS_ITERS {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<Point> = data
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == c)
                .map(|(p, _)| p.clone())
                .collect();
            if members.is_empty() {
                continue;
            }
            let w = frechet::uniform_weights(members.len());
            *center = match frechet::frechet_mean(&members, &w, &cfg) {
                Ok(m) => m,
                Err(Error::NotConverged { last, .. }) => *last,
                Err(e) => return Err(e),
            };
        }
        let next: Vec<usize> = data.iter().map(|x| nearest(x, &centers).map(|b| b.0)).collect::<Result<_>>()?;
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ManifoldId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn points() -> Vec<Point> {
        let m = ManifoldId::sphere(2).unwrap();
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.6, 0.8, 0.0],
            [0.0, 0.6, 0.8],
        ]
        .iter()
        .map(|v| Point::new(m, v.to_vec()).unwrap())
        .collect()
    }

    #[test]
    fn single_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(init_shared(&points(), 1, &mut rng).unwrap(), vec![0; 5]);
    }

    #[test]
    fn one_cluster_per_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut labels = init_shared(&points(), 5, &mut rng).unwrap();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = init_shared(&points(), 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_shared(&points(), 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_too_few_distinct_points() {
        let p = points()[0].clone();
        let data = vec![p.clone(), p.clone(), p];
        assert!(init_shared(&data, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(init_shared(&points(), 6, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
