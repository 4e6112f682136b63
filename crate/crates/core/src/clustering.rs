//! Seeded Lloyd k-means with k-means++ initialization.
//!
//! Output depends only on `(points, k, seed, params)`. Ties in the assignment
//! step go to the lowest centroid index, and an empty cluster is repaired by
//! moving in the point farthest from its own centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{mean_of, squared_distance, FeatureVector};

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Independent k-means++ starts per call; the lowest-inertia run wins.
pub const DEFAULT_RESTARTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Stop once the largest centroid shift falls below this.
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

/// A hard partition of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index for every input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<FeatureVector>,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_of_point(&self, point_index: usize) -> Result<usize> {
        self.assignments
            .get(point_index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index: point_index,
                len: self.assignments.len(),
            })
    }

    /// Indices of the points assigned to `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Runs k-means with [`DEFAULT_RESTARTS`] restarts.
pub fn kmeans(
    points: &[FeatureVector],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Clustering> {
    kmeans_with(
        points,
        k,
        seed,
        &KMeansParams {
            max_iters,
            tol,
            restarts: DEFAULT_RESTARTS,
        },
    )
}

pub fn kmeans_with(
    points: &[FeatureVector],
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if params.max_iters == 0 || params.restarts == 0 || !(params.tol > 0.0) {
        return Err(Error::InvalidConfig(
            "max_iters and restarts must be positive, tol > 0".into(),
        ));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            k,
            actual: points.len(),
        });
    }
    let dim = points[0].dim();
    if let Some(bad) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..params.restarts {
        let run = lloyd(points, plus_plus_init(points, k, &mut rng), params)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Index of the nearest centroid for every point, ties to the lowest index.
pub fn assign_to_nearest(points: &[FeatureVector], centroids: &[FeatureVector]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids).0).collect()
}

fn nearest(point: &[f64], centroids: &[FeatureVector]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[FeatureVector], k: usize, rng: &mut ChaCha8Rng) -> Vec<FeatureVector> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Round-off can leave `target` past the final partial sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).unwrap())
        } else {
            // Every remaining point duplicates a chosen centre.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn lloyd(
    points: &[FeatureVector],
    mut centroids: Vec<FeatureVector>,
    params: &KMeansParams,
) -> Result<Clustering> {
    let k = centroids.len();
    let mut assignments = assign_to_nearest(points, &centroids);
    let mut last_inertia = f64::INFINITY;
    for _ in 0..params.max_iters {
        repair_empty(points, &mut centroids, &mut assignments);
        let updated = cluster_means(points, &assignments, k)?;
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = updated;

        let inertia = inertia_of(points, &assignments, &centroids);
        debug_assert!(
            inertia <= last_inertia * (1.0 + 1e-9) + 1e-12,
            "k-means inertia increased: {last_inertia} -> {inertia}"
        );
        last_inertia = inertia;

        let reassigned = assign_to_nearest(points, &centroids);
        let stable = reassigned == assignments;
        assignments = reassigned;
        if stable || shift < params.tol {
            break;
        }
    }
    // `assignments` may have been refreshed after the last mean update.
    repair_empty(points, &mut centroids, &mut assignments);
    let centroids = cluster_means(points, &assignments, k)?;
    let inertia = inertia_of(points, &assignments, &centroids);
    Ok(Clustering {
        assignments,
        centroids,
        inertia,
    })
}

fn cluster_means(
    points: &[FeatureVector],
    assignments: &[usize],
    k: usize,
) -> Result<Vec<FeatureVector>> {
    (0..k)
        .map(|c| {
            mean_of(
                points
                    .iter()
                    .zip(assignments)
                    .filter(move |(_, &a)| a == c)
                    .map(|(p, _)| p),
            )
        })
        .collect()
}

fn inertia_of(points: &[FeatureVector], assignments: &[usize], centroids: &[FeatureVector]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// Gives every empty cluster the point farthest from its current centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty(points: &[FeatureVector], centroids: &mut [FeatureVector], assignments: &mut [usize]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[a]);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        let (i, _) = donor.expect("|points| >= k leaves a cluster with two members");
        counts[assignments[i]] -= 1;
        assignments[i] = empty;
        counts[empty] = 1;
        centroids[empty] = points[i].clone();
    }
}
