//! Lloyd's K-means with k-means++ seeding over embedding rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Partition;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub partition: Partition,
    /// Cluster id of every point in centroid order (before canonicalization).
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansOutcome {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(point: &[f32], centroid: &[f64]) -> f64 {
    point
        .iter()
        .zip(centroid)
        .map(|(&x, &c)| {
            let d = x as f64 - c;
            d * d
        })
        .sum()
}

/// Nearest centroid per point (lowest index on ties) and the squared distance.
fn assign(m: &EmbeddingMatrix, centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    (0..m.n())
        .into_par_iter()
        .map(|i| {
            let row = m.row(i);
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(row, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

fn seed_plus_plus(m: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let to_f64 = |i: usize| m.row(i).iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let n = m.n();
    let mut centroids = vec![to_f64(rng.random_range(0..n))];
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(m.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = to_f64(next);
        for (i, slot) in closest.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(m.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters the rows of `m` into `cfg.k` groups.
///
/// An emptied cluster is re-seeded at the point farthest from its current
/// centroid (lowest index on ties) that is not already re-seeding another cluster.
pub fn kmeans(m: &EmbeddingMatrix, cfg: &KMeansConfig) -> Result<KMeansOutcome> {
    if cfg.k == 0 || cfg.k > m.n() {
        return Err(Error::Config(format!("k = {} invalid for {} points", cfg.k, m.n())));
    }
    if cfg.max_iter == 0 || !(cfg.tol >= 0.0) {
        return Err(Error::Config("max_iter must be positive and tol non-negative".into()));
    }
    let d = m.d();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = seed_plus_plus(m, cfg.k, &mut rng);
    let mut inertia_history = Vec::new();
    let mut assigned = assign(m, &centroids);
    inertia_history.push(assigned.iter().map(|a| a.1).sum());
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0f64; d]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(m.row(i)) {
                *s += x as f64;
            }
        }
        let mut reseeded: Vec<usize> = Vec::new();
        let mut shift: f64 = 0.0;
        for c in 0..cfg.k {
            let next = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect::<Vec<f64>>()
            } else {
                let far = (0..m.n())
                    .filter(|i| !reseeded.contains(i))
                    .max_by(|&a, &b| assigned[a].1.total_cmp(&assigned[b].1).then(b.cmp(&a)))
                    .expect("k <= n leaves a point to re-seed");
                reseeded.push(far);
                m.row(far).iter().map(|&x| x as f64).collect()
            };
            let moved = centroids[c]
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            shift = shift.max(moved);
            centroids[c] = next;
        }
        assigned = assign(m, &centroids);
        inertia_history.push(assigned.iter().map(|a| a.1).sum());
        if shift <= cfg.tol {
            break;
        }
    }

    let labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
    Ok(KMeansOutcome {
        partition: Partition::from_labels(&labels),
        labels,
        centroids,
        inertia_history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> EmbeddingMatrix {
        let mut rows = Vec::new();
        for i in 0..20 {
            let j = (i % 5) as f32 * 0.01;
            rows.push(vec![0.0 + j, 0.0 - j]);
            rows.push(vec![10.0 - j, 10.0 + j]);
        }
        EmbeddingMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn separated_blobs_split() {
        let out = kmeans(&blobs(), &KMeansConfig { k: 2, seed: 3, ..Default::default() }).unwrap();
        assert_eq!(out.partition.sizes(), &[20, 20]);
        for i in (0..40).step_by(2) {
            assert_ne!(out.partition.cluster_of(i), out.partition.cluster_of(i + 1));
            assert_eq!(out.partition.cluster_of(i), out.partition.cluster_of(0));
        }
        assert!(out.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn k_one_single_cluster() {
        let out = kmeans(&blobs(), &KMeansConfig { k: 1, ..Default::default() }).unwrap();
        assert_eq!(out.partition.num_clusters(), 1);
    }

    #[test]
    fn k_larger_than_n() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(kmeans(&m, &KMeansConfig { k: 3, ..Default::default() }).is_err());
    }

    #[test]
    fn duplicate_points_fill_all_clusters() {
        // three identical points and k = 3 forces empty-cluster re-seeding paths
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0], vec![5.0, 5.0]]).unwrap();
        let out = kmeans(&m, &KMeansConfig { k: 3, seed: 1, ..Default::default() }).unwrap();
        assert_eq!(out.labels.len(), 4);
        assert!(out.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn deterministic_for_seed() {
        let c = KMeansConfig { k: 3, seed: 9, ..Default::default() };
        assert_eq!(kmeans(&blobs(), &c).unwrap().labels, kmeans(&blobs(), &c).unwrap().labels);
    }

    #[test]
    fn final_assignment_is_nearest_centroid() {
        let out = kmeans(&blobs(), &KMeansConfig { k: 4, seed: 5, max_iter: 2, ..Default::default() }).unwrap();
        let m = blobs();
        for i in 0..m.n() {
            let own = sq_dist(m.row(i), &out.centroids[out.labels[i]]);
            assert!(out.centroids.iter().all(|c| own <= sq_dist(m.row(i), c)));
        }
    }
}
