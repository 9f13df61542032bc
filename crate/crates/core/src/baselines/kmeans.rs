use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
}

impl KMeansModel {
    /// k-means++ seeding followed by at most `n_iter` Lloyd iterations.
    pub fn fit(x: &[Vec<f64>], n_clusters: usize, n_iter: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if n_clusters < 1 {
            return Err(Error::Hyperparameter("n_clusters must be at least 1".into()));
        }
        if x.is_empty() {
            return Err(Error::Empty("no points to cluster".into()));
        }
        let mut centroids = vec![x[rng.random_range(0..x.len())].clone()];
        let mut d2: Vec<f64> = x.iter().map(|p| dist2(p, &centroids[0])).collect();
        while centroids.len() < n_clusters {
            let total: f64 = d2.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = x.len() - 1;
                for (i, w) in d2.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            } else {
                rng.random_range(0..x.len())
            };
            centroids.push(x[next].clone());
            for (d, p) in d2.iter_mut().zip(x) {
                *d = d.min(dist2(p, &centroids[centroids.len() - 1]));
            }
        }
        let mut model = KMeansModel { centroids };
        let mut labels: Vec<usize> = x.iter().map(|p| model.assign(p)).collect();
        for _ in 0..n_iter {
            let dim = x[0].len();
            let mut sums = vec![vec![0.0; dim]; n_clusters];
            let mut counts = vec![0usize; n_clusters];
            for (p, &l) in x.iter().zip(&labels) {
                counts[l] += 1;
                sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
            }
            for c in 0..n_clusters {
                if counts[c] > 0 {
                    model.centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
            let next: Vec<usize> = x.iter().map(|p| model.assign(p)).collect();
            if next == labels {
                break;
            }
            labels = next;
        }
        Ok(model)
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn assign(&self, p: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = dist2(p, c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Mean silhouette coefficient over at most `max_points` points sampled without
/// replacement. Singleton clusters score 0; a single cluster scores 0.
pub fn silhouette(x: &[Vec<f64>], labels: &[usize], max_points: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n_clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
    if x.len() < 2 || n_clusters < 2 {
        return 0.0;
    }
    let idx: Vec<usize> = if x.len() > max_points {
        rand::seq::index::sample(rng, x.len(), max_points).into_vec()
    } else {
        (0..x.len()).collect()
    };
    let mut total = 0.0;
    for &i in &idx {
        let mut sum = vec![0.0; n_clusters];
        let mut cnt = vec![0usize; n_clusters];
        for &j in &idx {
            if i != j {
                sum[labels[j]] += dist2(&x[i], &x[j]).sqrt();
                cnt[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if cnt[own] == 0 {
            continue;
        }
        let a = sum[own] / cnt[own] as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != own && cnt[c] > 0)
            .map(|c| sum[c] / cnt[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / idx.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn blobs() -> Vec<Vec<f64>> {
        let mut x = Vec::new();
        for i in 0..30 {
            let j = (i % 5) as f64 * 0.01;
            x.push(vec![j, j]);
            x.push(vec![10.0 + j, 10.0 - j]);
        }
        x
    }

    #[test]
    fn separates_blobs() {
        let x = blobs();
        let m = KMeansModel::fit(&x, 2, 20, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let labels: Vec<usize> = x.iter().map(|p| m.assign(p)).collect();
        assert!(labels.chunks(2).all(|c| c[0] != c[1]));
        assert!(labels.iter().step_by(2).all(|&l| l == labels[0]));
        let s = silhouette(&x, &labels, 1000, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(s > 0.99, "{s}");
    }

    #[test]
    fn deterministic_given_seed() {
        let x = blobs();
        let a = KMeansModel::fit(&x, 3, 20, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = KMeansModel::fit(&x, 3, 20, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_zero_clusters_and_handles_duplicates() {
        let x = vec![vec![1.0]; 4];
        assert!(KMeansModel::fit(&x, 0, 5, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let m = KMeansModel::fit(&x, 3, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.assign(&[1.0]), 0);
        assert_eq!(silhouette(&x, &[0, 0, 0, 0], 10, &mut ChaCha8Rng::seed_from_u64(0)), 0.0);
    }
}
