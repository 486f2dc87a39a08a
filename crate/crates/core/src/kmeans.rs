//! Lloyd's k-means with k-means++ seeding, shared by EXIF clustering and
//! palette extraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans<T, const D: usize> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<[T; D]>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: T,
    /// Inertia after every assignment step, including the final one.
    pub inertia_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real, const D: usize> KMeans<T, D> {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[inline]
pub fn squared_distance<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> T {
    let mut s = T::zero();
    for i in 0..D {
        let d = a[i] - b[i];
        s = s + d * d;
    }
    s
}

pub fn kmeans<T: Real, const D: usize>(points: &[[T; D]], k: usize, seed: u64) -> Result<KMeans<T, D>> {
    kmeans_with(points, &KMeansConfig::new(k, seed))
}

pub fn kmeans_with<T: Real, const D: usize>(points: &[[T; D]], cfg: &KMeansConfig) -> Result<KMeans<T, D>> {
    if points.is_empty() {
        return Err(Error::invalid("k-means needs at least one point"));
    }
    if cfg.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if cfg.k > points.len() {
        return Err(Error::invalid(format!(
            "k = {} exceeds the number of points ({})",
            cfg.k,
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = plus_plus_init(points, cfg.k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let tol = T::lit(cfg.tol);

    while iterations < cfg.max_iter {
        iterations += 1;
        history.push(assign(points, &centroids, &mut assignments));

        // running means: clusters of identical points get that point exactly
        let mut means = vec![[T::zero(); D]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            let n = T::lit(counts[a] as f64);
            for d in 0..D {
                means[a][d] = means[a][d] + (p[d] - means[a][d]) / n;
            }
        }
        let mut shift = T::zero();
        for c in 0..cfg.k {
            // empty clusters keep their previous centroid
            if counts[c] == 0 {
                continue;
            }
            let next = means[c];
            shift = shift.max(squared_distance(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < tol {
            converged = true;
            break;
        }
    }
    let inertia = assign(points, &centroids, &mut assignments);
    history.push(inertia);

    Ok(KMeans {
        assignments,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// Nearest-centroid assignment (ties go to the lower index). Returns inertia.
fn assign<T: Real, const D: usize>(points: &[[T; D]], centroids: &[[T; D]], out: &mut [usize]) -> T {
    let mut inertia = T::zero();
    for (p, slot) in points.iter().zip(out.iter_mut()) {
        let mut best = 0;
        let mut best_d = squared_distance(p, &centroids[0]);
        for (c, centroid) in centroids.iter().enumerate().skip(1) {
            let d = squared_distance(p, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *slot = best;
        inertia = inertia + best_d;
    }
    inertia
}

fn plus_plus_init<T: Real, const D: usize>(points: &[[T; D]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[T; D]> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]).as_f64())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            // guard against rounding leaving `pick` on a zero-weight point
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let c = points[idx];
        for (p, w) in points.iter().zip(d2.iter_mut()) {
            *w = w.min(squared_distance(p, &c).as_f64());
        }
        centroids.push(c);
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// Adjusted Rand index via explicit pair counting over all point pairs.
    fn brute_force_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut total) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                total += 1.0;
                if sa && sb {
                    both += 1.0;
                }
                if sa {
                    only_a += 1.0;
                }
                if sb {
                    only_b += 1.0;
                }
            }
        }
        let expected = only_a * only_b / total;
        let max = 0.5 * (only_a + only_b);
        if max == expected {
            return 1.0;
        }
        (both - expected) / (max - expected)
    }

    fn blobs(seed: u64) -> (Vec<[f64; 6]>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let centers = [[0.0; 6], [2.0, 0.0, 2.0, 0.0, 2.0, 0.0], [0.0, -2.0, 0.0, 2.0, 0.0, -2.0]];
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (l, c) in centers.iter().enumerate() {
            for _ in 0..40 {
                pts.push(c.map(|v| v + noise.sample(&mut rng)));
                labels.push(l);
            }
        }
        (pts, labels)
    }

    #[test]
    fn ari_oracle_sanity() {
        assert_eq!(brute_force_ari(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(brute_force_ari(&[0, 1, 0, 1], &[0, 0, 1, 1]) < 0.0);
    }

    #[test]
    fn identical_points_single_cluster() {
        let pts = vec![[0.4f64, 1.0, 2.0, 3.0, 4.0, 5.0]; 30];
        let r = kmeans(&pts, 1, 6).unwrap();
        assert!(r.assignments.iter().all(|&a| a == 0));
        assert_eq!(r.centroids[0], pts[0]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn k_equal_n_gives_zero_inertia() {
        let pts: Vec<[f64; 2]> = (0..7).map(|i| [i as f64, (i * i) as f64]).collect();
        let r = kmeans(&pts, 7, 1).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut seen = r.assignments.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 7);
    }

    #[test]
    fn recovers_planted_blobs() {
        for seed in [6, 7, 8] {
            let (pts, labels) = blobs(seed);
            let r = kmeans(&pts, 3, seed).unwrap();
            assert!(brute_force_ari(&r.assignments, &labels) > 0.9);
            assert!(r.converged);
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0], "inertia rose: {:?}", r.inertia_history);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (pts, _) = blobs(3);
        let a = kmeans(&pts, 5, 42).unwrap();
        let b = kmeans(&pts, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argument_errors() {
        let pts = [[0.0f64; 2]; 3];
        assert!(kmeans(&pts, 4, 0).is_err());
        assert!(kmeans(&pts, 0, 0).is_err());
        assert!(kmeans::<f64, 2>(&[], 1, 0).is_err());
    }
}
