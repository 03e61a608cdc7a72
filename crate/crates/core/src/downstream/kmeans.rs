use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, centroids.row(c)));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the assignment no
/// longer changes or `max_iters` is reached. A cluster that loses all its
/// points is re-seeded at the point farthest from its current centroid.
pub fn kmeans(x: &Array2<f64>, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k-means needs 1 <= K <= rows, got K={k} for {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(x, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dists = vec![0.0; n];
        for (i, r) in x.rows().into_iter().enumerate() {
            let (j, d) = nearest(r, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            dists[i] = d;
            inertia += d;
        }
        trace.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, &j) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(j);
            row += &x.row(i);
            counts[j] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mut row = centroids.row_mut(j);
                row.assign(&(&sums.row(j) / counts[j] as f64));
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[assignments[i]] -= 1;
                    counts[j] = 1;
                    dists[i] = 0.0;
                    centroids.row_mut(j).assign(&x.row(i));
                }
            }
        }
    }
    let inertia = x
        .rows()
        .into_iter()
        .zip(&assignments)
        .map(|(r, &j)| sq_dist(r, centroids.row(j)))
        .sum();
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia_trace: trace,
        inertia,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_obvious_groups() {
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        for seed in 0..20 {
            let r = kmeans(&x, 2, seed, 300).unwrap();
            let a = &r.assignments;
            assert_eq!(a[0], a[1]);
            assert_eq!(a[2], a[3]);
            assert_ne!(a[0], a[2]);
            assert!((r.inertia - 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn one_cluster_per_point() {
        let x = array![[0.0, 1.0], [3.0, 1.0], [5.0, -2.0]];
        let r = kmeans(&x, 3, 1, 300).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2]);
    }

    #[test]
    fn too_many_clusters() {
        assert!(kmeans(&array![[0.0]], 2, 0, 10).is_err());
        assert!(kmeans(&array![[0.0]], 0, 0, 10).is_err());
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_simple_fn((200, 3), || rng.random::<f64>());
        for seed in 0..10 {
            let r = kmeans(&x, 7, seed, 300).unwrap();
            for w in r.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.inertia_trace);
            }
        }
    }
}
