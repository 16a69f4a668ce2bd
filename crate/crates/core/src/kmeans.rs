//! Lloyd's algorithm with distance-weighted (k-means++) seeding and
//! deterministic restarts.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Domain};
use crate::sbm::CommunityAssignment;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: CommunityAssignment,
    /// k x d, row a is the center of cluster a.
    pub centers: DMatrix<f64>,
    /// Sum of squared distances of points to their assigned centers.
    pub objective: f64,
}

/// Best-of-`restarts` Lloyd runs on the rows of `points` (n x d).
///
/// Each run seeds centers with k-means++ sampling, then iterates assignment
/// and mean updates until labels stop changing or 100 iterations. Empty
/// clusters are reseeded at the point farthest from its assigned center.
/// Fully deterministic given `seed`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::parameter(format!(
            "k-means needs n >= k >= 1 (n = {n}, k = {k})"
        )));
    }
    if restarts == 0 {
        return Err(Error::parameter("k-means needs restarts >= 1"));
    }

    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let run = lloyd_once(points, k, derive_seed(seed, Domain::KMeans, r as u64));
        let better = match &best {
            None => true,
            Some(b) => run.objective < b.objective,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn lloyd_once(points: &DMatrix<f64>, k: usize, seed: u64) -> KMeansResult {
    let n = points.nrows();
    let d = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&points.row(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| (points.row(i) - centers.row(0)).norm_squared())
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&points.row(pick));
        for i in 0..n {
            let alt = (points.row(i) - centers.row(c)).norm_squared();
            if alt < dist2[i] {
                dist2[i] = alt;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut prev_objective = f64::INFINITY;
    for _iter in 0..100 {
        // Assignment: nearest center, ties to the lowest index.
        let mut changed = false;
        let mut objective = 0.0;
        for i in 0..n {
            let mut best_c = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dd = (points.row(i) - centers.row(c)).norm_squared();
                if dd < best_d {
                    best_d = dd;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
            objective += best_d;
        }
        debug_assert!(
            objective <= prev_objective * (1.0 + 1e-12) + 1e-12,
            "Lloyd objective increased: {prev_objective} -> {objective}"
        );
        prev_objective = objective;
        if !changed && _iter > 0 {
            break;
        }

        // Update step.
        let mut counts = vec![0usize; k];
        let mut sums = DMatrix::zeros(k, d);
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[(labels[i], j)] += points[(i, j)];
            }
        }
        // Reseed empty clusters at the farthest point from its center,
        // stealing only from clusters that keep at least one member.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far_i = usize::MAX;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[labels[i]] <= 1 {
                    continue;
                }
                let dd = (points.row(i) - centers.row(labels[i])).norm_squared();
                if dd > far_d {
                    far_d = dd;
                    far_i = i;
                }
            }
            if far_i == usize::MAX {
                continue;
            }
            let old = labels[far_i];
            counts[old] -= 1;
            for j in 0..d {
                sums[(old, j)] -= points[(far_i, j)];
            }
            labels[far_i] = c;
            counts[c] = 1;
            for j in 0..d {
                sums[(c, j)] = points[(far_i, j)];
            }
            changed = true;
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
    }

    // Final objective recomputed from the returned centers and labels.
    let mut objective = 0.0;
    for i in 0..n {
        objective += (points.row(i) - centers.row(labels[i])).norm_squared();
    }
    KMeansResult {
        labels: CommunityAssignment::new(labels),
        centers,
        objective,
    }
}
