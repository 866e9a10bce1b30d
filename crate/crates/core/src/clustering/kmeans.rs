use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sq_dist, FairClusteringOperator};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lloyd's k-means with k-means++ seeding. Ignores protected groups.
///
/// A cluster that becomes empty takes over the point farthest from its own
/// centroid among clusters with more than one member, so every returned
/// cluster is non-empty whenever `m >= k`.
#[derive(Debug, Clone)]
pub struct LloydKMeans {
    pub seed: u64,
    pub max_iter: usize,
}

impl LloydKMeans {
    pub fn new(seed: u64) -> Self {
        LloydKMeans {
            seed,
            max_iter: 300,
        }
    }
}

impl<T: Scalar> FairClusteringOperator<T> for LloydKMeans {
    fn name(&self) -> &str {
        "lloyd"
    }

    fn cluster(
        &self,
        points: ArrayView2<'_, T>,
        _groups: &[usize],
        k: usize,
    ) -> Result<Vec<usize>> {
        let m = points.nrows();
        if k == 0 || m < k {
            return Err(Error::InvalidArgument(format!(
                "k-means needs 1 <= k <= m, got k = {k}, m = {m}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centroids = kmeans_pp(points, k, &mut rng);
        let mut labels = vec![usize::MAX; m];

        for _ in 0..self.max_iter {
            let mut next = assign(points, &centroids);
            fill_empty(points, &mut centroids, &mut next, k);
            if next == labels {
                break;
            }
            labels = next;
            update_centroids(points, &labels, &mut centroids);
        }
        Ok(labels)
    }
}

fn kmeans_pp<T: Scalar>(points: ArrayView2<'_, T>, k: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let m = points.nrows();
    let mut chosen = vec![rng.gen_range(0..m)];
    let mut d2: Vec<T> = (0..m)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: T = d2.iter().copied().sum();
        let pick = if total > T::zero() {
            let mut target = T::of(rng.gen::<f64>()) * total;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > T::zero() && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding landing on an already chosen point
            if chosen.contains(&pick) {
                argmax_lowest(&d2)
            } else {
                pick
            }
        } else {
            (0..m).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
        for (i, w) in d2.iter_mut().enumerate() {
            let d = sq_dist(points.row(i), points.row(pick));
            if d < *w {
                *w = d;
            }
        }
    }
    points.select(Axis(0), &chosen)
}

fn argmax_lowest<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn assign<T: Scalar>(points: ArrayView2<'_, T>, centroids: &Array2<T>) -> Vec<usize> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (c, centroid) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

fn fill_empty<T: Scalar>(
    points: ArrayView2<'_, T>,
    centroids: &mut Array2<T>,
    labels: &mut [usize],
    k: usize,
) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far: Option<(usize, T)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] < 2 {
                continue;
            }
            let d = sq_dist(points.row(i), centroids.row(l));
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            sizes[labels[i]] -= 1;
            sizes[c] = 1;
            labels[i] = c;
            centroids.row_mut(c).assign(&points.row(i));
        }
    }
}

fn update_centroids<T: Scalar>(
    points: ArrayView2<'_, T>,
    labels: &[usize],
    centroids: &mut Array2<T>,
) {
    let mut sums = Array2::<T>::zeros(centroids.dim());
    let mut counts = vec![0usize; centroids.nrows()];
    for (p, &l) in points.rows().into_iter().zip(labels) {
        let mut row = sums.row_mut(l);
        row += &p;
        counts[l] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mean = &sums.row(c) / T::of_usize(count);
            centroids.row_mut(c).assign(&mean);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cost(points: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..k {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mean = points.select(Axis(0), &members).mean_axis(Axis(0)).unwrap();
            for &i in &members {
                total += sq_dist(points.row(i), mean.view());
            }
        }
        total
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn recovers_two_blobs_like_brute_force() {
        // intra-blob spread 0.1, separation 10
        let pts = array![
            [0.0, 0.0],
            [0.1, 0.05],
            [10.0, 10.0],
            [10.05, 9.9],
            [-0.05, 0.1],
            [9.95, 10.1]
        ];
        let n = pts.nrows();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let c = cost(&pts, &labels, 2);
            if c < best.0 {
                best = (c, labels);
            }
        }
        let labels = LloydKMeans::new(3).cluster(pts.view(), &[0; 6], 2).unwrap();
        assert!(same_partition(&labels, &best.1));
    }

    #[test]
    fn m_equals_k_gives_singletons() {
        let pts = array![[0.0], [1.0], [5.0]];
        let mut labels = LloydKMeans::new(0)
            .cluster(pts.view(), &[0, 0, 0], 3)
            .unwrap();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn identical_points_split_deterministically() {
        let pts = Array2::<f64>::ones((5, 2));
        let op = LloydKMeans::new(9);
        let a = op.cluster(pts.view(), &[0; 5], 2).unwrap();
        let b = op.cluster(pts.view(), &[0; 5], 2).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(&0) && a.contains(&1));
    }
}
