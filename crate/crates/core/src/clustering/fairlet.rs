use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{sq_dist, FairClusteringOperator};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two-group fairlet decomposition followed by greedy k-center.
///
/// With anchor group counts reduced to the ratio `p : q` (majority to
/// minority), anchors are packed into `gcd` fairlets of exactly that
/// composition. Fairlets are grown greedily: minority anchors are swept in
/// order of their first coordinate, each unmatched one seeds a fairlet and
/// pulls in its nearest unmatched minority and majority anchors. Fairlet
/// centroids are then clustered by farthest-first traversal starting at
/// fairlet 0, and every anchor inherits its fairlet's cluster.
///
/// When the reduced ratio yields fewer than `k` fairlets, each minority
/// anchor seeds its own fairlet and the majority anchors are spread as
/// evenly as possible over them.
#[derive(Debug, Clone, Copy, Default)]
pub struct FairletKCenter;

impl<T: Scalar> FairClusteringOperator<T> for FairletKCenter {
    fn name(&self) -> &str {
        "fairlet-kcenter"
    }

    fn cluster(&self, points: ArrayView2<'_, T>, groups: &[usize], k: usize) -> Result<Vec<usize>> {
        let m = points.nrows();
        let unsupported = |reason: String| Error::UnsupportedOperator {
            operator: "fairlet-kcenter".into(),
            reason,
        };
        if groups.len() != m {
            return Err(Error::Shape(format!(
                "{} groups for {m} anchors",
                groups.len()
            )));
        }
        if k == 0 || m < k {
            return Err(Error::InvalidArgument(format!(
                "fairlet k-center needs 1 <= k <= m, got k = {k}, m = {m}"
            )));
        }
        let mut distinct: Vec<usize> = groups.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != 2 {
            return Err(unsupported(format!(
                "needs exactly 2 protected groups among the anchors, found {}; use `lloyd` or a multi-group operator",
                distinct.len()
            )));
        }

        let members = |g: usize| -> Vec<usize> { (0..m).filter(|&i| groups[i] == g).collect() };
        let (a, b) = (members(distinct[0]), members(distinct[1]));
        let (major, mut minor) = if a.len() >= b.len() { (a, b) } else { (b, a) };

        let compositions = fairlet_compositions(major.len(), minor.len(), k).ok_or_else(|| {
            unsupported(format!(
                "{} minority anchors cannot form {k} fairlets",
                minor.len()
            ))
        })?;

        minor.sort_by(|&i, &j| {
            points[[i, 0]]
                .partial_cmp(&points[[j, 0]])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let fairlets = build_fairlets(points, &minor, &major, &compositions);

        let centroids = Array2::from_shape_fn((fairlets.len(), points.ncols()), |(f, c)| {
            let sum: T = fairlets[f].iter().map(|&i| points[[i, c]]).sum();
            sum / T::of_usize(fairlets[f].len())
        });
        let fairlet_labels = k_center(centroids.view(), k);

        let mut labels = vec![0; m];
        for (fairlet, &label) in fairlets.iter().zip(&fairlet_labels) {
            for &i in fairlet {
                labels[i] = label;
            }
        }
        Ok(labels)
    }
}

/// `(minority, majority)` counts per fairlet.
fn fairlet_compositions(major: usize, minor: usize, k: usize) -> Option<Vec<(usize, usize)>> {
    if minor == 0 {
        return None;
    }
    let g = gcd(major, minor);
    if g >= k {
        return Some(vec![(minor / g, major / g); g]);
    }
    if minor < k {
        return None;
    }
    let (base, extra) = (major / minor, major % minor);
    Some(
        (0..minor)
            .map(|i| (1, base + usize::from(i < extra)))
            .collect(),
    )
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn build_fairlets<T: Scalar>(
    points: ArrayView2<'_, T>,
    minor_sorted: &[usize],
    major: &[usize],
    compositions: &[(usize, usize)],
) -> Vec<Vec<usize>> {
    let m = points.nrows();
    let mut used = vec![false; m];
    let mut fairlets = Vec::with_capacity(compositions.len());
    for &(n_minor, n_major) in compositions {
        let Some(&seed) = minor_sorted.iter().find(|&&i| !used[i]) else {
            break;
        };
        used[seed] = true;
        let mut fairlet = vec![seed];
        for (pool, want) in [(minor_sorted, n_minor - 1), (major, n_major)] {
            for _ in 0..want {
                let nearest = pool.iter().copied().filter(|&i| !used[i]).fold(
                    None::<(usize, T)>,
                    |best, i| {
                        let d = sq_dist(points.row(i), points.row(seed));
                        match best {
                            Some((bi, bd)) if bd < d || (bd == d && bi < i) => Some((bi, bd)),
                            _ => Some((i, d)),
                        }
                    },
                );
                if let Some((i, _)) = nearest {
                    used[i] = true;
                    fairlet.push(i);
                }
            }
        }
        fairlets.push(fairlet);
    }
    fairlets
}

/// Farthest-first traversal from point 0. Each center keeps its own point;
/// other points go to the nearest center (earliest center on ties).
fn k_center<T: Scalar>(points: ArrayView2<'_, T>, k: usize) -> Vec<usize> {
    let f = points.nrows();
    let mut centers = vec![0usize];
    let mut nearest: Array1<T> = points
        .axis_iter(Axis(0))
        .map(|p| sq_dist(p, points.row(0)))
        .collect();
    while centers.len() < k.min(f) {
        let mut far = None::<usize>;
        for i in 0..f {
            if centers.contains(&i) {
                continue;
            }
            if far.is_none_or(|b| nearest[i] > nearest[b]) {
                far = Some(i);
            }
        }
        let c = far.expect("fewer fairlets than k");
        centers.push(c);
        for i in 0..f {
            let d = sq_dist(points.row(i), points.row(c));
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }

    (0..f)
        .map(|i| {
            if let Some(own) = centers.iter().position(|&c| c == i) {
                return own;
            }
            let mut best = 0;
            let mut best_d = T::infinity();
            for (label, &c) in centers.iter().enumerate() {
                let d = sq_dist(points.row(i), points.row(c));
                if d < best_d {
                    best = label;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}
