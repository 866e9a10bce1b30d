//! Anchor-level clustering.
//!
//! Any clustering routine can be plugged in through
//! [`FairClusteringOperator`]; [`run_operator`] validates its output and
//! builds the one-hot anchor label matrix together with the cluster/group
//! joint counts that the fair anchor graph needs.
//!
//! Two operators ship with the crate:
//!
//! * [`LloydKMeans`] (`"lloyd"`): fairness-agnostic k-means, useful as an
//!   ablation baseline.
//! * [`FairletKCenter`] (`"fairlet-kcenter"`): two-group fairlet
//!   decomposition followed by greedy k-center on fairlet centroids.
//!
//! Third-party operators implement the trait and are passed to
//! [`run_operator`] (or to the pipeline) directly.

mod fairlet;
mod kmeans;

use ndarray::{Array2, ArrayView2};

pub use fairlet::FairletKCenter;
pub use kmeans::LloydKMeans;

use crate::error::{Error, Result};
use crate::model::AnchorSet;
use crate::scalar::Scalar;

/// Clustering routine applied to the anchors: `(anchors, anchor groups, k)`
/// to one label in `[0, k)` per anchor. Every cluster must be non-empty.
pub trait FairClusteringOperator<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    /// `anchors` is `m × d`, one row per anchor.
    fn cluster(&self, anchors: ArrayView2<'_, T>, groups: &[usize], k: usize)
        -> Result<Vec<usize>>;
}

/// Names accepted by [`operator_by_name`].
pub const OPERATOR_NAMES: [&str; 2] = ["lloyd", "fairlet-kcenter"];

pub fn operator_by_name<T: Scalar>(
    name: &str,
    seed: u64,
) -> Result<Box<dyn FairClusteringOperator<T>>> {
    match name {
        "lloyd" => Ok(Box::new(LloydKMeans::new(seed))),
        "fairlet-kcenter" => Ok(Box::new(FairletKCenter)),
        _ => Err(Error::Unknown {
            kind: "clustering operator",
            name: name.to_string(),
        }),
    }
}

/// Validated anchor clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLabeling<T> {
    labels: Vec<usize>,
    one_hot: Array2<T>,
    cluster_sizes: Vec<usize>,
    joint_counts: Array2<usize>,
}

impl<T: Scalar> AnchorLabeling<T> {
    /// Builds the labeling from dense labels in `[0, k)`; `groups` are the
    /// anchor groups in `[0, t)`.
    pub fn new(labels: Vec<usize>, groups: &[usize], k: usize, t: usize) -> Result<Self> {
        if labels.len() != groups.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} anchors",
                labels.len(),
                groups.len()
            )));
        }
        let m = labels.len();
        let mut one_hot = Array2::zeros((m, k));
        let mut cluster_sizes = vec![0; k];
        let mut joint_counts = Array2::zeros((k, t));
        for (anchor, (&l, &g)) in labels.iter().zip(groups).enumerate() {
            if l >= k {
                return Err(Error::LabelOutOfRange {
                    anchor,
                    label: l,
                    k,
                });
            }
            if g >= t {
                return Err(Error::Shape(format!(
                    "anchor {anchor} has group {g} >= {t}"
                )));
            }
            one_hot[[anchor, l]] = T::one();
            cluster_sizes[l] += 1;
            joint_counts[[l, g]] += 1;
        }
        if let Some(empty) = cluster_sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(empty));
        }
        Ok(AnchorLabeling {
            labels,
            one_hot,
            cluster_sizes,
            joint_counts,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// One-hot label matrix `L`, `m × k`.
    pub fn one_hot(&self) -> &Array2<T> {
        &self.one_hot
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    /// Anchors per (cluster, group), `k × t`.
    pub fn joint_counts(&self) -> &Array2<usize> {
        &self.joint_counts
    }

    pub fn k(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn t(&self) -> usize {
        self.joint_counts.ncols()
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Anchor indices of each cluster.
    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (j, &l) in self.labels.iter().enumerate() {
            members[l].push(j);
        }
        members
    }
}

/// Runs `operator` on the anchors and validates the result. Cluster ids are
/// renumbered by first appearance.
pub fn run_operator<T: Scalar>(
    operator: &dyn FairClusteringOperator<T>,
    anchors: &AnchorSet<T>,
    k: usize,
    t: usize,
) -> Result<AnchorLabeling<T>> {
    let m = anchors.m();
    if k == 0 || m < k {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k <= m, got k = {k}, m = {m}"
        )));
    }
    let raw = operator.cluster(anchors.features().t(), anchors.groups(), k)?;
    if raw.len() != m {
        return Err(Error::Shape(format!(
            "operator `{}` returned {} labels for {m} anchors",
            operator.name(),
            raw.len()
        )));
    }
    let mut seen = vec![false; k];
    for (anchor, &l) in raw.iter().enumerate() {
        if l >= k {
            return Err(Error::LabelOutOfRange {
                anchor,
                label: l,
                k,
            });
        }
        seen[l] = true;
    }
    if let Some(empty) = seen.iter().position(|s| !s) {
        return Err(Error::EmptyCluster(empty));
    }
    AnchorLabeling::new(relabel_dense(&raw, k), anchors.groups(), k, t)
}

fn relabel_dense(raw: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    raw.iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

pub(crate) fn sq_dist<T: Scalar>(
    a: ndarray::ArrayView1<'_, T>,
    b: ndarray::ArrayView1<'_, T>,
) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dataset;
    use ndarray::array;

    struct Fixed(Vec<usize>);

    impl FairClusteringOperator<f64> for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }

        fn cluster(&self, _: ArrayView2<'_, f64>, _: &[usize], _: usize) -> Result<Vec<usize>> {
            Ok(self.0.clone())
        }
    }

    fn anchors(groups: &[usize]) -> AnchorSet<f64> {
        let n = groups.len();
        let x = ndarray::Array2::from_shape_fn((2, n), |(r, c)| (r + 2 * c) as f64);
        let ds = Dataset::new(x, groups, None).unwrap();
        AnchorSet::from_indices(&ds, (0..n).collect()).unwrap()
    }

    #[test]
    fn one_hot_construction() {
        let a = anchors(&[0, 1, 0, 1]);
        let lab = run_operator(&Fixed(vec![0, 1, 0, 1]), &a, 2, 2).unwrap();
        assert_eq!(
            lab.one_hot(),
            &array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]
        );
        assert_eq!(lab.cluster_sizes(), &[2, 2]);
    }

    #[test]
    fn joint_counts_direct() {
        let a = anchors(&[0, 1, 0, 1]);
        let lab = run_operator(&Fixed(vec![0, 0, 1, 1]), &a, 2, 2).unwrap();
        assert_eq!(lab.joint_counts(), &array![[1, 1], [1, 1]]);
        let rows: Vec<usize> = lab
            .joint_counts()
            .rows()
            .into_iter()
            .map(|r| r.sum())
            .collect();
        assert_eq!(rows, lab.cluster_sizes());
        assert_eq!(lab.joint_counts().sum(), 4);
    }

    #[test]
    fn empty_cluster_rejected() {
        let a = anchors(&[0, 1, 0, 1]);
        let err = run_operator(&Fixed(vec![0, 2, 0, 2]), &a, 3, 2).unwrap_err();
        assert!(matches!(err, Error::EmptyCluster(1)));
    }

    #[test]
    fn out_of_range_rejected() {
        let a = anchors(&[0, 1]);
        let err = run_operator(&Fixed(vec![0, 5]), &a, 2, 2).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                anchor: 1,
                label: 5,
                k: 2
            }
        ));
    }

    #[test]
    fn relabels_by_first_appearance() {
        let a = anchors(&[0, 1, 0]);
        let lab = run_operator(&Fixed(vec![2, 0, 1]), &a, 3, 2).unwrap();
        assert_eq!(lab.labels(), &[0, 1, 2]);
    }

    #[test]
    fn unknown_operator_name() {
        assert!(operator_by_name::<f64>("spectral", 0).is_err());
        for name in OPERATOR_NAMES {
            assert_eq!(operator_by_name::<f64>(name, 0).unwrap().name(), name);
        }
    }
}
