use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::clustering::AnchorLabeling;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::scalar::Scalar;

/// Target mass per (anchor cluster, sample group) block of the anchor graph.
///
/// Targets are `t[l][r] = |G_lr| / m_r * |G_r|`, where `|G_lr|` counts the
/// anchors of group `r` in cluster `l`, `m_r` all anchors of group `r` and
/// `|G_r|` the samples of group `r`. When the anchors carry the global group
/// proportions exactly this equals `|G_lr| * n / m`; otherwise it is the
/// closest table whose group marginals a column-stochastic graph can meet.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintTable<T> {
    targets: Array2<T>,
    anchor_blocks: Vec<Vec<usize>>,
    sample_blocks: Vec<Vec<usize>>,
    anchor_cluster: Vec<usize>,
    sample_group: Vec<usize>,
}

/// Summary of a constraint table for reports.
#[derive(Debug, Clone, Serialize)]
pub struct TableSummary {
    pub targets: Vec<Vec<f64>>,
    pub anchor_cluster_sizes: Vec<usize>,
    pub sample_group_sizes: Vec<usize>,
}

impl<T: Scalar> ConstraintTable<T> {
    pub fn build(labeling: &AnchorLabeling<T>, dataset: &Dataset<T>) -> Result<Self> {
        Self::from_parts(labeling, dataset.groups(), dataset.t())
    }

    /// Builds the table from the anchor labeling and per-sample groups.
    pub fn from_parts(
        labeling: &AnchorLabeling<T>,
        sample_group: &[usize],
        t: usize,
    ) -> Result<Self> {
        if labeling.t() != t {
            return Err(Error::Shape(format!(
                "labeling counts {} groups, dataset has {t}",
                labeling.t()
            )));
        }
        let joint = labeling.joint_counts();
        let k = labeling.k();
        let mut sample_blocks = vec![Vec::new(); t];
        for (i, &r) in sample_group.iter().enumerate() {
            if r >= t {
                return Err(Error::Shape(format!("sample {i} has group {r} >= {t}")));
            }
            sample_blocks[r].push(i);
        }

        let mut targets = Array2::zeros((k, t));
        for r in 0..t {
            let anchors_in_group: usize = joint.column(r).sum();
            let samples_in_group = sample_blocks[r].len();
            if samples_in_group == 0 {
                continue;
            }
            if anchors_in_group == 0 {
                return Err(Error::Infeasible(format!(
                    "group {r} has {samples_in_group} samples but no anchors"
                )));
            }
            let scale = T::of_usize(samples_in_group) / T::of_usize(anchors_in_group);
            for l in 0..k {
                targets[[l, r]] = T::of_usize(joint[[l, r]]) * scale;
            }
        }

        Ok(ConstraintTable {
            targets,
            anchor_blocks: labeling.cluster_members(),
            sample_blocks,
            anchor_cluster: labeling.labels().to_vec(),
            sample_group: sample_group.to_vec(),
        })
    }

    /// `k × t` target masses.
    pub fn targets(&self) -> ArrayView2<'_, T> {
        self.targets.view()
    }

    /// Anchor indices of each cluster (`C_l`).
    pub fn anchor_blocks(&self) -> &[Vec<usize>] {
        &self.anchor_blocks
    }

    /// Sample indices of each group (`G_r`).
    pub fn sample_blocks(&self) -> &[Vec<usize>] {
        &self.sample_blocks
    }

    pub fn anchor_cluster(&self) -> &[usize] {
        &self.anchor_cluster
    }

    pub fn sample_group(&self) -> &[usize] {
        &self.sample_group
    }

    pub fn k(&self) -> usize {
        self.targets.nrows()
    }

    pub fn t(&self) -> usize {
        self.targets.ncols()
    }

    /// Number of entries in block `(l, r)`.
    pub fn block_size(&self, l: usize, r: usize) -> usize {
        self.anchor_blocks[l].len() * self.sample_blocks[r].len()
    }

    /// Balance of the target table, i.e. the soft balance any feasible graph has.
    pub fn target_balance(&self) -> f64 {
        crate::metrics::table_balance(self.targets.view())
    }

    /// A column-stochastic `m × n` matrix (column-major) meeting every
    /// target: each block spreads its target evenly over its entries.
    pub fn feasible_point(&self) -> Array2<T> {
        use ndarray::ShapeBuilder;
        let m = self.anchor_cluster.len();
        let n = self.sample_group.len();
        let mut z = Array2::zeros((m, n).f());
        for (mut col, &r) in z.columns_mut().into_iter().zip(&self.sample_group) {
            for (v, &l) in col.iter_mut().zip(&self.anchor_cluster) {
                *v = self.targets[[l, r]] / T::of_usize(self.block_size(l, r));
            }
        }
        z
    }

    /// Block sums of an `m × n` matrix.
    pub fn block_sums(&self, matrix: ArrayView2<'_, T>) -> Array2<T> {
        let mut sums = Array2::zeros(self.targets.dim());
        for (col, &r) in matrix.columns().into_iter().zip(&self.sample_group) {
            for (&v, &l) in col.iter().zip(&self.anchor_cluster) {
                sums[[l, r]] += v;
            }
        }
        sums
    }

    pub fn summary(&self) -> TableSummary {
        TableSummary {
            targets: self
                .targets
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v.as_f64()).collect())
                .collect(),
            anchor_cluster_sizes: self.anchor_blocks.iter().map(Vec::len).collect(),
            sample_group_sizes: self.sample_blocks.iter().map(Vec::len).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(
        anchor_labels: Vec<usize>,
        anchor_groups: &[usize],
        samples: &[usize],
        k: usize,
        t: usize,
    ) -> Result<ConstraintTable<f64>> {
        let lab = AnchorLabeling::new(anchor_labels, anchor_groups, k, t)?;
        ConstraintTable::from_parts(&lab, samples, t)
    }

    #[test]
    fn consistent_marginals_match_proportional_rule() {
        // m = 4, n = 8, joint counts [[1, 1], [1, 1]], |G_0| = |G_1| = 4
        let samples = [0, 0, 0, 0, 1, 1, 1, 1];
        let tab = table(vec![0, 0, 1, 1], &[0, 1, 0, 1], &samples, 2, 2).unwrap();
        let proportional = 1.0 * 8.0 / 4.0;
        assert_eq!(tab.targets(), array![[2.0, 2.0], [2.0, 2.0]]);
        assert_eq!(tab.targets()[[0, 0]], proportional);
    }

    #[test]
    fn worked_ratios_for_seven_anchors() {
        // cluster 0: 3 circles + 1 square, cluster 1: 2 circles + 1 square
        let anchor_groups = [0, 0, 0, 1, 0, 0, 1];
        let labels = vec![0, 0, 0, 0, 1, 1, 1];
        let mut samples = vec![0; 10];
        samples.extend([1; 4]);
        let tab = table(labels, &anchor_groups, &samples, 2, 2).unwrap();
        let n = 14.0;
        let expected = array![[3.0 / 7.0, 1.0 / 7.0], [2.0 / 7.0, 1.0 / 7.0]] * n;
        for (a, b) in tab.targets().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn correction_restores_group_marginals() {
        // joint [[2, 0], [0, 2]], |G_0| = 5, |G_1| = 3, n = 8, m = 4
        let samples = [0, 0, 0, 0, 0, 1, 1, 1];
        let tab = table(vec![0, 0, 1, 1], &[0, 0, 1, 1], &samples, 2, 2).unwrap();
        let proportional = array![[2.0 * 8.0 / 4.0, 0.0], [0.0, 2.0 * 8.0 / 4.0]];
        assert_eq!(proportional, array![[4.0, 0.0], [0.0, 4.0]]);
        assert_eq!(tab.targets(), array![[5.0, 0.0], [0.0, 3.0]]);
        assert!((tab.targets().sum() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn group_without_anchors_is_infeasible() {
        let err = table(vec![0, 1], &[0, 0], &[0, 1, 1], 2, 2).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }
}
