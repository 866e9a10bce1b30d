//! Fairness and quality metrics.
//!
//! `balance` is the worst intra-cluster ratio between any two groups'
//! proportions; `mnce` is the smallest intra-cluster group entropy divided
//! by the global group entropy. Empty clusters are skipped by both. `acc`
//! matches predicted to true clusters with an optimal assignment, and `nmi`
//! normalizes mutual information by the arithmetic mean of the two
//! entropies.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::clustering::AnchorLabeling;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Metrics reported for one clustering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsBundle {
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub balance: f64,
    pub mnce: Option<f64>,
    pub soft_balance: Option<f64>,
    /// Intra-cluster group proportions, `k × t`; rows of empty clusters are zero.
    pub per_cluster_proportions: Vec<Vec<f64>>,
}

impl MetricsBundle {
    /// Computes every label-based metric. Truth-dependent metrics are
    /// omitted when `truth` is absent, and MNCE when only one group exists.
    pub fn compute(
        labels: &[usize],
        groups: &[usize],
        truth: Option<&[usize]>,
        k: usize,
        t: usize,
    ) -> Self {
        let props = per_cluster_proportions(labels, groups, k, t);
        MetricsBundle {
            acc: truth.map(|truth| acc(labels, truth)),
            nmi: truth.map(|truth| nmi(labels, truth)),
            balance: balance(labels, groups, k, t),
            mnce: mnce(labels, groups, k, t).ok(),
            soft_balance: None,
            per_cluster_proportions: props.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// `k × t` table of members per (cluster, group).
pub fn contingency(labels: &[usize], groups: &[usize], k: usize, t: usize) -> Array2<usize> {
    let mut table = Array2::zeros((k, t));
    for (&l, &g) in labels.iter().zip(groups) {
        table[[l, g]] += 1;
    }
    table
}

pub fn per_cluster_proportions(
    labels: &[usize],
    groups: &[usize],
    k: usize,
    t: usize,
) -> Array2<f64> {
    let table = contingency(labels, groups, k, t);
    let mut props = Array2::zeros((k, t));
    for (l, row) in table.rows().into_iter().enumerate() {
        let size: usize = row.sum();
        if size > 0 {
            for (r, &c) in row.iter().enumerate() {
                props[[l, r]] = c as f64 / size as f64;
            }
        }
    }
    props
}

/// Worst min/max ratio of group proportions over non-empty clusters.
pub fn balance(labels: &[usize], groups: &[usize], k: usize, t: usize) -> f64 {
    let table = contingency(labels, groups, k, t);
    let rows = table
        .rows()
        .into_iter()
        .map(|r| r.mapv(|c| c as f64).to_vec());
    min_ratio(rows, "balance")
}

/// Balance of a `k × t` table of group masses per cluster.
pub fn table_balance<T: Scalar>(masses: ArrayView2<'_, T>) -> f64 {
    let rows = masses
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    min_ratio(rows, "table balance")
}

fn min_ratio(rows: impl Iterator<Item = Vec<f64>>, what: &str) -> f64 {
    let mut worst = 1.0_f64;
    for (l, row) in rows.enumerate() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            log::warn!("{what}: cluster {l} is empty and is skipped");
            continue;
        }
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(0.0, f64::max);
        worst = worst.min(if hi > 0.0 { lo / hi } else { 0.0 });
    }
    worst
}

fn entropy(counts: impl Iterator<Item = f64>) -> f64 {
    let counts: Vec<f64> = counts.collect();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Minimal normalized conditional entropy.
pub fn mnce(labels: &[usize], groups: &[usize], k: usize, t: usize) -> Result<f64> {
    let table = contingency(labels, groups, k, t);
    let global = entropy(table.columns().into_iter().map(|c| c.sum() as f64));
    if global <= 0.0 {
        return Err(Error::MetricUndefined(
            "MNCE needs at least two populated protected groups (global group entropy is 0)".into(),
        ));
    }
    let worst = table
        .rows()
        .into_iter()
        .filter(|r| r.sum() > 0)
        .map(|r| entropy(r.iter().map(|&c| c as f64)))
        .fold(f64::INFINITY, f64::min);
    Ok((worst / global).clamp(0.0, 1.0))
}

fn label_table(a: &[usize], b: &[usize]) -> Array2<f64> {
    let ka = a.iter().max().map_or(0, |&v| v + 1);
    let kb = b.iter().max().map_or(0, |&v| v + 1);
    let mut table = Array2::zeros((ka, kb));
    for (&x, &y) in a.iter().zip(b) {
        table[[x, y]] += 1.0;
    }
    table
}

/// Clustering accuracy under the best one-to-one matching of predicted to
/// true cluster ids.
pub fn acc(labels: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(
        labels.len(),
        truth.len(),
        "labels and truth differ in length"
    );
    if labels.is_empty() {
        return 0.0;
    }
    let table = label_table(labels, truth);
    let size = table.nrows().max(table.ncols());
    let mut cost = Array2::zeros((size, size));
    let max = table.iter().copied().fold(0.0, f64::max);
    cost.fill(max);
    for ((i, j), &c) in table.indexed_iter() {
        cost[[i, j]] = max - c;
    }
    let assignment = min_cost_assignment(&cost);
    let matched: f64 = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < table.nrows() && j < table.ncols())
        .map(|(i, &j)| table[[i, j]])
        .sum();
    matched / labels.len() as f64
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on a
/// square cost matrix. Returns the column assigned to each row.
pub(crate) fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Normalized mutual information, `2 I(U; V) / (H(U) + H(V))`; 0 when both
/// partitions are trivial.
pub fn nmi(labels: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(
        labels.len(),
        truth.len(),
        "labels and truth differ in length"
    );
    let table = label_table(labels, truth);
    nmi_from_table(&table)
}

pub(crate) fn nmi_from_table(table: &Array2<f64>) -> f64 {
    let n: f64 = table.sum();
    if n <= 0.0 {
        return 0.0;
    }
    let rows: Vec<f64> = table.rows().into_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = table.columns().into_iter().map(|c| c.sum()).collect();
    let hu = entropy(rows.iter().copied());
    let hv = entropy(cols.iter().copied());
    let mut mi = 0.0;
    for ((i, j), &c) in table.indexed_iter() {
        if c > 0.0 {
            mi += c / n * (c * n / (rows[i] * cols[j])).ln();
        }
    }
    let denom = hu + hv;
    if denom <= 0.0 {
        return 0.0;
    }
    (2.0 * mi / denom).clamp(0.0, 1.0)
}

/// Soft group masses per anchor cluster: entry `(l, r)` sums `Z[j, i]` over
/// anchors `j` in cluster `l` and samples `i` in group `r`.
pub fn soft_masses<T: Scalar>(
    z: ArrayView2<'_, T>,
    anchor_labels: &[usize],
    groups: &[usize],
    k: usize,
    t: usize,
) -> Result<Array2<T>> {
    if z.nrows() != anchor_labels.len() || z.ncols() != groups.len() {
        return Err(Error::Shape(format!(
            "graph is {}x{}, expected {}x{}",
            z.nrows(),
            z.ncols(),
            anchor_labels.len(),
            groups.len()
        )));
    }
    let mut masses = Array2::<T>::zeros((k, t));
    for (col, &r) in z.columns().into_iter().zip(groups) {
        for (&v, &l) in col.iter().zip(anchor_labels) {
            masses[[l, r]] += v;
        }
    }
    Ok(masses)
}

/// Balance of the soft group proportions induced by the anchor graph.
pub fn soft_balance<T: Scalar>(
    z: ArrayView2<'_, T>,
    labeling: &AnchorLabeling<T>,
    groups: &[usize],
) -> Result<f64> {
    let masses = soft_masses(z, labeling.labels(), groups, labeling.k(), labeling.t())?;
    for (l, row) in masses.rows().into_iter().enumerate() {
        if row.sum() <= T::zero() {
            return Err(Error::MetricUndefined(format!(
                "anchor cluster {l} receives no soft mass"
            )));
        }
    }
    Ok(table_balance(masses.view()))
}
