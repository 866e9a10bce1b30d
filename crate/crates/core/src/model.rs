//! Shared data types.
//!
//! Matrices follow a column-per-sample convention throughout: the feature
//! matrix is `d × n`, anchor features are `d × m` and the anchor graph is
//! `m × n`.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use ndarray::{Array2, ArrayView1, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A validated dataset: features, one protected group per sample and
/// optional ground-truth cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    groups: Vec<usize>,
    truth: Option<Vec<usize>>,
    n_groups: usize,
    group_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    /// Validates raw inputs and densifies group ids by first appearance.
    ///
    /// `features` is `d × n`. The original group value of dense id `r` is
    /// kept in [`Dataset::group_names`].
    pub fn new<G>(features: Array2<T>, groups: &[G], truth: Option<Vec<usize>>) -> Result<Self>
    where
        G: Eq + Hash + ToString,
    {
        let (d, n) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset(format!("feature matrix is {d}x{n}")));
        }
        if groups.len() != n {
            return Err(Error::Shape(format!(
                "{} group labels for {n} samples",
                groups.len()
            )));
        }
        if let Some(truth) = &truth {
            if truth.len() != n {
                return Err(Error::Shape(format!(
                    "{} truth labels for {n} samples",
                    truth.len()
                )));
            }
        }
        for ((row, col), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }

        let mut dense: HashMap<&G, usize> = HashMap::new();
        let mut group_names = Vec::new();
        let groups = groups
            .iter()
            .map(|g| {
                *dense.entry(g).or_insert_with(|| {
                    group_names.push(g.to_string());
                    group_names.len() - 1
                })
            })
            .collect();

        Ok(Dataset {
            features,
            groups,
            truth,
            n_groups: group_names.len(),
            group_names,
        })
    }

    /// Builds a dataset whose group ids are already dense: every id in
    /// `[0, max + 1)` must occur. Group names are the ids themselves.
    pub fn from_dense(
        features: Array2<T>,
        groups: Vec<usize>,
        truth: Option<Vec<usize>>,
    ) -> Result<Self> {
        let t = groups.iter().max().map_or(0, |&g| g + 1);
        let mut seen = vec![false; t];
        for &g in &groups {
            seen[g] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "group id {missing} has no members"
            )));
        }
        let mut dataset = Dataset::new(features, &groups, truth)?;
        dataset.groups = groups;
        dataset.group_names = (0..t).map(|g| g.to_string()).collect();
        Ok(dataset)
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, T> {
        self.features.column(i)
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn truth(&self) -> Option<&[usize]> {
        self.truth.as_deref()
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.features.ncols()
    }

    /// Number of features.
    pub fn d(&self) -> usize {
        self.features.nrows()
    }

    /// Number of protected groups.
    pub fn t(&self) -> usize {
        self.n_groups
    }

    /// Original group value for each dense group id.
    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    /// Indices of the samples in each group.
    pub fn group_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_groups];
        for (i, &g) in self.groups.iter().enumerate() {
            members[g].push(i);
        }
        members
    }

    pub fn group_stats(&self) -> GroupStats {
        group_stats(self)
    }
}

/// Per-group sizes and global proportions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub sizes: Vec<usize>,
    pub proportions: Vec<f64>,
}

pub fn group_stats<T: Scalar>(dataset: &Dataset<T>) -> GroupStats {
    let mut sizes = vec![0usize; dataset.t()];
    for &g in dataset.groups() {
        sizes[g] += 1;
    }
    let n = dataset.n() as f64;
    let proportions = sizes.iter().map(|&s| s as f64 / n).collect();
    GroupStats { sizes, proportions }
}

/// The selected anchors: sample indices, their features and groups.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet<T> {
    indices: Vec<usize>,
    features: Array2<T>,
    groups: Vec<usize>,
}

impl<T: Scalar> AnchorSet<T> {
    /// Builds the anchor set by copying the selected columns of `dataset`.
    pub fn from_indices(dataset: &Dataset<T>, indices: Vec<usize>) -> Result<Self> {
        let n = dataset.n();
        if indices.is_empty() {
            return Err(Error::InvalidArgument("anchor set is empty".into()));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "anchor index {i} out of range for {n} samples"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate anchor index {i}"
                )));
            }
        }
        let features = dataset.features().select(Axis(1), &indices);
        let groups = indices.iter().map(|&i| dataset.groups()[i]).collect();
        Ok(AnchorSet {
            indices,
            features,
            groups,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Anchor features `H`, `d × m`.
    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// Anchor count per group, for a dataset with `t` groups.
    pub fn group_counts(&self, t: usize) -> Vec<usize> {
        let mut counts = vec![0; t];
        for &g in &self.groups {
            counts[g] += 1;
        }
        counts
    }
}

/// Column-stochastic `m × n` matrix mapping samples to anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGraph<T> {
    z: Array2<T>,
}

impl<T: Scalar> AnchorGraph<T> {
    /// Absolute tolerance on column sums.
    pub const COLUMN_SUM_TOL: f64 = 1e-6;
    /// Most negative entry accepted before clamping.
    pub const NEGATIVE_TOL: f64 = 1e-9;

    /// Validates `z` and clamps slightly negative entries to zero.
    pub fn new(mut z: Array2<T>) -> Result<Self> {
        let neg_tol = T::of(-Self::NEGATIVE_TOL);
        let sum_tol = T::of(Self::COLUMN_SUM_TOL);
        for (i, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
            let mut sum = T::zero();
            for v in col.iter_mut() {
                if !v.is_finite() || *v < neg_tol {
                    return Err(Error::InvalidArgument(format!(
                        "anchor graph column {i} has entry {v} outside the simplex"
                    )));
                }
                if *v < T::zero() {
                    *v = T::zero();
                }
                sum += *v;
            }
            if (sum - T::one()).abs() > sum_tol {
                return Err(Error::InvalidArgument(format!(
                    "anchor graph column {i} sums to {sum}"
                )));
            }
        }
        Ok(AnchorGraph { z })
    }

    pub fn z(&self) -> &Array2<T> {
        &self.z
    }

    pub fn m(&self) -> usize {
        self.z.nrows()
    }

    pub fn n(&self) -> usize {
        self.z.ncols()
    }

    pub fn into_inner(self) -> Array2<T> {
        self.z
    }
}

/// Final clustering: hard labels, soft assignments, metrics and timings.
#[derive(Debug, Clone)]
pub struct ClusterResult<T> {
    pub hard_labels: Vec<usize>,
    /// Soft assignment matrix `Y`, `n × k`.
    pub soft: Array2<T>,
    pub k: usize,
    pub metrics: BTreeMap<String, f64>,
    /// Stage durations in seconds.
    pub timings: BTreeMap<String, f64>,
}
