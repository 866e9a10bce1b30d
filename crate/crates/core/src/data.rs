//! Dataset ingestion: CSV files and a synthetic two-cluster generator.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::scalar::Scalar;

/// Column selection for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvColumns {
    /// Protected attribute column.
    pub attribute: String,
    /// Optional ground-truth cluster column.
    pub truth: Option<String>,
    /// Feature columns; every other column when `None`.
    pub features: Option<Vec<String>>,
}

/// Loads a headed CSV file. Features are z-score standardized per column
/// (constant columns become all zeros). Attribute and truth values are
/// treated as categories and densified by first appearance.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, columns: &CsvColumns) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("missing column `{name}`")))
    };
    let attr_col = find(&columns.attribute)?;
    let truth_col = columns.truth.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = match &columns.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&c| c != attr_col && Some(c) != truth_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Csv("no feature columns".into()));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut groups: Vec<String> = Vec::new();
    let mut truth_raw: Vec<String> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // data rows are numbered from 1, after the header
        let line = row + 1;
        let record = record.map_err(|e| Error::Csv(format!("row {line}: {e}")))?;
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::Csv(format!(
                    "row {line}: non-numeric value `{cell}` in column `{}`",
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Csv(format!(
                    "row {line}: non-finite value `{cell}` in column `{}`",
                    header[c]
                )));
            }
            values.push(v);
        }
        groups.push(record.get(attr_col).unwrap_or("").trim().to_string());
        if let Some(c) = truth_col {
            truth_raw.push(record.get(c).unwrap_or("").trim().to_string());
        }
    }
    let n = groups.len();
    if n == 0 {
        return Err(Error::EmptyDataset(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    let d = feature_cols.len();
    let mut features = Array2::from_shape_fn((d, n), |(p, i)| values[i * d + p]);
    standardize(&mut features);
    let truth = truth_col.map(|_| densify(&truth_raw));
    Dataset::new(features.mapv(T::of), &groups, truth)
}

fn densify(values: &[String]) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    values
        .iter()
        .map(|v| {
            let next = ids.len();
            *ids.entry(v.as_str()).or_insert(next)
        })
        .collect()
}

/// Per-feature z-scores; zero-variance features are centered and divided by 1.
pub fn standardize(features: &mut Array2<f64>) {
    for mut row in features.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        row.mapv_inplace(|v| (v - mean) / sd);
    }
}

/// Parameters of the synthetic two-cluster generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    /// Cluster means sit at `(±separation, 0)`.
    pub separation: f64,
    /// Probability of protected group 0 inside cluster 0 and cluster 1.
    pub group_probs: [f64; 2],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 1000,
            seed: 0,
            separation: 3.0,
            group_probs: [0.65, 0.35],
        }
    }
}

impl SyntheticSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        SyntheticSpec {
            n,
            seed,
            ..Self::default()
        }
    }
}

/// Two unit-variance Gaussian clusters in the plane with a binary protected
/// attribute whose distribution depends on the cluster.
pub fn gen_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    if spec.n < 4 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs n >= 4 for two clusters, got {}",
            spec.n
        )));
    }
    if spec.group_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(format!(
            "group probabilities must lie in [0, 1], got {:?}",
            spec.group_probs
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Array2::zeros((2, spec.n));
    let mut groups = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let cluster = usize::from(rng.gen_bool(0.5));
        let center = if cluster == 0 {
            -spec.separation
        } else {
            spec.separation
        };
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        features[[0, i]] = T::of(center + dx);
        features[[1, i]] = T::of(dy);
        let group = if rng.gen_bool(spec.group_probs[cluster]) {
            0usize
        } else {
            1
        };
        groups.push(group);
        truth.push(cluster);
    }
    // keep dense id r equal to attribute value r whenever both values occur
    let truth = Some(truth);
    match Dataset::from_dense(features.clone(), groups.clone(), truth.clone()) {
        Ok(dataset) => Ok(dataset),
        Err(_) => Dataset::new(features, &groups, truth),
    }
}
