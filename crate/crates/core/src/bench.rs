//! Runtime scaling in the sample count.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::clustering::operator_by_name;
use crate::data::{gen_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::pipeline::{run_on_dataset, DataSource, RunConfig, StageTimings};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    /// Stage times averaged over the repeats.
    pub timings: StageTimings,
    /// Total time of each repeat.
    pub totals: Vec<f64>,
    pub admm_iterations: Vec<usize>,
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(
            "linear fit needs at least two paired points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "linear fit needs distinct x values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (slope * a + intercept);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    /// Total time against `n`; `None` when fewer than two sizes finished.
    pub fit: Option<LinearFit>,
    /// `total(n_{i+1}) / total(n_i)` for consecutive sizes.
    pub ratios: Vec<f64>,
    /// Why the benchmark stopped early, if it did.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingOptions {
    /// Wall-clock allowance; sizes not started when it runs out are skipped.
    pub budget: Duration,
    /// Run exactly this many ADMM iterations at every size instead of
    /// stopping on the residual tolerance. The iteration count to reach a
    /// fixed tolerance varies several-fold between data draws, which would
    /// otherwise drown the per-iteration cost that grows with `n`.
    pub admm_iterations: Option<usize>,
    /// Data draws per size, seeded `seed, seed + 1, ...`; their stage times
    /// are averaged. Single draws differ by ±20% in solver work.
    pub repeats: usize,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            budget: Duration::from_secs(600),
            admm_iterations: Some(100),
            repeats: 5,
        }
    }
}

/// Runs the pipeline on synthetic data of each size in `sizes` with the
/// settings of `base` (its data source is replaced). Sizes run sequentially;
/// the run stops early when the budget is exhausted or a run fails, and the
/// partial report is returned.
pub fn benchmark_scaling<T: Scalar>(
    base: &RunConfig,
    sizes: &[usize],
    options: &ScalingOptions,
) -> Result<ScalingReport> {
    let budget = options.budget;
    if sizes.len() < 3 {
        return Err(Error::InvalidArgument(
            "scaling benchmark needs at least 3 sizes".into(),
        ));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sizes must be strictly increasing".into(),
        ));
    }
    if options.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    let spec_template = match &base.source {
        DataSource::Synthetic(spec) => spec.clone(),
        DataSource::Csv { .. } => SyntheticSpec::default(),
    };
    let started = Instant::now();
    let mut points = Vec::new();
    let mut aborted = None;

    'sizes: for &n in sizes {
        let mut runs = Vec::with_capacity(options.repeats);
        for r in 0..options.repeats as u64 {
            if started.elapsed() > budget {
                aborted = Some(format!(
                    "time budget of {:?} exhausted before n = {n}",
                    budget
                ));
                break 'sizes;
            }
            let seed = base.seed.wrapping_add(r);
            let spec = SyntheticSpec {
                n,
                seed,
                ..spec_template.clone()
            };
            let mut config = base.clone();
            config.source = DataSource::Synthetic(spec.clone());
            config.seed = seed;
            config.output_dir = None;
            if let Some(iterations) = options.admm_iterations {
                config.solver.max_iter = iterations;
                config.solver.tol = f64::MIN_POSITIVE;
            }
            let outcome = operator_by_name::<T>(&config.operator, seed).and_then(|operator| {
                gen_synthetic::<T>(&spec)
                    .and_then(|ds| run_on_dataset(&ds, operator.as_ref(), &config))
            });
            match outcome {
                Ok(run) => runs.push((run.record.timings, run.record.solver.iterations)),
                Err(e) => {
                    aborted = Some(format!("run at n = {n}, seed {seed} failed: {e}"));
                    break 'sizes;
                }
            }
        }
        let point = ScalingPoint {
            n,
            timings: mean_timings(runs.iter().map(|r| &r.0)),
            totals: runs.iter().map(|r| r.0.total).collect(),
            admm_iterations: runs.iter().map(|r| r.1).collect(),
        };
        log::info!("n = {n}: mean total {:.3}s", point.timings.total);
        points.push(point);
    }

    let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.timings.total).collect();
    let fit = linear_fit(&x, &y).ok();
    let ratios = y.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(ScalingReport {
        points,
        fit,
        ratios,
        aborted,
    })
}

fn mean_timings<'a>(runs: impl ExactSizeIterator<Item = &'a StageTimings>) -> StageTimings {
    let count = runs.len().max(1) as f64;
    let mut sum = StageTimings::default();
    for t in runs {
        sum.anchor_selection += t.anchor_selection;
        sum.anchor_clustering += t.anchor_clustering;
        sum.graph_construction += t.graph_construction;
        sum.propagation += t.propagation;
        sum.metrics += t.metrics;
        sum.total += t.total;
    }
    StageTimings {
        anchor_selection: sum.anchor_selection / count,
        anchor_clustering: sum.anchor_clustering / count,
        graph_construction: sum.graph_construction / count,
        propagation: sum.propagation / count,
        metrics: sum.metrics / count,
        total: sum.total / count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_unit_r_squared() {
        let fit = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_squared_hand_value() {
        // y = (1, 3, 2): slope 0.5, intercept 1, residuals (-0.5, 1, -0.5), ss_res 1.5, ss_tot 2
        let fit = linear_fit(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((fit.r_squared - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sizes() {
        let config = RunConfig::synthetic(100, 0);
        let options = ScalingOptions::default();
        assert!(benchmark_scaling::<f64>(&config, &[100, 200], &options).is_err());
        assert!(benchmark_scaling::<f64>(&config, &[100, 300, 200], &options).is_err());
    }
}
