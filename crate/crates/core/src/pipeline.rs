//! End-to-end runs: anchor selection, anchor clustering, anchor graph,
//! propagation and metrics, with per-stage timings and file outputs.
//!
//! Files written to the output directory:
//!
//! * `labels.csv`: header `sample,label`, then one row per sample.
//! * `trace.jsonl`: one JSON object per ADMM iteration with fields
//!   `iteration`, `objective`, `primal_residual`, `dual_residual`, `rho`.
//! * `record.json`: the [`RunRecord`].

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::clustering::{operator_by_name, run_operator, FairClusteringOperator};
use crate::data::{gen_synthetic, load_csv, CsvColumns, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fdas::{self, AnchorMode};
use crate::graph::{self, ConstraintTable, GraphMode, SolveReport, SolverConfig, TraceRecord};
use crate::metrics::{self, MetricsBundle};
use crate::model::{ClusterResult, Dataset};
use crate::propagation::propagate;
use crate::scalar::Scalar;

pub const LABELS_FILE: &str = "labels.csv";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const RECORD_FILE: &str = "record.json";

/// Where the samples come from.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        attribute: String,
        truth: Option<String>,
        features: Option<Vec<String>>,
    },
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn load<T: Scalar>(&self) -> Result<Dataset<T>> {
        match self {
            DataSource::Csv {
                path,
                attribute,
                truth,
                features,
            } => load_csv(
                path,
                &CsvColumns {
                    attribute: attribute.clone(),
                    truth: truth.clone(),
                    features: features.clone(),
                },
            ),
            DataSource::Synthetic(spec) => gen_synthetic(spec),
        }
    }
}

/// Number of anchors, either absolute or as a multiple of the group count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorCount {
    Absolute(usize),
    PerGroup(usize),
}

impl AnchorCount {
    pub fn resolve(self, t: usize) -> usize {
        match self {
            AnchorCount::Absolute(m) => m,
            AnchorCount::PerGroup(multiple) => multiple * t,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub source: DataSource,
    pub k: usize,
    pub anchors: AnchorCount,
    pub operator: String,
    pub solver: SolverConfig,
    pub anchor_mode: AnchorMode,
    pub graph_mode: GraphMode,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for a synthetic run.
    pub fn synthetic(n: usize, seed: u64) -> Self {
        RunConfig {
            source: DataSource::Synthetic(SyntheticSpec::new(n, seed)),
            k: 2,
            anchors: AnchorCount::Absolute(20),
            operator: "fairlet-kcenter".into(),
            solver: SolverConfig::default(),
            anchor_mode: AnchorMode::Fdas,
            graph_mode: GraphMode::Fair,
            seed,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub d: usize,
    pub t: usize,
    /// Original attribute value of each dense group id.
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
}

/// Stage durations in seconds.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    pub anchor_selection: f64,
    pub anchor_clustering: f64,
    pub graph_construction: f64,
    pub propagation: f64,
    pub metrics: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.anchor_selection
            + self.anchor_clustering
            + self.graph_construction
            + self.propagation
            + self.metrics
    }

    fn as_map(&self) -> BTreeMap<String, f64> {
        [
            ("anchor_selection", self.anchor_selection),
            ("anchor_clustering", self.anchor_clustering),
            ("graph_construction", self.graph_construction),
            ("propagation", self.propagation),
            ("metrics", self.metrics),
            ("total", self.total),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Solver outcome without the per-iteration trace.
#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub mode: GraphMode,
    pub iterations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub final_rho: f64,
}

impl From<&SolveReport> for SolverSummary {
    fn from(r: &SolveReport) -> Self {
        SolverSummary {
            mode: r.mode,
            iterations: r.iterations,
            converged: r.converged,
            initial_objective: r.initial_objective,
            final_objective: r.final_objective,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            final_rho: r.final_rho,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OutputFiles {
    pub labels: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub record: Option<PathBuf>,
}

/// Everything reported about one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub m: usize,
    /// `"absolute"` or `"per_group"`, after how `m` was specified.
    pub m_source: &'static str,
    pub anchor_group_counts: Vec<usize>,
    pub anchor_cluster_sizes: Vec<usize>,
    /// Balance of the anchor clustering.
    pub anchor_balance: f64,
    /// Balance of the block targets; `None` for the unconstrained graph.
    pub target_balance: Option<f64>,
    pub metrics: MetricsBundle,
    /// `soft_balance - balance`: what the argmax decision costs in fairness.
    pub soft_hard_gap: Option<f64>,
    pub solver: SolverSummary,
    pub timings: StageTimings,
    pub warnings: Vec<String>,
    pub files: OutputFiles,
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub record: RunRecord,
    pub result: ClusterResult<T>,
    pub trace: Vec<TraceRecord>,
}

/// Loads the data named in `config`, runs the pipeline and writes outputs.
pub fn run_pipeline<T: Scalar>(config: &RunConfig) -> Result<RunOutput<T>> {
    let dataset = config.source.load::<T>().map_err(|e| e.in_stage("load"))?;
    let operator =
        operator_by_name::<T>(&config.operator, config.seed).map_err(|e| e.in_stage("config"))?;
    run_on_dataset(&dataset, operator.as_ref(), config)
}

/// Runs the pipeline on an already loaded dataset with the given operator.
pub fn run_on_dataset<T: Scalar>(
    dataset: &Dataset<T>,
    operator: &dyn FairClusteringOperator<T>,
    config: &RunConfig,
) -> Result<RunOutput<T>> {
    let total_start = Instant::now();
    let k = config.k;
    let t = dataset.t();
    let m = config.anchors.resolve(t);
    let mut warnings = Vec::new();
    if k < 2 {
        return Err(
            Error::InvalidArgument(format!("k must be at least 2, got {k}")).in_stage("config"),
        );
    }
    if m < k {
        return Err(
            Error::InvalidArgument(format!("m = {m} must be at least k = {k}")).in_stage("config"),
        );
    }
    config.solver.validate().map_err(|e| e.in_stage("config"))?;
    if let Some(truth) = dataset.truth() {
        let distinct = truth
            .iter()
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        if distinct < k {
            let msg = format!("ground truth has {distinct} distinct labels, fewer than k = {k}");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let anchors = fdas::select(dataset, m, config.anchor_mode, config.seed)
        .map_err(|e| e.in_stage("anchor_selection"))?;
    timings.anchor_selection = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let labeling =
        run_operator(operator, &anchors, k, t).map_err(|e| e.in_stage("anchor_clustering"))?;
    timings.anchor_clustering = start.elapsed().as_secs_f64();
    let anchor_balance = metrics::balance(labeling.labels(), anchors.groups(), k, t);

    let start = Instant::now();
    let (solution, target_balance) = match config.graph_mode {
        GraphMode::Fair => {
            let table = ConstraintTable::build(&labeling, dataset)
                .map_err(|e| e.in_stage("graph_construction"))?;
            let problem = graph::ReconstructionProblem::new(
                dataset.features().view(),
                anchors.features().view(),
                T::of(config.solver.alpha),
            )
            .map_err(|e| e.in_stage("graph_construction"))?;
            let solution = graph::solve_with_table(&problem, &table, &config.solver)
                .map_err(|e| e.in_stage("graph_construction"))?;
            (solution, Some(table.target_balance()))
        }
        GraphMode::Unconstrained => (
            graph::solve_unconstrained(dataset, &anchors, &config.solver)
                .map_err(|e| e.in_stage("graph_construction"))?,
            None,
        ),
    };
    timings.graph_construction = start.elapsed().as_secs_f64();
    if !solution.report.converged {
        let msg = format!(
            "ADMM stopped after {} iterations without reaching tolerance {} (r = {:.3e}, s = {:.3e})",
            solution.report.iterations, config.solver.tol, solution.report.primal_residual, solution.report.dual_residual
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let start = Instant::now();
    let propagation =
        propagate(&solution.graph, &labeling).map_err(|e| e.in_stage("propagation"))?;
    timings.propagation = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut bundle = MetricsBundle::compute(
        &propagation.hard_labels,
        dataset.groups(),
        dataset.truth(),
        k,
        t,
    );
    bundle.soft_balance = Some(
        metrics::soft_balance(solution.graph.z().view(), &labeling, dataset.groups())
            .map_err(|e| e.in_stage("metrics"))?,
    );
    let mut sizes = vec![0usize; k];
    for &l in &propagation.hard_labels {
        sizes[l] += 1;
    }
    for (l, &s) in sizes.iter().enumerate() {
        if s == 0 {
            let msg = format!("cluster {l} received no samples after propagation");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    timings.metrics = start.elapsed().as_secs_f64();
    timings.total = total_start.elapsed().as_secs_f64();

    let stats = dataset.group_stats();
    let mut record = RunRecord {
        config: config.clone(),
        dataset: DatasetSummary {
            n: dataset.n(),
            d: dataset.d(),
            t,
            group_names: dataset.group_names().to_vec(),
            group_sizes: stats.sizes,
        },
        m,
        m_source: match config.anchors {
            AnchorCount::Absolute(_) => "absolute",
            AnchorCount::PerGroup(_) => "per_group",
        },
        anchor_group_counts: anchors.group_counts(t),
        anchor_cluster_sizes: labeling.cluster_sizes().to_vec(),
        anchor_balance,
        target_balance,
        soft_hard_gap: bundle.soft_balance.map(|s| s - bundle.balance),
        metrics: bundle.clone(),
        solver: SolverSummary::from(&solution.report),
        timings,
        warnings,
        files: OutputFiles::default(),
    };

    let mut metric_map = BTreeMap::new();
    metric_map.insert("balance".to_string(), bundle.balance);
    for (name, value) in [
        ("acc", bundle.acc),
        ("nmi", bundle.nmi),
        ("mnce", bundle.mnce),
        ("soft_balance", bundle.soft_balance),
    ] {
        if let Some(v) = value {
            metric_map.insert(name.to_string(), v);
        }
    }
    let result = ClusterResult {
        hard_labels: propagation.hard_labels,
        soft: propagation.soft,
        k,
        metrics: metric_map,
        timings: timings.as_map(),
    };

    if let Some(dir) = &config.output_dir {
        record.files = write_outputs(dir, &record, &result.hard_labels, &solution.report.trace)
            .map_err(|e| e.in_stage("output"))?;
    }
    Ok(RunOutput {
        record,
        result,
        trace: solution.report.trace,
    })
}

fn write_outputs(
    dir: &Path,
    record: &RunRecord,
    labels: &[usize],
    trace: &[TraceRecord],
) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let files = OutputFiles {
        labels: Some(dir.join(LABELS_FILE)),
        trace: Some(dir.join(TRACE_FILE)),
        record: Some(dir.join(RECORD_FILE)),
    };
    let mut record = record.clone();
    record.files = files.clone();
    let written = [&files.labels, &files.trace, &files.record];
    let outcome = (|| -> Result<()> {
        write_labels(files.labels.as_ref().unwrap(), labels)?;
        write_trace(files.trace.as_ref().unwrap(), trace)?;
        let mut out = BufWriter::new(fs::File::create(files.record.as_ref().unwrap())?);
        serde_json::to_writer_pretty(&mut out, &record)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    })();
    if let Err(e) = outcome {
        for path in written.into_iter().flatten() {
            let _ = fs::remove_file(path);
        }
        return Err(e);
    }
    Ok(files)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "sample,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(out, "{i},{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a labels file written by [`write_labels`]; rows may come in any order.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let reader = std::io::BufReader::new(fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (line_no == 0 && line.starts_with("sample")) {
            continue;
        }
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                Error::Csv(format!(
                    "{}: malformed line {}: `{line}`",
                    path.display(),
                    line_no + 1
                ))
            })
        };
        let mut cols = line.split([',', '\t', ' ']).filter(|c| !c.is_empty());
        let sample = parse(cols.next())?;
        let label = parse(cols.next())?;
        pairs.push((sample, label));
    }
    pairs.sort_unstable();
    for (expected, &(sample, _)) in pairs.iter().enumerate() {
        if sample != expected {
            return Err(Error::Csv(format!(
                "{}: sample indices are not 0..{} without gaps",
                path.display(),
                pairs.len()
            )));
        }
    }
    Ok(pairs.into_iter().map(|(_, l)| l).collect())
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for record in trace {
        serde_json::to_writer(&mut out, record)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
