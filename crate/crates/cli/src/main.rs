//! `afcf`: run the anchor-based fair clustering pipeline from the shell.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use afcf::bench::{benchmark_scaling, ScalingOptions};
use afcf::data::{gen_synthetic, SyntheticSpec};
use afcf::graph::FwVariant;
use afcf::pipeline::{read_labels, AnchorCount, DataSource, RunRecord};
use afcf::{AnchorMode, GraphMode, MetricsBundle, RunConfig, Scalar, SolverConfig};

const OUTPUT_ENV: &str = "AFCF_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "afcf", version, about = "Anchor-based fair clustering")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log verbosity; repeat for more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and print the run record as JSON.
    Cluster(ClusterArgs),
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Time the pipeline over increasing synthetic sizes.
    Bench(BenchArgs),
    /// Score an existing labels file against a dataset.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row; synthetic data is used when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Protected attribute column of the CSV.
    #[arg(long, requires = "input")]
    attribute: Option<String>,
    /// Ground-truth column of the CSV.
    #[arg(long, requires = "input")]
    truth: Option<String>,
    /// Feature columns of the CSV (default: all other columns).
    #[arg(long, value_delimiter = ',', requires = "input")]
    features: Option<Vec<String>>,
    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Args)]
struct SyntheticArgs {
    /// Synthetic sample count.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Distance of each synthetic cluster mean from the origin.
    #[arg(long, default_value_t = SyntheticSpec::default().separation)]
    separation: f64,
    /// Probability of group 0 in synthetic clusters 0 and 1.
    #[arg(long, value_delimiter = ',', default_values_t = SyntheticSpec::default().group_probs)]
    group_probs: Vec<f64>,
}

impl SyntheticArgs {
    fn spec(&self, seed: u64) -> Result<SyntheticSpec> {
        let &[p0, p1] = self.group_probs.as_slice() else {
            bail!(
                "--group-probs takes two values, got {}",
                self.group_probs.len()
            );
        };
        Ok(SyntheticSpec {
            n: self.n,
            seed,
            separation: self.separation,
            group_probs: [p0, p1],
        })
    }
}

impl DataArgs {
    fn source(&self, seed: u64) -> Result<DataSource> {
        match &self.input {
            Some(path) => {
                let Some(attribute) = self.attribute.clone() else {
                    bail!("--attribute is required with --input");
                };
                Ok(DataSource::Csv {
                    path: path.clone(),
                    attribute,
                    truth: self.truth.clone(),
                    features: self.features.clone(),
                })
            }
            None => Ok(DataSource::Synthetic(self.synthetic.spec(seed)?)),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Number of clusters.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Number of anchors.
    #[arg(long, default_value_t = 20, conflicts_with = "anchors_per_group")]
    m: usize,
    /// Anchors as a multiple of the number of groups, instead of --m.
    #[arg(long)]
    anchors_per_group: Option<usize>,
    /// Clustering operator applied to the anchors.
    #[arg(long, default_value = "fairlet-kcenter", value_parser = ["fairlet-kcenter", "lloyd"])]
    operator: String,
    /// Anchor selection: fdas, das or random.
    #[arg(long, default_value = "fdas", value_parser = parse::<AnchorMode>)]
    anchor_mode: AnchorMode,
    /// Anchor graph: fair or unconstrained.
    #[arg(long, default_value = "fair", value_parser = parse::<GraphMode>)]
    graph_mode: GraphMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = SolverConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = SolverConfig::default().rho0)]
    rho0: f64,
    /// ADMM residual tolerance.
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    tol: f64,
    /// Maximum ADMM iterations.
    #[arg(long, default_value_t = SolverConfig::default().max_iter)]
    max_iter: usize,
    #[arg(long, default_value_t = SolverConfig::default().fw_max_iter)]
    fw_max_iter: usize,
    #[arg(long, default_value_t = SolverConfig::default().fw_tol)]
    fw_tol: f64,
    /// Frank-Wolfe step rule: classic, away, pairwise or corrective.
    #[arg(long, default_value = "corrective", value_parser = parse::<FwVariant>)]
    fw_variant: FwVariant,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            rho0: self.rho0,
            tol: self.tol,
            max_iter: self.max_iter,
            fw_max_iter: self.fw_max_iter,
            fw_tol: self.fw_tol,
            fw_variant: self.fw_variant,
            ..SolverConfig::default()
        }
    }
}

impl RunArgs {
    fn config(&self, source: DataSource, output_dir: Option<PathBuf>) -> RunConfig {
        RunConfig {
            source,
            k: self.k,
            anchors: match self.anchors_per_group {
                Some(multiple) => AnchorCount::PerGroup(multiple),
                None => AnchorCount::Absolute(self.m),
            },
            operator: self.operator.clone(),
            solver: self.solver.config(),
            anchor_mode: self.anchor_mode,
            graph_mode: self.graph_mode,
            seed: self.seed,
            output_dir,
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Directory for labels.csv, trace.jsonl and record.json.
    #[arg(long, env = OUTPUT_ENV)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination file (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Sample counts, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000, 20_000, 40_000, 80_000])]
    sizes: Vec<usize>,
    /// Fixed ADMM iterations per run; 0 stops on the tolerance instead.
    #[arg(long, default_value_t = 100)]
    admm_iterations: usize,
    /// Data draws per size.
    #[arg(long, default_value_t = ScalingOptions::default().repeats)]
    repeats: usize,
    /// Wall-clock allowance in seconds.
    #[arg(long, default_value_t = ScalingOptions::default().budget.as_secs())]
    budget_secs: u64,
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Directory for bench.json.
    #[arg(long, env = OUTPUT_ENV)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Labels file with header `sample,label`.
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Seed of the synthetic dataset the labels belong to.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of clusters (default: largest label + 1).
    #[arg(long)]
    k: Option<usize>,
}

fn parse<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("afcf: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes that a staged error already
/// spelled out in its own message.
fn describe(e: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if message.contains(&text) {
            continue;
        }
        if !message.is_empty() {
            message.push_str(": ");
        }
        message.push_str(&text);
    }
    message
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("stage `config` failed: thread pool")?;
    }
    match cli.command {
        Command::Cluster(args) => cluster(args),
        Command::Gen(args) => generate(args),
        Command::Bench(args) => bench(args),
        Command::Metrics(args) => metrics(args),
    }
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let source = args
        .data
        .source(args.run.seed)
        .context("stage `config` failed")?;
    let config = args.run.config(source, args.output_dir);
    let record = match args.run.precision {
        Precision::F64 => run_typed::<f64>(&config)?,
        Precision::F32 => run_typed::<f32>(&config)?,
    };
    print_json(&record)
}

fn run_typed<T: Scalar>(config: &RunConfig) -> Result<RunRecord> {
    Ok(afcf::run_pipeline::<T>(config)?.record)
}

fn generate(args: GenArgs) -> Result<()> {
    let spec = args
        .synthetic
        .spec(args.seed)
        .context("stage `config` failed")?;
    let dataset = gen_synthetic::<f64>(&spec).context("stage `generate` failed")?;
    let sink: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(
            fs::File::create(path)
                .with_context(|| format!("stage `output` failed: {}", path.display()))?,
        ),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    let truth = dataset.truth().expect("synthetic data has ground truth");
    let names = dataset.group_names();
    writeln!(out, "x0,x1,group,truth")?;
    for (i, sample) in dataset.features().columns().into_iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            sample[0],
            sample[1],
            names[dataset.groups()[i]],
            truth[i]
        )?;
    }
    out.flush().context("stage `output` failed")?;
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let spec = args
        .synthetic
        .spec(args.run.seed)
        .context("stage `config` failed")?;
    let base = args.run.config(DataSource::Synthetic(spec), None);
    let options = ScalingOptions {
        budget: Duration::from_secs(args.budget_secs),
        admm_iterations: (args.admm_iterations > 0).then_some(args.admm_iterations),
        repeats: args.repeats,
    };
    let report = match args.run.precision {
        Precision::F64 => benchmark_scaling::<f64>(&base, &args.sizes, &options),
        Precision::F32 => benchmark_scaling::<f32>(&base, &args.sizes, &options),
    }
    .context("stage `bench` failed")?;
    if let Some(dir) = &args.output_dir {
        write_json(&dir.join("bench.json"), &report).context("stage `output` failed")?;
    }
    print_json(&report)?;
    if let Some(reason) = &report.aborted {
        bail!("stage `bench` failed: {reason}");
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let dataset = args
        .data
        .source(args.seed)
        .and_then(|source| Ok(source.load::<f64>()?))
        .context("stage `load` failed")?;
    let labels = read_labels(&args.labels).context("stage `load` failed: labels")?;
    if labels.len() != dataset.n() {
        bail!(
            "stage `metrics` failed: {} labels for {} samples",
            labels.len(),
            dataset.n()
        );
    }
    let k = args
        .k
        .unwrap_or_else(|| labels.iter().max().map_or(0, |&l| l + 1));
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        bail!("stage `metrics` failed: label {bad} outside [0, {k})");
    }
    let bundle = MetricsBundle::compute(&labels, dataset.groups(), dataset.truth(), k, dataset.t());
    print_json(&bundle)
}

fn print_json<S: serde::Serialize>(value: &S) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
