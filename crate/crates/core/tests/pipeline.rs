use std::time::Duration;

use afcf::clustering::operator_by_name;
use afcf::data::{gen_synthetic, SyntheticSpec};
use afcf::metrics;
use afcf::pipeline::{run_on_dataset, AnchorCount, RunOutput};
use afcf::{AnchorMode, Dataset, GraphMode, RunConfig};

fn run(dataset: &Dataset<f64>, config: &RunConfig) -> RunOutput<f64> {
    let operator = operator_by_name::<f64>(&config.operator, config.seed).unwrap();
    run_on_dataset(dataset, operator.as_ref(), config).unwrap()
}

fn synthetic(spec: &SyntheticSpec) -> Dataset<f64> {
    gen_synthetic(spec).unwrap()
}

/// The synthetic draw with group labels moved (lowest indices first) so
/// both groups hold exactly half the samples.
fn halved_groups(n: usize, seed: u64) -> Dataset<f64> {
    let ds = synthetic(&SyntheticSpec::new(n, seed));
    let mut groups = ds.groups().to_vec();
    let mut excess = groups.iter().filter(|&&g| g == 0).count() as isize - (n / 2) as isize;
    for g in groups.iter_mut() {
        if excess > 0 && *g == 0 {
            *g = 1;
            excess -= 1;
        } else if excess < 0 && *g == 1 {
            *g = 0;
            excess += 1;
        }
    }
    Dataset::from_dense(ds.features().clone(), groups, ds.truth().map(<[_]>::to_vec)).unwrap()
}

#[test]
fn soft_balance_matches_anchor_balance_end_to_end() {
    let dataset = halved_groups(1000, 5);
    let mut config = RunConfig::synthetic(1000, 5);
    config.anchors = AnchorCount::Absolute(16);
    let out = run(&dataset, &config);
    let record = &out.record;
    assert_eq!(record.anchor_group_counts, vec![8, 8]);
    assert!(record.solver.converged);
    let soft = record.metrics.soft_balance.unwrap();
    let tol = 10.0 * config.solver.tol;
    assert!(
        (soft - record.anchor_balance).abs() <= tol,
        "soft {soft} vs anchor {}",
        record.anchor_balance
    );
}

#[test]
fn soft_balance_tracks_block_targets_for_unequal_proportions() {
    let dataset = synthetic(&SyntheticSpec::new(1000, 6));
    let mut config = RunConfig::synthetic(1000, 6);
    config.anchors = AnchorCount::Absolute(16);
    let record = run(&dataset, &config).record;
    assert!(record.solver.converged);
    let soft = record.metrics.soft_balance.unwrap();
    let target = record.target_balance.unwrap();
    assert!((soft - target).abs() <= 10.0 * config.solver.tol);
}

#[test]
fn plain_kmeans_recovers_separable_clusters() {
    let spec = SyntheticSpec::new(1000, 3);
    let dataset = synthetic(&spec);
    let truth = dataset.truth().unwrap();

    // nearest true mean, independent of every pipeline stage
    let oracle: Vec<usize> = dataset
        .features()
        .columns()
        .into_iter()
        .map(|x| {
            let d0 = (x[0] + spec.separation).powi(2) + x[1] * x[1];
            let d1 = (x[0] - spec.separation).powi(2) + x[1] * x[1];
            usize::from(d1 < d0)
        })
        .collect();
    assert!(metrics::acc(&oracle, truth) >= 0.95);

    let mut config = RunConfig::synthetic(1000, 3);
    config.operator = "lloyd".into();
    let out = run(&dataset, &config);
    let acc = out.record.metrics.acc.unwrap();
    assert!(acc >= 0.95, "pipeline ACC {acc}");
    assert!(metrics::acc(&out.result.hard_labels, &oracle) >= 0.95);
}

#[test]
fn even_attribute_probabilities_give_even_groups() {
    for seed in 0..5 {
        let n = 10_000;
        let spec = SyntheticSpec {
            group_probs: [0.5, 0.5],
            ..SyntheticSpec::new(n, seed)
        };
        let dataset = synthetic(&spec);
        let zeros = dataset.groups().iter().filter(|&&g| g == 0).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            (zeros - n as f64 / 2.0).abs() <= 3.0 * sigma,
            "seed {seed}: {zeros} of {n}"
        );
    }
}

#[test]
fn runs_are_deterministic() {
    let dataset = synthetic(&SyntheticSpec::new(800, 2));
    for mode in [AnchorMode::Fdas, AnchorMode::Random] {
        let mut config = RunConfig::synthetic(800, 2);
        config.anchor_mode = mode;
        let a = run(&dataset, &config);
        let b = run(&dataset, &config);
        assert_eq!(a.result.hard_labels, b.result.hard_labels, "{mode:?}");
        assert_eq!(a.record.metrics, b.record.metrics);
        assert_eq!(a.record.solver.iterations, b.record.solver.iterations);
        assert_eq!(a.result.soft, b.result.soft);
    }
}

#[test]
fn fair_graph_is_at_least_as_balanced_as_unconstrained() {
    let spec = SyntheticSpec {
        group_probs: [0.85, 0.4],
        ..SyntheticSpec::new(2000, 8)
    };
    let dataset = synthetic(&spec);
    let mut config = RunConfig::synthetic(2000, 8);
    config.graph_mode = GraphMode::Unconstrained;
    let free = run(&dataset, &config).record.metrics.soft_balance.unwrap();
    config.graph_mode = GraphMode::Fair;
    let fair = run(&dataset, &config).record.metrics.soft_balance.unwrap();
    assert!(fair >= free, "fair {fair} < unconstrained {free}");
}

#[test]
fn stage_timings_cover_the_total() {
    let dataset = synthetic(&SyntheticSpec::new(3000, 1));
    let timings = run(&dataset, &RunConfig::synthetic(3000, 1)).record.timings;
    assert!(timings.stage_sum() >= 0.95 * timings.total);
    assert!(timings.stage_sum() <= timings.total);
}

/// Graph time per ADMM iteration when `m` doubles; each side is the best of
/// three runs with a fixed iteration count.
#[test]
fn doubling_m_at_most_quadruples_graph_time() {
    let dataset = synthetic(&SyntheticSpec::new(20_000, 4));
    let graph_time = |m: usize| {
        let mut config = RunConfig::synthetic(20_000, 4);
        config.anchors = AnchorCount::Absolute(m);
        config.solver.max_iter = 20;
        config.solver.tol = f64::MIN_POSITIVE;
        (0..3)
            .map(|_| {
                let record = run(&dataset, &config).record;
                assert_eq!(record.solver.iterations, 20);
                Duration::from_secs_f64(record.timings.graph_construction)
            })
            .min()
            .unwrap()
    };
    let small = graph_time(20);
    let large = graph_time(40);
    let ratio = large.as_secs_f64() / small.as_secs_f64();
    assert!(
        ratio <= 4.0,
        "m 20 -> 40: {small:?} -> {large:?} ({ratio:.2}x)"
    );
}
