//! Fair Directly Alternate Sampling.
//!
//! Anchors are drawn per protected group with quotas proportional to the
//! global group proportions. Inside a group, samples are ranked by their
//! (min-shifted) feature sum and picked by repeated argmax, with the score
//! vector passed through the decay `s <- s * (1 - s) / max(s)` after every
//! pick so that consecutive picks alternate across the score range.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AnchorSet, Dataset};
use crate::scalar::Scalar;

/// Slack added before flooring `m * p` so that products such as
/// `100 * 0.29 = 28.999...` floor to the intended integer.
const FLOOR_SLACK: f64 = 1e-9;

/// Number of anchors drawn from each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuotaVector {
    pub counts: Vec<usize>,
}

impl QuotaVector {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Anchor selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMode {
    /// Group quotas plus within-group alternate sampling.
    Fdas,
    /// Alternate sampling over the whole dataset, ignoring groups.
    Das,
    /// Uniform sampling without replacement.
    Random,
}

impl std::str::FromStr for AnchorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fdas" => Ok(AnchorMode::Fdas),
            "das" => Ok(AnchorMode::Das),
            "random" => Ok(AnchorMode::Random),
            _ => Err(Error::Unknown {
                kind: "anchor mode",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for AnchorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnchorMode::Fdas => "fdas",
            AnchorMode::Das => "das",
            AnchorMode::Random => "random",
        })
    }
}

/// Splits `m` anchors across groups: `floor(m * p_g)` each, then the
/// residual one at a time to the group with the smallest count (lowest id
/// on ties).
pub fn compute_quotas(m: usize, proportions: &[f64]) -> Result<QuotaVector> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "anchor count m must be positive".into(),
        ));
    }
    if proportions.is_empty() {
        return Err(Error::InvalidArgument("no groups".into()));
    }
    if let Some(p) = proportions.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid group proportion {p}"
        )));
    }
    let total: f64 = proportions.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "group proportions sum to {total}, expected 1"
        )));
    }
    if m < proportions.len() {
        log::warn!(
            "m = {m} is smaller than the number of groups ({}); some groups get no anchor",
            proportions.len()
        );
    }

    let mut counts: Vec<usize> = proportions
        .iter()
        .map(|&p| (m as f64 * p + FLOOR_SLACK).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    if assigned > m {
        return Err(Error::InvalidArgument(format!(
            "group proportions overshoot: base quotas sum to {assigned} > m = {m}"
        )));
    }
    for _ in 0..m - assigned {
        let smallest = argmin_lowest(&counts);
        counts[smallest] += 1;
    }
    Ok(QuotaVector { counts })
}

fn argmin_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (g, &c) in counts.iter().enumerate().skip(1) {
        if c < counts[best] {
            best = g;
        }
    }
    best
}

/// Selects `m` anchors with fair group quotas.
pub fn select_anchors<T: Scalar>(dataset: &Dataset<T>, m: usize) -> Result<AnchorSet<T>> {
    let stats = dataset.group_stats();
    let quotas = compute_quotas(m, &stats.proportions)?;
    let members = dataset.group_members();
    select_with_quotas(dataset, &members, &quotas.counts)
}

/// Group-blind alternate sampling: FDAS with every sample in one group.
pub fn select_anchors_das<T: Scalar>(dataset: &Dataset<T>, m: usize) -> Result<AnchorSet<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "anchor count m must be positive".into(),
        ));
    }
    let everyone: Vec<usize> = (0..dataset.n()).collect();
    select_with_quotas(dataset, &[everyone], &[m])
}

/// Seeded uniform sampling without replacement.
pub fn select_anchors_random<T: Scalar>(
    dataset: &Dataset<T>,
    m: usize,
    seed: u64,
) -> Result<AnchorSet<T>> {
    let n = dataset.n();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {m} anchors from {n} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    AnchorSet::from_indices(dataset, indices)
}

pub fn select<T: Scalar>(
    dataset: &Dataset<T>,
    m: usize,
    mode: AnchorMode,
    seed: u64,
) -> Result<AnchorSet<T>> {
    match mode {
        AnchorMode::Fdas => select_anchors(dataset, m),
        AnchorMode::Das => select_anchors_das(dataset, m),
        AnchorMode::Random => select_anchors_random(dataset, m, seed),
    }
}

fn select_with_quotas<T: Scalar>(
    dataset: &Dataset<T>,
    members: &[Vec<usize>],
    quotas: &[usize],
) -> Result<AnchorSet<T>> {
    for (g, (group, &quota)) in members.iter().zip(quotas).enumerate() {
        if group.len() < quota {
            return Err(Error::QuotaExceedsGroup {
                group: g,
                quota,
                available: group.len(),
            });
        }
    }

    let x = dataset.features();
    let shift = x.iter().copied().fold(T::infinity(), T::min);
    let column_sums: Vec<T> = x
        .columns()
        .into_iter()
        .map(|col| col.iter().map(|&v| v - shift).sum())
        .collect();

    let picks: Vec<Vec<usize>> = members
        .par_iter()
        .zip(quotas.par_iter())
        .map(|(group, &quota)| {
            let scores = group.iter().map(|&i| column_sums[i]).collect();
            decay_picks(scores, quota)
                .into_iter()
                .map(|local| group[local])
                .collect()
        })
        .collect();

    AnchorSet::from_indices(dataset, picks.concat())
}

/// Picks `quota` positions from `scores` by repeated argmax with score decay.
///
/// After each pick the chosen position is masked, the remaining scores are
/// decayed as `s * (1 - s)` and renormalized by their maximum. When that
/// maximum is zero every remaining score is reset to one, which makes the
/// next pick the lowest unmasked position.
pub(crate) fn decay_picks<T: Scalar>(mut scores: Vec<T>, quota: usize) -> Vec<usize> {
    let mut masked = vec![false; scores.len()];
    normalize_or_uniform(&mut scores, &masked);

    let mut picks = Vec::with_capacity(quota);
    for _ in 0..quota {
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if masked[i] {
                continue;
            }
            if best.is_none_or(|b| s > scores[b]) {
                best = Some(i);
            }
        }
        let Some(best) = best else { break };
        picks.push(best);
        masked[best] = true;

        for (s, &gone) in scores.iter_mut().zip(&masked) {
            if !gone {
                *s = *s * (T::one() - *s);
            }
        }
        normalize_or_uniform(&mut scores, &masked);
    }
    picks
}

fn normalize_or_uniform<T: Scalar>(scores: &mut [T], masked: &[bool]) {
    let max = scores
        .iter()
        .zip(masked)
        .filter(|(_, &gone)| !gone)
        .map(|(&s, _)| s)
        .fold(T::zero(), T::max);
    for (s, &gone) in scores.iter_mut().zip(masked) {
        if gone {
            continue;
        }
        *s = if max > T::zero() { *s / max } else { T::one() };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn quotas_distribute_residual_to_smallest() {
        assert_eq!(compute_quotas(7, &[0.6, 0.4]).unwrap().counts, vec![4, 3]);
        assert_eq!(compute_quotas(10, &[0.5, 0.5]).unwrap().counts, vec![5, 5]);
        assert_eq!(
            compute_quotas(5, &[0.34, 0.33, 0.33]).unwrap().counts,
            vec![2, 2, 1]
        );
    }

    #[test]
    fn quotas_reject_bad_input() {
        assert!(compute_quotas(0, &[1.0]).is_err());
        assert!(compute_quotas(3, &[1.2, -0.2]).is_err());
        assert!(compute_quotas(3, &[0.2, 0.2]).is_err());
    }

    #[test]
    fn decay_hand_trace() {
        // second pick maximizes s(1 - s) over {0.5, 0.25, 0.1}
        assert_eq!(decay_picks(vec![1.0, 0.5, 0.25, 0.1], 2), vec![0, 1]);
    }

    #[test]
    fn decay_degenerate_scores_pick_lowest_unmasked() {
        assert_eq!(decay_picks(vec![0.0_f64; 4], 3), vec![0, 1, 2]);
        assert_eq!(decay_picks(vec![2.0, 2.0, 2.0], 3), vec![0, 1, 2]);
    }

    #[test]
    fn select_matches_hand_trace_through_dataset() {
        let x = array![[1.0, 0.5, 0.25, 0.1], [0.0, 0.0, 0.0, 0.0]];
        let ds = Dataset::new(x, &[0, 0, 0, 0], None).unwrap();
        let anchors = select_anchors(&ds, 2).unwrap();
        assert_eq!(anchors.indices(), &[0, 1]);
    }

    #[test]
    fn every_sample_when_m_equals_n() {
        let x = array![[0.3, 1.2, -0.4, 2.0, 0.0, 0.7]];
        let ds = Dataset::new(x, &[0, 1, 0, 1, 0, 1], None).unwrap();
        let anchors = select_anchors(&ds, 6).unwrap();
        let mut idx = anchors.indices().to_vec();
        idx.sort_unstable();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn one_anchor_per_group_for_balanced_pairs() {
        let x = array![[0.0, 1.0, 2.0, 3.0]];
        let ds = Dataset::new(x, &[0, 0, 1, 1], None).unwrap();
        let anchors = select_anchors(&ds, 2).unwrap();
        assert_eq!(anchors.group_counts(2), vec![1, 1]);
    }

    #[test]
    fn quota_exceeding_group_is_named() {
        let x = array![[0.0, 1.0, 2.0, 3.0, 4.0]];
        let ds = Dataset::new(x, &[0, 0, 0, 0, 1], None).unwrap();
        // proportions [0.8, 0.2], m = 5 -> [4, 1] fits; a hand-made quota does not
        let members = ds.group_members();
        let err = select_with_quotas(&ds, &members, &[2, 2]).unwrap_err();
        assert!(matches!(err, Error::QuotaExceedsGroup { group: 1, .. }));
    }

    #[test]
    fn das_equals_fdas_for_single_group() {
        let x = Array2::from_shape_fn((3, 50), |(r, c)| ((r * 31 + c * 17) % 23) as f64 * 0.1);
        let ds = Dataset::new(x, &[7u8; 50], None).unwrap();
        let fair = select_anchors(&ds, 9).unwrap();
        let blind = select_anchors_das(&ds, 9).unwrap();
        assert_eq!(fair, blind);
    }

    #[test]
    fn random_mode_is_seeded() {
        let x = Array2::from_shape_fn((2, 40), |(r, c)| (r + c) as f64);
        let ds = Dataset::new(x, &[0u8; 40], None).unwrap();
        let a = select_anchors_random(&ds, 8, 11).unwrap();
        let b = select_anchors_random(&ds, 8, 11).unwrap();
        assert_eq!(a, b);
    }

    fn random_dataset(seed: u64, n: usize, t: usize) -> Dataset<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((3, n), |_| rng.gen_range(-5.0..5.0));
        let groups: Vec<usize> = (0..n)
            .map(|i| if i < t { i } else { rng.gen_range(0..t) })
            .collect();
        Dataset::new(x, &groups, None).unwrap()
    }

    proptest! {
        #[test]
        fn quotas_sum_to_m(m in 1usize..500, raw in prop::collection::vec(0.0f64..1.0, 1..8)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let q = compute_quotas(m, &p).unwrap();
            prop_assert_eq!(q.total(), m);
            for (c, pg) in q.counts.iter().zip(&p) {
                prop_assert!(*c >= (m as f64 * pg).floor() as usize);
            }
        }

        #[test]
        fn histogram_matches_quotas(seed in any::<u64>(), n in 10usize..120, t in 1usize..4, frac in 0.05f64..0.5) {
            let ds = random_dataset(seed, n, t);
            let m = ((n as f64 * frac) as usize).max(1);
            let quotas = compute_quotas(m, &ds.group_stats().proportions).unwrap();
            let sizes = ds.group_stats().sizes;
            prop_assume!(quotas.counts.iter().zip(&sizes).all(|(q, s)| q <= s));
            let anchors = select_anchors(&ds, m).unwrap();
            prop_assert_eq!(anchors.group_counts(t), quotas.counts);
            let mut idx = anchors.indices().to_vec();
            idx.sort_unstable();
            idx.dedup();
            prop_assert_eq!(idx.len(), m);
            prop_assert_eq!(select_anchors(&ds, m).unwrap(), anchors);
        }
    }
}
