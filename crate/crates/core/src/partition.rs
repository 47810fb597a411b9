//! Metric ordering, unit subsets, the sampling plan and the initial D-/D+ cut.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CandidatePair, UnitSubset};
use crate::error::{Error, Result};

pub const DEFAULT_SUBSET_SIZE: usize = 200;

/// Sorts pair indices ascending by metric (ties by pair id) and cuts them into
/// blocks of `subset_size`. Returns the ordering and the subsets, whose
/// `pairs` ranges index into that ordering.
pub fn make_subsets(
    pairs: &[CandidatePair],
    subset_size: usize,
) -> Result<(Vec<usize>, Vec<UnitSubset>)> {
    if subset_size < 2 {
        return Err(Error::Config(format!("subset size {subset_size} < 2")));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| {
        pairs[a]
            .metric
            .total_cmp(&pairs[b].metric)
            .then(pairs[a].pair_id.cmp(&pairs[b].pair_id))
    });
    let subsets = order
        .chunks(subset_size)
        .enumerate()
        .map(|(k, chunk)| {
            let start = k * subset_size;
            let metrics = chunk.iter().map(|&i| pairs[i].metric);
            let sum: f64 = metrics.clone().sum();
            UnitSubset {
                index: k,
                pairs: start..start + chunk.len(),
                avg_metric: sum / chunk.len() as f64,
                min_metric: pairs[chunk[0]].metric,
                max_metric: pairs[*chunk.last().unwrap()].metric,
                observed_ep: None,
                est_mean: 0.0,
                est_var: 0.0,
                inspected_equiv_count: 0,
            }
        })
        .collect();
    Ok((order, subsets))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            min_fraction: 0.03,
            max_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub subset_indices: Vec<usize>,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl SamplingPlan {
    pub fn fraction(&self, subset_count: usize) -> f64 {
        self.subset_indices.len() as f64 / subset_count as f64
    }
}

/// Number of subsets to sample: as many as the upper fraction allows, but no
/// fewer than the lower fraction and never fewer than two.
pub fn sample_count(subset_count: usize, params: SamplingParams) -> usize {
    const EPS: f64 = 1e-9;
    let m = subset_count as f64;
    let upper = (params.max_fraction * m + EPS).floor() as usize;
    let lower = (params.min_fraction * m - EPS).ceil() as usize;
    upper.max(lower).max(2).min(subset_count)
}

/// Evenly spaced subsets over a blend of subset rank and average metric, so
/// sparse high-metric tails get samples as well as the dense bulk. The seed
/// shifts the grid within one stride. `avg_metrics` must be non-decreasing.
pub fn choose_samples(avg_metrics: &[f64], params: SamplingParams, seed: u64) -> SamplingPlan {
    let m = avg_metrics.len();
    let c = sample_count(m, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: f64 = rng.random();
    let (lo, hi) = match (avg_metrics.first(), avg_metrics.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    };
    let span = hi - lo;
    let position = |k: usize| {
        let rank = (k as f64 + 0.5) / m as f64;
        let metric = if span > 0.0 { (avg_metrics[k] - lo) / span } else { rank };
        0.5 * rank + 0.5 * metric
    };
    let mut idx = Vec::with_capacity(c);
    let mut k = 0usize;
    for j in 0..c {
        let target = (j as f64 + offset) / c as f64;
        let floor = idx.last().map_or(0, |&p: &usize| p + 1);
        k = k.max(floor);
        while k + 1 < m && position(k) < target {
            k += 1;
        }
        idx.push(k.min(m - (c - j)));
        k = idx[j];
    }
    SamplingPlan {
        subset_indices: idx,
        min_fraction: params.min_fraction,
        max_fraction: params.max_fraction,
    }
}

/// Non-decreasing least-squares fit by pool-adjacent-violators.
pub fn isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&y, &w) in values.iter().zip(weights) {
        blocks.push((y, w, 1));
        while blocks.len() >= 2 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            let merged = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { (m1 + m2) / 2.0 };
            *blocks.last_mut().unwrap() = (merged, w, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

/// Number of leading subsets whose isotonically smoothed mean is below 0.5.
/// Those form `D-`; the rest form `D+`.
pub fn initial_boundary(means: &[f64]) -> usize {
    let smoothed = isotonic(means, &vec![1.0; means.len()]);
    smoothed.iter().take_while(|m| **m < 0.5).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(metrics: &[f64]) -> Vec<CandidatePair> {
        metrics
            .iter()
            .enumerate()
            .map(|(i, &m)| CandidatePair {
                pair_id: i as u64,
                left: i,
                right: i,
                attr_sims: vec![m],
                metric: m,
                label: Default::default(),
                sampled: false,
            })
            .collect()
    }

    /// Isotonic fit via the max-min block-mean formula.
    fn isotonic_oracle(y: &[f64]) -> Vec<f64> {
        let n = y.len();
        (0..n)
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        (i..n)
                            .map(|k| y[j..=k].iter().sum::<f64>() / (k - j + 1) as f64)
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    #[test]
    fn subset_counts() {
        let p = pairs(&vec![0.5; 1000]);
        let (_, s) = make_subsets(&p, 200).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|x| x.len() == 200));
        let p = pairs(&vec![0.5; 1001]);
        let (_, s) = make_subsets(&p, 200).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s[5].len(), 1);
        assert!(matches!(make_subsets(&[], 200), Err(Error::EmptyWorkload)));
        assert!(make_subsets(&p, 1).is_err());
    }

    #[test]
    fn sample_plan_sizes() {
        let params = SamplingParams::default();
        let linear = |m: usize| (0..m).map(|k| k as f64 / m as f64).collect::<Vec<_>>();
        assert_eq!(choose_samples(&linear(500), params, 1).subset_indices.len(), 25);
        assert_eq!(choose_samples(&linear(2), params, 1).subset_indices, vec![0, 1]);
        assert_eq!(choose_samples(&linear(1), params, 1).subset_indices, vec![0]);
        assert_eq!(choose_samples(&linear(501), params, 9), choose_samples(&linear(501), params, 9));
        assert_ne!(choose_samples(&linear(501), params, 1), choose_samples(&linear(501), params, 2));
        assert_eq!(choose_samples(&[0.5; 40], params, 3).subset_indices.len(), 2);
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(initial_boundary(&[0.1, 0.3, 0.6, 0.9]), 2);
        assert_eq!(initial_boundary(&[0.7, 0.8]), 0);
        assert_eq!(initial_boundary(&[0.1, 0.2]), 2);
        let y = [0.2, 0.6, 0.4, 0.8];
        let fit = isotonic(&y, &[1.0; 4]);
        let oracle = isotonic_oracle(&y);
        for (a, b) in fit.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((fit[1] - 0.5).abs() < 1e-12 && (fit[2] - 0.5).abs() < 1e-12);
        assert_eq!(initial_boundary(&y), 1);
    }

    proptest! {
        #[test]
        fn subsets_partition_in_metric_order(metrics in proptest::collection::vec(0.0f64..1.0, 1..700), size in 2usize..60) {
            let p = pairs(&metrics);
            let (order, s) = make_subsets(&p, size).unwrap();
            let mut seen = order.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..p.len()).collect::<Vec<_>>());
            prop_assert_eq!(s.len(), p.len().div_ceil(size));
            for w in s.windows(2) {
                prop_assert!(w[0].max_metric <= w[1].min_metric);
                prop_assert_eq!(w[0].pairs.end, w[1].pairs.start);
            }
        }

        #[test]
        fn pav_matches_oracle(y in proptest::collection::vec(0.0f64..1.0, 1..12)) {
            let fit = isotonic(&y, &vec![1.0; y.len()]);
            let oracle = isotonic_oracle(&y);
            for (a, b) in fit.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for w in fit.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-12);
            }
        }

        #[test]
        fn sampling_fraction_within_limits(mut v in proptest::collection::vec(0.0f64..1.0, 67..3000), seed in 0u64..1000) {
            v.sort_by(f64::total_cmp);
            let m = v.len();
            let params = SamplingParams::default();
            let plan = choose_samples(&v, params, seed);
            let f = plan.fraction(m);
            prop_assert!(f >= params.min_fraction - 1e-12 && f <= params.max_fraction + 1e-12);
            for w in plan.subset_indices.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
            prop_assert!(*plan.subset_indices.last().unwrap() < m);
        }
    }
}
