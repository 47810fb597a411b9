//! Token features learned from human labels and CVaR mislabeling risk.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::bounds::standard_normal;
use crate::datamodel::{FeatureKind, FeatureStats, GaussianEstimate, PairId, Side};

pub const PRIOR_MEAN: f64 = 0.5;
pub const PRIOR_VAR: f64 = 0.25;
pub const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Feature {
    pub token: u32,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    InformationValue,
    Uniform,
}

/// Calls `f` for every feature of a pair whose records have the given sorted,
/// deduplicated token ids.
pub fn for_each_feature(left: &[u32], right: &[u32], mut f: impl FnMut(Feature)) {
    let (mut i, mut j) = (0, 0);
    while i < left.len() || j < right.len() {
        let (token, kind) = match (left.get(i), right.get(j)) {
            (Some(&a), Some(&b)) if a == b => {
                i += 1;
                j += 1;
                (a, FeatureKind::Same)
            }
            (Some(&a), Some(&b)) if a < b => {
                i += 1;
                (a, FeatureKind::Diff)
            }
            (Some(&a), None) => {
                i += 1;
                (a, FeatureKind::Diff)
            }
            (_, Some(&b)) => {
                j += 1;
                (b, FeatureKind::Diff)
            }
            (None, None) => unreachable!(),
        };
        f(Feature { token, kind });
    }
}

pub fn extract_features(left: &[u32], right: &[u32]) -> Vec<Feature> {
    let mut out = Vec::with_capacity(left.len() + right.len());
    for_each_feature(left, right, |f| out.push(f));
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Counts {
    total: u32,
    equiv: u32,
}

/// Feature statistics over the human-labeled pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    counts: HashMap<Feature, Counts>,
    labeled: u32,
    labeled_equiv: u32,
    mode: WeightMode,
}

impl FeatureStore {
    pub fn new(mode: WeightMode) -> Self {
        FeatureStore {
            mode,
            ..Default::default()
        }
    }

    /// Rebuilds a store from a set of labeled token pairs.
    pub fn rebuild<'a>(
        mode: WeightMode,
        labeled: impl IntoIterator<Item = (&'a [u32], &'a [u32], bool)>,
    ) -> Self {
        let mut s = FeatureStore::new(mode);
        for (l, r, m) in labeled {
            s.update(l, r, m);
        }
        s
    }

    pub fn update(&mut self, left: &[u32], right: &[u32], matching: bool) {
        self.labeled += 1;
        self.labeled_equiv += u32::from(matching);
        for_each_feature(left, right, |f| {
            let c = self.counts.entry(f).or_default();
            c.total += 1;
            c.equiv += u32::from(matching);
        });
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn labeled(&self) -> (u32, u32) {
        (self.labeled, self.labeled_equiv)
    }

    pub fn stats(&self, f: Feature) -> FeatureStats {
        let c = self.counts.get(&f).copied().unwrap_or_default();
        let (mean, var) = mean_var(c);
        FeatureStats {
            token: f.token,
            kind: f.kind,
            count_total: c.total,
            count_equiv: c.equiv,
            mean,
            var,
            weight: self.weight_of(c),
        }
    }

    pub fn feature_weight(&self, f: Feature) -> f64 {
        self.weight_of(self.counts.get(&f).copied().unwrap_or_default())
    }

    fn weight_of(&self, c: Counts) -> f64 {
        match self.mode {
            WeightMode::Uniform => 1.0,
            WeightMode::InformationValue => information_value(
                c.equiv,
                self.labeled_equiv,
                c.total - c.equiv,
                self.labeled - self.labeled_equiv,
            )
            .max(MIN_WEIGHT),
        }
    }

    /// `E(d) = Σ w_d(f) E(f)`, `V(d) = Σ w_d(f)² V(f)` with weights normalized
    /// over the pair's features.
    pub fn pair_distribution(&self, left: &[u32], right: &[u32]) -> GaussianEstimate {
        self.pair_distribution_scaled(left, right, 1.0)
    }

    fn pair_distribution_scaled(&self, left: &[u32], right: &[u32], scale: f64) -> GaussianEstimate {
        let (mut sw, mut se, mut sv) = (0.0, 0.0, 0.0);
        for_each_feature(left, right, |f| {
            let c = self.counts.get(&f).copied().unwrap_or_default();
            let (e, v) = mean_var(c);
            let w = self.weight_of(c) * scale;
            sw += w;
            se += w * e;
            sv += w * w * v;
        });
        if sw <= 0.0 {
            return GaussianEstimate::new(PRIOR_MEAN, PRIOR_VAR);
        }
        GaussianEstimate::new(se / sw, sv / (sw * sw))
    }
}

/// `E(f)` and `V(f)` from label counts. Unseen features get the maximal
/// uncertainty prior; a single observation keeps its label as the mean.
fn mean_var(c: Counts) -> (f64, f64) {
    match c.total {
        0 => (PRIOR_MEAN, PRIOR_VAR),
        1 => (f64::from(c.equiv), PRIOR_VAR),
        n => {
            let n = f64::from(n);
            let e = f64::from(c.equiv) / n;
            (e, n * e * (1.0 - e) / (n - 1.0))
        }
    }
}

/// Information value of a binary feature with Laplace-smoothed rates:
/// `(p1 - p0) ln(p1 / p0)`.
pub fn information_value(with_equiv: u32, equiv: u32, with_inequiv: u32, inequiv: u32) -> f64 {
    let p1 = (f64::from(with_equiv) + 1.0) / (f64::from(equiv) + 2.0);
    let p0 = (f64::from(with_inequiv) + 1.0) / (f64::from(inequiv) + 2.0);
    (p1 - p0) * (p1 / p0).ln()
}

/// Expected loss in the worst `1 - theta` tail for a pair whose equivalence
/// probability is Gaussian. A machine-unmatching label loses `X`, a
/// machine-matching label loses `1 - X`.
pub fn cvar(dist: GaussianEstimate, machine_label: Side, theta: f64) -> f64 {
    let n = standard_normal();
    let z = n.inverse_cdf(theta);
    let tail = dist.sd() * n.pdf(z) / (1.0 - theta);
    match machine_label {
        Side::Minus => dist.mean + tail,
        Side::Plus => 1.0 - dist.mean + tail,
    }
}

/// What the ranker needs to know about one candidate pair.
#[derive(Debug, Clone, Copy)]
pub struct RankInput<'a> {
    pub pair_id: PairId,
    pub position: usize,
    pub metric: f64,
    pub left: &'a [u32],
    pub right: &'a [u32],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub pair_id: PairId,
    pub position: usize,
    pub machine_label: Side,
    pub equiv_dist: GaussianEstimate,
    pub cvar: f64,
    pub boundary_distance: f64,
}

/// Scores and orders candidates: descending CVaR, then closest metric to the
/// boundary, then pair id.
pub fn rank_candidates(
    store: &FeatureStore,
    candidates: &[RankInput<'_>],
    machine_label: Side,
    theta: f64,
    boundary_metric: f64,
) -> Vec<RiskScore> {
    rank_scaled(store, candidates, machine_label, theta, boundary_metric, 1.0)
}

fn rank_scaled(
    store: &FeatureStore,
    candidates: &[RankInput<'_>],
    machine_label: Side,
    theta: f64,
    boundary_metric: f64,
    scale: f64,
) -> Vec<RiskScore> {
    let mut scores: Vec<RiskScore> = candidates
        .iter()
        .map(|c| {
            let d = store.pair_distribution_scaled(c.left, c.right, scale);
            RiskScore {
                pair_id: c.pair_id,
                position: c.position,
                machine_label,
                equiv_dist: d,
                cvar: cvar(d, machine_label, theta),
                boundary_distance: (c.metric - boundary_metric).abs(),
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.cvar
            .total_cmp(&a.cvar)
            .then(a.boundary_distance.total_cmp(&b.boundary_distance))
            .then(a.pair_id.cmp(&b.pair_id))
    });
    scores
}

/// Tab-separated dump of the top `k` scores.
pub fn dump_top(scores: &[RiskScore], k: usize) -> String {
    let mut out = String::from("pair_id\tmean\tvar\tcvar\n");
    for s in scores.iter().take(k) {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.pair_id, s.equiv_dist.mean, s.equiv_dist.var, s.cvar
        ));
    }
    out
}
