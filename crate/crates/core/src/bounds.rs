//! Equivalent-pair count distributions and the precision/recall lower bounds.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::datamodel::{
    precision_lower, recall_lower, GuaranteeReport, PartitionState, QualityRequirement, Side,
};
use crate::error::Result;
use crate::gpr::{GprModel, KernelParams};

/// Gaussian distribution of the number of equivalent pairs in a set of subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pub mean: f64,
    pub var: f64,
    pub members: Vec<usize>,
    /// Equivalent pairs found by inspection, per member.
    pub inspected_equiv: Vec<usize>,
    /// Set when inspection counts pushed the mean below zero.
    pub floored: bool,
}

/// Per-subset proportion estimates: either a fitted GPR evaluated at every
/// subset's average metric, or exact proportions with zero variance.
#[derive(Debug, Clone)]
pub struct SubsetModel {
    means: Vec<f64>,
    avg_metrics: Vec<f64>,
    kernel: Option<KernelParams>,
    /// Row `k` holds `L⁻¹ K(V, v_k)`, flattened with stride `width`.
    proj: Vec<f64>,
    width: usize,
}

impl SubsetModel {
    pub fn from_gpr(gpr: &GprModel, avg_metrics: &[f64]) -> Self {
        let width = gpr.inputs().len();
        let mut proj = Vec::with_capacity(avg_metrics.len() * width);
        let mut means = Vec::with_capacity(avg_metrics.len());
        for &v in avg_metrics {
            means.push(gpr.posterior(v).mean);
            proj.extend(gpr.projection(v).iter());
        }
        SubsetModel {
            means,
            avg_metrics: avg_metrics.to_vec(),
            kernel: Some(gpr.params()),
            proj,
            width,
        }
    }

    pub fn exact(proportions: Vec<f64>) -> Self {
        SubsetModel {
            avg_metrics: vec![0.0; proportions.len()],
            means: proportions,
            kernel: None,
            proj: Vec::new(),
            width: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.kernel.is_none()
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.means[k]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.proj[k * self.width..(k + 1) * self.width]
    }

    pub fn cov(&self, a: usize, b: usize) -> f64 {
        let Some(kp) = self.kernel else { return 0.0 };
        let dot: f64 = self.row(a).iter().zip(self.row(b)).map(|(x, y)| x * y).sum();
        let c = kp.kernel(self.avg_metrics[a], self.avg_metrics[b]) - dot;
        if a == b {
            c.max(0.0)
        } else {
            c
        }
    }

    pub fn var(&self, k: usize) -> f64 {
        self.cov(k, k)
    }

    /// `Var(Σ n_k X_k)` over `members`, evaluated as
    /// `Σ n_a n_b k(v_a, v_b) - |Σ n_a proj_a|²`.
    pub fn weighted_variance(&self, members: &[(usize, f64)]) -> f64 {
        let Some(kp) = self.kernel else { return 0.0 };
        let mut prior = 0.0;
        for (i, &(a, na)) in members.iter().enumerate() {
            prior += na * na * kp.kernel(self.avg_metrics[a], self.avg_metrics[a]);
            for &(b, nb) in &members[i + 1..] {
                prior += 2.0 * na * nb * kp.kernel(self.avg_metrics[a], self.avg_metrics[b]);
            }
        }
        let mut acc = vec![0.0; self.width];
        for &(a, na) in members {
            for (s, p) in acc.iter_mut().zip(self.row(a)) {
                *s += na * p;
            }
        }
        let reduction: f64 = acc.iter().map(|x| x * x).sum();
        (prior - reduction).max(0.0)
    }
}

/// Sums `n_i · R_i` over the members: mean `Σ n_i R̄_i`, variance
/// `Σ_i Σ_j n_i n_j cov(i, j)`.
pub fn aggregate(
    members: &[usize],
    sizes: &[f64],
    means: &[f64],
    cov: impl Fn(usize, usize) -> f64,
) -> CountDistribution {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (i, &a) in members.iter().enumerate() {
        mean += sizes[i] * means[i];
        for (j, &b) in members.iter().enumerate() {
            var += sizes[i] * sizes[j] * cov(a, b);
        }
    }
    CountDistribution {
        mean,
        var: var.max(0.0),
        members: members.to_vec(),
        inspected_equiv: vec![0; members.len()],
        floored: false,
    }
}

/// Removes `r` equivalent pairs already found by inspection; the variance is
/// unchanged.
pub fn subtract_inspected(dist: &CountDistribution, r: f64) -> CountDistribution {
    let raw = dist.mean - r;
    let floored = raw < 0.0;
    if floored {
        tracing::debug!(mean = dist.mean, r, "inspected count exceeds estimate, flooring at 0");
    }
    CountDistribution {
        mean: raw.max(0.0),
        floored: dist.floored || floored,
        ..dist.clone()
    }
}

/// Two-sided standard normal critical value for confidence `theta`.
pub fn z_value(theta: f64) -> f64 {
    standard_normal().inverse_cdf(1.0 - (1.0 - theta) / 2.0)
}

pub(crate) fn standard_normal() -> Normal {
    Normal::standard()
}

/// `[m̄ - Zσ, m̄ + Zσ]`, with the lower end floored at 0 and the upper end
/// capped at `cap` (the number of pairs the count can range over).
pub fn confidence_interval(dist: &CountDistribution, theta: f64, cap: f64) -> (f64, f64) {
    let half = z_value(theta) * dist.var.max(0.0).sqrt();
    let lower = (dist.mean - half).max(0.0).min(cap);
    let upper = (dist.mean + half).min(cap).max(0.0);
    (lower, upper)
}

/// Count distribution of the equivalent pairs still machine-labeled on one
/// side. Only subsets with machine-labeled pairs left take part.
pub fn side_distribution(state: &PartitionState, model: &SubsetModel, side: Side) -> CountDistribution {
    side_distribution_cached(state, model, side, &mut VarianceCache::default())
}

/// Remembers each side's aggregate variance. Sides never gain members, so
/// the member count identifies the member set.
#[derive(Debug, Clone, Default)]
pub struct VarianceCache {
    entries: [Option<(usize, f64)>; 2],
}

fn side_distribution_cached(
    state: &PartitionState,
    model: &SubsetModel,
    side: Side,
    cache: &mut VarianceCache,
) -> CountDistribution {
    let members: Vec<usize> = state
        .side_range(side)
        .filter(|&k| state.progress[k].remaining() > 0)
        .collect();
    let weighted: Vec<(usize, f64)> = members
        .iter()
        .map(|&k| (k, state.progress[k].total as f64))
        .collect();
    let mean: f64 = weighted.iter().map(|&(k, n)| n * model.mean(k)).sum();
    let slot = &mut cache.entries[usize::from(side == Side::Plus)];
    let var = match *slot {
        Some((count, var)) if count == members.len() => var,
        _ => {
            let var = model.weighted_variance(&weighted);
            *slot = Some((members.len(), var));
            var
        }
    };
    let inspected_equiv: Vec<usize> = members.iter().map(|&k| state.progress[k].inspected_equiv).collect();
    let r: usize = inspected_equiv.iter().sum();
    let dist = CountDistribution {
        mean,
        var,
        members,
        inspected_equiv,
        floored: false,
    };
    subtract_inspected(&dist, r as f64)
}

/// Bound values behind a [`GuaranteeReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundDetail {
    pub en_lower_plus: f64,
    pub en_upper_minus: f64,
    pub human_matching: usize,
    pub remaining_plus: usize,
    pub remaining_minus: usize,
    pub precision_lower: f64,
    pub recall_lower: f64,
}

pub fn bound_detail(state: &PartitionState, model: &SubsetModel, theta: f64) -> Result<BoundDetail> {
    bound_detail_cached(state, model, theta, &mut VarianceCache::default())
}

/// [`bound_detail`] reusing side variances while the side member sets are
/// unchanged. The cache must only ever see one partition's history.
pub fn bound_detail_cached(
    state: &PartitionState,
    model: &SubsetModel,
    theta: f64,
    cache: &mut VarianceCache,
) -> Result<BoundDetail> {
    let remaining_plus = state.remaining(Side::Plus);
    let remaining_minus = state.remaining(Side::Minus);
    let plus = side_distribution_cached(state, model, Side::Plus, cache);
    let minus = side_distribution_cached(state, model, Side::Minus, cache);
    let (en_lower_plus, _) = confidence_interval(&plus, theta, remaining_plus as f64);
    let (_, en_upper_minus) = confidence_interval(&minus, theta, remaining_minus as f64);
    let h = state.human_matching as f64;
    let precision = if remaining_plus + state.human_matching == 0 {
        1.0
    } else {
        precision_lower(en_lower_plus, h, remaining_plus as f64, h)?
    };
    let recall = recall_lower(en_lower_plus, h, en_upper_minus);
    Ok(BoundDetail {
        en_lower_plus,
        en_upper_minus,
        human_matching: state.human_matching,
        remaining_plus,
        remaining_minus,
        precision_lower: precision,
        recall_lower: recall,
    })
}

/// Recomputes both lower bounds from the partition and the subset model.
pub fn guarantee_status(
    state: &PartitionState,
    model: &SubsetModel,
    req: &QualityRequirement,
    iterations: usize,
) -> Result<GuaranteeReport> {
    let d = bound_detail(state, model, req.theta)?;
    Ok(GuaranteeReport {
        precision_lower: d.precision_lower,
        recall_lower: d.recall_lower,
        sampling_cost: state.sampling_cost,
        dh_cost: state.dh_cost,
        iterations,
        success: req.is_met(d.precision_lower, d.recall_lower),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(mean: f64, var: f64) -> CountDistribution {
        CountDistribution {
            mean,
            var,
            members: vec![0],
            inspected_equiv: vec![0],
            floored: false,
        }
    }

    /// Standard normal CDF by Simpson integration of the density from 0.
    fn cdf_oracle(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let f = |t: f64| (-(t * t) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(0.0) + f(x);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0
    }

    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..100 {
            let mid = (lo + hi) / 2.0;
            if cdf_oracle(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn aggregate_examples() {
        let d = aggregate(&[0], &[200.0], &[0.1], |_, _| 0.0004);
        assert_abs_diff_eq!(d.mean, 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.var, 16.0, epsilon = 1e-12);
        let d = aggregate(&[0, 1], &[200.0, 100.0], &[0.1, 0.5], |a, b| {
            if a == b {
                [0.0004, 0.001][a]
            } else {
                0.0
            }
        });
        assert_abs_diff_eq!(d.mean, 70.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.var, 16.0 + 10.0, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_matches_monte_carlo() {
        let sizes = [200.0, 150.0, 120.0];
        let means = [0.2, 0.4, 0.7];
        let c = [
            [0.0030, 0.0012, -0.0004],
            [0.0012, 0.0025, 0.0008],
            [-0.0004, 0.0008, 0.0020],
        ];
        let d = aggregate(&[0, 1, 2], &sizes, &means, |a, b| c[a][b]);
        // Cholesky of c by hand, then correlated draws.
        let l00 = c[0][0].sqrt();
        let l10 = c[1][0] / l00;
        let l20 = c[2][0] / l00;
        let l11 = (c[1][1] - l10 * l10).sqrt();
        let l21 = (c[2][1] - l20 * l10) / l11;
        let l22 = (c[2][2] - l20 * l20 - l21 * l21).sqrt();
        let normal = rand_distr_normal;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let (z0, z1, z2) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
            let x0 = means[0] + l00 * z0;
            let x1 = means[1] + l10 * z0 + l11 * z1;
            let x2 = means[2] + l20 * z0 + l21 * z1 + l22 * z2;
            let t = sizes[0] * x0 + sizes[1] * x1 + sizes[2] * x2;
            s1 += t;
            s2 += t * t;
        }
        let n = draws as f64;
        let mc_mean = s1 / n;
        let mc_var = s2 / n - mc_mean * mc_mean;
        let se_mean = (mc_var / n).sqrt();
        // Standard error of the sample variance of a Gaussian.
        let se_var = mc_var * (2.0 / (n - 1.0)).sqrt();
        assert!((mc_mean - d.mean).abs() <= 3.0 * se_mean, "{mc_mean} vs {}", d.mean);
        assert!((mc_var - d.var).abs() <= 3.0 * se_var, "{mc_var} vs {}", d.var);
    }

    /// Box-Muller, so the test does not lean on the crate's own sampling.
    fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn lemma_subtraction() {
        let d = dist(20.0, 16.0);
        let s = subtract_inspected(&d, 5.0);
        assert_eq!((s.mean, s.var, s.floored), (15.0, 16.0, false));
        assert_eq!(subtract_inspected(&d, 0.0), d);
        let s = subtract_inspected(&dist(3.0, 16.0), 5.0);
        assert_eq!((s.mean, s.var, s.floored), (0.0, 16.0, true));
        let a = subtract_inspected(&subtract_inspected(&d, 3.0), 4.0);
        let b = subtract_inspected(&d, 7.0);
        assert_eq!(a, b);
    }

    #[test]
    fn z_value_matches_oracle() {
        assert_abs_diff_eq!(z_value(0.9), 1.6449, epsilon = 1e-4);
        for theta in [0.5, 0.8, 0.9, 0.95, 0.99] {
            assert_abs_diff_eq!(z_value(theta), quantile_oracle(1.0 - (1.0 - theta) / 2.0), epsilon = 1e-8);
        }
    }

    #[test]
    fn interval_examples() {
        let (lo, hi) = confidence_interval(&dist(100.0, 25.0), 0.9, 1e9);
        assert_abs_diff_eq!(lo, 100.0 - 1.644_853_6 * 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, 108.22, epsilon = 1e-2);
        assert_eq!(confidence_interval(&dist(42.0, 0.0), 0.9, 1e9), (42.0, 42.0));
        assert_eq!(confidence_interval(&dist(1.0, 100.0), 0.9, 5.0), (0.0, 5.0));
        let mut last = 0.0;
        for theta in [0.5, 0.7, 0.9, 0.99] {
            let (lo, hi) = confidence_interval(&dist(100.0, 25.0), theta, 1e9);
            assert!(hi - lo > last);
            last = hi - lo;
        }
    }

    fn exact_state(sizes_equiv: &[(usize, usize)], boundary: usize) -> (PartitionState, SubsetModel) {
        let total: usize = sizes_equiv.iter().map(|s| s.0).sum();
        let size = sizes_equiv[0].0;
        let st = PartitionState {
            boundary,
            ..PartitionState::new(total, size)
        };
        let props = sizes_equiv.iter().map(|&(n, e)| e as f64 / n as f64).collect();
        (st, SubsetModel::exact(props))
    }

    #[test]
    fn whole_workload_inspected_gives_exact_bounds() {
        let (mut st, model) = exact_state(&[(10, 1), (10, 8)], 1);
        let truth: Vec<bool> = (0..20).map(|i| i == 3 || (i >= 10 && i < 18)).collect();
        for (pos, t) in truth.iter().enumerate() {
            st.apply_human_label(pos, *t, false).unwrap();
        }
        let req = QualityRequirement::new(0.9, 0.9, 0.9).unwrap();
        let r = guarantee_status(&st, &model, &req, 0).unwrap();
        assert_eq!((r.precision_lower, r.recall_lower, r.success), (1.0, 1.0, true));
    }

    #[test]
    fn empty_matching_side() {
        let (st, model) = exact_state(&[(10, 2), (10, 3)], 2);
        let req = QualityRequirement::new(0.9, 0.9, 0.9).unwrap();
        let r = guarantee_status(&st, &model, &req, 0).unwrap();
        assert_eq!(r.precision_lower, 1.0);
        assert_eq!(r.recall_lower, 0.0);
        assert!(!r.success);
    }

    #[test]
    fn exact_model_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = 20;
            let truth: Vec<bool> = (0..10 * n)
                .map(|pos| rng.random::<f64>() < (pos / n) as f64 / 10.0 + 0.05)
                .collect();
            let counts: Vec<(usize, usize)> = (0..10)
                .map(|k| (n, truth[k * n..(k + 1) * n].iter().filter(|t| **t).count()))
                .collect();
            let boundary = rng.random_range(0..=10);
            let (mut st, model) = exact_state(&counts, boundary);
            for pos in 0..truth.len() {
                if rng.random::<f64>() < 0.2 {
                    st.apply_human_label(pos, truth[pos], false).unwrap();
                }
            }
            // Enumerate the final labeling.
            let (mut tp, mut pred, mut found_minus) = (0usize, 0usize, 0usize);
            for (pos, &t) in truth.iter().enumerate() {
                let l = st.labels[pos];
                let matching = if l.is_human() {
                    l.is_matching()
                } else {
                    st.side_of(st.subset_of(pos)) == Side::Plus
                };
                if matching {
                    pred += 1;
                    tp += usize::from(t);
                } else if t {
                    found_minus += 1;
                }
            }
            let precision = if pred == 0 { 1.0 } else { tp as f64 / pred as f64 };
            let recall = if tp + found_minus == 0 {
                1.0
            } else {
                tp as f64 / (tp + found_minus) as f64
            };
            let req = QualityRequirement::new(0.9, 0.9, 0.9).unwrap();
            let r = guarantee_status(&st, &model, &req, 0).unwrap();
            assert_abs_diff_eq!(r.precision_lower, precision, epsilon = 1e-12);
            assert_abs_diff_eq!(r.recall_lower, recall, epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_variance_matches_pairwise_sum() {
        let gpr = GprModel::fit(&[0.2, 0.4, 0.6, 0.8], &[0.05, 0.2, 0.7, 0.95]).unwrap();
        let v: Vec<f64> = (0..12).map(|i| 0.15 + i as f64 * 0.06).collect();
        let model = SubsetModel::from_gpr(&gpr, &v);
        let members = [1usize, 4, 5, 9, 11];
        let sizes = [200.0, 200.0, 150.0, 200.0, 37.0];
        let means: Vec<f64> = members.iter().map(|&k| model.mean(k)).collect();
        let direct = aggregate(&members, &sizes, &means, |a, b| gpr.posterior_cov(v[a], v[b]));
        let weighted: Vec<(usize, f64)> = members.iter().copied().zip(sizes).collect();
        assert_abs_diff_eq!(model.weighted_variance(&weighted), direct.var, epsilon = 1e-8);
        for &k in &members {
            assert_abs_diff_eq!(model.var(k), gpr.posterior(v[k]).var, epsilon = 1e-12);
        }
    }
}
