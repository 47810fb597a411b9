//! Domain types shared across the engine.
//!
//! A workload `D` is a list of [`CandidatePair`]s. After ordering by machine
//! metric it is cut into [`UnitSubset`]s, and the [`PartitionState`] tracks
//! how those subsets are split between machine-unmatching (`D-`),
//! machine-matching (`D+`) and human inspection (`D_H`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PairId = u64;

/// Builds the canonical pair identifier from left and right record indices.
pub fn pair_id(left: usize, right: usize) -> PairId {
    ((left as u64) << 32) | right as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
    Missing,
}

impl AttrValue {
    pub fn is_missing(&self) -> bool {
        match self {
            AttrValue::Missing => true,
            AttrValue::Text(s) => s.trim().is_empty(),
            AttrValue::Number(x) => !x.is_finite(),
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntity {
    pub id: String,
    pub attributes: Vec<(String, AttrValue)>,
}

impl RecordEntity {
    pub fn get(&self, name: &str) -> Option<&AttrValue> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }
}

/// Label state of a pair. Author and verdict are combined so that cost
/// accounting can be audited from the labels alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    #[default]
    Unlabeled,
    MachineMatching,
    MachineUnmatching,
    HumanMatching,
    HumanUnmatching,
}

impl Label {
    pub fn human(matching: bool) -> Self {
        if matching {
            Label::HumanMatching
        } else {
            Label::HumanUnmatching
        }
    }

    pub fn machine(matching: bool) -> Self {
        if matching {
            Label::MachineMatching
        } else {
            Label::MachineUnmatching
        }
    }

    pub fn is_human(self) -> bool {
        matches!(self, Label::HumanMatching | Label::HumanUnmatching)
    }

    pub fn is_matching(self) -> bool {
        matches!(self, Label::HumanMatching | Label::MachineMatching)
    }

    /// Only `Unlabeled -> Machine*` and `Unlabeled -> Human*` are legal.
    pub fn can_transition_to(self, next: Label) -> bool {
        self == Label::Unlabeled && next != Label::Unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub pair_id: PairId,
    pub left: usize,
    pub right: usize,
    pub attr_sims: Vec<f64>,
    pub metric: f64,
    #[serde(default)]
    pub label: Label,
    #[serde(default)]
    pub sampled: bool,
}

/// A contiguous block of pairs in metric order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSubset {
    pub index: usize,
    /// Positions into the metric-ordered pair list.
    pub pairs: std::ops::Range<usize>,
    pub avg_metric: f64,
    pub min_metric: f64,
    pub max_metric: f64,
    pub observed_ep: Option<f64>,
    pub est_mean: f64,
    pub est_var: f64,
    pub inspected_equiv_count: usize,
}

impl UnitSubset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRequirement {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl QualityRequirement {
    pub fn new(alpha: f64, beta: f64, theta: f64) -> Result<Self> {
        let req = QualityRequirement { alpha, beta, theta };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        let level = |x: f64| x > 0.0 && x <= 1.0;
        if !level(self.alpha) || !level(self.beta) {
            return Err(Error::Config(format!(
                "precision/recall levels must lie in (0,1], got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!(
                "confidence must lie in (0,1), got {}",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn is_met(&self, precision: f64, recall: f64) -> bool {
        precision >= self.alpha && recall >= self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Same,
    Diff,
}

/// Gaussian equivalence statistics of one token feature over human labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub token: u32,
    pub kind: FeatureKind,
    pub count_total: u32,
    pub count_equiv: u32,
    pub mean: f64,
    pub var: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimate {
    pub mean: f64,
    pub var: f64,
}

impl GaussianEstimate {
    pub fn new(mean: f64, var: f64) -> Self {
        GaussianEstimate {
            mean,
            var: var.max(0.0),
        }
    }

    pub fn sd(&self) -> f64 {
        self.var.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub precision_lower: f64,
    pub recall_lower: f64,
    pub sampling_cost: usize,
    pub dh_cost: usize,
    pub iterations: usize,
    pub success: bool,
}

impl GuaranteeReport {
    pub fn human_cost(&self) -> usize {
        self.sampling_cost + self.dh_cost
    }
}

/// Pairs inspected on one side since its candidate set last expanded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MepWindow {
    pub inspected: usize,
    pub equivalent: usize,
}

impl MepWindow {
    pub fn record(&mut self, equivalent: bool) {
        self.inspected += 1;
        self.equivalent += usize::from(equivalent);
    }

    pub fn mep(&self) -> Option<f64> {
        (self.inspected > 0).then(|| self.equivalent as f64 / self.inspected as f64)
    }
}

/// Candidate frontier `D-'` or `D+'`: a contiguous range of subset indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub lo: usize,
    pub hi: usize,
    pub window: MepWindow,
}

impl CandidateSet {
    pub fn contains(&self, subset: usize) -> bool {
        (self.lo..self.hi).contains(&subset)
    }
}

/// Per-subset inspection bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetProgress {
    pub total: usize,
    pub inspected: usize,
    pub inspected_equiv: usize,
    pub sampled: bool,
}

impl SubsetProgress {
    pub fn remaining(&self) -> usize {
        self.total - self.inspected
    }
}

/// The evolving (D-, D_H, D+) split. Subsets `[0, boundary)` belong to the
/// machine-unmatching side and `[boundary, m)` to the machine-matching side;
/// pairs inside them that carry a human label belong to `D_H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionState {
    pub subset_size: usize,
    pub boundary: usize,
    pub progress: Vec<SubsetProgress>,
    /// Labels indexed by metric-order position.
    pub labels: Vec<Label>,
    pub cand_minus: Option<CandidateSet>,
    pub cand_plus: Option<CandidateSet>,
    pub sampling_cost: usize,
    pub dh_cost: usize,
    /// Human labels (samples and D_H) that came back matching.
    pub human_matching: usize,
}

impl PartitionState {
    pub fn new(pair_count: usize, subset_size: usize) -> Self {
        let m = pair_count.div_ceil(subset_size);
        let progress = (0..m)
            .map(|k| SubsetProgress {
                total: subset_size.min(pair_count - k * subset_size),
                ..Default::default()
            })
            .collect();
        PartitionState {
            subset_size,
            boundary: 0,
            progress,
            labels: vec![Label::Unlabeled; pair_count],
            cand_minus: None,
            cand_plus: None,
            sampling_cost: 0,
            dh_cost: 0,
            human_matching: 0,
        }
    }

    pub fn subset_count(&self) -> usize {
        self.progress.len()
    }

    pub fn subset_of(&self, pos: usize) -> usize {
        pos / self.subset_size
    }

    pub fn positions(&self, subset: usize) -> std::ops::Range<usize> {
        let start = subset * self.subset_size;
        start..start + self.progress[subset].total
    }

    pub fn side_of(&self, subset: usize) -> Side {
        if subset < self.boundary {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    pub fn side_range(&self, side: Side) -> std::ops::Range<usize> {
        match side {
            Side::Minus => 0..self.boundary,
            Side::Plus => self.boundary..self.subset_count(),
        }
    }

    pub fn candidate(&self, side: Side) -> Option<&CandidateSet> {
        match side {
            Side::Minus => self.cand_minus.as_ref(),
            Side::Plus => self.cand_plus.as_ref(),
        }
    }

    pub fn candidate_mut(&mut self, side: Side) -> Option<&mut CandidateSet> {
        match side {
            Side::Minus => self.cand_minus.as_mut(),
            Side::Plus => self.cand_plus.as_mut(),
        }
    }

    /// Machine-labeled pairs left on one side.
    pub fn remaining(&self, side: Side) -> usize {
        self.side_range(side)
            .map(|k| self.progress[k].remaining())
            .sum()
    }

    pub fn human_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_human()).count()
    }

    /// Records a human verdict for the pair at `pos`.
    pub fn apply_human_label(&mut self, pos: usize, matching: bool, sampling: bool) -> Result<()> {
        let next = Label::human(matching);
        if !self.labels[pos].can_transition_to(next) {
            return Err(Error::AlreadyLabeled(pos as u64));
        }
        self.labels[pos] = next;
        let k = self.subset_of(pos);
        let p = &mut self.progress[k];
        p.inspected += 1;
        p.inspected_equiv += usize::from(matching);
        self.human_matching += usize::from(matching);
        if sampling {
            self.sampling_cost += 1;
        } else {
            self.dh_cost += 1;
        }
        Ok(())
    }

    /// Assigns machine labels to every pair still unlabeled.
    pub fn finalize(&mut self) {
        for pos in 0..self.labels.len() {
            if self.labels[pos] == Label::Unlabeled {
                let side = self.side_of(self.subset_of(pos));
                self.labels[pos] = Label::machine(side == Side::Plus);
            }
        }
    }

    /// Checks coverage and disjointness of D-, D_H and D+.
    pub fn check_invariants(&self) -> Result<()> {
        let human = self.human_count();
        let minus = self.remaining(Side::Minus);
        let plus = self.remaining(Side::Plus);
        if human + minus + plus != self.labels.len() {
            return Err(Error::Config(format!(
                "partition does not cover the workload: {human}+{minus}+{plus} != {}",
                self.labels.len()
            )));
        }
        if human != self.sampling_cost + self.dh_cost {
            return Err(Error::Config("human labels charged inconsistently".into()));
        }
        for side in [Side::Minus, Side::Plus] {
            if let Some(c) = self.candidate(side) {
                if c.window.equivalent > c.window.inspected {
                    return Err(Error::Config("MEP window has M > N".into()));
                }
            }
        }
        Ok(())
    }
}

/// Lower bound of achieved precision: `(EN_L(D+) + EN_L(D_H)) / (TN(D+) + TN(D_H))`.
///
/// `tn_h` counts the human-labeled pairs that are labeled matching.
pub fn precision_lower(en_lo_plus: f64, en_lo_h: f64, tn_plus: f64, tn_h: f64) -> Result<f64> {
    let denom = tn_plus + tn_h;
    if denom <= 0.0 {
        return Err(Error::UndefinedBound("no pair is labeled matching"));
    }
    Ok(((en_lo_plus.max(0.0) + en_lo_h.max(0.0)) / denom).clamp(0.0, 1.0))
}

/// Lower bound of achieved recall. A workload with no equivalent pairs at all
/// is vacuously complete.
pub fn recall_lower(en_lo_plus: f64, en_lo_h: f64, en_hi_minus: f64) -> f64 {
    let found = en_lo_plus.max(0.0) + en_lo_h.max(0.0);
    let denom = found + en_hi_minus.max(0.0);
    if denom <= 0.0 {
        return 1.0;
    }
    (found / denom).clamp(0.0, 1.0)
}
