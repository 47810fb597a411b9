//! The selection engine.
//!
//! [`Engine`] is a request/submit state machine: [`Engine::next_request`]
//! names the pairs a human must label next and [`Engine::submit`] feeds the
//! answers back. The same machine serves in-process runs against a
//! [`LabelProvider`] and live sessions behind the HTTP service.

pub mod rules;

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::api::{Phase, StatusSnapshot};
use crate::bounds::{bound_detail_cached, BoundDetail, SubsetModel, VarianceCache};
use crate::datamodel::{
    CandidateSet, GuaranteeReport, MepWindow, PairId, PartitionState, QualityRequirement, Side,
    UnitSubset,
};
use crate::error::{Error, Result};
use crate::gpr::{GprModel, HyperGrid};
use crate::ingest::Workload;
use crate::oracle::LabelProvider;
use crate::partition::{choose_samples, initial_boundary, make_subsets, SamplingParams, SamplingPlan};
use crate::risk::{rank_candidates, FeatureStore, RankInput, WeightMode};
use rules::CandidateView;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Realtime,
    Batch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Rhumo,
    Humo,
    Rand,
    Cos,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rhumo" | "r-humo" => Ok(Strategy::Rhumo),
            "humo" => Ok(Strategy::Humo),
            "rand" => Ok(Strategy::Rand),
            "cos" => Ok(Strategy::Cos),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Rhumo => "rhumo",
            Strategy::Humo => "humo",
            Strategy::Rand => "rand",
            Strategy::Cos => "cos",
        })
    }
}

/// Binomial variance of a sampled proportion relative to its value at one
/// half, using the smoothed estimate `(k + 1/2) / (n + 1)` so empty and full
/// samples keep a small positive noise.
pub fn binomial_noise_scale(equivalent: usize, total: usize) -> f64 {
    let p = (equivalent as f64 + 0.5) / (total as f64 + 1.0);
    4.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub mode: Mode,
    pub strategy: Strategy,
    pub min_inspect_threshold: usize,
    /// CVaR confidence; the requirement's confidence when unset.
    pub theta_risk: Option<f64>,
    pub seed: u64,
    /// Use exact subset proportions instead of sampling plus regression.
    pub ground_truth_proportions: bool,
    pub subset_size: usize,
    pub sampling: SamplingParams,
    pub weight_mode: WeightMode,
    /// Pairs labeled by the `rand` and `cos` strategies.
    pub budget: usize,
    /// Upper limit on batch size in batch mode.
    pub max_batch: Option<usize>,
    pub grid: HyperGrid,
    /// Scale each sample's regression noise by the binomial variance of its
    /// observed proportion instead of using one noise level for all samples.
    pub binomial_noise: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: Mode::Realtime,
            strategy: Strategy::Rhumo,
            min_inspect_threshold: 20,
            theta_risk: None,
            seed: 1,
            ground_truth_proportions: false,
            subset_size: crate::partition::DEFAULT_SUBSET_SIZE,
            sampling: SamplingParams::default(),
            weight_mode: WeightMode::InformationValue,
            budget: 0,
            max_batch: None,
            grid: HyperGrid::default(),
            binomial_noise: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_inspect_threshold < 1 {
            return Err(Error::Config("min_inspect_threshold must be at least 1".into()));
        }
        if let Some(t) = self.theta_risk {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("theta_risk must lie in (0,1), got {t}")));
            }
        }
        if self.subset_size < 2 {
            return Err(Error::Config("subset_size must be at least 2".into()));
        }
        let s = self.sampling;
        if !(0.0 < s.min_fraction && s.min_fraction <= s.max_fraction && s.max_fraction <= 1.0) {
            return Err(Error::Config(format!("invalid sampling fractions {s:?}")));
        }
        if self.max_batch == Some(0) {
            return Err(Error::Config("max_batch must be positive".into()));
        }
        Ok(())
    }
}

/// What the engine wants next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "pairs")]
pub enum Request {
    Batch(Vec<PairId>),
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Sampling,
    Select,
    /// Remaining pairs of a subset sent to the human after a short iteration.
    Sweep,
    Subset,
    Budget,
}

/// One run-log record, written after every submitted batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub kind: StepKind,
    pub side: Option<Side>,
    pub batch_size: usize,
    pub candidate_remaining: Option<usize>,
    pub mep: Option<f64>,
    pub remaining_ep: Option<f64>,
    pub precision_lower: f64,
    pub recall_lower: f64,
    pub sampling_cost: usize,
    pub dh_cost: usize,
    pub iterations: usize,
    pub expanded: bool,
}

#[derive(Debug, Clone)]
struct Pending {
    positions: Vec<usize>,
    kind: StepKind,
    side: Option<Side>,
}

#[derive(Debug, Clone)]
struct Iteration {
    side: Side,
    queue: Vec<usize>,
    cursor: usize,
    inspected: usize,
}

/// Achieved precision and recall of a final labeling against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub precision: f64,
    pub recall: f64,
}

pub fn true_quality(predicted: &[bool], truth: &[bool]) -> Quality {
    let (mut tp, mut pred, mut pos) = (0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        pred += usize::from(p);
        pos += usize::from(t);
        tp += usize::from(p && t);
    }
    Quality {
        precision: if pred == 0 { 1.0 } else { tp as f64 / pred as f64 },
        recall: if pos == 0 { 1.0 } else { tp as f64 / pos as f64 },
    }
}

pub struct Engine {
    workload: Arc<Workload>,
    req: QualityRequirement,
    config: EngineConfig,
    /// Metric position -> index into `workload.pairs`.
    order: Vec<usize>,
    position_of: HashMap<PairId, usize>,
    subsets: Vec<UnitSubset>,
    state: PartitionState,
    plan: Option<SamplingPlan>,
    gpr: Option<GprModel>,
    model: Option<SubsetModel>,
    store: FeatureStore,
    phase: Phase,
    pending: Option<Pending>,
    work: Option<Iteration>,
    sweep: VecDeque<usize>,
    expansion_due: Option<Side>,
    exhausted: [bool; 2],
    next_side: Side,
    iterations: usize,
    interactions: usize,
    detail: Option<BoundDetail>,
    var_cache: VarianceCache,
    log: Vec<StepRecord>,
    budget_spent: bool,
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Minus => 0,
        Side::Plus => 1,
    }
}

impl Engine {
    /// Builds an engine. `truth` (aligned with `workload.pairs`) is read only
    /// in ground-truth-proportion mode, where it is required.
    pub fn new(
        workload: Arc<Workload>,
        req: QualityRequirement,
        config: EngineConfig,
        truth: Option<&[bool]>,
    ) -> Result<Self> {
        req.validate()?;
        config.validate()?;
        if workload.is_empty() {
            return Err(Error::EmptyWorkload);
        }
        let (order, subsets) = make_subsets(&workload.pairs, config.subset_size)?;
        let position_of = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| (workload.pairs[i].pair_id, pos))
            .collect();
        let state = PartitionState::new(order.len(), config.subset_size);
        let mut engine = Engine {
            store: FeatureStore::new(config.weight_mode),
            workload,
            req,
            order,
            position_of,
            subsets,
            state,
            plan: None,
            gpr: None,
            model: None,
            phase: Phase::Sampling,
            pending: None,
            work: None,
            sweep: VecDeque::new(),
            expansion_due: None,
            exhausted: [false; 2],
            next_side: Side::Minus,
            iterations: 0,
            interactions: 0,
            detail: None,
            var_cache: VarianceCache::default(),
            log: Vec::new(),
            budget_spent: false,
            config,
        };
        if engine.config.ground_truth_proportions {
            let truth = truth.ok_or_else(|| {
                Error::Config("ground-truth-proportion mode needs ground truth".into())
            })?;
            if truth.len() != engine.order.len() {
                return Err(Error::Config("ground truth does not match the workload".into()));
            }
            let props: Vec<f64> = engine
                .subsets
                .iter()
                .map(|s| {
                    let e = s.pairs.clone().filter(|&p| truth[engine.order[p]]).count();
                    e as f64 / s.len() as f64
                })
                .collect();
            for (s, &p) in engine.subsets.iter_mut().zip(&props) {
                s.est_mean = p;
                s.est_var = 0.0;
            }
            engine.start_selection(SubsetModel::exact(props))?;
        } else {
            let metrics: Vec<f64> = engine.subsets.iter().map(|s| s.avg_metric).collect();
            let plan = choose_samples(&metrics, engine.config.sampling, engine.config.seed);
            for &k in &plan.subset_indices {
                engine.state.progress[k].sampled = true;
            }
            engine.plan = Some(plan);
        }
        Ok(engine)
    }

    pub fn requirement(&self) -> QualityRequirement {
        self.req
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn workload(&self) -> &Arc<Workload> {
        &self.workload
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn state(&self) -> &PartitionState {
        &self.state
    }

    pub fn subsets(&self) -> &[UnitSubset] {
        &self.subsets
    }

    pub fn sampling_plan(&self) -> Option<&SamplingPlan> {
        self.plan.as_ref()
    }

    pub fn gpr(&self) -> Option<&GprModel> {
        self.gpr.as_ref()
    }

    pub fn feature_store(&self) -> &FeatureStore {
        &self.store
    }

    pub fn log(&self) -> &[StepRecord] {
        &self.log
    }

    pub fn interactions(&self) -> usize {
        self.interactions
    }

    pub fn pending(&self) -> Option<Vec<PairId>> {
        self.pending
            .as_ref()
            .map(|p| p.positions.iter().map(|&pos| self.pair_id_at(pos)).collect())
    }

    /// Metric-order position -> index into `workload.pairs`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn pair_id_at(&self, pos: usize) -> PairId {
        self.workload.pairs[self.order[pos]].pair_id
    }

    fn theta_risk(&self) -> f64 {
        self.config.theta_risk.unwrap_or(self.req.theta)
    }

    pub fn report(&self) -> GuaranteeReport {
        let (p, r) = self
            .detail
            .as_ref()
            .map_or((0.0, 0.0), |d| (d.precision_lower, d.recall_lower));
        GuaranteeReport {
            precision_lower: p,
            recall_lower: r,
            sampling_cost: self.state.sampling_cost,
            dh_cost: self.state.dh_cost,
            iterations: self.iterations,
            success: self.detail.is_some() && self.req.is_met(p, r),
        }
    }

    pub fn snapshot(&self) -> StatusSnapshot {
        let r = self.report();
        StatusSnapshot {
            phase: self.phase,
            done: self.is_done(),
            success: r.success,
            precision_lower: r.precision_lower,
            recall_lower: r.recall_lower,
            alpha: self.req.alpha,
            beta: self.req.beta,
            theta: self.req.theta,
            sampling_cost: r.sampling_cost,
            dh_cost: r.dh_cost,
            human_cost: r.human_cost(),
            iterations: r.iterations,
            interactions: self.interactions,
            pending: self.pending.as_ref().map_or(0, |p| p.positions.len()),
            workload_size: self.order.len(),
            remaining_minus: self.state.remaining(Side::Minus),
            remaining_plus: self.state.remaining(Side::Plus),
        }
    }

    /// Final labels aligned with `workload.pairs`: human verdicts where a
    /// human answered, otherwise the machine label of the pair's side.
    pub fn predicted_matching(&self) -> Vec<bool> {
        let mut out = vec![false; self.order.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            let l = self.state.labels[pos];
            out[i] = if l.is_human() {
                l.is_matching()
            } else {
                self.state.side_of(self.state.subset_of(pos)) == Side::Plus
            };
        }
        out
    }

    pub fn next_request(&mut self) -> Result<Request> {
        if self.pending.is_some() {
            return Err(Error::BatchPending);
        }
        let next = match self.phase {
            Phase::Done => None,
            Phase::Sampling => {
                let plan = self.plan.as_ref().expect("sampling phase has a plan");
                let positions: Vec<usize> = plan
                    .subset_indices
                    .iter()
                    .flat_map(|&k| self.state.positions(k))
                    .collect();
                Some(Pending {
                    positions,
                    kind: StepKind::Sampling,
                    side: None,
                })
            }
            Phase::Selecting => self.plan_next()?,
        };
        match next {
            Some(p) => {
                let ids = p.positions.iter().map(|&pos| self.pair_id_at(pos)).collect();
                self.pending = Some(p);
                self.interactions += 1;
                Ok(Request::Batch(ids))
            }
            None => {
                self.finish();
                Ok(Request::Done)
            }
        }
    }

    /// Applies the answers to the pending batch. The labels must name exactly
    /// the pending pairs; otherwise nothing changes.
    pub fn submit(&mut self, labels: &[(PairId, bool)]) -> Result<StatusSnapshot> {
        let pending = self.pending.as_ref().ok_or(Error::NoPendingBatch)?;
        let expected: HashSet<usize> = pending.positions.iter().copied().collect();
        if labels.len() != expected.len() {
            return Err(Error::LabelMismatch(format!(
                "expected {} labels, got {}",
                expected.len(),
                labels.len()
            )));
        }
        let mut by_pos = HashMap::with_capacity(labels.len());
        for &(id, m) in labels {
            let pos = *self.position_of.get(&id).ok_or(Error::UnknownPair(id))?;
            if !expected.contains(&pos) {
                return Err(Error::LabelMismatch(format!("pair {id} is not in the pending batch")));
            }
            if by_pos.insert(pos, m).is_some() {
                return Err(Error::LabelMismatch(format!("pair {id} labeled twice")));
            }
        }
        let pending = self.pending.take().expect("checked above");
        let sampling = pending.kind == StepKind::Sampling;
        for &pos in &pending.positions {
            let m = by_pos[&pos];
            self.state.apply_human_label(pos, m, sampling)?;
            let pair = &self.workload.pairs[self.order[pos]];
            let (l, r) = self.workload.pair_tokens(pair);
            self.store.update(l, r, m);
            let k = self.state.subset_of(pos);
            self.subsets[k].inspected_equiv_count += usize::from(m);
            if let Some(side) = pending.side {
                if let Some(c) = self.state.candidate_mut(side) {
                    if c.contains(k) {
                        c.window.record(m);
                    }
                }
            }
        }
        let mut expanded = false;
        if sampling {
            self.finish_sampling()?;
        } else {
            self.refresh_bounds()?;
            expanded = self.after_selection(&pending)?;
        }
        self.push_log(&pending, expanded);
        Ok(self.snapshot())
    }

    fn push_log(&mut self, pending: &Pending, expanded: bool) {
        let r = self.report();
        let view = pending.side.and_then(|s| self.candidate_view(s));
        self.log.push(StepRecord {
            step: self.log.len(),
            kind: pending.kind,
            side: pending.side,
            batch_size: pending.positions.len(),
            candidate_remaining: view.map(|v| v.remaining),
            mep: view.and_then(|v| v.window.mep()),
            remaining_ep: view.map(|v| v.remaining_ep),
            precision_lower: r.precision_lower,
            recall_lower: r.recall_lower,
            sampling_cost: r.sampling_cost,
            dh_cost: r.dh_cost,
            iterations: r.iterations,
            expanded,
        });
    }

    fn finish_sampling(&mut self) -> Result<()> {
        let plan = self.plan.as_ref().expect("sampling phase has a plan");
        let mut inputs = Vec::with_capacity(plan.subset_indices.len());
        let mut targets = Vec::with_capacity(plan.subset_indices.len());
        let mut scales = Vec::with_capacity(plan.subset_indices.len());
        for &k in &plan.subset_indices {
            let p = self.state.progress[k];
            let ep = p.inspected_equiv as f64 / p.total as f64;
            self.subsets[k].observed_ep = Some(ep);
            inputs.push(self.subsets[k].avg_metric);
            targets.push(ep);
            scales.push(if self.config.binomial_noise {
                binomial_noise_scale(p.inspected_equiv, p.total)
            } else {
                1.0
            });
        }
        let gpr = GprModel::fit_grid_scaled(&inputs, &targets, &scales, &self.config.grid)?;
        let avg: Vec<f64> = self.subsets.iter().map(|s| s.avg_metric).collect();
        let model = SubsetModel::from_gpr(&gpr, &avg);
        for (k, s) in self.subsets.iter_mut().enumerate() {
            s.est_mean = model.mean(k);
            s.est_var = model.var(k);
        }
        tracing::debug!(params = ?gpr.params(), "fitted proportion model");
        self.gpr = Some(gpr);
        self.start_selection(model)
    }

    fn start_selection(&mut self, model: SubsetModel) -> Result<()> {
        self.state.boundary = initial_boundary(model.means());
        let m = self.subsets.len();
        let b = self.state.boundary;
        self.state.cand_minus = (0..b)
            .rev()
            .find(|&k| self.state.progress[k].remaining() > 0)
            .map(|k| CandidateSet { lo: k, hi: b, window: MepWindow::default() });
        self.state.cand_plus = (b..m)
            .find(|&k| self.state.progress[k].remaining() > 0)
            .map(|k| CandidateSet { lo: b, hi: k + 1, window: MepWindow::default() });
        self.model = Some(model);
        self.phase = Phase::Selecting;
        self.refresh_bounds()
    }

    fn refresh_bounds(&mut self) -> Result<()> {
        let model = self.model.as_ref().expect("bounds need a model");
        self.detail = Some(bound_detail_cached(&self.state, model, self.req.theta, &mut self.var_cache)?);
        Ok(())
    }

    fn side_met(&self, side: Side) -> bool {
        let Some(d) = &self.detail else { return false };
        match side {
            Side::Minus => d.recall_lower >= self.req.beta,
            Side::Plus => d.precision_lower >= self.req.alpha,
        }
    }

    fn unmet_sides(&self) -> Vec<Side> {
        [Side::Minus, Side::Plus]
            .into_iter()
            .filter(|&s| !self.side_met(s) && !self.exhausted[side_index(s)])
            .collect()
    }

    fn finish(&mut self) {
        if self.phase != Phase::Done {
            self.phase = Phase::Done;
            self.work = None;
            self.state.finalize();
        }
    }

    fn plan_next(&mut self) -> Result<Option<Pending>> {
        match self.config.strategy {
            Strategy::Rhumo => self.plan_rhumo(),
            Strategy::Humo => Ok(self.plan_humo()),
            Strategy::Rand | Strategy::Cos => Ok(self.plan_budget()),
        }
    }

    fn positions_remaining(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.state
            .positions(k)
            .filter(|&p| !self.state.labels[p].is_human())
    }

    fn cand_members(&self, side: Side) -> Vec<usize> {
        self.state
            .candidate(side)
            .map(|c| (c.lo..c.hi).filter(|&k| self.state.progress[k].remaining() > 0).collect())
            .unwrap_or_default()
    }

    /// The nearest subset outside the candidate set, on its side, that still
    /// has machine-labeled pairs.
    fn adjacent(&self, side: Side) -> Option<usize> {
        let c = self.state.candidate(side)?;
        match side {
            Side::Minus => (0..c.lo).rev().find(|&k| self.state.progress[k].remaining() > 0),
            Side::Plus => (c.hi..self.subsets.len()).find(|&k| self.state.progress[k].remaining() > 0),
        }
    }

    pub fn candidate_view(&self, side: Side) -> Option<CandidateView> {
        let c = self.state.candidate(side)?;
        let model = self.model.as_ref()?;
        let members = (c.lo..c.hi).map(|k| {
            let p = self.state.progress[k];
            (model.mean(k), p.total, p.inspected, p.inspected_equiv)
        });
        let remaining: usize = (c.lo..c.hi).map(|k| self.state.progress[k].remaining()).sum();
        let remaining_ep = rules::remaining_ep(members).unwrap_or(0.0);
        Some(CandidateView {
            remaining,
            remaining_ep,
            adjacent_ep: self.adjacent(side).map(|k| model.mean(k)),
            window: c.window,
        })
    }

    /// Absorbs the adjacent subset into the side's candidate set. Returns
    /// false when there is nothing left to absorb.
    fn expand(&mut self, side: Side) -> bool {
        let Some(k) = self.adjacent(side) else {
            if self.cand_members(side).is_empty() {
                self.exhausted[side_index(side)] = true;
            }
            return false;
        };
        if let Some(c) = self.state.candidate_mut(side) {
            match side {
                Side::Minus => c.lo = k,
                Side::Plus => c.hi = k + 1,
            }
            c.window = MepWindow::default();
        }
        true
    }

    fn boundary_metric(&self) -> f64 {
        let b = self.state.boundary;
        if b < self.subsets.len() {
            self.subsets[b].min_metric
        } else {
            self.subsets[b - 1].max_metric
        }
    }

    fn rank_side(&self, side: Side) -> Vec<usize> {
        self.rank_subsets(side, &self.cand_members(side))
    }

    /// Machine-labeled positions of `members`, riskiest first.
    fn rank_subsets(&self, side: Side, members: &[usize]) -> Vec<usize> {
        let inputs: Vec<RankInput<'_>> = members
            .iter()
            .flat_map(|&k| self.positions_remaining(k))
            .map(|pos| {
                let pair = &self.workload.pairs[self.order[pos]];
                let (left, right) = self.workload.pair_tokens(pair);
                RankInput {
                    pair_id: pair.pair_id,
                    position: pos,
                    metric: pair.metric,
                    left,
                    right,
                }
            })
            .collect();
        rank_candidates(&self.store, &inputs, side, self.theta_risk(), self.boundary_metric())
            .into_iter()
            .map(|s| s.position)
            .collect()
    }

    fn plan_rhumo(&mut self) -> Result<Option<Pending>> {
        loop {
            if !self.sweep.is_empty() {
                if self.report().success {
                    self.sweep.clear();
                    self.expansion_due = None;
                    return Ok(None);
                }
                let side = self.expansion_due;
                let n = match self.config.mode {
                    Mode::Realtime => 1,
                    Mode::Batch => self.sweep.len().min(self.config.max_batch.unwrap_or(usize::MAX)),
                };
                let positions: Vec<usize> = self.sweep.drain(..n).collect();
                return Ok(Some(Pending { positions, kind: StepKind::Sweep, side }));
            }
            if let Some(side) = self.expansion_due.take() {
                self.expand(side);
                self.iterations += 1;
                self.work = None;
                continue;
            }
            if self.work.is_none() {
                if self.report().success {
                    return Ok(None);
                }
                let unmet = self.unmet_sides();
                let side = match unmet.as_slice() {
                    [] => return Ok(None),
                    [s] => *s,
                    _ => {
                        let s = self.next_side;
                        self.next_side = s.other();
                        s
                    }
                };
                if self.cand_members(side).is_empty() && !self.expand(side) {
                    self.exhausted[side_index(side)] = true;
                    continue;
                }
                let queue = self.rank_side(side);
                self.work = Some(Iteration { side, queue, cursor: 0, inspected: 0 });
            }
            let it = self.work.as_ref().expect("iteration set above");
            let side = it.side;
            if it.cursor >= it.queue.len() {
                self.expansion_due = Some(side);
                continue;
            }
            let left = it.queue.len() - it.cursor;
            let size = match self.config.mode {
                Mode::Realtime => 1,
                Mode::Batch => {
                    let view = self.candidate_view(side).expect("active side has a candidate set");
                    rules::batch_size(side, &view).min(self.config.max_batch.unwrap_or(usize::MAX))
                }
            }
            .clamp(1, left);
            let it = self.work.as_mut().expect("iteration set above");
            let positions = it.queue[it.cursor..it.cursor + size].to_vec();
            it.cursor += size;
            return Ok(Some(Pending { positions, kind: StepKind::Select, side: Some(side) }));
        }
    }

    /// Bookkeeping after a selection or sweep batch. Returns whether the
    /// candidate set expanded.
    fn after_selection(&mut self, pending: &Pending) -> Result<bool> {
        match pending.kind {
            StepKind::Select => {}
            StepKind::Sweep => {
                if self.sweep.is_empty() {
                    if let Some(side) = self.expansion_due.take() {
                        let e = self.expand(side);
                        self.iterations += 1;
                        self.work = None;
                        return Ok(e);
                    }
                }
                return Ok(false);
            }
            StepKind::Subset => {
                self.iterations += 1;
                return Ok(false);
            }
            StepKind::Budget | StepKind::Sampling => return Ok(false),
        }
        let side = pending.side.expect("selection batches have a side");
        let it = self.work.as_mut().expect("selection happens inside an iteration");
        it.inspected += pending.positions.len();
        let inspected = it.inspected;
        if self.report().success || self.side_met(side) {
            self.work = None;
            self.iterations += 1;
            return Ok(false);
        }
        let view = self.candidate_view(side).expect("active side has a candidate set");
        if !rules::should_expand(side, &view) {
            return Ok(false);
        }
        self.work = None;
        if inspected < self.config.min_inspect_threshold {
            let members = self.cand_members(side);
            let extreme = match side {
                Side::Minus => members.last(),
                Side::Plus => members.first(),
            };
            if let Some(&k) = extreme {
                self.sweep = self.rank_subsets(side, &[k]).into();
            }
        }
        if self.sweep.is_empty() {
            let e = self.expand(side);
            self.iterations += 1;
            Ok(e)
        } else {
            self.expansion_due = Some(side);
            Ok(false)
        }
    }

    /// Whole subsets next to the boundary, on the side further from its target.
    fn plan_humo(&mut self) -> Option<Pending> {
        if self.report().success {
            return None;
        }
        let d = self.detail.as_ref()?;
        let deficit = |s: Side| match s {
            Side::Minus => self.req.beta - d.recall_lower,
            Side::Plus => self.req.alpha - d.precision_lower,
        };
        let mut unmet = self.unmet_sides();
        unmet.sort_by(|a, b| deficit(*b).total_cmp(&deficit(*a)));
        for side in unmet {
            let b = self.state.boundary;
            let next = match side {
                Side::Minus => (0..b).rev().find(|&k| self.state.progress[k].remaining() > 0),
                Side::Plus => (b..self.subsets.len()).find(|&k| self.state.progress[k].remaining() > 0),
            };
            match next {
                Some(k) => {
                    let positions = self.positions_remaining(k).collect();
                    return Some(Pending { positions, kind: StepKind::Subset, side: Some(side) });
                }
                None => self.exhausted[side_index(side)] = true,
            }
        }
        None
    }

    /// One batch of `budget` pairs, chosen at random or by distance from the
    /// mean similarity vector.
    fn plan_budget(&mut self) -> Option<Pending> {
        if self.budget_spent {
            return None;
        }
        self.budget_spent = true;
        let open: Vec<usize> = (0..self.order.len())
            .filter(|&p| !self.state.labels[p].is_human())
            .collect();
        let b = self.config.budget.min(open.len());
        if b == 0 {
            return None;
        }
        let positions = match self.config.strategy {
            Strategy::Rand => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_5eed);
                let mut idx = sample(&mut rng, open.len(), b).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| open[i]).collect()
            }
            _ => {
                let pairs = &self.workload.pairs;
                let dims = pairs[0].attr_sims.len();
                let mut center = vec![0.0; dims];
                for p in pairs {
                    for (c, s) in center.iter_mut().zip(&p.attr_sims) {
                        *c += s;
                    }
                }
                center.iter_mut().for_each(|c| *c /= pairs.len() as f64);
                let dist = |pos: usize| -> f64 {
                    pairs[self.order[pos]]
                        .attr_sims
                        .iter()
                        .zip(&center)
                        .map(|(s, c)| (s - c) * (s - c))
                        .sum::<f64>()
                        .sqrt()
                };
                let mut scored: Vec<(f64, PairId, usize)> =
                    open.iter().map(|&p| (dist(p), self.pair_id_at(p), p)).collect();
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                scored.into_iter().take(b).map(|x| x.2).collect()
            }
        };
        Some(Pending { positions, kind: StepKind::Budget, side: None })
    }
}

/// Outcome of driving an engine to completion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub report: GuaranteeReport,
    pub log: Vec<StepRecord>,
    pub interactions: usize,
    /// Final labels aligned with `workload.pairs`.
    pub predicted: Vec<bool>,
}

/// Alternates requests and answers until the engine is done.
pub fn drive(engine: &mut Engine, provider: &mut dyn LabelProvider) -> Result<RunOutcome> {
    loop {
        match engine.next_request()? {
            Request::Done => break,
            Request::Batch(ids) => {
                let answers = provider.label(&ids)?;
                if answers.len() != ids.len() {
                    return Err(Error::LabelMismatch(format!(
                        "provider answered {} of {} pairs",
                        answers.len(),
                        ids.len()
                    )));
                }
                let labels: Vec<(PairId, bool)> = ids.into_iter().zip(answers).collect();
                engine.submit(&labels)?;
            }
        }
    }
    Ok(RunOutcome {
        report: engine.report(),
        log: engine.log().to_vec(),
        interactions: engine.interactions(),
        predicted: engine.predicted_matching(),
    })
}

fn run_with(
    workload: Arc<Workload>,
    truth: Option<&[bool]>,
    req: QualityRequirement,
    config: EngineConfig,
    provider: &mut dyn LabelProvider,
) -> Result<RunOutcome> {
    let mut engine = Engine::new(workload, req, config, truth)?;
    drive(&mut engine, provider)
}

/// Risk-driven selection, one pair per interaction.
pub fn run_realtime(
    workload: Arc<Workload>,
    truth: Option<&[bool]>,
    req: QualityRequirement,
    config: EngineConfig,
    provider: &mut dyn LabelProvider,
) -> Result<RunOutcome> {
    let config = EngineConfig { mode: Mode::Realtime, strategy: Strategy::Rhumo, ..config };
    run_with(workload, truth, req, config, provider)
}

/// Risk-driven selection with batch sizes from the stop-condition horizon.
pub fn run_batch(
    workload: Arc<Workload>,
    truth: Option<&[bool]>,
    req: QualityRequirement,
    config: EngineConfig,
    provider: &mut dyn LabelProvider,
) -> Result<RunOutcome> {
    let config = EngineConfig { mode: Mode::Batch, strategy: Strategy::Rhumo, ..config };
    run_with(workload, truth, req, config, provider)
}

/// Runs one of the comparison strategies (`humo`, `rand`, `cos`).
pub fn run_baseline(
    workload: Arc<Workload>,
    truth: Option<&[bool]>,
    req: QualityRequirement,
    config: EngineConfig,
    provider: &mut dyn LabelProvider,
) -> Result<RunOutcome> {
    if config.strategy == Strategy::Rhumo {
        return Err(Error::Config("run_baseline needs a baseline strategy".into()));
    }
    run_with(workload, truth, req, config, provider)
}

#[cfg(test)]
mod tests;
