//! Multi-run experiments: success rates and costs over a grid of quality
//! requirements, strategy comparisons, a runtime scaling benchmark and
//! plot-data files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::QualityRequirement;
use crate::error::{Error, Result};
use crate::ingest::{GroundTruth, Workload};
use crate::oracle::{OracleConfig, SimulatedOracle};
use crate::partition::isotonic;
use crate::selection::{drive, true_quality, Engine, EngineConfig, Mode, StepRecord, Strategy};

/// One strategy configuration compared in a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arm {
    pub strategy: Strategy,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub ground_truth_proportions: bool,
    /// Human budget for `rand` and `cos`. Unset means "match the first
    /// risk-driven arm's human cost for the same seed and requirement".
    #[serde(default)]
    pub budget: Option<usize>,
}

impl Arm {
    pub fn rhumo(mode: Mode) -> Self {
        Arm { strategy: Strategy::Rhumo, mode, ground_truth_proportions: false, budget: None }
    }

    pub fn baseline(strategy: Strategy) -> Self {
        Arm { strategy, mode: Mode::Realtime, ground_truth_proportions: false, budget: None }
    }

    pub fn with_ground_truth(mut self) -> Self {
        self.ground_truth_proportions = true;
        self
    }

    pub fn label(&self) -> String {
        let mut s = self.strategy.to_string();
        if self.strategy == Strategy::Rhumo && self.mode == Mode::Batch {
            s.push_str("-batch");
        }
        if self.ground_truth_proportions {
            s.push_str("-gt");
        }
        if let Some(b) = self.budget {
            write!(s, "-{b}").expect("writing to a string");
        }
        s
    }

    fn needs_matched_budget(&self) -> bool {
        matches!(self.strategy, Strategy::Rand | Strategy::Cos) && self.budget.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub name: String,
    /// Requirement levels; each cell uses alpha = beta = level.
    pub levels: Vec<f64>,
    pub theta: f64,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub base: EngineConfig,
    #[serde(default)]
    pub flip_probability: f64,
}

impl Campaign {
    /// Seven levels from 0.80 to 0.95, seeds 1..=20.
    pub fn standard(name: impl Into<String>, arms: Vec<Arm>) -> Self {
        Campaign {
            name: name.into(),
            levels: vec![0.80, 0.825, 0.85, 0.875, 0.90, 0.925, 0.95],
            theta: 0.9,
            arms,
            seeds: (1..=20).collect(),
            base: EngineConfig::default(),
            flip_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.arms.is_empty() {
            return Err(Error::Config("campaign needs at least one level and one arm".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("campaign needs at least one seed".into()));
        }
        for &l in &self.levels {
            QualityRequirement::new(l, l, self.theta)?;
        }
        if self.arms.iter().any(Arm::needs_matched_budget)
            && !self.arms.iter().any(|a| a.strategy == Strategy::Rhumo)
        {
            return Err(Error::Config("budget matching needs a risk-driven arm".into()));
        }
        self.base.validate()
    }
}

/// One run of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub level: f64,
    pub arm: String,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub precision_lower: f64,
    pub recall_lower: f64,
    /// True precision and recall both meet the level.
    pub success: bool,
    /// The engine's own bounds meet the level.
    pub certified: bool,
    pub sampling_cost: usize,
    pub dh_cost: usize,
    pub interactions: usize,
    pub iterations: usize,
    pub seconds: f64,
}

impl RunResult {
    pub fn human_cost(&self) -> usize {
        self.sampling_cost + self.dh_cost
    }
}

/// Means over the runs of one (level, arm) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub level: f64,
    pub arm: String,
    pub runs: usize,
    pub precision: f64,
    pub recall: f64,
    pub success_rate: f64,
    pub dh_cost: f64,
    pub sampling_cost: f64,
    pub interactions: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub name: String,
    pub workload_size: usize,
    pub runs: Vec<RunResult>,
    pub cells: Vec<CellSummary>,
}

/// Runs one configuration against a simulated oracle and scores it.
pub fn run_once(
    workload: &Arc<Workload>,
    truth: &GroundTruth,
    req: QualityRequirement,
    config: EngineConfig,
    flip_probability: f64,
) -> Result<(RunResult, Engine)> {
    let oracle_cfg = OracleConfig { flip_probability, seed: config.seed, ..OracleConfig::default() };
    let mut oracle = SimulatedOracle::new(
        workload.pairs.iter().zip(&truth.equivalent).map(|(p, &t)| (p.pair_id, t)),
        oracle_cfg,
    )?;
    let seed = config.seed;
    let started = Instant::now();
    let mut engine = Engine::new(workload.clone(), req, config, Some(&truth.equivalent))?;
    let outcome = drive(&mut engine, &mut oracle)?;
    let seconds = started.elapsed().as_secs_f64();
    let q = true_quality(&outcome.predicted, &truth.equivalent);
    let r = outcome.report;
    Ok((
        RunResult {
            level: req.alpha,
            arm: String::new(),
            seed,
            precision: q.precision,
            recall: q.recall,
            precision_lower: r.precision_lower,
            recall_lower: r.recall_lower,
            success: q.precision >= req.alpha && q.recall >= req.beta,
            certified: r.success,
            sampling_cost: r.sampling_cost,
            dh_cost: r.dh_cost,
            interactions: outcome.interactions,
            iterations: r.iterations,
            seconds,
        },
        engine,
    ))
}

/// Runs every arm for every (level, seed). Jobs for different (level, seed)
/// pairs run in parallel; within one, arms run in order so budget-matched
/// baselines can read the risk-driven arm's cost.
pub fn run_campaign(campaign: &Campaign, workload: Arc<Workload>, truth: &GroundTruth) -> Result<CampaignResult> {
    campaign.validate()?;
    if truth.equivalent.len() != workload.len() {
        return Err(Error::Config("ground truth does not match the workload".into()));
    }
    let jobs: Vec<(f64, u64)> = campaign
        .levels
        .iter()
        .flat_map(|&l| campaign.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let per_job: Vec<Vec<RunResult>> = jobs
        .par_iter()
        .map(|&(level, seed)| {
            let req = QualityRequirement::new(level, level, campaign.theta)?;
            let mut out = Vec::with_capacity(campaign.arms.len());
            let mut matched: Option<usize> = None;
            for arm in &campaign.arms {
                let budget = match arm.budget {
                    Some(b) => b,
                    None if arm.needs_matched_budget() => match matched {
                        Some(b) => b,
                        None => {
                            let config = EngineConfig { seed, strategy: Strategy::Rhumo, ..campaign.base.clone() };
                            run_once(&workload, truth, req, config, campaign.flip_probability)?.0.dh_cost
                        }
                    },
                    None => 0,
                };
                let config = EngineConfig {
                    seed,
                    strategy: arm.strategy,
                    mode: arm.mode,
                    ground_truth_proportions: arm.ground_truth_proportions,
                    budget,
                    ..campaign.base.clone()
                };
                let (mut r, _) = run_once(&workload, truth, req, config, campaign.flip_probability)?;
                r.arm = arm.label();
                if arm.strategy == Strategy::Rhumo && matched.is_none() && !arm.ground_truth_proportions {
                    matched = Some(r.dh_cost);
                }
                out.push(r);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let runs: Vec<RunResult> = per_job.into_iter().flatten().collect();
    let mut cells = Vec::new();
    for &level in &campaign.levels {
        for arm in &campaign.arms {
            let label = arm.label();
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.level == level && r.arm == label).collect();
            cells.push(summarize(level, label, &rs));
        }
    }
    Ok(CampaignResult { name: campaign.name.clone(), workload_size: workload.len(), runs, cells })
}

fn summarize(level: f64, arm: String, rs: &[&RunResult]) -> CellSummary {
    let n = rs.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RunResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
    CellSummary {
        level,
        runs: rs.len(),
        precision: mean(&|r| r.precision),
        recall: mean(&|r| r.recall),
        success_rate: mean(&|r| f64::from(u8::from(r.success))),
        dh_cost: mean(&|r| r.dh_cost as f64),
        sampling_cost: mean(&|r| r.sampling_cost as f64),
        interactions: mean(&|r| r.interactions as f64),
        seconds: mean(&|r| r.seconds),
        arm,
    }
}

impl CampaignResult {
    pub fn cell(&self, level: f64, arm: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.level == level && c.arm == arm)
    }

    pub fn runs_of<'a>(&'a self, level: f64, arm: &'a str) -> impl Iterator<Item = &'a RunResult> + 'a {
        self.runs.iter().filter(move |r| r.level == level && r.arm == arm)
    }

    pub fn cells_csv(&self) -> Result<String> {
        to_csv(&self.cells)
    }

    pub fn runs_csv(&self) -> Result<String> {
        to_csv(&self.runs)
    }

    /// Aligned plain-text table of the cells.
    pub fn table(&self) -> String {
        let mut s = format!("{} ({} pairs)\n", self.name, self.workload_size);
        writeln!(
            s,
            "{:>6}  {:<14} {:>4}  {:>9} {:>9} {:>6}  {:>9} {:>9} {:>9}",
            "level", "arm", "runs", "precision", "recall", "SR%", "D_H", "sampling", "interact"
        )
        .expect("writing to a string");
        for c in &self.cells {
            writeln!(
                s,
                "{:>6.3}  {:<14} {:>4}  {:>9.4} {:>9.4} {:>6.1}  {:>9.1} {:>9.1} {:>9.1}",
                c.level,
                c.arm,
                c.runs,
                c.precision,
                c.recall,
                100.0 * c.success_rate,
                c.dh_cost,
                c.sampling_cost,
                c.interactions
            )
            .expect("writing to a string");
        }
        s
    }

    /// Writes `cells.csv`, `runs.csv`, `table.txt` and `result.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::parse(dir, e.to_string()))?;
        let files = [
            ("cells.csv", self.cells_csv()?),
            ("runs.csv", self.runs_csv()?),
            ("table.txt", self.table()),
            ("result.json", json),
        ];
        write_all(dir, files)
    }
}

fn write_all<const N: usize>(dir: &Path, files: [(&str, String); N]) -> Result<Vec<PathBuf>> {
    files
        .into_iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let err = |e: String| Error::parse("<csv>", e);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| err(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| err(e.to_string()))
}

/// Keeps a seeded random `fraction` of the pairs.
pub fn subsample(workload: &Workload, truth: &GroundTruth, fraction: f64, seed: u64) -> (Workload, GroundTruth) {
    let n = workload.len();
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = sample(&mut rng, n, k).into_vec();
    keep.sort_unstable();
    (workload.restrict(&keep), truth.restrict(&keep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub fraction: f64,
    pub pairs: usize,
    /// Median wall-clock seconds over the repetitions.
    pub seconds: f64,
    /// Median human labels over the repetitions.
    pub human_cost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of log(seconds) against log(pairs).
    pub exponent: f64,
}

impl ScalingResult {
    pub fn csv(&self) -> Result<String> {
        to_csv(&self.points)
    }
}

/// Times a full run on seeded subsamples of the workload. Each fraction is
/// run `repetitions` times with consecutive seeds and the medians kept.
pub fn scaling_benchmark(
    workload: &Workload,
    truth: &GroundTruth,
    fractions: &[f64],
    req: QualityRequirement,
    config: &EngineConfig,
    repetitions: usize,
) -> Result<ScalingResult> {
    if fractions.len() < 2 || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::Config("scaling needs at least two fractions in (0,1]".into()));
    }
    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let mut times = Vec::with_capacity(repetitions.max(1));
        let mut costs = Vec::with_capacity(repetitions.max(1));
        let mut pairs = 0;
        for rep in 0..repetitions.max(1) as u64 {
            // each repetition draws its own subsample and engine seed
            let seed = config.seed.wrapping_add(rep);
            let (w, t) = subsample(workload, truth, fraction, seed);
            pairs = w.len();
            let (r, _) = run_once(&Arc::new(w), &t, req, EngineConfig { seed, ..config.clone() }, 0.0)?;
            times.push(r.seconds);
            costs.push(r.human_cost());
        }
        times.sort_by(f64::total_cmp);
        costs.sort_unstable();
        points.push(ScalingPoint {
            fraction,
            pairs,
            seconds: times[times.len() / 2],
            human_cost: costs[costs.len() / 2],
        });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| ((p.pairs as f64).ln(), p.seconds.max(1e-9).ln())).collect();
    Ok(ScalingResult { exponent: slope(&xy), points })
}

/// Ordinary least-squares slope.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SubsetRow {
    subset: usize,
    avg_metric: f64,
    observed_ep: Option<f64>,
    est_mean: f64,
    est_var: f64,
    /// `est_mean` after isotonic smoothing.
    est_smoothed: f64,
}

/// Writes `subsets.csv` (one row per subset; `observed_ep` blank unless the
/// subset was sampled), `trajectory.csv` (one row per run-log step) and,
/// when a regression was fitted, `curve.csv`.
pub fn emit_plot_data(engine: &Engine, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let means: Vec<f64> = engine.subsets().iter().map(|s| s.est_mean).collect();
    let smoothed = isotonic(&means, &vec![1.0; means.len()]);
    let rows: Vec<SubsetRow> = engine
        .subsets()
        .iter()
        .zip(smoothed)
        .map(|(s, est_smoothed)| SubsetRow {
            subset: s.index,
            avg_metric: s.avg_metric,
            observed_ep: s.observed_ep,
            est_mean: s.est_mean,
            est_var: s.est_var,
            est_smoothed,
        })
        .collect();
    let mut written = write_all(dir, [("subsets.csv", to_csv(&rows)?), ("trajectory.csv", trajectory_csv(engine.log())?)])?;
    if let Some(gpr) = engine.gpr() {
        let lo = engine.subsets().first().map_or(0.0, |s| s.min_metric);
        let hi = engine.subsets().last().map_or(1.0, |s| s.max_metric);
        written.extend(write_all(dir, [("curve.csv", gpr.curve_csv(lo, hi, 200))])?);
    }
    Ok(written)
}

pub fn trajectory_csv(log: &[StepRecord]) -> Result<String> {
    to_csv(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::proportion_workload;

    fn small() -> (Arc<Workload>, GroundTruth) {
        let props: Vec<f64> = (0..30).map(|k| (k as f64 / 29.0).powi(2)).collect();
        let (w, t) = proportion_workload(&props, 40, 7);
        (Arc::new(w), GroundTruth { equivalent: t, listed_matches: 0 })
    }

    fn campaign() -> Campaign {
        Campaign {
            name: "t".into(),
            levels: vec![0.8, 0.9],
            theta: 0.9,
            arms: vec![Arm::rhumo(Mode::Realtime), Arm::baseline(Strategy::Humo), Arm::baseline(Strategy::Rand)],
            seeds: vec![1, 2, 3],
            base: EngineConfig { subset_size: 40, ..EngineConfig::default() },
            flip_probability: 0.0,
        }
    }

    #[test]
    fn campaign_is_reproducible() {
        let (w, t) = small();
        let a = run_campaign(&campaign(), w.clone(), &t).unwrap();
        let b = run_campaign(&campaign(), w, &t).unwrap();
        let strip = |r: &CampaignResult| -> Vec<RunResult> {
            r.runs.iter().cloned().map(|mut x| { x.seconds = 0.0; x }).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.cells.len(), 6);
        assert!(a.cells.iter().all(|c| c.runs == 3));
    }

    #[test]
    fn matched_budget_equals_rhumo_cost() {
        let (w, t) = small();
        let total = w.len();
        let r = run_campaign(&campaign(), w, &t).unwrap();
        for seed in 1..=3 {
            let rh = r.runs.iter().find(|x| x.arm == "rhumo" && x.seed == seed && x.level == 0.8).unwrap();
            let rd = r.runs.iter().find(|x| x.arm == "rand" && x.seed == seed && x.level == 0.8).unwrap();
            assert_eq!(rd.dh_cost, rh.dh_cost.min(total - rd.sampling_cost));
        }
    }

    #[test]
    fn outputs_are_written() {
        let (w, t) = small();
        let r = run_campaign(&campaign(), w, &t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = r.write(dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let cells = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
        assert_eq!(cells.lines().count(), 7);
        assert!(r.table().contains("rhumo"));
    }

    #[test]
    fn invalid_campaigns_are_rejected() {
        let mut c = campaign();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = campaign();
        c.arms = vec![Arm::baseline(Strategy::Cos)];
        assert!(c.validate().is_err());
        let mut c = campaign();
        c.levels = vec![1.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0].iter().map(|&x| (x.ln(), (3.0 * x.powf(1.7)).ln())).collect();
        assert!((slope(&pts) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn plot_data_has_one_row_per_subset() {
        let (w, t) = small();
        let req = QualityRequirement::new(0.85, 0.85, 0.9).unwrap();
        let config = EngineConfig { subset_size: 40, ..EngineConfig::default() };
        let (_, engine) = run_once(&w, &t, req, config, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(&engine, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("subsets.csv")).unwrap();
        let mut rows = csv::Reader::from_reader(text.as_bytes());
        let mut n = 0;
        let mut prev = f64::NEG_INFINITY;
        for rec in rows.records() {
            let rec = rec.unwrap();
            let k: usize = rec[0].parse().unwrap();
            let sampled = engine.state().progress[k].sampled;
            assert_eq!(rec[2].is_empty(), !sampled);
            let est: f64 = rec[5].parse().unwrap();
            assert!(est >= prev - 1e-12, "smoothed estimates must not decrease");
            prev = est;
            n += 1;
        }
        assert_eq!(n, engine.subsets().len());
        assert!(dir.path().join("trajectory.csv").exists());
        assert!(dir.path().join("curve.csv").exists());
    }
}
