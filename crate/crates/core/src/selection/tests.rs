use super::*;
use crate::oracle::{OracleConfig, SimulatedOracle};
use crate::synth::proportion_workload;

const SIZE: usize = 50;

fn logistic(m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| 1.0 / (1.0 + (-(k as f64 - m as f64 * 0.55) / (m as f64 / 8.0)).exp()))
        .collect()
}

fn fixture(m: usize, seed: u64) -> (Arc<Workload>, Vec<bool>) {
    let (w, t) = proportion_workload(&logistic(m), SIZE, seed);
    (Arc::new(w), t)
}

fn oracle(w: &Workload, truth: &[bool]) -> SimulatedOracle {
    SimulatedOracle::new(
        w.pairs.iter().zip(truth).map(|(p, &t)| (p.pair_id, t)),
        OracleConfig::default(),
    )
    .unwrap()
}

fn req(level: f64) -> QualityRequirement {
    QualityRequirement::new(level, level, 0.9).unwrap()
}

fn config() -> EngineConfig {
    EngineConfig { subset_size: SIZE, ..EngineConfig::default() }
}

fn gt_config() -> EngineConfig {
    EngineConfig { ground_truth_proportions: true, ..config() }
}

fn run(w: &Arc<Workload>, truth: &[bool], level: f64, cfg: EngineConfig) -> (RunOutcome, Engine) {
    let mut e = Engine::new(w.clone(), req(level), cfg, Some(truth)).unwrap();
    let out = drive(&mut e, &mut oracle(w, truth)).unwrap();
    (out, e)
}

#[test]
fn ground_truth_mode_meets_requirement() {
    let (w, t) = fixture(40, 1);
    for level in [0.8, 0.9, 0.95] {
        let (out, e) = run(&w, &t, level, gt_config());
        assert!(out.report.success, "level {level}: {:?}", out.report);
        let q = true_quality(&out.predicted, &t);
        assert!(q.precision >= level && q.recall >= level, "level {level}: {q:?}");
        assert_eq!(out.report.sampling_cost, 0);
        e.state().check_invariants().unwrap();
    }
}

#[test]
fn sampled_run_finishes_with_consistent_costs() {
    let (w, t) = fixture(60, 2);
    let (out, e) = run(&w, &t, 0.85, config());
    assert!(e.is_done());
    let plan = e.sampling_plan().unwrap();
    let sampled: usize = plan.subset_indices.iter().map(|&k| e.subsets()[k].len()).sum();
    assert_eq!(out.report.sampling_cost, sampled);
    assert_eq!(e.state().human_count(), out.report.sampling_cost + out.report.dh_cost);
    assert_eq!(out.log[0].kind, StepKind::Sampling);
    assert_eq!(out.log.len(), out.interactions);
    let total: usize = out.log.iter().map(|r| r.batch_size).sum();
    assert_eq!(total, out.report.human_cost());
    let last = out.log.last().unwrap();
    assert_eq!(last.precision_lower, out.report.precision_lower);
    assert_eq!(last.dh_cost, out.report.dh_cost);
    e.state().check_invariants().unwrap();
}

#[test]
fn done_is_sticky() {
    let (w, t) = fixture(30, 3);
    let (_, mut e) = run(&w, &t, 0.8, gt_config());
    assert_eq!(e.next_request().unwrap(), Request::Done);
    assert_eq!(e.next_request().unwrap(), Request::Done);
    assert!(matches!(e.submit(&[]), Err(Error::NoPendingBatch)));
}

#[test]
fn first_iterations_alternate_from_unmatching_side() {
    let (w, t) = fixture(40, 4);
    let (out, _) = run(&w, &t, 0.97, gt_config());
    let selects: Vec<&StepRecord> = out.log.iter().filter(|r| r.kind == StepKind::Select).collect();
    assert_eq!(selects[0].side, Some(Side::Minus));
    assert_eq!(selects[0].iterations, 0);
    let second = selects.iter().find(|r| r.iterations >= 1 && r.kind == StepKind::Select).unwrap();
    let before = out.log.iter().take_while(|r| r.step < second.step).last().unwrap();
    if before.precision_lower < 0.97 && before.recall_lower < 0.97 {
        assert_eq!(second.side, Some(Side::Plus));
    }
}

#[test]
fn unit_batches_reproduce_realtime() {
    let (w, t) = fixture(60, 5);
    let (rt, _) = run(&w, &t, 0.9, config());
    let cfg = EngineConfig { mode: Mode::Batch, max_batch: Some(1), ..config() };
    let (b, _) = run(&w, &t, 0.9, cfg);
    assert_eq!(rt.predicted, b.predicted);
    assert_eq!(rt.report, b.report);
    assert_eq!(rt.interactions, b.interactions);
}

#[test]
fn batch_mode_needs_fewer_interactions() {
    let (w, t) = fixture(60, 6);
    let (rt, _) = run(&w, &t, 0.9, gt_config());
    let (b, _) = run(&w, &t, 0.9, EngineConfig { mode: Mode::Batch, ..gt_config() });
    assert!(b.report.success);
    assert!(b.interactions < rt.interactions, "{} vs {}", b.interactions, rt.interactions);
    for r in &b.log {
        if r.kind == StepKind::Select {
            assert!(r.batch_size >= 1);
        }
    }
}

#[test]
fn max_batch_caps_every_batch() {
    let (w, t) = fixture(60, 6);
    let (b, _) = run(&w, &t, 0.9, EngineConfig { mode: Mode::Batch, max_batch: Some(7), ..gt_config() });
    assert!(b.log.iter().all(|r| r.batch_size <= 7));
}

#[test]
fn mismatched_labels_are_rejected_without_side_effects() {
    let (w, t) = fixture(40, 7);
    let mut e = Engine::new(w.clone(), req(0.9), gt_config(), Some(&t)).unwrap();
    let Request::Batch(ids) = e.next_request().unwrap() else { panic!("expected a batch") };
    assert_eq!(ids.len(), 1);
    let before = e.snapshot();
    let other = w.pairs.iter().map(|p| p.pair_id).find(|p| !ids.contains(p)).unwrap();
    assert!(matches!(e.submit(&[(other, true)]), Err(Error::LabelMismatch(_))));
    assert!(matches!(e.submit(&[(u64::MAX, true)]), Err(Error::UnknownPair(_))));
    assert!(matches!(e.submit(&[]), Err(Error::LabelMismatch(_))));
    assert!(matches!(e.submit(&[(ids[0], true), (ids[0], true)]), Err(Error::LabelMismatch(_))));
    assert_eq!(e.snapshot(), before);
    assert_eq!(e.pending(), Some(ids.clone()));
    assert!(e.submit(&[(ids[0], false)]).is_ok());
}

#[test]
fn pending_batch_blocks_new_requests() {
    let (w, t) = fixture(40, 8);
    let mut e = Engine::new(w, req(0.9), config(), Some(&t)).unwrap();
    assert!(matches!(e.submit(&[]), Err(Error::NoPendingBatch)));
    let Request::Batch(ids) = e.next_request().unwrap() else { panic!("expected a batch") };
    assert_eq!(e.snapshot().phase, Phase::Sampling);
    assert_eq!(e.snapshot().pending, ids.len());
    assert!(matches!(e.next_request(), Err(Error::BatchPending)));
}

#[test]
fn humo_labels_whole_subsets() {
    let (w, t) = fixture(40, 9);
    let cfg = EngineConfig { strategy: Strategy::Humo, ..gt_config() };
    let (out, _) = run(&w, &t, 0.9, cfg);
    assert!(out.report.success);
    for r in out.log.iter().filter(|r| r.kind == StepKind::Subset) {
        assert_eq!(r.batch_size, SIZE);
    }
}

#[test]
fn sweep_stops_once_the_requirement_holds() {
    // the candidate subset is poorer than its neighbour, so the first label
    // ends a short iteration and triggers a sweep of that subset
    let mut props = vec![0.02; 8];
    props.extend([0.45, 0.40]);
    props.extend([0.95; 10]);
    let (w, t) = proportion_workload(&props, SIZE, 4);
    let w = Arc::new(w);
    let req = QualityRequirement::new(0.9, 0.92, 0.9).unwrap();
    let mut e = Engine::new(w.clone(), req, gt_config(), Some(&t)).unwrap();
    let out = drive(&mut e, &mut oracle(&w, &t)).unwrap();
    assert!(out.report.success);
    assert!(out.log.iter().any(|r| r.kind == StepKind::Sweep));
    assert!(out.report.dh_cost < SIZE, "swept {} pairs", out.report.dh_cost);
    let swept: Vec<_> = out.log.iter().filter(|r| r.kind == StepKind::Sweep).collect();
    assert!(!swept.last().unwrap().expanded);
}

#[test]
fn rhumo_is_cheaper_than_humo_with_exact_proportions() {
    let m = 30;
    let steep: Vec<f64> = (0..m)
        .map(|k| 1.0 / (1.0 + (-(k as f64 - m as f64 * 0.8) / 1.5).exp()))
        .collect();
    let (w, t) = proportion_workload(&steep, 200, 10);
    let w = Arc::new(w);
    let cfg = EngineConfig { subset_size: 200, ..gt_config() };
    let (rh, _) = run(&w, &t, 0.9, cfg.clone());
    let (hu, _) = run(&w, &t, 0.9, EngineConfig { strategy: Strategy::Humo, ..cfg });
    assert!(rh.report.success && hu.report.success);
    assert!(rh.report.dh_cost < hu.report.dh_cost, "{} vs {}", rh.report.dh_cost, hu.report.dh_cost);
}

#[test]
fn budget_baselines_are_deterministic_and_spend_the_budget() {
    let (w, t) = fixture(60, 11);
    for strategy in [Strategy::Rand, Strategy::Cos] {
        let cfg = EngineConfig { strategy, budget: 120, ..config() };
        let a = run_baseline(w.clone(), Some(&t), req(0.9), cfg.clone(), &mut oracle(&w, &t)).unwrap();
        let b = run_baseline(w.clone(), Some(&t), req(0.9), cfg, &mut oracle(&w, &t)).unwrap();
        assert_eq!(a.predicted, b.predicted);
        assert_eq!(a.report.dh_cost, 120);
        assert_eq!(a.interactions, 2);
    }
}

#[test]
fn zero_budget_leaves_machine_labels() {
    let (w, t) = fixture(60, 12);
    let cfg = EngineConfig { strategy: Strategy::Rand, budget: 0, ..config() };
    let mut e = Engine::new(w.clone(), req(0.9), cfg, Some(&t)).unwrap();
    let out = drive(&mut e, &mut oracle(&w, &t)).unwrap();
    assert_eq!(out.report.dh_cost, 0);
    assert_eq!(out.interactions, 1);
    for (pos, &i) in e.order().iter().enumerate() {
        let k = e.state().subset_of(pos);
        if !e.state().progress[k].sampled {
            assert_eq!(out.predicted[i], e.state().side_of(k) == Side::Plus);
        }
    }
}

#[test]
fn baseline_runner_rejects_rhumo() {
    let (w, t) = fixture(30, 13);
    assert!(run_baseline(w.clone(), Some(&t), req(0.9), config(), &mut oracle(&w, &t)).is_err());
}

#[test]
fn construction_errors() {
    let (w, t) = fixture(30, 14);
    assert!(matches!(Engine::new(w.clone(), req(0.9), gt_config(), None), Err(Error::Config(_))));
    assert!(Engine::new(w.clone(), req(0.9), gt_config(), Some(&t[..10])).is_err());
    let bad = EngineConfig { max_batch: Some(0), ..config() };
    assert!(Engine::new(w.clone(), req(0.9), bad, Some(&t)).is_err());
    let empty = Arc::new(w.restrict(&[]));
    assert!(matches!(Engine::new(empty, req(0.9), config(), None), Err(Error::EmptyWorkload)));
}

#[test]
fn noisy_oracle_still_terminates() {
    let (w, t) = fixture(40, 15);
    let mut o = SimulatedOracle::new(
        w.pairs.iter().zip(&t).map(|(p, &x)| (p.pair_id, x)),
        OracleConfig { flip_probability: 0.1, seed: 3, ..OracleConfig::default() },
    )
    .unwrap();
    let mut e = Engine::new(w.clone(), req(0.9), config(), Some(&t)).unwrap();
    let out = drive(&mut e, &mut o).unwrap();
    assert!(e.is_done());
    assert!(o.flipped() > 0);
    assert_eq!(o.answered(), out.report.human_cost());
}

#[test]
fn strategy_names_round_trip() {
    for s in [Strategy::Rhumo, Strategy::Humo, Strategy::Rand, Strategy::Cos] {
        assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
    }
    assert!("nope".parse::<Strategy>().is_err());
}

#[test]
fn binomial_noise_scale_peaks_at_one_half() {
    assert!((binomial_noise_scale(100, 200) - 1.0).abs() < 1e-12);
    let empty = binomial_noise_scale(0, 200);
    assert!(empty > 0.0 && empty < 0.011);
    assert!((empty - binomial_noise_scale(200, 200)).abs() < 1e-12);
}
