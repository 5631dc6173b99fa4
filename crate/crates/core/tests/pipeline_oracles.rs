use std::sync::Arc;

use cvqueue::comms::{Bsm, BSM_PERIOD};
use cvqueue::learning::LabeledSample;
use cvqueue::pipeline::{
    aggregate, bootstrap, observe, read_store, Bootstrap, CorridorConfig, DataStatus, EdgePipeline,
    IntervalAggregate, LearnerConfig, Observation, PipelineMode, RunSinks, Trace, TrainingWindow,
    VerifiedStore,
};
use cvqueue::seed::STREAM_TRAFFIC;
use cvqueue::Error;
use proptest::prelude::*;

fn bsm(id: u64, t: f64, position: f64, speed: f64) -> Bsm {
    Bsm {
        vehicle_id: id,
        timestamp: t,
        position,
        speed,
    }
}

fn corridor(loss: f64) -> CorridorConfig {
    let mut c = CorridorConfig::default();
    c.channel.loss_rate = loss;
    c
}

fn boot() -> Bootstrap {
    bootstrap(&CorridorConfig::default(), &LearnerConfig::default(), 3000.0, 11).unwrap()
}

fn with_data(t_end: f64, speed: f64, sep: f64) -> IntervalAggregate {
    IntervalAggregate {
        t_start: t_end - 10.0,
        t_end,
        avg_speed: speed,
        avg_separation: sep,
        n_cvs_heard: 3,
        status: DataStatus::Data,
    }
}

fn no_data(t_end: f64) -> IntervalAggregate {
    IntervalAggregate {
        avg_speed: 0.0,
        avg_separation: 0.0,
        n_cvs_heard: 0,
        status: DataStatus::NoData,
        ..with_data(t_end, 0.0, 0.0)
    }
}

#[test]
fn aggregate_examples() {
    let a = aggregate(
        &[bsm(1, 9.9, 0.0, 10.0), bsm(2, 9.9, 120.0, 14.0), bsm(3, 9.9, 50.0, 12.0)],
        0.0,
        10.0,
        300.0,
    );
    assert_eq!(a.status, DataStatus::Data);
    assert_eq!(a.n_cvs_heard, 3);
    assert!((a.avg_speed - 12.0).abs() < 1e-12);
    assert!((a.avg_separation - 60.0).abs() < 1e-12);

    // Only the freshest message of each vehicle counts.
    let b = aggregate(&[bsm(4, 9.8, 10.0, 2.0), bsm(4, 9.9, 11.0, 4.0)], 0.0, 10.0, 300.0);
    assert_eq!(b.n_cvs_heard, 1);
    assert_eq!(b.avg_speed, 4.0);
    assert_eq!(b.avg_separation, 300.0);

    let c = aggregate(&[], 0.0, 10.0, 300.0);
    assert_eq!(c.status, DataStatus::NoData);
    assert_eq!(c.features(), None);
}

#[test]
fn pipeline_without_model_fails() {
    let mut p = EdgePipeline::new(PipelineMode::FEEDBACK_FIXED, LearnerConfig::default());
    assert!(matches!(p.run_interval(&with_data(10.0, 5.0, 20.0), true), Err(Error::NotBootstrapped)));
}

#[test]
fn no_data_repeats_previous_prediction() {
    let b = boot();
    let mut p = EdgePipeline::bootstrapped(PipelineMode::NO_FEEDBACK, LearnerConfig::default(), &b);
    let first = p.run_interval(&no_data(10.0), true).unwrap();
    assert!(!first.prediction);
    assert!(first.verified.is_none());
    // Stopped traffic at close spacing is a queue for any sensible model.
    let stopped = p.run_interval(&with_data(20.0, 0.0, 7.5), true).unwrap();
    assert!(stopped.prediction);
    for k in 3..6 {
        let out = p.run_interval(&no_data(10.0 * k as f64), false).unwrap();
        assert!(out.prediction);
        assert!(out.verified.is_none());
    }
    let free = p.run_interval(&with_data(60.0, 13.0, 150.0), false).unwrap();
    assert!(!free.prediction);
}

#[test]
fn bootstrap_covers_epoch_with_both_labels() {
    let b = boot();
    assert_eq!(b.training_set.len(), 300);
    assert_eq!(b.correctness.len(), b.training_set.len());
    assert!(b.training_set.iter().any(|s| s.label));
    assert!(b.training_set.iter().any(|s| !s.label));
    // Fitting accuracy well above the majority class.
    let ok = b.correctness.iter().filter(|&&c| c).count() as f64 / 300.0;
    let queued = b.training_set.iter().filter(|s| s.label).count() as f64 / 300.0;
    assert!(ok > queued.max(1.0 - queued), "{ok} vs {queued}");
}

fn run_with_store(mode: PipelineMode, b: &Bootstrap, obs: &[Observation]) -> (EdgePipeline, Vec<LabeledSample>, Vec<u8>) {
    let mut p = EdgePipeline::bootstrapped(mode, LearnerConfig::default(), b);
    let mut store = VerifiedStore::from_writer(Vec::new(), "memory").unwrap();
    let mut log = Vec::new();
    p.run(
        obs,
        RunSinks {
            store: Some(&mut store),
            window_log: Some(&mut log),
        },
    )
    .unwrap();
    let bytes = store.into_inner();
    let records = read_store(bytes.as_slice()).unwrap();
    let verified: Vec<LabeledSample> = records.iter().map(|r| r.sample()).collect();
    (p, verified, log)
}

fn window_of(p: &EdgePipeline) -> &TrainingWindow {
    p.system_edge().unwrap().window()
}

#[test]
fn frozen_model_under_no_feedback() {
    let b = boot();
    let obs = observe(&corridor(0.08), 0.3, 1800.0, 11, STREAM_TRAFFIC, None).unwrap();
    let (p, verified, _) = run_with_store(PipelineMode::NO_FEEDBACK, &b, &obs);
    assert!(Arc::ptr_eq(p.classifier().unwrap(), &b.classifier));
    assert_eq!(window_of(&p).samples(), b.training_set);
    let with_data = obs.iter().filter(|o| o.aggregate.status == DataStatus::Data).count();
    assert_eq!(verified.len(), with_data);
}

#[test]
fn fixed_window_replays_from_store() {
    let b = boot();
    let obs = observe(&corridor(0.04), 0.2, 2400.0, 11, STREAM_TRAFFIC, None).unwrap();
    let (p, verified, log) = run_with_store(PipelineMode::FEEDBACK_FIXED, &b, &obs);
    let mut all = b.training_set.clone();
    all.extend(verified.iter().copied());
    let expect = &all[all.len() - 300..];
    assert_eq!(window_of(&p).samples(), expect);
    let trained = p.classifier().unwrap();
    assert_eq!(trained.window_len, 300);
    let text = String::from_utf8(log).unwrap();
    assert_eq!(text.lines().count(), obs.len());
    assert!(text.lines().all(|l| l.contains(",fixed,300,")), "{}", text.lines().next().unwrap());
}

#[test]
fn dynamic_window_is_newest_suffix() {
    let b = boot();
    let obs = observe(&corridor(0.16), 0.1, 3600.0, 11, STREAM_TRAFFIC, None).unwrap();
    let (p, verified, _) = run_with_store(PipelineMode::FEEDBACK_DYNAMIC, &b, &obs);
    let mut all = b.training_set.clone();
    all.extend(verified.iter().copied());
    match window_of(&p) {
        TrainingWindow::Dynamic { samples, adwin } => {
            assert_eq!(samples.len(), adwin.len());
            let got: Vec<LabeledSample> = samples.iter().copied().collect();
            assert_eq!(got, all[all.len() - got.len()..]);
        }
        other => panic!("unexpected window {other:?}"),
    }
}

#[test]
fn truth_is_shared_across_modes() {
    let b = boot();
    let obs = observe(&corridor(0.08), 0.4, 1800.0, 11, STREAM_TRAFFIC, None).unwrap();
    let truths: Vec<Vec<bool>> = [PipelineMode::NO_FEEDBACK, PipelineMode::FEEDBACK_FIXED, PipelineMode::FEEDBACK_DYNAMIC]
        .into_iter()
        .map(|m| {
            let mut p = EdgePipeline::bootstrapped(m, LearnerConfig::default(), &b);
            p.run::<Vec<u8>>(&obs, RunSinks::default()).unwrap().truths().collect()
        })
        .collect();
    assert_eq!(truths[0], truths[1]);
    assert_eq!(truths[0], truths[2]);
}

/// With no loss, each aggregate equals a direct recomputation from the
/// messages broadcast in the interval's last BSM slot.
#[test]
fn lossless_aggregate_matches_broadcast_log() {
    let cfg = corridor(0.0);
    let mut log = Vec::new();
    let obs = {
        let mut trace = Trace {
            trajectory: None,
            deliveries: Some(&mut log),
        };
        observe(&cfg, 0.5, 600.0, 3, STREAM_TRAFFIC, Some(&mut trace)).unwrap()
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(log.as_slice());
    let rows: Vec<(f64, u64, f64, f64, u8)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    for o in &obs {
        let slot = o.aggregate.t_end - BSM_PERIOD;
        let heard: Vec<Bsm> = rows
            .iter()
            .filter(|r| (r.0 - slot).abs() < 1e-6 && r.4 == 1)
            .map(|r| bsm(r.1, r.0, r.2, r.3))
            .collect();
        assert_eq!(o.aggregate.n_cvs_heard, heard.len());
        if heard.is_empty() {
            continue;
        }
        let mean = heard.iter().map(|b| b.speed).sum::<f64>() / heard.len() as f64;
        assert!((o.aggregate.avg_speed - mean).abs() < 1e-9);
        let lo = heard.iter().map(|b| b.position).fold(f64::INFINITY, f64::min);
        let hi = heard.iter().map(|b| b.position).fold(f64::NEG_INFINITY, f64::max);
        if heard.len() > 1 {
            assert!((o.aggregate.avg_separation - (hi - lo) / (heard.len() - 1) as f64).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn heard_counts_nested_across_loss(s in 0u64..1000) {
        let low = observe(&corridor(0.02), 0.3, 600.0, s, STREAM_TRAFFIC, None).unwrap();
        let high = observe(&corridor(0.16), 0.3, 600.0, s, STREAM_TRAFFIC, None).unwrap();
        prop_assert_eq!(low.len(), high.len());
        for (a, b) in low.iter().zip(&high) {
            prop_assert_eq!(a.truth, b.truth);
            prop_assert!(a.aggregate.n_cvs_heard >= b.aggregate.n_cvs_heard);
        }
    }
}
