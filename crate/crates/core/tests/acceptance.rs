//! End-to-end acceptance checks. Runs the default scenario matrix, checks
//! the accuracy surface and the component oracles, and prints one line per
//! criterion. Exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use cvqueue::comms::{Bsm, ChannelParams, KeyedChannel, BSM_PERIOD};
use cvqueue::harness::{
    build_report, collect_runs, emit_report, pair_name, AccuracyReport, ModeKind, ScenarioConfig, LOSS_RATES,
    PENETRATIONS,
};
use cvqueue::learning::{fit, predict, FeatureVector, LabeledSample, Normalizer, SvmModel, TrainParams};
use cvqueue::windowing::AdwinState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use common::{best_linear_agreement, NaiveAdwin};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(failures: Vec<String>, ok: String) -> Self {
        if failures.is_empty() {
            Self { pass: true, detail: ok }
        } else {
            Self {
                pass: false,
                detail: failures.join("; "),
            }
        }
    }
}

const MODES: [ModeKind; 3] = ModeKind::ALL;
const FEEDBACK: [ModeKind; 2] = [ModeKind::FeedbackFixed, ModeKind::FeedbackDynamic];

fn acc(r: &AccuracyReport, mode: ModeKind, loss: f64, pen: f64) -> f64 {
    r.cell(mode, loss, pen)
        .unwrap_or_else(|| panic!("missing cell {mode} {loss} {pen}"))
        .mean_accuracy
}

fn pp(x: f64) -> String {
    format!("{:+.2} pp", 100.0 * x)
}

fn penetration_monotonicity(r: &AccuracyReport) -> Outcome {
    let mut bad = Vec::new();
    for mode in MODES {
        for loss in LOSS_RATES {
            for w in PENETRATIONS.windows(2) {
                let step = acc(r, mode, loss, w[1]) - acc(r, mode, loss, w[0]);
                if step < -0.02 {
                    bad.push(format!("{mode} loss {loss} {}->{}: {}", w[0], w[1], pp(step)));
                }
            }
        }
    }
    Outcome::new(bad, "all 72 steps within allowance".into())
}

fn loss_ordering(r: &AccuracyReport) -> Outcome {
    let mut bad = Vec::new();
    let mut min_low = f64::INFINITY;
    for mode in MODES {
        for pen in PENETRATIONS {
            let d = acc(r, mode, 0.02, pen) - acc(r, mode, 0.16, pen);
            let need = if pen <= 0.3 { 0.01 } else { 0.0 };
            if pen <= 0.3 {
                min_low = min_low.min(d);
            }
            if !(d > 0.0 && d >= need) {
                bad.push(format!("{mode} pen {pen}: {}", pp(d)));
            }
        }
    }
    Outcome::new(bad, format!("smallest margin at pen <= 0.3: {}", pp(min_low)))
}

fn feedback_benefit(r: &AccuracyReport) -> Outcome {
    let mut bad = Vec::new();
    let mut summary = Vec::new();
    for fb in FEEDBACK {
        let pair = pair_name(fb, ModeKind::NoFeedback);
        for loss in LOSS_RATES {
            let sig = PENETRATIONS
                .iter()
                .filter(|&&pen| {
                    let c = r.comparison(&pair, loss, pen).expect("comparison");
                    c.p_value < 0.05 && acc(r, fb, loss, pen) > acc(r, ModeKind::NoFeedback, loss, pen)
                })
                .count();
            if sig < 5 {
                bad.push(format!("{fb} loss {loss}: {sig}/7 significant"));
            }
            summary.push(sig);
        }
        let ge = LOSS_RATES
            .iter()
            .flat_map(|&l| PENETRATIONS.iter().map(move |&p| (l, p)))
            .filter(|&(l, p)| acc(r, fb, l, p) >= acc(r, ModeKind::NoFeedback, l, p))
            .count();
        if ge < 26 {
            bad.push(format!("{fb}: ahead in {ge}/28 cells"));
        }
    }
    let min_sig = summary.iter().min().copied().unwrap_or(0);
    Outcome::new(bad, format!("at least {min_sig}/7 significant per loss rate"))
}

fn dynamic_vs_fixed(r: &AccuracyReport) -> Outcome {
    let mut bad = Vec::new();
    let mut widest = 0.0f64;
    for loss in LOSS_RATES {
        for pen in PENETRATIONS {
            let d = acc(r, ModeKind::FeedbackDynamic, loss, pen) - acc(r, ModeKind::FeedbackFixed, loss, pen);
            if pen < 0.5 {
                if d < 0.0 {
                    bad.push(format!("loss {loss} pen {pen}: {}", pp(d)));
                }
            } else {
                widest = widest.max(d.abs());
                if d.abs() > 0.02 {
                    bad.push(format!("loss {loss} pen {pen}: |{}| > 2 pp", pp(d)));
                }
            }
        }
    }
    Outcome::new(bad, format!("largest gap at pen >= 0.5: {:.2} pp", 100.0 * widest))
}

fn diminishing_returns(r: &AccuracyReport) -> Outcome {
    let mut bad = Vec::new();
    for mode in MODES {
        for loss in LOSS_RATES {
            let low = (acc(r, mode, loss, 0.5) - acc(r, mode, loss, 0.1)) / 4.0;
            let high = (acc(r, mode, loss, 1.0) - acc(r, mode, loss, 0.5)) / 5.0;
            if low.is_nan() || low <= high {
                bad.push(format!("{mode} loss {loss}: {} vs {} per 10 pp", pp(low), pp(high)));
            }
        }
    }
    Outcome::new(bad, "steeper below 50% in all 12 curves".into())
}

fn svm_oracles() -> Outcome {
    let mut bad = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let to_samples = |pts: &[[f64; 2]], labels: &[bool]| -> Vec<LabeledSample> {
        pts.iter()
            .zip(labels)
            .map(|(p, &label)| LabeledSample {
                features: FeatureVector::new(p[0], p[1]),
                label,
                t: 0.0,
            })
            .collect()
    };
    let train_acc = |s: &[LabeledSample], c: f64| {
        let (norm, model) = fit(s, &TrainParams { c, ..TrainParams::default() }).unwrap();
        s.iter().filter(|x| predict(&model, &norm, &x.features) == x.label).count() as f64 / s.len() as f64
    };

    let mut separable = 0;
    for _ in 0..50 {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let offset = rng.gen_range(-1.0..1.0);
        let n = rng.gen_range(4..80);
        let (mut pts, mut labels) = (Vec::new(), Vec::new());
        while pts.len() < n || !(labels.contains(&true) && labels.contains(&false)) {
            let p = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let d = angle.cos() * p[0] + angle.sin() * p[1] - offset;
            if d.abs() >= 0.5 {
                pts.push(p);
                labels.push(d > 0.0);
            }
        }
        let s = to_samples(&pts, &labels);
        for c in [10.0, 100.0] {
            separable += 1;
            let a = train_acc(&s, c);
            if a < 1.0 {
                bad.push(format!("separable set n={n} C={c}: {a}"));
            }
        }
    }

    let xor_pts = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
    let xor_labels = [false, false, true, true];
    let xor = to_samples(&xor_pts, &xor_labels);
    if best_linear_agreement(&xor_pts, &xor_labels) != 3 {
        bad.push("XOR oracle".into());
    }
    for c in [0.1, 1.0, 10.0, 100.0] {
        let a = train_acc(&xor, c);
        if a > 0.75 {
            bad.push(format!("XOR C={c}: {a}"));
        }
    }

    let mut mismatches = 0;
    for _ in 0..1000 {
        let model = SvmModel {
            weights: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
            bias: rng.gen_range(-5.0..5.0),
            c: 1.0,
        };
        let norm = Normalizer {
            mean: [rng.gen_range(0.0..15.0), rng.gen_range(0.0..300.0)],
            std: [rng.gen_range(0.1..5.0), rng.gen_range(1.0..100.0)],
        };
        let f = FeatureVector::new(rng.gen_range(0.0..15.0), rng.gen_range(0.0..1000.0));
        let z = [(f.avg_speed - norm.mean[0]) / norm.std[0], (f.avg_separation - norm.mean[1]) / norm.std[1]];
        let sign = model.weights[0] * z[0] + model.weights[1] * z[1] + model.bias > 0.0;
        mismatches += (predict(&model, &norm, &f) != sign) as usize;
    }
    if mismatches > 0 {
        bad.push(format!("{mismatches}/1000 predictions differ from the sign rule"));
    }
    Outcome::new(bad, format!("{separable} separable fits exact, XOR <= 75%, 1000/1000 sign matches"))
}

fn adwin_oracles() -> Outcome {
    let delta = 0.01;
    let mut bad = Vec::new();
    let bit = |rng: &mut ChaCha8Rng, p: f64| rng.gen_bool(p) as u8 as f64;

    for c in [0.0, 0.5, 1.0] {
        let mut a = AdwinState::new(delta);
        let cuts = (0..10_000).filter(|_| a.insert(c)).count();
        if cuts > 0 {
            bad.push(format!("{cuts} cuts on constant {c}"));
        }
    }

    let mut quick = 0;
    let mut worst = 0;
    for s in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut a = AdwinState::new(delta);
        for _ in 0..rng.gen_range(200..1000) {
            a.insert(0.0);
        }
        let delay = (1..=1000).find(|_| a.insert(1.0)).unwrap_or(usize::MAX);
        worst = worst.max(delay);
        quick += (delay <= 100) as usize;
    }
    if quick < 95 {
        bad.push(format!("step detected within 100 in {quick}/100 streams"));
    }

    let n = 1000;
    let mut max_mean = 0.0f64;
    for p in [0.2, 0.5, 0.8] {
        let mut total = 0;
        for s in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + s);
            let mut a = AdwinState::new(delta);
            total += (0..n).filter(|_| a.insert(bit(&mut rng, p))).count();
        }
        let mean = total as f64 / 100.0;
        max_mean = max_mean.max(mean);
        if mean > delta * n as f64 {
            bad.push(format!("p={p}: {mean} false cuts per stream"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut streams: Vec<Vec<f64>> = vec![(0..10_000).map(|_| bit(&mut rng, 0.6)).collect()];
    let mut shifting = Vec::new();
    for (len, p) in [(2000, 0.85), (1000, 0.5), (3000, 0.7), (500, 0.2), (3500, 0.9)] {
        shifting.extend((0..len).map(|_| bit(&mut rng, p)));
    }
    streams.push(shifting);
    let mut disagreements = 0;
    for stream in &streams {
        let mut fast = AdwinState::new(delta);
        let mut naive = NaiveAdwin::new(delta);
        for &v in stream {
            let cut = fast.insert(v) != naive.insert(v);
            disagreements += (cut || fast.len() != naive.values.len()) as usize;
        }
    }
    if disagreements > 0 {
        bad.push(format!("{disagreements} steps differ from the exhaustive oracle"));
    }
    Outcome::new(
        bad,
        format!("no constant-stream cuts, {quick}/100 steps within 100 (worst {worst}), false cuts <= {max_mean:.2}/stream, oracle agrees"),
    )
}

fn channel_fractions() -> Outcome {
    let n = 100_000u64;
    let vehicles = 200u64;
    let bsms: Vec<Bsm> = (0..n)
        .map(|i| Bsm {
            vehicle_id: i % vehicles,
            timestamp: (i / vehicles) as f64 * BSM_PERIOD,
            position: 400.0 + (i % 97) as f64,
            speed: 5.0,
        })
        .collect();
    let mut bad = Vec::new();
    let mut seen = Vec::new();
    for (k, loss) in [0.02, 0.04, 0.08, 0.16].into_iter().enumerate() {
        let params = ChannelParams {
            loss_rate: loss,
            ..ChannelParams::default()
        };
        assert!(bsms.iter().all(|b| params.in_range(b)));
        let delivered = KeyedChannel::new(params, 8 + k as u64).unwrap().transmit(&bsms).len() as u64;
        let b = Binomial::new(1.0 - loss, n).unwrap();
        let (lo, hi) = (b.inverse_cdf(0.005), b.inverse_cdf(0.995));
        if !(lo..=hi).contains(&delivered) {
            bad.push(format!("loss {loss}: {delivered} outside [{lo}, {hi}]"));
        }
        seen.push(format!("{:.4}", delivered as f64 / n as f64));
    }
    Outcome::new(bad, format!("delivered fractions {}", seen.join(", ")))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let cfg = ScenarioConfig::default();
    let start = Instant::now();
    let first = collect_runs(&cfg, None).unwrap_or_else(|f| panic!("matrix run failed: {f}"));
    let report = build_report(&first, cfg.significance_level).unwrap();
    drop(first);
    let second = collect_runs(&cfg, None).unwrap_or_else(|f| panic!("matrix run failed: {f}"));
    let report2 = build_report(&second, cfg.significance_level).unwrap();
    drop(second);
    println!("ran the default matrix twice in {:.0} s", start.elapsed().as_secs_f64());

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let a = emit_report(&report, dirs[0].path()).unwrap();
    let b = emit_report(&report2, dirs[1].path()).unwrap();
    let mut differing = Vec::new();
    for (x, y) in [(&a.accuracy, &b.accuracy), (&a.comparisons, &b.comparisons), (&a.overall, &b.overall)] {
        if fs::read(x).unwrap() != fs::read(y).unwrap() {
            differing.push(x.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    let determinism = Outcome::new(
        differing.into_iter().map(|f| format!("{f} differs")).collect(),
        "accuracy, comparisons and overall CSVs byte-identical".into(),
    );

    let results = [
        ("penetration monotonicity", penetration_monotonicity(&report)),
        ("loss ordering", loss_ordering(&report)),
        ("feedback benefit", feedback_benefit(&report)),
        ("dynamic vs fixed window", dynamic_vs_fixed(&report)),
        ("diminishing returns", diminishing_returns(&report)),
        ("svm oracles", svm_oracles()),
        ("adwin oracles", adwin_oracles()),
        ("channel delivery", channel_fractions()),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {} ({name}): {} {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
