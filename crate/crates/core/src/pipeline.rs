//! Edge-centric queue prediction pipeline.
//!
//! Three stages exchange explicit messages once per aggregation interval:
//!
//! * the **mobile edge** (connected vehicles) broadcasts BSMs through the
//!   channel ([`observe`]);
//! * the **fixed edge** aggregates delivered BSMs, predicts with the current
//!   classifier and verifies the prediction against ground truth
//!   ([`FixedEdge`]);
//! * the **system edge** maintains the training window and refits the
//!   classifier ([`SystemEdge`]), handing a new immutable classifier back to
//!   the fixed edge.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::comms::{self, Bsm, ChannelParams, KeyedChannel, BSM_PERIOD};
use crate::error::{Error, Result};
use crate::learning::{self, FeatureVector, LabeledSample, Normalizer, SvmModel, TrainParams};
use crate::seed;
use crate::sim::{self, CarFollowingParams, QueueLabel, SignalState, World};
use crate::windowing::{self, AdwinState, FixedWindow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataStatus {
    Data,
    NoData,
}

impl DataStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DataStatus::Data => "data",
            DataStatus::NoData => "no_data",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalAggregate {
    pub t_start: f64,
    pub t_end: f64,
    pub avg_speed: f64,
    pub avg_separation: f64,
    pub n_cvs_heard: usize,
    pub status: DataStatus,
}

impl IntervalAggregate {
    pub fn features(&self) -> Option<FeatureVector> {
        match self.status {
            DataStatus::Data => Some(FeatureVector::new(self.avg_speed, self.avg_separation)),
            DataStatus::NoData => None,
        }
    }
}

/// Aggregates the latest BSM of every distinct CV heard.
///
/// Separation is the mean gap between consecutive CVs ordered by position;
/// with a single CV it falls back to `separation_fallback`.
pub fn aggregate(
    bsms: &[Bsm],
    t_start: f64,
    t_end: f64,
    separation_fallback: f64,
) -> IntervalAggregate {
    let mut latest: HashMap<u64, &Bsm> = HashMap::with_capacity(bsms.len());
    for b in bsms {
        latest
            .entry(b.vehicle_id)
            .and_modify(|cur| {
                if b.timestamp > cur.timestamp {
                    *cur = b;
                }
            })
            .or_insert(b);
    }
    let mut heard: Vec<&Bsm> = latest.into_values().collect();
    let n = heard.len();
    if n == 0 {
        return IntervalAggregate {
            t_start,
            t_end,
            avg_speed: 0.0,
            avg_separation: 0.0,
            n_cvs_heard: 0,
            status: DataStatus::NoData,
        };
    }
    // Sort by position, ties by id, so the result is independent of hash order.
    heard.sort_by(|a, b| {
        a.position
            .total_cmp(&b.position)
            .then(a.vehicle_id.cmp(&b.vehicle_id))
    });
    let avg_speed = heard.iter().map(|b| b.speed).sum::<f64>() / n as f64;
    let avg_separation = if n == 1 {
        separation_fallback
    } else {
        (heard[n - 1].position - heard[0].position) / (n - 1) as f64
    };
    IntervalAggregate {
        t_start,
        t_end,
        avg_speed,
        avg_separation,
        n_cvs_heard: n,
        status: DataStatus::Data,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    Fixed,
    Dynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineMode {
    pub feedback: bool,
    pub window_policy: WindowPolicy,
    pub retrain_every: usize,
}

impl PipelineMode {
    pub const NO_FEEDBACK: Self = Self {
        feedback: false,
        window_policy: WindowPolicy::Fixed,
        retrain_every: 1,
    };
    pub const FEEDBACK_FIXED: Self = Self {
        feedback: true,
        window_policy: WindowPolicy::Fixed,
        retrain_every: 1,
    };
    pub const FEEDBACK_DYNAMIC: Self = Self {
        feedback: true,
        window_policy: WindowPolicy::Dynamic,
        retrain_every: 1,
    };

    pub fn name(&self) -> &'static str {
        match (self.feedback, self.window_policy) {
            (false, _) => "no_feedback",
            (true, WindowPolicy::Fixed) => "feedback_fixed",
            (true, WindowPolicy::Dynamic) => "feedback_dynamic",
        }
    }
}

/// Training-window settings owned by the system edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub svm: TrainParams,
    pub fixed_capacity: usize,
    pub adwin_delta: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            svm: TrainParams::default(),
            fixed_capacity: 300,
            adwin_delta: 0.01,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.svm.validate()?;
        if self.fixed_capacity == 0 {
            return Err(Error::InvalidConfig("fixed_capacity must be > 0".into()));
        }
        if !(self.adwin_delta > 0.0 && self.adwin_delta < 1.0) {
            return Err(Error::InvalidConfig("adwin_delta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// An immutable normalizer/model pair produced by one training round.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub normalizer: Normalizer,
    pub model: SvmModel,
    pub trained_at: f64,
    pub window_len: usize,
}

impl Classifier {
    pub fn train(samples: &[LabeledSample], params: &TrainParams, trained_at: f64) -> Result<Self> {
        let (normalizer, model) = learning::fit(samples, params)?;
        Ok(Self {
            normalizer,
            model,
            trained_at,
            window_len: samples.len(),
        })
    }

    pub fn predict(&self, features: &FeatureVector) -> QueueLabel {
        learning::predict(&self.model, &self.normalizer, features)
    }

    pub fn checkpoint(&self) -> learning::Checkpoint {
        learning::Checkpoint {
            timestamp: self.trained_at,
            window_len: self.window_len,
            model: self.model,
            normalizer: self.normalizer,
        }
    }
}

/// Verification message sent from the fixed edge to the system edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifiedSample {
    /// Features with the ground-truth label.
    pub sample: LabeledSample,
    pub prediction: QueueLabel,
}

impl VerifiedSample {
    pub fn correct(&self) -> bool {
        self.prediction == self.sample.label
    }
}

/// Roadside prediction stage. Holds a shared, read-only classifier.
#[derive(Clone, Debug, Default)]
pub struct FixedEdge {
    classifier: Option<Arc<Classifier>>,
    last_prediction: QueueLabel,
}

impl FixedEdge {
    pub fn install(&mut self, classifier: Arc<Classifier>) {
        self.classifier = Some(classifier);
    }

    pub fn classifier(&self) -> Option<&Arc<Classifier>> {
        self.classifier.as_ref()
    }

    /// Predicts for one interval. Intervals without data repeat the
    /// previous prediction (no queue before the first one).
    pub fn predict(&mut self, aggregate: &IntervalAggregate) -> Result<QueueLabel> {
        let classifier = self.classifier.as_ref().ok_or(Error::NotBootstrapped)?;
        if let Some(f) = aggregate.features() {
            self.last_prediction = classifier.predict(&f);
        }
        Ok(self.last_prediction)
    }

    pub fn verify(
        &self,
        aggregate: &IntervalAggregate,
        prediction: QueueLabel,
        truth: QueueLabel,
    ) -> Option<VerifiedSample> {
        aggregate.features().map(|features| VerifiedSample {
            sample: LabeledSample {
                features,
                label: truth,
                t: aggregate.t_end,
            },
            prediction,
        })
    }
}

#[derive(Clone, Debug)]
pub enum TrainingWindow {
    /// No feedback: the bootstrap set is never touched.
    Frozen(Vec<LabeledSample>),
    Fixed(FixedWindow),
    /// The ADWIN window is index-aligned with the newest samples of the
    /// training set; a cut truncates the set to the surviving length.
    Dynamic {
        samples: VecDeque<LabeledSample>,
        adwin: AdwinState,
    },
}

impl TrainingWindow {
    pub fn samples(&self) -> Vec<LabeledSample> {
        match self {
            TrainingWindow::Frozen(s) => s.clone(),
            TrainingWindow::Fixed(w) => w.samples().iter().copied().collect(),
            TrainingWindow::Dynamic { samples, .. } => samples.iter().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TrainingWindow::Frozen(s) => s.len(),
            TrainingWindow::Fixed(w) => w.len(),
            TrainingWindow::Dynamic { samples, .. } => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What the system edge did with one interval's verification message.
#[derive(Clone, Debug, Default)]
pub struct SystemUpdate {
    pub cut: bool,
    pub retrained: Option<Arc<Classifier>>,
}

/// Backend stage: owns the training window and fits new classifiers.
#[derive(Clone, Debug)]
pub struct SystemEdge {
    window: TrainingWindow,
    params: TrainParams,
    retrain_every: usize,
    since_retrain: usize,
    dirty: bool,
}

impl SystemEdge {
    pub fn new(mode: &PipelineMode, learner: &LearnerConfig, bootstrap: &Bootstrap) -> Self {
        let window = if !mode.feedback {
            TrainingWindow::Frozen(bootstrap.training_set.clone())
        } else {
            match mode.window_policy {
                WindowPolicy::Fixed => {
                    let mut w = FixedWindow::new(learner.fixed_capacity);
                    w.update(bootstrap.training_set.iter().copied());
                    TrainingWindow::Fixed(w)
                }
                WindowPolicy::Dynamic => {
                    let mut adwin = AdwinState::new(learner.adwin_delta);
                    for &ok in &bootstrap.correctness {
                        adwin.insert(ok as u8 as f64);
                    }
                    let mut samples: VecDeque<_> = bootstrap.training_set.iter().copied().collect();
                    windowing::adwin_sync(&mut samples, adwin.len());
                    TrainingWindow::Dynamic { samples, adwin }
                }
            }
        };
        Self {
            window,
            params: learner.svm,
            retrain_every: mode.retrain_every.max(1),
            since_retrain: 0,
            dirty: false,
        }
    }

    pub fn window(&self) -> &TrainingWindow {
        &self.window
    }

    /// Folds one interval's verification (if the interval had data) into
    /// the training window and refits when the schedule says so.
    pub fn ingest(&mut self, verified: Option<&VerifiedSample>, now: f64) -> Result<SystemUpdate> {
        let mut update = SystemUpdate::default();
        if let Some(v) = verified {
            match &mut self.window {
                TrainingWindow::Frozen(_) => {}
                TrainingWindow::Fixed(w) => {
                    w.update([v.sample]);
                    self.dirty = true;
                }
                TrainingWindow::Dynamic { samples, adwin } => {
                    samples.push_back(v.sample);
                    if adwin.insert(v.correct() as u8 as f64) {
                        windowing::adwin_sync(samples, adwin.len());
                        update.cut = true;
                    }
                    self.dirty = true;
                }
            }
        }
        if matches!(self.window, TrainingWindow::Frozen(_)) {
            return Ok(update);
        }
        self.since_retrain += 1;
        if self.since_retrain >= self.retrain_every && self.dirty {
            let samples = self.window.samples();
            update.retrained = Some(Arc::new(Classifier::train(&samples, &self.params, now)?));
            self.since_retrain = 0;
            self.dirty = false;
        }
        Ok(update)
    }
}

/// Initial classifier and training set.
#[derive(Clone, Debug)]
pub struct Bootstrap {
    pub classifier: Arc<Classifier>,
    pub training_set: Vec<LabeledSample>,
    /// Whether the initial classifier labels each training sample correctly.
    pub correctness: Vec<bool>,
    pub epoch_s: f64,
}

impl Bootstrap {
    pub fn from_samples(training_set: Vec<LabeledSample>, params: &TrainParams, epoch_s: f64) -> Result<Self> {
        let first = training_set.first().ok_or(Error::EmptyTrainingSet)?.label;
        if training_set.iter().all(|s| s.label == first) {
            return Err(Error::DegenerateBootstrap { attempts: 1 });
        }
        let classifier = Classifier::train(&training_set, params, 0.0)?;
        let correctness = training_set
            .iter()
            .map(|s| classifier.predict(&s.features) == s.label)
            .collect();
        Ok(Self {
            classifier: Arc::new(classifier),
            training_set,
            correctness,
            epoch_s,
        })
    }
}

pub const MAX_BOOTSTRAP_ATTEMPTS: usize = 3;

/// Runs a bootstrap epoch at full penetration and no loss and trains the
/// initial classifier on ground-truth labels. An epoch with a single class
/// is retried at twice the length.
pub fn bootstrap(corridor: &CorridorConfig, learner: &LearnerConfig, epoch_s: f64, seed: u64) -> Result<Bootstrap> {
    let mut epoch = epoch_s;
    for _ in 0..MAX_BOOTSTRAP_ATTEMPTS {
        let lossless = CorridorConfig {
            channel: ChannelParams {
                loss_rate: 0.0,
                ..corridor.channel.clone()
            },
            ..corridor.clone()
        };
        let obs = observe(&lossless, 1.0, epoch, seed, seed::STREAM_BOOTSTRAP, None)?;
        let samples: Vec<LabeledSample> = obs
            .iter()
            .filter_map(|o| {
                o.aggregate.features().map(|features| LabeledSample {
                    features,
                    label: o.truth,
                    t: o.aggregate.t_end,
                })
            })
            .collect();
        match Bootstrap::from_samples(samples, &learner.svm, epoch) {
            Err(Error::DegenerateBootstrap { .. }) | Err(Error::EmptyTrainingSet) => epoch *= 2.0,
            other => return other,
        }
    }
    Err(Error::DegenerateBootstrap {
        attempts: MAX_BOOTSTRAP_ATTEMPTS,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimelineRecord {
    pub interval_idx: usize,
    pub prediction: QueueLabel,
    pub truth: QueueLabel,
    pub aggregate: IntervalAggregate,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timeline {
    pub records: Vec<TimelineRecord>,
}

pub const TIMELINE_HEADER: &str = "interval_idx,prediction,truth,status,n_cvs_heard";

impl Timeline {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn predictions(&self) -> impl Iterator<Item = QueueLabel> + '_ {
        self.records.iter().map(|r| r.prediction)
    }

    pub fn truths(&self) -> impl Iterator<Item = QueueLabel> + '_ {
        self.records.iter().map(|r| r.truth)
    }

    /// Concatenates timelines, renumbering intervals.
    pub fn concat<'a, I: IntoIterator<Item = &'a Timeline>>(parts: I) -> Timeline {
        let mut records = Vec::new();
        for part in parts {
            for r in &part.records {
                records.push(TimelineRecord {
                    interval_idx: records.len(),
                    ..r.clone()
                });
            }
        }
        Timeline { records }
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{TIMELINE_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.interval_idx,
                r.prediction as u8,
                r.truth as u8,
                r.aggregate.status.as_str(),
                r.aggregate.n_cvs_heard
            )?;
        }
        Ok(())
    }
}

/// One row of the verified-sample store.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoreRecord {
    pub t_end: f64,
    pub features: FeatureVector,
    pub truth: QueueLabel,
    pub prediction: QueueLabel,
}

impl StoreRecord {
    pub fn correct(&self) -> bool {
        self.truth == self.prediction
    }

    pub fn sample(&self) -> LabeledSample {
        LabeledSample {
            features: self.features,
            label: self.truth,
            t: self.t_end,
        }
    }
}

impl From<&VerifiedSample> for StoreRecord {
    fn from(v: &VerifiedSample) -> Self {
        Self {
            t_end: v.sample.t,
            features: v.sample.features,
            truth: v.sample.label,
            prediction: v.prediction,
        }
    }
}

pub const STORE_HEADER: &str = "t_end,avg_speed_mps,avg_separation_m,truth,prediction,correct";

/// Append-only CSV of verified samples kept at the fixed edge.
pub struct VerifiedStore<W: Write> {
    sink: W,
    path: PathBuf,
    len: usize,
}

impl VerifiedStore<BufWriter<File>> {
    /// Opens `path` for appending, writing the header if the file is new.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let fresh = std::fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::storage(&path, e))?;
        let mut store = Self {
            sink: BufWriter::new(file),
            path,
            len: 0,
        };
        if fresh {
            writeln!(store.sink, "{STORE_HEADER}").map_err(|e| Error::storage(&store.path, e))?;
        }
        Ok(store)
    }
}

impl<W: Write> VerifiedStore<W> {
    pub fn from_writer(mut sink: W, label: impl Into<PathBuf>) -> Result<Self> {
        let path = label.into();
        writeln!(sink, "{STORE_HEADER}").map_err(|e| Error::storage(&path, e))?;
        Ok(Self { sink, path, len: 0 })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, record: &StoreRecord) -> Result<()> {
        writeln!(
            self.sink,
            "{},{},{},{},{},{}",
            record.t_end,
            record.features.avg_speed,
            record.features.avg_separation,
            record.truth as u8,
            record.prediction as u8,
            record.correct() as u8
        )
        .map_err(|e| Error::storage(&self.path, e))?;
        self.len += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.sink.flush().map_err(|e| Error::storage(&self.path, e))
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

#[derive(Deserialize)]
struct StoreRow {
    t_end: f64,
    avg_speed_mps: f64,
    avg_separation_m: f64,
    truth: u8,
    prediction: u8,
    correct: u8,
}

fn bit(v: u8) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Parse(format!("expected 0/1, got {v}"))),
    }
}

/// Parses a verified-sample store.
pub fn read_store<R: Read>(reader: R) -> Result<Vec<StoreRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != STORE_HEADER {
        return Err(Error::Parse("missing store header".into()));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<StoreRow>() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        let record = StoreRecord {
            t_end: row.t_end,
            features: FeatureVector::new(row.avg_speed_mps, row.avg_separation_m),
            truth: bit(row.truth)?,
            prediction: bit(row.prediction)?,
        };
        if bit(row.correct)? != record.correct() {
            return Err(Error::Parse(format!("inconsistent correct flag at t_end {}", row.t_end)));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_store_file(path: impl AsRef<Path>) -> Result<Vec<StoreRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::storage(path, e))?;
    read_store(BufReader::new(file))
}

/// Optional outputs of [`EdgePipeline::run`].
pub struct RunSinks<'a, W: Write> {
    pub store: Option<&'a mut VerifiedStore<W>>,
    pub window_log: Option<&'a mut dyn Write>,
}

impl<W: Write> Default for RunSinks<'_, W> {
    fn default() -> Self {
        Self {
            store: None,
            window_log: None,
        }
    }
}

/// Result of one interval of [`EdgePipeline::run_interval`].
#[derive(Clone, Debug)]
pub struct IntervalOutcome {
    pub prediction: QueueLabel,
    pub verified: Option<VerifiedSample>,
    pub cut: bool,
    pub retrained: bool,
}

/// The per-scenario pipeline: fixed edge plus system edge.
#[derive(Clone, Debug)]
pub struct EdgePipeline {
    pub mode: PipelineMode,
    fixed: FixedEdge,
    system: Option<SystemEdge>,
    learner: LearnerConfig,
    interval_idx: usize,
}

impl EdgePipeline {
    /// A pipeline without a model; [`EdgePipeline::run_interval`] fails
    /// until [`EdgePipeline::install_bootstrap`] is called.
    pub fn new(mode: PipelineMode, learner: LearnerConfig) -> Self {
        Self {
            mode,
            fixed: FixedEdge::default(),
            system: None,
            learner,
            interval_idx: 0,
        }
    }

    pub fn bootstrapped(mode: PipelineMode, learner: LearnerConfig, bootstrap: &Bootstrap) -> Self {
        let mut p = Self::new(mode, learner);
        p.install_bootstrap(bootstrap);
        p
    }

    pub fn install_bootstrap(&mut self, bootstrap: &Bootstrap) {
        self.fixed.install(Arc::clone(&bootstrap.classifier));
        self.system = Some(SystemEdge::new(&self.mode, &self.learner, bootstrap));
    }

    pub fn classifier(&self) -> Option<&Arc<Classifier>> {
        self.fixed.classifier()
    }

    pub fn system_edge(&self) -> Option<&SystemEdge> {
        self.system.as_ref()
    }

    pub fn run_interval(&mut self, aggregate: &IntervalAggregate, truth: QueueLabel) -> Result<IntervalOutcome> {
        let system = self.system.as_mut().ok_or(Error::NotBootstrapped)?;
        let prediction = self.fixed.predict(aggregate)?;
        let verified = self.fixed.verify(aggregate, prediction, truth);
        let mut outcome = IntervalOutcome {
            prediction,
            verified,
            cut: false,
            retrained: false,
        };
        if self.mode.feedback {
            let update = system.ingest(outcome.verified.as_ref(), aggregate.t_end)?;
            outcome.cut = update.cut;
            if let Some(c) = update.retrained {
                self.fixed.install(c);
                outcome.retrained = true;
            }
        }
        self.interval_idx += 1;
        Ok(outcome)
    }

    /// Runs the pipeline over a sequence of observations, feeding the
    /// optional sinks as it goes.
    pub fn run<W: Write>(&mut self, observations: &[Observation], mut sinks: RunSinks<'_, W>) -> Result<Timeline> {
        let mut timeline = Timeline {
            records: Vec::with_capacity(observations.len()),
        };
        let policy = match (self.mode.feedback, self.mode.window_policy) {
            (false, _) => "frozen",
            (true, WindowPolicy::Fixed) => "fixed",
            (true, WindowPolicy::Dynamic) => "dynamic",
        };
        for (idx, obs) in observations.iter().enumerate() {
            let out = self.run_interval(&obs.aggregate, obs.truth)?;
            if let (Some(s), Some(v)) = (sinks.store.as_deref_mut(), out.verified.as_ref()) {
                s.append(&StoreRecord::from(v))?;
            }
            if let Some(w) = sinks.window_log.as_deref_mut() {
                let len = self.system.as_ref().map_or(0, |s| s.window().len());
                windowing::write_window_row(w, obs.aggregate.t_end, policy, len, out.cut)
                    .map_err(|e| Error::storage("window log", e))?;
            }
            timeline.records.push(TimelineRecord {
                interval_idx: idx,
                prediction: out.prediction,
                truth: obs.truth,
                aggregate: obs.aggregate,
            });
        }
        Ok(timeline)
    }
}

/// Traffic, channel and fixed-edge aggregation settings of a corridor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorConfig {
    pub car_following: CarFollowingParams,
    pub signal: SignalState,
    pub corridor_length: f64,
    /// Mean arrival rate in vehicles per second, used when
    /// `demand_profile` is empty.
    pub demand_rate: f64,
    /// Piecewise-constant arrival rates, repeated for the whole run.
    pub demand_profile: Vec<DemandSegment>,
    /// Simulated time before the first aggregation interval.
    pub warmup_s: f64,
    pub aggregation_interval_s: f64,
    /// Trailing part of each interval whose BSMs the fixed edge aggregates.
    pub sampling_window_s: f64,
    pub queue_speed_threshold: f64,
    pub channel: ChannelParams,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            car_following: CarFollowingParams::default(),
            signal: SignalState::default(),
            corridor_length: 1000.0,
            demand_rate: 0.3,
            demand_profile: vec![
                DemandSegment {
                    duration_s: 1200.0,
                    rate: 0.15,
                },
                DemandSegment {
                    duration_s: 1200.0,
                    rate: 0.3,
                },
            ],
            warmup_s: 300.0,
            aggregation_interval_s: 10.0,
            sampling_window_s: BSM_PERIOD,
            queue_speed_threshold: sim::FIVE_MPH,
            channel: ChannelParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSegment {
    pub duration_s: f64,
    pub rate: f64,
}

fn whole_multiple(value: f64, unit: f64, what: &str) -> Result<u64> {
    let k = (value / unit).round();
    if k < 1.0 || (k * unit - value).abs() > 1e-9 * value.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "{what} ({value}) must be a positive multiple of {unit}"
        )));
    }
    Ok(k as u64)
}

impl CorridorConfig {
    pub fn validate(&self) -> Result<()> {
        self.car_following.validate()?;
        self.signal.validate()?;
        self.channel.validate()?;
        if !(self.demand_rate.is_finite() && self.demand_rate >= 0.0) {
            return Err(Error::InvalidConfig("demand_rate must be >= 0".into()));
        }
        for seg in &self.demand_profile {
            if !(seg.duration_s > 0.0 && seg.rate.is_finite() && seg.rate >= 0.0) {
                return Err(Error::InvalidConfig(format!("bad demand segment {seg:?}")));
            }
        }
        if self.queue_speed_threshold.is_nan() || self.queue_speed_threshold <= 0.0 {
            return Err(Error::InvalidConfig("queue_speed_threshold must be > 0".into()));
        }
        if self.warmup_s.is_nan() || self.warmup_s < 0.0 {
            return Err(Error::InvalidConfig("warmup_s must be >= 0".into()));
        }
        self.ticks()?;
        Ok(())
    }

    /// (ticks per BSM slot, ticks per interval, ticks in the sampling window)
    fn ticks(&self) -> Result<(u64, u64, u64)> {
        let dt = self.car_following.dt;
        let per_bsm = whole_multiple(BSM_PERIOD, dt, "BSM period")?;
        let per_interval = whole_multiple(self.aggregation_interval_s, BSM_PERIOD, "aggregation interval")? * per_bsm;
        let window = whole_multiple(self.sampling_window_s, BSM_PERIOD, "sampling window")? * per_bsm;
        if window > per_interval {
            return Err(Error::InvalidConfig("sampling window exceeds aggregation interval".into()));
        }
        Ok((per_bsm, per_interval, window))
    }

    /// Arrival rate at simulation time `t`.
    pub fn demand_at(&self, t: f64) -> f64 {
        if self.demand_profile.is_empty() {
            return self.demand_rate;
        }
        let period: f64 = self.demand_profile.iter().map(|s| s.duration_s).sum();
        let mut phase = t.rem_euclid(period);
        for seg in &self.demand_profile {
            if phase < seg.duration_s {
                return seg.rate;
            }
            phase -= seg.duration_s;
        }
        self.demand_profile[self.demand_profile.len() - 1].rate
    }

    pub fn intervals_in(&self, duration_s: f64) -> usize {
        (duration_s / self.aggregation_interval_s + 1e-9).floor() as usize
    }
}

/// What the fixed edge knows about one interval, plus the simulation truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub aggregate: IntervalAggregate,
    pub truth: QueueLabel,
}

/// Optional per-step CSV sinks.
#[derive(Default)]
pub struct Trace<'a> {
    pub trajectory: Option<&'a mut dyn Write>,
    pub deliveries: Option<&'a mut dyn Write>,
}

/// Simulates the corridor, broadcasts BSMs through the channel and returns
/// one aggregate per interval with its ground-truth label.
///
/// The truth label is the corridor state at the interval's last BSM slot,
/// the same instant as the freshest BSMs in the aggregate.
pub fn observe(
    cfg: &CorridorConfig,
    cv_penetration: f64,
    duration_s: f64,
    seed: u64,
    traffic_stream: u64,
    mut trace: Option<&mut Trace<'_>>,
) -> Result<Vec<Observation>> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&cv_penetration) {
        return Err(Error::InvalidConfig("cv_penetration must lie in [0, 1]".into()));
    }
    let (per_bsm, per_interval, window) = cfg.ticks()?;
    let mut world = World::new(cfg.car_following.clone(), cfg.signal.clone(), cfg.corridor_length)?;
    let mut rng = seed::stream(seed, traffic_stream);
    let channel = KeyedChannel::new(cfg.channel.clone(), seed)?;
    let io = |e: std::io::Error| Error::storage("trace", e);

    let warmup_ticks = (cfg.warmup_s / BSM_PERIOD).round() as u64 * per_bsm;
    for _ in 0..warmup_ticks {
        world.advance(cfg.demand_at(world.clock()), cv_penetration, &mut rng);
    }

    let n_intervals = cfg.intervals_in(duration_s);
    let mut out = Vec::with_capacity(n_intervals);
    let mut heard: Vec<Bsm> = Vec::new();
    for _ in 0..n_intervals {
        let start_tick = world.tick();
        let t_start = world.clock();
        heard.clear();
        let mut truth = false;
        for k in 0..per_interval {
            if let Some(tr) = trace.as_deref_mut() {
                if let Some(w) = tr.trajectory.as_deref_mut() {
                    world.write_trajectory_rows(w).map_err(io)?;
                }
            }
            if world.tick() % per_bsm == 0 {
                // Drops are keyed per message, so slots outside the sampling
                // window only need to be materialized for the delivery log.
                let in_window = k >= per_interval - window;
                let tracing = trace.as_ref().is_some_and(|t| t.deliveries.is_some());
                if in_window || tracing {
                    for bsm in comms::emit(&world) {
                        let delivered = channel.delivered(&bsm);
                        if let Some(w) = trace.as_deref_mut().and_then(|t| t.deliveries.as_deref_mut()) {
                            comms::write_delivery_row(w, &bsm, delivered).map_err(io)?;
                        }
                        if delivered && in_window {
                            heard.push(bsm);
                        }
                    }
                }
            }
            if k == per_interval - per_bsm {
                truth = sim::ground_truth(&world, cfg.queue_speed_threshold);
            }
            world.advance(cfg.demand_at(world.clock()), cv_penetration, &mut rng);
        }
        debug_assert_eq!(world.tick() - start_tick, per_interval);
        let t_end = world.clock();
        out.push(Observation {
            aggregate: aggregate(&heard, t_start, t_end, cfg.channel.range),
            truth,
        });
    }
    Ok(out)
}
