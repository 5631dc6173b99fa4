//! Scenario matrix driver: every mode, loss rate, penetration level and
//! seed, scored per cell and compared pairwise.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{Error, Result};
use crate::pipeline::{
    self, Bootstrap, CorridorConfig, EdgePipeline, LearnerConfig, PipelineMode, RunSinks, Timeline, Trace,
    VerifiedStore,
};
use crate::seed;
use crate::sim;
use crate::windowing;

pub const LOSS_RATES: [f64; 4] = [0.02, 0.04, 0.08, 0.16];
pub const PENETRATIONS: [f64; 7] = [0.10, 0.20, 0.30, 0.40, 0.50, 0.75, 1.00];

/// The three learner configurations compared by the matrix, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    NoFeedback,
    FeedbackFixed,
    FeedbackDynamic,
}

impl ModeKind {
    pub const ALL: [ModeKind; 3] = [ModeKind::NoFeedback, ModeKind::FeedbackFixed, ModeKind::FeedbackDynamic];

    pub fn name(self) -> &'static str {
        match self {
            ModeKind::NoFeedback => "no_feedback",
            ModeKind::FeedbackFixed => "feedback_fixed",
            ModeKind::FeedbackDynamic => "feedback_dynamic",
        }
    }

    pub fn pipeline_mode(self, retrain_every: usize) -> PipelineMode {
        let base = match self {
            ModeKind::NoFeedback => PipelineMode::NO_FEEDBACK,
            ModeKind::FeedbackFixed => PipelineMode::FEEDBACK_FIXED,
            ModeKind::FeedbackDynamic => PipelineMode::FEEDBACK_DYNAMIC,
        };
        PipelineMode { retrain_every, ..base }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModeKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode {s:?}")))
    }
}

/// Everything needed to reproduce a matrix run. Serialized as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// First seed; runs use `seed .. seed + n_seeds`.
    pub seed: u64,
    pub n_seeds: usize,
    /// Simulated seconds per run, after warm-up.
    pub duration_s: f64,
    pub bootstrap_epoch_s: f64,
    pub loss_rates: Vec<f64>,
    pub penetrations: Vec<f64>,
    pub modes: Vec<ModeKind>,
    pub retrain_every: usize,
    pub significance_level: f64,
    pub corridor: CorridorConfig,
    pub learner: LearnerConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_seeds: 5,
            duration_s: 3600.0,
            bootstrap_epoch_s: 3000.0,
            loss_rates: LOSS_RATES.to_vec(),
            penetrations: PENETRATIONS.to_vec(),
            modes: ModeKind::ALL.to_vec(),
            retrain_every: 1,
            significance_level: 0.05,
            corridor: CorridorConfig::default(),
            learner: LearnerConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.seed..self.seed + self.n_seeds as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.corridor.validate()?;
        self.learner.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_seeds == 0 {
            return bad("n_seeds must be >= 1".into());
        }
        if self.retrain_every == 0 {
            return bad("retrain_every must be >= 1".into());
        }
        let min_duration = 10.0 * self.corridor.signal.cycle_s();
        if self.duration_s.is_nan() || self.duration_s < min_duration {
            return bad(format!(
                "duration_s must cover at least 10 signal cycles ({min_duration} s), got {}",
                self.duration_s
            ));
        }
        if self.bootstrap_epoch_s.is_nan() || self.bootstrap_epoch_s < self.corridor.aggregation_interval_s {
            return bad("bootstrap_epoch_s must cover at least one interval".into());
        }
        if !(self.significance_level > 0.0 && self.significance_level < 1.0) {
            return bad("significance_level must lie in (0, 1)".into());
        }
        if self.loss_rates.is_empty() || self.penetrations.is_empty() || self.modes.is_empty() {
            return bad("loss_rates, penetrations and modes must be non-empty".into());
        }
        if let Some(l) = self.loss_rates.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return bad(format!("loss rate {l} outside [0, 1]"));
        }
        if let Some(p) = self.penetrations.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return bad(format!("penetration {p} outside (0, 1]"));
        }
        if has_duplicates(&self.loss_rates) || has_duplicates(&self.penetrations) {
            return bad("duplicate loss rate or penetration".into());
        }
        let mut modes = self.modes.clone();
        modes.sort();
        modes.dedup();
        if modes.len() != self.modes.len() {
            return bad("duplicate mode".into());
        }
        Ok(())
    }
}

fn has_duplicates(xs: &[f64]) -> bool {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).any(|w| w[0] == w[1])
}

/// Fraction of intervals whose prediction matches the truth.
pub fn accuracy(timeline: &Timeline) -> Result<f64> {
    if timeline.is_empty() {
        return Err(Error::EmptyTimeline);
    }
    let hits = timeline.records.iter().filter(|r| r.prediction == r.truth).count();
    Ok(hits as f64 / timeline.len() as f64)
}

/// Exact two-sided McNemar p-value for `b` and `c` discordant pairs.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let binom = Binomial::new(0.5, n).expect("valid binomial");
    (2.0 * binom.cdf(b.min(c))).min(1.0)
}

/// McNemar test of two paired timelines over the same truth sequence.
pub fn compare_significance(a: &Timeline, b: &Timeline) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::IncomparableTimelines(format!("lengths {} and {}", a.len(), b.len())));
    }
    let (mut only_a, mut only_b) = (0u64, 0u64);
    for (i, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
        if ra.truth != rb.truth {
            return Err(Error::IncomparableTimelines(format!("truth differs at interval {i}")));
        }
        match (ra.prediction == ra.truth, rb.prediction == rb.truth) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    Ok(mcnemar_exact(only_a, only_b))
}

/// Two-sided paired t-test on `diffs`. Returns `(t, p)`.
pub fn paired_t_test(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len();
    if n < 2 {
        return (0.0, 1.0);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid t distribution");
    (t, (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0))
}

/// Timeline of one (mode, loss, penetration, seed) run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub mode: ModeKind,
    pub loss_rate: f64,
    pub penetration: f64,
    pub seed: u64,
    pub timeline: Timeline,
}

#[derive(Clone, Debug, Default)]
pub struct MatrixRuns {
    pub runs: Vec<RunRecord>,
}

/// A failed matrix: the first error plus every run that did complete.
#[derive(Debug)]
pub struct MatrixFailure {
    pub error: Error,
    pub partial: MatrixRuns,
}

impl fmt::Display for MatrixFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} runs completed)", self.error, self.partial.runs.len())
    }
}

fn pct(x: f64) -> String {
    format!("{}", (x * 100.0).round() as i64)
}

fn trace_file(dir: &Path, name: String) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::storage(&path, e))
}

/// Runs one (seed, penetration, loss) scenario: a single traffic/channel
/// realization shared by every configured mode.
fn run_scenario(
    cfg: &ScenarioConfig,
    boot: &Bootstrap,
    seed: u64,
    penetration: f64,
    loss_rate: f64,
    trace_dir: Option<&Path>,
) -> Result<Vec<RunRecord>> {
    let mut corridor = cfg.corridor.clone();
    corridor.channel.loss_rate = loss_rate;
    let tag = format!("s{seed}_p{}_l{}", pct(penetration), pct(loss_rate));

    let observations = match trace_dir {
        None => pipeline::observe(&corridor, penetration, cfg.duration_s, seed, seed::STREAM_TRAFFIC, None)?,
        Some(dir) => {
            let mut traj = trace_file(dir, format!("trajectory_{tag}.csv"))?;
            let mut deliv = trace_file(dir, format!("deliveries_{tag}.csv"))?;
            let io = |e| Error::storage(dir, e);
            writeln!(traj, "{}", sim::TRAJECTORY_HEADER).map_err(io)?;
            writeln!(deliv, "{}", crate::comms::DELIVERY_LOG_HEADER).map_err(io)?;
            let mut trace = Trace {
                trajectory: Some(&mut traj),
                deliveries: Some(&mut deliv),
            };
            let obs = pipeline::observe(&corridor, penetration, cfg.duration_s, seed, seed::STREAM_TRAFFIC, Some(&mut trace))?;
            traj.flush().map_err(io)?;
            deliv.flush().map_err(io)?;
            obs
        }
    };

    let mut out = Vec::with_capacity(cfg.modes.len());
    for &mode in &cfg.modes {
        let mut edge = EdgePipeline::bootstrapped(mode.pipeline_mode(cfg.retrain_every), cfg.learner.clone(), boot);
        let timeline = match trace_dir {
            None => edge.run(&observations, RunSinks::<Vec<u8>>::default())?,
            Some(dir) => {
                let mut store = VerifiedStore::open(dir.join(format!("store_{mode}_{tag}.csv")))?;
                let mut windows = trace_file(dir, format!("window_{mode}_{tag}.csv"))?;
                writeln!(windows, "{}", windowing::WINDOW_LOG_HEADER).map_err(|e| Error::storage(dir, e))?;
                let tl = edge.run(
                    &observations,
                    RunSinks {
                        store: Some(&mut store),
                        window_log: Some(&mut windows),
                    },
                )?;
                store.flush()?;
                let path = dir.join(format!("timeline_{mode}_{tag}.csv"));
                let mut f = trace_file(dir, format!("timeline_{mode}_{tag}.csv"))?;
                tl.write_csv(&mut f).and_then(|_| f.flush()).map_err(|e| Error::storage(&path, e))?;
                windows.flush().map_err(|e| Error::storage(dir, e))?;
                tl
            }
        };
        out.push(RunRecord {
            mode,
            loss_rate,
            penetration,
            seed,
            timeline,
        });
    }
    Ok(out)
}

/// Runs the whole matrix in parallel. The result order is fixed by the
/// configuration (seed, penetration, loss rate, mode), not by scheduling.
pub fn collect_runs(cfg: &ScenarioConfig, trace_dir: Option<&Path>) -> std::result::Result<MatrixRuns, MatrixFailure> {
    let fail = |error| MatrixFailure {
        error,
        partial: MatrixRuns::default(),
    };
    cfg.validate().map_err(fail)?;
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir).map_err(|e| fail(Error::storage(dir, e)))?;
    }
    let seeds: Vec<u64> = cfg.seeds().collect();
    let boots: Vec<Result<Bootstrap>> = seeds
        .par_iter()
        .map(|&s| pipeline::bootstrap(&cfg.corridor, &cfg.learner, cfg.bootstrap_epoch_s, s))
        .collect();

    let mut tasks = Vec::new();
    for (si, &s) in seeds.iter().enumerate() {
        for &p in &cfg.penetrations {
            for &l in &cfg.loss_rates {
                tasks.push((si, s, p, l));
            }
        }
    }
    let results: Vec<Result<Vec<RunRecord>>> = tasks
        .par_iter()
        .map(|&(si, s, p, l)| match &boots[si] {
            Ok(boot) => run_scenario(cfg, boot, s, p, l, trace_dir),
            Err(e) => Err(Error::InvalidConfig(format!("bootstrap for seed {s} failed: {e}"))),
        })
        .collect();

    let mut runs = MatrixRuns::default();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(v) => runs.runs.extend(v),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(Err(e)) = boots.into_iter().find(|b| b.is_err()) {
        // Report the bootstrap failure itself rather than its echo.
        first_error = Some(e);
    }
    match first_error {
        None => Ok(runs),
        Some(error) => Err(MatrixFailure { error, partial: runs }),
    }
}

/// Accuracy statistics of one (mode, loss, penetration) cell over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub mode: ModeKind,
    pub loss_rate: f64,
    pub penetration: f64,
    pub mean_accuracy: f64,
    /// Sample standard deviation across seeds; 0 for a single seed.
    pub std: f64,
    pub n_seeds: usize,
}

/// Per-cell McNemar comparison, pooled over the cell's seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pair: String,
    pub penetration: f64,
    pub loss_rate: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Paired t-test over all cells' mean accuracies for one mode pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallComparison {
    pub pair: String,
    pub n_cells: usize,
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracyReport {
    pub grid: Vec<GridCell>,
    pub comparisons: Vec<Comparison>,
    pub overall: Vec<OverallComparison>,
}

impl AccuracyReport {
    pub fn cell(&self, mode: ModeKind, loss_rate: f64, penetration: f64) -> Option<&GridCell> {
        self.grid
            .iter()
            .find(|c| c.mode == mode && c.loss_rate == loss_rate && c.penetration == penetration)
    }

    pub fn comparison(&self, pair: &str, loss_rate: f64, penetration: f64) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.pair == pair && c.loss_rate == loss_rate && c.penetration == penetration)
    }
}

pub fn pair_name(a: ModeKind, b: ModeKind) -> String {
    format!("{a}_vs_{b}")
}

/// Mode pairs compared in a report: each feedback mode against no
/// feedback, then dynamic against fixed.
pub fn mode_pairs(modes: &[ModeKind]) -> Vec<(ModeKind, ModeKind)> {
    use ModeKind::*;
    [(FeedbackFixed, NoFeedback), (FeedbackDynamic, NoFeedback), (FeedbackDynamic, FeedbackFixed)]
        .into_iter()
        .filter(|(a, b)| modes.contains(a) && modes.contains(b))
        .collect()
}

/// Reduces runs to a report. Independent of the order of `runs`.
pub fn build_report(runs: &MatrixRuns, significance_level: f64) -> Result<AccuracyReport> {
    let mut sorted: Vec<&RunRecord> = runs.runs.iter().collect();
    sorted.sort_by(|a, b| {
        a.mode
            .cmp(&b.mode)
            .then(a.loss_rate.total_cmp(&b.loss_rate))
            .then(a.penetration.total_cmp(&b.penetration))
            .then(a.seed.cmp(&b.seed))
    });

    let mut report = AccuracyReport::default();
    let mut cells: Vec<(ModeKind, f64, f64, Vec<&RunRecord>)> = Vec::new();
    for r in sorted {
        match cells.last_mut() {
            Some((m, l, p, v)) if *m == r.mode && *l == r.loss_rate && *p == r.penetration => v.push(r),
            _ => cells.push((r.mode, r.loss_rate, r.penetration, vec![r])),
        }
    }
    for (mode, loss_rate, penetration, group) in &cells {
        let accs = group.iter().map(|r| accuracy(&r.timeline)).collect::<Result<Vec<f64>>>()?;
        let n = accs.len();
        let mean = accs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        report.grid.push(GridCell {
            mode: *mode,
            loss_rate: *loss_rate,
            penetration: *penetration,
            mean_accuracy: mean,
            std,
            n_seeds: n,
        });
    }

    let mut modes: Vec<ModeKind> = report.grid.iter().map(|c| c.mode).collect();
    modes.dedup();
    for (a, b) in mode_pairs(&modes) {
        let pair = pair_name(a, b);
        let mut diffs = Vec::new();
        for (mode, loss_rate, penetration, group_a) in cells.iter().filter(|c| c.0 == a) {
            let Some((_, _, _, group_b)) = cells
                .iter()
                .find(|c| c.0 == b && c.1 == *loss_rate && c.2 == *penetration)
            else {
                continue;
            };
            let seeds_a: Vec<u64> = group_a.iter().map(|r| r.seed).collect();
            let seeds_b: Vec<u64> = group_b.iter().map(|r| r.seed).collect();
            if seeds_a != seeds_b {
                return Err(Error::IncomparableTimelines(format!(
                    "{mode} and {b} ran different seeds at loss {loss_rate}, penetration {penetration}"
                )));
            }
            let pooled_a = Timeline::concat(group_a.iter().map(|r| &r.timeline));
            let pooled_b = Timeline::concat(group_b.iter().map(|r| &r.timeline));
            let p_value = compare_significance(&pooled_a, &pooled_b)?;
            report.comparisons.push(Comparison {
                pair: pair.clone(),
                penetration: *penetration,
                loss_rate: *loss_rate,
                p_value,
                significant: p_value < significance_level,
            });
            let mean_of = |m: ModeKind| report.cell(m, *loss_rate, *penetration).map(|c| c.mean_accuracy);
            if let (Some(ma), Some(mb)) = (mean_of(a), mean_of(b)) {
                diffs.push(ma - mb);
            }
        }
        let (t, p) = paired_t_test(&diffs);
        report.overall.push(OverallComparison {
            pair,
            n_cells: diffs.len(),
            mean_difference: if diffs.is_empty() { 0.0 } else { diffs.iter().sum::<f64>() / diffs.len() as f64 },
            t_statistic: t,
            p_value: p,
            significant: p < significance_level,
        });
    }
    report.comparisons.sort_by(|x, y| {
        let rank = |c: &Comparison| mode_pairs(&ModeKind::ALL).iter().position(|(a, b)| pair_name(*a, *b) == c.pair);
        rank(x)
            .cmp(&rank(y))
            .then(x.penetration.total_cmp(&y.penetration))
            .then(x.loss_rate.total_cmp(&y.loss_rate))
    });
    Ok(report)
}

pub fn run_matrix(cfg: &ScenarioConfig) -> Result<AccuracyReport> {
    let runs = collect_runs(cfg, None).map_err(|f| f.error)?;
    build_report(&runs, cfg.significance_level)
}

pub const ACCURACY_HEADER: &str = "mode,loss_rate,penetration,mean_accuracy,std,n_seeds";
pub const COMPARISON_HEADER: &str = "pair,penetration,loss_rate,p_value,significant";
pub const OVERALL_HEADER: &str = "pair,n_cells,mean_difference,t_statistic,p_value,significant";

fn write_rows<W: Write, T: Serialize>(out: W, header: &str, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R, header: &str) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(input);
    let found = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if found.iter().collect::<Vec<_>>().join(",") != header {
        return Err(Error::Parse(format!("expected header {header:?}")));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn write_accuracy_csv<W: Write>(out: W, grid: &[GridCell]) -> csv::Result<()> {
    write_rows(out, ACCURACY_HEADER, grid)
}

pub fn write_comparisons_csv<W: Write>(out: W, comparisons: &[Comparison]) -> csv::Result<()> {
    write_rows(out, COMPARISON_HEADER, comparisons)
}

pub fn write_overall_csv<W: Write>(out: W, overall: &[OverallComparison]) -> csv::Result<()> {
    write_rows(out, OVERALL_HEADER, overall)
}

pub fn read_accuracy_csv<R: Read>(input: R) -> Result<Vec<GridCell>> {
    read_rows(input, ACCURACY_HEADER)
}

pub fn read_comparisons_csv<R: Read>(input: R) -> Result<Vec<Comparison>> {
    read_rows(input, COMPARISON_HEADER)
}

pub fn read_overall_csv<R: Read>(input: R) -> Result<Vec<OverallComparison>> {
    read_rows(input, OVERALL_HEADER)
}

/// Files written by [`emit_report`].
#[derive(Clone, Debug)]
pub struct ReportPaths {
    pub accuracy: PathBuf,
    pub comparisons: PathBuf,
    pub overall: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            accuracy: dir.join("accuracy.csv"),
            comparisons: dir.join("comparisons.csv"),
            overall: dir.join("overall.csv"),
        }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> Result<()> {
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    let file = File::create(path).map_err(|e| Error::storage(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Error::storage(path, to_io(e)))?;
    w.flush().map_err(|e| Error::storage(path, e))
}

/// Writes the report's three CSVs into `dir`, creating it if needed.
pub fn emit_report(report: &AccuracyReport, dir: &Path) -> Result<ReportPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
    let paths = ReportPaths::in_dir(dir);
    write_file(&paths.accuracy, |w| write_accuracy_csv(w, &report.grid))?;
    write_file(&paths.comparisons, |w| write_comparisons_csv(w, &report.comparisons))?;
    write_file(&paths.overall, |w| write_overall_csv(w, &report.overall))?;
    Ok(paths)
}

/// Reads back a report written by [`emit_report`].
pub fn load_report(dir: &Path) -> Result<AccuracyReport> {
    let paths = ReportPaths::in_dir(dir);
    let open = |p: &Path| File::open(p).map_err(|e| Error::storage(p, e));
    Ok(AccuracyReport {
        grid: read_accuracy_csv(open(&paths.accuracy)?)?,
        comparisons: read_comparisons_csv(open(&paths.comparisons)?)?,
        overall: read_overall_csv(open(&paths.overall)?)?,
    })
}
