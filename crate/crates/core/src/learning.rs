//! Queue classifier: z-score normalization and a linear soft-margin SVM.
//!
//! The SVM is trained in the dual by exact coordinate descent on the
//! bias-augmented problem
//!
//! ```text
//! min_w  1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i))      x_i = (f_1, f_2, 1)
//! ```
//!
//! so the bias is the third weight component. Each coordinate step
//! minimizes the dual exactly along one variable, which makes the dual
//! objective non-increasing step by step.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::QueueLabel;

pub const STD_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub avg_speed: f64,
    pub avg_separation: f64,
}

impl FeatureVector {
    pub fn new(avg_speed: f64, avg_separation: f64) -> Self {
        Self {
            avg_speed,
            avg_separation,
        }
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 2] {
        [self.avg_speed, self.avg_separation]
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: QueueLabel,
    /// End of the aggregation interval the sample was taken from.
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Normalizer {
    /// Population mean and standard deviation per feature, with the
    /// deviation floored at [`STD_FLOOR`].
    pub fn fit(samples: &[LabeledSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let n = samples.len() as f64;
        let mut mean = [0.0; 2];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.features.as_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 2];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s.features.as_array()).zip(mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var.map(|v| (v / n).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    #[inline]
    pub fn apply(&self, features: &FeatureVector) -> [f64; 2] {
        let x = features.as_array();
        [
            (x[0] - self.mean[0]) / self.std[0],
            (x[1] - self.mean[1]) / self.std[1],
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 10_000,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidConfig("svm c must be > 0".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig("svm tol and max_iter must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: [f64; 2],
    pub bias: f64,
    pub c: f64,
}

impl SvmModel {
    /// Classifier that always answers `label`.
    pub fn constant(label: QueueLabel, c: f64) -> Self {
        Self {
            weights: [0.0; 2],
            bias: if label { 1.0 } else { -1.0 },
            c,
        }
    }

    #[inline]
    pub fn decision(&self, x: &[f64; 2]) -> f64 {
        self.weights[0] * x[0] + self.weights[1] * x[1] + self.bias
    }

    /// Queue iff the decision value is strictly positive.
    #[inline]
    pub fn classify(&self, x: &[f64; 2]) -> QueueLabel {
        self.decision(x) > 0.0
    }
}

/// Per-epoch record of a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainTrace {
    /// Dual objective after every coordinate step.
    pub objective: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

#[inline]
fn sign(label: QueueLabel) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

/// Trains on already-normalized points.
pub fn train(points: &[[f64; 2]], labels: &[QueueLabel], params: &TrainParams) -> Result<SvmModel> {
    train_inner(points, labels, params, None)
}

/// Same as [`train`], additionally recording the dual objective after
/// every coordinate update.
pub fn train_traced(
    points: &[[f64; 2]],
    labels: &[QueueLabel],
    params: &TrainParams,
) -> Result<(SvmModel, TrainTrace)> {
    let mut trace = TrainTrace::default();
    let model = train_inner(points, labels, params, Some(&mut trace))?;
    Ok((model, trace))
}

fn train_inner(
    points: &[[f64; 2]],
    labels: &[QueueLabel],
    params: &TrainParams,
    mut trace: Option<&mut TrainTrace>,
) -> Result<SvmModel> {
    assert_eq!(points.len(), labels.len(), "points and labels differ in length");
    if points.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        if let Some(t) = trace {
            t.converged = true;
        }
        return Ok(SvmModel::constant(labels[0], params.c));
    }

    let n = points.len();
    let c = params.c;
    let xs: Vec<[f64; 3]> = points.iter().map(|p| [p[0], p[1], 1.0]).collect();
    let ys: Vec<f64> = labels.iter().map(|&l| sign(l)).collect();
    let qd: Vec<f64> = xs.iter().map(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).collect();
    let mut alpha = vec![0.0; n];
    let mut w = [0.0f64; 3];
    let mut objective = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);

    let mut converged = false;
    let mut epochs = 0;
    while epochs < params.max_iter {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let x = &xs[i];
            let g = ys[i] * (w[0] * x[0] + w[1] * x[1] + w[2] * x[2]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let d = alpha[i] - old;
                if d != 0.0 {
                    let s = d * ys[i];
                    w[0] += s * x[0];
                    w[1] += s * x[1];
                    w[2] += s * x[2];
                    objective += g * d + 0.5 * qd[i] * d * d;
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.objective.push(objective);
            }
        }
        if pg_max - pg_min <= params.tol {
            converged = true;
            break;
        }
        // Relative duality gap.
        let w_sq = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        let hinge: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (1.0 - y * (w[0] * x[0] + w[1] * x[1] + w[2] * x[2])).max(0.0))
            .sum();
        let primal = 0.5 * w_sq + c * hinge;
        let dual = 0.5 * w_sq - alpha.iter().sum::<f64>();
        if primal + dual <= params.tol * primal.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if let Some(t) = trace {
        t.epochs = epochs;
        t.converged = converged;
    }
    Ok(SvmModel {
        weights: [w[0], w[1]],
        bias: w[2],
        c,
    })
}

/// Primal objective of the bias-augmented problem.
pub fn primal_objective(model: &SvmModel, points: &[[f64; 2]], labels: &[QueueLabel]) -> f64 {
    let w2 = model.weights[0].powi(2) + model.weights[1].powi(2) + model.bias.powi(2);
    let hinge: f64 = points
        .iter()
        .zip(labels)
        .map(|(x, &l)| (1.0 - sign(l) * model.decision(x)).max(0.0))
        .sum();
    0.5 * w2 + model.c * hinge
}

/// Fits a normalizer on the samples and trains a model on the normalized
/// features.
pub fn fit(samples: &[LabeledSample], params: &TrainParams) -> Result<(Normalizer, SvmModel)> {
    let normalizer = Normalizer::fit(samples)?;
    let points: Vec<[f64; 2]> = samples.iter().map(|s| normalizer.apply(&s.features)).collect();
    let labels: Vec<QueueLabel> = samples.iter().map(|s| s.label).collect();
    let model = train(&points, &labels, params)?;
    Ok((normalizer, model))
}

#[inline]
pub fn predict(model: &SvmModel, normalizer: &Normalizer, features: &FeatureVector) -> QueueLabel {
    model.classify(&normalizer.apply(features))
}

/// Model checkpoint written by the system edge after each retrain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub timestamp: f64,
    pub window_len: usize,
    pub model: SvmModel,
    pub normalizer: Normalizer,
}

impl Checkpoint {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(self.to_toml().as_bytes())
    }
}
