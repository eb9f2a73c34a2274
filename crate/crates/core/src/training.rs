//! Fold training with Adam and early stopping on validation macro-F1,
//! metric aggregation across folds, and the paired error report.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, loss_and_grads, Example, ModelConfig, ModelParams};

/// Accuracy and macro-F1 over the two classes. A class that is neither
/// predicted nor present scores F1 = 0.
pub fn metrics(golds: &[usize], preds: &[usize]) -> Result<(f64, f64)> {
    if golds.len() != preds.len() {
        return Err(Error::Validation(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Validation("no predictions to score".into()));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&g, &p) in golds.iter().zip(preds) {
        if g > 1 || p > 1 {
            return Err(Error::Validation(format!("label pair ({g}, {p}) is not binary")));
        }
        confusion[g][p] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    let accuracy = correct as f64 / golds.len() as f64;
    let mut f1_sum = 0.0;
    for c in 0..2 {
        let tp = confusion[c][c];
        let fp = confusion[1 - c][c];
        let fn_ = confusion[c][1 - c];
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok((accuracy, f1_sum / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            max_epochs: 300,
            patience: 20,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate suited to a frozen text channel.
    pub fn desk() -> Self {
        TrainConfig {
            lr: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push("lr must be positive");
        }
        if self.max_epochs == 0 {
            problems.push("max_epochs must be positive");
        }
        if self.patience >= self.max_epochs {
            problems.push("patience must be below max_epochs");
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push("betas must lie in [0, 1)");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

pub struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let g = grad.flatten();
        let mut pos = 0;
        self.m.for_each_mut(|_, m| {
            for x in m.iter_mut() {
                *x = b1 * *x + (1.0 - b1) * g[pos];
                pos += 1;
            }
        });
        pos = 0;
        self.v.for_each_mut(|_, v| {
            for x in v.iter_mut() {
                *x = b2 * *x + (1.0 - b2) * g[pos] * g[pos];
                pos += 1;
            }
        });
        let (m, v) = (self.m.flatten(), self.v.flatten());
        pos = 0;
        let (lr, eps) = (self.lr, self.eps);
        params.for_each_mut(|_, p| {
            for x in p.iter_mut() {
                let m_hat = m[pos] / c1;
                let v_hat = v[pos] / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
                pos += 1;
            }
        });
    }
}

/// Tracks the best validation score. Only a strict improvement moves the
/// best epoch, so ties keep the earlier one.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    pub best_score: f64,
    pub best_epoch: usize,
    pub epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_score: f64::NEG_INFINITY,
            best_epoch: 0,
            epoch: 0,
        }
    }

    /// Records the next epoch's score; returns (improved, should_stop).
    pub fn observe(&mut self, score: f64) -> (bool, bool) {
        self.epoch += 1;
        let improved = score > self.best_score;
        if improved {
            self.best_score = score;
            self.best_epoch = self.epoch;
        }
        (improved, self.epoch - self.best_epoch >= self.patience)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub gold: usize,
    pub predicted: usize,
    pub probs: [f64; 2],
}

pub fn evaluate(
    examples: &[Example],
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<Vec<Prediction>> {
    examples
        .par_iter()
        .map(|ex| {
            let p = forward(ex, config, params)?;
            Ok(Prediction {
                doc_id: ex.doc_id.clone(),
                gold: ex.label,
                predicted: usize::from(p[1] > p[0]),
                probs: [p[0], p[1]],
            })
        })
        .collect()
}

pub fn score(predictions: &[Prediction]) -> Result<(f64, f64)> {
    let golds: Vec<usize> = predictions.iter().map(|p| p.gold).collect();
    let preds: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    metrics(&golds, &preds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_macro_f1: f64,
    pub test_accuracy: f64,
    pub test_macro_f1: f64,
    pub predictions: Vec<Prediction>,
}

/// Trains one fold and returns its test result with the restored parameters.
pub fn train_fold(
    fold: usize,
    train: &[Example],
    validation: &[Example],
    test: &[Example],
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<(FoldResult, ModelParams)> {
    model.validate()?;
    config.validate()?;
    for (name, split) in [("train", train), ("validation", validation), ("test", test)] {
        if split.is_empty() {
            return Err(Error::Size(format!("fold {fold} has an empty {name} split")));
        }
    }
    let mut params = ModelParams::init(model, model.seed);
    let mut adam = Adam::new(&params, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, grad) = loss_and_grads(&batch, model, &params)?;
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grad);
        }
        if !params.all_finite() {
            return Err(Error::Numeric {
                doc: format!("fold {fold}"),
                message: format!("parameters became non-finite in epoch {epoch}"),
            });
        }
        let (_, val_f1) = score(&evaluate(validation, model, &params)?)?;
        let (improved, stop) = stopper.observe(val_f1);
        log::debug!(
            "fold {fold} epoch {epoch}: loss {:.5} val macro-F1 {val_f1:.4}",
            epoch_loss / train.len() as f64
        );
        if improved {
            best = params.clone();
        }
        if stop {
            break;
        }
    }

    let predictions = evaluate(test, model, &best)?;
    let (test_accuracy, test_macro_f1) = score(&predictions)?;
    log::info!(
        "fold {fold}: best epoch {} of {}, test accuracy {test_accuracy:.4}",
        stopper.best_epoch,
        stopper.epoch
    );
    Ok((
        FoldResult {
            fold,
            seed: model.seed,
            best_epoch: stopper.best_epoch,
            epochs_run: stopper.epoch,
            best_val_macro_f1: stopper.best_score,
            test_accuracy,
            test_macro_f1,
            predictions,
        },
        best,
    ))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-fold results of one configuration with population mean and std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

impl ExperimentResult {
    pub fn from_folds(name: impl Into<String>, folds: Vec<FoldResult>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Validation("no folds to aggregate".into()));
        }
        let acc: Vec<f64> = folds.iter().map(|f| f.test_accuracy).collect();
        let f1: Vec<f64> = folds.iter().map(|f| f.test_macro_f1).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        let (mean_macro_f1, std_macro_f1) = mean_std(&f1);
        Ok(ExperimentResult {
            name: name.into(),
            folds,
            mean_accuracy,
            std_accuracy,
            mean_macro_f1,
            std_macro_f1,
        })
    }
}

#[derive(Serialize)]
struct ResultRow<'a> {
    config: &'a str,
    fold: usize,
    seed: u64,
    accuracy: f64,
    macro_f1: f64,
    best_epoch: usize,
}

pub fn write_results_csv(results: &[ExperimentResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in results {
        for f in &r.folds {
            w.serialize(ResultRow {
                config: &r.name,
                fold: f.fold,
                seed: f.seed,
                accuracy: f.test_accuracy,
                macro_f1: f.test_macro_f1,
                best_epoch: f.best_epoch,
            })
            .map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Human-readable comparison table, one line per configuration.
pub fn format_table(results: &[ExperimentResult]) -> String {
    let mut out = format!("{:<24} {:>17} {:>17}\n", "config", "accuracy", "macro-F1");
    for r in results {
        out.push_str(&format!(
            "{:<24} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}\n",
            r.name, r.mean_accuracy, r.std_accuracy, r.mean_macro_f1, r.std_macro_f1
        ));
    }
    out
}

/// Per-document quantities summarized by the error report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRecord {
    pub words: usize,
    pub base_triples: usize,
    /// Triples added from the legit-class KG.
    pub consistency: usize,
    /// Triples added from the misinformation-class KG.
    pub contradiction: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub a_correct: bool,
    pub b_correct: bool,
    pub count: usize,
    pub words: MeanStd,
    pub base_triples: MeanStd,
    pub consistency: MeanStd,
    pub contradiction: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flip {
    pub doc_id: String,
    pub gold: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub model_a: String,
    pub model_b: String,
    pub buckets: Vec<Bucket>,
    pub flips: Vec<Flip>,
}

/// Buckets test documents by which of two models got them right. Both
/// prediction lists must cover the same documents.
pub fn error_report(
    name_a: &str,
    a: &[Prediction],
    name_b: &str,
    b: &[Prediction],
    records: &BTreeMap<String, DocRecord>,
) -> Result<ErrorReport> {
    let by_id: BTreeMap<&str, &Prediction> = b.iter().map(|p| (p.doc_id.as_str(), p)).collect();
    if a.len() != b.len() || by_id.len() != b.len() {
        return Err(Error::Validation(
            "the two result sets cover different test splits".into(),
        ));
    }
    let mut groups: BTreeMap<(bool, bool), Vec<&DocRecord>> = BTreeMap::new();
    let mut flips = Vec::new();
    for pa in a {
        let pb = by_id.get(pa.doc_id.as_str()).ok_or_else(|| {
            Error::Validation(format!("{} is missing from {name_b}", pa.doc_id))
        })?;
        if pa.gold != pb.gold {
            return Err(Error::Validation(format!("gold labels of {} disagree", pa.doc_id)));
        }
        let record = records
            .get(&pa.doc_id)
            .ok_or_else(|| Error::Lookup(pa.doc_id.clone()))?;
        groups
            .entry((pa.predicted != pa.gold, pb.predicted != pb.gold))
            .or_default()
            .push(record);
        if pa.predicted != pb.predicted {
            flips.push(Flip {
                doc_id: pa.doc_id.clone(),
                gold: pa.gold,
                a: pa.predicted,
                b: pb.predicted,
            });
        }
    }
    let summarize = |rs: &[&DocRecord], f: fn(&DocRecord) -> usize| {
        let values: Vec<f64> = rs.iter().map(|r| f(r) as f64).collect();
        let (mean, std) = mean_std(&values);
        MeanStd { mean, std }
    };
    let buckets = groups
        .into_iter()
        .map(|((a_wrong, b_wrong), rs)| Bucket {
            a_correct: !a_wrong,
            b_correct: !b_wrong,
            count: rs.len(),
            words: summarize(&rs, |r| r.words),
            base_triples: summarize(&rs, |r| r.base_triples),
            consistency: summarize(&rs, |r| r.consistency),
            contradiction: summarize(&rs, |r| r.contradiction),
        })
        .collect();
    Ok(ErrorReport {
        model_a: name_a.to_string(),
        model_b: name_b.to_string(),
        buckets,
        flips,
    })
}
