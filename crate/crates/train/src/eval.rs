//! Length-generalization evaluation for trained and compiled models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statetrack_core::lrnn::{model_run, LrnnModel};
use statetrack_core::tasks::{Sample, TaskSpec};
use statetrack_core::Scalar;

use crate::model::TrainableModel;
use crate::TrainError;

/// Anything that maps a token sequence to one predicted label per position.
pub trait Predictor: Sync {
    fn predict(&self, tokens: &[usize]) -> Vec<usize>;
}

impl Predictor for TrainableModel {
    fn predict(&self, tokens: &[usize]) -> Vec<usize> {
        self.predict_seq(tokens).unwrap_or_else(|_| vec![usize::MAX; tokens.len()])
    }
}

/// Decode failures count as wrong predictions.
impl<T: Scalar> Predictor for LrnnModel<T> {
    fn predict(&self, tokens: &[usize]) -> Vec<usize> {
        model_run(self, tokens).unwrap_or_else(|_| vec![usize::MAX; tokens.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthScore {
    pub length: usize,
    /// Fraction of samples scored correct.
    pub accuracy: f64,
    /// Chance-rescaled accuracy, or sequence accuracy for group tasks.
    pub score: f64,
}

/// Whether a prediction scores as correct: every masked position for
/// sequence-scored tasks, the last masked position otherwise.
pub fn sample_correct(sample: &Sample, pred: &[usize], sequence_scored: bool) -> bool {
    if pred.len() != sample.len() {
        return false;
    }
    if sequence_scored {
        sample.masked_positions().all(|i| pred[i] == sample.labels[i])
    } else {
        match sample.masked_positions().last() {
            Some(i) => pred[i] == sample.labels[i],
            None => false,
        }
    }
}

pub fn scaled_accuracy(acc: f64, acc_rand: f64) -> f64 {
    (acc - acc_rand) / (1.0 - acc_rand)
}

/// Scores `samples` with `pred`.
pub fn score_samples<P: Predictor + ?Sized>(pred: &P, task: &TaskSpec, samples: &[Sample]) -> Result<(f64, f64), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyEval);
    }
    let seq = task.sequence_scored();
    let correct = samples
        .par_iter()
        .map(|s| sample_correct(s, &pred.predict(&s.tokens), seq) as usize)
        .sum::<usize>();
    let acc = correct as f64 / samples.len() as f64;
    let score = if seq { acc } else { scaled_accuracy(acc, task.acc_rand()) };
    Ok((acc, score))
}

/// Seed for the evaluation set at one length.
pub fn eval_seed(seed: u64, length: usize) -> u64 {
    seed ^ (length as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Accuracy per length on `samples_per_length` fresh samples each.
pub fn eval_length_gen<P: Predictor + ?Sized>(
    pred: &P,
    task: &TaskSpec,
    lengths: &[usize],
    samples_per_length: usize,
    seed: u64,
) -> Result<Vec<LengthScore>, TrainError> {
    if lengths.is_empty() || samples_per_length == 0 {
        return Err(TrainError::EmptyEval);
    }
    lengths
        .iter()
        .map(|&length| {
            let samples = task.generate(length, length, samples_per_length, eval_seed(seed, length))?;
            let (accuracy, score) = score_samples(pred, task, &samples)?;
            Ok(LengthScore { length, accuracy, score })
        })
        .collect()
}

/// Mean score over a set of per-length results.
pub fn mean_score(scores: &[LengthScore]) -> f64 {
    scores.iter().map(|s| s.score).sum::<f64>() / scores.len().max(1) as f64
}
