//! Training loop with freshly generated batches.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statetrack_core::tasks::{Sample, TaskSpec};

use crate::eval::{eval_length_gen, LengthScore, Predictor};
use crate::model::TrainableModel;
use crate::ops::{argmax, softmax_xent};
use crate::optim::{clip_grad_norm, lr_at, AdamW, Schedule};
use crate::TrainError;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "STATETRACK_THREADS";

/// Sequences per gradient work unit; fixed so the summation order does not
/// depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub schedule: Schedule,
    pub warmup_steps: usize,
    pub seed: u64,
    pub train_len_min: usize,
    pub train_len_max: usize,
    pub eval_lengths: Vec<usize>,
    /// Evaluate every this many steps and after the last; 0 evaluates only
    /// at the end.
    pub eval_every: usize,
    pub eval_samples: usize,
    /// Worker count; falls back to the environment, then to rayon's default.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-3,
            batch_size: 64,
            steps: 1000,
            weight_decay: 0.01,
            grad_clip: 1.0,
            schedule: Schedule::Cosine,
            warmup_steps: 100,
            seed: 0,
            train_len_min: 3,
            train_len_max: 40,
            eval_lengths: vec![40, 64, 128, 256],
            eval_every: 0,
            eval_samples: 250,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and nonnegative");
        }
        if self.batch_size == 0 || self.steps == 0 {
            return bad("batch_size and steps must be positive");
        }
        if !(self.weight_decay >= 0.0) || !(self.grad_clip > 0.0) {
            return bad("weight_decay must be nonnegative and grad_clip positive");
        }
        if self.train_len_min == 0 || self.train_len_min > self.train_len_max {
            return bad("invalid train length range");
        }
        if self.eval_samples == 0 && !self.eval_lengths.is_empty() {
            return bad("eval_samples must be positive");
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        Ok(())
    }

    fn thread_count(&self) -> Option<usize> {
        self.threads
            .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
            .filter(|&n| n > 0)
    }
}

/// Metrics at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub step: usize,
    /// Mean loss over the batches since the previous record.
    pub loss: f64,
    /// Per-position accuracy on the same batches.
    pub train_acc: f64,
    pub eval: Vec<LengthScore>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<Record>,
    /// Loss of the first batch before any update.
    pub initial_loss: f64,
}

impl History {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// `step,loss,train_acc,len_<L>...` with one row per record.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let mut out = csv_writer(w);
        let lengths: Vec<usize> = self.records.first().map(|r| r.eval.iter().map(|e| e.length).collect()).unwrap_or_default();
        let mut header = vec!["step".to_string(), "loss".into(), "train_acc".into()];
        header.extend(lengths.iter().map(|l| format!("len_{l}")));
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.step.to_string(), format!("{:.6}", r.loss), format!("{:.6}", r.train_acc)];
            row.extend(r.eval.iter().map(|e| format!("{:.6}", e.score)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(w)
}

/// Summed loss, correct and scored counts plus the summed gradient of the
/// loss over `samples`.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
    pub grad: Vec<f64>,
}

/// Masked cross-entropy and its gradient for one sequence, accumulated into
/// `acc`.
fn sample_grad(model: &TrainableModel, s: &Sample, acc: &mut BatchGrad) -> Result<(), TrainError> {
    let cache = model.forward_seq(&s.tokens)?;
    let c = model.config().classes;
    let mut dlogits = vec![0.0; s.len() * c];
    for i in s.masked_positions() {
        let label = s.labels[i];
        if label >= c {
            return Err(TrainError::Shape(format!("label {label} outside {c} classes")));
        }
        let logits = cache.logits_at(i, c);
        let probs = &mut dlogits[i * c..(i + 1) * c];
        acc.loss_sum += softmax_xent(logits, label, probs);
        probs[label] -= 1.0;
        acc.correct += (argmax(logits) == label) as usize;
        acc.count += 1;
    }
    model.backward_seq(&cache, &dlogits, &mut acc.grad)
}

/// Loss and gradient summed over a batch, in a thread-count-independent order.
pub fn batch_grad(model: &TrainableModel, samples: &[Sample]) -> Result<BatchGrad, TrainError> {
    let n = model.num_params();
    let parts: Vec<BatchGrad> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = BatchGrad {
                loss_sum: 0.0,
                correct: 0,
                count: 0,
                grad: vec![0.0; n],
            };
            for s in chunk {
                sample_grad(model, s, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_, TrainError>>()?;
    let mut total = BatchGrad {
        loss_sum: 0.0,
        correct: 0,
        count: 0,
        grad: vec![0.0; n],
    };
    for p in parts {
        total.loss_sum += p.loss_sum;
        total.correct += p.correct;
        total.count += p.count;
        for (g, v) in total.grad.iter_mut().zip(&p.grad) {
            *g += v;
        }
    }
    Ok(total)
}

/// Mean masked cross-entropy over `samples`.
pub fn mean_loss(model: &TrainableModel, samples: &[Sample]) -> Result<f64, TrainError> {
    let b = batch_grad(model, samples)?;
    Ok(b.loss_sum / b.count.max(1) as f64)
}

/// Seed of the training batch at `step`.
pub fn batch_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains `model` in place. `on_record` sees every record as it is made.
pub fn train_loop(
    model: &mut TrainableModel,
    task: &TaskSpec,
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&Record) + Send,
) -> Result<History, TrainError> {
    cfg.validate()?;
    if task.vocab_size() > model.config().vocab || task.num_classes() > model.config().classes {
        return Err(TrainError::Config("model vocabulary or classes smaller than the task's".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.thread_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| TrainError::Config(e.to_string()))?;
    pool.install(|| run(model, task, cfg, &mut on_record))
}

fn run(model: &mut TrainableModel, task: &TaskSpec, cfg: &TrainConfig, on_record: &mut (dyn FnMut(&Record) + Send)) -> Result<History, TrainError> {
    let mut opt = AdamW::new(model.num_params(), cfg.weight_decay);
    let mut history = History::default();
    let (mut loss_acc, mut correct, mut count, mut batches) = (0.0, 0usize, 0usize, 0usize);
    for step in 0..cfg.steps {
        let batch = task.generate(cfg.train_len_min, cfg.train_len_max, cfg.batch_size, batch_seed(cfg.seed, step))?;
        let mut bg = batch_grad(model, &batch)?;
        let denom = bg.count.max(1) as f64;
        let loss = bg.loss_sum / denom;
        bg.grad.iter_mut().for_each(|g| *g /= denom);
        if !loss.is_finite() || bg.grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged { step, loss });
        }
        if step == 0 {
            history.initial_loss = loss;
        }
        loss_acc += loss;
        correct += bg.correct;
        count += bg.count;
        batches += 1;
        clip_grad_norm(&mut bg.grad, cfg.grad_clip);
        let lr = lr_at(cfg.schedule, cfg.lr, step, cfg.steps, cfg.warmup_steps);
        opt.step(&mut model.params, &bg.grad, lr);
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Diverged { step, loss: f64::NAN });
        }
        let done = step + 1;
        if done == cfg.steps || (cfg.eval_every > 0 && done % cfg.eval_every == 0) {
            let eval = if cfg.eval_lengths.is_empty() {
                Vec::new()
            } else {
                eval_length_gen(&*model as &dyn Predictor, task, &cfg.eval_lengths, cfg.eval_samples, cfg.seed)?
            };
            let record = Record {
                step: done,
                loss: loss_acc / batches as f64,
                train_acc: correct as f64 / count.max(1) as f64,
                eval,
            };
            on_record(&record);
            history.records.push(record);
            (loss_acc, correct, count, batches) = (0.0, 0, 0, 0);
        }
    }
    Ok(history)
}
