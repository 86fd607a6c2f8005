//! Plain SGD with the step-halving schedule, global-norm clipping and
//! length-bucketed minibatches.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;
use rand::seq::SliceRandom;

use crate::corpus::SentencePair;
use crate::error::{Error, Result};
use crate::evaluation::perplexity;
use crate::model::Seq2SeqModel;
use crate::numerics::{global_norm, Parameters, Real};
use crate::rng::{mix64, seeded};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Epoch progress at which halving begins.
    pub schedule_start_epoch: f64,
    /// Epochs between halvings.
    pub halving_period: f64,
    pub total_epochs: f64,
    pub batch_size: usize,
    pub clip_threshold: f64,
    pub init_range: f64,
    pub seed: u64,
    /// Largest source-length spread allowed inside one batch.
    pub bucket_width: usize,
    /// Epochs between metric records and checkpoints.
    pub record_interval: f64,
    /// Optional hard cap on the number of updates.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.7,
            schedule_start_epoch: 5.0,
            halving_period: 0.5,
            total_epochs: 7.5,
            batch_size: 128,
            clip_threshold: 5.0,
            init_range: 0.08,
            seed: 0,
            bucket_width: 4,
            record_interval: 0.5,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("halving_period", self.halving_period),
            ("clip_threshold", self.clip_threshold),
            ("init_range", self.init_range),
            ("record_interval", self.record_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.schedule_start_epoch.is_finite() && self.schedule_start_epoch >= 0.0) {
            return Err(Error::Config("schedule_start_epoch must be non-negative".to_string()));
        }
        if !(self.total_epochs.is_finite() && self.total_epochs >= 0.0) {
            return Err(Error::Config("total_epochs must be non-negative".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".to_string()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch_progress: f64) -> f64 {
        lr_at(self, epoch_progress)
    }
}

/// `lr0` before the schedule starts, then halved once on entry and once per
/// further period: `lr0 * 2^-(floor((p - start) / period) + 1)`.
pub fn lr_at(config: &TrainConfig, epoch_progress: f64) -> f64 {
    if epoch_progress < config.schedule_start_epoch {
        return config.lr0;
    }
    let halvings = Float::floor((epoch_progress - config.schedule_start_epoch) / config.halving_period) + 1.0;
    config.lr0 * Float::exp2(-halvings)
}

/// Rescales `grads` in place so their global L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_by_global_norm<T: Real, P: Parameters<T> + ?Sized>(grads: &mut P, threshold: T) -> T {
    let norm = global_norm(grads.tensors());
    if norm > threshold {
        let scale = threshold / norm;
        for t in grads.tensors_mut() {
            t.scale_in_place(scale);
        }
    }
    norm
}

/// `θ ← θ − lr·g` for every parameter.
pub fn sgd_step<T: Real, P: Parameters<T> + ?Sized>(params: &mut P, grads: &P, lr: T) -> Result<()> {
    let gs = grads.tensors();
    let mut ps = params.tensors_mut();
    if gs.len() != ps.len() {
        return Err(Error::Config("gradient set does not match the parameters".to_string()));
    }
    for (p, g) in ps.iter_mut().zip(gs) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

/// Splits `corpus` into batches of at most `batch_size` pair indices whose
/// source lengths differ by at most `bucket_width`. Every index appears once;
/// the order of pairs and of batches is shuffled by `seed`.
pub fn bucket_batches(corpus: &[SentencePair], batch_size: usize, bucket_width: usize, seed: u64) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let min_len = corpus.iter().map(|p| p.source.len()).min().unwrap_or(0);
    let key = |i: &usize| match bucket_width.checked_add(1) {
        Some(span) => (corpus[*i].source.len() - min_len) / span,
        None => 0,
    };
    order.sort_by_key(key);

    let mut batches = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let k = key(&order[start]);
        let mut end = start;
        while end < order.len() && key(&order[end]) == k {
            end += 1;
        }
        for chunk in order[start..end].chunks(batch_size) {
            batches.push(chunk.to_vec());
        }
        start = end;
    }
    batches.shuffle(&mut rng);
    batches
}

/// Where a run stands; stored in checkpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrainingProgress {
    pub epoch: f64,
    pub step: u64,
    pub lr: f64,
}

/// One line of the metric log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRecord {
    pub epoch: f64,
    pub step: u64,
    pub lr: f64,
    /// Mean per-sentence negative log-likelihood since the previous record.
    pub train_nll: f64,
    /// `NaN` when no held-out set was given.
    pub heldout_ppl: f64,
}

impl fmt::Display for MetricRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} lr={} train_nll={} heldout_ppl={}",
            self.epoch, self.lr, self.train_nll, self.heldout_ppl
        )
    }
}

/// Hooks run on the training thread. Errors abort the run.
pub trait TrainObserver<T> {
    fn on_record(&mut self, _record: &MetricRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _model: &Seq2SeqModel<T>, _progress: &TrainingProgress) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl<T> TrainObserver<T> for NoopObserver {}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub records: Vec<MetricRecord>,
    pub progress: TrainingProgress,
}

/// Runs SGD on `model` until `total_epochs` of progress (or `max_steps`
/// updates). A metric record and a checkpoint hook fire every
/// `record_interval` epochs and once more at the end if the run stops off an
/// interval boundary.
pub fn train<T: Real>(
    model: &mut Seq2SeqModel<T>,
    train_pairs: &[SentencePair],
    heldout: &[SentencePair],
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainReport> {
    config.validate()?;
    if train_pairs.is_empty() && config.total_epochs > 0.0 {
        return Err(Error::Input("training corpus is empty".to_string()));
    }
    let mut records = Vec::new();
    let mut progress = TrainingProgress {
        epoch: 0.0,
        step: 0,
        lr: config.lr0,
    };
    let threshold = T::cast(config.clip_threshold);
    let mut next_record = config.record_interval;
    let mut nll_sum = 0.0;
    let mut nll_count = 0usize;
    let mut pending = false;

    let mut epoch = 0u64;
    'outer: while (epoch as f64) < config.total_epochs {
        let batches = bucket_batches(
            train_pairs,
            config.batch_size,
            config.bucket_width,
            mix64(config.seed ^ mix64(epoch)),
        );
        let nb = batches.len() as f64;
        for (bi, idx) in batches.iter().enumerate() {
            let here = epoch as f64 + bi as f64 / nb;
            if here >= config.total_epochs || config.max_steps.is_some_and(|m| progress.step >= m) {
                break 'outer;
            }
            let lr = lr_at(config, here);
            let batch: Vec<SentencePair> = idx.iter().map(|&i| train_pairs[i].clone()).collect();
            let (loss, mut grads) = model.batch_loss_and_grads(&batch)?;
            if !loss.is_finite() || grads.tensors().iter().any(|t| !t.is_finite()) {
                return Err(Error::NumericalDivergence {
                    batch: progress.step as usize,
                });
            }
            clip_by_global_norm(&mut grads, threshold);
            sgd_step(&mut model.params, &grads, T::cast(lr))?;

            nll_sum += loss.as_f64() * batch.len() as f64;
            nll_count += batch.len();
            progress = TrainingProgress {
                epoch: epoch as f64 + (bi + 1) as f64 / nb,
                step: progress.step + 1,
                lr,
            };
            pending = true;
            if progress.epoch >= next_record - 1e-12 {
                emit(model, heldout, &mut progress, &mut nll_sum, &mut nll_count, &mut records, observer)?;
                pending = false;
                while next_record <= progress.epoch + 1e-12 {
                    next_record += config.record_interval;
                }
            }
        }
        epoch += 1;
    }
    if pending {
        emit(model, heldout, &mut progress, &mut nll_sum, &mut nll_count, &mut records, observer)?;
    }
    Ok(TrainReport { records, progress })
}

fn emit<T: Real>(
    model: &Seq2SeqModel<T>,
    heldout: &[SentencePair],
    progress: &mut TrainingProgress,
    nll_sum: &mut f64,
    nll_count: &mut usize,
    records: &mut Vec<MetricRecord>,
    observer: &mut dyn TrainObserver<T>,
) -> Result<()> {
    let heldout_ppl = if heldout.is_empty() {
        f64::NAN
    } else {
        perplexity(&[model], heldout)?
    };
    let record = MetricRecord {
        epoch: progress.epoch,
        step: progress.step,
        lr: progress.lr,
        train_nll: *nll_sum / (*nll_count).max(1) as f64,
        heldout_ppl,
    };
    *nll_sum = 0.0;
    *nll_count = 0;
    observer.on_record(&record)?;
    observer.on_checkpoint(model, progress)?;
    records.push(record);
    Ok(())
}
