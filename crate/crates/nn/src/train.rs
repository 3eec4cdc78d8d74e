//! Mini-batch training with early stopping, and top-1 evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::{backprop, forward, Mode};
use crate::optim::{Optimizer, OptimizerKind};
use crate::params::ParamSet;
use crate::spec::NetworkSpec;
use crate::tensor::Tensor;
use crate::{NnError, Result};

/// Images (flattened, one row per sample) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub sample_len: usize,
    pub images: Vec<f32>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(sample_len: usize) -> Self {
        Self {
            sample_len,
            images: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, image: &[f32], label: usize) {
        assert_eq!(image.len(), self.sample_len, "sample length mismatch");
        self.images.extend_from_slice(image);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.sample_len..][..self.sample_len]
    }

    /// Gather samples by index into a batch tensor.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let tensor = Tensor::from_vec(&[indices.len(), self.sample_len], data)
            .expect("consistent sample length");
        (tensor, labels)
    }
}

/// Anything that maps a batch to class probabilities.
pub trait Predictor {
    fn classes(&self) -> usize;
    /// `B x classes` probabilities for a `B x sample_len` batch.
    fn predict_proba(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>>;
}

/// A network description with trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub params: ParamSet<f32>,
}

impl Predictor for Model {
    fn classes(&self) -> usize {
        self.spec.classes
    }

    fn predict_proba(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        forward(&self.spec, &self.params, batch, Mode::Eval)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_BATCH: usize = 256;

/// Top-1 predictions, evaluated in chunks.
pub fn predict(model: &impl Predictor, data: &LabeledSet) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (batch, _) = data.batch(chunk);
        let probs = model.predict_proba(&batch)?;
        let classes = model.classes();
        out.extend(probs.data().chunks(classes).map(argmax));
    }
    Ok(out)
}

/// Top-1 accuracy in eval mode.
pub fn evaluate(model: &impl Predictor, data: &LabeledSet) -> Result<f64> {
    if data.is_empty() {
        return Err(NnError::Data("cannot evaluate an empty dataset".into()));
    }
    let preds = predict(model, data)?;
    let correct = preds
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Stop as soon as validation accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 500,
            optimizer: OptimizerKind::adam_default(),
            max_epochs: 100,
            patience: 5,
            target_accuracy: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Training-mode accuracy accumulated over the epoch's batches.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Patience,
    MaxEpochs,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stop: StopReason,
}

/// Train with validation accuracy computed on `val`.
pub fn train(
    spec: &NetworkSpec,
    init: ParamSet<f32>,
    train_set: &LabeledSet,
    val: &LabeledSet,
    config: &TrainConfig,
) -> Result<(ParamSet<f32>, History)> {
    if val.is_empty() {
        return Err(NnError::Data("empty validation set".into()));
    }
    train_with(spec, init, train_set, config, |params| {
        evaluate(
            &Model {
                spec: spec.clone(),
                params: params.clone(),
            },
            val,
        )
    })
}

/// Training loop with a caller-supplied validation score.
///
/// After every epoch `validate` scores the current parameters; the
/// best-scoring parameters seen so far are returned. Training stops after
/// `patience` consecutive epochs without strict improvement, at
/// `max_epochs`, or when `target_accuracy` is reached.
pub fn train_with<F>(
    spec: &NetworkSpec,
    init: ParamSet<f32>,
    train_set: &LabeledSet,
    config: &TrainConfig,
    mut validate: F,
) -> Result<(ParamSet<f32>, History)>
where
    F: FnMut(&ParamSet<f32>) -> Result<f64>,
{
    if train_set.is_empty() {
        return Err(NnError::Data("empty training set".into()));
    }
    if config.batch_size == 0 || config.patience == 0 {
        return Err(NnError::Data("batch size and patience must be positive".into()));
    }
    init.check(spec)?;
    let mut params = init;
    let mut optimizer = Optimizer::new(config.optimizer, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (batch, labels) = train_set.batch(chunk);
            let dropout_seed: u64 = rng.gen();
            let (loss, grads, probs) = backprop(spec, &params, &batch, &labels, dropout_seed)?;
            loss_sum += loss * chunk.len() as f64;
            correct += probs
                .chunks(spec.classes)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            optimizer.step(&mut params, &grads);
        }
        let val_accuracy = validate(&params)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_accuracy,
        });
        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        if config.target_accuracy.is_some_and(|t| val_accuracy >= t) {
            stop = StopReason::Target;
            break;
        }
        if stale >= config.patience {
            stop = StopReason::Patience;
            break;
        }
    }
    Ok((
        best,
        History {
            epochs,
            best_epoch,
            best_val_accuracy: best_acc,
            stop,
        },
    ))
}
