use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_dim, cross_entropy, NnError};

/// A binary classifier trainable by mini-batch SGD on cross-entropy.
///
/// `param_slices_mut` and `flatten_grads` must enumerate parameters in the
/// same order; gradient checking relies on it.
pub trait Classifier: Clone {
    type Input: Clone;
    type Grads;

    /// Probability that the label is `true` (option 1 chosen).
    fn predict(&self, x: &Self::Input) -> f64;

    fn zero_grads(&self) -> Self::Grads;

    fn clear_grads(&self, grads: &mut Self::Grads);

    /// Adds the cross-entropy gradient of one sample to `grads`, returns its loss.
    fn accumulate(&self, x: &Self::Input, label: bool, grads: &mut Self::Grads) -> f64;

    /// `p <- p - lr * g` for every trainable parameter.
    fn apply(&mut self, grads: &Self::Grads, lr: f64);

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn flatten_grads(&self, grads: &Self::Grads) -> Vec<f64>;

    /// [`predict`](Classifier::predict), also appending the sign of every
    /// piecewise-linear unit to `signs`. Finite differences are only
    /// meaningful between points with the same pattern.
    fn predict_signed(&self, x: &Self::Input, signs: &mut Vec<bool>) -> f64 {
        let _ = signs;
        self.predict(x)
    }
}

/// `p <- p - lr * g` elementwise.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), NnError> {
    check_dim(params.len(), grads.len())?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.001, batch_size: 64, max_epochs: 200, patience: 10, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(NnError::InvalidConfig("max_epochs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Accuracy (threshold: `p > 0.5` predicts `true`) and mean cross-entropy.
pub fn accuracy_and_loss<M: Classifier>(model: &M, samples: &[(M::Input, bool)]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, y) in samples {
        let p = model.predict(x);
        if (p > 0.5) == *y {
            correct += 1;
        }
        loss += cross_entropy(p, *y);
    }
    let n = samples.len() as f64;
    (correct as f64 / n, loss / n)
}

/// Mini-batch SGD on mean cross-entropy with early stopping on validation
/// accuracy (ties go to lower validation loss). The returned model carries the
/// best parameters seen. An empty validation set selects on the training set.
pub fn train_classifier<M: Classifier>(
    mut model: M,
    train: &[(M::Input, bool)],
    val: &[(M::Input, bool)],
    config: &TrainConfig,
) -> Result<(M, TrainHistory), NnError> {
    config.validate()?;
    if train.is_empty() {
        return Err(NnError::EmptyTrainingSet);
    }
    let select_on = if val.is_empty() { train } else { val };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = model.zero_grads();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64, M)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            model.clear_grads(&mut grads);
            for &i in batch {
                let (x, y) = &train[i];
                epoch_loss += model.accumulate(x, *y, &mut grads);
            }
            model.apply(&grads, config.learning_rate / batch.len() as f64);
        }
        let (val_accuracy, val_loss) = accuracy_and_loss(&model, select_on);
        history.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_accuracy,
            val_loss,
        });
        let improved = match &best {
            None => true,
            Some((acc, loss, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss),
        };
        if improved {
            best = Some((val_accuracy, val_loss, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    let (_, _, best_model) = best.expect("at least one epoch runs");
    Ok((best_model, history))
}
