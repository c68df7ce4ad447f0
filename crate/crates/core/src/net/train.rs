use rayon::prelude::*;

use super::network::{LossPlacement, LstmNetwork, NetworkShape};
use super::Scalar;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A labeled frame sequence the network can train on.
pub trait LabeledSequence<T>: Sync {
    type Frame: AsRef<[T]>;
    fn frames(&self) -> &[Self::Frame];
    fn label(&self) -> usize;
}

impl<T: Scalar> LabeledSequence<T> for (Vec<Vec<T>>, usize) {
    type Frame = Vec<T>;

    fn frames(&self) -> &[Vec<T>] {
        &self.0
    }

    fn label(&self) -> usize {
        self.1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Classical momentum coefficient; 0 disables it.
    pub momentum: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Parameters start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// Optional global L2 norm limit on each sample's gradient.
    pub gradient_clip: Option<f64>,
    pub loss: LossPlacement,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            momentum: 0.0,
            patience: 10,
            init_range: 0.05,
            seed: 0,
            max_epochs: 200,
            gradient_clip: None,
            loss: LossPlacement::AllFrames,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !(self.init_range >= 0.0) {
            return Err(Error::InvalidConfig("init range must be non-negative".into()));
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("gradient clip must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn init_network<T: Scalar>(&self, shape: NetworkShape) -> LstmNetwork<T> {
        LstmNetwork::init_uniform(shape, self.init_range, self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub best_val_accuracy: f64,
}

/// Patience-based early stopping on validation accuracy.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records an epoch's accuracy; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, accuracy: f64) -> bool {
        match self.best {
            Some((_, best)) if accuracy <= best => {
                self.stale += 1;
                false
            }
            _ => {
                self.best = Some((epoch, accuracy));
                self.stale = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    /// `(epoch, accuracy)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Snapshot with the highest validation accuracy.
    pub best: LstmNetwork<T>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochRecord>,
}

/// Fraction of samples whose predicted word matches the label.
pub fn evaluate_accuracy<T: Scalar, S: LabeledSequence<T>>(
    net: &LstmNetwork<T>,
    samples: &[S],
    placement: LossPlacement,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty set".into()));
    }
    let correct = samples
        .par_iter()
        .map(|s| {
            net.predict_word(s.frames(), placement)
                .map(|(l, _)| usize::from(l == s.label()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / samples.len() as f64)
}

pub fn train<T: Scalar, S: LabeledSequence<T>>(
    net: LstmNetwork<T>,
    train_set: &[S],
    val_set: &[S],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with(net, train_set, val_set, cfg, |_| {})
}

/// Per-sample SGD with a seeded shuffle each epoch and early stopping on
/// validation accuracy. `on_epoch` sees every epoch record as it completes.
///
/// The shuffle stream is `Rng::stream(cfg.seed, 1)`, independent of the
/// initialization stream.
pub fn train_with<T: Scalar, S: LabeledSequence<T>>(
    mut net: LstmNetwork<T>,
    train_set: &[S],
    val_set: &[S],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidInput(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let lr = T::of(cfg.learning_rate);
    let mut rng = Rng::stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = LstmNetwork::zeros(net.shape);
    let mut velocity = (cfg.momentum > 0.0).then(|| LstmNetwork::zeros(net.shape));
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = net.clone();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for &idx in &order {
            let sample = &train_set[idx];
            let frames = sample.frames();
            grads.fill(T::zero());
            let weights = cfg.loss.frame_weights(frames.len().max(1));
            let loss = net.accumulate_gradients(frames, sample.label(), &weights, &mut grads)?;
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, sample: idx });
            }
            total += loss;
            if let Some(limit) = cfg.gradient_clip {
                let norm = grads.squared_norm().to_f64().unwrap_or(f64::INFINITY).sqrt();
                if norm > limit {
                    grads.scale(T::of(limit / norm));
                }
            }
            match velocity.as_mut() {
                Some(v) => {
                    v.scale(T::of(cfg.momentum));
                    v.add_scaled(-lr, &grads);
                    net.add_scaled(T::one(), v);
                }
                None => net.sgd_step(&grads, lr),
            }
        }

        let val_accuracy = evaluate_accuracy(&net, val_set, cfg.loss)?;
        if stopper.observe(epoch, val_accuracy) {
            best.clone_from(&net);
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_accuracy,
            best_val_accuracy: stopper.best().map_or(val_accuracy, |b| b.1),
        };
        log::debug!(
            "epoch {epoch}: train loss {:.5}, validation accuracy {:.4}",
            record.train_loss,
            val_accuracy
        );
        on_epoch(&record);
        history.push(record);
        if stopper.should_stop() {
            break;
        }
    }

    let (best_epoch, best_val_accuracy) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_accuracy,
        history,
    })
}
