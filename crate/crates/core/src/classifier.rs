//! Downstream multi-label classifier: one logistic regression per class over
//! the same feature vectors, trained with BCE against the (possibly soft)
//! relabeled targets.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::dot;
use crate::num::{sigmoid, softplus};
use crate::optim::{milestone_lr, Adam};
use crate::rng::{stream_rng, Stream};

/// Per-class affine scorer + sigmoid. Flat parameter layout, per class: the
/// weight row (d values) then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelClassifier {
    c: usize,
    d: usize,
    params: Vec<f64>,
}

impl MultiLabelClassifier {
    /// Weights uniform in [-1/sqrt(d), 1/sqrt(d)], biases zero.
    pub fn init(c: usize, d: usize, seed: u64) -> Result<Self> {
        if c == 0 || d == 0 {
            return Err(Error::InvalidConfig(format!(
                "classifier shape c={c}, d={d} must be positive"
            )));
        }
        let mut rng = stream_rng(seed, Stream::ClfInit);
        let bound = 1.0 / (d as f64).sqrt();
        let mut params = vec![0.0; c * (d + 1)];
        for class in 0..c {
            for w in &mut params[class * (d + 1)..class * (d + 1) + d] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(MultiLabelClassifier { c, d, params })
    }

    pub fn from_params(c: usize, d: usize, params: Vec<f64>) -> Result<Self> {
        if c == 0 || d == 0 {
            return Err(Error::InvalidConfig(format!(
                "classifier shape c={c}, d={d} must be positive"
            )));
        }
        if params.len() != c * (d + 1) {
            return Err(Error::DimensionMismatch(format!(
                "classifier needs {} parameters, got {}",
                c * (d + 1),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("classifier parameters".into()));
        }
        Ok(MultiLabelClassifier { c, d, params })
    }

    pub fn n_classes(&self) -> usize {
        self.c
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn weight_row(&self, class: usize) -> &[f64] {
        let base = class * (self.d + 1);
        &self.params[base..base + self.d]
    }

    fn bias(&self, class: usize) -> f64 {
        self.params[class * (self.d + 1) + self.d]
    }

    /// Raw affine scores, one per class.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} dims, classifier expects {}",
                x.len(),
                self.d
            )));
        }
        Ok((0..self.c)
            .map(|class| dot(self.weight_row(class), x) + self.bias(class))
            .collect())
    }

    /// Per-class probabilities, strictly inside (0, 1).
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }
}

/// Binary cross entropy summed over classes, taking raw logits so nothing
/// saturates: -[y ln sigmoid(l) + (1-y) ln(1-sigmoid(l))] rewritten as
/// y softplus(-l) + (1-y) softplus(l).
pub fn bce_loss(targets: &[f64], logits: &[f64]) -> f64 {
    debug_assert_eq!(targets.len(), logits.len());
    targets
        .iter()
        .zip(logits)
        .map(|(&y, &l)| y * softplus(-l) + (1.0 - y) * softplus(l))
        .sum()
}

#[derive(Debug, Clone)]
pub struct ClfConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs at which the learning rate is multiplied by `decay`.
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub seed: u64,
}

impl Default for ClfConfig {
    fn default() -> Self {
        ClfConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 16,
            milestones: vec![23, 27],
            decay: 0.1,
            seed: 0,
        }
    }
}

impl ClfConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be finite and > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !self.decay.is_finite() || self.decay <= 0.0 || self.decay > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "decay {} must lie in (0, 1]",
                self.decay
            )));
        }
        if self.epochs > 0 {
            if let Some(&bad) = self.milestones.iter().find(|&&m| m >= self.epochs) {
                return Err(Error::InvalidConfig(format!(
                    "milestone {bad} is not below epochs {}",
                    self.epochs
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: MultiLabelClassifier,
    pub epoch_losses: Vec<f64>,
}

/// Mean BCE and its gradient over `indices` (visited in the order given).
/// The per-class score gradient is sigmoid(logit) - target.
pub fn batch_gradient(
    model: &MultiLabelClassifier,
    dataset: &Dataset,
    indices: &[usize],
    grad: &mut [f64],
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("gradient over an empty batch".into()));
    }
    if grad.len() != model.params.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient buffer has {} slots, classifier has {} parameters",
            grad.len(),
            model.params.len()
        )));
    }
    grad.fill(0.0);
    let d = model.d;
    let mut loss = 0.0;
    for &i in indices {
        let x = dataset.features.row(i);
        let y = dataset.labels.row(i);
        let logits = model.logits(x)?;
        loss += bce_loss(y, &logits);
        for class in 0..model.c {
            let err = sigmoid(logits[class]) - y[class];
            let base = class * (d + 1);
            let gw = &mut grad[base..base + d];
            for (g, &xv) in gw.iter_mut().zip(x) {
                *g += err * xv;
            }
            grad[base + d] += err;
        }
    }
    let scale = 1.0 / indices.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    Ok(loss * scale)
}

/// Adam training with milestone step decay. Same determinism contract as
/// the attribute trainer: epoch shuffles come from a dedicated stream and
/// batches reduce in ascending sample index.
pub fn train(dataset: &Dataset, config: &ClfConfig) -> Result<TrainedClassifier> {
    config.validate()?;
    let mut model =
        MultiLabelClassifier::init(dataset.n_classes(), dataset.feature_dim(), config.seed)?;
    let n = dataset.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = stream_rng(config.seed, Stream::ClfShuffle);
    let mut adam = Adam::new(model.params.len());
    let mut grad = vec![0.0; model.params.len()];
    let mut milestones = config.milestones.clone();
    milestones.sort_unstable();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let lr = milestone_lr(config.learning_rate, config.decay, &milestones, epoch);

        let mut epoch_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut idx: Vec<usize> = batch.to_vec();
            idx.sort_unstable();
            let loss = batch_gradient(&model, dataset, &idx, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    stage: "classifier training",
                    epoch,
                    detail: format!("batch loss is {loss}"),
                });
            }
            epoch_sum += loss * idx.len() as f64;
            adam.step(&mut model.params, &grad, lr);
        }
        epoch_losses.push(epoch_sum / n as f64);
    }

    Ok(TrainedClassifier { model, epoch_losses })
}
