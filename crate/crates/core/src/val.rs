//! Virtual attribute learning.
//!
//! Each sample's feature vector is mapped by M affine heads into the class
//! embedding space, giving M candidate attribute vectors per image. A class
//! scores as the best dot product any head achieves against its embedding,
//! and training pushes annotated-positive classes to outscore negatives via
//! a pairwise softplus ranking loss, plus a variance penalty that stops
//! heads from collapsing onto a single embedding direction.

use rand::Rng;

use crate::data::{Dataset, EmbeddingMatrix, LabelKind};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::num::{sigmoid, softplus};
use crate::optim::{cosine_lr, Adam, LrSchedule};
use crate::rng::{stream_rng, Stream};

/// M affine heads. Parameters are one flat vector, per head the weight
/// matrix A (z x d, row-major) followed by the bias b (z values). The flat
/// layout is what the optimizer updates and what checkpoints store.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeProjector {
    heads: usize,
    d: usize,
    z: usize,
    params: Vec<f64>,
}

impl AttributeProjector {
    /// Weights drawn uniformly from [-1/sqrt(d), 1/sqrt(d)], biases zero.
    pub fn init(heads: usize, d: usize, z: usize, seed: u64) -> Result<Self> {
        Self::check_shape(heads, d, z)?;
        let mut rng = stream_rng(seed, Stream::ValInit);
        let bound = 1.0 / (d as f64).sqrt();
        let stride = z * d + z;
        let mut params = vec![0.0; heads * stride];
        for m in 0..heads {
            for w in &mut params[m * stride..m * stride + z * d] {
                *w = rng.random_range(-bound..=bound);
            }
            // biases stay zero
        }
        Ok(AttributeProjector { heads, d, z, params })
    }

    pub fn from_params(heads: usize, d: usize, z: usize, params: Vec<f64>) -> Result<Self> {
        Self::check_shape(heads, d, z)?;
        let expected = heads * (z * d + z);
        if params.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "attribute model needs {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("attribute model parameters".into()));
        }
        Ok(AttributeProjector { heads, d, z, params })
    }

    fn check_shape(heads: usize, d: usize, z: usize) -> Result<()> {
        if heads == 0 || d == 0 || z == 0 {
            return Err(Error::InvalidConfig(format!(
                "attribute model shape m={heads}, d={d}, z={z} must be positive"
            )));
        }
        Ok(())
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn embed_dim(&self) -> usize {
        self.z
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn stride(&self) -> usize {
        self.z * self.d + self.z
    }

    fn weight_row(&self, head: usize, zi: usize) -> &[f64] {
        let base = head * self.stride() + zi * self.d;
        &self.params[base..base + self.d]
    }

    fn bias(&self, head: usize, zi: usize) -> f64 {
        self.params[head * self.stride() + self.z * self.d + zi]
    }

    /// Maps one feature vector to the m x z attribute matrix.
    pub fn project(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} dims, model expects {}",
                x.len(),
                self.d
            )));
        }
        let mut out = Matrix::zeros(self.heads, self.z);
        for m in 0..self.heads {
            for zi in 0..self.z {
                out.set(m, zi, dot(self.weight_row(m, zi), x) + self.bias(m, zi));
            }
        }
        Ok(out)
    }

    /// Per-class scores for one sample: best dot product over heads, plus
    /// which head won (lowest index on exact ties).
    pub fn scores(&self, x: &[f64], w: &EmbeddingMatrix) -> Result<(Vec<f64>, Vec<usize>)> {
        let v = self.project(x)?;
        class_scores(&v, w)
    }
}

/// Max-over-heads dot product per class. Ties go to the lower head index,
/// which is also where the gradient is routed.
pub fn class_scores(attrs: &Matrix, w: &EmbeddingMatrix) -> Result<(Vec<f64>, Vec<usize>)> {
    if attrs.cols() != w.dim() {
        return Err(Error::DimensionMismatch(format!(
            "attribute dim {} vs embedding dim {}",
            attrs.cols(),
            w.dim()
        )));
    }
    let c = w.n_classes();
    let mut scores = vec![0.0; c];
    let mut heads = vec![0usize; c];
    for ci in 0..c {
        let wrow = w.row(ci);
        let mut best = f64::NEG_INFINITY;
        let mut best_m = 0;
        for m in 0..attrs.rows() {
            let s = dot(attrs.row(m), wrow);
            if s > best {
                best = s;
                best_m = m;
            }
        }
        scores[ci] = best;
        heads[ci] = best_m;
    }
    Ok((scores, heads))
}

/// 1 / (P * Q) for P positives and Q negatives; zero when either side is
/// empty, which drops the sample from the ranking objective.
pub fn rank_weight(y: &[f64]) -> f64 {
    let p = y.iter().filter(|&&v| v == 1.0).count();
    let q = y.len() - p;
    if p == 0 || q == 0 {
        0.0
    } else {
        1.0 / (p as f64 * q as f64)
    }
}

/// Weighted ranking loss for one sample: omega * sum over (positive,
/// negative) pairs of softplus(s_neg - s_pos). Pairs are accumulated with
/// positives ascending in the outer loop and negatives ascending inside.
pub fn val_loss(attrs: &Matrix, w: &EmbeddingMatrix, y: &[f64]) -> Result<f64> {
    if y.len() != w.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "label row has {} classes, embeddings have {}",
            y.len(),
            w.n_classes()
        )));
    }
    let (scores, _) = class_scores(attrs, w)?;
    let omega = rank_weight(y);
    if omega == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (p, &yp) in y.iter().enumerate() {
        if yp != 1.0 {
            continue;
        }
        for (n, &yn) in y.iter().enumerate() {
            if yn == 1.0 {
                continue;
            }
            acc += softplus(scores[n] - scores[p]);
        }
    }
    Ok(omega * acc)
}

/// Sum over heads of the sample variance (n-1 denominator) of the attribute
/// values. Zero when z < 2.
pub fn reg_loss(attrs: &Matrix) -> f64 {
    let z = attrs.cols();
    if z < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for m in 0..attrs.rows() {
        let row = attrs.row(m);
        let mean = row.iter().sum::<f64>() / z as f64;
        let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
        acc += ss / (z - 1) as f64;
    }
    acc
}

/// Ranking loss plus beta times the variance penalty, for one sample.
pub fn sample_objective(
    model: &AttributeProjector,
    x: &[f64],
    y: &[f64],
    w: &EmbeddingMatrix,
    beta: f64,
) -> Result<f64> {
    let attrs = model.project(x)?;
    Ok(val_loss(&attrs, w, y)? + beta * reg_loss(&attrs))
}

/// Mean sample objective over `indices` (visited in the order given).
pub fn batch_objective(
    model: &AttributeProjector,
    dataset: &Dataset,
    w: &EmbeddingMatrix,
    beta: f64,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("objective over an empty batch".into()));
    }
    let mut acc = 0.0;
    for &i in indices {
        acc += sample_objective(model, dataset.features.row(i), dataset.labels.row(i), w, beta)?;
    }
    Ok(acc / indices.len() as f64)
}

/// Mean objective and its gradient with respect to the flat parameters.
///
/// Derivation per sample: with scores s_c = <v_{m(c)}, w_c> where m(c) is the
/// winning head, each pair (p, n) contributes sigmoid(s_n - s_p) to ds_n and
/// minus that to ds_p. The score gradient flows only into the winning head's
/// attribute row (ties already resolved to the lowest head), and the variance
/// penalty adds 2 * beta * (v - mean(v)) / (z - 1) elementwise. Chain rule
/// through v = A x + b gives rank-one updates coef * x per row of A.
pub fn batch_gradient(
    model: &AttributeProjector,
    dataset: &Dataset,
    w: &EmbeddingMatrix,
    beta: f64,
    indices: &[usize],
    grad: &mut [f64],
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("gradient over an empty batch".into()));
    }
    if grad.len() != model.params.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient buffer has {} slots, model has {} parameters",
            grad.len(),
            model.params.len()
        )));
    }
    grad.fill(0.0);
    let heads = model.heads;
    let z = model.z;
    let d = model.d;
    let stride = model.stride();
    let c = w.n_classes();

    let mut obj = 0.0;
    let mut score_grad = vec![0.0; c];
    let mut attr_grad = Matrix::zeros(heads, z);

    for &i in indices {
        let x = dataset.features.row(i);
        let y = dataset.labels.row(i);
        let attrs = model.project(x)?;
        let (scores, win) = class_scores(&attrs, w)?;

        let omega = rank_weight(y);
        score_grad.fill(0.0);
        let mut rank = 0.0;
        if omega != 0.0 {
            for (p, &yp) in y.iter().enumerate() {
                if yp != 1.0 {
                    continue;
                }
                for (n, &yn) in y.iter().enumerate() {
                    if yn == 1.0 {
                        continue;
                    }
                    let diff = scores[n] - scores[p];
                    rank += softplus(diff);
                    let t = sigmoid(diff);
                    score_grad[n] += t;
                    score_grad[p] -= t;
                }
            }
        }
        obj += omega * rank + beta * reg_loss(&attrs);

        // Route class-score gradients to winning heads.
        attr_grad.data_mut().fill(0.0);
        if omega != 0.0 {
            for ci in 0..c {
                let g = omega * score_grad[ci];
                if g == 0.0 {
                    continue;
                }
                let row = attr_grad.row_mut(win[ci]);
                let wrow = w.row(ci);
                for zi in 0..z {
                    row[zi] += g * wrow[zi];
                }
            }
        }
        if beta != 0.0 && z >= 2 {
            let denom = (z - 1) as f64;
            for m in 0..heads {
                let vrow = attrs.row(m);
                let mean = vrow.iter().sum::<f64>() / z as f64;
                let grow = attr_grad.row_mut(m);
                for zi in 0..z {
                    grow[zi] += beta * 2.0 * (vrow[zi] - mean) / denom;
                }
            }
        }

        // v = A x + b, so dA[zi] = coef * x and db[zi] = coef.
        for m in 0..heads {
            let grow = attr_grad.row(m);
            let a_base = m * stride;
            let b_base = m * stride + z * d;
            for zi in 0..z {
                let coef = grow[zi];
                if coef == 0.0 {
                    continue;
                }
                let ga = &mut grad[a_base + zi * d..a_base + (zi + 1) * d];
                for (g, &xv) in ga.iter_mut().zip(x) {
                    *g += coef * xv;
                }
                grad[b_base + zi] += coef;
            }
        }
    }

    let scale = 1.0 / indices.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    Ok(obj * scale)
}

#[derive(Debug, Clone)]
pub struct ValConfig {
    /// Number of attribute heads (m).
    pub attributes: usize,
    /// Weight of the variance penalty.
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for ValConfig {
    fn default() -> Self {
        ValConfig {
            attributes: 3,
            beta: 0.01,
            learning_rate: 1e-4,
            epochs: 30,
            batch_size: 16,
            schedule: LrSchedule::Cosine,
            seed: 0,
        }
    }
}

impl ValConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attributes == 0 {
            return Err(Error::InvalidConfig("attributes must be at least 1".into()));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidConfig(format!("beta {} must be finite and >= 0", self.beta)));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be finite and > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedVal {
    pub model: AttributeProjector,
    /// Mean objective per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
}

/// Trains the attribute heads with Adam. Batch order reshuffles every epoch
/// from a dedicated RNG stream; within a batch, samples are reduced in
/// ascending dataset index so results do not depend on shuffle internals.
pub fn train(dataset: &Dataset, w: &EmbeddingMatrix, config: &ValConfig) -> Result<TrainedVal> {
    config.validate()?;
    if dataset.labels.kind() != LabelKind::Binary {
        return Err(Error::NotBinary("attribute training needs annotated 0/1 labels".into()));
    }
    if w.n_classes() != dataset.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows vs {} classes",
            w.n_classes(),
            dataset.n_classes()
        )));
    }

    let mut model = AttributeProjector::init(
        config.attributes,
        dataset.feature_dim(),
        w.dim(),
        config.seed,
    )?;
    let n = dataset.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = stream_rng(config.seed, Stream::ValShuffle);
    let mut adam = Adam::new(model.params.len());
    let mut grad = vec![0.0; model.params.len()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let lr = match config.schedule {
            LrSchedule::Constant => config.learning_rate,
            LrSchedule::Cosine => cosine_lr(config.learning_rate, epoch, config.epochs),
        };

        let mut epoch_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut idx: Vec<usize> = batch.to_vec();
            idx.sort_unstable();
            let obj = batch_gradient(&model, dataset, w, config.beta, &idx, &mut grad)?;
            if !obj.is_finite() {
                return Err(Error::Divergence {
                    stage: "attribute training",
                    epoch,
                    detail: format!("batch objective is {obj}"),
                });
            }
            epoch_sum += obj * idx.len() as f64;
            adam.step(&mut model.params, &grad, lr);
        }
        epoch_losses.push(epoch_sum / n as f64);
    }

    Ok(TrainedVal { model, epoch_losses })
}
