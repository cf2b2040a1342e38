//! Synthetic multi-label data with controlled label noise.
//!
//! Geometry: class embeddings W (c x z, unit rows) are drawn once; a fixed
//! mixing matrix B (d x z) lifts embedding space into feature space. Each
//! sample picks 1..=max_positives classes, and its feature vector is
//! B * mean(positive embedding rows) plus isotropic gaussian noise. Features
//! therefore carry exactly the label information the attribute model is
//! supposed to recover, with known ground truth for every corrupted sample.

use rand::Rng;

use crate::data::{Dataset, EmbeddingMatrix, LabelKind, LabelMatrix};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::{next_gaussian, stream_rng, Stream};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    pub c: usize,
    /// Embedding dimension.
    pub z: usize,
    /// Feature dimension.
    pub d: usize,
    /// Positive labels per sample are uniform in 1..=max_positives.
    pub max_positives: usize,
    /// Fraction of samples whose labels get corrupted.
    pub noise_rate: f64,
    /// Per-label flip probability inside a corrupted sample.
    pub flip_prob: f64,
    /// Standard deviation of additive feature noise.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2000,
            c: 13,
            z: 32,
            d: 64,
            max_positives: 5,
            noise_rate: 0.3,
            flip_prob: 0.3,
            feature_noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.c < 2 {
            return Err(Error::InvalidConfig(format!("c {} must be at least 2", self.c)));
        }
        if self.z < 2 {
            return Err(Error::InvalidConfig(format!("z {} must be at least 2", self.z)));
        }
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be at least 1".into()));
        }
        if self.max_positives == 0 || self.max_positives >= self.c {
            return Err(Error::InvalidConfig(format!(
                "max_positives {} must lie in 1..{}",
                self.max_positives, self.c
            )));
        }
        if !self.noise_rate.is_finite() || !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidConfig(format!(
                "noise_rate {} must lie in [0, 1]",
                self.noise_rate
            )));
        }
        if !self.flip_prob.is_finite() || self.flip_prob <= 0.0 || self.flip_prob > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "flip_prob {} must lie in (0, 1]",
                self.flip_prob
            )));
        }
        if !self.feature_noise.is_finite() || self.feature_noise < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "feature_noise {} must be finite and >= 0",
                self.feature_noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub clean: Dataset,
    /// Same features as `clean`, corrupted labels.
    pub noisy: Dataset,
    pub embeddings: EmbeddingMatrix,
    /// Exactly the samples whose labels differ between clean and noisy.
    pub corrupted: Vec<usize>,
}

/// Gaussian rows, L2-normalized by the embedding constructor.
pub fn gen_embeddings(c: usize, z: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if z < 2 {
        return Err(Error::InvalidConfig(format!("z {z} must be at least 2")));
    }
    let mut rng = stream_rng(seed, Stream::ClassEmbeddings);
    let mut rows = Matrix::zeros(c, z);
    for v in rows.data_mut() {
        *v = next_gaussian(&mut rng);
    }
    EmbeddingMatrix::new(rows)
}

/// Largest pairwise |cosine| between class embeddings; a separation
/// diagnostic the CLI prints after generation.
pub fn max_abs_cosine(w: &EmbeddingMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..w.n_classes() {
        for j in i + 1..w.n_classes() {
            worst = worst.max(dot(w.row(i), w.row(j)).abs());
        }
    }
    worst
}

fn class_names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("class_{i}")).collect()
}

fn mixing_matrix(d: usize, z: usize, seed: u64) -> Matrix {
    // 1/sqrt(z) keeps feature coordinates on the scale of the embedding
    // coordinates, so `feature_noise` is a meaningful fraction of signal.
    let scale = 1.0 / (z as f64).sqrt();
    let mut rng = stream_rng(seed, Stream::Mixing);
    let mut b = Matrix::zeros(d, z);
    for v in b.data_mut() {
        *v = scale * next_gaussian(&mut rng);
    }
    b
}

fn gen_clean_split(
    config: &SynthConfig,
    w: &EmbeddingMatrix,
    n: usize,
    label_stream: Stream,
    noise_stream: Stream,
) -> Result<Dataset> {
    let mut label_rng = stream_rng(config.seed, label_stream);
    let mut labels = Matrix::zeros(n, config.c);
    for i in 0..n {
        let k = label_rng.random_range(1..=config.max_positives);
        for class in rand::seq::index::sample(&mut label_rng, config.c, k) {
            labels.set(i, class, 1.0);
        }
    }

    let b = mixing_matrix(config.d, config.z, config.seed);
    let mut noise_rng = stream_rng(config.seed, noise_stream);
    let mut features = Matrix::zeros(n, config.d);
    let mut mean_embed = vec![0.0; config.z];
    for i in 0..n {
        mean_embed.fill(0.0);
        let mut count = 0.0;
        for class in 0..config.c {
            if labels.get(i, class) == 1.0 {
                for (m, &e) in mean_embed.iter_mut().zip(w.row(class)) {
                    *m += e;
                }
                count += 1.0;
            }
        }
        for m in &mut mean_embed {
            *m /= count;
        }
        let row = features.row_mut(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = dot(b.row(j), &mean_embed)
                + config.feature_noise * next_gaussian(&mut noise_rng);
        }
    }

    Dataset::new(features, LabelMatrix::binary(labels)?, class_names(config.c))
}

/// Clean dataset for the training split.
pub fn gen_clean(config: &SynthConfig, w: &EmbeddingMatrix) -> Result<Dataset> {
    config.validate()?;
    gen_clean_split(config, w, config.n, Stream::CleanLabels, Stream::FeatureNoise)
}

/// Corrupts a fraction `noise_rate` of samples: inside a selected sample
/// every label bit flips independently with `flip_prob`, redrawing until at
/// least one bit actually flips so the returned index list is exact.
pub fn inject_noise(
    labels: &LabelMatrix,
    noise_rate: f64,
    flip_prob: f64,
    seed: u64,
) -> Result<(LabelMatrix, Vec<usize>)> {
    if labels.kind() != LabelKind::Binary {
        return Err(Error::NotBinary("noise injection needs 0/1 labels".into()));
    }
    if !(0.0..=1.0).contains(&noise_rate) || !noise_rate.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise_rate {noise_rate} must lie in [0, 1]"
        )));
    }
    if flip_prob <= 0.0 || flip_prob > 1.0 || !flip_prob.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "flip_prob {flip_prob} must lie in (0, 1]"
        )));
    }

    let mut rng = stream_rng(seed, Stream::LabelNoise);
    let mut values = labels.values().clone();
    let mut corrupted = Vec::new();
    let c = labels.n_classes();
    let mut mask = vec![false; c];
    for i in 0..labels.n_samples() {
        if rng.random::<f64>() >= noise_rate {
            continue;
        }
        loop {
            let mut any = false;
            for m in mask.iter_mut() {
                *m = rng.random::<f64>() < flip_prob;
                any |= *m;
            }
            if any {
                break;
            }
        }
        let row = values.row_mut(i);
        for (slot, &flip) in row.iter_mut().zip(&mask) {
            if flip {
                *slot = 1.0 - *slot;
            }
        }
        corrupted.push(i);
    }
    Ok((LabelMatrix::binary(values)?, corrupted))
}

/// Full generator: embeddings, clean dataset, corrupted copy.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let embeddings = gen_embeddings(config.c, config.z, config.seed)?;
    let clean = gen_clean(config, &embeddings)?;
    let (noisy_labels, corrupted) =
        inject_noise(&clean.labels, config.noise_rate, config.flip_prob, config.seed)?;
    let noisy = clean.with_labels(noisy_labels)?;
    Ok(SynthOutput { clean, noisy, embeddings, corrupted })
}

/// Held-out clean split sharing this config's embeddings and mixing matrix
/// but drawing samples from dedicated streams. Used for evaluation; never
/// corrupted.
pub fn generate_test_split(config: &SynthConfig, n_test: usize) -> Result<Dataset> {
    config.validate()?;
    if n_test == 0 {
        return Err(Error::InvalidConfig("test split size must be at least 1".into()));
    }
    let w = gen_embeddings(config.c, config.z, config.seed)?;
    gen_clean_split(config, &w, n_test, Stream::TestLabels, Stream::TestFeatureNoise)
}
