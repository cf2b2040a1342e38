//! Clean/noisy sample detection.
//!
//! A sample is "clean" when the attribute model, asked to rank all classes
//! for it, puts exactly the annotated positives in the top |positives|
//! slots. Anything else means the annotation disagrees with what the
//! learned attributes see, so the sample goes to the noisy pile for
//! relabeling.

use rayon::prelude::*;

use crate::data::{Dataset, EmbeddingMatrix, LabelKind};
use crate::error::{Error, Result};
use crate::val::AttributeProjector;

/// Class indices ordered by score, highest first. Equal scores order by
/// class index, so the ranking is a deterministic permutation.
pub fn rank_labels(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// True when the top-P ranked classes are exactly the annotated positives
/// (P being the number of positives). Samples with no positives count as
/// clean: there is no annotation to contradict.
pub fn is_clean(scores: &[f64], y: &[f64]) -> bool {
    let positives: Vec<usize> = y
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 1.0)
        .map(|(c, _)| c)
        .collect();
    if positives.is_empty() {
        return true;
    }
    let ranking = rank_labels(scores);
    let mut top: Vec<usize> = ranking[..positives.len()].to_vec();
    top.sort_unstable();
    top == positives
}

/// Sample indices split by the detector. Both lists are ascending and
/// together cover every sample exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanNoisySplit {
    pub clean: Vec<usize>,
    pub noisy: Vec<usize>,
}

impl CleanNoisySplit {
    pub fn is_noisy(&self, sample: usize) -> bool {
        self.noisy.binary_search(&sample).is_ok()
    }
}

/// Runs the detector over the whole dataset and also returns each sample's
/// full class ranking (needed by the CLI report).
pub fn split_with_rankings(
    dataset: &Dataset,
    model: &AttributeProjector,
    w: &EmbeddingMatrix,
) -> Result<(CleanNoisySplit, Vec<Vec<usize>>)> {
    if dataset.labels.kind() != LabelKind::Binary {
        return Err(Error::NotBinary("detection needs annotated 0/1 labels".into()));
    }
    if w.n_classes() != dataset.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows vs {} classes",
            w.n_classes(),
            dataset.n_classes()
        )));
    }

    let per_sample: Vec<(bool, Vec<usize>)> = (0..dataset.n_samples())
        .into_par_iter()
        .map(|i| {
            let (scores, _) = model.scores(dataset.features.row(i), w)?;
            let clean = is_clean(&scores, dataset.labels.row(i));
            Ok((clean, rank_labels(&scores)))
        })
        .collect::<Result<_>>()?;

    let mut split = CleanNoisySplit { clean: Vec::new(), noisy: Vec::new() };
    let mut rankings = Vec::with_capacity(per_sample.len());
    for (i, (clean, ranking)) in per_sample.into_iter().enumerate() {
        if clean {
            split.clean.push(i);
        } else {
            split.noisy.push(i);
        }
        rankings.push(ranking);
    }
    Ok((split, rankings))
}

pub fn split_clean_noisy(
    dataset: &Dataset,
    model: &AttributeProjector,
    w: &EmbeddingMatrix,
) -> Result<CleanNoisySplit> {
    split_with_rankings(dataset, model, w).map(|(split, _)| split)
}
