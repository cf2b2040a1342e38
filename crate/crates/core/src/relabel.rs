//! Relabeling of detected-noisy samples from their graph neighbours.
//!
//! Noisy samples get soft targets: a convex mix (weight lambda on the
//! original annotation) with the clamped sum of neighbour labels. Clean
//! samples pass through untouched. Neighbour labels are the original
//! annotations, noisy or not; there is no iterative refinement.

use crate::data::{Dataset, EmbeddingMatrix, LabelKind, LabelMatrix};
use crate::detect::{split_clean_noisy, CleanNoisySplit};
use crate::error::{Error, Result};
use crate::graph::AttributeGraph;
use crate::val::AttributeProjector;

#[derive(Debug, Clone)]
pub struct RelabelConfig {
    /// Weight of the original label in the mix; 1 keeps annotations as-is.
    pub lambda: f64,
    /// How many attribute nodes each neighbour query retrieves.
    pub k: usize,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig { lambda: 0.7, k: 50 }
    }
}

impl RelabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda {} must lie in [0, 1]",
                self.lambda
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Elementwise min(1, sum of neighbour label rows).
pub fn aggregate_neighbor_labels(neighbor_rows: &[&[f64]]) -> Result<Vec<f64>> {
    let first = neighbor_rows
        .first()
        .ok_or_else(|| Error::EmptyInput("neighbour set to aggregate".into()))?;
    let mut agg = vec![0.0; first.len()];
    for row in neighbor_rows {
        debug_assert_eq!(row.len(), agg.len());
        for (a, &v) in agg.iter_mut().zip(*row) {
            *a += v;
        }
    }
    for a in &mut agg {
        *a = a.min(1.0);
    }
    Ok(agg)
}

/// lambda * y + (1 - lambda) * aggregate, elementwise.
pub fn relabel_sample(y: &[f64], aggregate: &[f64], lambda: f64) -> Vec<f64> {
    debug_assert_eq!(y.len(), aggregate.len());
    y.iter()
        .zip(aggregate)
        .map(|(&yv, &av)| lambda * yv + (1.0 - lambda) * av)
        .collect()
}

/// Detects noisy samples, queries the attribute graph for each, and returns
/// the relabeled dataset (soft labels, original sample order) along with the
/// clean/noisy split.
pub fn relabel(
    dataset: &Dataset,
    model: &AttributeProjector,
    w: &EmbeddingMatrix,
    config: &RelabelConfig,
) -> Result<(Dataset, CleanNoisySplit)> {
    config.validate()?;
    let split = split_clean_noisy(dataset, model, w)?;

    let mut values = dataset.labels.values().clone();
    if !split.noisy.is_empty() {
        let graph = AttributeGraph::build(dataset, model)?;
        let neighbor_sets = graph.knn_for(&split.noisy, config.k)?;
        for (&i, neighbors) in split.noisy.iter().zip(&neighbor_sets) {
            let rows: Vec<&[f64]> = neighbors.iter().map(|&j| dataset.labels.row(j)).collect();
            let agg = aggregate_neighbor_labels(&rows)?;
            let mixed = relabel_sample(dataset.labels.row(i), &agg, config.lambda);
            values.row_mut(i).copy_from_slice(&mixed);
        }
    }
    let relabeled = dataset.with_labels(LabelMatrix::soft(values)?)?;
    Ok((relabeled, split))
}

/// Label-smoothing baseline: positives become 1 - epsilon, negatives become
/// epsilon. epsilon = 0 returns the input unchanged.
pub fn smooth_labels(labels: &LabelMatrix, epsilon: f64) -> Result<LabelMatrix> {
    if !epsilon.is_finite() || !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon {epsilon} must lie in [0, 0.5)"
        )));
    }
    if labels.kind() != LabelKind::Binary {
        return Err(Error::NotBinary("label smoothing needs 0/1 labels".into()));
    }
    if epsilon == 0.0 {
        return Ok(labels.clone());
    }
    let mut values = labels.values().clone();
    for v in values.data_mut() {
        *v = if *v == 1.0 { 1.0 - epsilon } else { epsilon };
    }
    LabelMatrix::soft(values)
}
